# Unit conversion and file helpers shared by the optomechanics toolkit

# Libraries
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np


class Utilities:

    @staticmethod
    def hz_to_rad(hz):
        # hz: cyclic frequency in Hz (float or array)
        # returns: angular frequency in rad/s
        return 2 * np.pi * np.asarray(hz, dtype=float) if np.ndim(hz) else 2 * math.pi * float(hz)

    @staticmethod
    def rad_to_hz(rad):
        # rad: angular frequency in rad/s (float or array)
        # returns: cyclic frequency in Hz
        return np.asarray(rad, dtype=float) / (2 * np.pi) if np.ndim(rad) else float(rad) / (2 * math.pi)

    @staticmethod
    def is_real_number(value) -> bool:
        """True for finite ints and floats, numpy scalars included, bools excluded"""
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            return False
        return math.isfinite(float(value))

    @staticmethod
    def atomic_write_text(path: Union[str, Path], text: str) -> None:
        """Writes text to a temporary file next to path and renames it into place"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", newline="") as f:
                f.write(text)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.remove(tmp_name)
            raise

    @staticmethod
    def json_safe(value):
        """Replaces NaN and infinities by None so records stay strict JSON"""
        if isinstance(value, dict):
            return {k: Utilities.json_safe(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [Utilities.json_safe(v) for v in value]
        if isinstance(value, (np.bool_, bool)):
            return bool(value)
        if isinstance(value, (np.integer,)):
            return int(value)
        if isinstance(value, (float, np.floating)):
            return float(value) if math.isfinite(value) else None
        return value

    @staticmethod
    def dump_record(record: dict) -> str:
        """Serializes a record with sorted keys so identical inputs give identical bytes"""
        return json.dumps(Utilities.json_safe(record), indent=2, sort_keys=True, allow_nan=False) + "\n"
