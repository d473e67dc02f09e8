# TraceFile Class
# Text format for complex traces: '#'-prefixed header lines carrying the quantity tag and drive metadata,
# then comma separated columns frequency_hz, re, im written with repr so values read back bit for bit.

# Libraries
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd

# Local imports
from classes.optomechanics.errors import SettingsError
from classes.optomechanics.response import ComplexTrace
from classes.utilities.utilities import Utilities

COLUMNS = ["frequency_hz", "re", "im"]
# metadata kept in rad/s inside ComplexTrace and written in Hz
_FREQUENCY_METADATA = {"drive_frequency": "drive_frequency_hz"}


class TraceFile:

    @staticmethod
    def header(trace: ComplexTrace) -> Dict[str, object]:
        """Header entries in a fixed order: quantity first, remaining metadata sorted by key"""
        entries = {"quantity": trace.quantity}
        for key in sorted(trace.metadata):
            value = trace.metadata[key]
            if isinstance(value, np.generic):
                value = value.item()
            if key in _FREQUENCY_METADATA:
                entries[_FREQUENCY_METADATA[key]] = Utilities.rad_to_hz(value)
            else:
                entries[key] = value
        return entries

    @staticmethod
    def dumps(trace: ComplexTrace) -> str:
        lines = [f"# {key}: {value!r}" if not isinstance(value, str) else f"# {key}: {value}"
                 for key, value in TraceFile.header(trace).items()]
        lines.append(",".join(COLUMNS))
        frequencies_hz = Utilities.rad_to_hz(trace.frequencies)
        for frequency, value in zip(frequencies_hz, trace.values):
            lines.append(f"{float(frequency)!r},{float(value.real)!r},{float(value.imag)!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def write(path: Union[str, Path], trace: ComplexTrace) -> None:
        Utilities.atomic_write_text(path, TraceFile.dumps(trace))

    @staticmethod
    def _parse_value(text: str):
        text = text.strip()
        for cast in (int, float):
            try:
                return cast(text)
            except ValueError:
                continue
        return text

    @staticmethod
    def read(path: Union[str, Path]) -> ComplexTrace:
        """Reads a trace file; malformed or empty files raise SettingsError"""
        path = Path(path)
        metadata = {}
        try:
            with open(path, "r") as f:
                for line_number, line in enumerate(f, start=1):
                    if not line.startswith("#"):
                        break
                    key, separator, value = line[1:].partition(":")
                    if not separator:
                        raise SettingsError("header lines must read '# key: value'", line=line_number)
                    metadata[key.strip()] = TraceFile._parse_value(value)
            table = pd.read_csv(path, comment="#", float_precision="round_trip")
        except OSError as error:
            raise SettingsError(f"cannot read trace file {path}: {error.strerror}") from error
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as error:
            raise SettingsError(f"trace file {path} has no readable table: {error}") from error
        if list(table.columns) != COLUMNS:
            raise SettingsError(f"trace file columns must be {COLUMNS}, got {list(table.columns)}")
        if len(table) == 0:
            raise SettingsError(f"trace file {path} has no samples")
        quantity = metadata.pop("quantity", None)
        if quantity is None:
            raise SettingsError(f"trace file {path} lacks a quantity header")
        for key, header_key in _FREQUENCY_METADATA.items():
            if header_key in metadata:
                metadata[key] = Utilities.hz_to_rad(float(metadata.pop(header_key)))
        try:
            table = table.astype(float)
            return ComplexTrace(str(quantity),
                                Utilities.hz_to_rad(table["frequency_hz"].to_numpy()),
                                table["re"].to_numpy() + 1j * table["im"].to_numpy(),
                                metadata)
        except ValueError as error:
            raise SettingsError(f"trace file {path} is malformed: {error}") from error
