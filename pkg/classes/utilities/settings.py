# Settings for the optomechanics toolkit
# The bundled settings.json holds the defaults and doubles as the schema for user configs:
# a user file is merged over it, unknown keys are rejected and missing keys keep their default.
# Frequencies in settings are cyclic (Hz); the builders below convert them to rad/s once.

# Libraries
import copy
import json
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

# Local imports
from classes.optomechanics.core import DriveState, OptomechSystem
from classes.optomechanics.errors import SettingsError
from classes.optomechanics.fit import FitConfig, NoiseModel, is_frequency_parameter
from classes.optomechanics.response import default_grid
from classes.utilities.utilities import Utilities

BUNDLED_SETTINGS = Path(__file__).with_name("settings.json")


def read_json(path: Union[str, Path]) -> dict:
    """Reads a JSON object, reporting syntax errors with their line and column"""
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as error:
        raise SettingsError(f"cannot read config: {error.strerror}") from error
    try:
        data = json.loads(text)
    except json.JSONDecodeError as error:
        raise SettingsError(f"invalid JSON: {error.msg} at column {error.colno}", line=error.lineno) from error
    if not isinstance(data, dict):
        raise SettingsError("config must be a JSON object")
    return data


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_type(default, value, key: str) -> None:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SettingsError("expected true or false", key=key)
    elif _is_number(default):
        if not _is_number(value):
            raise SettingsError("expected a number", key=key)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise SettingsError("expected a string", key=key)
    elif default is None:
        if value is not None and not _is_number(value):
            raise SettingsError("expected a number or null", key=key)


def merge_settings(defaults: dict, overrides: dict, prefix: str = "") -> dict:
    """Recursively merges overrides into a copy of defaults; keys unknown to defaults raise SettingsError"""
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise SettingsError("unknown key", key=path)
        default = defaults[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise SettingsError("expected an object", key=path)
            # an empty default object is a free-form mapping
            merged[key] = copy.deepcopy(value) if not default else merge_settings(default, value, f"{path}.")
        elif isinstance(default, list):
            if not isinstance(value, list):
                raise SettingsError("expected a list", key=path)
            if default and isinstance(default[0], dict):
                template = default[0]
                items = []
                for i, item in enumerate(value):
                    if not isinstance(item, dict):
                        raise SettingsError("expected an object", key=f"{path}[{i}]")
                    missing = set(template) - set(item)
                    if missing:
                        raise SettingsError(f"missing keys {sorted(missing)}", key=f"{path}[{i}]")
                    items.append(merge_settings(template, item, f"{path}[{i}]."))
                merged[key] = items
            else:
                merged[key] = copy.deepcopy(value)
        else:
            _check_type(default, value, path)
            merged[key] = value
    return merged


def load_settings(path: Optional[Union[str, Path]] = None) -> dict:
    """Bundled defaults, optionally overridden by the config file at path"""
    defaults = read_json(BUNDLED_SETTINGS)
    if path is None:
        return defaults
    return merge_settings(defaults, read_json(path))


def build_system(settings: dict) -> OptomechSystem:
    system = settings["system"]
    cavity = system["cavity"]
    if len(system["modes"]) == 0:
        raise SettingsError("at least one mechanical mode is required", key="system.modes")
    return OptomechSystem.from_hz(
        cavity=(cavity["frequency_hz"], cavity["port1_coupling_hz"], cavity["port2_coupling_hz"],
                cavity["internal_loss_hz"]),
        modes=[(mode["frequency_hz"], mode["linewidth_hz"], mode["coupling_hz"]) for mode in system["modes"]],
        thermal_occupancy=system["thermal_occupancy"],
        kerr_per_photon_hz=system["kerr_per_photon_hz"],
        kinetic_shift_per_photon_hz=system["kinetic_shift_per_photon_hz"],
        uncertainties=system["uncertainties"])


def build_drive(settings: dict, system: OptomechSystem) -> DriveState:
    """Red-sideband drive when tracking, otherwise a fixed drive frequency (default: bare cavity minus Omega_1)"""
    drive = settings["drive"]
    photon_number = drive["photon_number"]
    if drive["track_detuning"]:
        if drive["drive_frequency_hz"] is not None:
            raise SettingsError("drive_frequency_hz cannot be combined with track_detuning",
                                key="drive.drive_frequency_hz")
        return DriveState.red_sideband(system, photon_number)
    if drive["drive_frequency_hz"] is None:
        drive_frequency = system.cavity.resonance_frequency - system.fundamental.resonance_frequency
    else:
        drive_frequency = Utilities.hz_to_rad(drive["drive_frequency_hz"])
    return DriveState.from_system(system, photon_number, drive_frequency)


def build_grid(settings: dict, system: OptomechSystem, drive: DriveState) -> np.ndarray:
    """Absolute grid in rad/s. Frames: auto, absolute (start/stop in Hz) and drive (start/stop relative to the drive)"""
    grid = settings["grid"]
    frame = grid["frame"]
    points = grid["points"]
    if not isinstance(points, int) or points < 1:
        raise SettingsError("points must be a positive integer", key="grid.points")
    if frame == "auto":
        return default_grid(system, drive, points)
    if frame not in ("absolute", "drive"):
        raise SettingsError("frame must be auto, absolute or drive", key="grid.frame")
    if grid["start_hz"] is None or grid["stop_hz"] is None:
        raise SettingsError(f"start_hz and stop_hz are required for the {frame} frame", key="grid")
    start = Utilities.hz_to_rad(grid["start_hz"])
    stop = Utilities.hz_to_rad(grid["stop_hz"])
    if frame == "drive":
        start, stop = drive.drive_frequency + start, drive.drive_frequency + stop
    if not stop > start:
        raise SettingsError("stop_hz must exceed start_hz", key="grid.stop_hz")
    return np.linspace(start, stop, points)


def build_noise(settings: dict, scale: float = 1.0) -> NoiseModel:
    """Noise model; with relative_sigma the configured sigma is a fraction of scale (typically max |T|)"""
    noise = settings["noise"]
    sigma = noise["sigma"] * scale if noise["relative_sigma"] else noise["sigma"]
    seed = noise["seed"]
    if not isinstance(seed, int):
        raise SettingsError("seed must be an integer", key="noise.seed")
    return NoiseModel(sigma=float(sigma), seed=seed)


def _to_rad(name: str, value: float) -> float:
    return Utilities.hz_to_rad(value) if is_frequency_parameter(name) else float(value)


def build_fit_config(settings: dict) -> FitConfig:
    fit = settings["fit"]
    bounds = {}
    for name, pair in fit["bounds"].items():
        if not isinstance(pair, list) or len(pair) != 2 or not all(_is_number(v) for v in pair):
            raise SettingsError("bounds must be [low, high] pairs", key=f"fit.bounds.{name}")
        bounds[name] = (_to_rad(name, pair[0]), _to_rad(name, pair[1]))
    initial = {}
    for name, value in fit["initial"].items():
        if not _is_number(value) or not math.isfinite(value):
            raise SettingsError("initial values must be numbers", key=f"fit.initial.{name}")
        initial[name] = _to_rad(name, value)
    if not isinstance(fit["max_iterations"], int):
        raise SettingsError("expected an integer", key="fit.max_iterations")
    if not all(_is_number(w) for w in fit["weights"]):
        raise SettingsError("weights must be numbers", key="fit.weights")
    return FitConfig(vary=tuple(fit["vary"]),
                     bounds=bounds,
                     initial=initial,
                     max_iterations=fit["max_iterations"],
                     gradient_tolerance=fit["gradient_tolerance"],
                     step_tolerance=fit["step_tolerance"],
                     cost_tolerance=fit["cost_tolerance"],
                     relative_step=fit["relative_step"],
                     magnitude_only=fit["magnitude_only"],
                     background=fit["background"],
                     restart=fit["restart"],
                     acceptance_tolerance=fit["acceptance_tolerance"],
                     weights=tuple(float(w) for w in fit["weights"]) or None,
                     vary_weights=fit["vary_weights"],
                     detect_modes=fit["detect_modes"])
