import json
import math
from pathlib import Path

import numpy as np
import pytest

from classes.optomechanics.core import Cavity, DriveState, MechMode, OptomechSystem
from classes.optomechanics.fit import NoiseModel, synthesize
from classes.optomechanics.response import default_grid, trace

TWO_PI = 2 * math.pi
REPO_ROOT = Path(__file__).resolve().parents[1]

# Device values in Hz
F_CAVITY = 6.506e9
KAPPA_1 = 1.1e6
KAPPA_2 = 25e3
KAPPA_I = 75e3
KAPPA = KAPPA_1 + KAPPA_2 + KAPPA_I
F_MECH = 9.696e6
GAMMA = 31.0
G0 = 167.0
N_TH = 76.0
G_MAX = 3.83e6

# Higher modes used by the multimode fixtures: (frequency Hz, linewidth Hz, weight)
HIGHER_MODES = [(16.5e6, 40.0, 0.10), (19.8e6, 45.0, 0.05), (24.0e6, 50.0, 0.03), (28.5e6, 55.0, 0.02)]


def photon_number_for(g_hz: float) -> float:
    return (g_hz / G0) ** 2


def drive_at(system: OptomechSystem, g_hz: float) -> DriveState:
    """Red-sideband drive whose fundamental coupling is g_hz"""
    g0_hz = system.fundamental.single_photon_coupling / TWO_PI
    return DriveState.red_sideband(system, (g_hz / g0_hz) ** 2)


def make_device(**overrides) -> OptomechSystem:
    values = dict(f_cavity=F_CAVITY, kappa_1=KAPPA_1, kappa_2=KAPPA_2, kappa_i=KAPPA_I, f_mech=F_MECH,
                  gamma=GAMMA, g0=G0, n_th=N_TH, kinetic=0.0)
    values.update(overrides)
    return OptomechSystem.from_hz(
        cavity=(values["f_cavity"], values["kappa_1"], values["kappa_2"], values["kappa_i"]),
        modes=[(values["f_mech"], values["gamma"], values["g0"])],
        thermal_occupancy=values["n_th"],
        kinetic_shift_per_photon_hz=values["kinetic"])


def make_multimode(weights=None) -> OptomechSystem:
    """Device with four higher modes; weights default to HIGHER_MODES"""
    if weights is None:
        weights = [w for _, _, w in HIGHER_MODES]
    modes = [(F_MECH, GAMMA, G0)] + [(f, gamma, G0 * math.sqrt(w)) for (f, gamma, _), w in zip(HIGHER_MODES, weights)]
    return OptomechSystem.from_hz(cavity=(F_CAVITY, KAPPA_1, KAPPA_2, KAPPA_I), modes=modes, thermal_occupancy=N_TH)


def noisy_trace(system, drive, relative_sigma=0.0, seed=0, points=2001):
    grid = default_grid(system, drive, points)
    scale = float(np.max(np.abs(trace(system, drive, grid).values)))
    return synthesize(system, drive, grid, NoiseModel(sigma=relative_sigma * scale, seed=seed))


@pytest.fixture
def device() -> OptomechSystem:
    return make_device()


@pytest.fixture
def multimode() -> OptomechSystem:
    return make_multimode()


@pytest.fixture
def write_config(tmp_path):
    """Writes a config dict as JSON and returns its path"""
    def write(config: dict, name: str = "config.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(config))
        return str(path)
    return write
