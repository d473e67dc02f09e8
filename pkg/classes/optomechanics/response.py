# Linear response of the driven optomechanical system
# Bare and effective susceptibilities, multimode aggregation, transmission and trace containers.
# Sign convention: time dependence exp(-i omega t), so lossy poles sit in the lower half plane.

# Libraries
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

# Local imports
from classes.optomechanics.core import Cavity, DriveState, MechMode, OptomechSystem

QUANTITIES = ("transmission", "cavity_susceptibility", "mech_susceptibility_normalized")


@dataclass(frozen=True)
class ComplexTrace:
    """
    Complex values sampled on a strictly increasing frequency grid.
    Transmission and cavity traces use absolute lab frequency; mechanical traces are drive-relative.
    metadata holds drive information (photon_number, drive_frequency) and generator details.
    """
    quantity: str
    frequencies: np.ndarray
    values: np.ndarray
    metadata: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.quantity not in QUANTITIES:
            raise ValueError(f"quantity must be one of {QUANTITIES}, got {self.quantity!r}")
        frequencies = np.array(self.frequencies, dtype=float)
        values = np.array(self.values, dtype=complex)
        if frequencies.ndim != 1 or values.ndim != 1:
            raise ValueError("frequencies and values must be one-dimensional")
        if frequencies.size == 0:
            raise ValueError("a trace needs at least one sample")
        if frequencies.size != values.size:
            raise ValueError(f"got {frequencies.size} frequencies but {values.size} values")
        if not np.all(np.isfinite(frequencies)):
            raise ValueError("frequencies must be finite")
        if np.any(np.diff(frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        frequencies.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "frequencies", frequencies)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self) -> int:
        return self.frequencies.size


def _cavity_offset_response(offset, kappa: float):
    """1 / (offset + i kappa / 2), with offset = omega - omega_c"""
    return 1 / (np.asarray(offset, dtype=float) + 0.5j * kappa)


def chi_cavity(omega, cavity: Cavity):
    """Bare cavity susceptibility 1 / (omega - omega_c + i kappa / 2)"""
    return _cavity_offset_response(np.asarray(omega, dtype=float) - cavity.resonance_frequency,
                                   cavity.total_linewidth)


def chi_mech(omega, mode: MechMode):
    """Bare mechanical susceptibility 2 Omega / (omega^2 - Omega^2 + i omega Gamma)"""
    omega = np.asarray(omega, dtype=float)
    big_omega = mode.resonance_frequency
    return 2 * big_omega / (omega ** 2 - big_omega ** 2 + 1j * omega * mode.intrinsic_linewidth)


def mode_weights(modes: Sequence[MechMode]) -> np.ndarray:
    """Coupling weights (g0_i / g0_1)^2 of every mode relative to the fundamental"""
    if len(modes) == 0:
        raise ValueError("at least one mechanical mode is required")
    g0_1 = modes[0].single_photon_coupling
    if g0_1 == 0:
        raise ValueError("the fundamental mode must have a nonzero single-photon coupling")
    return np.array([(mode.single_photon_coupling / g0_1) ** 2 for mode in modes])


def chi_mech_multimode(omega, modes: Sequence[MechMode]):
    """Sum of the mode susceptibilities weighted by (g0_i / g0_1)^2"""
    weights = mode_weights(modes)
    total = weights[0] * chi_mech(omega, modes[0])
    for weight, mode in zip(weights[1:], modes[1:]):
        total = total + weight * chi_mech(omega, mode)
    return total


def _drive_frame(omega, drive: DriveState):
    """Offset from the drive, nu = omega - omega_d"""
    return np.asarray(omega, dtype=float) - drive.drive_frequency


def chi_cavity_effective(omega, system: OptomechSystem, drive: DriveState):
    """
    Cavity susceptibility dressed by the mechanics, at absolute lab frequency omega:
    [chi_a^-1(omega) - g^2 / (chi_xN^-1(omega - omega_d) - g^2 chi_a*(2 omega_d - omega))]^-1
    with chi_a centered on the drive-shifted cavity frequency.
    """
    nu = _drive_frame(omega, drive)
    kappa = system.cavity.total_linewidth
    delta = drive.detuning
    g_squared = drive.coupling ** 2
    if g_squared == 0:
        return _cavity_offset_response(nu + delta, kappa)
    # chi_a*(2 omega_d - omega) = 1 / (delta - nu - i kappa / 2)
    conjugate_partner = 1 / (delta - nu - 0.5j * kappa)
    mechanical = 1 / chi_mech_multimode(nu, system.modes) - g_squared * conjugate_partner
    return 1 / (nu + delta + 0.5j * kappa - g_squared / mechanical)


def chi_mech_effective(nu, system: OptomechSystem, drive: DriveState):
    """
    Mechanical susceptibility dressed by the cavity, at frequency nu relative to the drive:
    [chi_xN^-1(nu) - g^2 chi_a(omega_d + nu) - g^2 chi_a*(omega_d - nu)]^-1
    """
    nu = np.asarray(nu, dtype=float)
    kappa = system.cavity.total_linewidth
    delta = drive.detuning
    g_squared = drive.coupling ** 2
    bare = chi_mech_multimode(nu, system.modes)
    if g_squared == 0:
        return bare
    upper = 1 / (delta + nu + 0.5j * kappa)
    lower = 1 / (delta - nu - 0.5j * kappa)
    return 1 / (1 / bare - g_squared * upper - g_squared * lower)


def normalized_mech_susceptibility(nu, system: OptomechSystem, drive: DriveState):
    """chi_m = Omega_1 chi_x,eff / 2; equals the quality factor on resonance at zero coupling"""
    return system.fundamental.resonance_frequency * chi_mech_effective(nu, system, drive) / 2


def transmission(omega, system: OptomechSystem, drive: DriveState):
    """Two-port transmission T = i sqrt(kappa_1 kappa_2) chi_a,eff(omega)"""
    cavity = system.cavity
    if cavity.port1_coupling <= 0 or cavity.port2_coupling <= 0:
        raise ValueError("transmission needs port1_coupling > 0 and port2_coupling > 0")
    return 1j * np.sqrt(cavity.port1_coupling * cavity.port2_coupling) * chi_cavity_effective(omega, system, drive)


def _drive_metadata(drive: DriveState) -> Dict[str, float]:
    return {"photon_number": drive.photon_number, "drive_frequency": drive.drive_frequency}


def trace(system: OptomechSystem, drive: DriveState, grid) -> ComplexTrace:
    """Transmission sampled on an absolute frequency grid"""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("frequency grid is empty")
    return ComplexTrace("transmission", grid, transmission(grid, system, drive), _drive_metadata(drive))


def mech_trace(system: OptomechSystem, drive: DriveState, grid) -> ComplexTrace:
    """Normalized mechanical susceptibility sampled on a drive-relative grid"""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("frequency grid is empty")
    return ComplexTrace("mech_susceptibility_normalized", grid,
                        normalized_mech_susceptibility(grid, system, drive), _drive_metadata(drive))


def reconstruct_chi_m(transmission_trace: ComplexTrace, system: OptomechSystem, drive: DriveState) -> ComplexTrace:
    """
    Infers the normalized mechanical susceptibility from a transmission trace:
    chi_m(omega - omega_d) = Omega / (2 g^2 chi_a(omega)) * (T(omega) / (i sqrt(kappa_1 kappa_2) chi_a(omega)) - 1)
    The output grid is drive-relative.
    """
    if transmission_trace.quantity != "transmission":
        raise ValueError(f"expected a transmission trace, got {transmission_trace.quantity!r}")
    g_squared = drive.coupling ** 2
    if g_squared == 0:
        raise ValueError("reconstruction needs a nonzero parametric coupling")
    cavity = system.cavity
    if cavity.port1_coupling <= 0 or cavity.port2_coupling <= 0:
        raise ValueError("reconstruction needs port1_coupling > 0 and port2_coupling > 0")
    nu = _drive_frame(transmission_trace.frequencies, drive)
    chi_a = _cavity_offset_response(nu + drive.detuning, cavity.total_linewidth)
    bare_transmission = 1j * np.sqrt(cavity.port1_coupling * cavity.port2_coupling) * chi_a
    omega_1 = system.fundamental.resonance_frequency
    values = omega_1 / (2 * g_squared * chi_a) * (transmission_trace.values / bare_transmission - 1)
    metadata = dict(transmission_trace.metadata)
    metadata.update(_drive_metadata(drive))
    return ComplexTrace("mech_susceptibility_normalized", nu, values, metadata)


def mode_coupling_matrix(nu: float, system: OptomechSystem, drive: DriveState) -> np.ndarray:
    """
    3x3 coupling matrix acting on (cavity at omega_d + nu, mechanics, conjugate cavity at omega_d - nu).
    Its inverse holds chi_a,eff(omega_d + nu) at [0, 0] and chi_x,eff(nu) at [1, 1].
    """
    nu = float(nu)
    kappa = system.cavity.total_linewidth
    delta = drive.detuning
    g = drive.coupling
    return np.array([
        [delta + nu + 0.5j * kappa, g, 0],
        [g, 1 / chi_mech_multimode(nu, system.modes), g],
        [0, -g, -(delta - nu - 0.5j * kappa)],
    ], dtype=complex)


def default_grid(system: OptomechSystem, drive: DriveState, points: int = 2001) -> np.ndarray:
    """
    Absolute grid covering the cavity response and its normal modes:
    a wide sweep over the hybridized band joined with a fine sweep around the mechanically induced feature.
    """
    if not isinstance(points, int) or points < 3:
        raise ValueError("points must be an int >= 3")
    kappa = system.cavity.total_linewidth
    g = drive.coupling
    center = drive.cavity_frequency
    half_span = 3 * kappa + 2 * g
    wide = np.linspace(center - half_span, center + half_span, points)
    feature_width = system.fundamental.intrinsic_linewidth + 4 * g ** 2 / kappa
    if feature_width >= kappa / 2:
        return wide
    fine_center = drive.drive_frequency + system.fundamental.resonance_frequency
    fine = np.linspace(fine_center - 5 * feature_width, fine_center + 5 * feature_width, points // 2 + 1)
    return np.unique(np.concatenate([wide, fine]))
