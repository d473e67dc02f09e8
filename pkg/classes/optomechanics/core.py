# Optomechanical system model
# Cavity, mechanical modes and the drive-dependent quantities of the linearized theory.
# All frequencies and rates are angular (rad/s); Hz only appears in the from_hz constructors.

# Libraries
from dataclasses import dataclass, field, replace
import math
from typing import Dict, Optional, Sequence, Tuple

from scipy import constants

# Local imports
from classes.utilities.utilities import Utilities


def _check_number(name: str, value, minimum: Optional[float] = None, strict: bool = False) -> float:
    """Validates that value is a finite real number, optionally bounded from below"""
    if not Utilities.is_real_number(value):
        raise ValueError(f"{name} must be a finite int or float, got {value!r}")
    value = float(value)
    if minimum is not None:
        if strict and value <= minimum:
            raise ValueError(f"{name} must be > {minimum}, got {value}")
        if not strict and value < minimum:
            raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


@dataclass(frozen=True)
class MechMode:
    """A mechanical mode: resonance frequency, intrinsic linewidth and single-photon coupling"""
    resonance_frequency: float
    intrinsic_linewidth: float
    single_photon_coupling: float

    def __post_init__(self) -> None:
        omega = _check_number("resonance_frequency", self.resonance_frequency, 0.0, strict=True)
        gamma = _check_number("intrinsic_linewidth", self.intrinsic_linewidth, 0.0, strict=True)
        g0 = _check_number("single_photon_coupling", self.single_photon_coupling, 0.0)
        if gamma >= omega:
            raise ValueError(f"intrinsic_linewidth ({gamma}) must be smaller than resonance_frequency ({omega})")
        object.__setattr__(self, "resonance_frequency", omega)
        object.__setattr__(self, "intrinsic_linewidth", gamma)
        object.__setattr__(self, "single_photon_coupling", g0)

    @classmethod
    def from_hz(cls, frequency_hz: float, linewidth_hz: float, coupling_hz: float) -> "MechMode":
        return cls(Utilities.hz_to_rad(frequency_hz),
                   Utilities.hz_to_rad(linewidth_hz),
                   Utilities.hz_to_rad(coupling_hz))

    @property
    def quality_factor(self) -> float:
        return self.resonance_frequency / self.intrinsic_linewidth


@dataclass(frozen=True)
class Cavity:
    """A two-port microwave cavity. The total linewidth is always the sum of the three loss channels."""
    resonance_frequency: float
    port1_coupling: float
    port2_coupling: float
    internal_loss: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "resonance_frequency",
                           _check_number("resonance_frequency", self.resonance_frequency, 0.0, strict=True))
        for name in ("port1_coupling", "port2_coupling", "internal_loss"):
            object.__setattr__(self, name, _check_number(name, getattr(self, name), 0.0))
        if self.total_linewidth <= 0:
            raise ValueError("total linewidth must be > 0")

    @classmethod
    def from_hz(cls, frequency_hz: float, port1_hz: float, port2_hz: float, internal_hz: float) -> "Cavity":
        return cls(Utilities.hz_to_rad(frequency_hz),
                   Utilities.hz_to_rad(port1_hz),
                   Utilities.hz_to_rad(port2_hz),
                   Utilities.hz_to_rad(internal_hz))

    @property
    def total_linewidth(self) -> float:
        return self.port1_coupling + self.port2_coupling + self.internal_loss


@dataclass(frozen=True)
class OptomechSystem:
    """
    A cavity coupled to one or more mechanical modes.
    Modes are ordered by strictly increasing resonance frequency; the first one is the fundamental.
    kerr_per_photon defaults to the radiation-pressure value -2 g0^2 / Omega of the fundamental.
    uncertainties carries optional metadata (e.g. quoted error bars) and never enters the model.
    """
    cavity: Cavity
    modes: Tuple[MechMode, ...]
    thermal_occupancy: float = 0.0
    kerr_per_photon: Optional[float] = None
    kinetic_shift_per_photon: float = 0.0
    uncertainties: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.cavity, Cavity):
            raise ValueError("cavity must be a Cavity")
        modes = tuple(self.modes)
        if len(modes) == 0:
            raise ValueError("at least one mechanical mode is required")
        if not all(isinstance(mode, MechMode) for mode in modes):
            raise ValueError("modes must be MechMode instances")
        for lower, upper in zip(modes, modes[1:]):
            if upper.resonance_frequency <= lower.resonance_frequency:
                raise ValueError("mechanical modes must have strictly increasing resonance frequencies")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "thermal_occupancy",
                           _check_number("thermal_occupancy", self.thermal_occupancy, 0.0))
        if self.kerr_per_photon is None:
            fundamental = modes[0]
            kerr = -2 * fundamental.single_photon_coupling ** 2 / fundamental.resonance_frequency
        else:
            kerr = _check_number("kerr_per_photon", self.kerr_per_photon)
        object.__setattr__(self, "kerr_per_photon", kerr)
        object.__setattr__(self, "kinetic_shift_per_photon",
                           _check_number("kinetic_shift_per_photon", self.kinetic_shift_per_photon))

    @classmethod
    def from_hz(cls, cavity: Sequence[float], modes: Sequence[Sequence[float]], thermal_occupancy: float = 0.0,
                kerr_per_photon_hz: Optional[float] = None, kinetic_shift_per_photon_hz: float = 0.0,
                uncertainties: Optional[Dict[str, float]] = None) -> "OptomechSystem":
        """Builds a system from cyclic-frequency values (cavity: f_c, kappa_1, kappa_2, kappa_i; modes: f, Gamma, g0)"""
        return cls(cavity=Cavity.from_hz(*cavity),
                   modes=tuple(MechMode.from_hz(*mode) for mode in modes),
                   thermal_occupancy=thermal_occupancy,
                   kerr_per_photon=None if kerr_per_photon_hz is None else Utilities.hz_to_rad(kerr_per_photon_hz),
                   kinetic_shift_per_photon=Utilities.hz_to_rad(kinetic_shift_per_photon_hz),
                   uncertainties=dict(uncertainties or {}))

    @property
    def fundamental(self) -> MechMode:
        return self.modes[0]

    @property
    def resolved_sideband(self) -> bool:
        """True when the fundamental resonance exceeds the cavity linewidth"""
        return self.fundamental.resonance_frequency > self.cavity.total_linewidth

    def with_modes(self, n_modes: int) -> "OptomechSystem":
        """Returns a copy keeping only the lowest n_modes mechanical modes"""
        if not isinstance(n_modes, int) or not 1 <= n_modes <= len(self.modes):
            raise ValueError(f"n_modes must be an int between 1 and {len(self.modes)}")
        return replace(self, modes=self.modes[:n_modes])


@dataclass(frozen=True)
class DriveState:
    """
    A coherent drive at a given intracavity photon number.
    cavity_frequency is the drive-shifted cavity frequency and detuning is drive minus shifted cavity.
    couplings holds the parametric couplings g_i = g0_i sqrt(n_d) of every mode.
    """
    photon_number: float
    drive_frequency: float
    cavity_frequency: float
    single_photon_couplings: Tuple[float, ...]
    couplings: Tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        n_d = _check_number("photon_number", self.photon_number, 0.0)
        object.__setattr__(self, "photon_number", n_d)
        object.__setattr__(self, "drive_frequency",
                           _check_number("drive_frequency", self.drive_frequency, 0.0, strict=True))
        object.__setattr__(self, "cavity_frequency",
                           _check_number("cavity_frequency", self.cavity_frequency, 0.0, strict=True))
        g0s = tuple(_check_number("single_photon_coupling", g0, 0.0) for g0 in self.single_photon_couplings)
        if len(g0s) == 0:
            raise ValueError("at least one single-photon coupling is required")
        object.__setattr__(self, "single_photon_couplings", g0s)
        object.__setattr__(self, "couplings", tuple(parametric_coupling(g0, n_d) for g0 in g0s))

    @classmethod
    def from_system(cls, system: OptomechSystem, photon_number: float, drive_frequency: float) -> "DriveState":
        """Drive at a fixed frequency; the cavity frequency follows the photon-number-dependent shift"""
        return cls(photon_number=photon_number,
                   drive_frequency=drive_frequency,
                   cavity_frequency=shifted_cavity_frequency(system, photon_number),
                   single_photon_couplings=tuple(mode.single_photon_coupling for mode in system.modes))

    @classmethod
    def red_sideband(cls, system: OptomechSystem, photon_number: float) -> "DriveState":
        """Drive that tracks the shifted cavity so the detuning stays at minus the fundamental frequency"""
        omega_c = shifted_cavity_frequency(system, photon_number)
        return cls(photon_number=photon_number,
                   drive_frequency=omega_c - system.fundamental.resonance_frequency,
                   cavity_frequency=omega_c,
                   single_photon_couplings=tuple(mode.single_photon_coupling for mode in system.modes))

    @property
    def detuning(self) -> float:
        return self.drive_frequency - self.cavity_frequency

    @property
    def coupling(self) -> float:
        """Parametric coupling of the fundamental mode"""
        return self.couplings[0]


def parametric_coupling(single_photon_coupling: float, photon_number: float) -> float:
    """g = g0 sqrt(n_d)"""
    g0 = _check_number("single_photon_coupling", single_photon_coupling, 0.0)
    n_d = _check_number("photon_number", photon_number, 0.0)
    return g0 * math.sqrt(n_d)


def shifted_cavity_frequency(system: OptomechSystem, photon_number: float) -> float:
    """Cavity frequency including the Kerr and kinetic-inductance shifts, linear in n_d"""
    n_d = _check_number("photon_number", photon_number, 0.0)
    shift = (system.kerr_per_photon + system.kinetic_shift_per_photon) * n_d
    return system.cavity.resonance_frequency + shift


def static_radiation_pressure_shift(system: OptomechSystem, photon_number: float) -> Tuple[float, float]:
    """
    Static response of the fundamental to the mean radiation pressure force.
    Returns the displacement in units of the zero-point fluctuation, 2 g0 n_d / Omega,
    and the resulting cavity frequency shift, -2 g^2 / Omega.
    """
    n_d = _check_number("photon_number", photon_number, 0.0)
    mode = system.fundamental
    g = parametric_coupling(mode.single_photon_coupling, n_d)
    displacement = 2 * mode.single_photon_coupling * n_d / mode.resonance_frequency
    return displacement, -2 * g ** 2 / mode.resonance_frequency


def cooperativity(system: OptomechSystem, drive: DriveState) -> Tuple[float, float]:
    """Returns (C, C_q) with C = 4 g^2 / (kappa Gamma) and C_q = C / n_th for the fundamental"""
    kappa = system.cavity.total_linewidth
    c = 4 * drive.coupling ** 2 / (kappa * system.fundamental.intrinsic_linewidth)
    if system.thermal_occupancy == 0:
        c_q = math.inf if c > 0 else 0.0
    else:
        c_q = c / system.thermal_occupancy
    return c, c_q


def thermal_decoherence_rate(system: OptomechSystem) -> float:
    """n_th Gamma of the fundamental"""
    return system.thermal_occupancy * system.fundamental.intrinsic_linewidth


def photon_number_from_power(system: OptomechSystem, power: float, drive_frequency: float) -> float:
    """
    Intracavity photon number for an input power (W) at port 1:
    n_d = kappa_1 P / (hbar omega_d (Delta^2 + kappa^2 / 4)), with Delta taken to the unshifted cavity.
    """
    power = _check_number("power", power, 0.0)
    omega_d = _check_number("drive_frequency", drive_frequency, 0.0, strict=True)
    kappa = system.cavity.total_linewidth
    delta = omega_d - system.cavity.resonance_frequency
    return system.cavity.port1_coupling * power / (constants.hbar * omega_d * (delta ** 2 + kappa ** 2 / 4))


def threshold_photon_numbers(system: OptomechSystem) -> Dict[str, float]:
    """
    Photon numbers at which the fundamental crosses C = 1, C_q = 1, 4g = kappa
    and the parametric instability 2g = sqrt(Omega^2 + kappa^2 / 4) of the red sideband.
    Without coupling (g0 = 0) no threshold is reached and all are inf. Without thermal occupancy (n_th = 0)
    C_q is inf at any nonzero drive, so its threshold is 0.
    """
    mode = system.fundamental
    kappa = system.cavity.total_linewidth
    g0_squared = mode.single_photon_coupling ** 2
    if g0_squared == 0:
        return {"cooperativity": math.inf, "quantum_cooperativity": math.inf,
                "strong": math.inf, "unstable": math.inf}
    n_cooperativity = kappa * mode.intrinsic_linewidth / (4 * g0_squared)
    n_quantum = n_cooperativity * system.thermal_occupancy if system.thermal_occupancy > 0 else 0.0
    return {"cooperativity": n_cooperativity,
            "quantum_cooperativity": n_quantum,
            "strong": (kappa / 4) ** 2 / g0_squared,
            "unstable": (mode.resonance_frequency ** 2 + kappa ** 2 / 4) / (4 * g0_squared)}
