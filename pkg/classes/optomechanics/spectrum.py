# Eigenvalues, normal-mode splitting, stability and coupling regimes of the driven system
# Eigenvalue problems are single-mode (fundamental); higher modes only enter the response functions.

# Libraries
from dataclasses import dataclass
import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

# Local imports
from classes.optomechanics.core import DriveState, OptomechSystem, cooperativity, threshold_photon_numbers
from classes.optomechanics.errors import SolverError

logger = logging.getLogger(__name__)

STABILITY_TOLERANCE = 1e-9  # relative to Omega
RESIDUAL_TOLERANCE = 1e-6  # scaled quartic residual
DETUNING_TOLERANCE = 1e-9  # relative to Omega, for the red-sideband check
REGIMES = ("sub-cooperative", "weak", "quantum-enabled", "strong", "ultrastrong", "unstable")


@dataclass(frozen=True)
class EigenSolution:
    """Four eigenvalues of the driven cavity-mechanics system, ordered by real part then imaginary part"""
    eigenvalues: np.ndarray
    omega_plus: float
    omega_minus: float
    residuals: np.ndarray
    stable: bool
    marginal: bool
    method: str

    @property
    def splitting(self) -> float:
        return self.omega_plus - self.omega_minus

    @property
    def damping_rates(self) -> np.ndarray:
        return -self.eigenvalues.imag


@dataclass(frozen=True)
class RegimeReport:
    """Coupling regime of a drive point together with the thresholds it was judged on"""
    label: str
    near_boundary: Optional[str]
    cooperativity: float
    quantum_cooperativity: float
    strong_ratio: float  # 4g / kappa
    splitting: float
    splitting_ratio: float  # Omega_s / Omega
    critical_coupling: float
    critical_ratio: float  # g / g_crit
    stable: bool
    red_sideband: bool
    resolved_sideband: bool

    def to_dict(self) -> Dict[str, object]:
        return {
            "label": self.label,
            "near_boundary": self.near_boundary,
            "cooperativity": self.cooperativity,
            "quantum_cooperativity": self.quantum_cooperativity,
            "strong_ratio": self.strong_ratio,
            "splitting_hz": self.splitting / (2 * math.pi),
            "splitting_ratio": self.splitting_ratio,
            "critical_coupling_hz": self.critical_coupling / (2 * math.pi),
            "critical_ratio": self.critical_ratio,
            "stable": self.stable,
            "red_sideband": self.red_sideband,
            "resolved_sideband": self.resolved_sideband,
        }


def quartic_residual(eigenvalue, omega, gamma, kappa, delta, g):
    """(lambda^2 - Omega^2 + i Gamma lambda)(lambda - Delta + i kappa/2)(lambda + Delta + i kappa/2) / (2 Omega) + 2 Delta g^2"""
    lam = np.asarray(eigenvalue, dtype=complex)
    mechanical = (lam ** 2 - omega ** 2 + 1j * gamma * lam) / (2 * omega)
    return mechanical * (lam - delta + 0.5j * kappa) * (lam + delta + 0.5j * kappa) + 2 * delta * g ** 2


def _sort_eigenvalues(eigenvalues: np.ndarray) -> np.ndarray:
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    return eigenvalues[order]


def _stability(eigenvalues: np.ndarray, omega: float) -> Tuple[bool, bool]:
    tolerance = STABILITY_TOLERANCE * omega
    largest = float(np.max(eigenvalues.imag))
    stable = largest <= tolerance
    marginal = stable and largest > -tolerance
    return stable, marginal


def _single_mode_parameters(system: OptomechSystem, drive: DriveState):
    if len(system.modes) > 1:
        logger.debug("eigenvalues use the fundamental only; %d higher modes ignored", len(system.modes) - 1)
    mode = system.fundamental
    return mode.resonance_frequency, mode.intrinsic_linewidth, system.cavity.total_linewidth, drive.detuning, drive.coupling


def eigenvalues_closed_form(system: OptomechSystem, drive: DriveState) -> EigenSolution:
    """
    Closed-form eigenvalues on the red sideband, Delta = -Omega:
    lambda = -i (kappa + Gamma) / 4 +/- sqrt(Omega^2 - a^2 +/- 2 Omega sqrt(g^2 - a^2)), a = (kappa - Gamma) / 4.
    Principal square roots throughout. The expression neglects Gamma^2 / 4 against Omega^2,
    so residuals are reported against the exact quartic.
    """
    omega, gamma, kappa, delta, g = _single_mode_parameters(system, drive)
    if abs(delta + omega) > DETUNING_TOLERANCE * omega:
        raise ValueError("closed-form eigenvalues need detuning = -Omega; use eigenvalues_numeric instead")
    a = (kappa - gamma) / 4
    inner = np.sqrt(complex(g ** 2 - a ** 2))
    center = -0.25j * (kappa + gamma)
    outer_plus = np.sqrt(omega ** 2 - a ** 2 + 2 * omega * inner)
    outer_minus = np.sqrt(omega ** 2 - a ** 2 - 2 * omega * inner)
    eigenvalues = _sort_eigenvalues(np.array([center + outer_plus, center - outer_plus,
                                              center + outer_minus, center - outer_minus]))
    residuals = np.abs(quartic_residual(eigenvalues, omega, gamma, kappa, delta, g)) / omega ** 3
    stable, marginal = _stability(eigenvalues, omega)
    return EigenSolution(eigenvalues=eigenvalues,
                         omega_plus=float(outer_plus.real),
                         omega_minus=float(outer_minus.real),
                         residuals=residuals,
                         stable=stable,
                         marginal=marginal,
                         method="closed_form")


def quartic_coefficients(omega: float, gamma: float, kappa: float, delta: float, g: float,
                         high_q: bool = False) -> np.ndarray:
    """
    Coefficients, highest power first, of the quartic in z = lambda / Omega multiplied by 2 / Omega^3.
    high_q replaces the mechanical factor by (z + i gamma/2)^2 - 1, the form solved exactly by the closed form.
    """
    gamma_r, kappa_r, delta_r, g_r = gamma / omega, kappa / omega, delta / omega, g / omega
    constant = -1 - gamma_r ** 2 / 4 if high_q else -1.0
    mechanical = np.array([1, 1j * gamma_r, constant], dtype=complex)
    optical = np.array([1, 1j * kappa_r, -kappa_r ** 2 / 4 - delta_r ** 2], dtype=complex)
    coefficients = np.polymul(mechanical, optical)
    coefficients[-1] += 4 * delta_r * g_r ** 2
    return coefficients


def eigenvalues_numeric(system: OptomechSystem, drive: DriveState, high_q: bool = False) -> EigenSolution:
    """
    Roots of the characteristic quartic for any detuning, from the companion-matrix eigenvalues
    followed by one Newton step per root. Raises SolverError when a residual stays above tolerance.
    """
    omega, gamma, kappa, delta, g = _single_mode_parameters(system, drive)
    coefficients = quartic_coefficients(omega, gamma, kappa, delta, g, high_q=high_q)
    derivative = np.polyder(coefficients)
    roots = np.roots(coefficients)
    if roots.size != 4 or not np.all(np.isfinite(roots)):
        raise SolverError("companion eigensolve did not return four finite roots",
                          {"coefficients": coefficients.tolist()})

    # Newton polish, kept only where it lowers the residual
    values = np.polyval(coefficients, roots)
    slopes = np.polyval(derivative, roots)
    with np.errstate(divide="ignore", invalid="ignore"):
        polished = roots - values / slopes
    better = np.isfinite(polished) & (np.abs(np.polyval(coefficients, polished)) < np.abs(values))
    roots = np.where(better, polished, roots)

    residuals = np.abs(np.polyval(coefficients, roots)) / 2
    if np.any(residuals > RESIDUAL_TOLERANCE):
        raise SolverError("quartic roots did not converge", {"residuals": residuals.tolist()})

    eigenvalues = _sort_eigenvalues(omega * roots)
    stable, marginal = _stability(eigenvalues, omega)
    # roots come in pairs lambda, -lambda*; the two right-most real parts are the branch frequencies
    omega_plus = max(float(eigenvalues[3].real), 0.0)
    omega_minus = max(float(eigenvalues[2].real), 0.0)
    return EigenSolution(eigenvalues=eigenvalues,
                         omega_plus=omega_plus,
                         omega_minus=omega_minus,
                         residuals=residuals,
                         stable=stable,
                         marginal=marginal,
                         method="numeric_high_q" if high_q else "numeric")


def _check_nonnegative(**values) -> None:
    for name, value in values.items():
        if np.any(np.asarray(value, dtype=float) < 0):
            raise ValueError(f"{name} must be >= 0")


def splitting_approx(g, kappa):
    """Strong-coupling splitting 2 sqrt(g^2 - kappa^2 / 16), zero below g = kappa / 4"""
    _check_nonnegative(g=g, kappa=kappa)
    g = np.asarray(g, dtype=float)
    result = 2 * np.sqrt(np.clip(g ** 2 - np.asarray(kappa, dtype=float) ** 2 / 16, 0, None))
    return float(result) if result.ndim == 0 else result


def exact_mech_frequencies(g, kappa, omega):
    """Omega_+/- = Re sqrt(Omega^2 - kappa^2/16 +/- 2 Omega sqrt(g^2 - kappa^2/16)), the Gamma -> 0 limit"""
    _check_nonnegative(g=g, kappa=kappa, omega=omega)
    g = np.asarray(g, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    omega = np.asarray(omega, dtype=float)
    inner = np.sqrt(g ** 2 - kappa ** 2 / 16 + 0j)
    base = omega ** 2 - kappa ** 2 / 16
    omega_plus = np.sqrt(base + 2 * omega * inner + 0j).real
    omega_minus = np.sqrt(base - 2 * omega * inner + 0j).real
    if omega_plus.ndim == 0:
        return float(omega_plus), float(omega_minus)
    return omega_plus, omega_minus


def exact_splitting(g, kappa, omega):
    omega_plus, omega_minus = exact_mech_frequencies(g, kappa, omega)
    return omega_plus - omega_minus


def instability_threshold(delta, kappa, omega):
    """Critical coupling sqrt(-(Omega / 4 Delta)(Delta^2 + kappa^2 / 4)) for red detuning"""
    delta = np.asarray(delta, dtype=float)
    if np.any(delta >= 0):
        raise ValueError("instability_threshold is defined for red detuning (delta < 0)")
    _check_nonnegative(kappa=kappa, omega=omega)
    result = np.sqrt(-(np.asarray(omega, dtype=float) / (4 * delta)) * (delta ** 2 + np.asarray(kappa, dtype=float) ** 2 / 4))
    return float(result) if result.ndim == 0 else result


def swap_time(splitting: float) -> float:
    """Time pi / Omega_s for a full exchange between the normal modes"""
    if splitting <= 0:
        raise ValueError("splitting must be > 0")
    return math.pi / splitting


def ultrastrong_coupling(kappa: float, omega: float) -> float:
    """Coupling at which the exact splitting reaches Omega / 5; nan when the stability limit comes first"""
    g_strong = kappa / 4
    g_crit = instability_threshold(-omega, kappa, omega)
    target = omega / 5

    def excess(g):
        return exact_splitting(g, kappa, omega) - target

    if g_strong >= g_crit or excess(g_crit) <= 0:
        return math.nan
    return brentq(excess, g_strong, g_crit, xtol=1e-12 * omega)


def deviation_coupling(kappa: float, omega: float, threshold: float) -> float:
    """Coupling at which the exact splitting exceeds the strong-coupling approximation by the relative threshold"""
    g_strong = kappa / 4
    g_crit = instability_threshold(-omega, kappa, omega)

    def excess(g):
        return exact_splitting(g, kappa, omega) / splitting_approx(g, kappa) - 1 - threshold

    lower = g_strong * (1 + 1e-6) if g_strong > 0 else 1e-9 * omega
    if lower >= g_crit or excess(g_crit) <= 0:
        return math.nan
    if excess(lower) >= 0:
        return lower
    return brentq(excess, lower, g_crit, xtol=1e-12 * omega)


def _next_regime(label: str, report_values: Dict[str, float]) -> Optional[str]:
    governing = {
        "sub-cooperative": ("weak", report_values["cooperativity"]),
        "weak": ("quantum-enabled", report_values["quantum_cooperativity"]),
        "quantum-enabled": ("strong", report_values["strong_ratio"]),
        "strong": ("ultrastrong", report_values["splitting_ratio"] * 5),
        "ultrastrong": ("unstable", report_values["critical_ratio"]),
    }
    if label not in governing:
        return None
    upcoming, ratio = governing[label]
    return upcoming if 0.9 <= ratio < 1 else None


def classify_regime(system: OptomechSystem, drive: DriveState) -> RegimeReport:
    """
    Assigns the strongest applicable regime label of the fundamental mode:
    unstable when g >= g_crit, ultrastrong when Omega_s > Omega / 5 and 4g > kappa,
    strong when 4g > kappa, quantum-enabled when C_q >= 1, weak when C >= 1.
    Labels follow the red-sideband convention; away from it only stability comes from the eigenvalues.
    """
    mode = system.fundamental
    omega = mode.resonance_frequency
    kappa = system.cavity.total_linewidth
    g = drive.coupling
    delta = drive.detuning
    c, c_q = cooperativity(system, drive)
    strong_ratio = 4 * g / kappa
    splitting = exact_splitting(g, kappa, omega)
    red_sideband = abs(delta + omega) <= DETUNING_TOLERANCE * omega
    if delta < 0:
        g_crit = instability_threshold(delta, kappa, omega)
        stable = g < g_crit
    else:
        g_crit = math.nan
        stable = eigenvalues_numeric(system, drive).stable
    critical_ratio = g / g_crit if g_crit > 0 else math.nan

    if not stable:
        label = "unstable"
    elif strong_ratio > 1 and splitting > omega / 5:
        label = "ultrastrong"
    elif strong_ratio > 1:
        label = "strong"
    elif c_q >= 1:
        label = "quantum-enabled"
    elif c >= 1:
        label = "weak"
    else:
        label = "sub-cooperative"

    values = {"cooperativity": c, "quantum_cooperativity": c_q, "strong_ratio": strong_ratio,
              "splitting_ratio": splitting / omega, "critical_ratio": critical_ratio}
    return RegimeReport(label=label,
                        near_boundary=_next_regime(label, values),
                        cooperativity=c,
                        quantum_cooperativity=c_q,
                        strong_ratio=strong_ratio,
                        splitting=splitting,
                        splitting_ratio=splitting / omega,
                        critical_coupling=g_crit,
                        critical_ratio=critical_ratio,
                        stable=stable,
                        red_sideband=red_sideband,
                        resolved_sideband=system.resolved_sideband)


def regime_boundaries(system: Optional[OptomechSystem] = None,
                      kappa_range: Tuple[float, float] = (1e-3, 10.0),
                      points: int = 121) -> pd.DataFrame:
    """
    Boundary curves of the regime diagram in the (kappa / Omega, g / Omega) plane on a log-spaced kappa axis:
    strong (4g = kappa), ultrastrong (Omega_s = Omega / 5) and unstable (2g = sqrt(Omega^2 + kappa^2 / 4)).
    When a system is given its own kappa / Omega is added to the grid and flagged in the device column.
    """
    low, high = kappa_range
    if not (0 < low < high):
        raise ValueError("kappa_range must satisfy 0 < low < high")
    if not isinstance(points, int) or points < 2:
        raise ValueError("points must be an int >= 2")
    ratios = np.logspace(math.log10(low), math.log10(high), points)
    device_ratio = None
    if system is not None:
        device_ratio = system.cavity.total_linewidth / system.fundamental.resonance_frequency
        ratios = np.unique(np.append(ratios, device_ratio))
    rows = []
    for ratio in ratios:
        rows.append({
            "kappa_over_omega": ratio,
            "g_strong_over_omega": ratio / 4,
            "g_ultrastrong_over_omega": ultrastrong_coupling(ratio, 1.0),
            "g_unstable_over_omega": instability_threshold(-1.0, ratio, 1.0),
            "device": device_ratio is not None and ratio == device_ratio,
        })
    return pd.DataFrame(rows)


def trajectory_crossings(system: OptomechSystem, deviation_threshold: float = 0.03) -> Dict[str, float]:
    """Photon numbers at which the red-sideband drive of the device crosses each regime threshold"""
    mode = system.fundamental
    kappa = system.cavity.total_linewidth
    omega = mode.resonance_frequency
    crossings = dict(threshold_photon_numbers(system))
    g0_squared = mode.single_photon_coupling ** 2
    for name, g in (("ultrastrong", ultrastrong_coupling(kappa, omega)),
                    ("deviation", deviation_coupling(kappa, omega, deviation_threshold))):
        crossings[name] = g ** 2 / g0_squared if g0_squared > 0 else math.inf
    return crossings


def device_trajectory(system: OptomechSystem, photon_numbers: Sequence[float],
                      deviation_threshold: float = 0.03) -> pd.DataFrame:
    """
    Regime table along the device's red-sideband drive path, one row per photon number.
    Rows at the threshold crossings are inserted and named in the crossing column.
    """
    photon_numbers = [float(n) for n in photon_numbers]
    if any(n < 0 for n in photon_numbers):
        raise ValueError("photon numbers must be >= 0")
    crossings = trajectory_crossings(system, deviation_threshold)
    points = [(n, "") for n in photon_numbers]
    points += [(n, name) for name, n in crossings.items() if math.isfinite(n)]
    points.sort(key=lambda point: point[0])

    kappa = system.cavity.total_linewidth
    omega = system.fundamental.resonance_frequency
    rows = []
    for n_d, crossing in points:
        drive = DriveState.red_sideband(system, n_d)
        g = drive.coupling
        report = classify_regime(system, drive)
        omega_plus, omega_minus = exact_mech_frequencies(g, kappa, omega)
        approx = splitting_approx(g, kappa)
        deviation = (omega_plus - omega_minus) / approx - 1 if approx > 0 else math.nan
        rows.append({
            "photon_number": n_d,
            "crossing": crossing,
            "g_hz": g / (2 * math.pi),
            "cooperativity": report.cooperativity,
            "quantum_cooperativity": report.quantum_cooperativity,
            "strong_ratio": report.strong_ratio,
            "omega_plus_hz": omega_plus / (2 * math.pi),
            "omega_minus_hz": omega_minus / (2 * math.pi),
            "splitting_hz": (omega_plus - omega_minus) / (2 * math.pi),
            "splitting_deviation": deviation,
            "regime": report.label,
        })
    return pd.DataFrame(rows)


def eigen_sweep(system: OptomechSystem, couplings: Sequence[float]) -> pd.DataFrame:
    """Branch frequencies of the fundamental versus parametric coupling on the red sideband"""
    mode = system.fundamental
    kappa = system.cavity.total_linewidth
    omega = mode.resonance_frequency
    g_crit = instability_threshold(-omega, kappa, omega)
    rows = []
    for g in couplings:
        omega_plus, omega_minus = exact_mech_frequencies(float(g), kappa, omega)
        rows.append({
            "g_hz": g / (2 * math.pi),
            "omega_plus_hz": omega_plus / (2 * math.pi),
            "omega_minus_hz": omega_minus / (2 * math.pi),
            "splitting_hz": (omega_plus - omega_minus) / (2 * math.pi),
            "splitting_approx_hz": splitting_approx(float(g), kappa) / (2 * math.pi),
            "stable": bool(g < g_crit),
        })
    return pd.DataFrame(rows, columns=["g_hz", "omega_plus_hz", "omega_minus_hz", "splitting_hz",
                                       "splitting_approx_hz", "stable"])
