# Synthetic traces and least-squares extraction of system parameters from complex transmission
# Fits work on stacked real and imaginary residuals. Rates are varied in log space, frequencies as
# offsets from their starting value scaled by the width of the feature they control.

# Libraries
from dataclasses import dataclass, field, replace
import logging
import math
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths

# Local imports
from classes.optomechanics.core import Cavity, DriveState, MechMode, OptomechSystem, cooperativity
from classes.optomechanics.errors import SolverError
from classes.optomechanics.response import ComplexTrace, trace as response_trace, transmission
from classes.optomechanics.spectrum import classify_regime, exact_mech_frequencies

logger = logging.getLogger(__name__)

BACKGROUND_PARAMETERS = ("background_gain_re", "background_gain_im", "background_slope_re", "background_slope_im")
_INDEXED = re.compile(r"^(mode_frequency|mode_linewidth|weight)_(\d+)$")


def parameter_kind(name: str, n_modes: int) -> str:
    """'offset' for frequencies, 'log' for rates, 'linear' for weights and background; ValueError for unknown names"""
    if name == "cavity_frequency":
        return "offset"
    if name in ("kappa_1", "kappa_2", "kappa_i", "coupling"):
        return "log"
    if name in BACKGROUND_PARAMETERS:
        return "linear"
    match = _INDEXED.match(name)
    if match is not None:
        stem, index = match.group(1), int(match.group(2))
        lowest = 2 if stem == "weight" else 1
        if lowest <= index <= n_modes:
            return {"mode_frequency": "offset", "mode_linewidth": "log", "weight": "linear"}[stem]
    raise ValueError(f"unknown fit parameter {name!r} for a {n_modes}-mode model")


def is_frequency_parameter(name: str) -> bool:
    """True for parameters carrying rad/s (converted to Hz in records)"""
    return not (name.startswith("weight_") or name in BACKGROUND_PARAMETERS)


def model_parameters(system: OptomechSystem, drive: DriveState) -> Dict[str, float]:
    """Full parameter set of the fit model reproducing the given system and drive"""
    cavity = system.cavity
    params = {
        "cavity_frequency": drive.cavity_frequency,
        "kappa_1": cavity.port1_coupling,
        "kappa_2": cavity.port2_coupling,
        "kappa_i": cavity.internal_loss,
        "coupling": drive.coupling,
        "background_gain_re": 1.0,
        "background_gain_im": 0.0,
        "background_slope_re": 0.0,
        "background_slope_im": 0.0,
    }
    g0_1 = system.fundamental.single_photon_coupling
    for i, mode in enumerate(system.modes, start=1):
        params[f"mode_frequency_{i}"] = mode.resonance_frequency
        params[f"mode_linewidth_{i}"] = mode.intrinsic_linewidth
        if i > 1:
            params[f"weight_{i}"] = (mode.single_photon_coupling / g0_1) ** 2 if g0_1 > 0 else 0.0
    return params


def build_model(params: Dict[str, float], template: OptomechSystem,
                drive_frequency: float) -> Tuple[OptomechSystem, DriveState]:
    """
    System and drive described by a full parameter set. The cavity frequency is the effective one,
    so the model carries no per-photon shifts; n_th and g0_1 come from the template.
    """
    g0_1 = template.fundamental.single_photon_coupling
    if g0_1 <= 0:
        raise ValueError("the template's fundamental mode needs a nonzero single-photon coupling")
    modes = []
    for i in range(1, len(template.modes) + 1):
        if i == 1:
            g0 = g0_1
        else:
            weight = params[f"weight_{i}"]
            if weight < 0:
                raise ValueError(f"weight_{i} must be >= 0, got {weight}")
            g0 = g0_1 * math.sqrt(weight)
        modes.append(MechMode(params[f"mode_frequency_{i}"], params[f"mode_linewidth_{i}"], g0))
    cavity = Cavity(params["cavity_frequency"], params["kappa_1"], params["kappa_2"], params["kappa_i"])
    system = OptomechSystem(cavity, tuple(modes), thermal_occupancy=template.thermal_occupancy,
                            kerr_per_photon=0.0, kinetic_shift_per_photon=0.0)
    if params["coupling"] < 0:
        raise ValueError("coupling must be >= 0")
    drive = DriveState.from_system(system, (params["coupling"] / g0_1) ** 2, drive_frequency)
    return system, drive


def model_transmission(params: Dict[str, float], frequencies: np.ndarray, template: OptomechSystem,
                       drive_frequency: float) -> np.ndarray:
    """Transmission of the parameter set times the affine complex background gain"""
    system, drive = build_model(params, template, drive_frequency)
    kappa = system.cavity.total_linewidth
    offset = (np.asarray(frequencies, dtype=float) - params["cavity_frequency"]) / kappa
    gain = complex(params["background_gain_re"], params["background_gain_im"])
    slope = complex(params["background_slope_re"], params["background_slope_im"])
    return (gain + slope * offset) * transmission(frequencies, system, drive)


def _trace_drive(trace: ComplexTrace) -> Tuple[float, float]:
    if trace.quantity != "transmission":
        raise ValueError(f"expected a transmission trace, got {trace.quantity!r}")
    if "drive_frequency" not in trace.metadata:
        raise ValueError("transmission trace metadata lacks drive_frequency")
    return float(trace.metadata["drive_frequency"]), float(trace.metadata.get("photon_number", 0.0))


def _base_parameters(trace: ComplexTrace, template: OptomechSystem) -> Dict[str, float]:
    drive_frequency, photon_number = _trace_drive(trace)
    return model_parameters(template, DriveState.from_system(template, photon_number, drive_frequency))


def _complete(params: Dict[str, float], base: Dict[str, float]) -> Dict[str, float]:
    unknown = set(params) - set(base)
    if unknown:
        raise ValueError(f"unknown fit parameters: {sorted(unknown)}")
    full = dict(base)
    full.update({name: float(value) for name, value in params.items()})
    return full


def _stack(complex_residual: np.ndarray) -> np.ndarray:
    return np.column_stack((complex_residual.real, complex_residual.imag)).ravel()


def residuals(params: Dict[str, float], trace: ComplexTrace, template: OptomechSystem,
              weights: Optional[Sequence[float]] = None, magnitude_only: bool = False) -> np.ndarray:
    """
    Residual vector model - data, stacked as [Re r_1, Im r_1, Re r_2, ...].
    Parameters missing from params are taken from the template at the trace's drive point.
    magnitude_only compares |T| instead and returns one entry per point.
    """
    drive_frequency, _ = _trace_drive(trace)
    full = _complete(params, _base_parameters(trace, template))
    model = model_transmission(full, trace.frequencies, template, drive_frequency)
    point_weights = _point_weights(weights, len(trace))
    if magnitude_only:
        return (np.abs(model) - np.abs(trace.values)) * point_weights
    return _stack((model - trace.values) * point_weights)


def _point_weights(weights: Optional[Sequence[float]], n_points: int) -> np.ndarray:
    if weights is None:
        return np.ones(n_points)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_points,) or np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError(f"weights must be {n_points} finite nonnegative values")
    return weights


@dataclass(frozen=True)
class NoiseModel:
    """Complex white Gaussian noise; sigma is the rms modulus per point, split evenly over both quadratures"""
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.sigma, bool) or not isinstance(self.sigma, (int, float)) or not self.sigma >= 0:
            raise ValueError("sigma must be a float >= 0")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be an int >= 0")

    def sample(self, n_points: int) -> np.ndarray:
        # counter-based stream, identical on every platform for a given seed
        generator = np.random.Generator(np.random.Philox(self.seed))
        draws = generator.normal(0.0, self.sigma / math.sqrt(2), size=(n_points, 2))
        return draws[:, 0] + 1j * draws[:, 1]


def synthesize(system: OptomechSystem, drive: DriveState, grid, noise: Optional[NoiseModel] = None) -> ComplexTrace:
    """Model transmission on the grid plus seeded complex noise; sigma = 0 returns the model itself"""
    noise = noise or NoiseModel()
    clean = response_trace(system, drive, grid)
    metadata = dict(clean.metadata, sigma=float(noise.sigma), seed=noise.seed)
    if noise.sigma == 0:
        return replace(clean, metadata=metadata)
    return ComplexTrace("transmission", clean.frequencies, clean.values + noise.sample(len(clean)), metadata)


@dataclass(frozen=True)
class FitConfig:
    """
    What to vary and how to stop. Bounds and initial values are physical (rad/s for frequencies and rates).
    Varied parameters without explicit bounds get bounds around their starting value.
    With vary_weights the coupling ratios of all higher modes are varied as well; with detect_modes their
    frequencies start from the features found in the trace and stay fixed unless named in vary.
    """
    vary: Tuple[str, ...] = ("cavity_frequency", "kappa_i", "mode_frequency_1", "coupling")
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    initial: Dict[str, float] = field(default_factory=dict)
    max_iterations: int = 200
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-10
    cost_tolerance: float = 1e-10
    relative_step: float = 1e-6
    magnitude_only: bool = False
    background: bool = False
    restart: bool = True
    acceptance_tolerance: float = 1e-3
    weights: Optional[Tuple[float, ...]] = None
    vary_weights: bool = True
    detect_modes: bool = True

    def __post_init__(self) -> None:
        vary = tuple(self.vary)
        if len(vary) == 0:
            raise ValueError("vary must name at least one parameter")
        if len(set(vary)) != len(vary):
            raise ValueError("vary contains duplicates")
        object.__setattr__(self, "vary", vary)
        if not isinstance(self.max_iterations, int) or self.max_iterations < 1:
            raise ValueError("max_iterations must be an int >= 1")
        for name in ("gradient_tolerance", "step_tolerance", "cost_tolerance", "relative_step", "acceptance_tolerance"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not value > 0:
                raise ValueError(f"{name} must be > 0")
        for name, pair in self.bounds.items():
            if len(pair) != 2 or not all(math.isfinite(v) for v in pair) or not pair[0] < pair[1]:
                raise ValueError(f"bounds for {name} must be a finite (low, high) pair with low < high")

    def varied(self, n_modes: int) -> Tuple[str, ...]:
        """Parameters varied for an n_modes model, in column order"""
        names = list(self.vary)
        if self.vary_weights:
            names += [f"weight_{k}" for k in range(2, n_modes + 1) if f"weight_{k}" not in names]
        if self.background:
            names += [name for name in BACKGROUND_PARAMETERS if name not in names]
        return tuple(names)


@dataclass(frozen=True)
class FitResult:
    """Outcome of one fit. sigmas hold 1-sigma errors of the varied parameters from the linearized problem."""
    parameters: Dict[str, float]
    sigmas: Dict[str, float]
    varied: Tuple[str, ...]
    cost: float
    iterations: int
    converged: bool
    message: str
    gradient_norm: float
    cost_history: Tuple[float, ...]
    residual_trace: ComplexTrace
    derived: Dict[str, float]
    restarted: bool = False
    system: Optional[OptomechSystem] = field(default=None, compare=False, repr=False)
    drive: Optional[DriveState] = field(default=None, compare=False, repr=False)

    def raise_for_status(self) -> "FitResult":
        if not self.converged:
            raise SolverError(self.message, {"cost": self.cost, "iterations": self.iterations,
                                             "gradient_norm": self.gradient_norm})
        return self

    def to_record(self) -> Dict[str, object]:
        """JSON-shaped record; frequencies and rates in Hz"""

        def convert(name, value):
            return value / (2 * math.pi) if is_frequency_parameter(name) else value

        return {
            "parameters": {name: convert(name, value) for name, value in self.parameters.items()},
            "sigmas": {name: convert(name, value) for name, value in self.sigmas.items()},
            "cost": self.cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "varied": list(self.varied),
            "restarted": self.restarted,
            "gradient_norm": self.gradient_norm,
            "cost_history": list(self.cost_history),
            "derived": dict(self.derived),
        }


class FitProblem:
    """Least-squares problem over the varied parameters in internal coordinates"""

    def __init__(self, trace: ComplexTrace, template: OptomechSystem, config: FitConfig,
                 start: Optional[Dict[str, float]] = None) -> None:
        self.trace = trace
        self.template = template
        self.config = config
        self.drive_frequency, _ = _trace_drive(trace)
        self.n_modes = len(template.modes)
        self.names = config.varied(self.n_modes)
        for name in self.names:
            parameter_kind(name, self.n_modes)
        base = _base_parameters(trace, template)
        base = _complete(config.initial, base)
        if start is not None:
            base = _complete(start, base)
        self.start = base
        self.weights = _point_weights(config.weights, len(trace))
        self.scales = {name: self._scale(name) for name in self.names}
        self.lower, self.upper = self._internal_bounds()
        self.cost_history: List[float] = []

    # Coordinates
    def _scale(self, name: str) -> float:
        params = self.start
        kappa = params["kappa_1"] + params["kappa_2"] + params["kappa_i"]
        if name == "cavity_frequency":
            return kappa
        if name.startswith("mode_frequency_"):
            index = int(name.rsplit("_", 1)[1])
            gamma = params[f"mode_linewidth_{index}"]
            weight = 1.0 if index == 1 else params[f"weight_{index}"]
            return max(gamma, min(kappa / 2, gamma + 4 * params["coupling"] ** 2 * weight / kappa))
        return 1.0

    def to_internal(self, name: str, value: float) -> float:
        kind = parameter_kind(name, self.n_modes)
        if kind == "log":
            if value <= 0:
                raise ValueError(f"{name} is varied in log space and must be > 0, got {value}")
            return math.log(value)
        if kind == "offset":
            return (value - self.start[name]) / self.scales[name]
        return value

    def from_internal(self, name: str, x: float) -> float:
        kind = parameter_kind(name, self.n_modes)
        if kind == "log":
            return math.exp(x)
        if kind == "offset":
            return self.start[name] + x * self.scales[name]
        return x

    def default_bounds(self, name: str) -> Tuple[float, float]:
        value = self.start[name]
        kind = parameter_kind(name, self.n_modes)
        if name == "cavity_frequency":
            width = 10 * self.scales[name]
            return value - width, value + width
        if name.startswith("mode_frequency_"):
            index = int(name.rsplit("_", 1)[1])
            half_width = 0.2 * value
            for neighbor in (index - 1, index + 1):
                key = f"mode_frequency_{neighbor}"
                if key in self.start:
                    half_width = min(half_width, abs(self.start[key] - value) / 2)
            return value - half_width, value + half_width
        if kind == "log":
            factor = 100.0 if name.startswith("mode_linewidth_") else 10.0
            return value / factor, value * factor
        if name.startswith("weight_"):
            return 0.0, max(4.0, 2 * value)
        return -10.0, 10.0

    def _internal_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lower, upper = [], []
        for name in self.names:
            low, high = self.config.bounds.get(name) or self.default_bounds(name)
            value = self.start[name]
            if not low <= value <= high:
                raise ValueError(f"bounds ({low}, {high}) for {name} do not bracket its start value {value}")
            lower.append(self.to_internal(name, low) if parameter_kind(name, self.n_modes) != "log" or low > 0
                         else -np.inf)
            upper.append(self.to_internal(name, high))
        return np.array(lower), np.array(upper)

    def initial_vector(self) -> np.ndarray:
        return np.array([self.to_internal(name, self.start[name]) for name in self.names])

    def unpack(self, x: np.ndarray) -> Dict[str, float]:
        params = dict(self.start)
        for name, value in zip(self.names, x):
            params[name] = self.from_internal(name, float(value))
        return params

    # Residuals and derivatives
    def complex_residual(self, x: np.ndarray) -> np.ndarray:
        model = model_transmission(self.unpack(x), self.trace.frequencies, self.template, self.drive_frequency)
        return model - self.trace.values

    def residual_vector(self, x: np.ndarray) -> np.ndarray:
        if self.config.magnitude_only:
            model = model_transmission(self.unpack(x), self.trace.frequencies, self.template, self.drive_frequency)
            return (np.abs(model) - np.abs(self.trace.values)) * self.weights
        return _stack(self.complex_residual(x) * self.weights)

    def jacobian(self, x: np.ndarray, scheme: str = "forward", f0: Optional[np.ndarray] = None) -> np.ndarray:
        """Finite-difference Jacobian with per-parameter step relative_step * max(|x_j|, 1)"""
        if scheme not in ("forward", "central"):
            raise ValueError("scheme must be 'forward' or 'central'")
        x = np.asarray(x, dtype=float)
        if f0 is None and scheme == "forward":
            f0 = self.residual_vector(x)
        columns = []
        for j in range(x.size):
            step = self.config.relative_step * max(abs(x[j]), 1.0)
            if scheme == "central":
                forward, backward = x.copy(), x.copy()
                forward[j] += step
                backward[j] -= step
                columns.append((self.residual_vector(forward) - self.residual_vector(backward)) / (2 * step))
                continue
            if x[j] + step > self.upper[j]:
                step = -step
            shifted = x.copy()
            shifted[j] += step
            columns.append((self.residual_vector(shifted) - f0) / step)
        return np.column_stack(columns)

    def _tracked_jacobian(self, x: np.ndarray) -> np.ndarray:
        # least_squares evaluates the Jacobian once per accepted iterate
        f0 = self.residual_vector(x)
        self.cost_history.append(float(np.sum(f0 ** 2)))
        return self.jacobian(x, "forward", f0)

    def solve(self) -> FitResult:
        self.cost_history = []
        x0 = self.initial_vector()
        solution = least_squares(self.residual_vector, x0, jac=self._tracked_jacobian,
                                 bounds=(self.lower, self.upper), method="trf", x_scale="jac",
                                 ftol=self.config.cost_tolerance, xtol=self.config.step_tolerance,
                                 gtol=self.config.gradient_tolerance, max_nfev=self.config.max_iterations)
        return self._summarize(solution)

    def _summarize(self, solution) -> FitResult:
        x = solution.x
        params = self.unpack(x)
        r = self.residual_vector(x)
        cost = float(np.sum(r ** 2))
        jac = self.jacobian(x, "forward", r)
        message = solution.message
        singular = False

        normal = jac.T @ jac
        dof = r.size - x.size
        sigmas_internal = np.full(x.size, np.nan)
        if dof > 0 and np.all(np.isfinite(normal)) and np.linalg.cond(normal) < 1e15:
            covariance = np.linalg.inv(normal) * cost / dof
            sigmas_internal = np.sqrt(np.clip(np.diag(covariance), 0, None))
        else:
            singular = True
            message = "singular normal equations; parameters are not identifiable from this trace"

        sigmas = {}
        for name, value, sigma in zip(self.names, x, sigmas_internal):
            kind = parameter_kind(name, self.n_modes)
            if kind == "log":
                sigmas[name] = math.exp(value) * sigma
            elif kind == "offset":
                sigmas[name] = self.scales[name] * sigma
            else:
                sigmas[name] = float(sigma)

        gradient = jac.T @ r
        # components pushing against an active bound cannot be lowered further
        span = np.where(np.isfinite(self.upper - self.lower), self.upper - self.lower, 1.0)
        pinned_low = (x - self.lower <= 1e-6 * span) & (gradient > 0)
        pinned_high = (self.upper - x <= 1e-6 * span) & (gradient < 0)
        gradient = np.where(pinned_low | pinned_high, 0.0, gradient)
        residual_norm = float(np.linalg.norm(r))
        if residual_norm <= 1e-12 * max(1.0, float(np.max(np.abs(self.trace.values)))) or cost == 0:
            gradient_norm = 0.0
        else:
            column_norms = np.linalg.norm(jac, axis=0)
            column_norms[column_norms == 0] = np.inf
            gradient_norm = float(np.max(np.abs(gradient) / column_norms) / residual_norm)

        converged = solution.status > 0 and not singular and gradient_norm <= self.config.acceptance_tolerance
        if solution.status == 0:
            message = f"iteration limit of {self.config.max_iterations} evaluations reached"
        elif not converged and not singular:
            message = f"stopped away from a minimum (gradient norm {gradient_norm:.3g})"

        system, drive = build_model(params, self.template, self.drive_frequency)
        complex_residual = self.complex_residual(x)
        residual_trace = ComplexTrace("transmission", self.trace.frequencies, complex_residual,
                                      dict(self.trace.metadata))
        return FitResult(parameters=params,
                         sigmas=sigmas,
                         varied=self.names,
                         cost=cost,
                         iterations=int(solution.njev or 0),
                         converged=bool(converged),
                         message=message,
                         gradient_norm=gradient_norm,
                         cost_history=tuple(self.cost_history),
                         residual_trace=residual_trace,
                         derived=derived_quantities(system, drive),
                         system=system,
                         drive=drive)


def derived_quantities(system: OptomechSystem, drive: DriveState) -> Dict[str, float]:
    """Couplings, cooperativities and branch frequencies of a fitted model, in Hz where dimensional"""
    kappa = system.cavity.total_linewidth
    omega_plus, omega_minus = exact_mech_frequencies(drive.coupling, kappa, system.fundamental.resonance_frequency)
    c, c_q = cooperativity(system, drive)
    return {
        "photon_number": drive.photon_number,
        "couplings_hz": [g / (2 * math.pi) for g in drive.couplings],
        "kappa_hz": kappa / (2 * math.pi),
        "cooperativity": c,
        "quantum_cooperativity": c_q,
        "omega_plus_hz": omega_plus / (2 * math.pi),
        "omega_minus_hz": omega_minus / (2 * math.pi),
        "splitting_hz": (omega_plus - omega_minus) / (2 * math.pi),
    }


def jacobian(params: Dict[str, float], trace: ComplexTrace, template: OptomechSystem, config: FitConfig,
             scheme: str = "forward") -> np.ndarray:
    """Finite-difference Jacobian of the residuals at params, columns in the internal coordinates of the varied set"""
    problem = FitProblem(trace, template, config, start=params)
    return problem.jacobian(problem.initial_vector(), scheme)


def _noise_floor(trace: ComplexTrace) -> Optional[float]:
    sigma = trace.metadata.get("sigma")
    if sigma is None or not sigma > 0:
        return None
    return len(trace) * float(sigma) ** 2


def _clip_to_bounds(params: Dict[str, float], bounds: Dict[str, Tuple[float, float]]) -> Dict[str, float]:
    clipped = dict(params)
    for name, (low, high) in bounds.items():
        if name in clipped:
            clipped[name] = min(max(clipped[name], low), high)
    return clipped


def _extrema(magnitude: np.ndarray, prominence: float) -> List[Tuple[int, int, float]]:
    """(index, +1 for a peak or -1 for a dip, prominence) of every extremum at least as prominent as given"""
    peaks, peak_properties = find_peaks(magnitude, prominence=prominence)
    dips, dip_properties = find_peaks(-magnitude, prominence=prominence)
    return [(int(i), 1, float(p)) for i, p in zip(peaks, peak_properties["prominences"])] + \
        [(int(i), -1, float(p)) for i, p in zip(dips, dip_properties["prominences"])]


def detect_mode_frequencies(trace: ComplexTrace, template: OptomechSystem,
                            params: Dict[str, float]) -> Dict[str, float]:
    """
    Higher-mode frequencies moved by the offset between each mode's feature in |T| and the same feature in the
    model at params. A mode keeps its value when its feature is off the grid, not resolved above the noise, or
    closer to where the model puts it than a quarter of its width (and at least two grid steps).
    """
    n_modes = len(template.modes)
    detected: Dict[str, float] = {}
    if n_modes < 2 or len(trace) < 3:
        return detected
    drive_frequency, _ = _trace_drive(trace)
    frequencies = trace.frequencies
    steps = np.gradient(frequencies)
    model = np.abs(model_transmission(params, frequencies, template, drive_frequency))
    peak = float(np.max(model))
    if peak == 0:
        return detected
    sigma = float(trace.metadata.get("sigma") or 0.0)
    model_features = _extrema(model, 1e-3 * peak)
    data_features = _extrema(np.abs(trace.values), max(0.01 * peak, 5 * sigma))
    mode_frequencies = [params[f"mode_frequency_{i}"] for i in range(1, n_modes + 1)]

    for k in range(2, n_modes + 1):
        name = f"mode_frequency_{k}"
        bare = drive_frequency + params[name]
        if not frequencies[0] <= bare <= frequencies[-1] or not model_features:
            continue
        separation = min(abs(params[name] - other) for i, other in enumerate(mode_frequencies, start=1) if i != k)
        index, kind, _ = min(model_features, key=lambda feature: abs(frequencies[feature[0]] - bare))
        if abs(frequencies[index] - bare) > separation / 4:
            continue
        _, _, left, right = peak_widths(kind * model, [index], rel_height=0.5)
        edges = _index_to_frequency(frequencies, [left[0], right[0]])
        width = float(edges[1] - edges[0])
        window = max(4 * steps[index], width)
        matches = [feature for feature in data_features
                   if feature[1] == kind and abs(frequencies[feature[0]] - frequencies[index]) <= window]
        if not matches:
            continue
        shift = float(frequencies[max(matches, key=lambda feature: feature[2])[0]] - frequencies[index])
        if abs(shift) > max(2 * steps[index], width / 4):
            detected[name] = params[name] + shift
    return detected


def _starting_point(trace: ComplexTrace, template: OptomechSystem, config: FitConfig,
                    guess: Optional["ParameterGuess"] = None) -> Dict[str, float]:
    """Full start of a fit: template and config.initial, then the guess (clipped into bounds) and detected modes"""
    start = _complete(config.initial, _base_parameters(trace, template))
    if guess is not None:
        start = _clip_to_bounds(guess.apply(start), config.bounds)
    if config.detect_modes and len(template.modes) > 1:
        detected = {name: value for name, value in detect_mode_frequencies(trace, template, start).items()
                    if name not in config.initial or guess is not None}
        if detected:
            logger.info("higher modes moved to detected features: %s",
                        ", ".join(f"{name}={value / (2 * math.pi):.6g} Hz" for name, value in detected.items()))
        start.update(_clip_to_bounds(detected, config.bounds))
    return start


def fit(trace: ComplexTrace, system_initial: OptomechSystem, config: Optional[FitConfig] = None) -> FitResult:
    """
    Trust-region least-squares fit of a transmission trace. A fit that fails to converge, or ends above
    ten times the noise floor recorded in the trace, is restarted once from initial_guess.
    Failures are reported through FitResult.converged and message rather than raised.
    """
    config = config or FitConfig()
    result = FitProblem(trace, system_initial, config, start=_starting_point(trace, system_initial, config)).solve()
    logger.info("fit finished: cost %.6g after %d iterations (%s)", result.cost, result.iterations, result.message)

    floor = _noise_floor(trace)
    poor = floor is not None and result.cost > 10 * floor
    if config.restart and (not result.converged or poor):
        logger.warning("fit %s; restarting from peak detection", "did not converge" if not result.converged
                       else "ended far above the noise floor")
        try:
            # higher modes are placed by detect_mode_frequencies, not by the guess
            guess = initial_guess(trace, 1)
            start = _starting_point(trace, system_initial, config, guess)
            second = FitProblem(trace, system_initial, replace(config, initial={}), start=start).solve()
        except (ValueError, SolverError) as error:
            logger.warning("restart abandoned: %s", error)
            return result
        second = replace(second, restarted=True)
        if (second.converged and not result.converged) or (second.converged == result.converged
                                                           and second.cost < result.cost):
            result = second
    if not result.converged:
        logger.warning("fit failed: %s", result.message)
    return result


@dataclass
class ParameterGuess:
    """Heuristic starting values (rad/s) with flags describing what could not be detected"""
    parameters: Dict[str, float]
    flags: List[str]

    def apply(self, base: Dict[str, float]) -> Dict[str, float]:
        """Merges the guess into a full parameter set, splitting the total linewidth through kappa_i"""
        params = dict(base)
        for name, value in self.parameters.items():
            if name == "kappa":
                internal = value - params["kappa_1"] - params["kappa_2"]
                if internal > 0:
                    params["kappa_i"] = internal
            elif name in params:
                params[name] = value
        return params


def _crossing(frequencies: np.ndarray, power: np.ndarray, level: float, inside: int, outside: int) -> float:
    """Linear interpolation of where power drops through level between two neighbouring samples"""
    p_in, p_out = power[inside], power[outside]
    if p_in == p_out:
        return float(frequencies[inside])
    fraction = (p_in - level) / (p_in - p_out)
    return float(frequencies[inside] + fraction * (frequencies[outside] - frequencies[inside]))


def _half_power_band(frequencies: np.ndarray, power: np.ndarray, index: int, outermost: bool) -> Tuple[float, float]:
    level = power[index] / 2
    if outermost:
        above = np.nonzero(power >= level)[0]
        left, right = above[0], above[-1]
    else:
        left = right = index
        while left > 0 and power[left - 1] >= level:
            left -= 1
        while right < power.size - 1 and power[right + 1] >= level:
            right += 1
    low = _crossing(frequencies, power, level, left, left - 1) if left > 0 else float(frequencies[0])
    high = _crossing(frequencies, power, level, right, right + 1) if right < power.size - 1 else float(frequencies[-1])
    return low, high


def _index_to_frequency(frequencies: np.ndarray, positions) -> np.ndarray:
    return np.interp(positions, np.arange(frequencies.size), frequencies)


def initial_guess(trace: ComplexTrace, n_modes: int) -> ParameterGuess:
    """
    Starting values from the shape of |T|: a single resonance gives the cavity frequency from the centre of the
    half-power band, kappa from its width and g from the width of the mechanically induced dip (about 4 g^2 / kappa).
    Two prominent peaks are read as normal modes at omega_d + Omega_+/-, inverted for Omega and g.
    Further local extrema, ranked by prominence, seed the higher mode frequencies.
    """
    if trace.quantity != "transmission":
        raise ValueError(f"expected a transmission trace, got {trace.quantity!r}")
    if not isinstance(n_modes, int) or n_modes < 1:
        raise ValueError("n_modes must be an int >= 1")
    frequencies = trace.frequencies
    magnitude = np.abs(trace.values)
    peak = float(np.max(magnitude))
    if peak == 0 or np.ptp(magnitude) <= 1e-12 * peak:
        raise ValueError("trace has no spectral features")
    power = magnitude ** 2
    drive_frequency = trace.metadata.get("drive_frequency")
    params: Dict[str, float] = {}
    flags: List[str] = []
    if drive_frequency is None:
        flags.append("drive_frequency missing; mechanical frequencies not estimated")

    peaks, properties = find_peaks(magnitude, prominence=0.2 * peak)
    order = np.argsort(properties["prominences"])[::-1]
    used = []
    if peaks.size >= 2:
        first, second = sorted(peaks[order[:2]])
        widths = []
        for index in (first, second):
            band_low, band_high = _half_power_band(frequencies, power, index, outermost=False)
            widths.append(band_high - band_low)
        # each normal mode carries half of the cavity linewidth
        kappa = 2 * float(np.mean(widths))
        params["kappa"] = kappa
        used = [first, second]
        low, high = float(frequencies[first]), float(frequencies[second])
        if drive_frequency is not None:
            omega_plus, omega_minus = high - drive_frequency, low - drive_frequency
            omega = math.sqrt(max((omega_plus ** 2 + omega_minus ** 2) / 2 + kappa ** 2 / 16, 0.0))
            h = (omega_plus ** 2 - omega_minus ** 2) / (4 * omega)
            params["mode_frequency_1"] = omega
            params["cavity_frequency"] = drive_frequency + omega
            params["coupling"] = math.sqrt(h ** 2 + kappa ** 2 / 16)
        else:
            params["cavity_frequency"] = (low + high) / 2
            params["coupling"] = (high - low) / 2
    else:
        index = int(np.argmax(magnitude))
        low, high = _half_power_band(frequencies, power, index, outermost=True)
        kappa = high - low
        params["kappa"] = kappa
        params["cavity_frequency"] = (low + high) / 2
        dips, dip_properties = find_peaks(-magnitude, prominence=0.02 * peak)
        dips_inside = [k for k, d in enumerate(dips) if low <= frequencies[d] <= high]
        if dips_inside:
            best = max(dips_inside, key=lambda k: dip_properties["prominences"][k])
            dip = dips[best]
            _, _, left, right = peak_widths(-magnitude, [dip], rel_height=0.5)
            edges = _index_to_frequency(frequencies, [left[0], right[0]])
            width = float(edges[1] - edges[0])
            params["coupling"] = math.sqrt(max(kappa * width / 4, 0.0))
            used = [dip]
            if drive_frequency is not None:
                params["mode_frequency_1"] = float(frequencies[dip]) - drive_frequency
        else:
            flags.append("coupling feature not detected")

    if n_modes > 1:
        candidates, candidate_properties = find_peaks(magnitude, prominence=0.01 * peak)
        minima, minima_properties = find_peaks(-magnitude, prominence=0.01 * peak)
        features = list(zip(candidates, candidate_properties["prominences"])) + \
            list(zip(minima, minima_properties["prominences"]))
        kappa = params.get("kappa", 0.0)
        features = [(i, p) for i, p in features
                    if all(abs(frequencies[i] - frequencies[u]) > kappa / 4 for u in used)]
        features.sort(key=lambda item: item[1], reverse=True)
        chosen = sorted(frequencies[i] for i, _ in features[:n_modes - 1])
        if drive_frequency is not None:
            for k, frequency in enumerate(chosen, start=2):
                params[f"mode_frequency_{k}"] = float(frequency) - drive_frequency
        if len(chosen) < n_modes - 1:
            flags.append(f"found {len(chosen)} of {n_modes - 1} higher-mode features")
    return ParameterGuess(params, flags)


def power_sweep_extract(traces: Sequence[Tuple[float, ComplexTrace]], system_initial: OptomechSystem,
                        config: Optional[FitConfig] = None, warm_start: bool = True) -> pd.DataFrame:
    """
    Fits a drive-power series in order of increasing photon number. With warm_start each fit starts
    from the previous result, the coupling scaled by sqrt(n_d / n_d_previous) and the cavity frequency moved
    by the per-photon shift of system_initial, all clipped into config.bounds. Failed points are recorded and the
    sweep continues.
    The FitResult objects are kept in table.attrs["fit_results"].
    """
    config = config or FitConfig()
    photon_numbers = [float(n) for n, _ in traces]
    if any(b < a for a, b in zip(photon_numbers, photon_numbers[1:])):
        raise ValueError("traces must be ordered by increasing photon number")
    g0_1 = system_initial.fundamental.single_photon_coupling
    shift_per_photon = system_initial.kerr_per_photon + system_initial.kinetic_shift_per_photon

    rows, results = [], []
    previous: Optional[Tuple[float, FitResult]] = None
    for n_nominal, trace in traces:
        metadata = dict(trace.metadata)
        metadata.setdefault("photon_number", float(n_nominal))
        trace = replace(trace, metadata=metadata)
        point_config = config
        if warm_start and previous is not None:
            n_previous, last = previous
            start = {name: last.parameters[name] for name in last.varied}
            if "coupling" in start and n_previous > 0:
                start["coupling"] = last.parameters["coupling"] * math.sqrt(n_nominal / n_previous)
            if "cavity_frequency" in start:
                start["cavity_frequency"] = last.parameters["cavity_frequency"] + shift_per_photon * (n_nominal - n_previous)
            point_config = replace(config, initial={**config.initial, **_clip_to_bounds(start, config.bounds)})
        row = {"photon_number_nominal": float(n_nominal)}
        try:
            result = fit(trace, system_initial, point_config)
        except (ValueError, SolverError) as error:
            logger.warning("sweep point n_d=%g failed: %s", n_nominal, error)
            row.update({"converged": False, "message": str(error)})
            rows.append(row)
            results.append(None)
            continue
        results.append(result)
        report = classify_regime(result.system, result.drive)
        derived = result.derived
        coupling = result.parameters["coupling"]
        row.update({
            "photon_number_fit": (coupling / g0_1) ** 2,
            "g_hz": coupling / (2 * math.pi),
            "g_sigma_hz": result.sigmas.get("coupling", math.nan) / (2 * math.pi),
            "kappa_hz": derived["kappa_hz"],
            "kappa_i_hz": result.parameters["kappa_i"] / (2 * math.pi),
            "cavity_frequency_hz": result.parameters["cavity_frequency"] / (2 * math.pi),
            "omega_plus_hz": derived["omega_plus_hz"],
            "omega_minus_hz": derived["omega_minus_hz"],
            "splitting_hz": derived["splitting_hz"],
            "cooperativity": derived["cooperativity"],
            "quantum_cooperativity": derived["quantum_cooperativity"],
            "regime": report.label,
            "cost": result.cost,
            "converged": result.converged,
            "message": result.message,
        })
        rows.append(row)
        logger.info("sweep point n_d=%g: g/2pi=%.6g Hz (%s)", n_nominal, row["g_hz"], report.label)
        if result.converged:
            previous = (float(n_nominal), result)
    table = pd.DataFrame(rows, columns=["photon_number_nominal", "photon_number_fit", "g_hz", "g_sigma_hz",
                                        "kappa_hz", "kappa_i_hz", "cavity_frequency_hz", "omega_plus_hz",
                                        "omega_minus_hz", "splitting_hz", "cooperativity", "quantum_cooperativity",
                                        "regime", "cost", "converged", "message"])
    table.attrs["fit_results"] = results
    return table
