"""
PDMP model descriptions
Semiflows, jump families, switching kernels, Theta spaces and the
registry of built-in example models
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import QUADRATURE_NODES, THETA_GRID_POINTS

logger = logging.getLogger(__name__)

Vector = np.ndarray


class ModelError(ValueError):
    """Invalid model, parameters or state"""


def _as_vector(y, dim: Optional[int] = None) -> Vector:
    vec = np.array(y, dtype=float).reshape(-1)
    if dim is not None and vec.shape[0] != dim:
        raise ModelError(f"expected a vector of dimension {dim}, got {vec.shape[0]}")
    return vec


@dataclass(frozen=True)
class ThetaSpace:
    """
    Index space of the jump maps with its base measure

    kind 'finite': labels with strictly positive base weights
    kind 'interval': [lo, hi] with a base density (Lebesgue when omitted);
    base_max bounds the base density from above for rejection sampling.
    """
    kind: str
    labels: Tuple[float, ...] = ()
    weights: Tuple[float, ...] = ()
    lo: float = 0.0
    hi: float = 1.0
    base_density: Optional[Callable[[float], float]] = None
    base_max: float = 1.0

    def __post_init__(self):
        if self.kind == 'finite':
            if len(self.labels) == 0:
                raise ModelError("finite Theta needs at least one label")
            if len(self.weights) != len(self.labels):
                raise ModelError("finite Theta needs one base weight per label")
            if any(w <= 0 for w in self.weights):
                raise ModelError("finite Theta base weights must be strictly positive")
        elif self.kind == 'interval':
            if not self.lo < self.hi:
                raise ModelError(f"interval Theta needs lo < hi, got [{self.lo}, {self.hi}]")
            if self.base_max <= 0:
                raise ModelError("interval Theta base_max must be positive")
        else:
            raise ModelError(f"unknown Theta kind '{self.kind}'")

    @classmethod
    def finite(cls, labels: Sequence[float], weights: Optional[Sequence[float]] = None) -> 'ThetaSpace':
        labels = tuple(float(x) for x in labels)
        if weights is None:
            weights = (1.0,) * len(labels)
        return cls(kind='finite', labels=labels, weights=tuple(float(w) for w in weights))

    @classmethod
    def interval(cls, lo: float, hi: float,
                 base_density: Optional[Callable[[float], float]] = None,
                 base_max: float = 1.0) -> 'ThetaSpace':
        return cls(kind='interval', lo=float(lo), hi=float(hi),
                   base_density=base_density, base_max=float(base_max))

    @property
    def is_finite(self) -> bool:
        return self.kind == 'finite'

    def base(self, theta: float) -> float:
        """Base-measure density at theta (interval) or weight of the label (finite)"""
        if self.is_finite:
            return self.weights[self.labels.index(float(theta))]
        if self.base_density is None:
            return 1.0
        return float(self.base_density(theta))

    def nodes(self, n_quad: int = QUADRATURE_NODES) -> Tuple[np.ndarray, np.ndarray]:
        """
        Quadrature nodes and weights for integrals against the base measure

        Finite: the labels with their base weights (exact sums).
        Interval: Gauss-Legendre nodes mapped onto [lo, hi] times the base density.
        """
        if self.is_finite:
            return np.array(self.labels), np.array(self.weights)
        x, w = np.polynomial.legendre.leggauss(n_quad)
        half = 0.5 * (self.hi - self.lo)
        thetas = self.lo + half * (x + 1.0)
        weights = half * w * np.array([self.base(t) for t in thetas])
        return thetas, weights

    def integrate(self, func: Callable[[float], float], n_quad: int = QUADRATURE_NODES) -> float:
        thetas, weights = self.nodes(n_quad)
        return float(sum(wt * func(th) for th, wt in zip(thetas, weights)))

    def contains(self, theta: float) -> bool:
        if self.is_finite:
            return float(theta) in self.labels
        return self.lo <= theta <= self.hi

    def is_interior(self, theta: float) -> bool:
        if self.is_finite:
            return self.contains(theta)
        return self.lo < theta < self.hi

    def grid(self, n_points: int = THETA_GRID_POINTS) -> List[float]:
        """All labels (finite) or an interior grid (interval)"""
        if self.is_finite:
            return list(self.labels)
        step = (self.hi - self.lo) / (n_points + 1)
        return [self.lo + step * (k + 1) for k in range(n_points)]


@dataclass(frozen=True)
class Semiflow:
    """
    Family of semiflows S_i(t, y), i = 1..N

    evaluate(i, t, y) -> R^d; dt(i, t, y) -> d/dt S_i(t, y) and
    jac_y(i, t, y) -> d x d spatial Jacobian are optional.
    """
    dim: int
    evaluate: Callable[[int, float, Vector], Vector]
    dt: Optional[Callable[[int, float, Vector], Vector]] = None
    jac_y: Optional[Callable[[int, float, Vector], np.ndarray]] = None

    def __call__(self, i: int, t: float, y: Vector) -> Vector:
        return _as_vector(self.evaluate(i, t, y))


@dataclass(frozen=True)
class JumpFamily:
    """
    Jump maps w_theta with their place-dependent densities p_theta(y)

    envelope(y) >= sup_theta p(theta, y) is required for interval Theta.
    """
    apply: Callable[[float, Vector], Vector]
    density: Callable[[float, Vector], float]
    envelope: Optional[Callable[[Vector], float]] = None
    jac_y: Optional[Callable[[float, Vector], np.ndarray]] = None
    jac_theta: Optional[Callable[[float, Vector], Vector]] = None

    def __call__(self, theta: float, y: Vector) -> Vector:
        return _as_vector(self.apply(theta, y))


@dataclass(frozen=True)
class SwitchKernel:
    """Place-dependent switching probabilities pi(i, j, y)"""
    n_modes: int
    pi: Callable[[int, int, Vector], float]

    def row(self, i: int, y: Vector) -> np.ndarray:
        return np.array([float(self.pi(i, j, y)) for j in range(1, self.n_modes + 1)])


@dataclass(frozen=True, eq=False)
class State:
    """A point (y, mode) of X = Y x I; modes are 1-based"""
    y: Vector
    mode: int

    def __post_init__(self):
        vec = _as_vector(self.y)
        vec.flags.writeable = False
        object.__setattr__(self, 'y', vec)
        object.__setattr__(self, 'mode', int(self.mode))
        if np.any(np.isnan(vec)):
            raise ModelError("state coordinates must not be NaN")

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.mode == other.mode and np.array_equal(self.y, other.y)

    def __repr__(self):
        return f"State(y={self.y.tolist()}, mode={self.mode})"


@dataclass(frozen=True)
class PdmpModel:
    """
    Complete model: jump rate, semiflows, jump family, switching, Theta

    box: optional (lo, hi) corners of an axis-aligned closed state space;
    None means Y = R^d. hypothesis_defaults holds the constants under which
    the built-in models satisfy the ergodicity hypotheses.
    """
    name: str
    lam: float
    n_modes: int
    dim: int
    semiflow: Semiflow
    jumps: JumpFamily
    switch: SwitchKernel
    theta: ThetaSpace
    box: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    params: Mapping = field(default_factory=dict)
    builtin: bool = False
    hypothesis_defaults: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.lam > 0:
            raise ModelError(f"lambda must be > 0, got {self.lam}")
        if self.n_modes < 1:
            raise ModelError(f"number of modes must be >= 1, got {self.n_modes}")
        if self.dim < 1:
            raise ModelError(f"dimension must be >= 1, got {self.dim}")
        if self.semiflow.dim != self.dim:
            raise ModelError("semiflow dimension does not match model dimension")
        if self.switch.n_modes != self.n_modes:
            raise ModelError("switching kernel size does not match number of modes")
        if not self.theta.is_finite and self.jumps.envelope is None:
            raise ModelError("interval Theta requires an envelope bound for rejection sampling")

    @property
    def modes(self) -> range:
        return range(1, self.n_modes + 1)

    def check_mode(self, i: int):
        if not 1 <= int(i) <= self.n_modes:
            raise ModelError(f"mode {i} out of range 1..{self.n_modes}")

    def in_state_space(self, y: Vector) -> bool:
        if self.box is None:
            return bool(np.all(np.isfinite(y)))
        lo, hi = self.box
        return bool(np.all(np.asarray(lo) <= y) and np.all(y <= np.asarray(hi)))

    def make_state(self, y, mode: int) -> State:
        state = State(_as_vector(y, self.dim), mode)
        self.validate_state(state)
        return state

    def validate_state(self, state: State):
        self.check_mode(state.mode)
        if state.y.shape[0] != self.dim:
            raise ModelError(f"state dimension {state.y.shape[0]} does not match model dimension {self.dim}")
        if not self.in_state_space(state.y):
            raise ModelError(f"state {state.y.tolist()} lies outside the state space")

    def flow(self, i: int, t: float, y: Vector) -> Vector:
        if t < 0:
            raise ModelError(f"flow time must be >= 0, got {t}")
        self.check_mode(i)
        return self.semiflow(int(i), float(t), _as_vector(y, self.dim))

    def jump(self, theta: float, y: Vector) -> Vector:
        return self.jumps(theta, y)

    def density(self, theta: float, y: Vector) -> float:
        return float(self.jumps.density(theta, y))

    def switch_row(self, i: int, y: Vector) -> np.ndarray:
        return self.switch.row(int(i), y)

    def sample_points(self, rng: np.random.Generator, n: int, radius: float = 10.0) -> np.ndarray:
        """Uniform points of the box (or of [-radius, radius]^d for Y = R^d)"""
        if self.box is None:
            return rng.uniform(-radius, radius, size=(n, self.dim))
        lo, hi = self.box
        return rng.uniform(np.asarray(lo), np.asarray(hi), size=(n, self.dim))


def flow(model: PdmpModel, i: int, t: float, y) -> Vector:
    """
    Evaluate S_i(t, y)

    Args:
        model: Model whose semiflow is evaluated
        i: Mode (1-based)
        t: Time, t >= 0
        y: Point of R^d

    Returns:
        S_i(t, y)
    """
    return model.flow(i, t, y)


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

PARAM_ALIASES = {'λ': 'lambda', 'α': 'alpha', 'κ': 'kappa', 'γ': 'gamma'}

MODEL_DEFAULTS: Dict[str, Dict[str, object]] = {
    'contracting-lines': {
        'lambda': 1.0, 'alpha': -1.0, 'a': 2.0, 'scale': 0.5,
        'theta': 'finite', 'kappa': 0.0, 'pi12': 0.5, 'pi21': 0.5,
    },
    'dirac-trap': {
        'lambda': 1.0,
    },
    'planar-rotor': {
        'lambda': 1.0, 'gamma': 1.0, 'omega1': 1.0, 'omega2': -1.0,
        'c1x': -1.0, 'c1y': 0.0, 'c2x': 1.0, 'c2y': 0.0,
        'shift': 0.25, 'pi12': 0.5, 'pi21': 0.5,
    },
}


def _resolve_params(name: str, params: Optional[Mapping]) -> Dict[str, object]:
    defaults = MODEL_DEFAULTS[name]
    resolved = dict(defaults)
    for key, value in (params or {}).items():
        key = PARAM_ALIASES.get(key, key)
        if key not in defaults:
            raise ModelError(f"unknown parameter '{key}' for model '{name}'; "
                             f"accepted: {', '.join(sorted(defaults))}")
        default = defaults[key]
        if isinstance(default, float):
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ModelError(f"parameter '{key}' must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ModelError(f"parameter '{key}' must be finite, got {value}")
        resolved[key] = value
    if not resolved['lambda'] > 0:
        raise ModelError(f"lambda must be > 0, got {resolved['lambda']}")
    return resolved


def _two_mode_switch(pi12: float, pi21: float) -> SwitchKernel:
    for label, value in (('pi12', pi12), ('pi21', pi21)):
        if not 0.0 <= value <= 1.0:
            raise ModelError(f"{label} must lie in [0, 1], got {value}")
    table = ((1.0 - pi12, pi12), (pi21, 1.0 - pi21))
    return SwitchKernel(n_modes=2, pi=lambda i, j, y: table[i - 1][j - 1])


def _switch_overlap(pi12: float, pi21: float) -> float:
    """min over i != j of sum_k min(pi_ik, pi_jk) for the two-mode table"""
    return min(1.0, min(1.0 - pi12, pi21) + min(pi12, 1.0 - pi21))


def _contracting_lines(p: Dict[str, object]) -> PdmpModel:
    alpha, a, s, kappa = p['alpha'], p['a'], p['scale'], p['kappa']
    if not alpha < 0:
        raise ModelError(f"alpha must be < 0, got {alpha}")
    if a == 0:
        raise ModelError("a must be non-zero")
    if not 0.0 < s < 1.0:
        raise ModelError(f"scale must lie in (0, 1), got {s}")
    if not abs(kappa) < 1.0:
        raise ModelError(f"kappa must satisfy |kappa| < 1, got {kappa}")
    if p['theta'] not in ('finite', 'interval'):
        raise ModelError(f"theta must be 'finite' or 'interval', got {p['theta']!r}")

    def evaluate(i, t, y):
        decay = math.exp(alpha * t)
        if i == 1:
            return decay * y
        return decay * (y - a) + a

    def dt(i, t, y):
        decay = math.exp(alpha * t)
        if i == 1:
            return alpha * decay * y
        return alpha * decay * (y - a)

    semiflow = Semiflow(
        dim=1,
        evaluate=evaluate,
        dt=dt,
        jac_y=lambda i, t, y: np.array([[math.exp(alpha * t)]]),
    )
    jumps = JumpFamily(
        apply=lambda theta, y: s * y + (1.0 - s) * theta,
        density=lambda theta, y: 0.5 * (1.0 + kappa * theta * math.tanh(float(y[0]))),
        envelope=lambda y: 0.5 * (1.0 + abs(kappa)),
        jac_y=lambda theta, y: np.array([[s]]),
        jac_theta=lambda theta, y: np.array([1.0 - s]),
    )
    if p['theta'] == 'finite':
        theta = ThetaSpace.finite([-1.0, 1.0])
    else:
        theta = ThetaSpace.interval(-1.0, 1.0)

    constants = {
        'alpha': alpha, 'L': 1.0, 'L_w': 1.0,
        'L_p': abs(kappa) if kappa != 0 else 1.0,
        'c_pi': _switch_overlap(p['pi12'], p['pi21']), 'c_p': 0.5 * (1.0 - abs(kappa)),
        'y_star': [0.0],
        'phi': lambda t: abs(a) * (1.0 - math.exp(alpha * t)),
        'L_func': lambda y: 1.0,
        'psi': lambda t: abs(a),
    }
    return PdmpModel(
        name='contracting-lines', lam=p['lambda'], n_modes=2, dim=1,
        semiflow=semiflow, jumps=jumps, switch=_two_mode_switch(p['pi12'], p['pi21']),
        theta=theta, params=dict(p), builtin=True, hypothesis_defaults=constants,
    )


def _dirac_trap(p: Dict[str, object]) -> PdmpModel:
    semiflow = Semiflow(
        dim=1,
        evaluate=lambda i, t, y: math.exp(-t) * y,
        dt=lambda i, t, y: -math.exp(-t) * y,
        jac_y=lambda i, t, y: np.array([[math.exp(-t)]]),
    )
    jumps = JumpFamily(
        apply=lambda theta, y: np.array(y, dtype=float),
        density=lambda theta, y: 1.0,
        jac_y=lambda theta, y: np.eye(1),
        jac_theta=lambda theta, y: np.zeros(1),
    )
    constants = {
        'alpha': -1.0, 'L': 1.0, 'L_w': 1.0, 'L_p': 1.0, 'c_pi': 1.0, 'c_p': 1.0,
        'y_star': [0.0],
        'phi': lambda t: 0.0,
        'L_func': lambda y: 1.0,
        'psi': lambda t: 0.0,
    }
    return PdmpModel(
        name='dirac-trap', lam=p['lambda'], n_modes=1, dim=1,
        semiflow=semiflow, jumps=jumps,
        switch=SwitchKernel(n_modes=1, pi=lambda i, j, y: 1.0),
        theta=ThetaSpace.finite([1.0]), params=dict(p), builtin=True,
        hypothesis_defaults=constants,
    )


def _planar_rotor(p: Dict[str, object]) -> PdmpModel:
    """Two damped rotations about distinct centres plus vertical translation jumps"""
    gamma = p['gamma']
    if not gamma > 0:
        raise ModelError(f"gamma must be > 0, got {gamma}")
    centres = {1: np.array([p['c1x'], p['c1y']]), 2: np.array([p['c2x'], p['c2y']])}
    if np.array_equal(centres[1], centres[2]):
        raise ModelError("planar-rotor needs distinct centres")
    omegas = {1: p['omega1'], 2: p['omega2']}
    shift = np.array([0.0, p['shift']])

    def rotation(angle):
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])

    def generator(i):
        return np.array([[-gamma, -omegas[i]], [omegas[i], -gamma]])

    def evaluate(i, t, y):
        return centres[i] + math.exp(-gamma * t) * rotation(omegas[i] * t) @ (y - centres[i])

    def dt(i, t, y):
        return generator(i) @ (evaluate(i, t, y) - centres[i])

    semiflow = Semiflow(
        dim=2,
        evaluate=evaluate,
        dt=dt,
        jac_y=lambda i, t, y: math.exp(-gamma * t) * rotation(omegas[i] * t),
    )
    jumps = JumpFamily(
        apply=lambda theta, y: y + theta * shift,
        density=lambda theta, y: 0.5,
        jac_y=lambda theta, y: np.eye(2),
        jac_theta=lambda theta, y: shift.copy(),
    )
    spread = float(np.linalg.norm(centres[1] - centres[2])
                   + np.linalg.norm(centres[1]) + np.linalg.norm(centres[2]))
    constants = {
        'alpha': -gamma, 'L': 1.0, 'L_w': 1.0, 'L_p': 1.0,
        'c_pi': _switch_overlap(p['pi12'], p['pi21']), 'c_p': 0.5,
        'y_star': [0.0, 0.0],
        'phi': lambda t: 1.0,
        'L_func': lambda y: spread + 2.0 * float(np.linalg.norm(y)),
        'psi': lambda t: max(float(np.linalg.norm(centres[1])), float(np.linalg.norm(centres[2]))) * 2.0,
    }
    return PdmpModel(
        name='planar-rotor', lam=p['lambda'], n_modes=2, dim=2,
        semiflow=semiflow, jumps=jumps, switch=_two_mode_switch(p['pi12'], p['pi21']),
        theta=ThetaSpace.finite([-1.0, 1.0]), params=dict(p), builtin=True,
        hypothesis_defaults=constants,
    )


MODEL_REGISTRY: Dict[str, Callable[[Dict[str, object]], PdmpModel]] = {
    'contracting-lines': _contracting_lines,
    'dirac-trap': _dirac_trap,
    'planar-rotor': _planar_rotor,
}


def builtin_model(name: str, params: Optional[Mapping] = None) -> PdmpModel:
    """
    Build one of the registered closed-form models

    Args:
        name: 'contracting-lines', 'dirac-trap' or 'planar-rotor'
        params: Parameter overrides (unknown keys are rejected)

    Returns:
        Fully wired PdmpModel
    """
    if name not in MODEL_REGISTRY:
        raise ModelError(f"unknown model '{name}'; available: {', '.join(sorted(MODEL_REGISTRY))}")
    resolved = _resolve_params(name, params)
    model = MODEL_REGISTRY[name](resolved)
    logger.debug(f"Built model {name} with params {resolved}")
    return model


def validate_model(model: PdmpModel, n_samples: int, rng: np.random.Generator,
                   radius: float = 10.0) -> List[Dict[str, object]]:
    """
    Sampled checks of the semiflow, jump density and switching invariants

    Args:
        model: Model to check
        n_samples: Number of random (i, s, t, y) samples
        rng: numpy Generator
        radius: Sampling half-width when Y = R^d

    Returns:
        One finding per invariant: name, ok flag and the worst deviation seen
    """
    points = model.sample_points(rng, n_samples, radius)
    worst = {'identity': 0.0, 'semigroup': 0.0, 'normalization': 0.0,
             'row_sums': 0.0, 'jumps_in_space': 0.0}
    for y in points:
        i = int(rng.integers(1, model.n_modes + 1))
        s, t = rng.exponential(1.0 / model.lam, size=2)
        worst['identity'] = max(worst['identity'], float(np.max(np.abs(model.flow(i, 0.0, y) - y))))
        direct = model.flow(i, s + t, y)
        composed = model.flow(i, t, model.flow(i, s, y))
        worst['semigroup'] = max(worst['semigroup'], float(np.max(np.abs(direct - composed))))
        total = model.theta.integrate(lambda th: model.density(th, y))
        worst['normalization'] = max(worst['normalization'], abs(total - 1.0))
        for mode in model.modes:
            worst['row_sums'] = max(worst['row_sums'], abs(float(model.switch_row(mode, y).sum()) - 1.0))
        for theta in model.theta.grid():
            if not model.in_state_space(model.jump(theta, y)):
                worst['jumps_in_space'] = 1.0
    tolerances = {'identity': 1e-12, 'semigroup': 1e-9, 'normalization': 1e-6,
                  'row_sums': 1e-12, 'jumps_in_space': 0.0}
    findings = []
    for key, value in worst.items():
        findings.append({'name': key, 'ok': value <= tolerances[key],
                         'max_deviation': value, 'tolerance': tolerances[key]})
        if value > tolerances[key]:
            logger.warning(f"Model {model.name}: invariant '{key}' violated (max deviation {value:.3g})")
    return findings


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """
    Weighted sample cloud on Y x I

    ys: (m, d) coordinates, modes: (m,) 1-based modes, weights: (m,)
    nonnegative weights summing to 1 when normalized.
    """
    ys: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        ys = np.array(self.ys, dtype=float)
        if ys.ndim == 1:
            ys = ys.reshape(-1, 1)
        modes = np.array(self.modes, dtype=int).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if not (ys.shape[0] == modes.shape[0] == weights.shape[0]):
            raise ModelError("measure arrays must have matching lengths")
        if np.any(np.isnan(ys)):
            raise ModelError("measure coordinates must not be NaN")
        if np.any(weights < 0):
            raise ModelError("measure weights must be nonnegative")
        if self.normalized and ys.shape[0] > 0 and abs(weights.sum() - 1.0) > 1e-9:
            raise ModelError(f"normalized measure weights sum to {weights.sum()!r}, not 1")
        for name, arr in (('ys', ys), ('modes', modes), ('weights', weights)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, ys, modes, weights=None) -> 'EmpiricalMeasure':
        """Build a normalized measure; uniform weights when none are given"""
        ys = np.array(ys, dtype=float)
        if ys.ndim == 1:
            ys = ys.reshape(-1, 1)
        m = ys.shape[0]
        if weights is None:
            weights = np.full(m, 1.0 / m) if m else np.zeros(0)
        else:
            weights = np.array(weights, dtype=float)
            weights = weights / weights.sum()
        return cls(ys=ys, modes=np.array(modes, dtype=int), weights=weights)

    @classmethod
    def from_states(cls, states: Sequence[State], weights=None) -> 'EmpiricalMeasure':
        if len(states) == 0:
            raise ModelError("cannot build a measure from an empty state list")
        ys = np.vstack([s.y for s in states])
        return cls.from_arrays(ys, [s.mode for s in states], weights)

    @classmethod
    def dirac(cls, state: State, copies: int = 1) -> 'EmpiricalMeasure':
        return cls.from_states([state] * copies)

    @classmethod
    def merge(cls, measures: Sequence['EmpiricalMeasure']) -> 'EmpiricalMeasure':
        """Pool measures atom-by-atom, each atom keeping its share of the pooled count"""
        measures = [m for m in measures if m.size > 0]
        if not measures:
            raise ModelError("cannot merge an empty list of measures")
        total = sum(m.size for m in measures)
        weights = np.concatenate([m.weights * (m.size / total) for m in measures])
        return cls.from_arrays(np.vstack([m.ys for m in measures]),
                               np.concatenate([m.modes for m in measures]), weights)

    @property
    def size(self) -> int:
        return int(self.ys.shape[0])

    @property
    def dim(self) -> int:
        return int(self.ys.shape[1])

    def state(self, k: int) -> State:
        return State(self.ys[k], int(self.modes[k]))

    def states(self) -> List[State]:
        return [self.state(k) for k in range(self.size)]

    def mean(self) -> np.ndarray:
        return self.weights @ self.ys

    def coarsened(self, max_atoms: int) -> Tuple['EmpiricalMeasure', float]:
        """
        Merge atoms sharing a mode and a grid cell into their weighted centroid

        The cell width grows until at most max_atoms cells are occupied. Total
        mass is kept. The second value is sum_k w_k min(|y_k - centroid_k|, 1),
        the cost of the coupling that moves each atom to its centroid, which
        bounds the Fortet-Mourier distance between the two measures.
        """
        if max_atoms < 1:
            raise ModelError(f"max_atoms must be >= 1, got {max_atoms}")
        if self.size <= max_atoms:
            return self, 0.0
        if len(np.unique(self.modes)) > max_atoms:
            raise ModelError(f"{len(np.unique(self.modes))} modes cannot fit in {max_atoms} atoms")
        lo = self.ys.min(axis=0)
        span = float(np.max(self.ys.max(axis=0) - lo))
        width = span / max_atoms ** (1.0 / self.dim) if span > 0 else 1.0
        while True:
            cells = np.floor((self.ys - lo) / width)
            keys = np.column_stack([cells, self.modes.astype(float)])
            unique, inverse = np.unique(keys, axis=0, return_inverse=True)
            if unique.shape[0] <= max_atoms:
                break
            width *= 1.5
        inverse = inverse.reshape(-1)
        mass = np.bincount(inverse, weights=self.weights, minlength=unique.shape[0])
        centroids = np.column_stack([
            np.bincount(inverse, weights=self.weights * self.ys[:, k], minlength=unique.shape[0])
            for k in range(self.dim)
        ]) / np.where(mass > 0, mass, 1.0)[:, None]
        counts = np.bincount(inverse, minlength=unique.shape[0])
        plain = np.column_stack([
            np.bincount(inverse, weights=self.ys[:, k], minlength=unique.shape[0]) for k in range(self.dim)
        ]) / counts[:, None]
        centroids = np.where(mass[:, None] > 0, centroids, plain)
        moved = np.linalg.norm(self.ys - centroids[inverse], axis=1)
        displacement = float(self.weights @ np.minimum(moved, 1.0))
        coarse = EmpiricalMeasure(ys=centroids, modes=unique[:, -1].astype(int),
                                  weights=mass, normalized=self.normalized)
        return coarse, displacement

    def merged_duplicates(self) -> 'EmpiricalMeasure':
        """Collapse atoms with identical (y, mode) into one atom carrying the summed weight"""
        if self.size == 0:
            return self
        rows = np.column_stack([self.ys, self.modes.astype(float)])
        unique, inverse = np.unique(rows, axis=0, return_inverse=True)
        weights = np.bincount(inverse.reshape(-1), weights=self.weights, minlength=unique.shape[0])
        return EmpiricalMeasure(ys=unique[:, :-1], modes=unique[:, -1].astype(int),
                                weights=weights, normalized=self.normalized)

    def split_halves(self, rng: np.random.Generator) -> Tuple['EmpiricalMeasure', 'EmpiricalMeasure']:
        """Random disjoint halves, each renormalized"""
        if self.size < 2:
            raise ModelError("need at least 2 atoms to split a measure")
        order = rng.permutation(self.size)
        half = self.size // 2
        parts = []
        for idx in (np.sort(order[:half]), np.sort(order[half:2 * half])):
            parts.append(EmpiricalMeasure.from_arrays(self.ys[idx], self.modes[idx], self.weights[idx]))
        return parts[0], parts[1]
