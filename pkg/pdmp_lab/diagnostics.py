"""
Numerical diagnostics for absolute continuity of invariant measures
Rank and positivity checks, anchor heuristics, accessibility probing,
small-set certificates, hypothesis falsification and atom detection
"""

import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.ndimage import minimum_filter

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from utils import to_jsonable
from .config import (
    ACCESSIBILITY_N_MAX, ACCESSIBILITY_SEEDS, ACCESSIBILITY_SWEEPS,
    ATOM_CLUSTER_MASS, ATOM_EPS_FACTOR, ATOM_FRACTION_DIFFUSE, ATOM_FRACTION_SINGULAR,
    EQUILIBRIUM_HORIZON, FD_MIN_STEP, FD_STEP, FIXED_POINT_MAX_ITER, FIXED_POINT_TOL,
    HISTOGRAM_BINS, HYPOTHESIS_TOL, MIN_SMALL_SET_MC, QUADRATURE_NODES, SMALL_SET_BINS,
    SMALL_SET_WINDOW, SVD_RTOL, THETA_GRID_POINTS
)
from .model import EmpiricalMeasure, PdmpModel, State, _as_vector
from .operators import PathSpec, compose_Wn, weight_P_n, weight_Pi_n
from .rng import RngStream
from .simulate import _step, run_parallel

logger = logging.getLogger(__name__)

PASS, FAIL, INCONCLUSIVE = 'pass', 'fail', 'inconclusive'


class DiagnosticsError(ValueError):
    """Invalid probe, missing constants or unusable numerical input"""


# ---------------------------------------------------------------------------
# Report types
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    """One verdict with the numbers behind it"""
    name: str
    verdict: str
    evidence: Dict[str, Any]
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INCONCLUSIVE):
            raise DiagnosticsError(f"unknown verdict '{self.verdict}'")
        if not self.evidence:
            raise DiagnosticsError(f"check '{self.name}' carries no evidence")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'verdict': self.verdict,
                'evidence': self.evidence, 'params': self.params}


@dataclass
class DiagnosticsReport:
    """Ordered collection of check results for one model"""
    model: str
    checks: List[CheckResult] = field(default_factory=list)

    def add(self, result: CheckResult) -> CheckResult:
        self.checks.append(result)
        return result

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def verdict(self) -> str:
        verdicts = {c.verdict for c in self.checks}
        if FAIL in verdicts:
            return FAIL
        if INCONCLUSIVE in verdicts or not verdicts:
            return INCONCLUSIVE
        return PASS

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_dict(self) -> Dict[str, Any]:
        return {'model': self.model, 'verdict': self.verdict,
                'checks': [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(to_jsonable(self.to_dict()), ensure_ascii=False, indent=2)


@dataclass(frozen=True)
class RankProbe:
    """
    Anchor point, starting mode and a path along which W_n is differentiated

    path.modes[0] must equal mode; n >= d, all times > 0 and thetas interior.
    fd_step None means max(1e-6, 1e-6 |t_k|) per coordinate.
    """
    y_hat: np.ndarray
    mode: int
    path: PathSpec
    fd_step: Optional[float] = None
    svd_rtol: float = SVD_RTOL

    def __post_init__(self):
        object.__setattr__(self, 'y_hat', _as_vector(self.y_hat))
        object.__setattr__(self, 'mode', int(self.mode))
        if self.path.n < self.y_hat.shape[0]:
            raise DiagnosticsError(f"rank probe needs n >= d, got n={self.path.n}, d={self.y_hat.shape[0]}")
        if any(t <= 0 for t in self.path.times):
            raise DiagnosticsError(f"rank probe times must be > 0, got {self.path.times}")
        if self.path.modes[0] != self.mode:
            raise DiagnosticsError(f"path must start in mode {self.mode}, got {self.path.modes[0]}")
        if self.fd_step is not None and not self.fd_step > 0:
            raise DiagnosticsError(f"fd_step must be > 0, got {self.fd_step}")
        if not self.svd_rtol > 0:
            raise DiagnosticsError(f"svd_rtol must be > 0, got {self.svd_rtol}")

    def validate(self, model: PdmpModel):
        model.check_mode(self.mode)
        if self.y_hat.shape[0] != model.dim:
            raise DiagnosticsError(f"anchor dimension {self.y_hat.shape[0]} does not match model dimension {model.dim}")
        self.path.validate(model)
        for theta in self.path.thetas:
            if not model.theta.is_interior(theta):
                raise DiagnosticsError(f"theta {theta} is not an interior point of Theta")


@dataclass(frozen=True)
class HypothesisConstants:
    """Constants and bound functions declared for the ergodicity hypotheses"""
    alpha: float
    L: float
    L_w: float
    L_p: float
    c_pi: float
    c_p: float
    y_star: Tuple[float, ...]
    phi: Callable[[float], float]
    L_func: Callable[[np.ndarray], float]
    psi: Optional[Callable[[float], float]] = None

    REQUIRED = ('alpha', 'L', 'L_w', 'L_p', 'c_pi', 'c_p', 'y_star', 'phi', 'L_func')

    def __post_init__(self):
        for name in ('L', 'L_w', 'L_p', 'c_pi', 'c_p'):
            value = getattr(self, name)
            if not value > 0:
                raise DiagnosticsError(f"constant {name} must be > 0, got {value}")
        object.__setattr__(self, 'y_star', tuple(float(v) for v in self.y_star))

    @classmethod
    def from_model(cls, model: PdmpModel, **overrides) -> 'HypothesisConstants':
        """Declared defaults of a built-in model, selectively overridden"""
        values = dict(model.hypothesis_defaults)
        values.update(overrides)
        missing = [k for k in cls.REQUIRED if k not in values]
        if missing:
            raise DiagnosticsError(f"missing hypothesis constants: {', '.join(missing)}")
        return cls(**{k: values[k] for k in cls.REQUIRED}, psi=values.get('psi'))

    def c0_value(self, lam: float) -> float:
        return self.L * self.L_w + self.alpha / lam


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------

def _fd_step(t: float, fixed: Optional[float]) -> float:
    h = fixed if fixed is not None else max(FD_STEP, FD_STEP * abs(t))
    if t - h < 0:
        h = t / 2.0
        logger.warning(f"Finite-difference step shrunk to {h:.3g} at t={t:.3g}")
        if h < FD_MIN_STEP:
            raise DiagnosticsError(f"finite-difference step shrunk below {FD_MIN_STEP} at t={t}")
    return h


def _forward(model: PdmpModel, y: np.ndarray, path: PathSpec):
    """Pre-jump points z_k and inputs W_{k-1} of every step"""
    inputs, pre = [], []
    w = y
    for k in range(path.n):
        inputs.append(w)
        z = model.flow(path.modes[k], path.times[k], w)
        pre.append(z)
        w = model.jump(path.thetas[k], z)
    return inputs, pre


def _propagate(model: PdmpModel, path: PathSpec, inputs, pre, k: int, v: np.ndarray) -> np.ndarray:
    """Push a tangent vector at W_k through steps k+1..n"""
    for m in range(k + 1, path.n):
        v = model.semiflow.jac_y(path.modes[m], path.times[m], inputs[m]) @ v
        v = model.jumps.jac_y(path.thetas[m], pre[m]) @ v
    return v


def _has_analytic_t(model: PdmpModel) -> bool:
    return all(f is not None for f in (model.semiflow.dt, model.semiflow.jac_y, model.jumps.jac_y))


def jacobian_t_Wn(model: PdmpModel, probe: RankProbe, method: str = 'auto') -> np.ndarray:
    """
    Jacobian of W_n with respect to the inter-jump times

    Args:
        model: Model whose path map is differentiated
        probe: Anchor, mode and path
        method: 'fd' (central differences), 'analytic' (chain rule) or 'auto'

    Returns:
        d x n matrix
    """
    probe.validate(model)
    if method not in ('auto', 'fd', 'analytic'):
        raise DiagnosticsError(f"unknown Jacobian method '{method}'")
    if method == 'auto':
        method = 'analytic' if _has_analytic_t(model) else 'fd'
    path, y = probe.path, probe.y_hat
    columns = []
    if method == 'analytic':
        if not _has_analytic_t(model):
            raise DiagnosticsError(f"model {model.name} provides no analytic derivatives")
        inputs, pre = _forward(model, y, path)
        for k in range(path.n):
            v = _as_vector(model.semiflow.dt(path.modes[k], path.times[k], inputs[k]))
            v = model.jumps.jac_y(path.thetas[k], pre[k]) @ v
            columns.append(_propagate(model, path, inputs, pre, k, v))
    else:
        for k in range(path.n):
            h = _fd_step(path.times[k], probe.fd_step)
            plus, minus = list(path.times), list(path.times)
            plus[k] += h
            minus[k] -= h
            diff = compose_Wn(model, y, path.with_times(plus)) - compose_Wn(model, y, path.with_times(minus))
            columns.append(diff / (2.0 * h))
    jac = np.column_stack(columns)
    if not np.all(np.isfinite(jac)):
        raise DiagnosticsError("Jacobian has non-finite entries")
    return jac


def jacobian_theta_Wn(model: PdmpModel, y, path: PathSpec, fd_step: float = FD_STEP) -> np.ndarray:
    """
    Jacobian of W_n with respect to the jump parameters (interval Theta)

    Returns:
        d x n matrix
    """
    if model.theta.is_finite:
        raise DiagnosticsError("theta-derivatives need an interval Theta")
    path.validate(model)
    y = _as_vector(y, model.dim)
    columns = []
    if model.jumps.jac_theta is not None and _has_analytic_t(model):
        inputs, pre = _forward(model, y, path)
        for k in range(path.n):
            v = _as_vector(model.jumps.jac_theta(path.thetas[k], pre[k]))
            columns.append(_propagate(model, path, inputs, pre, k, v))
    else:
        space = model.theta
        for k in range(path.n):
            theta = path.thetas[k]
            h = min(fd_step, 0.5 * (theta - space.lo), 0.5 * (space.hi - theta))
            if h < FD_MIN_STEP:
                raise DiagnosticsError(f"theta {theta} is too close to the boundary of Theta")
            plus, minus = list(path.thetas), list(path.thetas)
            plus[k] += h
            minus[k] -= h
            diff = (compose_Wn(model, y, PathSpec(path.modes, path.times, plus))
                    - compose_Wn(model, y, PathSpec(path.modes, path.times, minus)))
            columns.append(diff / (2.0 * h))
    jac = np.column_stack(columns)
    if not np.all(np.isfinite(jac)):
        raise DiagnosticsError("Jacobian has non-finite entries")
    return jac


def check_rank(model: PdmpModel, probe: RankProbe, method: str = 'auto') -> CheckResult:
    """Numerical rank of the time-Jacobian; pass iff rank == d"""
    jac = jacobian_t_Wn(model, probe, method)
    sigma = np.linalg.svd(jac, compute_uv=False)
    top = float(sigma[0]) if sigma.size else 0.0
    rank = int(np.sum(sigma > probe.svd_rtol * top)) if top > 0 else 0
    verdict = PASS if rank == model.dim else FAIL
    logger.info(f"Rank check ({model.name}): rank {rank} of d={model.dim} -> {verdict}")
    return CheckResult(
        name='rank',
        verdict=verdict,
        evidence={'rank': rank, 'd': model.dim, 'singular_values': sigma.tolist(),
                  'jacobian': jac.tolist()},
        params={'y_hat': probe.y_hat.tolist(), 'mode': probe.mode, 'modes': list(probe.path.modes),
                'times': list(probe.path.times), 'thetas': list(probe.path.thetas),
                'svd_rtol': probe.svd_rtol, 'method': method},
    )


def check_positivity(model: PdmpModel, probe: RankProbe) -> CheckResult:
    """P_n * Pi_n for every terminal mode; pass iff all are strictly positive"""
    probe.validate(model)
    p_weight = weight_P_n(model, probe.y_hat, probe.path)
    values = {j: p_weight * weight_Pi_n(model, probe.y_hat, probe.path, j) for j in model.modes}
    smallest = min(values.values())
    return CheckResult(
        name='positivity',
        verdict=PASS if smallest > 0 else FAIL,
        evidence={'min_over_j': smallest, 'per_terminal_mode': values},
        params={'y_hat': probe.y_hat.tolist(), 'mode': probe.mode, 'modes': list(probe.path.modes),
                'times': list(probe.path.times), 'thetas': list(probe.path.thetas)},
    )


# ---------------------------------------------------------------------------
# Anchors and accessibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Anchor:
    """Candidate anchor point (y_hat, mode) and how it was found"""
    y_hat: Tuple[float, ...]
    mode: int
    provenance: str
    theta: float
    source: Tuple[float, ...]
    contraction: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'y_hat': list(self.y_hat), 'mode': self.mode, 'provenance': self.provenance,
                'theta': self.theta, 'source': list(self.source), 'contraction': self.contraction}


@dataclass(frozen=True)
class AnchorSearch:
    theta_points: int = THETA_GRID_POINTS
    tol: float = FIXED_POINT_TOL
    max_iter: int = FIXED_POINT_MAX_ITER
    horizon: float = EQUILIBRIUM_HORIZON
    t_grid: Tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0)
    starts: Tuple[Tuple[float, ...], ...] = ()


def _contraction_factor(model: PdmpModel, theta: float, z: np.ndarray) -> float:
    if model.jumps.jac_y is not None:
        return float(np.linalg.norm(model.jumps.jac_y(theta, z), 2))
    h = 1e-4
    base = model.jump(theta, z)
    ratios = []
    for k in range(model.dim):
        e = np.zeros(model.dim)
        e[k] = h
        ratios.append(float(np.linalg.norm(model.jump(theta, z + e) - base)) / h)
    return max(ratios)


def _search_starts(model: PdmpModel, search: AnchorSearch) -> List[np.ndarray]:
    if search.starts:
        return [_as_vector(s, model.dim) for s in search.starts]
    starts = [np.zeros(model.dim)]
    y_star = model.hypothesis_defaults.get('y_star')
    if y_star is not None:
        starts.append(_as_vector(y_star, model.dim))
    if model.box is not None:
        lo, hi = model.box
        starts.append(0.5 * (np.asarray(lo, dtype=float) + np.asarray(hi, dtype=float)))
    return starts


def suggest_anchors(model: PdmpModel, search: Optional[AnchorSearch] = None) -> List[Anchor]:
    """
    Anchor candidates from contracting jump maps and from flow rest points

    Contraction: iterate w_theta to a fixed point z (residual < tol,
    contraction factor < 1) and propose y_hat = z for every mode.
    Rest point: flow mode k for a long horizon, keep z if S_k(t, z) = z on
    the t-grid, and propose y_hat = w_theta(z) for the modes other than k.
    """
    search = search or AnchorSearch()
    thetas = model.theta.grid(search.theta_points)
    starts = _search_starts(model, search)
    found: Dict[Tuple, Anchor] = {}

    def keep(anchor: Anchor):
        key = (tuple(round(v, 8) for v in anchor.y_hat), anchor.mode, anchor.provenance)
        found.setdefault(key, anchor)

    for k in model.modes:
        for start in starts:
            z = model.flow(k, search.horizon, start)
            if not np.all(np.isfinite(z)):
                continue
            deviation = max(float(np.linalg.norm(model.flow(k, t, z) - z)) for t in search.t_grid)
            if deviation >= search.tol:
                continue
            targets = [i for i in model.modes if i != k] or [k]
            for theta in thetas:
                y_hat = model.jump(theta, z)
                if not model.in_state_space(y_hat):
                    continue
                for i in targets:
                    keep(Anchor(tuple(y_hat.tolist()), i, 'flow-equilibrium', theta, tuple(z.tolist())))

    for theta in thetas:
        for start in starts:
            z = start
            for _ in range(search.max_iter):
                nxt = model.jump(theta, z)
                if not np.all(np.isfinite(nxt)):
                    break
                if float(np.linalg.norm(nxt - z)) < search.tol:
                    z = nxt
                    break
                z = nxt
            residual = float(np.linalg.norm(model.jump(theta, z) - z))
            if residual >= search.tol:
                continue
            factor = _contraction_factor(model, theta, z)
            if factor < 1.0:
                for i in model.modes:
                    keep(Anchor(tuple(z.tolist()), i, 'contraction-fixed-point', theta,
                                tuple(z.tolist()), factor))

    anchors = list(found.values())
    logger.info(f"Found {len(anchors)} anchor candidates for {model.name}")
    return anchors


@dataclass(frozen=True)
class AccessibilitySearch:
    n_max: int = ACCESSIBILITY_N_MAX
    seeds: int = ACCESSIBILITY_SEEDS
    sweeps: int = ACCESSIBILITY_SWEEPS
    refine: int = 3
    theta_points: int = THETA_GRID_POINTS


def _path_score(model: PdmpModel, y: np.ndarray, path: PathSpec, i: int, y_hat: np.ndarray):
    w = compose_Wn(model, y, path)
    if not np.all(np.isfinite(w)):
        return math.inf, 0.0
    weight = weight_P_n(model, y, path) * weight_Pi_n(model, y, path, i)
    if not weight > 0:
        return math.inf, weight
    return float(np.linalg.norm(w - y_hat)), weight


def _seed_paths(model: PdmpModel, j: int, n: int, thetas: List[float], count: int,
                gen: np.random.Generator) -> List[PathSpec]:
    """Structured seeds (unit dwells, jump-then-dwell blocks) plus random paths"""
    seeds = []
    for theta in thetas:
        seeds.append(PathSpec((j,) * n, (1.0,) * n, (theta,) * n))
        if n >= 2:
            for k in model.modes:
                seeds.append(PathSpec((j,) + (k,) * (n - 1), (0.0,) + (1.0,) * (n - 1), (theta,) * n))
    modes_pool = list(model.modes)
    for _ in range(count):
        modes = (j,) + tuple(int(gen.choice(modes_pool)) for _ in range(n - 1))
        times = tuple(float(t) for t in gen.exponential(1.0 / model.lam, size=n))
        path_thetas = tuple(float(gen.choice(thetas)) for _ in range(n))
        seeds.append(PathSpec(modes, times, path_thetas))
    return seeds


def _refine(model: PdmpModel, y: np.ndarray, path: PathSpec, i: int, y_hat: np.ndarray,
            radius: float, thetas: List[float], sweeps: int):
    """Pattern search on the times (steps halve on failure) and the theta labels"""
    best, weight = _path_score(model, y, path, i, y_hat)
    steps = [max(t, 0.5) for t in path.times]
    for _ in range(sweeps):
        if best < radius:
            break
        improved = False
        for k in range(path.n):
            t = path.times[k]
            candidates = {2.0 * t, 0.5 * t, 0.0, t + steps[k], max(t - steps[k], 0.0)}
            for cand in sorted(candidates):
                times = list(path.times)
                times[k] = cand
                trial = path.with_times(times)
                score, w = _path_score(model, y, trial, i, y_hat)
                if score < best:
                    path, best, weight, improved = trial, score, w, True
            for theta in thetas:
                if theta == path.thetas[k]:
                    continue
                trial_thetas = list(path.thetas)
                trial_thetas[k] = theta
                trial = PathSpec(path.modes, path.times, tuple(trial_thetas))
                score, w = _path_score(model, y, trial, i, y_hat)
                if score < best:
                    path, best, weight, improved = trial, score, w, True
            if not improved:
                steps[k] *= 0.5
        if not improved and max(steps) < 1e-12:
            break
    return path, best, weight


def check_witness(model: PdmpModel, start: State, path: PathSpec, i: int, y_hat,
                  radius: float) -> Dict[str, Any]:
    """
    Whether one path carries start into B(y_hat, radius) ending in mode i

    A path is accepted when W_n(start) lies strictly inside the ball and
    P_n * Pi_n(.., i) > 0 along it.
    """
    model.validate_state(start)
    if path.modes[0] != start.mode:
        raise DiagnosticsError(f"path must start in mode {start.mode}, got {path.modes[0]}")
    y_hat = _as_vector(y_hat, model.dim)
    distance, weight = _path_score(model, start.y, path, i, y_hat)
    return {'reached': bool(distance < radius and weight > 0), 'distance': distance,
            'weight': weight, 'n': path.n}


def probe_accessibility(model: PdmpModel, y_hat, i: int, radius: float, starts: Sequence[State],
                        search: Optional[AccessibilitySearch] = None, rng: Optional[RngStream] = None,
                        workers: Optional[int] = None) -> CheckResult:
    """
    Search for paths carrying every start into the ball B(y_hat, radius)

    For each start (y, j) and n = 1..n_max, seeds mode paths beginning at j,
    scores ||W_n - y_hat|| subject to P_n * Pi_n(.., i) > 0 and refines the
    best seeds. A start that is not reached is inconclusive, not a disproof.

    Args:
        model: Model under test
        y_hat: Target point
        i: Terminal mode
        radius: Ball radius (inf allowed)
        starts: Starting states
        search: Search budget
        rng: Random stream (start k uses sub-stream k)
        workers: Thread count

    Returns:
        CheckResult 'accessibility' with one record per start
    """
    if not radius > 0:
        raise DiagnosticsError(f"radius must be > 0, got {radius}")
    if not starts:
        raise DiagnosticsError("accessibility needs at least one start")
    if rng is None:
        raise DiagnosticsError("an explicit random stream is required")
    search = search or AccessibilitySearch()
    model.check_mode(i)
    y_hat = _as_vector(y_hat, model.dim)
    thetas = model.theta.grid(search.theta_points)

    def probe(k: int) -> Dict[str, Any]:
        start = starts[k]
        model.validate_state(start)
        gen = rng.child(k).gen
        best = {'reached': False, 'distance': math.inf, 'weight': 0.0, 'n': None,
                'modes': [], 'times': [], 'thetas': []}
        for n in range(1, search.n_max + 1):
            seeds = _seed_paths(model, start.mode, n, thetas, search.seeds, gen)
            scored = sorted(((_path_score(model, start.y, p, i, y_hat)[0], idx) for idx, p in enumerate(seeds)))
            for _, idx in scored[:search.refine]:
                path, _, _ = _refine(model, start.y, seeds[idx], i, y_hat, radius, thetas, search.sweeps)
                witness = check_witness(model, start, path, i, y_hat, radius)
                if witness['distance'] < best['distance']:
                    best.update(distance=witness['distance'], weight=witness['weight'], n=n,
                                modes=list(path.modes), times=list(path.times), thetas=list(path.thetas))
                if witness['reached']:
                    best['reached'] = True
                    break
            if best['reached']:
                break
        best.update(start=start.y.tolist(), start_mode=start.mode)
        return best

    results = run_parallel(probe, list(range(len(starts))), workers)
    reached = sum(1 for r in results if r['reached'])
    verdict = PASS if reached == len(results) else INCONCLUSIVE
    if verdict != PASS:
        logger.warning(f"Accessibility ({model.name}): {reached}/{len(results)} starts reached "
                       f"B({y_hat.tolist()}, {radius})")
    return CheckResult(
        name='accessibility',
        verdict=verdict,
        evidence={'reached': reached, 'starts': len(results), 'per_start': results},
        params={'y_hat': y_hat.tolist(), 'mode': int(i), 'radius': radius, 'n_max': search.n_max,
                'seeds': search.seeds, 'sweeps': search.sweeps},
    )


# ---------------------------------------------------------------------------
# Small sets
# ---------------------------------------------------------------------------

def estimate_small_set(model: PdmpModel, y_hat, i: int, n: int, n_mc: int, rng: RngStream,
                       bins: int = SMALL_SET_BINS, window: int = SMALL_SET_WINDOW,
                       halfwidth: float = 1e-2, workers: Optional[int] = None) -> CheckResult:
    """
    Monte Carlo lower bound of the n-step density near the image of (y_hat, i)

    Starts form a 3^d grid in the box of the given halfwidth around y_hat.
    Each start draws n_mc n-step transitions; per start and terminal mode the
    endpoints are binned on a common grid spanning the 1st-99th percentile of
    the pooled cloud. The elementwise minimum over starts and modes is then
    minimized over every window of cells, and the best window is reported as
    V with c_bar its density floor (0 means inconclusive).
    """
    if n < 1:
        raise DiagnosticsError(f"n must be >= 1, got {n}")
    if n_mc < MIN_SMALL_SET_MC:
        raise DiagnosticsError(f"n_mc must be >= {MIN_SMALL_SET_MC}, got {n_mc}")
    model.check_mode(i)
    y_hat = _as_vector(y_hat, model.dim)
    offsets = np.array(np.meshgrid(*[[-halfwidth, 0.0, halfwidth]] * model.dim, indexing='ij'))
    grid = y_hat + offsets.reshape(model.dim, -1).T

    def draw(k: int):
        gen = rng.child(k).gen
        ys = np.zeros((n_mc, model.dim))
        modes = np.zeros(n_mc, dtype=int)
        for m in range(n_mc):
            y, mode = grid[k], i
            for _ in range(n):
                y, mode, _, _ = _step(model, y, mode, gen)
            ys[m], modes[m] = y, mode
        return ys, modes

    clouds = run_parallel(draw, list(range(grid.shape[0])), workers)
    pooled = np.vstack([c[0] for c in clouds])
    lo = np.percentile(pooled, 1.0, axis=0)
    hi = np.percentile(pooled, 99.0, axis=0)
    hi = np.where(hi > lo, hi, lo + 1e-12)
    edges = [np.linspace(lo[k], hi[k], bins + 1) for k in range(model.dim)]
    cell = float(np.prod((hi - lo) / bins))

    floor = None
    for ys, modes in clouds:
        for j in model.modes:
            counts, _ = np.histogramdd(ys[modes == j], bins=edges)
            density = counts / (n_mc * cell)
            floor = density if floor is None else np.minimum(floor, density)
    windowed = minimum_filter(floor, size=window, mode='constant', cval=0.0)
    best = np.unravel_index(int(np.argmax(windowed)), windowed.shape)
    c_bar = float(windowed[best])
    half = window // 2
    v_lo = [float(edges[k][max(best[k] - half, 0)]) for k in range(model.dim)]
    v_hi = [float(edges[k][min(best[k] + half + 1, bins)]) for k in range(model.dim)]
    verdict = PASS if c_bar > 0 else INCONCLUSIVE
    logger.info(f"Small-set estimate ({model.name}, n={n}): c_bar={c_bar:.4g} on [{v_lo}, {v_hi}]")
    return CheckResult(
        name='small_set',
        verdict=verdict,
        evidence={'c_bar': c_bar, 'V_lo': v_lo, 'V_hi': v_hi, 'n_starts': int(grid.shape[0])},
        params={'y_hat': y_hat.tolist(), 'mode': int(i), 'n': n, 'n_mc': n_mc, 'bins': bins,
                'window': window, 'halfwidth': halfwidth},
    )


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------

class _Falsifier:
    """Largest excess of lhs over rhs seen for one inequality lhs <= rhs"""

    def __init__(self, name: str, tol: float):
        self.name = name
        self.tol = tol
        self.trials = 0
        self.violations = 0
        self.max_excess = -math.inf
        self.witness: Optional[Dict[str, Any]] = None

    def record(self, lhs: float, rhs: float, **witness):
        self.trials += 1
        excess = lhs - rhs
        if excess > self.max_excess:
            self.max_excess = excess
        if excess > self.tol * max(1.0, abs(rhs)):
            self.violations += 1
            if self.witness is None or excess >= self.witness['excess']:
                self.witness = dict(witness, lhs=lhs, rhs=rhs, excess=excess)

    def result(self, params: Dict[str, Any]) -> CheckResult:
        verdict = FAIL if self.violations else PASS
        if verdict == FAIL:
            logger.warning(f"Condition {self.name} falsified: {self.violations} of {self.trials} draws")
        return CheckResult(
            name=self.name,
            verdict=verdict,
            evidence={'trials': self.trials, 'violations': self.violations,
                      'max_excess': self.max_excess, 'witness': self.witness},
            params=params,
        )


def _c3_check(model: PdmpModel, constants: HypothesisConstants, gen: np.random.Generator,
              radius: float, tol: float, c4_holds: bool, n_points: int = 5) -> CheckResult:
    """Sufficient conditions for the integrability condition plus a quadrature estimate"""
    lam = model.lam
    y_star = _as_vector(constants.y_star, model.dim)
    if constants.psi is None:
        return CheckResult(name='c3', verdict=INCONCLUSIVE,
                           evidence={'status': 'declared by author', 'psi': None})
    psi = constants.psi
    psi_integral, _ = integrate.quad(lambda t: psi(t) * math.exp(-lam * t), 0.0, math.inf, limit=200)

    t_grid = np.concatenate([np.linspace(0.0, 20.0 / lam, 41), gen.exponential(1.0 / lam, size=20)])
    psi_excess = max(
        float(np.linalg.norm(model.flow(j, t, y_star) - y_star)) - psi(t)
        for j in model.modes for t in t_grid
    )
    psi_bound = psi_excess <= tol * max(1.0, abs(psi_integral))

    thetas, weights = model.theta.nodes(16)
    points = model.sample_points(gen, n_points, radius)
    constant_p = all(
        abs(model.density(th, points[0]) - model.density(th, y)) <= tol
        for th in thetas for y in points[1:]
    )
    lipschitz = True
    for u, v in zip(points[:-1], points[1:]):
        gap = float(np.linalg.norm(u - v))
        for th in thetas:
            if float(np.linalg.norm(model.jump(th, u) - model.jump(th, v))) > constants.L_w * gap + tol * max(1.0, gap):
                lipschitz = False

    def inner(theta: float, y: np.ndarray, i: int) -> float:
        def integrand(t):
            target = model.jump(theta, model.flow(i, t, y_star))
            return math.exp(-lam * t) * float(np.linalg.norm(target - y_star)) * model.density(theta, model.flow(i, t, y))
        value, _ = integrate.quad(integrand, 0.0, math.inf, limit=200)
        return value

    estimate = max(
        float(sum(wt * inner(th, y, i) for th, wt in zip(thetas, weights)))
        for y in points for i in model.modes
    )
    applied = []
    if constant_p and c4_holds:
        applied.append('constant probabilities with averaged Lipschitz jumps')
    if lipschitz:
        applied.append('uniformly Lipschitz jumps')
    if not math.isfinite(estimate):
        verdict = FAIL
    elif math.isfinite(psi_integral) and psi_bound and applied:
        verdict = PASS
    else:
        verdict = INCONCLUSIVE
    return CheckResult(
        name='c3',
        verdict=verdict,
        evidence={'psi_integral': psi_integral, 'psi_max_excess': psi_excess, 'constant_p': constant_p,
                  'uniform_lipschitz': lipschitz, 'sufficient_conditions': applied,
                  'quadrature_estimate': estimate},
        params={'n_points': n_points, 'radius': radius},
    )


def check_hypotheses(model: PdmpModel, constants: HypothesisConstants, n_pairs: int, rng: RngStream,
                     radius: float = 10.0, tol: float = HYPOTHESIS_TOL,
                     n_quad: int = QUADRATURE_NODES) -> DiagnosticsReport:
    """
    Arithmetic check of c0 and randomized falsification of c1, c2, c4, c5, c6

    Every theta-integral is evaluated with the quadrature of Theta (exact
    sums for finite Theta); Theta(u, v) of c6 is the set of quadrature nodes
    satisfying the jump Lipschitz bound. A pass means "not falsified".

    Args:
        model: Model under test
        constants: Declared constants and bound functions
        n_pairs: Randomized (u, v, i, j, t) draws
        rng: Random stream
        radius: Sampling half-width when Y = R^d
        tol: Relative slack before a draw counts as a violation
        n_quad: Quadrature nodes for interval Theta

    Returns:
        DiagnosticsReport with checks c0..c6
    """
    if n_pairs < 1:
        raise DiagnosticsError(f"n_pairs must be >= 1, got {n_pairs}")
    report = DiagnosticsReport(model=model.name)
    c0 = constants.c0_value(model.lam)
    report.add(CheckResult(
        name='c0',
        verdict=PASS if c0 < 1 else FAIL,
        evidence={'value': c0, 'L': constants.L, 'L_w': constants.L_w, 'alpha': constants.alpha,
                  'lambda': model.lam},
    ))

    gen = rng.gen
    thetas, weights = model.theta.nodes(n_quad)
    falsifiers = {name: _Falsifier(name, tol) for name in ('c1', 'c2', 'c4', 'c5', 'c6')}
    us = model.sample_points(gen, n_pairs, radius)
    vs = model.sample_points(gen, n_pairs, radius)
    ts = gen.exponential(1.0 / model.lam, size=n_pairs)
    ts[::10] = 0.0
    for u, v, t in zip(us, vs, ts):
        t = float(t)
        i = int(gen.integers(1, model.n_modes + 1))
        j = int(gen.integers(1, model.n_modes + 1))
        gap = float(np.linalg.norm(u - v))
        where = {'u': u.tolist(), 'v': v.tolist(), 'i': i, 'j': j, 't': t}

        lhs = float(np.linalg.norm(model.flow(i, t, u) - model.flow(i, t, v)))
        falsifiers['c1'].record(lhs, constants.L * math.exp(constants.alpha * t) * gap, **where)

        lhs = float(np.linalg.norm(model.flow(i, t, u) - model.flow(j, t, u)))
        falsifiers['c2'].record(lhs, constants.phi(t) * constants.L_func(u), **where)

        spread = np.array([float(np.linalg.norm(model.jump(th, u) - model.jump(th, v))) for th in thetas])
        p_u = np.array([model.density(th, u) for th in thetas])
        p_v = np.array([model.density(th, v) for th in thetas])
        falsifiers['c4'].record(float(np.sum(weights * spread * p_u)), constants.L_w * gap, **where)
        falsifiers['c5'].record(float(np.sum(weights * np.abs(p_u - p_v))), constants.L_p * gap, **where)

        for a in model.modes:
            for b in model.modes:
                overlap = float(np.sum(np.minimum(model.switch_row(a, u), model.switch_row(b, u))))
                falsifiers['c6'].record(constants.c_pi, overlap, **where, part='switching', modes=[a, b])
        inside = spread <= constants.L_w * gap + tol * max(1.0, gap)
        mass = float(np.sum(weights * np.minimum(p_u, p_v) * inside))
        falsifiers['c6'].record(constants.c_p, mass, **where, part='jump densities')

    params = {'n_pairs': n_pairs, 'radius': radius, 'tol': tol}
    for name in ('c1', 'c2', 'c4', 'c5', 'c6'):
        report.add(falsifiers[name].result(params))
    report.add(_c3_check(model, constants, gen, radius, tol, falsifiers['c4'].violations == 0))
    logger.info(f"Hypothesis checks ({model.name}): {report.verdict}")
    return report


# ---------------------------------------------------------------------------
# Atoms versus diffuse mass
# ---------------------------------------------------------------------------

def classify_continuity(mu: EmpiricalMeasure, atom_eps: Optional[float] = None,
                        bins: int = HISTOGRAM_BINS, axis: int = 0) -> CheckResult:
    """
    Empirical atom fraction and per-mode histograms of a sample measure

    Samples of the same mode are clustered on a grid of cell size atom_eps
    (default 1e-9 times the sample scale); clusters holding more than 1% of
    the mass count as atoms. atomic-singular above 0.5, diffuse below 0.01,
    mixed otherwise. The label is a diagnostic only.
    """
    if mu.size == 0:
        raise DiagnosticsError("cannot classify an empty measure")
    scale = max(1.0, float(np.max(np.abs(mu.ys))))
    eps = atom_eps if atom_eps else ATOM_EPS_FACTOR * scale
    keys = np.column_stack([mu.modes, np.floor(mu.ys / eps)])
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    masses = np.bincount(inverse, weights=mu.weights)
    heavy = masses > ATOM_CLUSTER_MASS
    atom_fraction = float(masses[heavy].sum() / mu.weights.sum())
    if atom_fraction > ATOM_FRACTION_SINGULAR:
        classification = 'atomic-singular'
    elif atom_fraction < ATOM_FRACTION_DIFFUSE:
        classification = 'diffuse'
    else:
        classification = 'mixed'

    column = mu.ys[:, axis]
    edges = np.histogram_bin_edges(column, bins=bins)
    rows = []
    for j in np.unique(mu.modes):
        mask = mu.modes == j
        mass, _ = np.histogram(column[mask], bins=edges, weights=mu.weights[mask])
        rows.extend((int(j), float(edges[k]), float(edges[k + 1]), float(mass[k])) for k in range(bins))
    logger.info(f"Continuity: atom fraction {atom_fraction:.4f} -> {classification}")
    return CheckResult(
        name='continuity',
        verdict=PASS,
        evidence={'atom_fraction': atom_fraction, 'classification': classification,
                  'n_atoms_detected': int(heavy.sum()), 'histogram': rows},
        params={'atom_eps': eps, 'bins': bins, 'axis': axis,
                'cluster_mass': ATOM_CLUSTER_MASS, 'cutoffs': [ATOM_FRACTION_DIFFUSE, ATOM_FRACTION_SINGULAR]},
    )


# ---------------------------------------------------------------------------
# Certificate
# ---------------------------------------------------------------------------

def _rank_probes(model: PdmpModel, anchor: Anchor, count: int, gen: np.random.Generator) -> List[RankProbe]:
    """Deterministic probe of length d in the anchor mode, then random ones of length d and d + 1"""
    thetas = [th for th in model.theta.grid() if model.theta.is_interior(th)]
    d = model.dim
    probes = [RankProbe(anchor.y_hat, anchor.mode,
                        PathSpec((anchor.mode,) * d, (0.5,) * d, (anchor.theta,) * d))]
    modes_pool = list(model.modes)
    while len(probes) < count:
        n = d + int(gen.integers(0, 2))
        modes = (anchor.mode,) + tuple(int(gen.choice(modes_pool)) for _ in range(n - 1))
        times = tuple(float(t) for t in gen.uniform(0.05, 1.0, size=n))
        path_thetas = tuple(float(gen.choice(thetas)) for _ in range(n))
        probes.append(RankProbe(anchor.y_hat, anchor.mode, PathSpec(modes, times, path_thetas)))
    return probes


def certify_absolute_continuity(model: PdmpModel, rng: RngStream, starts: Sequence[State],
                                radius: float = 1e-3, max_anchors: int = 4, probes_per_anchor: int = 8,
                                search: Optional[AccessibilitySearch] = None,
                                workers: Optional[int] = None) -> DiagnosticsReport:
    """
    Anchors, then accessibility, positivity and rank for each anchor

    An anchor supports absolute continuity when every start reaches it and
    some probe at it passes both positivity and rank. The verdict is pass
    when at least one anchor is supported and inconclusive otherwise; it is
    numerical evidence, never a proof.
    """
    report = DiagnosticsReport(model=model.name)
    anchors = suggest_anchors(model)[:max_anchors]
    report.add(CheckResult(
        name='anchors',
        verdict=PASS if anchors else INCONCLUSIVE,
        evidence={'count': len(anchors), 'anchors': [a.to_dict() for a in anchors]},
    ))
    supported = []
    per_anchor = []
    for k, anchor in enumerate(anchors):
        stream = rng.child(k)
        access = probe_accessibility(model, anchor.y_hat, anchor.mode, radius, starts, search,
                                     stream.child(0), workers)
        best_rank, positive, winner = 0, False, None
        for probe in _rank_probes(model, anchor, probes_per_anchor, stream.child(1).gen):
            rank = check_rank(model, probe)
            positivity = check_positivity(model, probe)
            best_rank = max(best_rank, rank.evidence['rank'])
            positive = positive or positivity.passed
            if rank.passed and positivity.passed:
                winner = rank.params
                break
        ok = access.passed and winner is not None
        per_anchor.append({'anchor': anchor.to_dict(), 'accessibility': access.verdict,
                           'reached': access.evidence['reached'], 'best_rank': best_rank,
                           'positivity': positive, 'probe': winner, 'supported': ok})
        if ok:
            supported.append(k)
    verdict = PASS if supported else INCONCLUSIVE
    logger.info(f"Absolute-continuity certificate ({model.name}): {len(supported)} of "
                f"{len(anchors)} anchors supported -> {verdict}")
    report.add(CheckResult(
        name='absolute_continuity',
        verdict=verdict,
        evidence={'supported': len(supported), 'anchors_tried': len(anchors), 'per_anchor': per_anchor},
        params={'radius': radius, 'max_anchors': max_anchors, 'probes_per_anchor': probes_per_anchor,
                'starts': len(starts)},
    ))
    return report
