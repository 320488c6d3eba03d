"""
Distances between states and between empirical measures
The product metric rho_c, the Fortet-Mourier distance (exact transport
with truncated cost, plus a dual LP oracle) and geometric rate fitting
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .config import DEFAULT_C, DEFAULT_FIT_N_MAX, DEFAULT_FIT_N_REP, FM_MAX_ATOMS
from .model import EmpiricalMeasure, PdmpModel, State
from .rng import RngStream
from .simulate import chain_marginals, run_parallel

logger = logging.getLogger(__name__)


class MetricError(ValueError):
    """Invalid measures or failed distance/rate computation"""


@dataclass(frozen=True)
class MetricConfig:
    """Metric parameters; c is the mode-mismatch penalty"""
    c: float = DEFAULT_C

    def __post_init__(self):
        if not self.c > 0:
            raise MetricError(f"c must be > 0, got {self.c}")


@dataclass(frozen=True)
class RateFit:
    """
    Least-squares fit of log d_n = log C + n log beta

    sweep holds (n, d_n, noise_floor) for every n examined, including the
    ones below the floor that were left out of the fit.
    """
    beta: float
    C: float
    residual: float
    n_range: Tuple[int, int]
    c: float
    noise_floor: float
    sweep: Tuple[Tuple[int, float, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            'beta': self.beta, 'C': self.C, 'residual': self.residual,
            'n_range': list(self.n_range), 'c': self.c, 'noise_floor': self.noise_floor,
        }


def rho_c(cfg: MetricConfig, x1: State, x2: State) -> float:
    """||u - v|| + c * [i != j]"""
    if x1.y.shape != x2.y.shape:
        raise MetricError(f"dimension mismatch: {x1.y.shape[0]} vs {x2.y.shape[0]}")
    mismatch = 0.0 if x1.mode == x2.mode else cfg.c
    return float(np.linalg.norm(x1.y - x2.y)) + mismatch


def cost_matrix(cfg: MetricConfig, mu: EmpiricalMeasure, nu: EmpiricalMeasure,
                truncate: bool = True) -> np.ndarray:
    """Pairwise rho_c between atoms, optionally truncated at 1"""
    dist = cdist(mu.ys, nu.ys, metric='euclidean')
    dist = dist + cfg.c * (mu.modes[:, None] != nu.modes[None, :])
    if truncate:
        dist = np.minimum(dist, 1.0)
    return dist


def _check_pair(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    for label, m in (('first', mu), ('second', nu)):
        if m.size == 0:
            raise MetricError(f"{label} measure is empty")
        if not m.normalized:
            raise MetricError(f"{label} measure is not normalized")
    if mu.dim != nu.dim:
        raise MetricError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


@dataclass(frozen=True)
class FmResult:
    """
    A Fortet-Mourier distance with its provenance

    exact is False only when a side had to be coarsened; the true distance
    then lies within error_bound of value.
    """
    value: float
    exact: bool
    error_bound: float
    sizes: Tuple[int, int]
    solver: str

    def to_dict(self) -> dict:
        return {'d_FM': self.value, 'exact': self.exact, 'error_bound': self.error_bound,
                'sizes': list(self.sizes), 'solver': self.solver}


def _is_uniform(m: EmpiricalMeasure) -> bool:
    return bool(np.allclose(m.weights, 1.0 / m.size, rtol=0.0, atol=1e-15))


def _prepare(m: EmpiricalMeasure, max_atoms: int) -> Tuple[EmpiricalMeasure, float]:
    merged = m.merged_duplicates()
    if merged.size <= max_atoms:
        return merged, 0.0
    coarse, moved = merged.coarsened(max_atoms)
    logger.warning(f"Coarsened measure from {merged.size} to {coarse.size} atoms for transport "
                   f"(error bound {moved:.3g})")
    return coarse, moved


def fm_distance_report(cfg: MetricConfig, mu: EmpiricalMeasure, nu: EmpiricalMeasure,
                       max_atoms: int = FM_MAX_ATOMS) -> FmResult:
    """
    Fortet-Mourier distance between two normalized discrete measures

    Computed as exact optimal transport with ground cost min(rho_c, 1):
    an assignment problem when both measures are uniform with the same
    number of atoms, network simplex otherwise.

    Args:
        cfg: Metric configuration
        mu: First measure
        nu: Second measure
        max_atoms: Per-side atom cap for exact transport

    Returns:
        FmResult with the distance in [0, 1]
    """
    _check_pair(mu, nu)
    sizes = (mu.size, nu.size)
    if mu.size == nu.size and mu.size <= max_atoms and _is_uniform(mu) and _is_uniform(nu):
        cost = cost_matrix(cfg, mu, nu)
        rows, cols = linear_sum_assignment(cost)
        value = float(cost[rows, cols].mean())
        return FmResult(min(max(value, 0.0), 1.0), True, 0.0, sizes, 'assignment')

    mu, moved_mu = _prepare(mu, max_atoms)
    nu, moved_nu = _prepare(nu, max_atoms)
    a = mu.weights / mu.weights.sum()
    b = nu.weights / nu.weights.sum()
    value = float(ot.emd2(a, b, cost_matrix(cfg, mu, nu), numItermax=10 ** 7))
    bound = moved_mu + moved_nu
    return FmResult(min(max(value, 0.0), 1.0), bound == 0.0, bound, sizes, 'network-simplex')


def fm_distance(cfg: MetricConfig, mu: EmpiricalMeasure, nu: EmpiricalMeasure,
                max_atoms: int = FM_MAX_ATOMS) -> float:
    """Fortet-Mourier distance value; see fm_distance_report"""
    return fm_distance_report(cfg, mu, nu, max_atoms).value


def fm_distance_lp(cfg: MetricConfig, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """
    Fortet-Mourier distance from its dual definition

    Maximizes sum_k f_k (mu_k - nu_k) over f in [0, 1]^K with
    f_k - f_l <= rho_c(x_k, x_l) on the pooled support. Quadratic in the
    number of atoms; intended for small measures.
    """
    _check_pair(mu, nu)
    ys = np.vstack([mu.ys, nu.ys])
    modes = np.concatenate([mu.modes, nu.modes])
    delta = np.concatenate([mu.weights, -nu.weights])
    pooled = EmpiricalMeasure(ys=ys, modes=modes, weights=np.abs(delta), normalized=False)
    rho = cost_matrix(cfg, pooled, pooled, truncate=False)
    size = ys.shape[0]
    rows, bounds = [], []
    for k in range(size):
        for l in range(size):
            if k == l:
                continue
            row = np.zeros(size)
            row[k], row[l] = 1.0, -1.0
            rows.append(row)
            bounds.append(rho[k, l])
    res = linprog(
        -delta,
        A_ub=np.array(rows) if rows else None,
        b_ub=np.array(bounds) if bounds else None,
        bounds=[(0.0, 1.0)] * size,
        method='highs-ds',
        options={'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10},
    )
    if not res.success:
        raise MetricError(f"dual LP failed: {res.message}")
    return float(-res.fun)


def noise_floor(cfg: MetricConfig, mu: EmpiricalMeasure, rng: RngStream) -> float:
    """Distance between two random halves of mu"""
    first, second = mu.split_halves(rng.gen)
    return fm_distance(cfg, first, second)


def fit_rate(cfg: MetricConfig, model: PdmpModel, init: State, mu_star_hat: EmpiricalMeasure,
             n_max: int = DEFAULT_FIT_N_MAX, n_rep: int = DEFAULT_FIT_N_REP,
             rng: Optional[RngStream] = None, workers: Optional[int] = None) -> RateFit:
    """
    Fit d_FM(P^n delta_init, mu_star) <= C beta^n

    Args:
        cfg: Metric configuration
        model: Model to simulate
        init: Starting state
        mu_star_hat: Approximation of the invariant measure
        n_max: Largest n examined (>= 4)
        n_rep: Chains used for each n-step law
        rng: Random stream
        workers: Thread count

    Returns:
        RateFit over the leading run of n with d_n above the noise floor
    """
    if n_max < 4:
        raise MetricError(f"n_max must be >= 4, got {n_max}")
    if rng is None:
        raise MetricError("an explicit random stream is required")
    marginals = chain_marginals(model, init, n_rep, n_max, rng.child(0), workers)
    floor = noise_floor(cfg, mu_star_hat, rng.child(1))
    distances: List[float] = run_parallel(lambda m: fm_distance(cfg, m, mu_star_hat), marginals, workers)
    sweep = tuple((n, d, floor) for n, d in enumerate(distances, start=1))

    used = []
    for n, d, _ in sweep:
        if d > floor and d > 0:
            used.append((n, d))
        else:
            break
    if len(used) < 2:
        raise MetricError("already converged; reduce n or enlarge samples")

    ns = np.array([n for n, _ in used], dtype=float)
    logs = np.log([d for _, d in used])
    slope, intercept = np.polyfit(ns, logs, 1)
    residual = float(np.sqrt(np.mean((logs - (intercept + slope * ns)) ** 2)))
    beta, constant = float(np.exp(slope)), float(np.exp(intercept))
    logger.info(f"Rate fit for {model.name}: beta={beta:.4f}, C={constant:.4g} "
                f"over n={used[0][0]}..{used[-1][0]} (floor {floor:.3g})")
    if not 0 < beta <= 1:
        raise MetricError(f"no geometric decay detected (fitted beta={beta:.4g})")
    return RateFit(beta=beta, C=constant, residual=residual, n_range=(used[0][0], used[-1][0]),
                   c=cfg.c, noise_floor=floor, sweep=sweep)
