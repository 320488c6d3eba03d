"""
Markov operators P, G, W and the n-step composition maps
One-draw samplers, empirical push-forwards, path weights and the
invariant-measure correspondence check
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_N_BOOT, MIN_CORRESPONDENCE_ATOMS
from .metrics import MetricConfig, MetricError, fm_distance, fm_distance_report
from .model import EmpiricalMeasure, ModelError, PdmpModel, State
from .rng import RngStream
from .simulate import flow_step, jump_step, run_parallel, step_chain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathSpec:
    """
    A deterministic jump path: modes (j_0, ..., j_{n-1}), times, thetas

    Step k flows with S_{j_{k-1}} for t_k and then applies w_{theta_k}.
    """
    modes: Tuple[int, ...]
    times: Tuple[float, ...]
    thetas: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'modes', tuple(int(j) for j in self.modes))
        object.__setattr__(self, 'times', tuple(float(t) for t in self.times))
        object.__setattr__(self, 'thetas', tuple(float(th) for th in self.thetas))
        if len(self.modes) < 1:
            raise ModelError("a path needs at least one step")
        if not len(self.modes) == len(self.times) == len(self.thetas):
            raise ModelError("path modes, times and thetas must have the same length")
        if any(t < 0 for t in self.times):
            raise ModelError(f"path times must be >= 0, got {self.times}")

    @property
    def n(self) -> int:
        return len(self.modes)

    def validate(self, model: PdmpModel):
        for j in self.modes:
            model.check_mode(j)
        for theta in self.thetas:
            if not model.theta.contains(theta):
                raise ModelError(f"theta {theta} is not in Theta")

    def with_times(self, times: Sequence[float]) -> 'PathSpec':
        return PathSpec(self.modes, tuple(times), self.thetas)


# ---------------------------------------------------------------------------
# One-draw samplers
# ---------------------------------------------------------------------------

def sample_P(model: PdmpModel, x: State, rng: RngStream) -> State:
    """One draw from P(x, .): flow for an Exp(lambda) time, jump, switch"""
    return step_chain(model, x, rng)[0]


def sample_G(model: PdmpModel, x: State, rng: RngStream) -> State:
    """One draw from G(x, .): flow for an Exp(lambda) time, mode unchanged"""
    model.validate_state(x)
    z, _ = flow_step(model, x.y, x.mode, rng.gen)
    return State(z, x.mode)


def sample_W(model: PdmpModel, x: State, rng: RngStream) -> State:
    """One draw from W(x, .): jump at the current position and switch"""
    model.validate_state(x)
    y_new, j, _ = jump_step(model, x.y, x.mode, rng.gen)
    return State(y_new, j)


OPERATORS: Dict[str, Callable[[PdmpModel, State, RngStream], State]] = {
    'P': sample_P,
    'G': sample_G,
    'W': sample_W,
}


def pushforward(op: str, model: PdmpModel, mu: EmpiricalMeasure, rng: RngStream,
                workers: Optional[int] = None) -> EmpiricalMeasure:
    """
    Empirical push-forward: one draw of the operator per atom, weights kept

    Args:
        op: 'P', 'G' or 'W'
        model: Model defining the kernels
        mu: Normalized empirical measure
        rng: Random stream (atom k uses sub-stream k)
        workers: Thread count

    Returns:
        EmpiricalMeasure with the same weights as mu
    """
    if op not in OPERATORS:
        raise ModelError(f"unknown operator '{op}'; expected one of {', '.join(OPERATORS)}")
    if not mu.normalized:
        raise MetricError("push-forward needs a normalized measure")
    sampler = OPERATORS[op]

    def draw(k: int) -> State:
        return sampler(model, mu.state(k), rng.child(k))

    images = run_parallel(draw, list(range(mu.size)), workers)
    ys = np.vstack([s.y for s in images]) if images else np.zeros((0, mu.dim))
    return EmpiricalMeasure(ys=ys, modes=[s.mode for s in images], weights=mu.weights)


def pushforward_n(op: str, model: PdmpModel, mu: EmpiricalMeasure, n: int, rng: RngStream,
                  workers: Optional[int] = None) -> EmpiricalMeasure:
    """Apply pushforward n times, round r drawing from sub-stream r"""
    for r in range(n):
        mu = pushforward(op, model, mu, rng.child(r), workers)
    return mu


def check_correspondence(model: PdmpModel, mu_hat: EmpiricalMeasure, rng: RngStream,
                         c: float = 1.0, n_boot: int = DEFAULT_N_BOOT,
                         workers: Optional[int] = None) -> Dict[str, float]:
    """
    Compare W G mu_hat with mu_hat against a bootstrap noise scale

    Args:
        model: Model defining G and W
        mu_hat: Approximation of the invariant measure of P
        rng: Random stream
        c: Mode-mismatch penalty of the metric
        n_boot: Number of random half splits averaged into d_null

    Returns:
        Dict with d_WG, d_null and the sizes used
    """
    if mu_hat.size < MIN_CORRESPONDENCE_ATOMS:
        raise MetricError(f"need at least {MIN_CORRESPONDENCE_ATOMS} atoms, got {mu_hat.size}")
    cfg = MetricConfig(c=c)
    nu_hat = pushforward('G', model, mu_hat, rng.child(0), workers)
    back = pushforward('W', model, nu_hat, rng.child(1), workers)
    wg = fm_distance_report(cfg, back, mu_hat)
    d_wg = wg.value
    nulls = []
    for b in range(max(1, n_boot)):
        first, second = mu_hat.split_halves(rng.child(2 + b).gen)
        nulls.append(fm_distance(cfg, first, second))
    d_null = float(np.mean(nulls))
    logger.info(f"Correspondence check ({model.name}): d_WG={d_wg:.4g}, d_null={d_null:.4g}")
    return {'d_WG': d_wg, 'd_WG_exact': wg.exact, 'd_WG_error_bound': wg.error_bound,
            'd_null': d_null, 'n_atoms': mu_hat.size, 'n_boot': max(1, n_boot), 'c': c}


def two_sample_factorization(model: PdmpModel, x: State, n: int, rng: RngStream,
                             cfg: Optional[MetricConfig] = None,
                             workers: Optional[int] = None) -> Dict[str, float]:
    """
    Distance between n draws of P(x, .) and n draws of W(G(x, .), .)

    d_null is the distance between two halves of the P-sample.
    """
    cfg = cfg or MetricConfig()
    p_stream, g_stream, w_stream = rng.child(0), rng.child(1), rng.child(2)
    p_draws = run_parallel(lambda k: sample_P(model, x, p_stream.child(k)), list(range(n)), workers)
    wg_draws = run_parallel(
        lambda k: sample_W(model, sample_G(model, x, g_stream.child(k)), w_stream.child(k)),
        list(range(n)), workers)
    p_measure = EmpiricalMeasure.from_states(p_draws)
    wg_measure = EmpiricalMeasure.from_states(wg_draws)
    d = fm_distance(cfg, p_measure, wg_measure)
    first, second = p_measure.split_halves(rng.child(3).gen)
    d_null = fm_distance(cfg, first, second)
    return {'d': d, 'd_null': d_null, 'n': n}


# ---------------------------------------------------------------------------
# Deterministic path maps
# ---------------------------------------------------------------------------

def _walk(model: PdmpModel, y, path: PathSpec):
    """Pre-jump points z_k = S_{j_{k-1}}(t_k, W_{k-1}) and post-jump points W_k"""
    path.validate(model)
    w = np.array(y, dtype=float).reshape(-1)
    for k in range(path.n):
        z = model.flow(path.modes[k], path.times[k], w)
        w = model.jump(path.thetas[k], z)
        yield z, w


def compose_Wn(model: PdmpModel, y, path: PathSpec) -> np.ndarray:
    """W_n(y, j, t, theta): n flow-then-jump steps along the path"""
    w = np.array(y, dtype=float).reshape(-1)
    for _, w in _walk(model, y, path):
        pass
    return w


def weight_Pi_n(model: PdmpModel, y, path: PathSpec, j_final: int) -> float:
    """Product of switching probabilities pi_{j_{k-1} j_k}(W_k), j_n = j_final"""
    model.check_mode(j_final)
    targets = path.modes[1:] + (int(j_final),)
    weight = 1.0
    for k, (_, w) in enumerate(_walk(model, y, path)):
        weight *= float(model.switch.pi(path.modes[k], targets[k], w))
    return weight


def weight_P_n(model: PdmpModel, y, path: PathSpec) -> float:
    """Product of jump densities p_{theta_k}(z_k) along the path"""
    weight = 1.0
    for k, (z, _) in enumerate(_walk(model, y, path)):
        weight *= model.density(path.thetas[k], z)
    return weight


def weight_T_n(model: PdmpModel, y, path: PathSpec, j_final: int) -> float:
    """lambda^n exp(-lambda sum t) P_n Pi_n"""
    lam = model.lam
    time_factor = lam ** path.n * np.exp(-lam * sum(path.times))
    return float(time_factor * weight_P_n(model, y, path) * weight_Pi_n(model, y, path, j_final))


def nstep_histogram(model: PdmpModel, y, i: int, n: int, edges: Sequence[float], n_t: int,
                    rng: RngStream, axis: int = 0) -> np.ndarray:
    """
    Histogram masses of P^n((y, i), .) from the n-step integral formula

    Enumerates every mode path and theta path (finite Theta only) and
    integrates the time variables by Monte Carlo with t ~ Exp(lambda), so the
    lambda^n exp(-lambda sum t) factor becomes the sampling density.

    Returns:
        Array of shape (n_modes, len(edges) - 1): mass per terminal mode and bin
    """
    if not model.theta.is_finite:
        raise ModelError("the n-step histogram needs a finite Theta")
    model.check_mode(i)
    edges = np.asarray(edges, dtype=float)
    masses = np.zeros((model.n_modes, len(edges) - 1))
    times = rng.gen.exponential(1.0 / model.lam, size=(n_t, n))
    labels = list(zip(model.theta.labels, model.theta.weights))
    for inner in itertools.product(model.modes, repeat=n - 1):
        modes = (int(i),) + tuple(inner)
        for chosen in itertools.product(labels, repeat=n):
            thetas = tuple(th for th, _ in chosen)
            base = float(np.prod([w for _, w in chosen]))
            for t_vec in times:
                path = PathSpec(modes, tuple(t_vec), thetas)
                w = compose_Wn(model, y, path)
                b = int(np.searchsorted(edges, w[axis], side='right')) - 1
                if not 0 <= b < masses.shape[1]:
                    continue
                p_weight = weight_P_n(model, y, path) * base
                for j in model.modes:
                    masses[j - 1, b] += p_weight * weight_Pi_n(model, y, path, j)
    return masses / n_t
