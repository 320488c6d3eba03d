"""
Event-driven simulation of the post-jump chain and its interpolation
Exponential inter-jump gaps, exact flows, sampled jump maps and switches
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    DEFAULT_BURN_IN, DEFAULT_THIN, MAX_REJECTION_ATTEMPTS, WORKERS
)
from .model import EmpiricalMeasure, PdmpModel, State
from .rng import RngStream

logger = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """Failure while drawing from the model (optionally tagged with the step index)"""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


def run_parallel(func: Callable, items: Sequence, workers: Optional[int] = None) -> List:
    """
    Map func over items with a thread pool, results in input order

    Every item owns its own random stream, so the result does not depend on
    the number of workers.
    """
    workers = WORKERS if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _pick(weights: np.ndarray, u: float) -> int:
    """Index drawn from unnormalized nonnegative weights with a uniform u"""
    cumulative = np.cumsum(weights)
    total = cumulative[-1]
    if not total > 0:
        raise SimulationError("all selection weights vanish")
    idx = int(np.searchsorted(cumulative, u * total, side='right'))
    return min(idx, len(weights) - 1)


def draw_theta(model: PdmpModel, z: np.ndarray, gen: np.random.Generator,
               max_attempts: int = MAX_REJECTION_ATTEMPTS) -> float:
    """
    Draw theta with density p(., z) against the base measure of Theta

    Finite Theta: categorical. Interval Theta: rejection from the uniform
    proposal against envelope(z) * base_max.
    """
    space = model.theta
    if space.is_finite:
        weights = np.array([model.density(th, z) * w for th, w in zip(space.labels, space.weights)])
        return space.labels[_pick(weights, gen.random())]
    bound = float(model.jumps.envelope(z)) * space.base_max
    for _ in range(max_attempts):
        theta = float(gen.uniform(space.lo, space.hi))
        if gen.random() * bound < model.density(theta, z) * space.base(theta):
            return theta
    raise SimulationError(
        f"rejection sampler exceeded {max_attempts} attempts at y={z.tolist()}; "
        f"the envelope bound {bound:.3g} is too loose (or p vanishes)"
    )


def flow_step(model: PdmpModel, y: np.ndarray, i: int, gen: np.random.Generator) -> Tuple[np.ndarray, float]:
    """Draw dtau ~ Exp(lambda) and flow: one draw of the kernel G"""
    dtau = float(gen.exponential(1.0 / model.lam))
    return model.semiflow(i, dtau, y), dtau


def jump_step(model: PdmpModel, z: np.ndarray, i: int, gen: np.random.Generator) -> Tuple[np.ndarray, int, float]:
    """Draw theta, apply w_theta, then the new mode: one draw of the kernel W"""
    theta = draw_theta(model, z, gen)
    y_new = model.jump(theta, z)
    j = _pick(model.switch_row(i, y_new), gen.random()) + 1
    return y_new, j, theta


def _step(model: PdmpModel, y: np.ndarray, i: int, gen: np.random.Generator):
    z, dtau = flow_step(model, y, i, gen)
    y_new, j, theta = jump_step(model, z, i, gen)
    return y_new, j, dtau, theta


def step_chain(model: PdmpModel, state: State, rng: RngStream) -> Tuple[State, float, float]:
    """
    One transition of the post-jump chain

    Args:
        model: Model to simulate
        state: Current post-jump state (y, i)
        rng: Random stream

    Returns:
        Tuple of (next state, dtau, theta)
    """
    model.validate_state(state)
    y_new, j, dtau, theta = _step(model, state.y, state.mode, rng.gen)
    return State(y_new, j), dtau, theta


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Post-jump chain with jump times

    Index 0 is the initial state: tau[0] = 0, dtau[0] = 0, thetas[0] = nan.
    tau[n] is accumulated as tau[n-1] + dtau[n].
    """
    tau: np.ndarray
    dtau: np.ndarray
    ys: np.ndarray
    modes: np.ndarray
    thetas: np.ndarray
    seed: int
    stream: Tuple[int, ...]

    @property
    def n_steps(self) -> int:
        return int(self.tau.shape[0]) - 1

    def state(self, n: int) -> State:
        return State(self.ys[n], int(self.modes[n]))


def simulate_chain(model: PdmpModel, init: State, n_steps: int, rng: RngStream) -> Trajectory:
    """
    Iterate step_chain n_steps times from init

    Args:
        model: Model to simulate
        init: Initial state
        n_steps: Number of jumps (>= 0)
        rng: Random stream

    Returns:
        Trajectory holding n_steps + 1 states
    """
    if n_steps < 0:
        raise SimulationError(f"n_steps must be >= 0, got {n_steps}")
    model.validate_state(init)
    tau = np.zeros(n_steps + 1)
    dtau = np.zeros(n_steps + 1)
    ys = np.zeros((n_steps + 1, model.dim))
    modes = np.zeros(n_steps + 1, dtype=int)
    thetas = np.full(n_steps + 1, np.nan)
    ys[0], modes[0] = init.y, init.mode
    y, i = init.y, init.mode
    for n in range(1, n_steps + 1):
        try:
            y, i, gap, theta = _step(model, y, i, rng.gen)
        except SimulationError as e:
            raise SimulationError(str(e), step=n) from e
        dtau[n] = gap
        tau[n] = tau[n - 1] + gap
        ys[n], modes[n], thetas[n] = y, i, theta
    return Trajectory(tau=tau, dtau=dtau, ys=ys, modes=modes, thetas=thetas,
                      seed=rng.seed, stream=rng.key)


def interpolate(model: PdmpModel, traj: Trajectory, t: float) -> State:
    """
    Continuous-time state at time t: (S_{xi_n}(t - tau_n, Y_n), xi_n)

    Args:
        model: Model the trajectory was drawn from
        traj: Simulated trajectory
        t: Time in [0, tau_last]

    Returns:
        State at time t
    """
    if t < 0:
        raise SimulationError(f"time must be >= 0, got {t}")
    horizon = float(traj.tau[-1])
    if t > horizon:
        raise SimulationError(
            f"t={t} lies beyond the simulated horizon {horizon}; simulate more steps"
        )
    n = int(np.searchsorted(traj.tau, t, side='right')) - 1
    i = int(traj.modes[n])
    return State(model.flow(i, t - float(traj.tau[n]), traj.ys[n]), i)


def simulate_trajectories(model: PdmpModel, init: State, n_traj: int, n_steps: int,
                          rng: RngStream, workers: Optional[int] = None) -> List[Trajectory]:
    """Independent trajectories, trajectory k drawn from sub-stream k"""
    logger.info(f"Simulating {n_traj} trajectories of {n_steps} steps ({model.name})")
    return run_parallel(lambda k: simulate_chain(model, init, n_steps, rng.child(k)),
                        list(range(n_traj)), workers)


def sample_invariant(model: PdmpModel, init: State, n_traj: int, burn_in: int = DEFAULT_BURN_IN,
                     n_keep: int = 100, thin: int = DEFAULT_THIN, rng: Optional[RngStream] = None,
                     workers: Optional[int] = None) -> EmpiricalMeasure:
    """
    Pooled post-burn-in samples of independent chains

    Args:
        model: Model to simulate
        init: Initial state of every chain
        n_traj: Number of independent chains
        burn_in: Steps discarded per chain
        n_keep: Steps examined after burn-in; every thin-th of them is kept
        thin: Thinning stride
        rng: Random stream (chain k uses sub-stream k)
        workers: Thread count

    Returns:
        Equal-weight EmpiricalMeasure of the kept states
    """
    if burn_in < 0 or n_keep < 1 or thin < 1 or n_traj < 1:
        raise SimulationError("need burn_in >= 0, n_keep >= 1, thin >= 1 and n_traj >= 1")
    if n_keep < thin:
        raise SimulationError(f"n_keep ({n_keep}) must be >= thin ({thin}) or no state is kept")
    if rng is None:
        raise SimulationError("an explicit random stream is required")
    model.validate_state(init)
    total = burn_in + n_keep

    def run(k: int):
        gen = rng.child(k).gen
        y, i = init.y, init.mode
        kept_y, kept_m = [], []
        for n in range(1, total + 1):
            try:
                y, i, _, _ = _step(model, y, i, gen)
            except SimulationError as e:
                raise SimulationError(f"chain {k}: {e}", step=n) from e
            if n > burn_in and (n - burn_in) % thin == 0:
                kept_y.append(y)
                kept_m.append(i)
        return np.array(kept_y).reshape(-1, model.dim), np.array(kept_m, dtype=int)

    logger.info(f"Sampling invariant measure of {model.name}: {n_traj} chains, "
                f"burn-in {burn_in}, keep {n_keep}, thin {thin}")
    parts = run_parallel(run, list(range(n_traj)), workers)
    ys = np.vstack([p[0] for p in parts])
    modes = np.concatenate([p[1] for p in parts])
    return EmpiricalMeasure.from_arrays(ys, modes)


def chain_marginals(model: PdmpModel, init: State, n_rep: int, n_max: int, rng: RngStream,
                    workers: Optional[int] = None) -> List[EmpiricalMeasure]:
    """
    Empirical laws of Phi_1, ..., Phi_{n_max} started at init

    Returns:
        List whose entry n-1 is the law of the n-step chain over n_rep chains
    """
    model.validate_state(init)

    def run(k: int):
        traj = simulate_chain(model, init, n_max, rng.child(k))
        return traj.ys[1:], traj.modes[1:]

    parts = run_parallel(run, list(range(n_rep)), workers)
    ys = np.stack([p[0] for p in parts], axis=1)
    modes = np.stack([p[1] for p in parts], axis=1)
    return [EmpiricalMeasure.from_arrays(ys[n], modes[n]) for n in range(n_max)]


def sample_continuous_time(model: PdmpModel, init: State, t: float, n_traj: int, rng: RngStream,
                           workers: Optional[int] = None) -> EmpiricalMeasure:
    """
    Empirical law of Phi(t) started at init (the continuous-time semigroup)

    Each chain is run until its next jump would fall after t and the last
    post-jump state is flowed up to t.
    """
    if t < 0:
        raise SimulationError(f"time must be >= 0, got {t}")
    model.validate_state(init)

    def run(k: int):
        gen = rng.child(k).gen
        y, i, clock = init.y, init.mode, 0.0
        while True:
            z, gap = flow_step(model, y, i, gen)
            if clock + gap > t:
                return model.flow(i, t - clock, y), i
            y, i, _ = jump_step(model, z, i, gen)
            clock += gap

    parts = run_parallel(run, list(range(n_traj)), workers)
    return EmpiricalMeasure.from_arrays(np.vstack([p[0] for p in parts]), [p[1] for p in parts])
