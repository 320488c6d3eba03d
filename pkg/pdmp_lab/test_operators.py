#!/usr/bin/env python3
"""
Tests for the Markov operators and the n-step path maps
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from pdmp_lab.metrics import MetricError
from pdmp_lab.model import EmpiricalMeasure, ModelError, State, builtin_model
from pdmp_lab.operators import (
    PathSpec, check_correspondence, compose_Wn, nstep_histogram, pushforward, pushforward_n,
    sample_G, sample_P, sample_W, two_sample_factorization, weight_P_n, weight_Pi_n, weight_T_n
)
from pdmp_lab.rng import RngStream


def test_path_spec_validation(lines):
    with pytest.raises(ModelError):
        PathSpec((), (), ())
    with pytest.raises(ModelError):
        PathSpec((1, 2), (0.1,), (1.0, 1.0))
    with pytest.raises(ModelError):
        PathSpec((1,), (-0.1,), (1.0,))
    with pytest.raises(ModelError):
        PathSpec((3,), (0.1,), (1.0,)).validate(lines)
    with pytest.raises(ModelError):
        PathSpec((1,), (0.1,), (0.5,)).validate(lines)
    path = PathSpec([1, 2], [0.1, 0.2], [1, -1])
    assert path.n == 2
    assert path.with_times([0.3, 0.4]).times == (0.3, 0.4)


def test_compose_Wn_contracting_lines_closed_form(lines):
    """One step from 1.5 in mode 1: w_1(e^{-t} 1.5) = (e^{-t} 1.5 + 1) / 2"""
    path = PathSpec((1,), (0.1,), (1.0,))
    assert compose_Wn(lines, [1.5], path)[0] == pytest.approx(0.5 * math.exp(-0.1) * 1.5 + 0.5, rel=1e-15)


def test_compose_Wn_two_steps_with_zero_dwell(lines):
    """Immediate jump then a mode-2 dwell approaches w_1(2) = 1.5"""
    path = PathSpec((1, 2), (0.0, 30.0), (1.0, 1.0))
    assert compose_Wn(lines, [0.0], path)[0] == pytest.approx(1.5, abs=1e-12)


def test_path_weights_contracting_lines(lines):
    path = PathSpec((1,), (0.4,), (1.0,))
    assert weight_P_n(lines, [1.5], path) == pytest.approx(0.5)
    for j in lines.modes:
        assert weight_Pi_n(lines, [1.5], path, j) == pytest.approx(0.5)
    assert weight_T_n(lines, [1.5], path, 1) == pytest.approx(math.exp(-0.4) * 0.25)
    with pytest.raises(ModelError):
        weight_Pi_n(lines, [1.5], path, 3)


@given(
    y=st.floats(min_value=-3.0, max_value=3.0),
    modes=st.lists(st.sampled_from([1, 2]), min_size=1, max_size=4),
    data=st.data(),
)
def test_weight_T_factorizes(y, modes, data):
    """T_n / (lambda^n e^{-lambda sum t}) = P_n Pi_n"""
    model = builtin_model('contracting-lines', {'kappa': 0.4, 'lambda': 1.7})
    n = len(modes)
    times = data.draw(st.lists(st.floats(min_value=0.0, max_value=3.0), min_size=n, max_size=n))
    thetas = data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=n, max_size=n))
    path = PathSpec(tuple(modes), tuple(times), tuple(thetas))
    factor = model.lam ** n * math.exp(-model.lam * sum(times))
    for j in model.modes:
        product = weight_P_n(model, [y], path) * weight_Pi_n(model, [y], path, j)
        assert weight_T_n(model, [y], path, j) / factor == pytest.approx(product, rel=1e-12, abs=1e-15)


def test_pushforward_keeps_weights(lines):
    mu = EmpiricalMeasure.from_arrays([[0.0], [1.0], [2.0]], [1, 2, 1], [0.2, 0.3, 0.5])
    image = pushforward('P', lines, mu, RngStream(3))
    assert np.array_equal(image.weights, mu.weights)
    assert image.size == 3
    moved = pushforward('G', lines, mu, RngStream(3))
    assert np.array_equal(moved.modes, mu.modes)
    with pytest.raises(ModelError):
        pushforward('Q', lines, mu, RngStream(3))
    unnormalized = EmpiricalMeasure(ys=[[0.0]], modes=[1], weights=[2.0], normalized=False)
    with pytest.raises(MetricError):
        pushforward('P', lines, unnormalized, RngStream(3))


def test_pushforward_n_and_workers(lines):
    mu = EmpiricalMeasure.from_arrays(np.linspace(-1.0, 2.0, 20), [1] * 20)
    serial = pushforward_n('P', lines, mu, 3, RngStream(6), workers=1)
    threaded = pushforward_n('P', lines, mu, 3, RngStream(6), workers=4)
    assert np.array_equal(serial.ys, threaded.ys)
    assert np.array_equal(serial.modes, threaded.modes)


def test_single_draw_kernels(dirac, lines):
    """G keeps the mode, W of the Dirac trap keeps the position"""
    x = State([0.7], 1)
    g = sample_G(dirac, x, RngStream(1))
    assert g.mode == 1 and 0.0 < g.y[0] < 0.7
    w = sample_W(dirac, x, RngStream(1))
    assert w == x
    jumped = sample_W(lines, State([1.0], 2), RngStream(2))
    assert jumped.y[0] in (0.0, 1.0)
    p = sample_P(dirac, x, RngStream(4))
    assert p.mode == 1 and 0.0 < p.y[0] < 0.7


def test_correspondence_dirac_trap(dirac):
    mu_hat = EmpiricalMeasure.dirac(State([0.0], 1), copies=50)
    result = check_correspondence(dirac, mu_hat, RngStream(4))
    assert result['d_WG'] < 1e-12
    assert result['n_atoms'] == 50
    with pytest.raises(MetricError):
        check_correspondence(dirac, EmpiricalMeasure.dirac(State([0.0], 1), copies=5), RngStream(4))


def test_correspondence_contracting_lines(lines):
    """W G mu_star = mu_star up to sampling noise"""
    from pdmp_lab.simulate import sample_invariant
    mu_hat = sample_invariant(lines, State([0.0], 1), 400, burn_in=60, n_keep=5, rng=RngStream(17))
    result = check_correspondence(lines, mu_hat, RngStream(18), n_boot=3)
    assert result['d_WG'] <= 3.0 * result['d_null']


def test_two_sample_factorization(lines):
    result = two_sample_factorization(lines, State([0.3], 2), 2000, RngStream(31))
    assert result['n'] == 2000
    assert result['d'] <= 3.0 * result['d_null']


def test_nstep_histogram_one_step(lines):
    """From (1, mode 1): w = (e^{-t} +- 1) / 2, each quarter-interval holds 1/8 per terminal mode"""
    edges = [-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0]
    masses = nstep_histogram(lines, [1.0], 1, 1, edges, 8000, RngStream(2))
    assert masses.shape == (2, 6)
    expected = np.array([0.125, 0.125, 0.0, 0.0, 0.125, 0.125])
    for j in range(2):
        assert np.allclose(masses[j], expected, atol=0.02)


def test_nstep_histogram_conserves_mass(lines):
    masses = nstep_histogram(lines, [0.5], 2, 2, [-5.0, 0.0, 5.0], 300, RngStream(3))
    assert masses.sum() == pytest.approx(1.0, abs=1e-12)
    interval = builtin_model('contracting-lines', {'theta': 'interval'})
    with pytest.raises(ModelError):
        nstep_histogram(interval, [0.5], 1, 1, [0.0, 1.0], 10, RngStream(3))


def test_sample_P_dirac_trap_mean():
    """E[exp(-T)] = lambda / (lambda + 1) = 1/2 for T ~ Exp(1)"""
    model = builtin_model('dirac-trap')
    rng = RngStream(41)
    draws = np.array([sample_P(model, State([1.0], 1), rng).y[0] for _ in range(100000)])
    assert draws.mean() == pytest.approx(0.5, abs=0.005)


def test_sample_W_contracting_lines_from_origin(lines):
    """w_theta(0) = theta / 2 with p = 1/2 for each label"""
    rng = RngStream(42)
    draws = np.array([sample_W(lines, State([0.0], 1), rng).y[0] for _ in range(100000)])
    assert set(np.unique(draws)) == {-0.5, 0.5}
    assert np.mean(draws == 0.5) == pytest.approx(0.5, abs=0.01)


def test_pushforward_P_fixes_the_dirac_trap_point_mass(dirac):
    mu = EmpiricalMeasure.dirac(State([0.0], 1), copies=20)
    image = pushforward('P', dirac, mu, RngStream(43))
    assert np.array_equal(image.ys, mu.ys)
    assert np.array_equal(image.modes, mu.modes)
    assert np.array_equal(image.weights, mu.weights)


def test_compose_Wn_dirac_trap_three_unit_steps(dirac):
    path = PathSpec((1, 1, 1), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0))
    assert compose_Wn(dirac, [2.0], path)[0] == pytest.approx(2.0 * math.exp(-3.0), rel=1e-14)


def test_two_step_samples_match_the_nstep_formula(lines):
    """Histogram of two iterated sample_P draws against the enumerated path integral"""
    edges = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    start = State([0.5], 1)
    rng = RngStream(44)
    counts = np.zeros((2, len(edges) - 1))
    n_samples = 50000
    for _ in range(n_samples):
        x = sample_P(lines, sample_P(lines, start, rng), rng)
        counts[x.mode - 1] += np.histogram(x.y, bins=edges)[0]
    empirical = counts / n_samples
    masses = nstep_histogram(lines, start.y, start.mode, 2, edges, 6000, RngStream(45))
    assert empirical.sum() == pytest.approx(1.0)
    assert np.abs(empirical - masses).sum() < 0.05


def main():
    """Run the test module with pytest"""
    return pytest.main([__file__, '-q'])


if __name__ == '__main__':
    sys.exit(main())
