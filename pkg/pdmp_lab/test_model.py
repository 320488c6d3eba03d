#!/usr/bin/env python3
"""
Tests for model descriptions
Built-in models, semiflow invariants, Theta spaces and empirical measures
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

from pdmp_lab.model import (
    MODEL_DEFAULTS, MODEL_REGISTRY, EmpiricalMeasure, ModelError, State, ThetaSpace,
    builtin_model, flow, validate_model
)

coords = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
times = st.floats(min_value=0.0, max_value=5.0, allow_nan=False)


def test_registry_builds_every_model():
    """Every registered model builds with its defaults"""
    for name in MODEL_REGISTRY:
        model = builtin_model(name)
        assert model.name == name
        assert model.builtin
        assert set(MODEL_DEFAULTS[name]) <= set(model.params)


def test_unknown_model_and_parameter():
    """Unknown names and parameters are rejected"""
    with pytest.raises(ModelError, match='unknown model'):
        builtin_model('no-such-model')
    with pytest.raises(ModelError, match="unknown parameter 'beta'"):
        builtin_model('dirac-trap', {'beta': 1.0})


def test_parameter_aliases_and_lambda():
    """Greek aliases map onto parameter names; lambda must be positive"""
    model = builtin_model('contracting-lines', {'λ': 2.0, 'α': -0.5})
    assert model.lam == 2.0
    assert model.params['alpha'] == -0.5
    with pytest.raises(ModelError, match='lambda must be > 0'):
        builtin_model('dirac-trap', {'lambda': -1.0})


def test_contracting_lines_rejects_bad_parameters():
    """Non-contracting flow, degenerate scale and bad Theta kinds fail"""
    with pytest.raises(ModelError):
        builtin_model('contracting-lines', {'alpha': 0.5})
    with pytest.raises(ModelError):
        builtin_model('contracting-lines', {'scale': 1.5})
    with pytest.raises(ModelError):
        builtin_model('contracting-lines', {'kappa': 1.0})
    with pytest.raises(ModelError):
        builtin_model('contracting-lines', {'theta': 'grid'})


@given(y=coords, t=times)
def test_contracting_lines_flow_closed_form(y, t):
    """S_1 contracts to 0 and S_2 to a"""
    model = builtin_model('contracting-lines')
    assert flow(model, 1, t, [y])[0] == pytest.approx(math.exp(-t) * y, abs=1e-12)
    assert flow(model, 2, t, [y])[0] == pytest.approx(math.exp(-t) * (y - 2.0) + 2.0, abs=1e-12)


@given(u=coords, v=coords, t=times)
def test_contracting_lines_lipschitz_in_space(u, v, t):
    """|S_i(t,u) - S_i(t,v)| = e^{alpha t} |u - v|"""
    model = builtin_model('contracting-lines')
    for i in model.modes:
        gap = abs(model.flow(i, t, [u])[0] - model.flow(i, t, [v])[0])
        assert gap == pytest.approx(math.exp(-t) * abs(u - v), rel=1e-9, abs=1e-12)


@given(x=coords, y=coords, s=times, t=times, name=st.sampled_from(sorted(MODEL_REGISTRY)))
def test_semiflow_identity_and_semigroup(x, y, s, t, name):
    """S_i(0, y) = y and S_i(s + t, y) = S_i(t, S_i(s, y))"""
    model = builtin_model(name)
    point = np.array([x, y][:model.dim])
    for i in model.modes:
        assert np.allclose(model.flow(i, 0.0, point), point, atol=1e-12)
        direct = model.flow(i, s + t, point)
        composed = model.flow(i, t, model.flow(i, s, point))
        assert np.allclose(direct, composed, atol=1e-9)


def test_flow_rejects_negative_time_and_bad_mode(lines):
    with pytest.raises(ModelError):
        lines.flow(1, -0.1, [0.0])
    with pytest.raises(ModelError):
        lines.flow(3, 0.1, [0.0])
    with pytest.raises(ModelError):
        lines.flow(1, 0.1, [0.0, 1.0])


@pytest.mark.parametrize('params', [{}, {'theta': 'interval', 'kappa': 0.5}, {'kappa': -0.3}])
def test_validate_model_contracting_lines(params):
    """Sampled invariants hold for the tilted and interval variants"""
    model = builtin_model('contracting-lines', params)
    findings = validate_model(model, 200, np.random.default_rng(3))
    assert all(f['ok'] for f in findings), findings


def test_validate_model_rotor_and_dirac(rotor, dirac):
    for model in (rotor, dirac):
        findings = validate_model(model, 100, np.random.default_rng(5))
        assert {f['name'] for f in findings} == {'identity', 'semigroup', 'normalization',
                                                 'row_sums', 'jumps_in_space'}
        assert all(f['ok'] for f in findings)


def test_theta_space_finite_and_interval():
    finite = ThetaSpace.finite([-1.0, 1.0])
    assert finite.is_finite
    assert finite.contains(1.0) and not finite.contains(0.0)
    assert finite.integrate(lambda th: 0.5) == pytest.approx(1.0)

    interval = ThetaSpace.interval(-1.0, 1.0)
    assert interval.integrate(lambda th: th ** 2) == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert interval.is_interior(0.3) and not interval.is_interior(1.0)
    assert all(-1.0 < th < 1.0 for th in interval.grid(5))

    with pytest.raises(ModelError):
        ThetaSpace.finite([])
    with pytest.raises(ModelError):
        ThetaSpace.interval(1.0, 1.0)


def test_tilted_density_normalized():
    """The tilted density integrates to one on [-1, 1] for every position"""
    model = builtin_model('contracting-lines', {'theta': 'interval', 'kappa': 0.8})
    for y in (-3.0, 0.0, 2.5):
        total = model.theta.integrate(lambda th: model.density(th, np.array([y])))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_state_validation(lines):
    with pytest.raises(ModelError):
        State([float('nan')], 1)
    state = lines.make_state([1.0], 2)
    assert state == State([1.0], 2)
    assert state != State([1.0], 1)
    with pytest.raises(ModelError):
        lines.make_state([1.0], 0)


def test_empirical_measure_construction():
    mu = EmpiricalMeasure.from_arrays([[0.0], [1.0], [1.0]], [1, 2, 2])
    assert mu.size == 3 and mu.dim == 1
    assert mu.weights.sum() == pytest.approx(1.0)
    assert mu.mean()[0] == pytest.approx(2.0 / 3.0)

    merged = mu.merged_duplicates()
    assert merged.size == 2
    assert sorted(merged.weights.tolist()) == pytest.approx([1.0 / 3.0, 2.0 / 3.0])

    with pytest.raises(ModelError):
        EmpiricalMeasure(ys=[[0.0]], modes=[1], weights=[0.5])
    with pytest.raises(ModelError):
        EmpiricalMeasure(ys=[[0.0]], modes=[1], weights=[-1.0], normalized=False)


def test_empirical_measure_merge_coarsen_split():
    first = EmpiricalMeasure.dirac(State([0.0], 1), copies=3)
    second = EmpiricalMeasure.from_states([State([1.0], 2)])
    pooled = EmpiricalMeasure.merge([first, second])
    assert pooled.size == 4
    assert np.allclose(pooled.weights, 0.25)

    big = EmpiricalMeasure.from_arrays(np.arange(100.0), np.ones(100))
    coarse, moved = big.coarsened(10)
    assert coarse.size <= 10
    assert coarse.weights.sum() == pytest.approx(1.0)
    assert coarse.mean() == pytest.approx(big.mean())
    assert 0.0 < moved <= 1.0
    assert big.coarsened(200)[0] is big

    a, b = big.split_halves(np.random.default_rng(0))
    assert a.size == b.size == 50
    assert not set(a.ys[:, 0]) & set(b.ys[:, 0])
    assert a.weights.sum() == pytest.approx(1.0)


def main():
    """Run the test module with pytest"""
    return pytest.main([__file__, '-q'])


if __name__ == '__main__':
    sys.exit(main())
