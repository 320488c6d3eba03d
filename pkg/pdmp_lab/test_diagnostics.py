#!/usr/bin/env python3
"""
Tests for the numerical diagnostics
Rank and positivity probes, anchors, accessibility, small sets,
hypothesis falsification, atom detection and the certificate
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from pdmp_lab.diagnostics import (
    AccessibilitySearch, CheckResult, DiagnosticsError, DiagnosticsReport, HypothesisConstants,
    RankProbe, certify_absolute_continuity, check_hypotheses, check_positivity, check_rank, check_witness,
    classify_continuity, estimate_small_set, jacobian_t_Wn, jacobian_theta_Wn, probe_accessibility,
    suggest_anchors
)
from pdmp_lab.model import EmpiricalMeasure, State, builtin_model
from pdmp_lab.operators import PathSpec, weight_P_n, weight_Pi_n
from pdmp_lab.rng import RngStream

FAST_SEARCH = AccessibilitySearch(n_max=3, seeds=8, sweeps=40)


def lines_probe(**kwargs):
    return RankProbe(np.array([1.5]), 1, PathSpec((1,), (0.1,), (1.0,)), **kwargs)


def test_report_types():
    with pytest.raises(DiagnosticsError):
        CheckResult(name='x', verdict='maybe', evidence={'v': 1})
    with pytest.raises(DiagnosticsError):
        CheckResult(name='x', verdict='pass', evidence={})
    report = DiagnosticsReport(model='m')
    assert report.verdict == 'inconclusive'
    report.add(CheckResult(name='a', verdict='pass', evidence={'v': 1.0}))
    assert report.verdict == 'pass'
    report.add(CheckResult(name='b', verdict='inconclusive', evidence={'v': np.float64(2.0)}))
    assert report.verdict == 'inconclusive'
    report.add(CheckResult(name='c', verdict='fail', evidence={'v': math.inf}))
    assert report.verdict == 'fail' and report.failed
    data = json.loads(report.to_json())
    assert [c['name'] for c in data['checks']] == ['a', 'b', 'c']
    assert report.get('b').evidence['v'] == 2.0


def test_rank_probe_validation(lines):
    with pytest.raises(DiagnosticsError, match='n >= d'):
        RankProbe(np.zeros(2), 1, PathSpec((1,), (0.1,), (1.0,)))
    with pytest.raises(DiagnosticsError, match='times must be > 0'):
        RankProbe(np.zeros(1), 1, PathSpec((1,), (0.0,), (1.0,)))
    with pytest.raises(DiagnosticsError, match='must start in mode'):
        RankProbe(np.zeros(1), 1, PathSpec((2,), (0.1,), (1.0,)))
    interval = builtin_model('contracting-lines', {'theta': 'interval'})
    with pytest.raises(DiagnosticsError, match='interior'):
        RankProbe(np.zeros(1), 1, PathSpec((1,), (0.1,), (1.0,))).validate(interval)


def test_jacobian_contracting_lines_closed_form(lines):
    """d/dt w_1(S_1(t, 1.5)) = alpha e^{alpha t} 1.5 * 1/2"""
    expected = -math.exp(-0.1) * 1.5 * 0.5
    analytic = jacobian_t_Wn(lines, lines_probe(), method='analytic')
    fd = jacobian_t_Wn(lines, lines_probe(), method='fd')
    assert analytic.shape == (1, 1)
    assert analytic[0, 0] == pytest.approx(expected, rel=1e-12)
    assert fd[0, 0] == pytest.approx(expected, rel=1e-6)


def test_jacobian_fd_matches_analytic_on_random_probes(rotor):
    gen = np.random.default_rng(7)
    for _ in range(10):
        n = int(gen.integers(2, 5))
        modes = (1,) + tuple(int(m) for m in gen.integers(1, 3, size=n - 1))
        probe = RankProbe(gen.uniform(-2, 2, size=2), 1,
                          PathSpec(modes, tuple(gen.uniform(0.1, 1.5, size=n)),
                                   tuple(float(t) for t in gen.choice([-1.0, 1.0], size=n))))
        analytic = jacobian_t_Wn(rotor, probe, method='analytic')
        fd = jacobian_t_Wn(rotor, probe, method='fd')
        scale = max(1.0, float(np.abs(analytic).max()))
        assert np.allclose(fd, analytic, atol=1e-6 * scale)


def test_fd_step_shrinks_near_zero_time(lines, caplog):
    probe = RankProbe(np.array([1.5]), 1, PathSpec((1,), (1e-7,), (1.0,)))
    jac = jacobian_t_Wn(lines, probe, method='fd')
    assert jac[0, 0] == pytest.approx(-1.5 * 0.5, rel=1e-4)
    assert 'shrunk' in caplog.text


def test_jacobian_theta_interval(lines):
    model = builtin_model('contracting-lines', {'theta': 'interval'})
    path = PathSpec((1, 2), (0.3, 0.4), (0.2, -0.5))
    jac = jacobian_theta_Wn(model, [0.7], path)
    # d/dtheta_2 = 1 - s, d/dtheta_1 = (1 - s) * e^{-0.4} * s
    assert jac[0, 1] == pytest.approx(0.5)
    assert jac[0, 0] == pytest.approx(0.5 * math.exp(-0.4) * 0.5)
    with pytest.raises(DiagnosticsError):
        jacobian_theta_Wn(lines, [0.7], PathSpec((1,), (0.3,), (1.0,)))


def test_check_rank_passes_on_contracting_lines(lines):
    result = check_rank(lines, lines_probe())
    assert result.passed
    assert result.evidence['rank'] == 1
    assert result.evidence['jacobian'][0][0] == pytest.approx(-0.67856, abs=1e-5)


def test_check_rank_fails_at_dirac_fixed_point(dirac):
    probe = RankProbe(np.array([0.0]), 1, PathSpec((1,), (0.5,), (1.0,)))
    result = check_rank(dirac, probe)
    assert result.verdict == 'fail'
    assert result.evidence['rank'] == 0


def test_check_rank_planar_rotor(rotor):
    probe = RankProbe(np.zeros(2), 1, PathSpec((1, 2), (0.5, 0.5), (1.0, 1.0)))
    result = check_rank(rotor, probe)
    assert result.passed and result.evidence['rank'] == 2


def test_rank_never_drops_when_steps_are_appended(rotor):
    gen = np.random.default_rng(11)
    for _ in range(10):
        modes = (1,) + tuple(int(m) for m in gen.integers(1, 3, size=2))
        times = tuple(gen.uniform(0.1, 1.0, size=3))
        thetas = (1.0, -1.0, 1.0)
        y = gen.uniform(-1, 1, size=2)
        short = check_rank(rotor, RankProbe(y, 1, PathSpec(modes[:2], times[:2], thetas[:2])))
        long = check_rank(rotor, RankProbe(y, 1, PathSpec(modes, times, thetas)))
        assert long.evidence['rank'] >= short.evidence['rank'] or short.evidence['rank'] == 2


def test_check_positivity(lines):
    result = check_positivity(lines, lines_probe())
    assert result.passed
    assert result.evidence['min_over_j'] == pytest.approx(0.25)
    probe = lines_probe()
    for j, value in result.evidence['per_terminal_mode'].items():
        product = weight_P_n(lines, probe.y_hat, probe.path) * weight_Pi_n(lines, probe.y_hat, probe.path, j)
        assert abs(value - product) <= 1e-15


def test_check_positivity_fails_without_switching():
    broken = builtin_model('contracting-lines', {'pi12': 0.0, 'pi21': 0.0})
    result = check_positivity(broken, lines_probe())
    assert result.verdict == 'fail'
    assert result.evidence['min_over_j'] == 0.0


def test_suggest_anchors_contracting_lines(lines):
    anchors = suggest_anchors(lines)
    assert any(abs(a.y_hat[0] - 1.5) < 1e-9 and a.mode == 1 and a.provenance == 'flow-equilibrium'
               for a in anchors)
    fixed = [a for a in anchors if a.provenance == 'contraction-fixed-point']
    assert {round(a.y_hat[0], 9) for a in fixed} == {-1.0, 1.0}
    assert all(a.contraction == pytest.approx(0.5) for a in fixed)


def test_suggest_anchors_dirac_trap(dirac):
    anchors = suggest_anchors(dirac)
    assert any(a.y_hat == (0.0,) and a.mode == 1 for a in anchors)
    assert all(a.provenance == 'flow-equilibrium' for a in anchors)


def test_accessibility_dirac_trap(dirac):
    result = probe_accessibility(dirac, [0.0], 1, 1e-3, [State([1.0], 1)], FAST_SEARCH, RngStream(1))
    assert result.passed
    record = result.evidence['per_start'][0]
    assert record['reached'] and record['distance'] < 1e-3
    assert math.exp(-sum(record['times'])) < 1e-3


def test_seven_unit_flow_steps_reach_the_dirac_trap_target(dirac):
    """exp(-7) < 1e-3 < exp(-6): seven unit dwells are the shortest unit-step witness"""
    start = State([1.0], 1)
    seven = PathSpec((1,) * 7, (1.0,) * 7, (1.0,) * 7)
    witness = check_witness(dirac, start, seven, 1, [0.0], 1e-3)
    assert witness['reached'] and witness['n'] == 7
    assert witness['distance'] == pytest.approx(math.exp(-7.0), rel=1e-12)
    assert witness['weight'] == 1.0
    six = PathSpec((1,) * 6, (1.0,) * 6, (1.0,) * 6)
    assert not check_witness(dirac, start, six, 1, [0.0], 1e-3)['reached']
    with pytest.raises(DiagnosticsError, match='must start in mode'):
        check_witness(builtin_model('contracting-lines'), State([0.0], 2), seven, 1, [0.0], 1e-3)

    result = probe_accessibility(dirac, [0.0], 1, 1e-3, [start], FAST_SEARCH, RngStream(1))
    assert result.evidence['per_start'][0]['n'] <= 7


def test_accessibility_contracting_lines(lines):
    starts = [State([0.0], 1), State([-0.8], 2)]
    result = probe_accessibility(lines, [1.5], 1, 1e-3, starts, FAST_SEARCH, RngStream(2))
    assert result.passed
    for record in result.evidence['per_start']:
        assert record['reached']
        assert record['distance'] < 1e-3
        assert record['weight'] > 0


def test_accessibility_infinite_radius(lines):
    result = probe_accessibility(lines, [1.5], 1, math.inf, [State([0.0], 2)], FAST_SEARCH, RngStream(3))
    assert result.passed
    assert result.evidence['per_start'][0]['n'] == 1


def test_accessibility_preconditions(lines):
    with pytest.raises(DiagnosticsError):
        probe_accessibility(lines, [1.5], 1, 0.0, [State([0.0], 1)], FAST_SEARCH, RngStream(1))
    with pytest.raises(DiagnosticsError):
        probe_accessibility(lines, [1.5], 1, 1.0, [], FAST_SEARCH, RngStream(1))


def test_small_set_contracting_lines(lines):
    result = estimate_small_set(lines, [1.5], 1, 1, 20000, RngStream(4))
    assert result.passed
    assert result.evidence['c_bar'] > 0
    assert result.evidence['V_lo'][0] < result.evidence['V_hi'][0]
    assert result.evidence['n_starts'] == 3


def test_small_set_dirac_trap_is_inconclusive(dirac):
    result = estimate_small_set(dirac, [0.0], 1, 2, 2000, RngStream(5))
    assert result.evidence['c_bar'] == 0.0
    assert result.verdict == 'inconclusive'


def test_small_set_needs_enough_draws(lines):
    with pytest.raises(DiagnosticsError):
        estimate_small_set(lines, [1.5], 1, 1, 100, RngStream(4))
    with pytest.raises(DiagnosticsError):
        estimate_small_set(lines, [1.5], 1, 0, 5000, RngStream(4))


def test_hypotheses_contracting_lines(lines):
    constants = HypothesisConstants.from_model(lines)
    report = check_hypotheses(lines, constants, 500, RngStream(6))
    assert report.get('c0').evidence['value'] == pytest.approx(0.0)
    names = [c.name for c in report.checks]
    assert names == ['c0', 'c1', 'c2', 'c4', 'c5', 'c6', 'c3']
    assert all(c.passed for c in report.checks), [c.to_dict() for c in report.checks if not c.passed]


@pytest.mark.parametrize('name', ['dirac-trap', 'planar-rotor'])
def test_hypotheses_other_builtins(name):
    model = builtin_model(name)
    report = check_hypotheses(model, HypothesisConstants.from_model(model), 300, RngStream(7))
    assert report.verdict == 'pass'


def test_hypotheses_tilted_interval_variant():
    model = builtin_model('contracting-lines', {'theta': 'interval', 'kappa': 0.5})
    report = check_hypotheses(model, HypothesisConstants.from_model(model), 200, RngStream(8))
    for name in ('c0', 'c1', 'c2', 'c4', 'c5', 'c6'):
        assert report.get(name).passed


def test_hypotheses_c0_failure(lines):
    constants = HypothesisConstants.from_model(lines, L=2.2)
    report = check_hypotheses(lines, constants, 50, RngStream(9))
    assert report.get('c0').verdict == 'fail'
    assert report.get('c0').evidence['value'] == pytest.approx(1.2)


def test_hypotheses_reject_broken_switching():
    broken = builtin_model('contracting-lines', {'pi12': 0.0, 'pi21': 0.0})
    report = check_hypotheses(broken, HypothesisConstants.from_model(broken, c_pi=0.5), 50, RngStream(10))
    c6 = report.get('c6')
    assert c6.verdict == 'fail'
    assert c6.evidence['witness']['part'] == 'switching'


def test_hypothesis_constants_validation(lines):
    bare = type('Bare', (), {'hypothesis_defaults': {}})()
    with pytest.raises(DiagnosticsError, match='missing'):
        HypothesisConstants.from_model(bare)
    with pytest.raises(DiagnosticsError, match='must be > 0'):
        HypothesisConstants.from_model(lines, L_w=0.0)


def test_classify_continuity_mixture():
    """Forty percent of the mass on one atom, the rest spread uniformly"""
    gen = np.random.default_rng(0)
    ys = np.concatenate([np.full(800, 0.3), gen.uniform(-1.0, 1.0, size=1200)])
    mu = EmpiricalMeasure.from_arrays(ys, np.ones(2000, dtype=int))
    result = classify_continuity(mu)
    assert result.evidence['atom_fraction'] == pytest.approx(0.4, abs=0.02)
    assert result.evidence['classification'] == 'mixed'
    rows = result.evidence['histogram']
    assert len(rows) == 50
    assert sum(r[3] for r in rows) == pytest.approx(1.0)


def test_classify_continuity_extremes():
    atom = EmpiricalMeasure.dirac(State([2.0], 1), copies=100)
    assert classify_continuity(atom).evidence['atom_fraction'] == pytest.approx(1.0)
    assert classify_continuity(atom).evidence['classification'] == 'atomic-singular'
    spread = EmpiricalMeasure.from_arrays(np.random.default_rng(1).normal(size=3000), np.ones(3000))
    assert classify_continuity(spread).evidence['classification'] == 'diffuse'
    with pytest.raises(DiagnosticsError):
        classify_continuity(EmpiricalMeasure(ys=np.zeros((0, 1)), modes=[], weights=[]))


def test_classify_dirac_trap_invariant(dirac):
    from pdmp_lab.simulate import sample_invariant
    mu = sample_invariant(dirac, State([1.0], 1), 20, burn_in=200, n_keep=50, rng=RngStream(12))
    assert classify_continuity(mu).evidence['classification'] == 'atomic-singular'


def test_certificate_contracting_lines(lines):
    report = certify_absolute_continuity(lines, RngStream(13), [State([0.0], 1)], search=FAST_SEARCH)
    assert report.get('anchors').evidence['count'] >= 1
    assert report.get('absolute_continuity').passed


def test_certificate_dirac_trap_is_not_supported(dirac):
    report = certify_absolute_continuity(dirac, RngStream(14), [State([1.0], 1)], search=FAST_SEARCH)
    result = report.get('absolute_continuity')
    assert result.verdict == 'inconclusive'
    assert result.evidence['per_anchor'][0]['best_rank'] == 0


def main():
    """Run the test module with pytest"""
    return pytest.main([__file__, '-q'])


if __name__ == '__main__':
    sys.exit(main())
