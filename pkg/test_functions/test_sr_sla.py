import numpy as np
import pytest
from numpy.testing import assert_array_equal

from stabrad.config import AppConfig
from stabrad.errors import FeasibilityError, InfeasibleAtNominal, NonTermination
from stabrad.pipelines import sr_sla_pipeline
from stabrad.pipelines.sr_la_pipeline import sr_la
from stabrad.pipelines.sr_sla_pipeline import (WALK_CROSSING, WALK_EIGENVALUE, alpha_sla_sweep, sla_step, sr_sla,
                                              sweep_beta)
from stabrad.services.matrix_core import spectral_abscissa
from stabrad.services.perturbation_model import apply_perturbation, spec_from_arrays


def _cfg(**overrides):
    return AppConfig().with_overrides(overrides)


def test_scalar_overshoot_bounded_by_one_step(scalar_spec):
    rep = sr_sla(scalar_spec, _cfg(beta=0.05))
    assert 1.0 - 1e-12 <= rep.value <= 1.05 + 1e-12
    assert rep.alpha_final >= 0.0
    assert rep.trace[-2].alpha < 0.0 <= rep.trace[-1].alpha


def test_scalar_refined(scalar_spec):
    rep = sr_sla(scalar_spec, _cfg(beta=0.3, refine_final=True))
    assert rep.value == pytest.approx(1.0, abs=1e-6)
    assert 0.0 <= rep.alpha_final <= 1e-8
    assert rep.trace[-1].refined


def test_certificate_is_consistent(case1_spec):
    rep = sr_sla(case1_spec, _cfg(refine_final=True))
    assert np.all(rep.delta_star[case1_spec.S == 0] == 0.0)
    assert spectral_abscissa(apply_perturbation(case1_spec, rep.delta_star)) == rep.alpha_final
    assert rep.value == pytest.approx(np.linalg.norm(rep.delta_star))


def test_sla_not_above_la_on_normal_case(case1_spec):
    la = sr_la(case1_spec).value
    sla = sr_sla(case1_spec, _cfg(refine_final=True)).value
    assert sla <= la * 1.25


def test_example1_infeasible_at_nominal(example1_spec):
    with pytest.raises(InfeasibleAtNominal):
        sr_sla(example1_spec)
    config = AppConfig().sla_config(example1_spec.A, example1_spec.B, example1_spec.C, -0.4)
    with pytest.raises(FeasibilityError):
        sla_step(example1_spec, config)


def test_step_picks_largest_true_abscissa(case2_spec):
    config = AppConfig().sla_config(case2_spec.A, case2_spec.B, case2_spec.C, spectral_abscissa(case2_spec.A))
    step = sla_step(case2_spec, config)
    assert step.alpha == max(a for _k, a in step.candidate_alphas)
    assert np.linalg.norm(step.delta) == pytest.approx(config.beta)


def test_max_iters(case1_spec):
    with pytest.raises(NonTermination) as ei:
        sr_sla(case1_spec, _cfg(max_iters=1))
    assert len(ei.value.trace) == 1


def test_deterministic(case2_spec):
    a = sr_sla(case2_spec, _cfg(seed=7))
    b = sr_sla(case2_spec, _cfg(seed=7))
    assert_array_equal(a.delta_star, b.delta_star)
    assert a.value == b.value


def test_sweep(case1_spec):
    cfg = AppConfig()
    grid = [0.0, 0.25, 0.5, 1.0]
    out = alpha_sla_sweep(case1_spec, cfg, grid)
    assert [g for g, _ in out] == grid
    assert out[0][1] == spectral_abscissa(case1_spec.A)
    assert alpha_sla_sweep(case1_spec, cfg, []) == []
    with pytest.raises(ValueError):
        alpha_sla_sweep(case1_spec, cfg, [0.5, 0.1])
    with pytest.raises(ValueError):
        alpha_sla_sweep(case1_spec, cfg, [-0.1, 0.1])


def test_noise_repair_after_empty_feasible_set(scalar_spec, monkeypatch):
    real_step = sr_sla_pipeline.sla_step
    calls = {"n": 0}

    def flaky_step(spec_j, config, beta=None):
        calls["n"] += 1
        if calls["n"] == 2:
            raise FeasibilityError("feasible set K is empty at the current iterate")
        return real_step(spec_j, config, beta)

    monkeypatch.setattr(sr_sla_pipeline, "sla_step", flaky_step)
    rep = sr_sla(scalar_spec, _cfg(beta=0.1, crossing_walk=False))
    assert rep.trace[0].repairs == []
    assert rep.trace[1].repairs == ["noise"]
    assert 1.0 - 1e-6 <= rep.value <= 1.1 + 1e-6
    assert rep.alpha_final >= 0.0


def test_noise_repair_budget(scalar_spec, monkeypatch):
    real_step = sr_sla_pipeline.sla_step
    calls = {"n": 0}

    def failing_after_first(spec_j, config, beta=None):
        calls["n"] += 1
        if calls["n"] >= 2:
            raise FeasibilityError("feasible set K is empty at the current iterate")
        return real_step(spec_j, config, beta)

    monkeypatch.setattr(sr_sla_pipeline, "sla_step", failing_after_first)
    with pytest.raises(NonTermination):
        sr_sla(scalar_spec, _cfg(beta=0.1, max_repairs=3, crossing_walk=False))
    assert calls["n"] == 1 + 4


def test_beta_growth_when_abscissa_stalls():
    # only the -2 eigenvalue can move, so the abscissa stays at -1 until it overtakes
    spec = spec_from_arrays("stall", np.diag([-1.0, -2.0]), np.eye(2), np.eye(2), [[0, 0], [0, 1]])
    rep = sr_sla(spec, _cfg(beta=0.3, beta_growth=2.0, crossing_walk=False))
    first = rep.trace[0]
    assert first.repairs == ["beta_growth", "beta_growth"]
    assert first.beta == pytest.approx(1.2)
    assert first.alpha == pytest.approx(-0.8)
    assert all(r.beta == pytest.approx(0.3) for r in rep.trace[1:])
    assert 2.0 <= rep.value <= 2.0 + 0.3 + 1e-12


def test_beta_growth_budget():
    spec = spec_from_arrays("stall", np.diag([-1.0, -2.0]), np.eye(2), np.eye(2), [[0, 0], [0, 1]])
    with pytest.raises(NonTermination):
        sr_sla(spec, _cfg(beta=0.1, beta_growth=1.5, max_beta_growths=2, crossing_walk=False))


def test_normal_matrix_within_two_steps(rng):
    M = rng.standard_normal((4, 4))
    A = -(M @ M.T) - 0.5 * np.eye(4)
    spec = spec_from_arrays("normal", A, np.eye(4), np.eye(4), np.ones((4, 4)))
    beta = 0.01
    rep = sr_sla(spec, _cfg(beta=beta))
    radius = -spectral_abscissa(A)
    assert radius * (1.0 - 1e-9) <= rep.value <= radius + 2.0 * beta


def test_sum_never_longer_than_its_steps(case2_spec):
    rep = sr_sla(case2_spec, _cfg(refine_final=True))
    assert rep.value <= sum(r.step_norm for r in rep.trace) + 1e-12
    prev = 0.0
    for r in rep.trace:
        assert abs(r.cumulative_norm - prev) <= r.step_norm + 1e-12
        prev = r.cumulative_norm


def test_crossing_walk_finds_real_crossing_of_complex_pair():
    # eigenvalues -1 +- 0.224j: trace boundary at sqrt(2), a real crossing near 0.873
    A = np.array([[-0.8, 0.3], [-0.3, -1.2]])
    spec = spec_from_arrays("pair", A, np.eye(2), np.eye(2), np.eye(2))
    la = sr_la(spec)
    assert la.value == pytest.approx(np.sqrt(2.0))

    eig_only = sr_sla(spec, _cfg(crossing_walk=False))
    assert eig_only.settings["walk"] == WALK_EIGENVALUE
    assert eig_only.value >= np.sqrt(2.0) - 1e-9

    rep = sr_sla(spec)
    assert rep.settings["walk"] == WALK_CROSSING
    assert all(r.walk == WALK_CROSSING and r.k is None for r in rep.trace)
    assert rep.alpha_final >= 0.0
    assert spectral_abscissa(apply_perturbation(spec, rep.delta_star)) == rep.alpha_final
    assert 0.87 <= rep.value <= 0.9 * la.value


def test_crossing_walk_only_replaces_a_longer_sum(case1_spec):
    with_crossing = sr_sla(case1_spec, _cfg(refine_final=True))
    without = sr_sla(case1_spec, _cfg(refine_final=True, crossing_walk=False))
    assert with_crossing.value <= without.value
    assert with_crossing.settings["crossing_walk"] is True


def test_scalar_sweep_point(scalar_spec):
    out = alpha_sla_sweep(scalar_spec, _cfg(beta=0.1), [0.5])
    assert out[0][0] == 0.5
    assert out[0][1] == pytest.approx(-0.5, abs=1e-9)


def test_sweep_step_follows_grid_spacing(scalar_spec):
    config = AppConfig().with_overrides({"beta": 0.1}).sla_config(
        scalar_spec.A, scalar_spec.B, scalar_spec.C, spectral_abscissa(scalar_spec.A))
    assert sweep_beta(config, [0.5]) == pytest.approx(0.05)
    assert sweep_beta(config, [0.0, 0.25, 1.0]) == pytest.approx(0.025)
    assert sweep_beta(config, [5.0]) == pytest.approx(0.1)

    grid = [0.0, 0.3, 0.6]
    for g, alpha in alpha_sla_sweep(scalar_spec, _cfg(beta=0.1), grid):
        # the scalar abscissa is -1 + |sum|; a row may trail its budget by one capped step
        assert -1.0 + g - 0.03 - 1e-12 <= alpha <= -1.0 + g + 1e-12
