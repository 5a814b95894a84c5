import time

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from stabrad.config import AppConfig
from stabrad.errors import RepeatedEigenvalue
from stabrad.pipelines.design_pipeline import (design_sweep, redesigned_sr_oracle, solve_design, solve_sd_la,
                                               solve_sd_sla, sr_la_value)
from stabrad.pipelines.oracle_pipeline import sr_oracle
from stabrad.pipelines.sr_la_pipeline import sr_la
from stabrad.services.perturbation_model import apply_perturbation, spec_from_arrays


def test_scalar_la(scalar_spec):
    rep = solve_sd_la(scalar_spec, 2.0)
    assert rep.converged and not rep.target_already_met
    assert_allclose(rep.delta_o_star, [[-1.0]], atol=1e-3)
    assert rep.achieved_sr_la >= 2.0 - 1e-6


def test_scalar_sla(scalar_spec):
    rep = solve_sd_sla(scalar_spec)
    assert rep.epsilon == 2.0
    assert rep.converged
    assert_allclose(rep.delta_o_star, [[-1.0]], atol=1e-3)
    assert rep.achieved_sr_sla >= 2.0 - 1e-6
    assert rep.solver["settings"]["sla_beta"] == pytest.approx(0.02)
    assert rep.solver["evaluations"] <= AppConfig().sla_design_max_evals


def test_target_already_met(scalar_spec):
    rep = solve_sd_la(scalar_spec, 0.5)
    assert rep.target_already_met and rep.norm == 0.0
    assert rep.initial_sr == pytest.approx(1.0)


def test_bad_inputs(case1_spec, scalar_spec):
    with pytest.raises(ValueError):
        solve_design(case1_spec, None)
    with pytest.raises(ValueError):
        solve_design(scalar_spec, 2.0, method="exact")
    frozen = spec_from_arrays("frozen", [[-1.0]], [[1.0]], [[1.0]], [[1]], design={"So": [[0]], "epsilon": 2.0})
    with pytest.raises(ValueError):
        solve_design(frozen, None)


@pytest.mark.parametrize("method", ["la", "sla"])
def test_repeated_nominal_eigenvalue_is_not_a_met_target(method):
    spec = spec_from_arrays("rep", -np.eye(2), np.eye(2), np.eye(2), np.ones((2, 2)))
    with pytest.raises(RepeatedEigenvalue):
        solve_design(spec, 5.0, method=method)


def test_unshiftable_nominal_meets_any_target(example1_spec):
    assert sr_la_value(example1_spec.A, example1_spec, AppConfig()) == np.inf
    rep = solve_sd_la(example1_spec, 10.0)
    assert rep.target_already_met and rep.initial_sr == np.inf


def test_budget_stops_sla_design_with_best_point(scalar_spec):
    cfg = AppConfig().with_overrides({"sla_design_max_evals": 40})
    rep = solve_sd_sla(scalar_spec, 2.0, cfg)
    assert rep.solver["evaluations"] <= 40
    # the SD_la warm start already sits on the optimum
    assert rep.converged
    assert_allclose(rep.delta_o_star, [[-1.0]], atol=1e-3)


def test_sweep_rows(scalar_spec):
    rows = design_sweep(scalar_spec, [1.5, 2.0])
    assert [r["epsilon"] for r in rows] == [1.5, 2.0]
    assert_allclose([r["norm"] for r in rows], [0.5, 1.0], atol=1e-3)
    assert all(r["converged"] for r in rows)
    assert_allclose([r["sr_oracle"] for r in rows], [1.5, 2.0], atol=2e-3)


def test_sweep_without_oracle_column(scalar_spec):
    rows = design_sweep(scalar_spec, [1.5], with_oracle=False)
    assert rows[0]["sr_oracle"] is None


def test_design_is_deterministic(case1_spec):
    eps = 1.2 * sr_la(case1_spec).value
    a = solve_sd_la(case1_spec, eps)
    b = solve_sd_la(case1_spec, eps)
    assert_array_equal(a.delta_o_star, b.delta_o_star)
    assert a.norm == b.norm
    assert a.solver["evaluations"] == b.solver["evaluations"]


def test_norm_grows_with_target(case1_spec):
    sr0 = sr_la(case1_spec).value
    rows = design_sweep(case1_spec, [1.05 * sr0, 1.25 * sr0, 1.5 * sr0], with_oracle=False)
    norms = [r["norm"] for r in rows]
    assert all(r["converged"] for r in rows)
    assert np.all(np.diff(norms) >= -1e-4)


@pytest.mark.slow
def test_case1_redesign(case1_spec):
    cfg = AppConfig()
    sr0 = sr_oracle(case1_spec, cfg=cfg)
    eps = 1.2 * sr0
    la = solve_sd_la(case1_spec, eps, cfg)
    t0 = time.perf_counter()
    sla = solve_sd_sla(case1_spec, eps, cfg)
    assert time.perf_counter() - t0 < 300.0
    assert la.converged and sla.converged
    assert la.achieved_sr_la >= eps - 1e-6
    assert sla.achieved_sr_sla >= eps - 1e-6
    for rep in (la, sla):
        redesigned = case1_spec.with_nominal(apply_perturbation(case1_spec, rep.delta_o_star))
        reached = sr_oracle(redesigned, cfg=cfg)
        assert 0.95 * eps <= reached <= 1.10 * eps
        assert reached == pytest.approx(redesigned_sr_oracle(case1_spec, rep, cfg))
        # SR(A_o) <= SR(A) + ||Delta_o|| when the design and analysis structures coincide
        assert rep.norm >= reached - sr0 - 1e-3
    assert sla.norm <= la.norm + 1e-6
