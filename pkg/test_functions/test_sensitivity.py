from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stabrad.errors import DimensionMismatch
from stabrad.services.matrix_core import eigenvalues
from stabrad.services.sensitivity import (build_sensitivities, bundle_from_matrices, crossing_sensitivity, describe,
                                          feasibility, linearized_abscissa, linearized_real_parts, log_abs_det)
from stabrad.tools.random_specs import random_stable_spec


def test_example1_sensitivities_and_empty_feasible_set(example1_spec):
    bundle = build_sensitivities(example1_spec)
    for k in range(2):
        assert_allclose(bundle.P_r[k], [[0.0, 0.0], [0.7, 1.0]], atol=1e-6)
    assert bundle.feasible == ()
    assert feasibility(bundle).empty


def test_case1_norms(case1_spec):
    bundle = build_sensitivities(case1_spec)
    assert_allclose(sorted(bundle.norms), sorted([0.6063, 0.0666, 0.0399]), atol=1e-3)


def test_case2_norms(case2_spec):
    bundle = build_sensitivities(case2_spec)
    assert_allclose(sorted(bundle.norms), sorted([8.3881, 0.7848, 1.9765]), atol=1e-3)


def test_rank_one(case2_spec):
    bundle = build_sensitivities(case2_spec)
    for P in bundle.P:
        s = np.linalg.svd(P, compute_uv=False)
        assert s[1] <= 1e-12 * s[0]


def test_masked_entries_are_exact_zeros(case1_spec):
    bundle = build_sensitivities(case1_spec)
    assert np.all(bundle.masked[:, case1_spec.S == 0] == 0.0)


def test_finite_difference_derivatives():
    rng = np.random.default_rng(6)
    h = 1e-6
    checked = 0
    while checked < 50:
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 4))
        p = int(rng.integers(1, 4))
        spec = random_stable_spec(rng, n, m, p)
        bundle = build_sensitivities(spec)
        # central differences need well-separated eigenvalues
        if bundle.eig.separation < 0.05:
            continue
        checked += 1
        lam = bundle.eig.values
        for i in range(m):
            for j in range(p):
                E = np.zeros((m, p))
                E[i, j] = h
                wp = eigenvalues(spec.A + spec.B @ E @ spec.C)
                wm = eigenvalues(spec.A - spec.B @ E @ spec.C)
                for k in range(n):
                    lp = wp[np.argmin(np.abs(wp - lam[k]))]
                    lm = wm[np.argmin(np.abs(wm - lam[k]))]
                    fd = (lp - lm).real / (2 * h)
                    assert fd == pytest.approx(bundle.P_r[k, i, j], rel=1e-4, abs=1e-6)


def test_linearized_model(case1_spec):
    bundle = build_sensitivities(case1_spec)
    assert_allclose(linearized_real_parts(bundle, np.zeros((2, 2))), bundle.real_parts)
    value, k = linearized_abscissa(bundle, 0.0)
    assert value == pytest.approx(float(np.max(bundle.real_parts)))
    assert k == 0
    with pytest.raises(DimensionMismatch):
        linearized_real_parts(bundle, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        linearized_abscissa(bundle, -1.0)


def test_describe_rows(case2_spec):
    rows = describe(build_sensitivities(case2_spec))
    assert [r["k"] for r in rows] == [0, 1, 2]
    assert all(r["feasible"] for r in rows)
    assert {"eigenvalue", "norm_P_r", "norm_masked_P_r", "eigvec_condition"} <= set(rows[0])


def test_identity_structure_partitions_identity(rng):
    A = random_stable_spec(rng, 4).A
    bundle = bundle_from_matrices(A, np.eye(4), np.eye(4), np.ones((4, 4)))
    for P in bundle.P:
        assert np.trace(P) == pytest.approx(1.0 + 0.0j, abs=1e-9)
    assert_allclose(np.sum(bundle.P, axis=0), np.eye(4), atol=1e-9)


def test_eigenvector_scaling_leaves_sensitivities_unchanged(case2_spec):
    bundle = build_sensitivities(case2_spec)
    c = np.array([2.0 - 1.0j, -0.5j, 3.0])
    rescaled = replace(bundle.eig, right=bundle.eig.right * c, left=bundle.eig.left / np.conj(c))
    other = build_sensitivities(case2_spec, eig=rescaled)
    assert_allclose(other.P, bundle.P, atol=1e-12)


def test_conjugate_pair_shares_real_part():
    A = np.array([[-0.8, 0.3, 0.1], [-0.3, -1.2, 0.0], [0.2, 0.1, -3.0]])
    B = np.array([[1.0, 0.2], [0.4, -0.7], [0.3, 1.1]])
    C = np.array([[0.5, -1.0, 0.2], [0.9, 0.3, -0.4]])
    bundle = bundle_from_matrices(A, B, C, np.ones((2, 2)))
    assert bundle.eig.values[0] == pytest.approx(np.conj(bundle.eig.values[1]))
    assert_allclose(bundle.P[1], bundle.P[0].conj(), atol=1e-10)
    assert_allclose(bundle.P_r[1], bundle.P_r[0], atol=1e-10)


def test_crossing_sensitivity_matches_log_det_difference(case2_spec):
    G = crossing_sensitivity(case2_spec.A, case2_spec.B, case2_spec.C, case2_spec.S)
    assert np.all(G[case2_spec.S == 0] == 0.0)
    h = 1e-6
    for i, j in zip(*np.nonzero(case2_spec.S)):
        E = np.zeros_like(G)
        E[i, j] = h
        up = log_abs_det(case2_spec.A + case2_spec.B @ E @ case2_spec.C)[1]
        down = log_abs_det(case2_spec.A - case2_spec.B @ E @ case2_spec.C)[1]
        assert (up - down) / (2 * h) == pytest.approx(G[i, j], rel=1e-5, abs=1e-7)
    assert crossing_sensitivity(np.zeros((3, 3)), case2_spec.B, case2_spec.C, case2_spec.S) is None
