import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from stabrad.errors import DimensionMismatch, NonBinaryMask, UnstableNominal
from stabrad.services.perturbation_model import (apply_perturbation, apply_structured, collect_violations,
                                                 project_sparsity, resolve_design, spec_from_arrays)


def test_bundled_dimensions(case1_spec):
    assert (case1_spec.n, case1_spec.m, case1_spec.p) == (3, 2, 2)
    assert collect_violations(case1_spec) == []


def test_dimension_mismatch_lists_every_violation():
    with pytest.raises(DimensionMismatch) as ei:
        spec_from_arrays("bad", np.eye(2) * -1, np.ones((3, 1)), np.ones((1, 4)), [[1]])
    assert len(ei.value.violations) >= 2


def test_unstable_nominal():
    with pytest.raises(UnstableNominal):
        spec_from_arrays("u", [[0.1]], [[1.0]], [[1.0]], [[1]])


def test_boundary_stable_is_rejected():
    with pytest.raises(UnstableNominal):
        spec_from_arrays("b", [[0.0]], [[1.0]], [[1.0]], [[1]])


def test_non_binary_mask():
    with pytest.raises(NonBinaryMask):
        spec_from_arrays("s", [[-1.0]], [[1.0]], [[1.0]], [[0.5]])


def test_apply_structured(case1_spec):
    delta = np.array([[0.3, 0.0], [0.0, -0.2]])
    expected = case1_spec.A + case1_spec.B @ delta @ case1_spec.C
    assert_allclose(apply_perturbation(case1_spec, delta), expected)
    with pytest.raises(DimensionMismatch):
        apply_structured(case1_spec.A, case1_spec.B, case1_spec.C, np.zeros((3, 3)))


def test_project_sparsity_exact_zeros():
    S = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = project_sparsity(np.array([[1.5, np.pi], [-2.0, 0.25]]), S)
    assert_array_equal(out, [[1.5, 0.0], [0.0, 0.25]])


def test_resolve_design_defaults_to_analysis_structure(case1_spec, scalar_spec):
    block = resolve_design(case1_spec, 0.7)
    assert block.epsilon == 0.7
    assert_array_equal(block.B_o, case1_spec.B)
    assert_array_equal(block.S_o, case1_spec.S)
    assert resolve_design(scalar_spec).epsilon == 2.0
