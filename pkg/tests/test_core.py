import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmt_select.core import (
    BudgetInfeasible,
    CorrelationMatrix,
    DimensionMismatch,
    ErrorMetric,
    NotPSD,
    ProblemDims,
    SelectionMode,
    SelectionVector,
    validate,
)

from conftest import random_correlation


class TestProblemDims:
    def test_aspect_ratio(self):
        dims = ProblemDims(100, 30, 50)
        assert dims.c == pytest.approx(100 / 30)

    @pytest.mark.parametrize("n,m,k", [(4, 2, 2), (10, 3, 3), (10, 3, 11)])
    def test_budget_outside_m_to_n(self, n, m, k):
        with pytest.raises(BudgetInfeasible):
            ProblemDims(n, m, k)

    def test_n_must_exceed_m(self):
        with pytest.raises(DimensionMismatch):
            ProblemDims(3, 3, 3)

    def test_non_integer_rejected(self):
        with pytest.raises(DimensionMismatch):
            ProblemDims(10, 2.5, 5)

    def test_with_k(self):
        assert ProblemDims(10, 3, 5).with_k(7) == ProblemDims(10, 3, 7)


class TestCorrelationMatrix:
    def test_rejects_indefinite(self):
        R = np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(NotPSD):
            CorrelationMatrix(R)

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotPSD):
            CorrelationMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(DimensionMismatch):
            CorrelationMatrix(np.ones((2, 3)))

    def test_tiny_negative_eigenvalue_clamped(self):
        v = np.array([1.0, -1.0]) / np.sqrt(2)
        R = np.eye(2) - (1 + 1e-11) * np.outer(v, v)
        C = CorrelationMatrix(R)
        assert C.eigvals.min() == 0.0

    @pytest.mark.parametrize("complex_", [False, True])
    def test_sqrt_reproduces_entries(self, complex_):
        R = random_correlation(30, 3, complex_=complex_)
        back = R.sqrt @ R.sqrt
        err = np.linalg.norm(back - R.entries) / np.linalg.norm(R.entries)
        assert err <= 1e-10
        np.testing.assert_allclose(R.sqrt, R.sqrt.conj().T, atol=1e-14)

    def test_sqrt_of_rank_deficient_kernel(self):
        i = np.arange(60)
        R = CorrelationMatrix(np.exp(-0.05 * (i[:, None] - i[None, :]) ** 2))
        err = np.linalg.norm(R.sqrt @ R.sqrt - R.entries) / np.linalg.norm(R.entries)
        assert err <= 1e-10

    def test_immutable(self):
        R = CorrelationMatrix(np.eye(3))
        with pytest.raises(ValueError):
            R.entries[0, 0] = 2.0

    def test_permuted_and_scaled(self):
        R = random_correlation(6, 1)
        perm = np.array([3, 1, 5, 0, 2, 4])
        np.testing.assert_array_equal(R.permuted(perm).entries, R.entries[np.ix_(perm, perm)])
        np.testing.assert_allclose(R.scaled(2.0).entries, 2.0 * R.entries)


class TestSelectionVector:
    def test_binary_requires_exact_budget(self):
        with pytest.raises(BudgetInfeasible):
            SelectionVector(np.array([1.0, 0.0, 1.0]), SelectionMode.BINARY, 1)

    def test_binary_rejects_fractions(self):
        with pytest.raises(ValueError):
            SelectionVector(np.array([0.5, 0.5, 1.0]), SelectionMode.BINARY, 2)

    def test_relaxed_sum_tolerance(self):
        SelectionVector.relaxed([0.5, 0.5 + 5e-9, 1.0], 2)
        with pytest.raises(BudgetInfeasible):
            SelectionVector.relaxed([0.5, 0.5 + 1e-7, 1.0], 2)

    def test_relaxed_bounds(self):
        with pytest.raises(ValueError):
            SelectionVector.relaxed([1.2, -0.2, 1.0], 2)

    def test_duplicate_indices(self):
        with pytest.raises(ValueError):
            SelectionVector.from_indices(5, [1, 1, 2])

    def test_from_generator(self):
        s = SelectionVector.from_indices(5, (i for i in (4, 0)))
        np.testing.assert_array_equal(s.indices(), [0, 4])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 40).flatmap(lambda n: st.tuples(st.just(n), st.sets(st.integers(0, n - 1), min_size=1))))
    def test_index_round_trip(self, case):
        n, idx = case
        s = SelectionVector.from_indices(n, idx)
        assert s.budget == len(idx)
        assert len(s.indices()) == s.budget
        assert SelectionVector.from_indices(n, s.indices()) == s

    def test_hash_and_eq(self):
        a = SelectionVector.from_indices(6, [0, 2, 4])
        b = SelectionVector(np.array([1, 0, 1, 0, 1, 0]))
        assert a == b and hash(a) == hash(b)


class TestErrorMetric:
    @pytest.mark.parametrize("name", ["mse", "LCE", "Wev"])
    def test_parse(self, name):
        assert ErrorMetric.parse(name).value == name.upper()

    def test_unknown(self):
        with pytest.raises(ValueError):
            ErrorMetric.parse("trace")


class TestValidate:
    def test_default_configuration_ok(self):
        dims = ProblemDims(100, 30, 50)
        R = random_correlation(100, 0)
        s = SelectionVector.from_indices(100, range(0, 100, 2))
        assert validate(dims, R, s) is None

    def test_budget_infeasible_example(self):
        with pytest.raises(BudgetInfeasible):
            validate((4, 2, 2), np.eye(4), SelectionVector.from_indices(4, [0, 1]))

    def test_not_psd_example(self):
        R = np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(NotPSD):
            validate((3, 1, 2), R, SelectionVector.from_indices(3, [0, 1]))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            validate(ProblemDims(5, 2, 3), np.eye(4), SelectionVector.from_indices(5, [0, 1, 2]))
        with pytest.raises(DimensionMismatch):
            validate(ProblemDims(5, 2, 3), np.eye(5), SelectionVector.from_indices(6, [0, 1, 2]))
