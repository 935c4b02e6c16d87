import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reinforced_lsmc import build_basis, design_matrix, max_call_payoff, sorted_features
from reinforced_lsmc.basis import expected_size


def test_sorted_features_orders_descending():
    assert sorted_features([3, 1, 2]).tolist() == [3, 2, 1]


def test_sorted_features_keeps_ties():
    assert sorted_features([5, 5]).tolist() == [5, 5]


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(1, 8), elements=st.floats(0, 500)))
def test_leading_feature_gives_payoff(x):
    g = max_call_payoff(100.0)
    assert g(x[None])[0] == max(sorted_features(x)[0] - 100.0, 0.0)


@pytest.mark.parametrize(
    "family,d,size",
    [("psi2", 2, 6), ("psi3", 5, 56), ("psi1", 10, 11), ("psi2", 10, 66), ("psi3", 10, 286), ("psi1g", 4, 6)],
)
def test_cardinality_examples(family, d, size):
    assert build_basis(family, d, strike=100.0).size == size


@pytest.mark.parametrize("d", range(1, 11))
def test_cardinality_formulas(d):
    assert build_basis("psi1", d).size == d + 1
    assert build_basis("psi1g", d, strike=100.0).size == d + 2
    assert 2 * build_basis("psi2", d).size == d * d + 3 * d + 2
    assert 6 * build_basis("psi3", d).size == d**3 + 6 * d * d + 11 * d + 6
    for fam in ("psi1", "psi2", "psi3"):
        assert build_basis(fam, d).size == expected_size(fam, d)


def test_gas_family_order():
    b = build_basis("P1(X1,X2)")
    assert b.names == ("1", "x1", "x2")
    assert b.evaluate(np.array([[3.0, 5.0]])).tolist() == [[1.0, 3.0, 5.0]]


@pytest.mark.parametrize("i", range(1, 6))
def test_gas_family_sizes(i):
    assert build_basis(f"P{i}(X2)").size == i + 1
    assert build_basis(f"P{i}(X1,X2)").size == (i + 1) * (i + 2) // 2
    assert build_basis(f"p{i}_x1x2").names == build_basis(f"P{i}(X1,X2)").names


def test_constant_comes_first():
    for fam in ("psi1", "psi2", "psi3"):
        assert build_basis(fam, 3).names[0] == "1"


def test_psi2_columns_are_sorted_feature_products():
    x = np.array([[2.0, 7.0, 3.0]])
    row = build_basis("psi2", 3).evaluate(x)[0]
    f1, f2, f3 = 7.0, 3.0, 2.0
    assert row.tolist() == [1, f1, f2, f3, f1 * f1, f1 * f2, f1 * f3, f2 * f2, f2 * f3, f3 * f3]


def test_psi1g_appends_undiscounted_payoff():
    b = build_basis("psi1g", 2, strike=100.0)
    assert b.names[-1] == "g"
    assert b.evaluate(np.array([[130.0, 90.0]]))[0, -1] == 30.0


@settings(max_examples=40, deadline=None)
@given(arrays(float, 4, elements=st.floats(1, 300)), st.permutations(range(4)))
def test_permutation_invariance(x, perm):
    for fam in ("psi1", "psi2", "psi3"):
        b = build_basis(fam, 4)
        assert np.array_equal(b(x), b(x[list(perm)]))


def test_rejects_unknown_family():
    with pytest.raises(ValueError):
        build_basis("psi7", 2)
    with pytest.raises(ValueError):
        build_basis("psi1g", 2)


def test_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        build_basis("psi1", 3).evaluate(np.ones((2, 2)))


class TestDesignMatrix:
    def test_single_row(self):
        assert design_matrix(build_basis("psi1", 2), np.array([[1.0, 2.0]])).tolist() == [[1, 2, 1]]

    def test_empty_reinforcement(self):
        X = np.ones((7, 2))
        assert design_matrix(build_basis("psi2", 2), X, []).shape == (7, 6)

    def test_reinforcement_columns_appended_in_order(self, rng):
        X = rng.uniform(size=(5, 2))
        r1, r2 = rng.normal(size=5), rng.normal(size=5)
        D = design_matrix(build_basis("psi1", 2), X, [r1, r2])
        assert np.array_equal(D[:, 3], r1) and np.array_equal(D[:, 4], r2)

    def test_column_of_ones_duplicates_constant(self, rng):
        D = design_matrix(build_basis("psi1", 2), rng.uniform(size=(9, 2)), [np.ones(9)])
        assert np.array_equal(D[:, 0], D[:, -1])
        assert np.linalg.matrix_rank(D) == 3

    def test_row_mismatch(self):
        with pytest.raises(ValueError):
            design_matrix(build_basis("psi1", 2), np.ones((4, 2)), [np.ones(3)])


def test_feature_order_is_stable():
    a = build_basis("psi3", 3).names
    b = build_basis("psi3", 3).names
    assert a == b
