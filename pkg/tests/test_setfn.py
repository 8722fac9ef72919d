import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from summax.setfn import (
    COUNTEREXAMPLE_DIRECTION,
    COUNTEREXAMPLE_SUBSET,
    SubsetDecomposition,
    SumMaxFunction,
    TabulatedSetFunction,
    build_counterexample,
    build_summax,
    check_monotone_submodular,
    check_pseudo_concave,
    check_pseudo_submodular,
    eval_summax,
    function_from_dict,
    function_to_dict,
    load_function,
    quadratic_form,
    subset_decomposition,
    tabulate,
)


def masks_of(n):
    return range(1 << n)


def members(mask, n):
    return [i for i in range(n) if mask >> i & 1]


def reverse_induction(table, n):
    """Brute-force decomposition: d(S) = r(S) - sum of d over strict supersets,
    solved from the full set downwards."""
    d = {}
    for size in range(n, -1, -1):
        for combo in itertools.combinations(range(n), size):
            s = sum(1 << i for i in combo)
            above = sum(d[t] for t in d if t & s == s and t != s)
            d[s] = table[s] - above
    return np.array([d[s] for s in range(1 << n)])


def random_summax(rng, n, rows):
    v = rng.random((rows, n))
    return SumMaxFunction(v, float(v.min(axis=1).sum()))


class TestEvaluation:
    def test_examples(self):
        f = SumMaxFunction(np.array([[1.0, 2.0], [3.0, 0.0]]), 0.0)
        assert eval_summax(f, [0, 1]) == 5
        assert eval_summax(f, [0]) == 4
        g = SumMaxFunction(np.array([[1.0, 2.0], [3.0, 0.0]]), 1.0)
        assert g([]) == 1

    def test_bitmask_and_iterable_agree(self):
        f = SumMaxFunction(np.array([[1.0, 2.0, 0.5]]), 0.0)
        assert f(0b101) == f([0, 2]) == 1.0

    def test_empty_value_constraint(self):
        with pytest.raises(ValueError):
            SumMaxFunction(np.array([[1.0, 2.0], [3.0, 0.0]]), 1.5)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            SumMaxFunction(np.array([[np.nan, 1.0]]), 0.0)

    def test_out_of_range_mask(self):
        f = SumMaxFunction(np.ones((1, 2)), 0.0)
        with pytest.raises(ValueError):
            f(0b100)


class TestFamilies:
    def test_hitting_set(self):
        f = build_summax("hitting_set", sets=[[0, 2]], n_arms=3)
        np.testing.assert_array_equal(f.values, [[1, 0, 1]])

    def test_combinatorial(self):
        f = build_summax("combinatorial", weights=[2, 5])
        np.testing.assert_array_equal(f.values, [[2, 0], [0, 5]])
        assert f([0, 1]) == 7

    def test_k_medians(self):
        f = build_summax("k_medians", points=[[0.0], [1.0], [3.0]], metric="euclidean")
        assert f.metadata["shift"] == 3
        np.testing.assert_allclose(f.values[:, 0], [3, 2, 0])
        assert f([1]) == pytest.approx(6)

    def test_k_medians_asymmetric_matrix(self):
        with pytest.raises(ValueError):
            build_summax("k_medians", points=[0, 1], metric=np.array([[0, 1], [2, 0]]))

    def test_empty_family(self):
        with pytest.raises(ValueError):
            build_summax("hitting_set", sets=[], n_arms=3)


class TestTabulate:
    def test_best_of_k(self):
        f = build_summax("best_of_k", arms=[0], n_arms=2)
        np.testing.assert_array_equal(tabulate(f).table, [0, 1, 0, 1])

    def test_cardinality(self):
        f = build_summax("combinatorial", weights=[1, 1])
        np.testing.assert_array_equal(tabulate(f).table, [0, 1, 1, 2])

    def test_idempotent(self):
        f = random_summax(np.random.default_rng(1), 5, 3)
        np.testing.assert_array_equal(tabulate(f).table, tabulate(tabulate(f)).table)

    def test_matches_direct_evaluation(self):
        f = random_summax(np.random.default_rng(2), 6, 4)
        t = tabulate(f).table
        for s in masks_of(6):
            assert t[s] == pytest.approx(f(s), abs=1e-14)

    def test_limit(self, monkeypatch):
        f = SumMaxFunction(np.ones((1, 13)), 0.0)
        with pytest.raises(ValueError):
            tabulate(f)
        monkeypatch.setenv("SUMMAX_TABLE_LIMIT", "13")
        assert tabulate(f).table.shape == (1 << 13,)

    def test_table_length_checked(self):
        with pytest.raises(ValueError):
            TabulatedSetFunction(3, np.zeros(7))


class TestDecomposition:
    def test_best_of_k(self):
        d = subset_decomposition(build_summax("best_of_k", arms=[0], n_arms=2))
        np.testing.assert_allclose(d.coeffs, [0, 0, -1, 1])

    def test_constant(self):
        d = subset_decomposition(TabulatedSetFunction(3, np.full(8, 2.5)))
        expected = np.zeros(8)
        expected[7] = 2.5
        np.testing.assert_allclose(d.coeffs, expected)

    def test_against_reverse_induction(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            table = rng.normal(size=1 << n)
            d = subset_decomposition(TabulatedSetFunction(n, table))
            np.testing.assert_allclose(d.coeffs, reverse_induction(table, n), atol=1e-10)

    def test_reconstruction_random_tables(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(1, 8))
            table = rng.normal(size=1 << n)
            d = subset_decomposition(TabulatedSetFunction(n, table))
            assert np.abs(d.reconstruct() - table).max() <= 1e-10

    def test_uniqueness_under_perturbation(self):
        rng = np.random.default_rng(5)
        table = rng.normal(size=16)
        d = subset_decomposition(TabulatedSetFunction(4, table))
        for s in range(16):
            coeffs = d.coeffs.copy()
            coeffs[s] += 1e-3
            err = np.abs(SubsetDecomposition(4, coeffs).reconstruct() - table)
            assert err.max() == pytest.approx(1e-3, abs=1e-12)


class TestPseudoConcave:
    def test_summax_battery(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            f = random_summax(rng, int(rng.integers(2, 8)), int(rng.integers(1, 6)))
            assert check_pseudo_concave(tabulate(f)).holds

    def test_counterexample(self):
        g = build_counterexample(2 / 3)
        report = check_pseudo_concave(g)
        assert not report.holds
        assert report.witness.subset == COUNTEREXAMPLE_SUBSET
        assert quadratic_form(g, COUNTEREXAMPLE_SUBSET, COUNTEREXAMPLE_DIRECTION) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_witness_reproduces_violation(self):
        g = build_counterexample(2 / 3)
        w = check_pseudo_concave(g).witness
        x = w.vector
        assert abs(x.sum()) < 1e-9
        value = quadratic_form(g, w.subset, x) / (x @ x)
        assert value == pytest.approx(w.violation, abs=1e-12)

    def test_single_arm(self):
        g = TabulatedSetFunction(1, np.array([-3.0, 7.0]))
        assert check_pseudo_concave(g).holds

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
    def test_constant_shift(self, seed, c):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 5))
        table = rng.normal(size=1 << n)
        a = check_pseudo_concave(TabulatedSetFunction(n, table), tol=1e-9)
        b = check_pseudo_concave(TabulatedSetFunction(n, table + c), tol=1e-9)
        assert a.holds == b.holds

    def test_layered_representation(self):
        rng = np.random.default_rng(7)
        for n in range(1, 8):
            v = rng.random(n)
            f = SumMaxFunction(v[None, :], 0.0)
            order = np.argsort(-v, kind="stable")
            for s in masks_of(n):
                total = 0.0
                for i in range(n):
                    prefix = set(order[: i + 1].tolist())
                    hit = any(j in prefix for j in members(s, n))
                    step = v[order[i]] - (v[order[i + 1]] if i + 1 < n else 0.0)
                    total += step * hit
                assert total == pytest.approx(f(s), abs=1e-12)


class TestSubmodularity:
    def test_summax_is_monotone_submodular(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            f = random_summax(rng, int(rng.integers(1, 7)), int(rng.integers(1, 5)))
            assert check_monotone_submodular(f).holds

    def test_counterexample_monotone_submodular(self):
        assert check_monotone_submodular(build_counterexample()).holds

    def test_square_cardinality(self):
        table = np.array([bin(s).count("1") ** 2 for s in range(8)], dtype=float)
        report = check_monotone_submodular(TabulatedSetFunction(3, table))
        assert not report.holds
        assert report.detail["monotone"] and not report.detail["submodular"]

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            n = int(rng.integers(1, 5))
            table = rng.normal(size=1 << n)
            mono = all(table[s | 1 << i] >= table[s] - 1e-12
                       for s in masks_of(n) for i in range(n))
            sub = all(
                table[a | 1 << i] - table[a] >= table[b | 1 << i] - table[b] - 1e-12
                for b in masks_of(n) for a in masks_of(n) if a & b == a
                for i in range(n) if not b >> i & 1
            )
            report = check_monotone_submodular(TabulatedSetFunction(n, table))
            assert report.detail["monotone"] == mono
            assert report.detail["submodular"] == sub


def brute_pseudo_submodular(table, n):
    for s in range(1, 1 << n):
        ok_any = False
        for i in members(s, n):
            rest = s & ~(1 << i)
            gain = table[s] - table[rest]
            ok = all(table[q | 1 << i] - table[q] >= gain - 1e-12
                     for q in masks_of(n) if q & rest == q)
            ok_any |= ok
        if not ok_any:
            return False
    return True


class TestPseudoSubmodular:
    def test_submodular_implies_pseudo_submodular(self):
        rng = np.random.default_rng(10)
        for _ in range(30):
            f = random_summax(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
            assert check_monotone_submodular(f).holds
            assert check_pseudo_submodular(f).holds

    def test_square_cardinality_fails(self):
        table = np.array([bin(s).count("1") ** 2 for s in range(8)], dtype=float)
        assert not check_pseudo_submodular(TabulatedSetFunction(3, table)).holds

    def test_single_arm(self):
        assert check_pseudo_submodular(TabulatedSetFunction(1, np.array([0.0, -4.0]))).holds

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            n = int(rng.integers(1, 5))
            table = rng.normal(size=1 << n)
            got = check_pseudo_submodular(TabulatedSetFunction(n, table)).holds
            assert got == brute_pseudo_submodular(table, n)


class TestCounterexample:
    def test_full_set_value(self):
        assert build_counterexample().table[-1] == pytest.approx(2 + 5 / 6)

    def test_alpha_range(self):
        for alpha in (0.0, 17 / 24, 1.0):
            with pytest.raises(ValueError):
                build_counterexample(alpha)

    def test_form_is_linear_in_alpha(self):
        for alpha in (0.1, 0.3, 0.5):
            g = build_counterexample(alpha)
            form = quadratic_form(g, COUNTEREXAMPLE_SUBSET, COUNTEREXAMPLE_DIRECTION)
            assert form == pytest.approx(17 - 24 * alpha, abs=1e-12)


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        from summax.setfn import save_function

        f = random_summax(np.random.default_rng(12), 4, 2)
        save_function(f, tmp_path / "f.json")
        g = load_function(tmp_path / "f.json")
        np.testing.assert_array_equal(f.values, g.values)
        t = tabulate(f)
        assert np.array_equal(function_from_dict(function_to_dict(t)).table, t.table)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            function_from_dict({"type": "summax", "L": 3, "V": [[1, 2]]})

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            function_from_dict({"type": "matrix"})
