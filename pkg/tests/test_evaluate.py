import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import datasets
import oracles
from c19vi import evaluate
from c19vi.errors import DataError
from c19vi.evaluate import BorutaConfig, Decision, boruta, cronbach_alpha, friedman, roc_auc, wilcoxon_signed_rank
from c19vi.ingest import THEME_COLUMNS


def test_auc_examples():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5] * 6, [0, 1] * 3) == 0.5


def test_auc_needs_both_classes():
    with pytest.raises(DataError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1])


scored = st.integers(4, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 6).map(lambda v: v / 6), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda ys: 0 < sum(ys) < len(ys)),
))


@settings(max_examples=100, deadline=None)
@given(scored)
def test_auc_matches_pair_counting_and_trapezoid(data):
    s, y = data
    got = roc_auc(s, y)
    assert got == pytest.approx(oracles.auc_pairs(s, y), abs=1e-12)
    assert got == pytest.approx(oracles.auc_trapezoid(s, y), abs=1e-12)
    fpr, tpr, _ = evaluate.roc_curve(s, y)
    assert float(np.trapezoid(tpr, fpr)) == pytest.approx(got, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_auc_complement_and_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    s = rng.random(30)
    y = np.r_[1, 0, rng.integers(0, 2, 28)]
    a = roc_auc(s, y)
    assert a + roc_auc(-s, y) == pytest.approx(1.0, abs=1e-12)
    assert roc_auc(np.exp(3 * s) + 7, y) == pytest.approx(a, abs=1e-12)


def test_cronbach_identical_columns():
    x = np.random.default_rng(0).random(50)
    assert cronbach_alpha(np.column_stack([x] * 4)) == pytest.approx(1.0)


def test_cronbach_independent_noise():
    m = np.random.default_rng(1).random((10_000, 2))
    assert abs(cronbach_alpha(m)) < 0.1


def test_cronbach_zero_variance():
    with pytest.raises(DataError):
        cronbach_alpha(np.ones((5, 3)))
    with pytest.raises(ValueError):
        cronbach_alpha(np.ones((5, 1)))


def test_cronbach_invariances():
    rng = np.random.default_rng(4)
    base = rng.random((40, 1))
    m = base + 0.3 * rng.random((40, 5))
    a = cronbach_alpha(m)
    shifted = m.copy()
    shifted[:, 2] += 10.0
    assert cronbach_alpha(shifted) == pytest.approx(a, rel=1e-10)
    assert cronbach_alpha(-2.5 * m) == pytest.approx(a, rel=1e-10)


def test_cronbach_hand_value():
    # item variances 1, 1; total variance 4 -> 2 * (1 - 2/4) = 1
    assert cronbach_alpha([[0, 0], [1, 1], [2, 2]]) == pytest.approx(1.0)
    # item variances 1 and 1, totals 1,1,1 give zero total variance
    with pytest.raises(DataError):
        cronbach_alpha([[0, 2], [1, 1], [2, 0]])


def test_friedman_all_greater():
    a = np.arange(10) + 1.0
    r = friedman(a, a - 0.5)
    assert r.mean_ranks == (2.0, 1.0)
    assert r.chi2 == pytest.approx(10.0) and r.df == 1
    assert r.critical_value == pytest.approx(3.841, abs=5e-4)


def test_friedman_identical():
    a = [1.0, 2.0, 3.0]
    r = friedman(a, a)
    assert r.chi2 == 0.0 and r.p_value == 1.0


def test_friedman_length_mismatch():
    with pytest.raises(DataError):
        friedman([1, 2, 3], [1, 2])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)).filter(lambda t: t[0] != t[1]), min_size=2,
                max_size=40))
def test_friedman_sign_identity(pairs):
    a, b = zip(*pairs)
    r = friedman(a, b)
    n_plus = sum(x > y for x, y in pairs)
    n_minus = sum(x < y for x, y in pairs)
    assert r.chi2 == pytest.approx((n_plus - n_minus) ** 2 / len(pairs), abs=1e-9)
    assert sum(r.mean_ranks) == pytest.approx(3.0)


def test_wilcoxon_all_positive_five():
    b = np.zeros(5)
    r = wilcoxon_signed_rank(b + np.arange(1, 6), b)
    assert r.w_minus == 0 and r.w == 0 and r.w_plus == 15
    assert r.exact_p == pytest.approx(0.0625)


def test_wilcoxon_swap_symmetry():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=20), rng.normal(size=20)
    x, y = wilcoxon_signed_rank(a, b), wilcoxon_signed_rank(b, a)
    assert x.z == -y.z and x.p_value == y.p_value and x.w == y.w


def test_wilcoxon_zero_differences():
    with pytest.raises(DataError, match="zero"):
        wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
    r = wilcoxon_signed_rank([1, 2, 3, 4], [1, 2, 0, 0])
    assert r.n_used == 2


def test_wilcoxon_large_n_has_no_exact():
    r = wilcoxon_signed_rank(np.arange(30) + 0.5, np.zeros(30))
    assert r.exact_p is None and r.p_value < 1e-5


@pytest.mark.parametrize("n", range(1, 11))
def test_wilcoxon_exact_matches_enumeration(n):
    rng = np.random.default_rng(n)
    for _ in range(15):
        d = rng.integers(-4, 5, size=n).astype(float)
        d[d == 0] = 1.0
        if rng.random() < 0.5:
            d = np.round(d / 2)  # produces |d| ties and some zeros
            if not d.any():
                d[0] = 1.0
        r = wilcoxon_signed_rank(d, np.zeros(n))
        assert r.exact_p == pytest.approx(oracles.wilcoxon_exact_brute(d.tolist()), abs=1e-12)


def test_wilcoxon_exact_distribution_counts():
    # untied ranks 1..n: 2^n sign patterns spread over W+ in 0..n(n+1)/2
    for n in range(1, 9):
        counts = evaluate._signed_rank_distribution(2 * np.arange(1, n + 1))
        assert counts.sum() == 2 ** n
        brute = {}
        for signs in itertools.product((0, 1), repeat=n):
            w = sum(2 * (i + 1) for i, s in enumerate(signs) if s)
            brute[w] = brute.get(w, 0) + 1
        assert all(counts[w] == c for w, c in brute.items())


def test_compare_report_fields():
    rep = evaluate.compare(np.arange(10) + 1.0, np.arange(10) + 0.5, labels=("c19vi", "ccvi")).to_dict()
    assert rep["mean_rank_a"] + rep["mean_rank_b"] == 3.0
    assert rep["friedman_df"] == 1 and rep["n_pairs"] == 10
    assert rep["labels"] == ["c19vi", "ccvi"]


# -- Boruta --------------------------------------------------------------------


def test_boruta_recovers_informative_features():
    X, y = datasets.boruta_fixture(400, seed=0)
    rep = boruta(X, y, BorutaConfig(seed=0), THEME_COLUMNS)
    assert rep.confirmed() == ["t1", "t5"]
    assert sorted(rep.rejected()) == ["t2", "t3", "t4", "t6"]
    assert rep.iterations_run <= 100
    for f in rep.features:
        if f.decision is Decision.CONFIRMED:
            assert f.mean_importance > 0 and f.hits > rep.iterations_run / 2


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_boruta_coin_flips_confirm_nothing(seed):
    rng = np.random.default_rng([seed, 99])
    X, y = rng.random((200, 6)), rng.integers(0, 2, 200)
    rep = boruta(X, y, BorutaConfig(seed=seed, max_iterations=30), THEME_COLUMNS)
    assert rep.confirmed() == []


def test_boruta_constant_feature_rejected(caplog):
    X, y = datasets.boruta_fixture(200, seed=1)
    X[:, 2] = 0.5
    with caplog.at_level(logging.WARNING):
        rep = boruta(X, y, BorutaConfig(seed=1, max_iterations=20), THEME_COLUMNS)
    assert rep.decision("t3") is Decision.REJECTED and "constant" in caplog.text


def test_boruta_deterministic():
    X, y = datasets.boruta_fixture(200, seed=2)
    cfg = BorutaConfig(seed=5, max_iterations=15, n_trees=30)
    assert boruta(X, y, cfg).to_dict() == boruta(X, y, cfg, threads=3).to_dict()


def test_boruta_needs_both_classes():
    with pytest.raises(DataError):
        boruta(np.random.default_rng(0).random((10, 6)), np.zeros(10))
