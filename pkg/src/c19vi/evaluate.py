"""Validation and comparison statistics.

ROC-AUC and Cronbach's alpha for the fitted index; Friedman and Wilcoxon
signed-rank tests against a comparison index; Boruta all-relevant feature
selection on top of :mod:`c19vi.forest`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .errors import DataError
from .forest import ForestParams, fit_forest

log = logging.getLogger(__name__)

BORUTA_STREAM = 4
EXACT_WILCOXON_MAX_N = 12


def _labels(labels, n) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise DataError("AUC needs both classes among the labels")
    return y.astype(np.int64)


def roc_auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative (ties count 1/2).

    Computed from mid-ranks, which equals (wins + ties/2) / (n1 * n0).
    """
    s = np.asarray(scores, dtype=float)
    y = _labels(labels, len(s))
    n1 = int(y.sum())
    n0 = len(y) - n1
    ranks = stats.rankdata(s)  # average ranks
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds), one point per distinct score, descending."""
    s = np.asarray(scores, dtype=float)
    y = _labels(labels, len(s))
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (len(y) - y.sum())]
    return fpr, tpr, np.r_[np.inf, s[last]]


def cronbach_alpha(items) -> float:
    """k/(k-1) * (1 - sum of item variances / variance of row totals)."""
    m = np.asarray(items, dtype=float)
    if m.ndim != 2:
        raise ValueError("items must be an n_rows x k_items matrix")
    n, k = m.shape
    if k < 2 or n < 2:
        raise ValueError(f"need at least 2 rows and 2 items, got {n} x {k}")
    item_var = m.var(axis=0, ddof=1)
    total_var = m.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise DataError("total score variance is zero")
    return float(k / (k - 1) * (1.0 - item_var.sum() / total_var))


@dataclass(frozen=True)
class FriedmanResult:
    chi2: float
    df: int
    p_value: float
    mean_ranks: tuple[float, ...]
    n: int

    @property
    def critical_value(self) -> float:
        """Upper 5% point of chi-square with ``df`` degrees of freedom."""
        return float(stats.chi2.ppf(0.95, self.df))


def friedman(*samples) -> FriedmanResult:
    """Friedman rank test over k >= 2 related samples (no tie correction)."""
    if len(samples) < 2:
        raise ValueError("friedman needs at least two samples")
    cols = [np.asarray(s, dtype=float) for s in samples]
    n = len(cols[0])
    if any(c.shape != (n,) for c in cols):
        raise DataError("friedman samples must be 1-D with equal lengths")
    if n < 2:
        raise ValueError("friedman needs at least 2 rows")
    k = len(cols)
    ranks = stats.rankdata(np.column_stack(cols), axis=1)
    mean_ranks = ranks.mean(axis=0)
    chi2 = 12.0 * n / (k * (k + 1)) * float(np.sum((mean_ranks - (k + 1) / 2.0) ** 2))
    df = k - 1
    return FriedmanResult(chi2, df, float(stats.chi2.sf(chi2, df)), tuple(float(r) for r in mean_ranks), n)


@dataclass(frozen=True)
class WilcoxonResult:
    w: float
    w_plus: float
    w_minus: float
    z: float
    p_value: float
    n_used: int
    exact_p: float | None = None


def _doubled_ranks(absd: np.ndarray) -> np.ndarray:
    r2 = np.rint(2 * stats.rankdata(absd)).astype(np.int64)
    return r2


def _signed_rank_distribution(r2: np.ndarray) -> np.ndarray:
    """counts[s] = number of sign patterns whose doubled W+ equals s."""
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def _exact_p(r2: np.ndarray, w2_plus: int) -> float:
    counts = _signed_rank_distribution(r2)
    total = int(r2.sum())
    # doubled W+ is symmetric about total/2; compare |2*W2 - total| in integers
    dev = abs(2 * w2_plus - total)
    s = np.arange(total + 1)
    extreme = int(counts[np.abs(2 * s - total) >= dev].sum())
    return extreme / float(2 ** len(r2))


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples a, b.

    Zero differences are dropped; |d| ties get average ranks. ``w`` is
    min(W+, W-). ``z`` is the continuity-corrected, tie-corrected normal
    deviate of W+ (so swapping a and b flips its sign). For n' <= 12 the
    exact permutation p is also reported.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("wilcoxon samples must be 1-D with equal lengths")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DataError("all paired differences are zero")
    absd = np.abs(d)
    r2 = _doubled_ranks(absd)
    w2_plus = int(r2[d > 0].sum())
    w2_minus = int(r2[d < 0].sum())
    w_plus, w_minus = w2_plus / 2.0, w2_minus / 2.0
    mu = n * (n + 1) / 4.0
    _, t = np.unique(absd, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(t ** 3 - t)) / 48.0
    dev = w_plus - mu
    if var <= 0:
        z = 0.0
    else:
        z = math.copysign(max(abs(dev) - 0.5, 0.0), dev) / math.sqrt(var)
    p = float(min(1.0, 2.0 * ndtr(-abs(z))))
    exact = _exact_p(r2, w2_plus) if n <= EXACT_WILCOXON_MAX_N else None
    return WilcoxonResult(min(w_plus, w_minus), w_plus, w_minus, z, p, n, exact)


@dataclass(frozen=True)
class ComparisonReport:
    friedman: FriedmanResult
    wilcoxon: WilcoxonResult
    n_pairs: int
    labels: tuple[str, str] = ("a", "b")

    def to_dict(self) -> dict:
        f, w = self.friedman, self.wilcoxon
        return {
            "n_pairs": self.n_pairs,
            "labels": list(self.labels),
            "friedman_chi2": f.chi2,
            "friedman_df": f.df,
            "friedman_p": f.p_value,
            "friedman_critical_value_0.05": f.critical_value,
            "mean_rank_a": f.mean_ranks[0],
            "mean_rank_b": f.mean_ranks[1],
            "wilcoxon_w": w.w,
            "wilcoxon_w_plus": w.w_plus,
            "wilcoxon_w_minus": w.w_minus,
            "wilcoxon_z": w.z,
            "wilcoxon_p": w.p_value,
            "wilcoxon_exact_p": w.exact_p,
            "wilcoxon_n_used": w.n_used,
        }


def compare(a, b, labels=("a", "b")) -> ComparisonReport:
    return ComparisonReport(friedman(a, b), wilcoxon_signed_rank(a, b), len(np.asarray(a)), tuple(labels))


@dataclass(frozen=True)
class ValidationReport:
    train_auc: float
    test_auc: float
    cronbach_alpha: float
    n_train: int
    n_test: int
    alpha_items: int = 6

    def to_dict(self) -> dict:
        return {
            "train_auc": self.train_auc,
            "test_auc": self.test_auc,
            "cronbach_alpha": self.cronbach_alpha,
            "cronbach_items": self.alpha_items,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


# -- Boruta -----------------------------------------------------------------


class Decision(str, Enum):
    CONFIRMED = "Confirmed"
    REJECTED = "Rejected"
    TENTATIVE = "Tentative"


@dataclass(frozen=True)
class BorutaConfig:
    max_iterations: int = 100
    p_threshold: float = 0.01
    seed: int = 0
    n_trees: int = 100
    min_leaf: int = 1
    max_depth: int = 0


@dataclass(frozen=True)
class FeatureImportance:
    name: str
    mean_importance: float
    median_importance: float
    min_importance: float
    max_importance: float
    hits: int
    decision: Decision


def _finite_or_none(v: float):
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class BorutaReport:
    features: tuple[FeatureImportance, ...]
    iterations_run: int
    shadow_max: tuple[float, ...] = field(default=(), repr=False)

    def decision(self, name: str) -> Decision:
        return next(f.decision for f in self.features if f.name == name)

    def confirmed(self) -> list[str]:
        return [f.name for f in self.features if f.decision is Decision.CONFIRMED]

    def rejected(self) -> list[str]:
        return [f.name for f in self.features if f.decision is Decision.REJECTED]

    def to_dict(self) -> dict:
        return {
            "iterations_run": self.iterations_run,
            "features": [
                {
                    "name": f.name,
                    "mean_importance": _finite_or_none(f.mean_importance),
                    "median_importance": _finite_or_none(f.median_importance),
                    "min_importance": _finite_or_none(f.min_importance),
                    "max_importance": _finite_or_none(f.max_importance),
                    "hits": f.hits,
                    "decision": f.decision.value,
                }
                for f in self.features
            ],
        }


def permutation_importance_z(X, y, params: ForestParams, rng: np.random.Generator, threads: int = 1) -> np.ndarray:
    """Out-of-bag permutation importance per column, scaled to a Z score.

    For each tree, the accuracy drop on its out-of-bag rows when one column
    is shuffled among them; Z = mean drop / (sd / sqrt(n_trees)).
    """
    model, inbag = fit_forest(X, y, params, threads=threads, return_inbag=True)
    n, p = X.shape
    drops = np.zeros((model.n_trees, p))
    for t, (tree, sample) in enumerate(zip(model.trees, inbag)):
        oob = np.ones(n, dtype=bool)
        oob[sample] = False
        rows = np.flatnonzero(oob)
        if len(rows) == 0:
            continue
        Xo = X[rows]
        yo = y[rows]
        base = np.mean((tree.leaf_values(Xo) > 0.5) == yo)
        for j in range(p):
            Xp = Xo.copy()
            Xp[:, j] = Xp[rng.permutation(len(rows)), j]
            drops[t, j] = base - np.mean((tree.leaf_values(Xp) > 0.5) == yo)
    mean = drops.mean(axis=0)
    sd = drops.std(axis=0, ddof=1) if model.n_trees > 1 else np.zeros(p)
    z = np.zeros(p)
    ok = sd > 0
    z[ok] = mean[ok] / (sd[ok] / math.sqrt(model.n_trees))
    return z


def boruta(features, labels, config: BorutaConfig = BorutaConfig(), feature_names: Sequence[str] | None = None,
           threads: int = 1) -> BorutaReport:
    """Boruta all-relevant selection with shadow features and binomial tests.

    Each iteration appends one independently shuffled copy of every feature,
    fits a forest on the real features plus their shadows, and
    records a hit for each real feature whose importance beats the best
    shadow. Two-sided binomial tests (hits vs. iterations at 1/2), Bonferroni
    corrected over undecided features, move features to Confirmed/Rejected.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("features must be n x p with one label per row")
    if len(np.unique(y)) < 2:
        raise DataError("Boruta needs both classes among the labels")
    n, p = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(p))
    if not 0.0 < config.p_threshold < 1.0:
        raise ValueError("p_threshold must lie in (0, 1)")

    decision = [Decision.TENTATIVE] * p
    constant = [bool(np.all(X[:, j] == X[0, j])) for j in range(p)]
    for j in range(p):
        if constant[j]:
            log.warning("feature %s is constant; rejected", names[j])
            decision[j] = Decision.REJECTED
    hits = np.zeros(p, dtype=np.int64)
    history: list[list[float]] = [[] for _ in range(p)]
    shadow_max: list[float] = []

    it = 0
    while it < config.max_iterations and any(d is Decision.TENTATIVE for d in decision):
        it += 1
        rng = np.random.default_rng([int(config.seed), BORUTA_STREAM, it])
        active = [j for j in range(p) if not constant[j]]
        real = X[:, active]
        shadows = np.column_stack([real[rng.permutation(n), k] for k in range(len(active))])
        Xa = np.column_stack([real, shadows])
        mtry = max(1, int(math.floor(math.sqrt(Xa.shape[1]))))
        params = ForestParams(n_trees=config.n_trees, mtry=mtry, max_depth=config.max_depth,
                              min_leaf=config.min_leaf, seed=int(rng.integers(2 ** 31)))
        z = permutation_importance_z(Xa, y, params, rng, threads=threads)
        z_real = z[: len(active)]
        smax = float(z[len(active):].max())
        shadow_max.append(smax)
        for pos, j in enumerate(active):
            history[j].append(float(z_real[pos]))
            if decision[j] is not Decision.REJECTED and z_real[pos] > smax:
                hits[j] += 1

        undecided = [j for j in range(p) if decision[j] is Decision.TENTATIVE]
        level = config.p_threshold / len(undecided)
        for j in undecided:
            # two-sided p = 2 * min(upper tail, lower tail) of Binomial(it, 1/2)
            p_hi = stats.binom.sf(hits[j] - 1, it, 0.5)
            p_lo = stats.binom.cdf(hits[j], it, 0.5)
            if 2 * p_hi < level:
                decision[j] = Decision.CONFIRMED
            elif 2 * p_lo < level:
                decision[j] = Decision.REJECTED

    feats = []
    for j in range(p):
        h = np.asarray(history[j]) if history[j] else np.array([math.nan])
        feats.append(FeatureImportance(
            names[j],
            float(np.mean(h)),
            float(np.median(h)),
            float(np.min(h)),
            float(np.max(h)),
            int(hits[j]),
            decision[j],
        ))
    return BorutaReport(tuple(feats), it, tuple(shadow_max))
