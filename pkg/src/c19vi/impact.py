"""County impact ranking from IFR, deaths and cases trends.

Each series is trimmed at its first nonzero value, split at the Pettitt
changepoint when non-homogeneous, and trend-tested overall / pre / post.
The branch table in :func:`assess_parameter` maps those outcomes to an
impact rank (1 = very high ... 5 = very low) and a score (trend slope).
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import tstats
from .errors import SelectionError
from .ingest import CountySeries, ThemeVector
from .tstats import ChangePointResult, Direction, TrendResult

log = logging.getLogger(__name__)

SENTINEL = -999
"""Serialized value of the NonSignificant rank and score."""

SELECT_STREAM = 1
SPLIT_STREAM = 2


class Parameter(str, Enum):
    IFR = "IFR"
    DEATHS = "Deaths"
    CASES = "Cases"


# rank for (increasing post / homogeneous increasing, post no-trend)
_RANKS = {
    Parameter.IFR: (1, 3),
    Parameter.DEATHS: (2, 3),
    Parameter.CASES: (4, 5),
}
PRIORITY = (Parameter.IFR, Parameter.DEATHS, Parameter.CASES)


@dataclass(frozen=True)
class ParameterAssessment:
    parameter: Parameter
    homogeneity: ChangePointResult | None
    overall: TrendResult | None
    pre: TrendResult | None
    post: TrendResult | None
    rank: int | None
    score: float | None
    n: int = 0

    @property
    def significant(self) -> bool:
        return self.rank is not None


@dataclass(frozen=True)
class ImpactResult:
    fips: str
    rank: int | None
    score: float | None
    driving_parameter: Parameter | None
    assessments: tuple[ParameterAssessment, ...]

    @property
    def significant(self) -> bool:
        return self.rank is not None

    def assessment(self, parameter: Parameter) -> ParameterAssessment:
        return next(a for a in self.assessments if a.parameter == parameter)


def trim_leading_zeros(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    nz = np.flatnonzero(x != 0)
    return x[nz[0]:] if len(nz) else x[:0]


def rank_and_score(parameter: Parameter, homogeneous: bool, overall: Direction, overall_slope: float,
                   pre: Direction | None, pre_slope: float | None,
                   post: Direction | None, post_slope: float | None) -> tuple[int | None, float | None]:
    """Branch table. Returns (None, None) for NonSignificant."""
    inc_rank, flat_rank = _RANKS[parameter]
    if homogeneous:
        if overall is Direction.INCREASING:
            return inc_rank, overall_slope
        return None, None
    if pre is not Direction.INCREASING:
        return None, None
    if post is Direction.INCREASING:
        return inc_rank, post_slope
    if post is Direction.NO_TREND:
        return flat_rank, pre_slope
    # decreasing post: negative of the post trend magnitude
    return 5, -abs(post_slope)


def assess_parameter(series, parameter: Parameter | str, alpha: float = tstats.DEFAULT_ALPHA) -> ParameterAssessment:
    """Assess one already-trimmed series."""
    parameter = Parameter(parameter)
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n == 0:
        return ParameterAssessment(parameter, None, None, None, None, None, None, 0)
    homo = tstats.pettitt(x, alpha)
    overall = tstats.mann_kendall(x, alpha)
    pre = post = None
    if not homo.homogeneous:
        cp = homo.changepoint
        pre = tstats.mann_kendall(x[:cp], alpha)
        post = tstats.mann_kendall(x[cp:], alpha)
    rank, score = rank_and_score(
        parameter,
        homo.homogeneous,
        overall.direction,
        overall.slope,
        pre.direction if pre else None,
        pre.slope if pre else None,
        post.direction if post else None,
        post.slope if post else None,
    )
    return ParameterAssessment(parameter, homo, overall, pre, post, rank, score, n)


def combine(assessments: Sequence[ParameterAssessment]) -> tuple[int | None, float | None, Parameter | None]:
    """Lowest numeric rank wins; NonSignificant only when all are.

    Equal ranks resolve by IFR > Deaths > Cases.
    """
    best = None
    for a in sorted(assessments, key=lambda a: PRIORITY.index(a.parameter)):
        if a.rank is not None and (best is None or a.rank < best.rank):
            best = a
    if best is None:
        return None, None, None
    return best.rank, best.score, best.parameter


def assess_county(county: CountySeries, alpha: float = tstats.DEFAULT_ALPHA) -> ImpactResult:
    assessments = (
        assess_parameter(trim_leading_zeros(county.ifr), Parameter.IFR, alpha),
        assess_parameter(trim_leading_zeros(county.deaths), Parameter.DEATHS, alpha),
        assess_parameter(trim_leading_zeros(county.cases), Parameter.CASES, alpha),
    )
    rank, score, driver = combine(assessments)
    return ImpactResult(county.fips, rank, score, driver, assessments)


def assess_all(counties: Iterable[CountySeries], alpha: float = tstats.DEFAULT_ALPHA,
               threads: int = 1) -> list[ImpactResult]:
    """Assess every county; output order follows input order."""
    counties = list(counties)
    if threads <= 1 or len(counties) < 2:
        return [assess_county(c, alpha) for c in counties]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: assess_county(c, alpha), counties))


def rank_histogram(impacts: Iterable[ImpactResult]) -> dict:
    """Counts per rank 1..5 plus 'NonSignificant'."""
    hist = {1: 0, 2: 0, 3: 0, 4: 0, 5: 0, "NonSignificant": 0}
    for r in impacts:
        hist[r.rank if r.rank is not None else "NonSignificant"] += 1
    return hist


# -- training-set selection ----------------------------------------------------


@dataclass(frozen=True)
class TrainingRow:
    fips: str
    themes: ThemeVector
    label: int
    split: str  # "train" | "test"


@dataclass(frozen=True)
class TrainingSet:
    rows: tuple[TrainingRow, ...]
    seed: int
    n_per_class: int
    train_frac: float

    def subset(self, split: str | None = None) -> list[TrainingRow]:
        return [r for r in self.rows if split is None or r.split == split]

    def matrix(self, split: str | None = None) -> tuple[list[str], np.ndarray, np.ndarray]:
        """(fips, X, y) for the chosen split, rows in FIPS order."""
        rows = sorted(self.subset(split), key=lambda r: r.fips)
        fips = [r.fips for r in rows]
        X = np.array([r.themes.as_array() for r in rows], dtype=float).reshape(len(rows), 6)
        y = np.array([r.label for r in rows], dtype=np.int64)
        return fips, X, y


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def select_training(impacts: Iterable[ImpactResult], themes: Iterable[ThemeVector], n_per_class: int = 200,
                    train_frac: float = 0.70, seed: int = 0) -> TrainingSet:
    """Pick the most-impacted rank-1 counties (label 1) and a seeded random
    sample of NonSignificant counties (label 0), then split stratified by label.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if not 0.0 < train_frac <= 1.0:
        raise ValueError(f"train_frac must lie in (0, 1], got {train_frac}")
    theme_map = {t.fips: t for t in themes}
    pos, neg = [], []
    skipped = 0
    for r in impacts:
        if r.rank == 1 or r.rank is None:
            if r.fips not in theme_map:
                skipped += 1
                continue
            (pos if r.rank == 1 else neg).append(r)
    if skipped:
        log.warning("%d extreme-class counties have no theme vector; skipped", skipped)
    if not pos:
        raise SelectionError("no rank-1 counties available for the vulnerable class")
    if not neg:
        raise SelectionError("no NonSignificant counties available for the non-vulnerable class")

    k = min(n_per_class, len(pos), len(neg))
    if k < n_per_class:
        log.warning("only %d rank-1 and %d NonSignificant counties available; using %d per class",
                    len(pos), len(neg), k)
    pos.sort(key=lambda r: (-r.score, r.fips))
    chosen_pos = [r.fips for r in pos[:k]]
    neg_fips = sorted(r.fips for r in neg)
    pick = _rng(seed, SELECT_STREAM).choice(len(neg_fips), size=k, replace=False)
    chosen_neg = sorted(neg_fips[i] for i in pick)

    split_rng = _rng(seed, SPLIT_STREAM)
    rows = []
    for label, group in ((1, sorted(chosen_pos)), (0, chosen_neg)):
        n_train = int(round(train_frac * len(group)))
        order = split_rng.permutation(len(group))
        train_idx = set(order[:n_train].tolist())
        for i, f in enumerate(group):
            rows.append(TrainingRow(f, theme_map[f], label, "train" if i in train_idx else "test"))
    rows.sort(key=lambda r: r.fips)
    return TrainingSet(tuple(rows), int(seed), n_per_class, float(train_frac))
