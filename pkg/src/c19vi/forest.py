"""Random-forest classifier (Gini, bootstrap, per-split feature sampling).

The C19VI score is the forest's mean leaf positive fraction for a county's
six theme percentiles. Tree growth and traversal are numba kernels; all
randomness is drawn in numpy from a generator seeded by (seed, tree index),
so a model depends only on the data, the hyperparameters and the seed.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import DataError, ModelFormatError
from .ingest import THEME_COLUMNS, ThemeVector

log = logging.getLogger(__name__)

FORMAT_VERSION = "c19vi-forest/1"
TREE_STREAM = 3
VOTES = ("soft", "hard")


# -- kernels ------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _best_split(X, y, idx, start, end, features, min_leaf):
    """Best (feature, threshold, gain) over ``features`` for rows idx[start:end].

    Gain is the decrease in size-weighted Gini impurity. Candidate thresholds
    are midpoints between consecutive distinct values. Returns feature -1
    when no split has positive gain.
    """
    m = end - start
    pos = 0
    for k in range(start, end):
        pos += y[idx[k]]
    neg = m - pos
    parent = (pos * pos + neg * neg) / m
    best_f = -1
    best_t = 0.0
    best_score = parent
    vals = np.empty(m)
    labs = np.empty(m, dtype=np.int64)
    for f in features:
        for k in range(m):
            vals[k] = X[idx[start + k], f]
        order = np.argsort(vals, kind="mergesort")
        pl = 0
        for i in range(m - 1):
            pl += y[idx[start + order[i]]]
            nl = i + 1
            nr = m - nl
            v0 = vals[order[i]]
            v1 = vals[order[i + 1]]
            if v0 == v1 or nl < min_leaf or nr < min_leaf:
                continue
            ql = nl - pl
            pr = pos - pl
            qr = neg - ql
            # maximizing sum(count^2)/n over children == minimizing weighted Gini
            score = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr
            if score > best_score + 1e-9:
                best_score = score
                best_f = f
                t = 0.5 * (v0 + v1)
                if t >= v1:
                    t = v0
                best_t = t
    gain = (best_score - parent) / m
    return best_f, best_t, gain


@numba.njit(cache=True, nogil=True)
def _grow_tree(X, y, sample, noise, mtry, max_depth, min_leaf):
    n = sample.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    idx = sample.copy()
    scratch = np.empty(n, dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        pos = 0
        for k in range(start, end):
            pos += y[idx[k]]
        count[node] = m
        value[node] = pos / m
        if pos == 0 or pos == m or m < 2 * min_leaf or (max_depth > 0 and depth >= max_depth):
            continue
        features = np.argsort(noise[node], kind="mergesort")[:mtry]
        f, t, gain = _best_split(X, y, idx, start, end, features, min_leaf)
        if f < 0 or gain <= 0.0:
            continue
        nl = 0
        nr = 0
        for k in range(start, end):
            r = idx[k]
            if X[r, f] <= t:
                idx[start + nl] = r
                nl += 1
            else:
                scratch[nr] = r
                nr += 1
        for k in range(nr):
            idx[start + nl + k] = scratch[k]
        feature[node] = f
        threshold[node] = t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left child is expanded first
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _tree_leaf_values(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@numba.njit(cache=True, nogil=True)
def _forest_predict(X, feature, threshold, left, right, value, offsets, hard):
    n_trees = offsets.shape[0] - 1
    out = np.zeros(X.shape[0])
    for r in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            node = offsets[t]
            base = offsets[t]
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            v = value[node]
            if hard:
                if v > 0.5:
                    v = 1.0
                elif v < 0.5:
                    v = 0.0
            acc += v
        out[r] = acc / n_trees
    return out


# -- model --------------------------------------------------------------------


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int = 2
    max_depth: int = 0  # 0 = unlimited
    min_leaf: int = 1
    seed: int = 0
    vote: str = "soft"

    def validate(self, n_features: int) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 1 <= self.mtry <= n_features:
            raise ValueError(f"mtry must lie in [1, {n_features}], got {self.mtry}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.vote not in VOTES:
            raise ValueError(f"vote must be one of {VOTES}, got {self.vote!r}")


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays; node 0 is the root, feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_values(self, X) -> np.ndarray:
        return _tree_leaf_values(np.ascontiguousarray(X, dtype=float), self.feature, self.threshold,
                                 self.left, self.right, self.value)

    def to_record(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"positive_fraction": float(self.value[node]), "sample_count": int(self.count[node])}
        return {
            "feature_index": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_record(int(self.left[node])),
            "right": self.to_record(int(self.right[node])),
        }

    @classmethod
    def from_record(cls, record: dict, n_features: int) -> "Tree":
        feature, threshold, left, right, value, count = [], [], [], [], [], []

        def visit(rec):
            if not isinstance(rec, dict):
                raise ModelFormatError("tree node is not an object")
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            if "feature_index" in rec:
                f = rec["feature_index"]
                if not isinstance(f, int) or not 0 <= f < n_features:
                    raise ModelFormatError(f"feature_index {f!r} out of range")
                feature[i] = f
                threshold[i] = float(rec["threshold"])
                value.append(math.nan)
                count.append(0)
                left[i] = visit(rec["left"])
                right[i] = visit(rec["right"])
                value[i] = 0.0
            else:
                v = float(rec["positive_fraction"])
                if not 0.0 <= v <= 1.0:
                    raise ModelFormatError(f"positive_fraction {v} outside [0, 1]")
                value.append(v)
                count.append(int(rec["sample_count"]))
            return i

        try:
            visit(record)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"malformed tree node: {exc}") from None
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(value, dtype=float),
            np.array(count, dtype=np.int64),
        )


@dataclass(frozen=True, eq=False)
class RandomForestModel:
    trees: tuple[Tree, ...]
    params: ForestParams
    feature_names: tuple[str, ...] = THEME_COLUMNS
    _flat: tuple = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.trees) != self.params.n_trees:
            raise ValueError(f"model has {len(self.trees)} trees, params say {self.params.n_trees}")
        offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([t.n_nodes for t in self.trees])
        flat = (
            np.concatenate([t.feature for t in self.trees]),
            np.concatenate([t.threshold for t in self.trees]),
            np.concatenate([t.left for t in self.trees]),
            np.concatenate([t.right for t in self.trees]),
            np.concatenate([t.value for t in self.trees]),
            offsets,
        )
        object.__setattr__(self, "_flat", flat)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict_matrix(self, X, vote: str | None = None) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            log.warning("features outside [0, 1] passed to predict")
        vote = vote or self.params.vote
        if vote not in VOTES:
            raise ValueError(f"vote must be one of {VOTES}, got {vote!r}")
        return _forest_predict(X, *self._flat, vote == "hard")


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), TREE_STREAM, int(tree_index)])


def _fit_one(X, y, params: ForestParams, tree_index: int):
    n, p = X.shape
    rng = _tree_rng(params.seed, tree_index)
    sample = rng.integers(0, n, size=n).astype(np.int64)
    noise = rng.random((2 * n + 1, p))
    arrays = _grow_tree(X, y, sample, noise, params.mtry, params.max_depth, params.min_leaf)
    return Tree(*arrays), sample


def fit_forest(X, y, params: ForestParams = ForestParams(), feature_names: Sequence[str] | None = None,
               threads: int = 1, return_inbag: bool = False):
    """Fit on a feature matrix and 0/1 labels.

    Rows are used in the order given; callers wanting order-independence
    sort them first. With ``return_inbag`` also returns the bootstrap index
    arrays, one per tree.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int64))
    if X.ndim != 2 or len(X) != len(y) or len(X) == 0:
        raise ValueError("X must be a non-empty 2-D matrix with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise DataError("training data contains a single class")
    params.validate(X.shape[1])
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise ValueError("feature_names length does not match feature count")

    def job(i):
        return _fit_one(X, y, params, i)

    if threads <= 1:
        fitted = [job(i) for i in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(job, range(params.n_trees)))
    model = RandomForestModel(tuple(t for t, _ in fitted), params, names)
    if return_inbag:
        return model, [s for _, s in fitted]
    return model


def train(training, params: ForestParams = ForestParams(), threads: int = 1) -> RandomForestModel:
    """Fit on the train split of a TrainingSet (rows in FIPS order)."""
    _, X, y = training.matrix("train")
    if len(y) == 0:
        raise DataError("training split is empty")
    return fit_forest(X, y, params, THEME_COLUMNS, threads=threads)


def predict(model: RandomForestModel, features, vote: str | None = None) -> float:
    """Score one county; ``features`` is a ThemeVector or a length-6 sequence."""
    x = features.as_array() if isinstance(features, ThemeVector) else np.asarray(features, dtype=float)
    return float(model.predict_matrix(x.reshape(1, -1), vote)[0])


# -- classes --------------------------------------------------------------


class VulnClass(str, Enum):
    VERY_LOW = "VeryLow"
    LOW = "Low"
    MODERATE = "Moderate"
    HIGH = "High"
    VERY_HIGH = "VeryHigh"


CLASS_ORDER = (VulnClass.VERY_LOW, VulnClass.LOW, VulnClass.MODERATE, VulnClass.HIGH, VulnClass.VERY_HIGH)


def classify(score: float) -> VulnClass:
    """Half-open 0.2-wide bins; 1.0 belongs to VeryHigh."""
    if not (0.0 <= score <= 1.0):
        raise ValueError(f"score {score} outside [0, 1]")
    for i, edge in enumerate((0.2, 0.4, 0.6, 0.8)):
        if score < edge:
            return CLASS_ORDER[i]
    return VulnClass.VERY_HIGH


@dataclass(frozen=True)
class VulnerabilityScore:
    fips: str
    c19vi: float
    klass: VulnClass


def score_counties(model: RandomForestModel, themes: Sequence[ThemeVector], vote: str | None = None
                   ) -> list[VulnerabilityScore]:
    themes = list(themes)
    if not themes:
        return []
    X = np.array([t.as_array() for t in themes])
    s = model.predict_matrix(X, vote)
    return [VulnerabilityScore(t.fips, float(v), classify(float(v))) for t, v in zip(themes, s)]


# -- persistence -----------------------------------------------------------


def model_to_document(model: RandomForestModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "hyperparameters": asdict(model.params),
        "feature_names": list(model.feature_names),
        "trees": [t.to_record() for t in model.trees],
    }


def dumps_model(model: RandomForestModel) -> str:
    return json.dumps(model_to_document(model), sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: RandomForestModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def loads_model(text: str, path=None) -> RandomForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model file: {exc.msg}", path=path,
                               offset=len(text[:exc.pos].encode("utf-8"))) from None
    if not isinstance(doc, dict):
        raise ModelFormatError("model document is not an object", path=path)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version!r}, expected {FORMAT_VERSION!r}",
                               path=path)
    try:
        params = ForestParams(**doc["hyperparameters"])
        names = tuple(doc["feature_names"])
        trees = tuple(Tree.from_record(r, len(names)) for r in doc["trees"])
        params.validate(len(names))
        return RandomForestModel(trees, params, names)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}", path=path) from None


def load_model(path) -> RandomForestModel:
    path = Path(path)
    if not path.exists():
        raise DataError("model file not found", path)
    return loads_model(path.read_text(encoding="utf-8"), path=path)
