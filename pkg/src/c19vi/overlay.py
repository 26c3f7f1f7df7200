"""Overlay of C19VI with census minority / poverty shares, and GeoJSON export."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import DataError
from .ingest import CensusRecord, normalize_fips

log = logging.getLogger(__name__)

DEFAULT_VULN_THRESHOLD = 0.6
DEFAULT_ATTR_THRESHOLDS = {"Minority": 0.13, "Poverty": 0.20}
NO_DATA_PROPERTY = "c19vi_no_data"
ADDED_PROPERTIES = ("c19vi", "class", "impact_rank", "impact_score", "quadrant", NO_DATA_PROPERTY)


class Attribute(str, Enum):
    MINORITY = "Minority"
    POVERTY = "Poverty"


class Quadrant(str, Enum):
    HIGH_VULN_HIGH_ATTR = "HighVulnHighAttr"
    LOW_VULN_HIGH_ATTR = "LowVulnHighAttr"
    HIGH_VULN_LOW_ATTR = "HighVulnLowAttr"
    LOW_VULN_LOW_ATTR = "LowVulnLowAttr"


@dataclass(frozen=True)
class OverlayRecord:
    fips: str
    c19vi: float
    attribute_pct: float
    attribute: Attribute
    quadrant: Quadrant


@dataclass(frozen=True)
class OverlayResult:
    records: tuple[OverlayRecord, ...]
    missing_census: tuple[str, ...]
    missing_scores: tuple[str, ...]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def _attribute(attribute) -> Attribute:
    try:
        return Attribute(attribute if not isinstance(attribute, str) else attribute.capitalize())
    except ValueError:
        raise ValueError(f"unknown attribute {attribute!r}; expected Minority or Poverty") from None


def quadrant(c19vi: float, attribute_pct: float, vuln_threshold: float, attr_threshold: float) -> Quadrant:
    high_v = c19vi > vuln_threshold
    high_a = attribute_pct > attr_threshold
    if high_v:
        return Quadrant.HIGH_VULN_HIGH_ATTR if high_a else Quadrant.HIGH_VULN_LOW_ATTR
    return Quadrant.LOW_VULN_HIGH_ATTR if high_a else Quadrant.LOW_VULN_LOW_ATTR


def overlay(scores, census: Iterable[CensusRecord], attribute="Minority",
            vuln_threshold: float = DEFAULT_VULN_THRESHOLD, attr_threshold: float | None = None) -> OverlayResult:
    """Join scores with census records on FIPS and assign quadrants.

    Counties present in only one input are listed in the result and excluded.
    Output follows score order.
    """
    attr = _attribute(attribute)
    if attr_threshold is None:
        attr_threshold = DEFAULT_ATTR_THRESHOLDS[attr.value]
    cmap = {c.fips: c for c in census}
    scores = list(scores)
    score_fips = {s.fips for s in scores}
    records = []
    missing_census = []
    for s in scores:
        c = cmap.get(s.fips)
        if c is None:
            missing_census.append(s.fips)
            continue
        pct = c.minority_pct if attr is Attribute.MINORITY else c.poverty_pct
        records.append(OverlayRecord(s.fips, s.c19vi, pct, attr, quadrant(s.c19vi, pct, vuln_threshold, attr_threshold)))
    missing_scores = sorted(f for f in cmap if f not in score_fips)
    if missing_census:
        log.warning("%d scored counties lack census data", len(missing_census))
    if missing_scores:
        log.warning("%d census counties lack a score", len(missing_scores))
    return OverlayResult(tuple(records), tuple(missing_census), tuple(missing_scores))


def quadrant_counts(records: Iterable[OverlayRecord]) -> dict[str, int]:
    out = {q.value: 0 for q in Quadrant}
    for r in records:
        out[r.quadrant.value] += 1
    return out


def disproportionality(records: Iterable[OverlayRecord]) -> float:
    """Share of high-attribute counties that are also highly vulnerable."""
    counts = quadrant_counts(records)
    hh = counts[Quadrant.HIGH_VULN_HIGH_ATTR.value]
    lh = counts[Quadrant.LOW_VULN_HIGH_ATTR.value]
    if hh + lh == 0:
        raise DataError("no high-attribute counties to compute a disproportionality share")
    return hh / (hh + lh)


# -- GeoJSON ----------------------------------------------------------------


def _check_collection(fc) -> None:
    if not isinstance(fc, Mapping) or fc.get("type") != "FeatureCollection" or not isinstance(fc.get("features"), list):
        raise DataError("malformed GeoJSON: expected a FeatureCollection with a features array")
    for i, f in enumerate(fc["features"]):
        if not isinstance(f, Mapping) or f.get("type") != "Feature":
            raise DataError(f"malformed GeoJSON: features[{i}] is not a Feature")


def load_geojson(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            fc = json.load(fh)
    except FileNotFoundError:
        raise DataError("file not found", path) from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed GeoJSON: {exc.msg} at byte {exc.pos}", path) from None
    _check_collection(fc)
    return fc


def join_geojson(boundaries, scores=(), impacts=(), overlays=(), fips_property: str = "GEOID") -> dict:
    """Return a copy of ``boundaries`` with per-county properties added.

    Matched features gain ``c19vi``, ``class`` and, when supplied,
    ``impact_rank``/``impact_score`` and ``quadrant``; features with no score
    get ``c19vi_no_data: true``. Geometry is never touched.
    """
    _check_collection(boundaries)
    fc = copy.deepcopy(boundaries)
    smap = {s.fips: s for s in scores}
    imap = {r.fips: r for r in impacts}
    omap = {r.fips: r for r in overlays}
    for i, feat in enumerate(fc["features"]):
        props = feat.get("properties")
        if props is None:
            props = feat["properties"] = {}
        if fips_property not in props:
            raise DataError(f"features[{i}] has no {fips_property!r} property")
        fips = normalize_fips(props[fips_property])
        s = smap.get(fips)
        if s is None:
            props[NO_DATA_PROPERTY] = True
            continue
        props["c19vi"] = s.c19vi
        props["class"] = s.klass.value
        if fips in imap:
            r = imap[fips]
            props["impact_rank"] = r.rank if r.rank is not None else -999
            props["impact_score"] = r.score if r.score is not None else -999
        if fips in omap:
            props["quadrant"] = omap[fips].quadrant.value
    return fc


def strip_added(fc) -> dict:
    """Inverse of :func:`join_geojson` for property additions."""
    out = copy.deepcopy(fc)
    for feat in out["features"]:
        props = feat.get("properties") or {}
        for k in ADDED_PROPERTIES:
            props.pop(k, None)
    return out
