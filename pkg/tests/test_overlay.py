import json
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c19vi import overlay
from c19vi.errors import DataError
from c19vi.forest import VulnerabilityScore, classify
from c19vi.impact import ImpactResult, Parameter
from c19vi.ingest import CensusRecord
from c19vi.overlay import Quadrant, disproportionality, quadrant, quadrant_counts


def score(fips, v):
    return VulnerabilityScore(fips, v, classify(v))


def census(fips, minority, poverty=0.1):
    return CensusRecord(fips, 1000, minority, poverty)


@pytest.mark.parametrize("v, m, want", [
    (0.7, 0.20, Quadrant.HIGH_VULN_HIGH_ATTR),
    (0.6, 0.20, Quadrant.LOW_VULN_HIGH_ATTR),
    (0.61, 0.13, Quadrant.HIGH_VULN_LOW_ATTR),
    (0.1, 0.05, Quadrant.LOW_VULN_LOW_ATTR),
])
def test_quadrant_examples(v, m, want):
    (rec,) = overlay.overlay([score("01001", v)], [census("01001", m)], "Minority")
    assert rec.quadrant is want


def test_poverty_threshold_default():
    (rec,) = overlay.overlay([score("01001", 0.9)], [census("01001", 0.0, 0.21)], "poverty")
    assert rec.quadrant is Quadrant.HIGH_VULN_HIGH_ATTR and rec.attribute_pct == 0.21
    (rec,) = overlay.overlay([score("01001", 0.9)], [census("01001", 0.0, 0.20)], "Poverty")
    assert rec.quadrant is Quadrant.HIGH_VULN_LOW_ATTR


def test_unknown_attribute():
    with pytest.raises(ValueError, match="unknown attribute"):
        overlay.overlay([], [], "Income")


def test_missing_on_either_side(caplog):
    with caplog.at_level(logging.WARNING):
        res = overlay.overlay([score("01001", 0.5), score("01003", 0.5)], [census("01003", 0.5), census("01005", 0.5)])
    assert [r.fips for r in res] == ["01003"]
    assert res.missing_census == ("01001",) and res.missing_scores == ("01005",)
    assert "lack" in caplog.text


def test_disproportionality():
    recs = overlay.overlay(
        [score("01001", 0.9), score("01003", 0.9), score("01005", 0.2), score("01007", 0.9)],
        [census("01001", 0.5), census("01003", 0.5), census("01005", 0.5), census("01007", 0.0)],
    )
    assert disproportionality(recs) == pytest.approx(2 / 3)
    with pytest.raises(DataError):
        disproportionality(overlay.overlay([score("01001", 0.9)], [census("01001", 0.0)]))


unit = st.floats(0, 1, allow_nan=False)
pairs = st.lists(st.tuples(unit, unit), min_size=1, max_size=60)


@settings(max_examples=200, deadline=None)
@given(pairs, unit, unit)
def test_partition_and_conservation(data, vt, at):
    scores = [score(f"{1001 + 2 * i:05d}", v) for i, (v, _) in enumerate(data)]
    cen = [census(f"{1001 + 2 * i:05d}", m) for i, (_, m) in enumerate(data)]
    recs = overlay.overlay(scores, cen, "Minority", vt, at)
    counts = quadrant_counts(recs)
    assert sum(counts.values()) == len(data)
    for r in recs:
        assert (r.quadrant in (Quadrant.HIGH_VULN_HIGH_ATTR, Quadrant.HIGH_VULN_LOW_ATTR)) == (r.c19vi > vt)
        assert (r.quadrant in (Quadrant.HIGH_VULN_HIGH_ATTR, Quadrant.LOW_VULN_HIGH_ATTR)) == (r.attribute_pct > at)


@settings(max_examples=200, deadline=None)
@given(pairs, unit, unit, unit)
def test_high_vuln_monotone_in_threshold(data, vt1, vt2, at):
    lo, hi = sorted((vt1, vt2))
    scores = [score(f"{1001 + 2 * i:05d}", v) for i, (v, _) in enumerate(data)]
    cen = [census(f"{1001 + 2 * i:05d}", m) for i, (_, m) in enumerate(data)]

    def high(t):
        c = quadrant_counts(overlay.overlay(scores, cen, "Minority", t, at))
        return c["HighVulnHighAttr"] + c["HighVulnLowAttr"]

    assert high(hi) <= high(lo)


def test_quadrant_function_strict():
    assert quadrant(0.6, 0.13, 0.6, 0.13) is Quadrant.LOW_VULN_LOW_ATTR


# -- GeoJSON ---------------------------------------------------------------


def boundaries():
    square = {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]}
    return {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "geometry": square, "properties": {"GEOID": "01001", "NAME": "A"}},
            {"type": "Feature", "geometry": square, "properties": {"GEOID": "01003", "NAME": "B"}},
            {"type": "Feature", "geometry": square, "properties": {"GEOID": 1005, "NAME": "C"}},
        ],
    }


def test_join_adds_properties_and_keeps_geometry():
    b = boundaries()
    scores = [score("01001", 0.85), score("01005", 0.1)]
    impacts = [ImpactResult("01001", 1, 0.01, Parameter.IFR, ()), ImpactResult("01005", None, None, None, ())]
    ov = overlay.overlay(scores, [census("01001", 0.3), census("01005", 0.0)])
    out = overlay.join_geojson(b, scores, impacts, ov.records)
    p = [f["properties"] for f in out["features"]]
    assert p[0]["c19vi"] == 0.85 and p[0]["class"] == "VeryHigh" and p[0]["impact_rank"] == 1
    assert p[0]["quadrant"] == "HighVulnHighAttr"
    assert p[1] == {"GEOID": "01003", "NAME": "B", "c19vi_no_data": True}
    assert p[2]["impact_rank"] == -999 and p[2]["impact_score"] == -999
    assert [f["geometry"] for f in out["features"]] == [f["geometry"] for f in b["features"]]
    assert b == boundaries()  # input untouched


def test_strip_round_trip():
    b = boundaries()
    out = overlay.join_geojson(b, [score("01001", 0.5), score("01003", 0.7)])
    assert overlay.strip_added(out) == b


def test_custom_fips_property():
    b = boundaries()
    for f in b["features"]:
        f["properties"]["fips"] = f["properties"].pop("GEOID")
    out = overlay.join_geojson(b, [score("01003", 0.5)], fips_property="fips")
    assert out["features"][1]["properties"]["c19vi"] == 0.5
    with pytest.raises(DataError, match="GEOID"):
        overlay.join_geojson(b, [])


def test_load_geojson_errors(tmp_path):
    p = tmp_path / "x.geojson"
    p.write_text('{"type": "FeatureCollection", "features": [')
    with pytest.raises(DataError, match="malformed"):
        overlay.load_geojson(p)
    p.write_text(json.dumps({"type": "Feature"}))
    with pytest.raises(DataError, match="FeatureCollection"):
        overlay.load_geojson(p)
    with pytest.raises(DataError, match="not found"):
        overlay.load_geojson(tmp_path / "missing.geojson")
