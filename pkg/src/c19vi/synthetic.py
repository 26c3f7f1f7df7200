"""Synthetic inputs: the 12-county branch fixture and a seeded demo dataset.

Both are bundled under ``c19vi/data`` and can be regenerated with
``c19vi synth``.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

from .ingest import (CensusRecord, CountySeries, IndexColumn, ThemeVector, write_census, write_index,
                     write_long, write_themes)

START = dt.date(2020, 1, 22)
FIXTURE_DAYS = 30
DATA_DIR = Path(__file__).parent / "data"


def _ramp(lo, hi):
    return list(range(lo, hi + 1))


def fixture_series() -> dict[str, tuple[str, list[int], list[int]]]:
    """fips -> (label, cases, deaths), 30 days each, two counties per outcome."""
    T = FIXTURE_DAYS
    z22 = [0] * 22
    step = _ramp(1, 10) + [100] * 20          # ramp, then a plateau after a jump
    peak = _ramp(1, 10) + list(range(50, 30, -1))  # ramp, then a jump and a steady decline
    return {
        # IFR homogeneous increasing: 8 nonzero IFR days over constant cases
        "01001": ("rank1-ifr-homogeneous", [100] * T, z22 + _ramp(1, 8)),
        # IFR changepoint, increasing before and after
        "01003": ("rank1-ifr-changepoint", [1000] * T, _ramp(1, 30)),
        # deaths homogeneous increasing, IFR flat at 0.1
        "01005": ("rank2-deaths-homogeneous", z22 + _ramp(10, 80)[::10], z22 + _ramp(1, 8)),
        # deaths changepoint increasing/increasing, IFR flat at 0.1
        "01007": ("rank2-deaths-changepoint", [10 * v for v in _ramp(1, 30)], _ramp(1, 30)),
        # IFR (and deaths) rise then plateau; IFR has priority
        "01009": ("rank3-ifr-plateau", [1000] * T, step),
        # deaths rise then plateau, IFR flat; cases give rank 5
        "01011": ("rank3-deaths-plateau", [10 * v for v in step], step),
        # cases homogeneous increasing, no deaths
        "01013": ("rank4-cases-homogeneous", z22 + _ramp(1, 8), [0] * T),
        # cases changepoint with slope 1 then slope 2
        "01015": ("rank4-cases-changepoint", _ramp(1, 15) + list(range(17, 47, 2)), [0] * T),
        # cases rise then plateau
        "01017": ("rank5-cases-plateau", step, [0] * T),
        # IFR/deaths rise then decline (reporting corrections)
        "01019": ("rank5-ifr-decline", [100] * T, peak),
        # flat everything
        "01021": ("nonsignificant-flat", [10] * T, [0] * T),
        # changepoint with a decreasing first segment
        "01023": ("nonsignificant-decreasing-pre", list(range(20, 10, -1)) + [1] * 20, [0] * T),
    }


def fixture_counties() -> list[CountySeries]:
    return [
        CountySeries(fips=f, name=label, cases=c, deaths=d, start_date=START)
        for f, (label, c, d) in fixture_series().items()
    ]


# -- demo dataset -------------------------------------------------------------


def _county_fips(n: int) -> list[str]:
    # spread over a handful of states, odd county codes as in real numbering
    out = []
    states = [1, 4, 5, 6, 8, 9, 10, 12, 13]
    i = 0
    while len(out) < n:
        state = states[i % len(states)]
        county = 2 * (i // len(states)) + 1
        out.append(f"{state:02d}{county:03d}")
        i += 1
    return sorted(out)


def _cumulative(daily) -> list[int]:
    return np.cumsum(np.maximum(np.asarray(daily), 0)).astype(int).tolist()


def _series_for(kind: str, T: int, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    onset = int(rng.integers(5, 20))
    days = T - onset
    if kind == "surge":
        # accelerating deaths against linearly growing cases -> rising IFR
        rate = rng.uniform(3, 8)
        daily_c = rng.poisson(rate, days) + 1
        t = np.arange(days)
        daily_d = rng.poisson(0.002 * t ** 2 * rng.uniform(0.5, 1.5))
    elif kind == "deaths":
        rate = rng.uniform(5, 15)
        daily_c = rng.poisson(rate, days) + 1
        daily_d = rng.binomial(daily_c, 0.03)
    elif kind == "cases":
        daily_c = rng.poisson(rng.uniform(1, 6), days) + 1
        daily_d = np.zeros(days, dtype=int)
    elif kind == "wave":
        t = np.arange(days)
        peak = days // 2
        daily_c = rng.poisson(np.maximum(8 - 0.6 * np.abs(t - peak), 0.05) * 3)
        daily_d = rng.binomial(daily_c, 0.01)
    else:  # quiet: a few early cases, then nothing
        daily_c = np.zeros(days, dtype=int)
        daily_c[: int(rng.integers(1, 3))] = rng.integers(1, 4)
        daily_d = np.zeros(days, dtype=int)
    cases = [0] * onset + _cumulative(daily_c)
    deaths = [0] * onset + _cumulative(daily_d)
    return cases, deaths


def demo_dataset(n_counties: int = 500, n_days: int = 60, seed: int = 7) -> dict:
    """A self-consistent synthetic national extract.

    Latent vulnerability drives both the themes (mostly t5, t3, t1) and the
    epidemic pattern, so a model trained on the extreme-impact counties has
    signal to find. Returns plain data; see :func:`write_demo_dataset`.
    """
    rng = np.random.default_rng(seed)
    fips = _county_fips(n_counties)
    latent = rng.random(n_counties)
    counties, themes, census, ccvi = [], [], [], []
    for f, v in zip(fips, latent):
        if v > 0.65:
            kind = rng.choice(["surge", "deaths", "wave"], p=[0.8, 0.1, 0.1])
        elif v < 0.45:
            kind = rng.choice(["quiet", "cases", "wave"], p=[0.75, 0.15, 0.1])
        else:
            kind = rng.choice(["deaths", "cases", "wave", "quiet", "surge"], p=[0.3, 0.3, 0.2, 0.1, 0.1])
        cases, deaths = _series_for(str(kind), n_days, rng)
        counties.append(CountySeries(f, f"County {f}", cases, deaths, START))
        noise = rng.normal(0, 0.12, 6)
        weights = np.array([0.5, 0.0, 0.6, 0.1, 0.9, 0.2])
        t = np.clip(weights * v + (1 - weights) * 0.5 + noise, 0, 1)
        t = np.round(t, 4)
        themes.append(ThemeVector(f, *map(float, t)))
        minority = float(np.round(np.clip(0.05 + 0.35 * t[2] + rng.normal(0, 0.05), 0, 1), 4))
        poverty = float(np.round(np.clip(0.05 + 0.30 * t[0] + rng.normal(0, 0.04), 0, 1), 4))
        census.append(CensusRecord(f, int(rng.integers(2_000, 500_000)), minority, poverty))
        ccvi.append(IndexColumn(f, float(np.round(t.mean(), 4))))
    return {"counties": counties, "themes": themes, "census": census, "ccvi": ccvi}


def write_jhu_wide(counties, path) -> None:
    counties = list(counties)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        dates = counties[0].dates if counties else []
        w.writerow(["UID", "FIPS", "Admin2", "Province_State"] + [f"{d.month}/{d.day}/{d.year % 100}" for d in dates])
        for c in counties:
            w.writerow([f"840{c.fips}", f"{float(int(c.fips))}", c.name, ""] + [int(v) for v in c.cases])


def _grid_geojson(fips: list[str]) -> dict:
    side = int(np.ceil(np.sqrt(len(fips))))
    feats = []
    for i, f in enumerate(fips):
        x, y = i % side, i // side
        x0, y0 = -100.0 + x * 0.5, 30.0 + y * 0.5
        ring = [[x0, y0], [x0 + 0.5, y0], [x0 + 0.5, y0 + 0.5], [x0, y0 + 0.5], [x0, y0]]
        feats.append({"type": "Feature", "properties": {"GEOID": f, "NAME": f"County {f}"},
                      "geometry": {"type": "Polygon", "coordinates": [ring]}})
    return {"type": "FeatureCollection", "features": feats}


def write_demo_dataset(out_dir, **kwargs) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = demo_dataset(**kwargs)
    paths = {
        "cases": out / "cases.csv",
        "deaths": out / "deaths.csv",
        "themes": out / "themes.csv",
        "census": out / "census.csv",
        "ccvi": out / "ccvi.csv",
        "boundaries": out / "counties.geojson",
    }
    write_jhu_wide(data["counties"], paths["cases"])
    deaths_view = [CountySeries(c.fips, c.name, c.deaths, c.deaths, c.start_date) for c in data["counties"]]
    write_jhu_wide(deaths_view, paths["deaths"])
    write_themes(data["themes"], paths["themes"])
    write_census(data["census"], paths["census"])
    write_index(data["ccvi"], paths["ccvi"])
    paths["boundaries"].write_text(json.dumps(_grid_geojson([c.fips for c in data["counties"]]), indent=1) + "\n",
                                   encoding="utf-8")
    return paths


def write_fixture(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "series.csv"
    write_long(fixture_counties(), path)
    return path
