"""CSV / JSON writers and readers for pipeline artifacts.

Floats are written with ``repr`` so every file round-trips exactly and is
byte-stable across runs.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

from .errors import DataError
from .forest import VulnClass, VulnerabilityScore
from .impact import SENTINEL, ImpactResult, Parameter, TrainingRow, TrainingSet
from .ingest import ThemeVector, normalize_fips
from .overlay import OverlayRecord

IMPACT_COLUMNS = ("fips", "rank", "score", "driving_parameter", "ifr_rank", "ifr_score",
                  "deaths_rank", "deaths_score", "cases_rank", "cases_score")
SCORES_COLUMNS = ("fips", "c19vi", "class")
OVERLAY_COLUMNS = ("fips", "c19vi", "attribute", "attribute_pct", "quadrant")
NONSIGNIFICANT = "NonSignificant"


def _num(v) -> str:
    if v is None:
        return str(SENTINEL)
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_impact(impacts: Iterable[ImpactResult], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(IMPACT_COLUMNS)
        for r in impacts:
            row = [r.fips, _num(r.rank), _num(r.score),
                   r.driving_parameter.value if r.driving_parameter else NONSIGNIFICANT]
            for p in (Parameter.IFR, Parameter.DEATHS, Parameter.CASES):
                a = r.assessment(p)
                row += [_num(a.rank), _num(a.score)]
            w.writerow(row)


def _read_rows(path, columns):
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"missing column(s) {', '.join(missing)}", path, 1)
        for row in reader:
            yield reader.line_num, row


def read_impact(path) -> list[ImpactResult]:
    """Rank/score-level view of an impact CSV (per-parameter details dropped)."""
    out = []
    for line, row in _read_rows(path, ("fips", "rank", "score")):
        fips = normalize_fips(row["fips"])
        if fips is None:
            raise DataError(f"invalid FIPS {row['fips']!r}", path, line)
        try:
            rank = int(row["rank"])
            score = float(row["score"])
        except ValueError:
            raise DataError("non-numeric rank/score", path, line) from None
        if rank == SENTINEL:
            out.append(ImpactResult(fips, None, None, None, ()))
        elif 1 <= rank <= 5:
            drv = row.get("driving_parameter")
            out.append(ImpactResult(fips, rank, score, Parameter(drv) if drv in Parameter._value2member_map_ else None, ()))
        else:
            raise DataError(f"rank {rank} not in 1..5 or {SENTINEL}", path, line)
    return out


def write_scores(scores: Iterable[VulnerabilityScore], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(SCORES_COLUMNS)
        for s in scores:
            w.writerow([s.fips, repr(float(s.c19vi)), s.klass.value])


def read_scores(path) -> list[VulnerabilityScore]:
    out = []
    for line, row in _read_rows(path, SCORES_COLUMNS):
        try:
            out.append(VulnerabilityScore(row["fips"], float(row["c19vi"]), VulnClass(row["class"])))
        except ValueError as exc:
            raise DataError(f"bad scores row: {exc}", path, line) from None
    return out


def write_overlay(records: Iterable[OverlayRecord], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(OVERLAY_COLUMNS)
        for r in records:
            w.writerow([r.fips, repr(float(r.c19vi)), r.attribute.value, repr(float(r.attribute_pct)), r.quadrant.value])


def training_set_document(ts: TrainingSet) -> dict:
    return {
        "seed": ts.seed,
        "n_per_class": ts.n_per_class,
        "train_frac": ts.train_frac,
        "counts": {
            "train": len(ts.subset("train")),
            "test": len(ts.subset("test")),
            "label_1": sum(r.label for r in ts.rows),
            "label_0": sum(1 - r.label for r in ts.rows),
        },
        "rows": [{"fips": r.fips, "label": r.label, "split": r.split} for r in ts.rows],
    }


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_training_set(path, themes: Iterable[ThemeVector]) -> TrainingSet:
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        theme_map = {t.fips: t for t in themes}
        rows = []
        for r in doc["rows"]:
            if r["fips"] not in theme_map:
                raise DataError(f"training county {r['fips']} missing from themes", path)
            rows.append(TrainingRow(r["fips"], theme_map[r["fips"]], int(r["label"]), r["split"]))
        return TrainingSet(tuple(rows), int(doc["seed"]), int(doc["n_per_class"]), float(doc["train_frac"]))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed training-set manifest: {exc}", path) from None

