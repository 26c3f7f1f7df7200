"""Command-line pipeline.

Every subcommand reads a shared configuration (``--config`` file, then
flag overrides), prints the effective configuration, and writes its
artifacts under ``--out``. Downstream subcommands pick up upstream
artifacts from the same directory unless given explicit paths.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__, evaluate, forest, impact, ingest, outputs, overlay, synthetic
from .errors import C19VIError, DataError, InvariantError

log = logging.getLogger("c19vi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

REFERENCE_CLASS_PCT = {"VeryLow": 11.68, "Low": 22.34, "Moderate": 23.32, "High": 24.34, "VeryHigh": 18.30}
REFERENCE_SHARES = {"Minority": 0.7557, "Poverty": 0.8284}


class UsageError(C19VIError):
    pass


@dataclass
class PipelineConfig:
    cases: str | None = None
    deaths: str | None = None
    themes: str | None = None
    census: str | None = None
    ccvi: str | None = None
    boundaries: str | None = None
    out: str = "c19vi-out"
    end_date: str | None = None
    mode: str = "cumulative"
    alpha: float = 0.05
    n_per_class: int = 200
    train_frac: float = 0.70
    n_trees: int = 500
    mtry: int = 2
    max_depth: int = 0
    min_leaf: int = 1
    vote: str = "soft"
    seed: int | None = None
    vuln_threshold: float = 0.6
    minority_threshold: float = 0.13
    poverty_threshold: float = 0.20
    threads: int = 1
    fips_property: str = "GEOID"
    cronbach_with_c19vi: bool = False
    boruta_iterations: int = 100
    boruta_p: float = 0.01
    boruta_trees: int = 100
    # upstream artifacts; default to files under ``out``
    impact: str | None = None
    model: str | None = None
    training_set: str | None = None
    scores: str | None = None

    def validate(self) -> None:
        def unit(name, lo_open=False, hi_open=False):
            v = getattr(self, name)
            ok = (v > 0 if lo_open else v >= 0) and (v < 1 if hi_open else v <= 1)
            if not ok:
                raise UsageError(f"{name} = {v} is out of range")

        unit("alpha", lo_open=True, hi_open=True)
        unit("train_frac", lo_open=True)
        unit("boruta_p", lo_open=True, hi_open=True)
        for name in ("vuln_threshold", "minority_threshold", "poverty_threshold"):
            unit(name)
        for name in ("n_per_class", "n_trees", "min_leaf", "threads", "boruta_iterations", "boruta_trees"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if not 1 <= self.mtry <= 6:
            raise UsageError("mtry must lie in [1, 6]")
        if self.max_depth < 0:
            raise UsageError("max_depth must be >= 0")
        if self.mode not in ingest.MODES:
            raise UsageError(f"mode must be one of {ingest.MODES}")
        if self.vote not in forest.VOTES:
            raise UsageError(f"vote must be one of {forest.VOTES}")
        if self.end_date is not None:
            try:
                dt.date.fromisoformat(self.end_date)
            except ValueError:
                raise UsageError(f"end_date {self.end_date!r} is not an ISO date") from None

    def require(self, *names) -> None:
        missing = [n for n in names if getattr(self, n) in (None, "")]
        if missing:
            raise UsageError("missing required setting(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def artifact(self, name: str, default: str) -> Path:
        given = getattr(self, name)
        return Path(given) if given else self.out_dir / default

    def forest_params(self) -> forest.ForestParams:
        return forest.ForestParams(self.n_trees, self.mtry, self.max_depth, self.min_leaf, int(self.seed), self.vote)


ARTIFACTS = {
    "impact": "impact.csv",
    "model": "model.json",
    "training_set": "training_set.json",
    "scores": "scores.csv",
    "validation": "validation.json",
    "comparison": "comparison.json",
    "boruta": "boruta.json",
    "overlay_minority": "overlay_minority.csv",
    "overlay_poverty": "overlay_poverty.csv",
    "overlay_summary": "overlay_summary.json",
    "geojson": "c19vi.geojson",
    "manifest": "run_manifest.json",
}


# -- argument parsing ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="YAML or JSON config file; flags override its values")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "mode":
            g.add_argument("--diff", dest="mode", action="store_const", const="diff", default=None,
                           help="trend-test daily increments instead of cumulative counts")
            continue
        if f.type in ("bool", bool):
            g.add_argument(flag, dest=f.name, action="store_true", default=None)
            continue
        kind = {"float": float, "int": int, "int | None": int}.get(str(f.type), str)
        g.add_argument(flag, dest=f.name, type=kind, default=None)
    return p


SUBCOMMANDS = ("impact", "train", "predict", "validate", "compare", "boruta", "overlay", "geojson", "pipeline",
               "synth")


def build_parser() -> argparse.ArgumentParser:
    common = _config_flags()
    parser = _Parser(prog="c19vi", description="County COVID-19 impact ranking and vulnerability index pipeline.")
    parser.add_argument("--version", action="version", version=f"c19vi {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "impact": "rank and score every county from its cases/deaths/IFR trends",
        "train": "select the training set and fit the random forest",
        "predict": "score every county with a theme vector",
        "validate": "train/test AUC and Cronbach's alpha",
        "compare": "Friedman and Wilcoxon tests against a comparison index",
        "boruta": "Boruta importance of the six themes",
        "overlay": "minority / poverty quadrant overlay",
        "geojson": "attach scores to county boundaries",
        "pipeline": "impact -> train -> predict -> validate -> overlay, with a run manifest",
        "synth": "write the bundled synthetic datasets to --out",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DataError("config file not found", path)
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise UsageError(f"{path}: cannot parse config: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: config must be a mapping")
        unknown = sorted(set(doc) - known)
        if unknown:
            raise UsageError(f"{path}: unknown config key(s): {', '.join(unknown)}")
        for k, v in doc.items():
            if isinstance(v, (dt.date,)):
                v = v.isoformat()
            setattr(cfg, k, v)
    for k in known:
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


def print_config(cfg: PipelineConfig, command: str, stream=None) -> None:
    stream = stream or sys.stdout
    doc = {k: v for k, v in dataclasses.asdict(cfg).items()}
    print(f"# c19vi {command} - effective configuration", file=stream)
    for line in yaml.safe_dump(doc, sort_keys=True, default_flow_style=False).splitlines():
        print(f"#   {line}", file=stream)


# -- stage helpers ---------------------------------------------------------------


def _end_date(cfg):
    return dt.date.fromisoformat(cfg.end_date) if cfg.end_date else None


def _load_series(cfg):
    cfg.require("cases", "deaths")
    return ingest.load_series(cfg.cases, cfg.deaths, _end_date(cfg), cfg.mode)


def _themes(cfg):
    cfg.require("themes")
    return ingest.load_themes(cfg.themes)


def _impacts(cfg):
    path = cfg.artifact("impact", ARTIFACTS["impact"])
    if cfg.impact or path.exists():
        return outputs.read_impact(path)
    return impact.assess_all(_load_series(cfg), cfg.alpha, cfg.threads)


def _model(cfg):
    return forest.load_model(cfg.artifact("model", ARTIFACTS["model"]))


def _training(cfg, themes):
    return outputs.read_training_set(cfg.artifact("training_set", ARTIFACTS["training_set"]), themes)


def _scores(cfg, themes=None):
    path = cfg.artifact("scores", ARTIFACTS["scores"])
    if cfg.scores or path.exists():
        return outputs.read_scores(path)
    model = _model(cfg)
    return forest.score_counties(model, themes if themes is not None else _themes(cfg))


def _out(cfg, key) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir / ARTIFACTS[key]


def _require_seed(cfg):
    if cfg.seed is None:
        raise UsageError("--seed is required for selection and training")


def _fmt_hist(hist: dict, ref: dict | None = None) -> list[str]:
    total = sum(hist.values())
    lines = []
    width = max(len(str(k)) for k in hist)
    for k, v in hist.items():
        pct = 100.0 * v / total if total else 0.0
        bar = "#" * int(round(40 * v / total)) if total else ""
        line = f"  {str(k):>{width}} {v:6d} {pct:6.2f}%  {bar}"
        if ref is not None and k in ref:
            line += f"  (reference {ref[k]:.2f}%)"
        lines.append(line)
    return lines


# -- commands -----------------------------------------------------------------------


def cmd_impact(cfg: PipelineConfig) -> dict:
    series = _load_series(cfg)
    if series.mismatches:
        print(f"{len(series.mismatches)} counties present in only one of the cases/deaths files (skipped)")
    results = impact.assess_all(series, cfg.alpha, cfg.threads)
    path = _out(cfg, "impact")
    outputs.write_impact(results, path)
    hist = impact.rank_histogram(results)
    print(f"impact ranks for {len(results)} counties -> {path}")
    for line in _fmt_hist(hist):
        print(line)
    return {"impact": path, "histogram": hist, "results": results}


def cmd_train(cfg: PipelineConfig) -> dict:
    _require_seed(cfg)
    themes = _themes(cfg)
    impacts = _impacts(cfg)
    ts = impact.select_training(impacts, themes, cfg.n_per_class, cfg.train_frac, cfg.seed)
    model = forest.train(ts, cfg.forest_params(), threads=cfg.threads)
    mpath = _out(cfg, "model")
    forest.save_model(model, mpath)
    tpath = _out(cfg, "training_set")
    outputs.write_json(outputs.training_set_document(ts), tpath)
    doc = outputs.training_set_document(ts)["counts"]
    print(f"training set: {doc['label_1']} vulnerable + {doc['label_0']} non-vulnerable, "
          f"{doc['train']} train / {doc['test']} test (seed {ts.seed}) -> {tpath}")
    print(f"model: {model.n_trees} trees, mtry {model.params.mtry} -> {mpath}")
    return {"model": mpath, "training_set": tpath}


def cmd_predict(cfg: PipelineConfig) -> dict:
    themes = _themes(cfg)
    model = _model(cfg)
    scores = forest.score_counties(model, themes, cfg.vote)
    path = _out(cfg, "scores")
    outputs.write_scores(scores, path)
    hist = {c.value: 0 for c in forest.CLASS_ORDER}
    for s in scores:
        hist[s.klass.value] += 1
    print(f"C19VI for {len(scores)} counties -> {path}")
    for line in _fmt_hist(hist, REFERENCE_CLASS_PCT):
        print(line)
    return {"scores": path, "classes": hist}


def cmd_validate(cfg: PipelineConfig) -> dict:
    if cfg.train_frac >= 1.0:
        raise DataError(f"train_frac = {cfg.train_frac} leaves no held-out counties; test AUC is undefined")
    themes = _themes(cfg)
    model = _model(cfg)
    ts = _training(cfg, themes)
    _, Xtr, ytr = ts.matrix("train")
    _, Xte, yte = ts.matrix("test")
    if len(yte) == 0:
        raise DataError("the training-set manifest has an empty test split; test AUC is undefined")
    for name, y in (("train", ytr), ("test", yte)):
        if len(set(y.tolist())) < 2:
            raise DataError(f"{name} split contains a single class; AUC is undefined")
    train_auc = evaluate.roc_auc(model.predict_matrix(Xtr), ytr)
    test_auc = evaluate.roc_auc(model.predict_matrix(Xte), yte)
    items = np.array([t.as_array() for t in themes])
    if cfg.cronbach_with_c19vi:
        items = np.column_stack([items, model.predict_matrix(items)])
    alpha = evaluate.cronbach_alpha(items)
    report = evaluate.ValidationReport(train_auc, test_auc, alpha, len(ytr), len(yte), items.shape[1])
    path = _out(cfg, "validation")
    outputs.write_json(report.to_dict(), path)
    print(f"validation -> {path}")
    print(f"  train AUC        {train_auc:.4f}  (n = {len(ytr)})")
    print(f"  test AUC         {test_auc:.4f}  (n = {len(yte)})")
    print(f"  Cronbach's alpha {alpha:.4f}  ({items.shape[1]} items, {items.shape[0]} counties)")
    return {"validation": path, "report": report}


def cmd_compare(cfg: PipelineConfig) -> dict:
    cfg.require("ccvi")
    scores = {s.fips: s.c19vi for s in _scores(cfg)}
    other = {v.fips: v.value for v in ingest.load_index(cfg.ccvi)}
    common = sorted(set(scores) & set(other))
    if len(common) < 2:
        raise DataError(f"only {len(common)} counties shared between scores and {cfg.ccvi}")
    a = [scores[f] for f in common]
    b = [other[f] for f in common]
    report = evaluate.compare(a, b, labels=("C19VI", "CCVI"))
    path = _out(cfg, "comparison")
    d = report.to_dict()
    outputs.write_json(d, path)
    print(f"comparison of C19VI vs CCVI on {len(common)} counties -> {path}")
    print(f"  Friedman chi2 {d['friedman_chi2']:.4f}  df {d['friedman_df']}  p {d['friedman_p']:.4g}  "
          f"(critical value at 0.05: {d['friedman_critical_value_0.05']:.3f})")
    print(f"  mean ranks    C19VI {d['mean_rank_a']:.3f}  CCVI {d['mean_rank_b']:.3f}")
    print(f"  Wilcoxon      W {d['wilcoxon_w']:.1f}  z {d['wilcoxon_z']:.3f}  p {d['wilcoxon_p']:.4g}  "
          f"(n' = {d['wilcoxon_n_used']})")
    return {"comparison": path, "report": report}


def cmd_boruta(cfg: PipelineConfig) -> dict:
    _require_seed(cfg)
    themes = _themes(cfg)
    ts = _training(cfg, themes) if cfg.artifact("training_set", ARTIFACTS["training_set"]).exists() else \
        impact.select_training(_impacts(cfg), themes, cfg.n_per_class, cfg.train_frac, cfg.seed)
    _, X, y = ts.matrix()
    conf = evaluate.BorutaConfig(cfg.boruta_iterations, cfg.boruta_p, int(cfg.seed), cfg.boruta_trees,
                                 cfg.min_leaf, cfg.max_depth)
    report = evaluate.boruta(X, y, conf, ingest.THEME_COLUMNS, threads=cfg.threads)
    path = _out(cfg, "boruta")
    outputs.write_json(report.to_dict(), path)
    print(f"Boruta over {len(y)} counties, {report.iterations_run} iterations -> {path}")
    # features never fitted (constant columns) have a nan mean and sort last
    for f in sorted(report.features, key=lambda f: (np.isnan(f.mean_importance), -f.mean_importance)):
        print(f"  {f.name}  mean Z {f.mean_importance:8.3f}  hits {f.hits:3d}  {f.decision.value}")
    return {"boruta": path, "report": report}


def cmd_overlay(cfg: PipelineConfig) -> dict:
    cfg.require("census")
    scores = _scores(cfg)
    census = ingest.load_census(cfg.census)
    summary = {"vuln_threshold": cfg.vuln_threshold}
    paths = {}
    for attr, thr, key in (("Minority", cfg.minority_threshold, "overlay_minority"),
                           ("Poverty", cfg.poverty_threshold, "overlay_poverty")):
        res = overlay.overlay(scores, census, attr, cfg.vuln_threshold, thr)
        path = _out(cfg, key)
        outputs.write_overlay(res.records, path)
        paths[key] = path
        counts = overlay.quadrant_counts(res.records)
        try:
            share = overlay.disproportionality(res.records)
        except DataError:
            share = None
        summary[attr] = {
            "threshold": thr,
            "quadrants": counts,
            "share_high_vulnerability": share,
            "missing_census": len(res.missing_census),
            "missing_scores": len(res.missing_scores),
        }
        ref = REFERENCE_SHARES[attr]
        shown = "n/a" if share is None else f"{100 * share:.2f}%"
        print(f"{attr} > {thr}: {shown} of high-{attr.lower()} counties have C19VI > {cfg.vuln_threshold} "
              f"(reference {100 * ref:.2f}%) -> {path}")
    spath = _out(cfg, "overlay_summary")
    outputs.write_json(summary, spath)
    paths["overlay_summary"] = spath
    return paths


def cmd_geojson(cfg: PipelineConfig) -> dict:
    cfg.require("boundaries")
    boundaries = overlay.load_geojson(cfg.boundaries)
    scores = _scores(cfg)
    ipath = cfg.artifact("impact", ARTIFACTS["impact"])
    impacts = outputs.read_impact(ipath) if ipath.exists() else []
    overlays = []
    if cfg.census:
        overlays = overlay.overlay(scores, ingest.load_census(cfg.census), "Minority", cfg.vuln_threshold,
                                   cfg.minority_threshold).records
    fc = overlay.join_geojson(boundaries, scores, impacts, overlays, cfg.fips_property)
    path = _out(cfg, "geojson")
    path.write_text(json.dumps(fc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
    no_data = sum(1 for f in fc["features"] if f["properties"].get(overlay.NO_DATA_PROPERTY))
    print(f"{len(fc['features'])} features ({no_data} without data) -> {path}")
    return {"geojson": path}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import numba
    import scipy

    return {"c19vi": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def cmd_pipeline(cfg: PipelineConfig) -> dict:
    _require_seed(cfg)
    cfg.require("cases", "deaths", "themes", "census")
    if cfg.train_frac >= 1.0:
        raise DataError(f"stage validate: train_frac = {cfg.train_frac} leaves no held-out counties; "
                        "test AUC is undefined")
    # upstream artifacts are always recomputed in a pipeline run
    run = dataclasses.replace(cfg, impact=None, model=None, training_set=None, scores=None)
    stages = [("impact", cmd_impact), ("train", cmd_train), ("predict", cmd_predict),
              ("validate", cmd_validate), ("overlay", cmd_overlay)]
    if cfg.ccvi:
        stages.append(("compare", cmd_compare))
    if cfg.boundaries:
        stages.append(("geojson", cmd_geojson))
    for key in ARTIFACTS.values():
        stale = run.out_dir / key
        if stale.exists():
            stale.unlink()
    produced = []
    for name, fn in stages:
        print(f"== {name}")
        try:
            fn(run)
        except C19VIError as exc:
            exc.args = (f"stage {name}: {exc}",)
            raise
        produced.append(name)
    outs = sorted(p for p in run.out_dir.iterdir() if p.name in ARTIFACTS.values() and p.name != ARTIFACTS["manifest"])
    inputs = {k: getattr(cfg, k) for k in ("cases", "deaths", "themes", "census", "ccvi", "boundaries")
              if getattr(cfg, k)}
    manifest = {
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": cfg.seed,
        "stages": produced,
        "config": dataclasses.asdict(cfg),
        "inputs": {k: {"path": v, "sha256": _sha256(Path(v))} for k, v in inputs.items()},
        "outputs": {p.name: _sha256(p) for p in outs},
        "versions": _versions(),
    }
    mpath = _out(cfg, "manifest")
    outputs.write_json(manifest, mpath)
    print(f"run manifest -> {mpath}")
    return {"manifest": mpath, "outputs": manifest["outputs"]}


def cmd_synth(cfg: PipelineConfig) -> dict:
    out = cfg.out_dir
    paths = synthetic.write_demo_dataset(out / "demo")
    fixture = synthetic.write_fixture(out / "fixture12")
    print(f"demo dataset -> {paths['cases'].parent}")
    print(f"12-county fixture -> {fixture}")
    return {"demo": paths, "fixture": fixture}


COMMANDS = {
    "impact": cmd_impact,
    "train": cmd_train,
    "predict": cmd_predict,
    "validate": cmd_validate,
    "compare": cmd_compare,
    "boruta": cmd_boruta,
    "overlay": cmd_overlay,
    "geojson": cmd_geojson,
    "pipeline": cmd_pipeline,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        print_config(cfg, args.command)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"c19vi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as exc:
        print(f"c19vi: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DataError, ValueError) as exc:
        print(f"c19vi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"c19vi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"c19vi: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
