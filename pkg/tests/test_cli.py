import json

import pytest

from c19vi import cli, outputs, synthetic

FIXTURE = synthetic.DATA_DIR / "fixture12" / "series.csv"
DEMO = synthetic.DATA_DIR / "demo"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def demo_flags(out):
    return ["--cases", DEMO / "cases.csv", "--deaths", DEMO / "deaths.csv", "--themes", DEMO / "themes.csv",
            "--census", DEMO / "census.csv", "--out", out]


def test_impact_on_fixture(tmp_path, capsys):
    code, out, _ = run(capsys, "impact", "--cases", FIXTURE, "--deaths", FIXTURE, "--out", tmp_path)
    assert code == 0
    assert out.startswith("# c19vi impact - effective configuration")
    hist = {}
    for line in out.splitlines():
        parts = line.split()
        if len(parts) >= 3 and parts[0] in {"1", "2", "3", "4", "5", "NonSignificant"}:
            hist[parts[0]] = int(parts[1])
    assert hist == {"1": 2, "2": 2, "3": 2, "4": 2, "5": 2, "NonSignificant": 2}
    rows = outputs.read_impact(tmp_path / "impact.csv")
    assert {r.fips: r.rank for r in rows}["01021"] is None


def test_impact_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("fips,date,cases,deaths\n")
    code, _, _ = run(capsys, "impact", "--cases", empty, "--deaths", empty, "--out", tmp_path / "o")
    assert code == 0
    text = (tmp_path / "o" / "impact.csv").read_text()
    assert text.splitlines() == [
        "fips,rank,score,driving_parameter,ifr_rank,ifr_score,deaths_rank,deaths_score,cases_rank,cases_score"]


def test_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "cases.csv"
    code, _, err = run(capsys, "impact", "--cases", missing, "--deaths", FIXTURE, "--out", tmp_path)
    assert code == cli.EXIT_DATA
    assert str(missing) in err


def test_usage_errors(tmp_path, capsys):
    assert run(capsys, "impact", "--alpha", "1.5", "--out", tmp_path)[0] == cli.EXIT_USAGE
    assert run(capsys, "train", "--themes", DEMO / "themes.csv", "--out", tmp_path)[0] == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == cli.EXIT_USAGE
    code, _, err = run(capsys, "impact", "--out", tmp_path)
    assert code == cli.EXIT_USAGE and "--cases" in err


def test_config_file_with_flag_override(tmp_path, capsys):
    conf = tmp_path / "run.yaml"
    conf.write_text(f"cases: {FIXTURE}\ndeaths: {FIXTURE}\nalpha: 0.01\nout: {tmp_path / 'a'}\n")
    code, out, _ = run(capsys, "impact", "--config", conf, "--alpha", "0.05")
    assert code == 0
    assert "#   alpha: 0.05" in out
    assert (tmp_path / "a" / "impact.csv").exists()


def test_config_unknown_key(tmp_path, capsys):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"alhpa": 0.05}))
    code, _, err = run(capsys, "impact", "--config", conf)
    assert code == cli.EXIT_USAGE and "alhpa" in err


def test_pipeline_train_frac_one_fails_fast(tmp_path, capsys):
    code, out, err = run(capsys, "pipeline", *demo_flags(tmp_path), "--seed", "1", "--train-frac", "1.0")
    assert code == cli.EXIT_DATA
    assert "validate" in err and "no held-out" in err
    assert not (tmp_path / "impact.csv").exists()


def test_stagewise_commands(tmp_path, capsys):
    flags = demo_flags(tmp_path) + ["--seed", "3", "--n-trees", "50"]
    for cmd in ("impact", "train", "predict", "validate"):
        code, out, err = run(capsys, cmd, *flags)
        assert code == 0, (cmd, err)
    report = json.loads((tmp_path / "validation.json").read_text())
    assert report["test_auc"] > 0.8
    code, out, _ = run(capsys, "compare", *flags, "--ccvi", DEMO / "ccvi.csv")
    assert code == 0 and "Friedman" in out
    code, out, _ = run(capsys, "overlay", *flags)
    assert code == 0 and (tmp_path / "overlay_poverty.csv").exists()
    code, out, _ = run(capsys, "geojson", *flags, "--boundaries", DEMO / "counties.geojson")
    assert code == 0
    fc = json.loads((tmp_path / "c19vi.geojson").read_text())
    assert all("c19vi" in f["properties"] or f["properties"].get("c19vi_no_data") for f in fc["features"])
    code, out, _ = run(capsys, "boruta", *flags, "--boruta-iterations", "5", "--boruta-trees", "20")
    assert code == 0 and "mean Z" in out


def test_pipeline_manifest(tmp_path, capsys):
    code, out, err = run(capsys, "pipeline", *demo_flags(tmp_path), "--seed", "42", "--n-trees", "60",
                         "--boundaries", DEMO / "counties.geojson", "--ccvi", DEMO / "ccvi.csv")
    assert code == 0, err
    man = json.loads((tmp_path / "run_manifest.json").read_text())
    assert man["seed"] == 42
    assert man["stages"] == ["impact", "train", "predict", "validate", "overlay", "compare", "geojson"]
    assert set(man["outputs"]) >= {"impact.csv", "model.json", "scores.csv", "validation.json", "c19vi.geojson"}
    assert len(man["inputs"]["cases"]["sha256"]) == 64


def test_synth_matches_bundled(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--out", tmp_path)
    assert code == 0
    for name in ("cases.csv", "deaths.csv", "themes.csv", "census.csv", "ccvi.csv", "counties.geojson"):
        assert (tmp_path / "demo" / name).read_bytes() == (DEMO / name).read_bytes(), name
    assert (tmp_path / "fixture12" / "series.csv").read_bytes() == FIXTURE.read_bytes()


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "c19vi" in capsys.readouterr().out
