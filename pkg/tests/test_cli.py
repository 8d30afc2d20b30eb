from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from scanforest.cli import main, manifest_path, parse_pairing, CliError
from scanforest.report import load_report, validate_report

GOLDEN = Path(__file__).parent / "golden"
SMALL_CONFIG = {"total_flows": 400, "benign_fraction": 0.8, "seed": 3,
                "tool_mix": {"nmap/syn": 0.5, "zmap/connect": 0.5}, "overlap": 0.2}
SPACE = {"n_estimators": [3, 5], "max_depth": [3, None], "class_weight": "balanced"}


def sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "gen.json").write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    (d / "space.json").write_text(json.dumps(SPACE), encoding="utf-8")
    assert main(["-q", "generate", "--config", str(d / "gen.json"), "--out", str(d / "flows.csv")]) == 0
    rc = main(["-q", "trial", str(d / "flows.csv"), "--set", "custom", "--space", str(d / "space.json"),
               "--folds", "3", "--n-iter", "2", "--seed", "1", "--out", str(d / "report.json"),
               "--markdown", str(d / "report.md")])
    assert rc == 0
    return d


def test_generate_writes_csv_and_manifest(work):
    csv_path = work / "flows.csv"
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 401
    assert lines[0].endswith("label,tool,technique")
    man = json.loads(manifest_path(csv_path).read_text(encoding="utf-8"))
    assert man["outputs"][str(csv_path)] == sha(csv_path)
    assert man["inputs"][str(work / "gen.json")] == sha(work / "gen.json")
    assert man["command"][:2] == ["scanforest", "-q"]


def test_generate_byte_identical(work, tmp_path):
    out = tmp_path / "again.csv"
    assert main(["-q", "generate", "--config", str(work / "gen.json"), "--out", str(out)]) == 0
    assert out.read_bytes() == (work / "flows.csv").read_bytes()


def test_generate_seed_override(work, tmp_path):
    out = tmp_path / "other.csv"
    assert main(["-q", "generate", "--config", str(work / "gen.json"), "--seed", "4",
                 "--out", str(out)]) == 0
    assert out.read_bytes() != (work / "flows.csv").read_bytes()


def test_generate_bundled_config(tmp_path):
    out = tmp_path / "bundled.csv"
    assert main(["-q", "generate", "--out", str(out)]) == 0
    assert sum(1 for _ in out.open(encoding="utf-8")) == 20_001


def test_generate_bad_and_missing_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"total_flows": 10, "unknown": 1}), encoding="utf-8")
    assert main(["-q", "generate", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["-q", "generate", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "x.csv")]) == 3
    assert not (tmp_path / "x.csv").exists()
    assert "nope.json" in capsys.readouterr().err


def test_trial_report_is_valid(work):
    doc = load_report(work / "report.json")
    assert [t["method"] for t in doc["trials"]] == ["random", "grid"]
    for t in doc["trials"]:
        e = t["efficacy"]
        for key in ("accuracy", "macro_recall", "macro_precision", "macro_f1"):
            assert 0.0 <= e[key] <= 1.0
        assert set(t["groups"]) == {"nmap/syn", "zmap/connect"}
    man = json.loads(manifest_path(work / "report.json").read_text(encoding="utf-8"))
    assert man["outputs"][str(work / "report.json")] == sha(work / "report.json")
    assert man["outputs"][str(work / "report.md")] == sha(work / "report.md")


def test_trial_markdown_golden(work):
    golden = (GOLDEN / "trial_small.md").read_text(encoding="utf-8")
    assert (work / "report.md").read_text(encoding="utf-8") == golden


def test_trial_rerun_identical_except_timing(work, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["-q", "trial", str(work / "flows.csv"), "--set", "custom", "--space",
                 str(work / "space.json"), "--folds", "3", "--n-iter", "2", "--seed", "1",
                 "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed == (work / "report.md").read_text(encoding="utf-8")

    def strip(doc):
        for t in doc["trials"]:
            t.pop("elapsed")
            t["search"].pop("elapsed")
        return doc

    a = strip(json.loads(out.read_text(encoding="utf-8")))
    b = strip(json.loads((work / "report.json").read_text(encoding="utf-8")))
    assert a == b


def test_trial_seed_from_environment(work, tmp_path, monkeypatch):
    monkeypatch.setenv("SCANFOREST_SEED", "1")
    out = tmp_path / "env.json"
    assert main(["-q", "trial", str(work / "flows.csv"), "--set", "custom", "--space",
                 str(work / "space.json"), "--folds", "3", "--n-iter", "2", "--method", "grid",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text(encoding="utf-8"))["trials"][0]["seed"] == 1
    monkeypatch.setenv("SCANFOREST_SEED", "x")
    assert main(["-q", "trial", str(work / "flows.csv"), "--set", "A", "--out", str(out)]) == 2


def test_trial_usage_errors(work, tmp_path):
    out = str(tmp_path / "r.json")
    data = str(work / "flows.csv")
    assert main(["-q", "trial", data, "--set", "A", "--space", str(work / "space.json"),
                 "--out", out]) == 2
    assert main(["-q", "trial", data, "--set", "custom", "--out", out]) == 2
    assert main(["-q", "trial", data, "--set", "A", "--test-fraction", "1.5", "--out", out]) == 2
    with pytest.raises(SystemExit) as info:
        main(["trial", data, "--set", "E", "--out", out])
    assert info.value.code == 2


def test_trial_io_and_compute_errors(tmp_path, capsys):
    out = str(tmp_path / "r.json")
    assert main(["-q", "trial", str(tmp_path / "missing.csv"), "--set", "A", "--out", out]) == 3
    one_class = tmp_path / "one.csv"
    one_class.write_text("a,label\n1,0\n2,0\n3,0\n", encoding="utf-8")
    assert main(["-q", "trial", str(one_class), "--set", "A", "--out", out]) == 4
    err = capsys.readouterr().err
    assert "preprocess" in err
    broken = tmp_path / "broken.csv"
    broken.write_text("a,label\n1,0\nx,1\n", encoding="utf-8")
    assert main(["-q", "trial", str(broken), "--set", "A", "--out", out]) == 4
    assert "load" in capsys.readouterr().err


def test_report_formats(work, capsys, tmp_path):
    assert main(["report", str(work / "report.json")]) == 0
    md = capsys.readouterr().out
    assert md == (work / "report.md").read_text(encoding="utf-8")
    assert main(["report", "--format", "text", str(work / "report.json")]) == 0
    text = capsys.readouterr().out
    assert "Random search" in text and "|" not in text
    out = tmp_path / "table.md"
    assert main(["-q", "report", str(work / "report.json"), "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8") == md
    assert manifest_path(out).exists()


def test_report_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["-q", "report", str(bad)]) == 2
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"schema": "scanforest-report", "schema_version": 9}), encoding="utf-8")
    assert main(["-q", "report", str(wrong)]) == 2
    assert main(["-q", "report", str(tmp_path / "gone.json")]) == 3


def test_report_without_metadata(work, tmp_path, capsys):
    doc = json.loads((work / "report.json").read_text(encoding="utf-8"))
    for t in doc["trials"]:
        t["groups"] = None
    validate_report(doc)
    p = tmp_path / "nometa.json"
    p.write_text(json.dumps(doc), encoding="utf-8")
    assert main(["-q", "report", str(p)]) == 0
    assert "No tool/technique metadata" in capsys.readouterr().out


def test_compare(work, tmp_path, capsys):
    out = tmp_path / "cmp.json"
    rendered = tmp_path / "cmp.md"
    assert main(["-q", "compare", str(work / "report.json"), "--pairing",
                 "0:grid=Baah,0:random=Sirisha", "--out", str(out), "--rendered", str(rendered)]) == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["comparison"]["ttest"]["df"] == 1
    assert [r["study"] for r in doc["comparison"]["rows"]] == ["Baah", "Sirisha"]
    text = rendered.read_text(encoding="utf-8")
    assert "Paired t-test" in text and "Algaolahi" in text
    assert manifest_path(out).exists()
    assert main(["-q", "compare", str(work / "report.json"), "--pairing",
                 "0:grid=Baah,0:random=Sirisha"]) == 0
    assert '"scanforest-comparison"' in capsys.readouterr().out


def test_compare_custom_baselines(work, tmp_path):
    csv_path = tmp_path / "b.csv"
    csv_path.write_text("study,accuracy,recall,precision,f1\nX,0.5,,,\nY,0.7,,,\n", encoding="utf-8")
    out = tmp_path / "c.json"
    assert main(["-q", "compare", str(work / "report.json"), "--pairing", "0:grid=X,0:random=Y",
                 "--baselines", str(csv_path), "--out", str(out)]) == 0
    assert json.loads(out.read_text(encoding="utf-8"))["baselines"]["source"] == str(csv_path)


def test_compare_errors(work, tmp_path):
    rep = str(work / "report.json")
    assert main(["-q", "compare", rep, "--pairing", "0:grid=Baah"]) == 2
    assert main(["-q", "compare", rep, "--pairing", "0=Baah,0=Sirisha"]) == 2
    assert main(["-q", "compare", rep, "--pairing", "0:grid=Nobody,0:random=Baah"]) == 2
    assert main(["-q", "compare", rep, "--pairing", "0:grid=Bertoli,0:random=Baah"]) == 2
    assert main(["-q", "compare", rep, "--pairing", "3:grid=Baah,0:random=Sirisha"]) == 2
    # equal gaps to both baselines leave the differences without variance
    doc = json.loads((work / "report.json").read_text(encoding="utf-8"))
    by_method = {t["method"]: t for t in doc["trials"]}
    by_method["grid"]["efficacy"]["accuracy"] = 0.9975 - 0.125
    by_method["random"]["efficacy"]["accuracy"] = 0.9998 - 0.125
    p = tmp_path / "flat.json"
    p.write_text(json.dumps(doc), encoding="utf-8")
    assert main(["-q", "compare", str(p), "--pairing", "0:grid=Algaolahi,0:random=Baah"]) == 5


def test_parse_pairing():
    assert parse_pairing("0:grid=Baah, 1=Mohseni") == [(0, "grid", "Baah"), (1, None, "Mohseni")]
    for bad in ("0:grid", "x=Baah,1=Y", "0:best=Baah,1=Y", "0=Baah"):
        with pytest.raises(CliError):
            parse_pairing(bad)
