"""Versioned JSON report documents and their markdown / plain-text rendering."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ReportFormatError

REPORT_SCHEMA = "scanforest-report"
COMPARISON_SCHEMA = "scanforest-comparison"
SCHEMA_VERSION = 1
METHOD_ORDER = ("random", "grid")  # random-search row first, grid second
METHOD_TITLES = {"random": "Random search", "grid": "Grid search"}


@lru_cache(maxsize=None)
def _schema(name: str) -> dict:
    text = resources.files("scanforest").joinpath("data", name).read_text(encoding="utf-8")
    return json.loads(text)


def report_schema() -> dict:
    return _schema("report_schema.json")


def comparison_schema() -> dict:
    return _schema("comparison_schema.json")


def _check(doc, kind: str, schema: dict, where: str) -> dict:
    if not isinstance(doc, dict) or doc.get("schema") != kind:
        raise ReportFormatError(f"{where}: not a {kind} document")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ReportFormatError(f"{where}: unknown {kind} schema version {version!r}")
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ReportFormatError(f"{where}: invalid at '{path}': {exc.message}") from None
    return doc


def validate_report(doc, where: str = "report") -> dict:
    return _check(doc, REPORT_SCHEMA, report_schema(), where)


def validate_comparison(doc, where: str = "comparison") -> dict:
    return _check(doc, COMPARISON_SCHEMA, comparison_schema(), where)


def report_document(trials, data_info: dict) -> dict:
    """Assemble a report document from :class:`~scanforest.tuning.TrialReport` objects."""
    return {"schema": REPORT_SCHEMA, "schema_version": SCHEMA_VERSION, "data": data_info,
            "trials": [t.to_dict() for t in trials]}


def load_report(path: str | Path) -> dict:
    """Read and validate a report; raises ``OSError`` or :class:`ReportFormatError`."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"{path}: not JSON ({exc})") from None
    return validate_report(doc, str(path))


def _f(x) -> str:
    return "–" if x is None else f"{x:.4f}"


def _ordered(trials: list[dict]) -> list[dict]:
    return sorted(trials, key=lambda t: METHOD_ORDER.index(t["method"]))


def _by_set(trials: list[dict]) -> dict[str, list[dict]]:
    out: dict[str, list[dict]] = {}
    for t in trials:
        out.setdefault(t["set_id"], []).append(t)
    return {k: _ordered(v) for k, v in out.items()}


def _table(header: list[str], rows: list[list[str]], fmt: str) -> list[str]:
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" if i == 0 else "---:" for i in range(len(header))) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return lines
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths))).rstrip()
    return [line(header), line(["-" * w for w in widths])] + [line(r) for r in rows]


def _heading(text: str, level: int, fmt: str) -> list[str]:
    if fmt == "markdown":
        return ["#" * level + " " + text]
    return [text, ("=" if level <= 2 else "-") * len(text)]


def render_reports(docs: list[dict], fmt: str = "markdown") -> str:
    """Efficacy tables (one per hyperparameter set) plus per-group breakdowns."""
    if fmt not in ("markdown", "text"):
        raise ValueError("format must be 'markdown' or 'text'")
    trials = [t for d in docs for t in d["trials"]]
    out: list[str] = []
    for set_id, rows in _by_set(trials).items():
        out += _heading(f"Hyperparameter set {set_id}", 2, fmt) + [""]
        body = []
        for t in rows:
            e = t["efficacy"]
            best = t["search"]["best_config"]
            depth = "none" if best["max_depth"] is None else str(best["max_depth"])
            body.append([METHOD_TITLES[t["method"]], _f(e["accuracy"]), _f(e["macro_recall"]),
                         _f(e["macro_precision"]), _f(e["macro_f1"]),
                         _f(t["search"]["cv_mean_score"]), f"{best['n_estimators']}/{depth}"])
        out += _table(["Method", "Accuracy", "Recall", "Precision", "F1", "CV accuracy",
                       "Trees/depth"], body, fmt)
        out.append("")
        for t in rows:
            title = f"Per-group breakdown, set {set_id}, {METHOD_TITLES[t['method']].lower()}"
            out += _heading(title, 3, fmt) + [""]
            if t["groups"] is None:
                out += ["No tool/technique metadata in this data; breakdown omitted.", ""]
                continue
            body = [[key, _f(g["accuracy"]), _f(g["recall"][1]), _f(g["precision"][1]),
                     _f(g["f1"][1]), str(g["support"][1])] for key, g in t["groups"].items()]
            out += _table(["Group", "Accuracy", "Scan recall", "Scan precision", "Scan F1",
                           "Scan rows"], body, fmt)
            out.append("")
    return "\n".join(out).rstrip() + "\n"


def render_comparison(doc: dict, fmt: str = "markdown") -> str:
    """Baseline table with a reproduction column, then the paired t-test."""
    comp = doc["comparison"]
    paired = {}
    for r in comp["rows"]:
        paired.setdefault(r["study"], []).append(f"{r['trial_accuracy']:.4f} ({r['trial_label']})")
    body = []
    for e in doc["baselines"]["entries"]:
        body.append([e["study"], _f(e["accuracy"]), _f(e["recall"]), _f(e["precision"]),
                     _f(e["f1"]), "; ".join(paired.get(e["study"], ["–"]))])
    out = _heading("Efficacy comparison with source studies", 2, fmt) + [""]
    out += _table(["Study", "Accuracy", "Recall", "Precision", "F1", "Reproduction"], body, fmt)
    tt = comp["ttest"]
    out += ["", f"Paired t-test (trial minus baseline accuracy, n = {tt['n']}): "
                f"t = {tt['t']:.4f}, p = {tt['p']:.4f}, df = {tt['df']}, "
                f"mean difference = {tt['diff_mean']:.4f}, std = {tt['diff_std']:.4f}"]
    pairs = ", ".join(f"{r['trial_label']}={r['study']}" for r in comp["rows"])
    out += ["", f"Pairing: {pairs}"]
    return "\n".join(out) + "\n"
