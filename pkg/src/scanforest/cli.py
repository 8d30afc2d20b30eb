"""Command-line entry point: generate, trial, report and compare.

Exit codes
----------
0 success, 2 usage or configuration error, 3 I/O failure, 4 computation
failure, 5 statistical degeneracy (e.g. zero-variance paired differences).
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from types import SimpleNamespace

from . import __version__
from .dataset import PreprocessPolicy, SplitPlan, load_csv, preprocess, write_csv_stream
from .errors import ReportFormatError, ScanForestError, ZeroVarianceError
from .metrics import BUILTIN_BASELINES, compare_to_baselines, load_baselines_csv
from .report import (
    COMPARISON_SCHEMA,
    SCHEMA_VERSION,
    load_report,
    render_comparison,
    render_reports,
    report_document,
    validate_comparison,
)
from .scangen import GeneratorConfig, generate_corpus
from .tuning import BUILTIN_SPACES, SearchSpace, run_trial

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_COMPUTE = 4
EXIT_DEGENERATE = 5
SEED_ENV = "SCANFOREST_SEED"

log = logging.getLogger("scanforest")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file, so readers never see a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


@dataclass
class RunManifest:
    """What a command consumed and produced. Digests are of the exact bytes read and written."""

    command: list[str]
    config_hash: str
    inputs: dict[str, str]
    outputs: dict[str, str]
    timestamp: str
    version: str = __version__

    def to_dict(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "inputs": self.inputs,
                "outputs": self.outputs, "timestamp": self.timestamp, "version": self.version}

    def write(self, path: str | Path) -> None:
        atomic_write(path, _json_bytes(self.to_dict()))


def _manifest(argv: list[str], config: dict, inputs: dict[str, str],
              outputs: dict[str, bytes]) -> RunManifest:
    return RunManifest(
        command=["scanforest", *argv],
        config_hash=sha256_bytes(canonical_json(config).encode("utf-8")),
        inputs=inputs,
        outputs={p: sha256_bytes(b) for p, b in outputs.items()},
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def manifest_path(out: str | Path) -> Path:
    return Path(f"{out}.manifest.json")


def default_seed() -> int:
    text = os.environ.get(SEED_ENV)
    if text is None:
        return 0
    try:
        seed = int(text)
    except ValueError:
        raise CliError(f"{SEED_ENV}={text!r} is not an integer", EXIT_USAGE) from None
    if seed < 0:
        raise CliError(f"{SEED_ENV} must be unsigned", EXIT_USAGE)
    return seed


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None


def _write_outputs(outputs: dict[str, bytes]) -> None:
    for path, data in outputs.items():
        try:
            atomic_write(path, data)
        except OSError as exc:
            raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from None


def _finish(argv, config: dict, inputs: dict[str, str], outputs: dict[str, bytes],
            manifest_for: str | None) -> None:
    _write_outputs(outputs)
    if manifest_for is not None:
        _write_outputs({str(manifest_path(manifest_for)):
                        _json_bytes(_manifest(argv, config, inputs, outputs).to_dict())})


def bundled_config_path() -> Path:
    return Path(str(resources.files("scanforest").joinpath("data", "sample_config.json")))


# generate

def cmd_generate(args, argv) -> int:
    path = args.config or bundled_config_path()
    raw = _read_bytes(path)
    try:
        doc = json.loads(raw)
        if args.seed is not None:
            doc["seed"] = args.seed
        config = GeneratorConfig.from_dict(doc)
    except (json.JSONDecodeError, TypeError, ValueError, ScanForestError) as exc:
        raise CliError(f"invalid generator config {path}: {exc}", EXIT_USAGE) from None
    log.info("generating %d flows (seed %d)", config.total_flows, config.seed)
    data = generate_corpus(config)
    buf = io.StringIO(newline="")
    write_csv_stream(data, buf)
    _finish(argv, config.to_dict(), {str(path): sha256_bytes(raw)},
            {args.out: buf.getvalue().encode("utf-8")}, args.out)
    log.info("wrote %s", args.out)
    return EXIT_OK


# trial

def _space(args) -> SearchSpace:
    if args.set != "custom":
        if args.space:
            raise CliError("--space only applies to --set custom", EXIT_USAGE)
        return BUILTIN_SPACES[args.set]
    if not args.space:
        raise CliError("--set custom needs --space FILE", EXIT_USAGE)
    try:
        doc = json.loads(_read_bytes(args.space))
        doc["set_id"] = "custom"
        return SearchSpace.from_dict(doc)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CliError(f"invalid search space {args.space}: {exc}", EXIT_USAGE) from None


def cmd_trial(args, argv) -> int:
    space = _space(args)
    seed = args.seed if args.seed is not None else default_seed()
    try:
        plan = SplitPlan(test_fraction=args.test_fraction, seed=seed, k=args.folds)
        policy = PreprocessPolicy(nonfinite=args.nonfinite, dedupe=not args.keep_duplicates)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if args.n_iter < 1 or args.workers < 1:
        raise CliError("--n-iter and --workers must be >= 1", EXIT_USAGE)
    methods = ["random", "grid"] if args.method == "both" else [args.method]

    raw_bytes = _read_bytes(args.data)
    stage = "load"
    try:
        raw = load_csv(args.data)
        stage = "preprocess"
        data, summary = preprocess(raw, policy)
        log.info("preprocess: %d rows in, %d out", summary.input_rows, summary.output_rows)
        trials = []
        for method in methods:
            stage = f"trial {space.set_id}/{method}"
            log.info("%s: start", stage)
            t = run_trial(data, space, method, plan, seed=seed, n_iter=args.n_iter,
                          workers=args.workers)
            log.info("%s: accuracy %.4f (%.1fs)", stage, t.efficacy.accuracy, t.elapsed)
            trials.append(t)
    except OSError as exc:
        raise CliError(f"{stage}: {exc}", EXIT_IO) from None
    except (ScanForestError, ValueError) as exc:
        raise CliError(f"{stage} failed: {exc}", EXIT_COMPUTE) from None

    doc = report_document(trials, {"path": str(args.data), "sha256": sha256_bytes(raw_bytes),
                                   "rows": len(raw), "preprocess": summary.to_dict()})
    table = render_reports([doc], "markdown")
    outputs = {args.out: _json_bytes(doc)}
    if args.markdown:
        outputs[args.markdown] = table.encode("utf-8")
    config = {"space": space.to_dict(), "methods": methods, "seed": seed,
              "test_fraction": plan.test_fraction, "folds": plan.k, "n_iter": args.n_iter,
              "policy": {"nonfinite": policy.nonfinite, "dedupe": policy.dedupe}}
    _finish(argv, config, {str(args.data): sha256_bytes(raw_bytes)}, outputs, args.out)
    sys.stdout.write(table)
    return EXIT_OK


# report

def _load_reports(paths) -> tuple[list[dict], dict[str, str]]:
    docs, digests = [], {}
    for p in paths:
        raw = _read_bytes(p)
        digests[str(p)] = sha256_bytes(raw)
        try:
            docs.append(load_report(p))
        except ReportFormatError as exc:
            raise CliError(str(exc), EXIT_USAGE) from None
    return docs, digests


def cmd_report(args, argv) -> int:
    docs, digests = _load_reports(args.reports)
    text = render_reports(docs, args.format)
    if args.out:
        _finish(argv, {"format": args.format}, digests, {args.out: text.encode("utf-8")}, args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# compare

def parse_pairing(spec: str) -> list[tuple[int, str | None, str]]:
    """Parse ``i:method=Study,...`` (``:method`` optional) into (report, method, study) triples."""
    pairs = []
    for item in filter(None, (s.strip() for s in spec.split(","))):
        left, eq, study = item.partition("=")
        ref, colon, method = left.partition(":")
        if not eq or not study.strip() or not ref.strip().isdigit():
            raise CliError(f"bad pairing entry {item!r}; expected REPORT[:METHOD]=STUDY", EXIT_USAGE)
        if colon and method.strip() not in ("grid", "random"):
            raise CliError(f"bad method in pairing entry {item!r}", EXIT_USAGE)
        pairs.append((int(ref), method.strip() if colon else None, study.strip()))
    if len(pairs) < 2:
        raise CliError("a pairing needs at least 2 entries", EXIT_USAGE)
    return pairs


def _resolve(docs: list[dict], ref: int, method: str | None, item: str) -> dict:
    if not 0 <= ref < len(docs):
        raise CliError(f"pairing {item} names report {ref}, but {len(docs)} were given", EXIT_USAGE)
    trials = docs[ref]["trials"]
    if method is None:
        if len(trials) != 1:
            raise CliError(f"report {ref} holds {len(trials)} trials; say which with :grid or :random",
                           EXIT_USAGE)
        return trials[0]
    hits = [t for t in trials if t["method"] == method]
    if len(hits) != 1:
        raise CliError(f"report {ref} has no single {method} trial", EXIT_USAGE)
    return hits[0]


def cmd_compare(args, argv) -> int:
    docs, digests = _load_reports(args.reports)
    pairs = parse_pairing(args.pairing)
    if args.baselines == "builtin":
        table = BUILTIN_BASELINES
    else:
        digests[args.baselines] = sha256_bytes(_read_bytes(args.baselines))
        try:
            table = load_baselines_csv(args.baselines)
        except (ValueError, KeyError) as exc:
            raise CliError(f"invalid baselines {args.baselines}: {exc}", EXIT_USAGE) from None
    trials, pairing = [], []
    for j, (ref, method, study) in enumerate(pairs):
        t = _resolve(docs, ref, method, f"#{j}")
        trials.append(SimpleNamespace(
            efficacy=SimpleNamespace(accuracy=t["efficacy"]["accuracy"]),
            label=f"{ref}:{t['method']} (set {t['set_id']})"))
        pairing.append((j, study))
    try:
        comp = compare_to_baselines(trials, table, pairing)
    except ZeroVarianceError as exc:
        raise CliError(f"{exc}. The paired differences are constant, so no t statistic exists; "
                       "pair the trials with different baselines.", EXIT_DEGENERATE) from None
    except (KeyError, ValueError, IndexError) as exc:
        raise CliError(f"invalid pairing: {exc}", EXIT_USAGE) from None
    doc = {"schema": COMPARISON_SCHEMA, "schema_version": SCHEMA_VERSION,
           "reports": [str(p) for p in args.reports], "baselines": table.to_dict(),
           "comparison": comp.to_dict()}
    validate_comparison(doc)
    text = render_comparison(doc, args.format)
    outputs = {}
    if args.out:
        outputs[args.out] = _json_bytes(doc)
    if args.rendered:
        outputs[args.rendered] = text.encode("utf-8")
    _finish(argv, {"pairing": args.pairing, "baselines": args.baselines}, digests, outputs,
            args.out)
    if not args.out:
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="scanforest",
        description="Port-scan detection trials with a from-scratch random forest.",
        epilog="Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 computation, 5 statistical degeneracy. "
               f"{SEED_ENV} sets the default --seed.")
    p.add_argument("--version", action="version", version=f"scanforest {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress per-stage log lines")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic labeled flow corpus as CSV")
    g.add_argument("--config", help="generator config JSON (default: bundled sample config)")
    g.add_argument("--out", required=True, help="CSV output path")
    g.add_argument("--seed", type=int, help="override the config's seed")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("trial", help="split, search, refit and score one hyperparameter set")
    t.add_argument("data", help="flow CSV (label column 'label', optional tool/technique)")
    t.add_argument("--set", required=True, choices=["A", "B", "C", "D", "custom"])
    t.add_argument("--space", help="search space JSON for --set custom")
    t.add_argument("--method", default="both", choices=["grid", "random", "both"])
    t.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or 0)")
    t.add_argument("--out", required=True, help="JSON report path")
    t.add_argument("--markdown", help="also write the rendered table here")
    t.add_argument("--test-fraction", type=float, default=0.30)
    t.add_argument("--folds", type=int, default=10)
    t.add_argument("--n-iter", type=int, default=10, help="random-search candidates")
    t.add_argument("--workers", type=int, default=1, help="threads for tree growing")
    t.add_argument("--nonfinite", choices=["drop", "zero"], default="drop")
    t.add_argument("--keep-duplicates", action="store_true")
    t.set_defaults(func=cmd_trial)

    r = sub.add_parser("report", help="render report JSONs as tables")
    r.add_argument("reports", nargs="+")
    r.add_argument("--format", choices=["markdown", "text"], default="markdown")
    r.add_argument("--out", help="write the rendering here instead of stdout")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("compare", help="paired t-test of trial accuracies against published baselines")
    c.add_argument("reports", nargs="+")
    c.add_argument("--pairing", required=True,
                   help="comma-separated REPORT[:METHOD]=STUDY entries, e.g. 0:grid=Baah,1:random=Mohseni")
    c.add_argument("--baselines", default="builtin", help="'builtin' or a baseline CSV path")
    c.add_argument("--format", choices=["markdown", "text"], default="markdown")
    c.add_argument("--out", help="comparison JSON path")
    c.add_argument("--rendered", help="also write the rendered table here")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        code = args.func(args, argv)
    except CliError as exc:
        print(f"scanforest {args.command}: {exc}", file=sys.stderr)
        return exc.code
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
