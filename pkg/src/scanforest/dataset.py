"""Labeled flow data: containers, CSV I/O, preprocessing and stratified splits."""
from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    AllRowsDroppedError,
    DegenerateClassError,
    EmptyDatasetError,
    InsufficientClassSizeError,
    MissingColumnError,
    ParseFailureError,
    SingleClassRemainingError,
)

BENIGN = 0
SCAN = 1


class Tool(str, Enum):
    NMAP = "nmap"
    MASSCAN = "masscan"
    UNICORNSCAN = "unicornscan"
    ZMAP = "zmap"
    HPING = "hping"


class Technique(str, Enum):
    CONNECT = "connect"
    SYN = "syn"
    FIN = "fin"
    NULL = "null"
    XMAS = "xmas"
    UDP = "udp"


def _as_tool(value) -> Tool | None:
    if value is None or value == "":
        return None
    return Tool(value)


def _as_technique(value) -> Technique | None:
    if value is None or value == "":
        return None
    return Technique(value)


@dataclass(frozen=True)
class FlowRecord:
    """One network flow.

    Scan rows (``label == 1``) normally carry the tool and technique that
    produced them; benign rows never do.
    """

    features: tuple[float, ...]
    label: int
    tool: Tool | None = None
    technique: Technique | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        object.__setattr__(self, "tool", _as_tool(self.tool))
        object.__setattr__(self, "technique", _as_technique(self.technique))
        _check_row(self.label, self.tool, self.technique)


def _check_row(label, tool, technique, where: str = "") -> None:
    if label not in (BENIGN, SCAN):
        raise ValueError(f"label must be 0 or 1, got {label!r}{where}")
    if (tool is None) != (technique is None):
        raise ValueError(f"tool and technique must be given together{where}")
    if label == BENIGN and tool is not None:
        raise ValueError(f"benign rows carry no tool/technique{where}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-named feature matrix with binary labels and per-row scan provenance.

    Arrays are stored read-only; derive new datasets with :meth:`subset`
    rather than mutating.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    tool: tuple[Tool | None, ...] = ()
    technique: tuple[Technique | None, ...] = ()

    def __post_init__(self):
        names = tuple(str(n) for n in self.feature_names)
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(names))
        y = np.array(self.y, dtype=np.int64, copy=True).reshape(-1)
        if X.ndim != 2 or X.shape[1] != len(names):
            raise ValueError(
                f"feature matrix shape {X.shape} does not match {len(names)} feature names")
        if X.shape[0] != y.shape[0]:
            raise ValueError("feature matrix and label vector lengths differ")
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names")
        if not np.isin(y, (BENIGN, SCAN)).all():
            raise ValueError("labels must be 0 or 1")
        n = y.shape[0]
        tool = tuple(_as_tool(t) for t in self.tool) if self.tool else (None,) * n
        technique = (tuple(_as_technique(t) for t in self.technique)
                     if self.technique else (None,) * n)
        if len(tool) != n or len(technique) != n:
            raise ValueError("metadata length does not match row count")
        for i in range(n):
            if tool[i] is not None or technique[i] is not None:
                _check_row(int(y[i]), tool[i], technique[i], f" (row {i})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "tool", tool)
        object.__setattr__(self, "technique", technique)

    @classmethod
    def from_records(cls, feature_names: Sequence[str], records: Iterable[FlowRecord]) -> Dataset:
        records = list(records)
        d = len(feature_names)
        for i, r in enumerate(records):
            if len(r.features) != d:
                raise ValueError(f"row {i} has {len(r.features)} features, expected {d}")
        X = np.array([r.features for r in records], dtype=np.float64).reshape(len(records), d)
        return cls(tuple(feature_names), X, [r.label for r in records],
                   tuple(r.tool for r in records), tuple(r.technique for r in records))

    def __len__(self) -> int:
        return int(self.y.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.feature_names == other.feature_names
                and self.X.shape == other.X.shape
                and np.array_equal(self.X, other.X, equal_nan=True)
                and np.array_equal(self.y, other.y)
                and self.tool == other.tool
                and self.technique == other.technique)

    __hash__ = None

    @property
    def rows(self) -> list[FlowRecord]:
        return [FlowRecord(tuple(self.X[i]), int(self.y[i]), self.tool[i], self.technique[i])
                for i in range(len(self))]

    @property
    def class_counts(self) -> dict[int, int]:
        return {BENIGN: int(np.sum(self.y == BENIGN)), SCAN: int(np.sum(self.y == SCAN))}

    @property
    def has_metadata(self) -> bool:
        return any(t is not None for t in self.tool)

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.feature_names, self.X[idx], self.y[idx],
                       tuple(self.tool[i] for i in idx),
                       tuple(self.technique[i] for i in idx))


@dataclass(frozen=True)
class CsvSchema:
    """Which CSV columns hold the label and scan provenance.

    Feature columns default to every other column, in header order. Raw label
    strings are mapped to 0/1 through ``label_map``.
    """

    label_column: str = "label"
    tool_column: str | None = "tool"
    technique_column: str | None = "technique"
    feature_columns: tuple[str, ...] | None = None
    label_map: Mapping[str, int] = field(default_factory=lambda: {"0": 0, "1": 1})


def _format_value(x: float) -> str:
    if math.isfinite(x) and x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write ``data`` as UTF-8 CSV: features, then label, then tool and technique.

    Floats are written in shortest round-trip form, so reading the file back
    with :func:`load_csv` reproduces the dataset exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_csv_stream(data, fh)


def write_csv_stream(data: Dataset, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([*data.feature_names, "label", "tool", "technique"])
    for i in range(len(data)):
        tool = data.tool[i].value if data.tool[i] is not None else ""
        tech = data.technique[i].value if data.technique[i] is not None else ""
        writer.writerow([*(_format_value(float(v)) for v in data.X[i]),
                         int(data.y[i]), tool, tech])


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> Dataset:
    """Read a labeled flow CSV.

    Parameters
    ----------
    path : path to a UTF-8 CSV file with a header row.
    schema : column roles; the default expects ``label`` plus optional
        ``tool``/``technique`` columns, everything else being a feature.

    Raises
    ------
    MissingColumnError
        The label column, or a declared feature column, is absent.
    ParseFailureError
        A feature cell is not numeric, or a label is not in the label map.
        ``row`` is the 1-based line number in the file.
    EmptyDatasetError
        The file has a header but no data rows.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: no header row") from None
        col = {name: j for j, name in enumerate(header)}
        if schema.label_column not in col:
            raise MissingColumnError(f"{path}: label column {schema.label_column!r} not found")
        meta_cols = {c for c in (schema.tool_column, schema.technique_column) if c}
        if schema.feature_columns is not None:
            missing = [c for c in schema.feature_columns if c not in col]
            if missing:
                raise MissingColumnError(f"{path}: feature columns not found: {missing}")
            features = list(schema.feature_columns)
        else:
            features = [c for c in header if c != schema.label_column and c not in meta_cols]
        fidx = [col[c] for c in features]
        lidx = col[schema.label_column]
        tidx = col.get(schema.tool_column) if schema.tool_column else None
        qidx = col.get(schema.technique_column) if schema.technique_column else None

        rows_x: list[list[float]] = []
        labels: list[int] = []
        tools: list[Tool | None] = []
        techniques: list[Technique | None] = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ParseFailureError(
                    f"{path}:{line_no}: expected {len(header)} cells, got {len(rec)}", line_no)
            vec = []
            for name, j in zip(features, fidx):
                cell = rec[j].strip()
                if cell == "":
                    vec.append(math.nan)
                    continue
                try:
                    vec.append(float(cell))
                except ValueError:
                    raise ParseFailureError(
                        f"{path}:{line_no}: column {name!r}: not a number: {cell!r}",
                        line_no, name) from None
            raw_label = rec[lidx].strip()
            if raw_label not in schema.label_map:
                raise ParseFailureError(
                    f"{path}:{line_no}: label {raw_label!r} not in label map",
                    line_no, schema.label_column)
            try:
                tool = _as_tool(rec[tidx].strip()) if tidx is not None else None
                tech = _as_technique(rec[qidx].strip()) if qidx is not None else None
            except ValueError as exc:
                raise ParseFailureError(f"{path}:{line_no}: {exc}", line_no) from None
            rows_x.append(vec)
            labels.append(int(schema.label_map[raw_label]))
            tools.append(tool)
            techniques.append(tech)
    if not labels:
        raise EmptyDatasetError(f"{path}: no data rows")
    try:
        return Dataset(tuple(features), np.array(rows_x, dtype=np.float64).reshape(len(labels), len(features)),
                       labels, tuple(tools), tuple(techniques))
    except ValueError as exc:
        raise ParseFailureError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class PreprocessPolicy:
    """Cleaning steps applied by :func:`preprocess`.

    ``nonfinite`` is ``"drop"`` (remove rows holding NaN/inf) or ``"zero"``
    (replace those cells with 0). ``scale`` min-max scales each feature to
    [0, 1]; it is off by default since tree splits are scale-invariant.
    """

    nonfinite: str = "drop"
    dedupe: bool = True
    scale: bool = False

    def __post_init__(self):
        if self.nonfinite not in ("drop", "zero"):
            raise ValueError(f"nonfinite must be 'drop' or 'zero', got {self.nonfinite!r}")


@dataclass(frozen=True)
class PreprocessSummary:
    input_rows: int
    nonfinite_rows: int
    duplicate_rows: int
    conflicting_rows: int
    output_rows: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def preprocess(raw: Dataset, policy: PreprocessPolicy | None = None) -> tuple[Dataset, PreprocessSummary]:
    """Clean a raw dataset.

    Rows with non-finite features are dropped (or zero-filled), exact
    duplicates of (features, label) keep their first occurrence, and rows
    whose feature vector also appears under the other label are kept and
    counted in ``conflicting_rows``.
    """
    policy = policy or PreprocessPolicy()
    if len(raw) == 0:
        raise EmptyDatasetError("cannot preprocess an empty dataset")
    X = raw.X + 0.0  # folds -0.0 into 0.0 so byte keys compare by value
    finite = np.isfinite(X).all(axis=1)
    n_nonfinite = int((~finite).sum())
    if policy.nonfinite == "drop":
        keep = finite.copy()
    else:
        X = np.where(np.isfinite(X), X, 0.0)
        keep = np.ones(len(raw), dtype=bool)

    n_dup = 0
    if policy.dedupe:
        seen: set[tuple[bytes, int]] = set()
        for i in np.flatnonzero(keep):
            k = (X[i].tobytes(), int(raw.y[i]))
            if k in seen:
                keep[i] = False
                n_dup += 1
            else:
                seen.add(k)

    idx = np.flatnonzero(keep)
    if idx.size == 0:
        raise AllRowsDroppedError("preprocessing removed every row")
    y = raw.y[idx]
    if np.unique(y).size < 2:
        raise SingleClassRemainingError("only one class remains after preprocessing")
    Xk = X[idx]

    by_vec: dict[bytes, set[int]] = {}
    for row, label in zip(Xk, y):
        by_vec.setdefault(row.tobytes(), set()).add(int(label))
    n_conflict = sum(1 for row in Xk if len(by_vec[row.tobytes()]) > 1)

    if policy.scale:
        lo = Xk.min(axis=0)
        span = Xk.max(axis=0) - lo
        Xk = np.where(span > 0, (Xk - lo) / np.where(span > 0, span, 1.0), 0.0)

    out = Dataset(raw.feature_names, Xk, y,
                  tuple(raw.tool[i] for i in idx), tuple(raw.technique[i] for i in idx))
    return out, PreprocessSummary(len(raw), n_nonfinite, n_dup, n_conflict, len(out))


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Apportion ``total`` integer units in proportion to ``weights``.

    Each share is the floor of its exact quota, plus one for the largest
    fractional remainders (ties go to the lower index).
    """
    w = np.asarray(weights, dtype=np.float64)
    if total < 0 or w.size == 0 or (w < 0).any() or w.sum() <= 0:
        raise ValueError("need a nonnegative total and nonnegative, not-all-zero weights")
    quotas = total * w / w.sum()
    shares = np.floor(quotas).astype(np.int64)
    rest = total - int(shares.sum())
    order = sorted(range(w.size), key=lambda i: (-(quotas[i] - shares[i]), i))
    for i in order[:rest]:
        shares[i] += 1
    return [int(s) for s in shares]


@dataclass(frozen=True)
class SplitPlan:
    test_fraction: float = 0.30
    seed: int = 0
    k: int = 10

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


def split_indices(y: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train, test) row indices, each sorted ascending."""
    y = np.asarray(y)
    classes = [BENIGN, SCAN]
    members = [np.flatnonzero(y == c) for c in classes]
    for c, m in zip(classes, members):
        if m.size < 2:
            raise DegenerateClassError(
                f"class {c} has {m.size} row(s); need 2 to appear in train and test")
    total = int(math.floor(test_fraction * y.size + 0.5))
    shares = largest_remainder(total, [m.size for m in members])
    rng = np.random.default_rng(seed)
    test_parts, train_parts = [], []
    for m, t in zip(members, shares):
        t = min(max(t, 1), m.size - 1)
        perm = rng.permutation(m)
        test_parts.append(perm[:t])
        train_parts.append(perm[t:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def stratified_split(data: Dataset, plan: SplitPlan | None = None) -> tuple[Dataset, Dataset]:
    """Split into (train, test) preserving class proportions.

    The test size is ``round(test_fraction * n)`` apportioned between classes
    by largest remainder, so each class lands within one row of its exact
    share. Deterministic for a given ``plan.seed``.
    """
    plan = plan or SplitPlan()
    train_idx, test_idx = split_indices(data.y, plan.test_fraction, plan.seed)
    return data.subset(train_idx), data.subset(test_idx)


def kfold_indices(y: np.ndarray, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in (BENIGN, SCAN):
        m = np.flatnonzero(y == c)
        if m.size < k:
            raise InsufficientClassSizeError(f"class {c} has {m.size} rows, fewer than k={k}")
        perm = rng.permutation(m)
        fold_of[perm] = (offset + np.arange(m.size)) % k
        offset += m.size
    folds = []
    for j in range(k):
        val = np.flatnonzero(fold_of == j)
        train = np.flatnonzero(fold_of != j)
        folds.append((train, val))
    return folds


def stratified_kfold(data: Dataset, k: int = 10, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """``k`` (train, validation) index pairs whose validation sets partition the rows.

    Each class is shuffled and dealt round-robin across folds, so per-class
    fold counts differ by at most one.
    """
    return kfold_indices(data.y, k, seed)
