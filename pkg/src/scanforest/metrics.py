"""Binary classification metrics, per-group breakdowns and the paired t-test."""
from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, Technique, Tool
from .errors import (
    EmptyInputError,
    EmptyMatrixError,
    LengthMismatchError,
    NoMetadataError,
    ZeroVarianceError,
)


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 counts indexed ``[actual][predicted]``."""

    counts: tuple[tuple[int, int], tuple[int, int]]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (2, 2) or (c < 0).any():
            raise ValueError("confusion counts must be a nonnegative 2x2 matrix")
        object.__setattr__(self, "counts", tuple(tuple(int(v) for v in row) for row in c))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def to_dict(self) -> dict:
        return {"counts": [list(row) for row in self.counts]}


def confusion(actual: Sequence[int], predicted: Sequence[int]) -> ConfusionMatrix:
    a = np.asarray(actual, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted, dtype=np.int64).reshape(-1)
    if a.shape != p.shape:
        raise LengthMismatchError(f"{a.size} actual labels vs {p.size} predictions")
    if a.size == 0:
        raise EmptyInputError("no labels to compare")
    if not (np.isin(a, (0, 1)).all() and np.isin(p, (0, 1)).all()):
        raise ValueError("labels must be 0 or 1")
    c = np.bincount(2 * a + p, minlength=4).reshape(2, 2)
    return ConfusionMatrix(tuple(map(tuple, c)))


@dataclass(frozen=True)
class EfficacyReport:
    """Accuracy plus per-class and macro precision, recall and F1.

    ``warnings`` names every ratio whose denominator was zero; those ratios
    are reported as 0.
    """

    accuracy: float
    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    support: tuple[int, int]
    confusion: ConfusionMatrix
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "support": list(self.support),
            "confusion": [list(row) for row in self.confusion.counts],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> EfficacyReport:
        return cls(float(doc["accuracy"]), tuple(doc["precision"]), tuple(doc["recall"]),
                   tuple(doc["f1"]), float(doc["macro_precision"]), float(doc["macro_recall"]),
                   float(doc["macro_f1"]), tuple(doc["support"]),
                   ConfusionMatrix(tuple(map(tuple, doc["confusion"]))),
                   tuple(doc.get("warnings", ())))


def _ratio(num: int, den: int, name: str, warnings: list[str]) -> float:
    if den == 0:
        warnings.append(name)
        return 0.0
    return num / den


def efficacy(cm: ConfusionMatrix) -> EfficacyReport:
    c = cm.array
    total = int(c.sum())
    if total == 0:
        raise EmptyMatrixError("confusion matrix holds no rows")
    warnings: list[str] = []
    precision, recall, f1 = [], [], []
    for k in (0, 1):
        tp = int(c[k, k])
        p = _ratio(tp, int(c[:, k].sum()), f"precision[{k}]", warnings)
        r = _ratio(tp, int(c[k, :].sum()), f"recall[{k}]", warnings)
        if p + r > 0:
            f = 2.0 * p * r / (p + r)
        else:
            warnings.append(f"f1[{k}]")
            f = 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
    return EfficacyReport(
        accuracy=float(np.trace(c)) / total,
        precision=tuple(precision), recall=tuple(recall), f1=tuple(f1),
        macro_precision=(precision[0] + precision[1]) / 2,
        macro_recall=(recall[0] + recall[1]) / 2,
        macro_f1=(f1[0] + f1[1]) / 2,
        support=(int(c[0].sum()), int(c[1].sum())),
        confusion=cm,
        warnings=tuple(warnings),
    )


def group_breakdown(data: Dataset, predicted: Sequence[int],
                    seed: int = 0) -> dict[tuple[Tool, Technique], EfficacyReport]:
    """Efficacy per (tool, technique) scan group.

    Each group's rows are scored together with an equal number of benign rows
    (all of them if there are fewer), drawn without replacement from a stream
    derived from ``seed`` and the group, so per-group accuracy has both
    classes. Keys come back sorted by tool then technique.

    Raises
    ------
    NoMetadataError
        No scan row carries tool/technique provenance.
    """
    pred = np.asarray(predicted, dtype=np.int64).reshape(-1)
    if pred.size != len(data):
        raise LengthMismatchError(f"{pred.size} predictions for {len(data)} rows")
    if not data.has_metadata:
        raise NoMetadataError("no scan row carries tool/technique metadata")
    tools = list(Tool)
    techniques = list(Technique)
    groups: dict[tuple[Tool, Technique], list[int]] = {}
    for i, (t, q) in enumerate(zip(data.tool, data.technique)):
        if t is not None:
            groups.setdefault((t, q), []).append(i)
    benign = np.flatnonzero(data.y == 0)
    out = {}
    for key in sorted(groups, key=lambda k: (tools.index(k[0]), techniques.index(k[1]))):
        rows = np.asarray(groups[key], dtype=np.int64)
        ss = np.random.SeedSequence(seed, spawn_key=(tools.index(key[0]), techniques.index(key[1])))
        m = min(rows.size, benign.size)
        mix = np.sort(np.random.default_rng(ss).choice(benign, size=m, replace=False))
        idx = np.concatenate([rows, mix])
        out[key] = efficacy(confusion(data.y[idx], pred[idx]))
    return out


# Student's t distribution via the regularized incomplete beta function

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction of I_x(a, b), modified Lentz evaluation."""
    tiny = 1e-300
    eps = 1e-16
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # the fraction converges fast below the mean; use the symmetry relation above it
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 < df:
        # df / (df + t^2) rounds to 1 for small t; use the complementary argument
        return min(1.0, 1.0 - betainc(0.5, df / 2.0, t2 / (df + t2)))
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t2)))


def t_cdf(t: float, df: float) -> float:
    half = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - half if t > 0 else half


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    diff_mean: float
    diff_std: float
    n: int

    def to_dict(self) -> dict:
        return {"t": self.t, "p": self.p, "df": self.df, "diff_mean": self.diff_mean,
                "diff_std": self.diff_std, "n": self.n}


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test of ``mean(a - b) = 0``.

    ``diff_std`` is the sample standard deviation (n - 1 denominator) of the
    differences.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise LengthMismatchError(f"{a.size} vs {b.size} observations")
    n = a.size
    if n < 2:
        raise ValueError("a paired t-test needs at least 2 pairs")
    d = a - b
    mean = math.fsum(d) / n
    sd = math.sqrt(math.fsum((d - mean) ** 2) / (n - 1))
    # differences equal up to rounding (e.g. after a common shift) count as constant
    if sd <= 1e-12 * max(1.0, float(np.max(np.abs(d)))):
        raise ZeroVarianceError("all paired differences are equal; t is undefined")
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, t_sf_two_sided(t, n - 1), n - 1, mean, sd, n)


# Published baselines

BASELINE_VERSION = 1


@dataclass(frozen=True)
class BaselineEntry:
    """One source study's reported efficacy; ``None`` marks a value it did not report."""

    study: str
    accuracy: float | None = None
    recall: float | None = None
    precision: float | None = None
    f1: float | None = None


@dataclass(frozen=True)
class BaselineTable:
    entries: tuple[BaselineEntry, ...]
    version: int = BASELINE_VERSION
    source: str = "builtin"

    def __post_init__(self):
        names = [e.study for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate study names in baseline table")

    @property
    def studies(self) -> list[str]:
        return [e.study for e in self.entries]

    def __getitem__(self, study: str) -> BaselineEntry:
        for e in self.entries:
            if e.study == study:
                return e
        raise KeyError(study)

    def to_dict(self) -> dict:
        return {"version": self.version, "source": self.source,
                "entries": [vars(e).copy() for e in self.entries]}


# Sirisha's accuracy here (0.7650) differs from the survey table's 78.09/84.14
# figures for the same study; kept as reported in the efficacy comparison.
BUILTIN_BASELINES = BaselineTable((
    BaselineEntry("Algaolahi", 0.9975, 0.9989, 0.9975, 0.9982),
    BaselineEntry("Baah", 0.9998, 0.9997, 0.9999, 0.9998),
    BaselineEntry("Sirisha", 0.7650, 0.6525, 0.9721, 0.7809),
    BaselineEntry("SaiKiran", 0.9993, None, None, None),
    BaselineEntry("Mohseni", 0.9964, None, None, None),
    BaselineEntry("Bertoli", None, None, None, 1.0000),
))

_METRIC_COLUMNS = ("accuracy", "recall", "precision", "f1")


def _parse_cell(text: str) -> float | None:
    text = text.strip()
    if text in ("", "-", "–", "NaN", "nan", "NA"):
        return None
    return float(text)


def load_baselines_csv(path: str | Path) -> BaselineTable:
    """Read ``study,accuracy,recall,precision,f1`` rows; blank, ``-`` or ``NaN`` = absent."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"study", *_METRIC_COLUMNS} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"baseline CSV lacks columns {sorted(missing)}")
        entries = [BaselineEntry(row["study"].strip(),
                                 *(_parse_cell(row[c]) for c in _METRIC_COLUMNS))
                   for row in reader]
    return BaselineTable(tuple(entries), source=str(path))


def write_baselines_csv(table: BaselineTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("study", *_METRIC_COLUMNS))
        for e in table.entries:
            w.writerow((e.study, *("" if getattr(e, c) is None else f"{getattr(e, c):.4f}"
                                   for c in _METRIC_COLUMNS)))


@dataclass(frozen=True)
class ComparisonRow:
    trial_index: int
    trial_label: str
    study: str
    trial_accuracy: float
    baseline_accuracy: float


@dataclass(frozen=True)
class Comparison:
    rows: tuple[ComparisonRow, ...]
    ttest: TTestResult
    pairing: tuple[tuple[int, str], ...]
    baseline_source: str = "builtin"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pairing": [{"trial": i, "study": s} for i, s in self.pairing],
            "baseline_source": self.baseline_source,
            "rows": [vars(r).copy() for r in self.rows],
            "ttest": self.ttest.to_dict(),
        }


def _trial_accuracy(trial) -> tuple[float, str]:
    if isinstance(trial, (int, float)):
        return float(trial), ""
    return float(trial.efficacy.accuracy), getattr(trial, "label", "")


def compare_to_baselines(trials: Sequence, baselines: BaselineTable,
                         pairing: Sequence[tuple[int, str]]) -> Comparison:
    """Pair trial accuracies with study accuracies and t-test the differences.

    ``trials`` holds trial reports (anything with ``efficacy.accuracy``) or
    bare accuracies; ``pairing`` lists ``(trial index, study name)`` pairs.
    The t statistic is computed on ``trial - baseline``.
    """
    pairing = tuple((int(i), str(s)) for i, s in pairing)
    if len(pairing) < 2:
        raise ValueError("a comparison needs at least 2 pairs")
    rows = []
    for i, study in pairing:
        if not 0 <= i < len(trials):
            raise IndexError(f"pairing names trial {i}, but only {len(trials)} trials were given")
        try:
            entry = baselines[study]
        except KeyError:
            raise KeyError(f"unknown study {study!r}; known: {baselines.studies}") from None
        if entry.accuracy is None:
            raise ValueError(f"study {study!r} reports no accuracy")
        acc, label = _trial_accuracy(trials[i])
        rows.append(ComparisonRow(i, label, study, acc, entry.accuracy))
    result = paired_ttest([r.trial_accuracy for r in rows], [r.baseline_accuracy for r in rows])
    return Comparison(tuple(rows), result, pairing, baselines.source)
