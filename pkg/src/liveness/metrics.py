"""Precision / recall / F1 and the FAR, FRR, HTER error rates.

Conventions:

* class 0 is bonafide, class 1 is attacker;
* for FAR/FRR the positive ("accepted") class is bonafide, so FAR is the
  share of attackers admitted and FRR the share of bonafide rejected;
* a sample is accepted as bonafide iff its bonafide score is strictly
  greater than the threshold; a tie is rejected;
* a ratio with a zero denominator is ``None`` (rendered as "—" in
  tables), never a silent 0 or 1.
"""

import csv
import io
import json
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .data_io import ATTACKER, BONAFIDE, CLASS_NAMES
from .errors import InputError, UndefinedRateError

UNDEFINED_MARK = "—"

REPORT_KEYS = (
    "dataset", "n_bonafide", "n_attacker", "threshold",
    "precision_b", "precision_a", "recall_b", "recall_a", "f1_b", "f1_a",
    "far", "frr", "hter",
)


def _as_classes(values, what):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InputError(f"{what} must be one-dimensional")
    if arr.size and not np.all((arr == BONAFIDE) | (arr == ATTACKER)):
        raise InputError(f"{what} must contain only 0 (bonafide) or 1 (attacker)")
    return arr.astype(np.int8)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_class: int = BONAFIDE

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self):
        """The same tallies seen with the other class as positive."""
        return ConfusionCounts(self.tn, self.fn, self.fp, self.tp, 1 - self.positive_class)


def confusion_counts(predictions, labels, positive_class=BONAFIDE):
    pred = _as_classes(predictions, "predictions")
    lab = _as_classes(labels, "labels")
    if pred.shape != lab.shape:
        raise InputError(f"{pred.size} predictions but {lab.size} labels")
    if pred.size == 0:
        raise InputError("no samples")
    if positive_class not in (BONAFIDE, ATTACKER):
        raise InputError(f"unknown positive class {positive_class!r}")
    pp, lp = pred == positive_class, lab == positive_class
    return ConfusionCounts(
        tp=int(np.sum(pp & lp)),
        fp=int(np.sum(pp & ~lp)),
        fn=int(np.sum(~pp & lp)),
        tn=int(np.sum(~pp & ~lp)),
        positive_class=positive_class,
    )


class ClassMetrics(NamedTuple):
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


def _ratio(num, den):
    return None if den == 0 else num / den


def f1_from(precision, recall):
    """Harmonic mean; ``None`` if either input is undefined or both are zero."""
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def class_metrics(counts):
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    return ClassMetrics(precision, recall, f1_from(precision, recall))


class ErrorRates(NamedTuple):
    far: float
    frr: float
    hter: float
    decision_threshold: float


def hter(far, frr):
    for name, value in (("far", far), ("frr", frr)):
        if not 0.0 <= value <= 1.0:
            raise InputError(f"{name} must lie in [0, 1], got {value}")
    return (far + frr) / 2.0


def decide(scores, threshold):
    """Predicted class per sample: bonafide iff score > threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.where(scores > threshold, BONAFIDE, ATTACKER).astype(np.int8)


def _check_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    lab = _as_classes(labels, "labels")
    if scores.shape != lab.shape:
        raise InputError(f"{scores.size} scores but {lab.size} labels")
    if np.any(~np.isfinite(scores)) or np.any((scores < 0) | (scores > 1)):
        raise InputError("scores must lie in [0, 1]")
    for cls in (BONAFIDE, ATTACKER):
        if not np.any(lab == cls):
            raise UndefinedRateError(CLASS_NAMES[cls])
    return scores, lab


def error_rates(scores, labels, threshold=0.5):
    """FAR / FRR / HTER of ``scores`` (bonafide probability per sample)."""
    scores, lab = _check_scores(scores, labels)
    accepted = scores > threshold
    attackers, bonafide = lab == ATTACKER, lab == BONAFIDE
    far = float(np.sum(accepted & attackers)) / float(np.sum(attackers))
    frr = float(np.sum(~accepted & bonafide)) / float(np.sum(bonafide))
    return ErrorRates(far, frr, hter(far, frr), float(threshold))


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    n_bonafide: int
    n_attacker: int
    bonafide: ClassMetrics
    attacker: ClassMetrics
    rates: ErrorRates

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "n_bonafide": self.n_bonafide,
            "n_attacker": self.n_attacker,
            "threshold": self.rates.decision_threshold,
            "precision_b": self.bonafide.precision,
            "precision_a": self.attacker.precision,
            "recall_b": self.bonafide.recall,
            "recall_a": self.attacker.recall,
            "f1_b": self.bonafide.f1,
            "f1_a": self.attacker.f1,
            "far": self.rates.far,
            "frr": self.rates.frr,
            "hter": self.rates.hter,
        }


def build_report(dataset_name, scores, labels, threshold=0.5):
    scores, lab = _check_scores(scores, labels)
    pred = decide(scores, threshold)
    counts_b = confusion_counts(pred, lab, BONAFIDE)
    return EvalReport(
        dataset=dataset_name,
        n_bonafide=int(np.sum(lab == BONAFIDE)),
        n_attacker=int(np.sum(lab == ATTACKER)),
        bonafide=class_metrics(counts_b),
        attacker=class_metrics(counts_b.swapped()),
        rates=error_rates(scores, lab, threshold),
    )


# -- rendering ---------------------------------------------------------------

def fmt3(value):
    if value is None:
        return UNDEFINED_MARK
    return f"{value:.3f}"


_TABLE_COLUMNS = (
    ("Dataset", "dataset"), ("Precision (B)", "precision_b"), ("Precision (A)", "precision_a"),
    ("Recall (B)", "recall_b"), ("Recall (A)", "recall_a"), ("F1 score (B)", "f1_b"),
    ("F1 score (A)", "f1_a"), ("FAR", "far"), ("FRR", "frr"), ("HTER", "hter"),
)


def _table_rows(reports):
    for rep in reports:
        d = rep.to_dict()
        yield [d["dataset"]] + [fmt3(d[key]) for _, key in _TABLE_COLUMNS[1:]]


def render_reports(reports, fmt="json"):
    """Serialise one or more reports as json, md or csv."""
    reports = list(reports)
    if fmt == "json":
        payload = [r.to_dict() for r in reports]
        return json.dumps(payload[0] if len(payload) == 1 else payload, indent=2) + "\n"
    header = [title for title, _ in _TABLE_COLUMNS]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(_table_rows(reports))
        return buf.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(row) + " |" for row in _table_rows(reports)]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


# -- auditing printed tables -------------------------------------------------

class HterAuditRow(NamedTuple):
    label: str
    far: float
    frr: float
    printed_hter: float
    computed_hter: float

    @property
    def delta(self):
        return abs(self.computed_hter - self.printed_hter)


def audit_hter_column(rows):
    """Recompute HTER from printed ``(label, far, frr, printed_hter)`` rows."""
    return [HterAuditRow(label, far, frr, printed, hter(far, frr))
            for label, far, frr, printed in rows]
