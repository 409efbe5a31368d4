"""Confusion matrix, precision/recall/F1/accuracy, and evaluation reports.

OSCC (label 1) is the positive class. Metrics are exact :class:`~fractions.Fraction`
values; rounding (half-up, 4 decimals) happens only when a report is serialized.
An undefined metric (zero denominator) is ``None`` in reports, never 0.
"""

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from .errors import LengthMismatch, UndefinedMetric

REPORT_DECIMALS = 4
CSV_COLUMNS = ("model", "partition", "threshold", "tp", "tn", "fp", "fn", "precision", "recall", "f1", "accuracy")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def swapped(self):
        """The same matrix read with Normal as the positive class."""
        return ConfusionMatrix(tp=self.tn, tn=self.tp, fp=self.fn, fn=self.fp)

    def as_dict(self):
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def confusion(predictions, labels):
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not labels:
        raise LengthMismatch("need at least one prediction")
    counts = {(1, 1): 0, (0, 0): 0, (1, 0): 0, (0, 1): 0}
    for p, y in zip(predictions, labels):
        key = (int(p), int(y))
        if key not in counts:
            raise ValueError(f"predictions and labels must be 0 or 1, got {p!r}, {y!r}")
        counts[key] += 1
    return ConfusionMatrix(tp=counts[1, 1], tn=counts[0, 0], fp=counts[1, 0], fn=counts[0, 1])


def precision(m):
    if m.tp + m.fp == 0:
        raise UndefinedMetric("precision undefined: no positive predictions")
    return Fraction(m.tp, m.tp + m.fp)


def recall(m):
    if m.tp + m.fn == 0:
        raise UndefinedMetric("recall undefined: no positive labels")
    return Fraction(m.tp, m.tp + m.fn)


def f1(m):
    p, r = precision(m), recall(m)
    if p + r == 0:
        raise UndefinedMetric("F1 undefined: precision and recall are both zero")
    return 2 * p * r / (p + r)


def accuracy(m):
    if m.total == 0:
        raise UndefinedMetric("accuracy undefined on an empty matrix")
    return Fraction(m.tp + m.tn, m.total)


def _maybe(fn, m):
    try:
        return fn(m)
    except UndefinedMetric:
        return None


def round_metric(value, decimals=REPORT_DECIMALS):
    """Round a Fraction half-up to ``decimals`` places; None passes through."""
    if value is None:
        return None
    q = Decimal(1).scaleb(-decimals)
    exact = Decimal(value.numerator) / Decimal(value.denominator)
    return float(exact.quantize(q, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class MetricsReport:
    matrix: ConfusionMatrix
    precision: Fraction = None
    recall: Fraction = None
    f1: Fraction = None
    accuracy: Fraction = None
    model: str = ""
    partition: str = ""
    threshold: float = 0.5

    @classmethod
    def from_matrix(cls, m, model="", partition="", threshold=0.5):
        return cls(matrix=m, precision=_maybe(precision, m), recall=_maybe(recall, m), f1=_maybe(f1, m),
                   accuracy=_maybe(accuracy, m), model=model, partition=partition, threshold=threshold)

    @property
    def per_class_counts(self):
        """(Normal, OSCC) label counts."""
        m = self.matrix
        return (m.tn + m.fp, m.tp + m.fn)

    def rounded(self):
        return {name: round_metric(getattr(self, name)) for name in ("precision", "recall", "f1", "accuracy")}

    def to_dict(self):
        return {
            "model": self.model,
            "partition": self.partition,
            "threshold": self.threshold,
            "matrix": self.matrix.as_dict(),
            **self.rounded(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_row(self):
        d = self.to_dict()
        row = {"model": d["model"], "partition": d["partition"], "threshold": d["threshold"], **d["matrix"]}
        for name in ("precision", "recall", "f1", "accuracy"):
            row[name] = "" if d[name] is None else f"{d[name]:.4f}"
        return row

    def to_csv(self):
        return reports_to_csv([self])


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def report_from_dict(doc):
    """Rebuild a report from its JSON form; metrics are recomputed from the matrix."""
    m = ConfusionMatrix(**doc["matrix"])
    return MetricsReport.from_matrix(m, model=doc.get("model", ""), partition=doc.get("partition", ""),
                                     threshold=doc.get("threshold", 0.5))


def decide(probs, threshold=0.5):
    """Hard labels: OSCC iff p(OSCC) > threshold. At 0.5 this is argmax with ties to Normal."""
    probs = np.asarray(probs, dtype=np.float64)
    return (probs[:, 1] > threshold).astype(int)


def evaluate(classifier, partition, threshold=0.5, batch_size=32, model_name=None, partition_name=""):
    """Predict every image of ``partition`` (LabeledImage records) and build a report.

    Images whose size differs from the model input are passed through
    :func:`~histolime.imaging.resize_to_input` first.
    """
    from .imaging import resize_to_input

    if not partition:
        raise LengthMismatch("cannot evaluate an empty partition")
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    side = classifier.input_side
    preds, labels = [], []
    for start in range(0, len(partition), batch_size):
        chunk = partition[start:start + batch_size]
        rasters = []
        for rec in chunk:
            img = rec.load()
            if img.width != side or img.height != side:
                img = resize_to_input(img, side)
            rasters.append(img)
        probs = classifier.predict(rasters)
        preds.extend(decide(probs, threshold).tolist())
        labels.extend(rec.label for rec in chunk)
    m = confusion(preds, labels)
    return MetricsReport.from_matrix(m, model=model_name or classifier.name, partition=partition_name,
                                     threshold=threshold)
