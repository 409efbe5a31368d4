"""Per-epoch training logs and accuracy/loss curve plots.

Log CSV columns, in this order: ``epoch, train_acc, val_acc, train_loss, val_loss``.
A header row is optional.
"""

import csv
import io
import math
from dataclasses import dataclass

from .errors import EpochLogError

COLUMNS = ("epoch", "train_acc", "val_acc", "train_loss", "val_loss")


@dataclass(frozen=True)
class EpochLog:
    epochs: tuple
    train_accuracy: tuple
    validation_accuracy: tuple
    train_loss: tuple
    validation_loss: tuple

    def __len__(self):
        return len(self.epochs)

    def best_epoch(self):
        """Epoch with the lowest validation loss; the earliest one on ties."""
        best = min(range(len(self.epochs)), key=lambda i: (self.validation_loss[i], i))
        return self.epochs[best]


def parse_epoch_log(text):
    rows = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if not rows and row[0].strip().lower() == "epoch":
            if [c.strip().lower() for c in row] != list(COLUMNS):
                raise EpochLogError(f"header must be {','.join(COLUMNS)}", line=lineno)
            continue
        if len(row) != len(COLUMNS):
            raise EpochLogError(f"expected {len(COLUMNS)} columns, got {len(row)}", line=lineno)
        try:
            epoch = int(row[0])
            values = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise EpochLogError(str(exc), line=lineno) from None
        if any(math.isnan(v) for v in values):
            raise EpochLogError("NaN value", line=lineno)
        if rows and epoch <= rows[-1][1][0]:
            raise EpochLogError(f"epoch {epoch} does not increase", line=lineno)
        tr_acc, va_acc, tr_loss, va_loss = values
        if not (0 <= tr_acc <= 1 and 0 <= va_acc <= 1):
            raise EpochLogError("accuracies must lie in [0, 1]", line=lineno)
        if tr_loss < 0 or va_loss < 0:
            raise EpochLogError("losses must be non-negative", line=lineno)
        rows.append((lineno, (epoch, *values)))
    if not rows:
        raise EpochLogError("epoch log is empty")
    cols = list(zip(*(r for _, r in rows)))
    return EpochLog(*(tuple(c) for c in cols))


def read_epoch_log(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_epoch_log(fh.read())
    except OSError as exc:
        raise EpochLogError(f"cannot read {path}: {exc}") from exc


def _plot(log, series, ylabel, title, best):
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6, 4), dpi=100)
    ax = fig.add_subplot(1, 1, 1)
    for values, label, color in series:
        ax.plot(log.epochs, values, label=label, color=color)
    idx = log.epochs.index(best)
    ax.axvline(best, color="gray", linestyle="--", linewidth=1)
    marker_values = series[1][0]
    ax.scatter([best], [marker_values[idx]], color="black", zorder=3, label=f"best epoch = {best}")
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    return buf.getvalue()


def plot_curves(log, title=""):
    """PNG bytes for the accuracy and loss plots, keyed ``accuracy`` and ``loss``."""
    best = log.best_epoch()
    prefix = f"{title} " if title else ""
    return {
        "accuracy": _plot(log, [(log.train_accuracy, "train", "tab:red"),
                                (log.validation_accuracy, "validation", "tab:green")],
                          "accuracy", f"{prefix}training and validation accuracy", best),
        "loss": _plot(log, [(log.train_loss, "train", "tab:red"),
                            (log.validation_loss, "validation", "tab:green")],
                      "loss", f"{prefix}training and validation loss", best),
    }
