"""Set-level precision/recall/F1 and multi-seed aggregation."""

import logging
import statistics
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence, Set

from .errors import LengthMismatch

logger = logging.getLogger(__name__)

METRIC_NAMES = ("precision", "recall", "f1")


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self, digits: int = 6) -> Dict:
        out = asdict(self)
        out.update({name: round(getattr(self, name), digits) for name in METRIC_NAMES})
        return out


def evaluate(predictions: Sequence[Set], truths: Sequence[Set]) -> MetricsReport:
    """Micro-averaged set matching over all drugs; empty denominators give 0.

    Raises:
        LengthMismatch: If the two lists differ in length
    """
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions but {len(truths)} truths")
    tp = fp = fn = 0
    for pred, truth in zip(predictions, truths):
        pred, truth = set(pred), set(truth)
        hits = len(pred & truth)
        tp += hits
        fp += len(pred) - hits
        fn += len(truth) - hits
    return MetricsReport(tp, fp, fn)


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    values: List[float]

    def __str__(self) -> str:
        return f"{self.mean:.4f} ± {self.std:.4f}"


def summarize(reports: Iterable[MetricsReport]) -> Dict[str, MetricSummary]:
    """Mean and sample standard deviation of each metric across seeds."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to summarize")
    if len(reports) == 1:
        logger.warning("Only one seed: standard deviations are reported as 0")
    summary = {}
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports]
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        summary[name] = MetricSummary(statistics.fmean(values), std, values)
    return summary
