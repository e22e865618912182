"""Threshold metrics for live/spoof scoring.

Scores are spoof probabilities; a sample is called Spoof when ``score >= thr``.
Labels are 0 for bona fide (Live) and 1 for attack (Spoof).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractViolation, UndefinedRateError


@dataclass
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        self.labels = np.asarray(self.labels).astype(np.int64).ravel()
        if self.scores.shape != self.labels.shape:
            raise ContractViolation("scores and labels must have equal length")
        if not np.all(np.isfinite(self.scores)):
            raise ContractViolation("scores must be finite")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise ContractViolation("labels must be 0 or 1")

    @property
    def live(self) -> np.ndarray:
        return np.ascontiguousarray(self.scores[self.labels == 0])

    @property
    def spoof(self) -> np.ndarray:
        return np.ascontiguousarray(self.scores[self.labels == 1])

    def require_both_classes(self) -> None:
        if not np.any(self.labels == 0) or not np.any(self.labels == 1):
            raise UndefinedRateError("rates need at least one live and one spoof sample")


def _rates(scored: ScoredSet, thresholds):
    scored.require_both_classes()
    live, spoof = scored.live, scored.spoof
    thr = np.ascontiguousarray(np.atleast_1d(np.asarray(thresholds, dtype=np.float64)))
    live_rejected, spoof_accepted = _kernels.error_counts(live, spoof, thr)
    apcer = spoof_accepted / spoof.size
    bpcer = live_rejected / live.size
    return apcer, bpcer, (apcer + bpcer) / 2


def rates_at_threshold(scored: ScoredSet, thr: float):
    """(APCER, BPCER, ACER) at one threshold."""
    apcer, bpcer, acer = _rates(scored, [thr])
    return float(apcer[0]), float(bpcer[0]), float(acer[0])


def candidate_thresholds(scores) -> np.ndarray:
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2
    return np.unique(np.concatenate([[0.0, 1.0], mids]))


def select_threshold(dev: ScoredSet) -> float:
    """Threshold minimizing development ACER; ties resolve to the lowest value."""
    cands = candidate_thresholds(dev.scores)
    _, _, acer = _rates(dev, cands)
    return float(cands[int(np.argmin(acer))])


def hter(test: ScoredSet, thr_from_dev: float) -> float:
    """Half total error rate at a threshold fixed beforehand on other data."""
    far, frr, _ = rates_at_threshold(test, thr_from_dev)
    return (far + frr) / 2


def tpr_at_fpr(scored: ScoredSet, fpr_target: float) -> float:
    """Best spoof detection rate with live false-alarm rate at most ``fpr_target``.

    Operating points are the step ROC at every distinct score (plus the
    reject-nothing point); there is no interpolation.
    """
    if not 0 < fpr_target < 1:
        raise ContractViolation("fpr_target must lie in (0, 1)")
    scored.require_both_classes()
    live, spoof = scored.live, scored.spoof
    thr = np.concatenate([np.unique(scored.scores), [np.inf]])
    live_rejected, spoof_accepted = _kernels.error_counts(live, spoof, np.ascontiguousarray(thr))
    fpr = live_rejected / live.size
    tpr = (spoof.size - spoof_accepted) / spoof.size
    return float(tpr[fpr <= fpr_target].max())
