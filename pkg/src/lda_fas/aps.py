"""Adaptive prototype selection: greedy max-density pruning with sample popping."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lda_head import LIVE, SPOOF, PrototypeBank

CLASS_NAMES = ("live", "spoof")


@dataclass
class DensityReport:
    density: np.ndarray  # (K,) number of covered samples per prototype
    covered: list  # covered[k] = sorted sample indices with <p_k, f> > t
    threshold: float


@dataclass
class SelectionStep:
    klass: int
    step: int
    prototype: int
    density: int
    popped: int

    def to_dict(self) -> dict:
        return {"class": CLASS_NAMES[self.klass], "step": self.step, "prototype": self.prototype,
                "density": self.density, "popped": self.popped}


@dataclass
class SelectionResult:
    selected: tuple  # (live indices, spoof indices) in selection order
    bank: PrototypeBank
    thresholds: tuple
    log: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "thresholds": {"live": self.thresholds[0], "spoof": self.thresholds[1]},
            "selected": {"live": [int(i) for i in self.selected[0]], "spoof": [int(i) for i in self.selected[1]]},
            "counts": {"live": len(self.selected[0]), "spoof": len(self.selected[1])},
            "steps": [s.to_dict() for s in self.log],
        }


def _as_matrix(vectors, dim=None) -> np.ndarray:
    a = np.asarray(vectors, dtype=np.float64)
    if a.size == 0:
        return np.zeros((0, dim if dim is not None else 0))
    return np.ascontiguousarray(np.atleast_2d(a))


def coverage(prototypes, embeddings, t: float) -> np.ndarray:
    p = _as_matrix(prototypes)
    f = _as_matrix(embeddings, p.shape[1])
    if f.shape[0] == 0:
        return np.zeros((p.shape[0], 0), dtype=bool)
    return _kernels.coverage_mask(p, f, float(t))


def density(prototypes, embeddings, t: float) -> DensityReport:
    """Count, for each prototype, the embeddings with cosine strictly above ``t``."""
    mask = coverage(prototypes, embeddings, t)
    return DensityReport(mask.sum(axis=1).astype(np.int64), [np.flatnonzero(row) for row in mask], float(t))


def default_threshold(prototypes, embeddings) -> float:
    """Median over samples of the cosine to their closest prototype."""
    p = _as_matrix(prototypes)
    f = _as_matrix(embeddings, p.shape[1])
    if f.shape[0] == 0:
        return 1.0
    return float(np.median((f @ p.T).max(axis=1)))


def select_class(prototypes, embeddings, t: float):
    """Greedy selection for one class: returns (order, densities, popped)."""
    mask = coverage(prototypes, embeddings, t)
    return _kernels.greedy_cover(np.ascontiguousarray(mask))


def select_prototypes(bank: PrototypeBank, live_embeddings, spoof_embeddings, t_live: float = None,
                      t_spoof: float = None) -> SelectionResult:
    embeddings = (_as_matrix(live_embeddings, bank.dim), _as_matrix(spoof_embeddings, bank.dim))
    thresholds = []
    for j, t in ((LIVE, t_live), (SPOOF, t_spoof)):
        thresholds.append(default_threshold(bank[j], embeddings[j]) if t is None else float(t))

    selected, log = [], []
    for j in (LIVE, SPOOF):
        order, dens, popped = select_class(bank[j], embeddings[j], thresholds[j])
        selected.append(tuple(int(i) for i in order))
        log += [SelectionStep(j, step, int(k), int(d), int(p))
                for step, (k, d, p) in enumerate(zip(order, dens, popped))]
    reduced = PrototypeBank(bank.live[list(selected[0])], bank.spoof[list(selected[1])])
    return SelectionResult(tuple(selected), reduced, tuple(thresholds), log)
