"""Few-shot domain adaptation by appending class-mean prototypes."""

import numpy as np

from .errors import ConfigurationError, ContractViolation, DegenerateInputError
from .lda_head import LIVE, SPOOF, PrototypeBank
from .model import NORM_EPS, MlpParams, forward


def class_mean_prototype(embeddings) -> np.ndarray:
    f = np.asarray(embeddings, dtype=np.float64)
    if f.size == 0:
        raise ContractViolation("class_mean_prototype needs at least one embedding")
    mean = np.atleast_2d(f).mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < NORM_EPS:
        raise DegenerateInputError(f"class mean has norm {norm:.3g}; embeddings cancel out")
    return mean / norm


def adapt(bank: PrototypeBank, model: MlpParams, target_x, target_y) -> PrototypeBank:
    """Return a new bank with one target-domain prototype appended per class.

    The existing prototypes are copied bit-for-bit; nothing is retrained.
    """
    y = np.asarray(target_y).astype(np.int64)
    missing = [name for j, name in ((LIVE, "live"), (SPOOF, "spoof")) if not np.any(y == j)]
    if missing:
        raise ConfigurationError(f"target samples lack class(es): {', '.join(missing)}")
    emb, _ = forward(model, target_x)
    new_live = class_mean_prototype(emb[y == LIVE])
    new_spoof = class_mean_prototype(emb[y == SPOOF])
    return PrototypeBank(np.vstack([bank.live, new_live]), np.vstack([bank.spoof, new_spoof]))
