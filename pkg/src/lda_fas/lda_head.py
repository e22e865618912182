"""Multi-prototype classification head with analytic gradients.

Class 0 is Live, class 1 is Spoof.  Every embedding and prototype is a unit
vector; a sample's similarity to a class is the softmax-weighted average of
its cosines to that class's prototypes, and the training objective is an
additive-angular-margin cross entropy over the two class cosines plus two
hinge regularizers on prototype-pair similarities.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ContractViolation
from .model import l2_normalize

LIVE, SPOOF = 0, 1
COS_CLAMP = 1e-7


@dataclass
class PrototypeBank:
    live: np.ndarray  # (K_L, N)
    spoof: np.ndarray  # (K_S, N)

    def __post_init__(self):
        self.live = np.ascontiguousarray(np.atleast_2d(np.asarray(self.live, dtype=np.float64)))
        self.spoof = np.ascontiguousarray(np.atleast_2d(np.asarray(self.spoof, dtype=np.float64)))

    def __getitem__(self, j: int) -> np.ndarray:
        return (self.live, self.spoof)[j]

    @property
    def counts(self) -> tuple:
        return self.live.shape[0], self.spoof.shape[0]

    @property
    def dim(self) -> int:
        return self.live.shape[1]

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(self.live.copy(), self.spoof.copy())

    def validate(self, atol: float = 1e-9) -> None:
        if self.live.shape[0] < 1 or self.spoof.shape[0] < 1:
            raise ContractViolation("each class needs at least one prototype")
        if self.live.shape[1] != self.spoof.shape[1]:
            raise ContractViolation("live and spoof prototypes differ in dimension")
        for name, p in (("live", self.live), ("spoof", self.spoof)):
            if not np.all(np.isfinite(p)):
                raise ContractViolation(f"non-finite {name} prototype")
            norms = np.linalg.norm(p, axis=1)
            if np.any(np.abs(norms - 1.0) > atol):
                raise ContractViolation(f"{name} prototypes are not unit-norm (max dev {np.max(np.abs(norms - 1)):.3g})")

    def renormalize(self) -> None:
        self.live = l2_normalize(self.live)[0]
        self.spoof = l2_normalize(self.spoof)[0]


@dataclass
class LdaConfig:
    s: float = 64.0
    m: float = 0.7
    tau_w: float = 0.1
    delta1: float = 0.5
    delta2: float = 0.0
    lambda1: float = 0.1
    lambda2: float = 0.001
    lambda_s: float = 0.1
    lambda_i: float = 0.001
    lambda_aux: float = 1.0
    k_init: int = 4

    def validate(self) -> None:
        problems = []
        if not self.s > 0:
            problems.append("s must be > 0")
        if not self.tau_w > 0:
            problems.append("tau_w must be > 0")
        if not 0 <= self.m < np.pi / 2:
            problems.append("m must lie in [0, pi/2)")
        if not 0 <= self.delta1 <= 2:
            problems.append("delta1 must lie in [0, 2]")
        if not -1 <= self.delta2 <= 1:
            problems.append("delta2 must lie in [-1, 1]")
        for name in ("lambda1", "lambda2", "lambda_s", "lambda_i", "lambda_aux"):
            if not getattr(self, name) >= 0:
                problems.append(f"{name} must be >= 0")
        if int(self.k_init) != self.k_init or self.k_init < 1:
            problems.append("k_init must be an integer >= 1")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @classmethod
    def from_dict(cls, d: dict) -> "LdaConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown lda config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class ClassPrediction:
    cos: np.ndarray  # (B, 2) aggregated class cosines
    sims: list  # per class (B, K_j) cosines to each prototype
    weights: list  # per class (B, K_j) aggregation weights
    tau_w: float = 0.1


@dataclass
class AuxHeads:
    w_spoof_type: np.ndarray  # (n_s, N)
    b_spoof_type: np.ndarray
    w_illum: np.ndarray  # (n_i, N)
    b_illum: np.ndarray

    def copy(self) -> "AuxHeads":
        return AuxHeads(*(a.copy() for a in self.arrays()))

    def arrays(self) -> tuple:
        return self.w_spoof_type, self.b_spoof_type, self.w_illum, self.b_illum


@dataclass
class LossTerms:
    """Scalar loss components and gradients for one batch."""

    total: float
    pd: float
    inter: float = 0.0
    intra: float = 0.0
    aux: float = 0.0
    grad_embeddings: np.ndarray = None
    grad_live: np.ndarray = None
    grad_spoof: np.ndarray = None
    grad_heads: tuple = None
    prediction: ClassPrediction = field(default=None, repr=False)


def init_bank(k_init: int, dim: int, seed: int) -> PrototypeBank:
    if k_init < 1 or dim < 1:
        raise ConfigurationError("k_init and dim must be >= 1")
    rng = np.random.default_rng(seed)
    raw = rng.uniform(-1.0, 1.0, size=(2, int(k_init), int(dim)))
    return PrototypeBank(l2_normalize(raw[0])[0], l2_normalize(raw[1])[0])


def init_aux_heads(dim: int, n_spoof_types: int, n_illum: int, seed: int, scale: float = 0.1) -> AuxHeads:
    rng = np.random.default_rng(seed)
    return AuxHeads(
        rng.uniform(-scale, scale, size=(n_spoof_types, dim)),
        np.zeros(n_spoof_types),
        rng.uniform(-scale, scale, size=(n_illum, dim)),
        np.zeros(n_illum),
    )


# ---------------------------------------------------------------------------
# class similarity and its backward pass
# ---------------------------------------------------------------------------


def class_similarity(embeddings, bank: PrototypeBank, tau_w: float) -> ClassPrediction:
    f = np.ascontiguousarray(np.atleast_2d(np.asarray(embeddings, dtype=np.float64)))
    inv_tau = 1.0 / tau_w
    sims, weights, cos = [], [], np.empty((f.shape[0], 2))
    for j in (LIVE, SPOOF):
        s_j = np.ascontiguousarray(f @ bank[j].T)
        w_j, cos[:, j] = _kernels.softmax_aggregate(s_j, inv_tau)
        sims.append(s_j)
        weights.append(w_j)
    return ClassPrediction(cos, sims, weights, tau_w)


def class_similarity_backward(pred: ClassPrediction, grad_cos, embeddings, bank: PrototypeBank):
    """Chain d(loss)/d(cos) through the aggregation to embeddings and prototypes."""
    f = np.atleast_2d(embeddings)
    inv_tau = 1.0 / pred.tau_w
    grad_f = np.zeros_like(f)
    grad_p = []
    for j in (LIVE, SPOOF):
        w, s_j = pred.weights[j], pred.sims[j]
        # d cos / d sim_r = w_r * (1 + (sim_r - cos) / tau)
        dsim = grad_cos[:, j:j + 1] * w * (1.0 + (s_j - pred.cos[:, j:j + 1]) * inv_tau)
        grad_f += dsim @ bank[j]
        grad_p.append(dsim.T @ f)
    return grad_f, grad_p[0], grad_p[1]


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------


def prototype_data_loss(cos, labels, s: float, m: float):
    """Per-sample margin cross entropy and its gradient w.r.t. the class cosines."""
    cos = np.atleast_2d(cos)
    y = np.atleast_1d(np.asarray(labels)).astype(np.int64)
    if np.any((y != 0) & (y != 1)):
        raise ContractViolation("labels must be 0 (live) or 1 (spoof)")
    idx = np.arange(cos.shape[0])
    c_y = cos[idx, y]
    c_o = cos[idx, 1 - y]
    cc = np.clip(c_y, -1.0 + COS_CLAMP, 1.0 - COS_CLAMP)
    sin_t = np.sqrt(1.0 - cc * cc)
    cos_m, sin_m = np.cos(m), np.sin(m)
    # past theta_y = pi - m, cos(theta_y + m) would rise again and reward
    # pushing the sample away from its own class; continue linearly instead
    wrapped = c_y < -cos_m
    target = np.where(wrapped, c_y + cos_m - 1.0, c_y * cos_m - sin_t * sin_m)
    z = s * (c_o - target)
    loss = np.logaddexp(0.0, z)
    sig = np.exp(-np.logaddexp(0.0, -z))
    inside = (c_y > -1.0 + COS_CLAMP) & (c_y < 1.0 - COS_CLAMP)
    dtarget = np.where(wrapped, 1.0, cos_m + np.where(inside, cc * sin_m / sin_t, 0.0))
    grad = np.zeros_like(cos)
    grad[idx, y] = -s * sig * dtarget
    grad[idx, 1 - y] = s * sig
    return loss, grad


def _intra_pairs(p: np.ndarray):
    r, t = np.triu_indices(p.shape[0], k=1)
    return r, t, np.einsum("ij,ij->i", p[r], p[t])


def inter_center_loss(bank: PrototypeBank, delta1: float):
    """Hinge between the largest cross-class and smallest same-class similarity."""
    g_live = np.zeros_like(bank.live)
    g_spoof = np.zeros_like(bank.spoof)
    pair_lists = [(j,) + _intra_pairs(bank[j]) for j in (LIVE, SPOOF) if bank[j].shape[0] >= 2]
    if not pair_lists:
        return 0.0, g_live, g_spoof
    cross = bank.live @ bank.spoof.T
    a, b = np.unravel_index(int(np.argmax(cross)), cross.shape)
    best = None
    for j, r, t, sim in pair_lists:
        q = int(np.argmin(sim))
        if best is None or sim[q] < best[0]:
            best = (sim[q], j, r[q], t[q])
    min_intra, j, r, t = best
    value = cross[a, b] - min_intra + delta1
    if value <= 0.0:
        return 0.0, g_live, g_spoof
    g_live[a] += bank.spoof[b]
    g_spoof[b] += bank.live[a]
    g = (g_live, g_spoof)[j]
    g[r] -= bank[j][t]
    g[t] -= bank[j][r]
    return float(value), g_live, g_spoof


def intra_center_loss(bank: PrototypeBank, delta2: float):
    loss = 0.0
    grads = [np.zeros_like(bank.live), np.zeros_like(bank.spoof)]
    for j in (LIVE, SPOOF):
        p = bank[j]
        if p.shape[0] < 2:
            continue
        r, t, sim = _intra_pairs(p)
        active = sim - delta2 > 0.0
        loss += float(np.sum(sim[active] - delta2))
        np.add.at(grads[j], r[active], p[t[active]])
        np.add.at(grads[j], t[active], p[r[active]])
    return loss, grads[0], grads[1]


def lda_loss(embeddings, labels, bank: PrototypeBank, cfg: LdaConfig, use_inter: bool = True,
             use_intra: bool = True) -> LossTerms:
    """Batch-mean margin loss plus once-per-batch prototype center terms."""
    f = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if f.shape[0] == 0:
        raise ContractViolation("empty batch")
    n = f.shape[0]
    pred = class_similarity(f, bank, cfg.tau_w)
    per_sample, grad_cos = prototype_data_loss(pred.cos, labels, cfg.s, cfg.m)
    pd = float(per_sample.mean())
    grad_f, g_live, g_spoof = class_similarity_backward(pred, grad_cos / n, f, bank)

    inter = intra = 0.0
    if use_inter and cfg.lambda1 > 0:
        inter, gl, gs = inter_center_loss(bank, cfg.delta1)
        g_live += cfg.lambda1 * gl
        g_spoof += cfg.lambda1 * gs
    if use_intra and cfg.lambda2 > 0:
        intra, gl, gs = intra_center_loss(bank, cfg.delta2)
        g_live += cfg.lambda2 * gl
        g_spoof += cfg.lambda2 * gs
    total = pd + cfg.lambda1 * inter * use_inter + cfg.lambda2 * intra * use_intra
    return LossTerms(total, pd, inter, intra, 0.0, grad_f, g_live, g_spoof, None, pred)


def _softmax_ce(logits, labels):
    logz = np.logaddexp.reduce(logits, axis=1, keepdims=True)
    logp = logits - logz
    idx = np.arange(logits.shape[0])
    loss = -logp[idx, labels]
    grad = np.exp(logp)
    grad[idx, labels] -= 1.0
    return loss, grad


def aux_loss(embeddings, heads: AuxHeads, spoof_type_labels, illum_labels, lambda_s: float, lambda_i: float):
    """Weighted softmax cross entropy of the spoof-type and illumination heads.

    Returns (loss, grad_embeddings, head_grads) with batch-mean reduction.
    """
    f = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = f.shape[0]
    st = np.atleast_1d(np.asarray(spoof_type_labels)).astype(np.int64)
    il = np.atleast_1d(np.asarray(illum_labels)).astype(np.int64)
    n_s, n_i = heads.w_spoof_type.shape[0], heads.w_illum.shape[0]
    if st.shape != (n,) or il.shape != (n,):
        raise ContractViolation("auxiliary labels must have one entry per sample")
    if np.any((st < 0) | (st >= n_s)):
        raise ContractViolation(f"spoof-type label outside [0, {n_s})")
    if np.any((il < 0) | (il >= n_i)):
        raise ContractViolation(f"illumination label outside [0, {n_i})")

    grad_f = np.zeros_like(f)
    total = 0.0
    head_grads = []
    for lam, w, b, y in ((lambda_s, heads.w_spoof_type, heads.b_spoof_type, st),
                         (lambda_i, heads.w_illum, heads.b_illum, il)):
        if lam == 0:
            head_grads += [np.zeros_like(w), np.zeros_like(b)]
            continue
        ce, dlogits = _softmax_ce(f @ w.T + b, y)
        total += lam * float(ce.mean())
        dlogits *= lam / n
        grad_f += dlogits @ w
        head_grads += [dlogits.T @ f, dlogits.sum(axis=0)]
    return total, grad_f, tuple(head_grads)


def lda_s_loss(embeddings, labels, bank: PrototypeBank, cfg: LdaConfig, heads: AuxHeads, spoof_type_labels,
               illum_labels, use_inter: bool = True, use_intra: bool = True) -> LossTerms:
    terms = lda_loss(embeddings, labels, bank, cfg, use_inter, use_intra)
    if heads is None or cfg.lambda_aux == 0:
        terms.grad_heads = None if heads is None else tuple(np.zeros_like(a) for a in heads.arrays())
        return terms
    aux, gf, gh = aux_loss(embeddings, heads, spoof_type_labels, illum_labels, cfg.lambda_s, cfg.lambda_i)
    terms.aux = aux
    terms.total += cfg.lambda_aux * aux
    terms.grad_embeddings = terms.grad_embeddings + cfg.lambda_aux * gf
    terms.grad_heads = tuple(cfg.lambda_aux * g for g in gh)
    return terms


def spoof_score(pred: ClassPrediction, s: float) -> np.ndarray:
    """Probability of Spoof from the two class cosines, no margin."""
    z = s * (pred.cos[:, SPOOF] - pred.cos[:, LIVE])
    return np.exp(-np.logaddexp(0.0, -z))
