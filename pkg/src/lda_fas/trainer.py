"""Mini-batch SGD training, evaluation and gradient verification."""

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import metrics
from .errors import ConfigurationError, TrainingDivergedError
from .lda_head import (
    AuxHeads,
    LdaConfig,
    LossTerms,
    PrototypeBank,
    class_similarity,
    init_aux_heads,
    init_bank,
    inter_center_loss,
    intra_center_loss,
    lda_loss,
    lda_s_loss,
    prototype_data_loss,
    class_similarity_backward,
    spoof_score,
)
from .model import MlpParams, backward, forward, init_params, l2_normalize
from .synthdata import SampleSet

DEFAULT_FPR_TARGETS = (0.01, 0.005, 0.001)


@dataclass
class TrainConfig:
    lda: LdaConfig = field(default_factory=LdaConfig)
    layer_sizes: list = field(default_factory=lambda: [2, 32, 8])
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    use_pc_inter: bool = True
    use_pc_intra: bool = True
    use_aux: bool = False
    t_live: float = None
    t_spoof: float = None
    fpr_targets: list = field(default_factory=lambda: list(DEFAULT_FPR_TARGETS))

    def validate(self) -> None:
        self.lda.validate()
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigurationError("epochs must be an integer >= 1")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigurationError("batch_size must be an integer >= 1")
        if not self.lr >= 0:
            raise ConfigurationError("lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if len(self.layer_sizes) < 2 or any(int(n) != n or n < 1 for n in self.layer_sizes):
            raise ConfigurationError("layer_sizes must list >= 2 positive integers")
        if any(not 0 < f < 1 for f in self.fpr_targets):
            raise ConfigurationError("fpr_targets must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        d["fpr_targets"] = list(self.fpr_targets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        lda = LdaConfig.from_dict(d.pop("lda", {}) or {})
        try:
            cfg = cls(lda=lda, **d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
        cfg.validate()
        return cfg


@dataclass
class EpochRecord:
    epoch: int
    total: float
    pd: float
    pc_inter: float
    pc_intra: float
    aux: float
    train_acer: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    COLUMNS = ("epoch", "total", "pd", "pc_inter", "pc_intra", "aux", "train_acer")

    def rows(self) -> list:
        return [[getattr(r, c) for c in self.COLUMNS] for r in self.epochs]


@dataclass
class TrainResult:
    params: MlpParams
    bank: PrototypeBank
    history: TrainHistory
    heads: AuxHeads = None


@dataclass
class BatchGradients:
    terms: LossTerms
    model: object  # MlpGrads


def batch_gradients(params: MlpParams, bank: PrototypeBank, heads, x, y, spoof_type, illum,
                    cfg: TrainConfig) -> BatchGradients:
    emb, tape = forward(params, x)
    if cfg.use_aux and heads is not None:
        terms = lda_s_loss(emb, y, bank, cfg.lda, heads, spoof_type, illum, cfg.use_pc_inter, cfg.use_pc_intra)
    else:
        terms = lda_loss(emb, y, bank, cfg.lda, cfg.use_pc_inter, cfg.use_pc_intra)
    return BatchGradients(terms, backward(params, tape, terms.grad_embeddings))


def scores_for(params: MlpParams, bank: PrototypeBank, x, lda: LdaConfig) -> np.ndarray:
    emb, _ = forward(params, x)
    return spoof_score(class_similarity(emb, bank, lda.tau_w), lda.s)


def train(cfg: TrainConfig, train_set: SampleSet, dev_set: SampleSet = None, on_step=None) -> TrainResult:
    """Run SGD; ``on_step(epoch, step, params, bank)`` is called after every update."""
    cfg.validate()
    for name, data in (("train", train_set), ("dev", dev_set)):
        if data is not None and (len(data) == 0 or np.unique(data.y).size < 2):
            raise ConfigurationError(f"{name} set must be non-empty with both classes present")
    if train_set.x.shape[1] != cfg.layer_sizes[0]:
        raise ConfigurationError(f"data has {train_set.x.shape[1]} features, layer_sizes[0] = {cfg.layer_sizes[0]}")

    ss_model, ss_bank, ss_heads, ss_shuffle = np.random.SeedSequence(cfg.seed).spawn(4)
    params = init_params(cfg.layer_sizes, ss_model)
    bank = init_bank(cfg.lda.k_init, cfg.layer_sizes[-1], ss_bank)
    heads = None
    if cfg.use_aux:
        heads = init_aux_heads(cfg.layer_sizes[-1], int(train_set.spoof_type.max()) + 1,
                               int(train_set.illum.max()) + 1, ss_heads)
    shuffle_rng = np.random.default_rng(ss_shuffle)

    tensors = lambda: params.weights + params.biases + [bank.live, bank.spoof] + (  # noqa: E731
        list(heads.arrays()) if heads is not None else [])
    velocity = [np.zeros_like(a) for a in tensors()]

    history = TrainHistory()
    n = len(train_set)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        sums = np.zeros(5)
        n_steps = 0
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            g = batch_gradients(params, bank, heads, train_set.x[idx], train_set.y[idx],
                                train_set.spoof_type[idx], train_set.illum[idx], cfg)
            t = g.terms
            if not np.isfinite(t.total):
                raise TrainingDivergedError(epoch, step, t.total)
            sums += (t.total, t.pd, t.inter, t.intra, t.aux)
            n_steps += 1

            grads = g.model.weights + g.model.biases + [t.grad_live, t.grad_spoof]
            if heads is not None:
                grads += list(t.grad_heads)
            for p, v, d in zip(tensors(), velocity, grads):
                v *= cfg.momentum
                v += d
                p -= cfg.lr * v
            bank.renormalize()
            if on_step is not None:
                on_step(epoch, step, params, bank)

        means = sums / max(n_steps, 1)
        train_scores = scores_for(params, bank, train_set.x, cfg.lda)
        _, _, train_acer = metrics.rates_at_threshold(metrics.ScoredSet(train_scores, train_set.y), 0.5)
        history.epochs.append(EpochRecord(epoch, *(float(v) for v in means), train_acer))

    if dev_set is not None:
        dev = metrics.ScoredSet(scores_for(params, bank, dev_set.x, cfg.lda), dev_set.y)
        thr = metrics.select_threshold(dev)
        apcer, bpcer, acer = metrics.rates_at_threshold(dev, thr)
        history.final = {"dev_threshold": thr, "dev_apcer": apcer, "dev_bpcer": bpcer, "dev_acer": acer}
    return TrainResult(params, bank, history, heads)


def evaluate(params: MlpParams, bank: PrototypeBank, dev_set: SampleSet, test_set: SampleSet, lda: LdaConfig,
             fpr_targets=DEFAULT_FPR_TARGETS) -> dict:
    """Dev-selected threshold applied to the test split."""
    dev = metrics.ScoredSet(scores_for(params, bank, dev_set.x, lda), dev_set.y)
    test = metrics.ScoredSet(scores_for(params, bank, test_set.x, lda), test_set.y)
    thr = metrics.select_threshold(dev)
    apcer, bpcer, acer = metrics.rates_at_threshold(test, thr)
    return {
        "threshold": thr,
        "dev_acer": metrics.rates_at_threshold(dev, thr)[2],
        "apcer": apcer,
        "bpcer": bpcer,
        "acer": acer,
        "hter": metrics.hter(test, thr),
        "tpr_at_fpr": {float(f): metrics.tpr_at_fpr(test, f) for f in fpr_targets},
    }


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

KINK_MARGIN = 1e-3
FD_STEP = 1e-6
GRAD_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    n_trials: int
    tolerance: float
    max_rel_error: float
    per_loss: dict
    resampled: int
    passed: bool
    note: str = ""


def _rel_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), GRAD_FLOOR))


def _random_unit(rng, shape):
    return l2_normalize(rng.standard_normal(shape))[0]


def _near_kink(emb, bank, cfg: LdaConfig) -> bool:
    pred = class_similarity(emb, bank, cfg.tau_w)
    if np.any(np.abs(pred.cos) > 1 - KINK_MARGIN):
        return True
    if cfg.m > 0 and np.any(np.abs(pred.cos + np.cos(cfg.m)) < KINK_MARGIN):
        return True
    pairs = []
    for j in (0, 1):
        p = bank[j]
        r, t = np.triu_indices(p.shape[0], k=1)
        sim = np.einsum("ij,ij->i", p[r], p[t])
        if np.any(np.abs(sim - cfg.delta2) < KINK_MARGIN):
            return True
        pairs.append(sim)
    intra = np.concatenate(pairs)
    if intra.size:
        cross = np.sort((bank.live @ bank.spoof.T).ravel())[::-1]
        srt = np.sort(intra)
        if abs(cross[0] - srt[0] + cfg.delta1) < KINK_MARGIN:
            return True
        if cross.size > 1 and cross[0] - cross[1] < KINK_MARGIN:
            return True
        if srt.size > 1 and srt[1] - srt[0] < KINK_MARGIN:
            return True
    return False


def _loss_functions(cfg: LdaConfig, labels, heads_shape, st, il):
    """Scalar loss closures over a flat parameter vector plus their analytic gradients."""

    def split(theta, b, n, kl, ks):
        emb = theta[:b * n].reshape(b, n)
        live = theta[b * n:(b + kl) * n].reshape(kl, n)
        spoof = theta[(b + kl) * n:(b + kl + ks) * n].reshape(ks, n)
        rest = theta[(b + kl + ks) * n:]
        heads = None
        if heads_shape is not None:
            (ns, nn), (ni, _) = heads_shape
            o = 0
            parts = []
            for size, shape in ((ns * nn, (ns, nn)), (ns, (ns,)), (ni * nn, (ni, nn)), (ni, (ni,))):
                parts.append(rest[o:o + size].reshape(shape))
                o += size
            heads = AuxHeads(*parts)
        return emb, PrototypeBank(live, spoof), heads

    def pd(emb, bank, heads):
        pred = class_similarity(emb, bank, cfg.tau_w)
        loss, gcos = prototype_data_loss(pred.cos, labels, cfg.s, cfg.m)
        gf, gl, gs = class_similarity_backward(pred, gcos / emb.shape[0], emb, bank)
        return float(loss.mean()), [gf, gl, gs]

    def inter(emb, bank, heads):
        v, gl, gs = inter_center_loss(bank, cfg.delta1)
        return v, [np.zeros_like(emb), gl, gs]

    def intra(emb, bank, heads):
        v, gl, gs = intra_center_loss(bank, cfg.delta2)
        return v, [np.zeros_like(emb), gl, gs]

    def lda(emb, bank, heads):
        t = lda_loss(emb, labels, bank, cfg)
        return t.total, [t.grad_embeddings, t.grad_live, t.grad_spoof]

    def lda_s(emb, bank, heads):
        t = lda_s_loss(emb, labels, bank, cfg, heads, st, il)
        return t.total, [t.grad_embeddings, t.grad_live, t.grad_spoof, *t.grad_heads]

    return split, {"pd": pd, "inter": inter, "intra": intra, "lda": lda, "lda_s": lda_s}


def check_instance(cfg: LdaConfig, emb, labels, bank, heads, st, il, corrupt: bool = False) -> dict:
    """Relative error of every loss's analytic gradient vs central differences."""
    b, n = emb.shape
    kl, ks = bank.counts
    heads_shape = None if heads is None else (heads.w_spoof_type.shape, heads.w_illum.shape)
    split, losses = _loss_functions(cfg, labels, heads_shape, st, il)
    theta0 = np.concatenate([emb.ravel(), bank.live.ravel(), bank.spoof.ravel()]
                            + ([a.ravel() for a in heads.arrays()] if heads is not None else []))
    out = {}
    for name, fn in losses.items():
        if name == "lda_s" and heads is None:
            continue
        _, grads = fn(*split(theta0, b, n, kl, ks))
        analytic = np.concatenate([g.ravel() for g in grads])
        if corrupt:
            analytic = analytic * 1.01 + 1e-3
        numeric = np.zeros(analytic.size)
        for i in range(analytic.size):
            th = theta0.copy()
            th[i] += FD_STEP
            up = fn(*split(th, b, n, kl, ks))[0]
            th[i] -= 2 * FD_STEP
            down = fn(*split(th, b, n, kl, ks))[0]
            numeric[i] = (up - down) / (2 * FD_STEP)
        out[name] = _rel_error(analytic, numeric)
    return out


def random_instance(rng: np.random.Generator, cfg: LdaConfig, max_dim: int = 8, max_k: int = 4, max_batch: int = 8,
                    n_spoof_types: int = 4, n_illum: int = 3):
    n = int(rng.integers(2, max_dim + 1))
    kl, ks = (int(v) for v in rng.integers(1, max_k + 1, size=2))
    if kl == ks == 1:
        kl = 2
    b = int(rng.integers(1, max_batch + 1))
    emb = _random_unit(rng, (b, n))
    labels = rng.integers(0, 2, size=b)
    bank = PrototypeBank(_random_unit(rng, (kl, n)), _random_unit(rng, (ks, n)))
    heads = AuxHeads(rng.standard_normal((n_spoof_types, n)), rng.standard_normal(n_spoof_types),
                     rng.standard_normal((n_illum, n)), rng.standard_normal(n_illum))
    st = np.where(labels == 0, 0, rng.integers(1, n_spoof_types, size=b))
    il = rng.integers(0, n_illum, size=b)
    return emb, labels, bank, heads, st, il


def grad_check(cfg: LdaConfig = None, n_trials: int = 50, tolerance: float = 1e-5, seed: int = 0,
               corrupt: bool = False, max_resample: int = 1000) -> GradCheckReport:
    """Finite-difference check of every loss over random small instances.

    Instances whose cosines sit within 1e-3 of a hinge kink, an argmax/argmin
    tie or the cosine clamp are redrawn.
    """
    cfg = cfg or LdaConfig()
    if n_trials == 0:
        return GradCheckReport(0, tolerance, 0.0, {}, 0, True, "no trials run; passes vacuously")
    rng = np.random.default_rng(seed)
    per_loss = {}
    resampled = 0
    for _ in range(n_trials):
        for _attempt in range(max_resample):
            inst = random_instance(rng, cfg)
            if not _near_kink(inst[0], inst[2], cfg):
                break
            resampled += 1
        for name, err in check_instance(cfg, *inst, corrupt=corrupt).items():
            per_loss[name] = max(per_loss.get(name, 0.0), err)
    worst = max(per_loss.values())
    return GradCheckReport(n_trials, tolerance, worst, per_loss, resampled, worst < tolerance)
