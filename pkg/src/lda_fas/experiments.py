"""End-to-end acceptance experiments.

Each ``criterion_*`` function runs one check and returns a
:class:`CriterionResult`.  ``run_all`` drives them for the ``repro``
subcommand and for ``tests/test_acceptance.py``.

Two embedding backbones are used on the five-cluster ring mixture:

* ``AFFINE`` (2 -> 8, no hidden layer).  A single prototype per class then
  reduces to a linear boundary, so the head itself has to supply the
  non-linearity; the input angle survives into the embedding.
* ``MLP`` (2 -> 32 -> 8, the package default).  Strong enough to fold the
  ring, and free to arrange prototypes so the center-loss hinges can close.
"""

import itertools
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .adaptation import adapt
from .aps import select_prototypes
from .lda_head import (
    AuxHeads,
    LdaConfig,
    PrototypeBank,
    class_similarity,
    inter_center_loss,
    intra_center_loss,
    lda_loss,
    lda_s_loss,
    prototype_data_loss,
    spoof_score,
)
from .model import forward
from .synthdata import default_fig1_spec, sample_mixture, shift_domain
from .trainer import TrainConfig, evaluate, grad_check, random_instance, scores_for, train

AFFINE = [2, 8]
MLP = [2, 32, 8]
SEEDS = (0, 1, 2, 3, 4)
N_TRAIN, N_DEV, N_TEST = 2000, 1000, 1000
TARGET_SHIFT = (4.0, 0.0)
TARGET_STD_SCALE = 1.2
N_FEW_SHOT = 30


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    summary: str
    seconds: float = 0.0
    rows: list = field(default_factory=list)  # per-seed / per-instance detail
    columns: tuple = ()

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] C{self.number} {self.name}: {self.summary} ({self.seconds:.1f}s)"


def splits(seed: int, spec=None):
    spec = spec or default_fig1_spec()
    base = 1000 * seed
    return (sample_mixture(spec, N_TRAIN, base + 1), sample_mixture(spec, N_DEV, base + 2),
            sample_mixture(spec, N_TEST, base + 3))


def _config(layers, seed, k_init, **flags) -> TrainConfig:
    return TrainConfig(lda=LdaConfig(k_init=k_init), layer_sizes=list(layers), seed=seed, **flags)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# C1 / C2: gradient and reduction oracles
# ---------------------------------------------------------------------------


@_timed
def criterion_gradients(n_trials: int = 50, tolerance: float = 1e-5, seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    rep = grad_check(LdaConfig(), n_trials, tolerance, seed)
    elapsed = time.perf_counter() - t0
    ok = rep.passed and n_trials >= 50 and elapsed < 30.0
    rows = [[name, err] for name, err in sorted(rep.per_loss.items())]
    return CriterionResult(1, "gradient oracle", ok,
                           f"max rel err {rep.max_rel_error:.2e} over {rep.n_trials} instances "
                           f"(tol {tolerance:g}, resampled {rep.resampled}, {elapsed:.1f}s < 30s)",
                           rows=rows, columns=("loss", "max_rel_error"))


def plain_softmax_ce(f, p_live, p_spoof, y, s):
    logits = s * np.array([f @ p_live, f @ p_spoof])
    return float(np.logaddexp(logits[0], logits[1]) - logits[y])


@_timed
def criterion_reduction(n: int = 1000, seed: int = 1, tol: float = 1e-12) -> CriterionResult:
    rng = np.random.default_rng(seed)
    cfg = LdaConfig(m=0.0, lambda1=0.0, lambda2=0.0, k_init=1)
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(2, 9))
        f, pl, ps = (v / np.linalg.norm(v) for v in rng.standard_normal((3, dim)))
        y = int(rng.integers(0, 2))
        got = lda_loss(f[None], [y], PrototypeBank(pl[None], ps[None]), cfg).total
        worst = max(worst, abs(got - plain_softmax_ce(f, pl, ps, y, cfg.s)))
    return CriterionResult(2, "reduction oracle", worst < tol,
                           f"max |L_LDA - softmax CE| = {worst:.2e} over {n} inputs (tol {tol:g})")


# ---------------------------------------------------------------------------
# C3 / C4: training ablations
# ---------------------------------------------------------------------------


def _test_acer(cfg: TrainConfig, data):
    tr, dv, te = data
    res = train(cfg, tr, dv)
    return evaluate(res.params, res.bank, dv, te, cfg.lda)["acer"], res


@_timed
def criterion_multi_prototype(seeds=SEEDS) -> CriterionResult:
    t0 = time.perf_counter()
    rows = []
    for s in seeds:
        data = splits(s)
        a4, _ = _test_acer(_config(AFFINE, s, 4), data)
        a1, _ = _test_acer(_config(AFFINE, s, 1), data)
        rows.append([s, a1, a4])
    elapsed = time.perf_counter() - t0
    k1 = np.array([r[1] for r in rows])
    k4 = np.array([r[2] for r in rows])
    wins = int(np.sum(k4 < k1))
    ok = k4.mean() < k1.mean() and wins >= 4 and elapsed < 300
    return CriterionResult(3, "multi-prototype benefit", ok,
                           f"mean test ACER K=1 {100 * k1.mean():.2f}% -> K=4 {100 * k4.mean():.2f}%, "
                           f"K=4 lower on {wins}/{len(rows)} seeds",
                           rows=rows, columns=("seed", "acer_k1", "acer_k4"))


@_timed
def criterion_pc_ablation(seeds=SEEDS) -> CriterionResult:
    rows = []
    for s in seeds:
        data = splits(s)
        cfg = _config(MLP, s, 4)
        full, res = _test_acer(cfg, data)
        pd_only, _ = _test_acer(_config(MLP, s, 4, use_pc_inter=False, use_pc_intra=False), data)
        inter = inter_center_loss(res.bank, cfg.lda.delta1)[0]
        rows.append([s, pd_only, full, inter])
    pd_mean = np.mean([r[1] for r in rows])
    full_mean = np.mean([r[2] for r in rows])
    closed = sum(r[3] == 0.0 for r in rows)
    # ACERs are ratios of counts; the slack only absorbs summation rounding of equal means
    ok = full_mean <= pd_mean + 1e-12 and closed >= 4
    return CriterionResult(4, "prototype center loss benefit", ok,
                           f"mean test ACER L_PD only {100 * pd_mean:.2f}% vs full {100 * full_mean:.2f}%, "
                           f"inter hinge closed on {closed}/{len(rows)} seeds",
                           rows=rows, columns=("seed", "acer_pd_only", "acer_full", "pc_inter_final"))


# ---------------------------------------------------------------------------
# C5: adaptive prototype selection
# ---------------------------------------------------------------------------


def greedy_pop_oracle(sims: np.ndarray, t: float) -> list:
    """Independent reference for the greedy pop process.

    Enumerates every ordering of the prototypes and keeps the longest prefix
    consistent with the rules: the first pick has the highest density (ties:
    lowest index); each later pick has the highest positive density over the
    samples not yet popped; the process stops at density zero.  Exactly one
    prefix survives, and it is returned.
    """
    k, m = sims.shape
    covers = [frozenset(i for i in range(m) if sims[a, i] > t) for a in range(k)]
    survivors = []
    for perm in itertools.permutations(range(k)):
        remaining = set(range(m))
        prefix = []
        for pos, a in enumerate(perm):
            dens = {b: len(covers[b] & remaining) for b in range(k) if b not in prefix}
            best = max(dens.values())
            if pos > 0 and best == 0:
                break
            if dens[a] != best or any(b < a and dens[b] == best for b in dens):
                prefix = None
                break
            prefix.append(a)
            remaining -= covers[a]
        if prefix is not None:
            survivors.append(tuple(prefix))
    assert len(set(survivors)) == 1, survivors
    return list(survivors[0])


def random_aps_instance(rng):
    dim = int(rng.integers(2, 6))

    def unit(n):
        v = rng.standard_normal((n, dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    bank = PrototypeBank(unit(int(rng.integers(1, 7))), unit(int(rng.integers(1, 7))))
    live = unit(int(rng.integers(0, 21)))
    spoof = unit(int(rng.integers(0, 21)))
    t = float(rng.uniform(-0.3, 0.9))
    return bank, live, spoof, t


@_timed
def criterion_aps(seeds=SEEDS, n_oracle: int = 100, oracle_seed: int = 5) -> CriterionResult:
    rng = np.random.default_rng(oracle_seed)
    mismatches = 0
    for _ in range(n_oracle):
        bank, live, spoof, t = random_aps_instance(rng)
        sel = select_prototypes(bank, live, spoof, t, t)
        for j, emb in ((0, live), (1, spoof)):
            sims = bank[j] @ emb.T if len(emb) else np.zeros((bank[j].shape[0], 0))
            if list(sel.selected[j]) != greedy_pop_oracle(sims, t):
                mismatches += 1

    rows = []
    for s in seeds:
        tr, dv, te = splits(s)
        cfg = _config(MLP, s, 16)
        res = train(cfg, tr, dv)
        before = evaluate(res.params, res.bank, dv, te, cfg.lda)["acer"]
        emb, _ = forward(res.params, tr.x)
        sel = select_prototypes(res.bank, emb[tr.y == 0], emb[tr.y == 1])
        after = evaluate(res.params, sel.bank, dv, te, cfg.lda)["acer"]
        rows.append([s, sum(sel.bank.counts), sel.bank.counts[0], sel.bank.counts[1], before, after])
    stable = sum(2 <= r[1] <= 10 and abs(r[5] - r[4]) <= 0.01 for r in rows)
    ok = mismatches == 0 and stable >= 4
    return CriterionResult(5, "APS oracle and stability", ok,
                           f"oracle mismatches {mismatches}/{2 * n_oracle} class runs; "
                           f"K=16 -> {[r[1] for r in rows]} prototypes, "
                           f"|dACER| <= 1pp with 2..10 kept on {stable}/{len(rows)} seeds",
                           rows=rows, columns=("seed", "kept", "kept_live", "kept_spoof", "acer_before", "acer_after"))


# ---------------------------------------------------------------------------
# C6: few-shot adaptation
# ---------------------------------------------------------------------------


@_timed
def criterion_adaptation(seeds=SEEDS) -> CriterionResult:
    spec = default_fig1_spec()
    target = shift_domain(spec, TARGET_SHIFT, TARGET_STD_SCALE)
    rows = []
    for s in seeds:
        tr, dv, te = splits(s, spec)
        cfg = _config(AFFINE, s, 4)
        res = train(cfg, tr, dv)
        few = sample_mixture(target, N_FEW_SHOT, 1000 * s + 4)
        target_test = sample_mixture(target, N_TEST, 1000 * s + 5)
        adapted = adapt(res.bank, res.params, few.x, few.y)
        row = [s]
        for bank in (res.bank, adapted):
            thr = metrics.select_threshold(metrics.ScoredSet(scores_for(res.params, bank, dv.x, cfg.lda), dv.y))
            scored = metrics.ScoredSet(scores_for(res.params, bank, target_test.x, cfg.lda), target_test.y)
            row.append(metrics.hter(scored, thr))
        source_hter = metrics.hter(metrics.ScoredSet(scores_for(res.params, res.bank, te.x, cfg.lda), te.y),
                                   metrics.select_threshold(metrics.ScoredSet(
                                       scores_for(res.params, res.bank, dv.x, cfg.lda), dv.y)))
        rows.append(row + [source_hter])
    wins = sum(r[2] < r[1] for r in rows)
    return CriterionResult(6, "few-shot adaptation", wins >= 4,
                           f"target HTER {np.mean([r[1] for r in rows]) * 100:.1f}% -> "
                           f"{np.mean([r[2] for r in rows]) * 100:.1f}% with {N_FEW_SHOT} samples, "
                           f"lower on {wins}/{len(rows)} seeds",
                           rows=rows, columns=("seed", "hter_unadapted", "hter_adapted", "hter_source_test"))


# ---------------------------------------------------------------------------
# C7: metrics vs brute force
# ---------------------------------------------------------------------------


def brute_rates(scores, labels, thr):
    live_total = spoof_total = live_rej = spoof_acc = 0
    for sc, y in zip(scores, labels):
        if y == 0:
            live_total += 1
            live_rej += sc >= thr
        else:
            spoof_total += 1
            spoof_acc += sc < thr
    apcer = spoof_acc / spoof_total
    bpcer = live_rej / live_total
    return apcer, bpcer, (apcer + bpcer) / 2


def brute_threshold(scores, labels):
    uniq = sorted(set(float(v) for v in scores))
    cands = sorted(set([0.0, 1.0] + [(a + b) / 2 for a, b in zip(uniq[:-1], uniq[1:])]))
    best = None
    for thr in cands:
        acer = brute_rates(scores, labels, thr)[2]
        if best is None or acer < best[1]:
            best = (thr, acer)
    return best[0]


def brute_tpr(scores, labels, target):
    n_live = sum(1 for y in labels if y == 0)
    n_spoof = len(labels) - n_live
    best = 0.0
    for thr in sorted(set(float(v) for v in scores)) + [float("inf")]:
        fp = sum(1 for sc, y in zip(scores, labels) if y == 0 and sc >= thr)
        tp = sum(1 for sc, y in zip(scores, labels) if y == 1 and sc >= thr)
        if fp / n_live <= target:
            best = max(best, tp / n_spoof)
    return best


def random_scored_set(rng):
    n = int(rng.integers(2, 201))
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    scores = rng.random(n)
    if rng.random() < 0.5:  # force ties
        scores = np.round(scores, int(rng.integers(1, 3)))
    return metrics.ScoredSet(scores, labels)


@_timed
def criterion_metrics(n_sets: int = 100, seed: int = 7) -> CriterionResult:
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_sets):
        ss = random_scored_set(rng)
        sc, lab = ss.scores.tolist(), ss.labels.tolist()
        thrs = [0.0, 1.0, float(rng.random())] + [float(v) for v in rng.choice(ss.scores, 3)]
        for thr in thrs:
            got = metrics.rates_at_threshold(ss, thr)
            if got != brute_rates(sc, lab, thr) or got[2] != (got[0] + got[1]) / 2:
                failures.append((i, "rates", thr))
            if metrics.hter(ss, thr) != (got[0] + got[1]) / 2:
                failures.append((i, "hter", thr))
        if metrics.select_threshold(ss) != brute_threshold(sc, lab):
            failures.append((i, "threshold", None))
        for target in (0.01, 0.005, 0.001, 0.1, 0.3):
            if metrics.tpr_at_fpr(ss, target) != brute_tpr(sc, lab, target):
                failures.append((i, "tpr", target))
    return CriterionResult(7, "metrics oracle", not failures,
                           f"{len(failures)} mismatches vs brute-force sweeps over {n_sets} random sets",
                           rows=[list(f) for f in failures], columns=("set", "check", "param"))


# ---------------------------------------------------------------------------
# C8: invariances
# ---------------------------------------------------------------------------


def all_losses(emb, labels, bank, heads, st, il, cfg: LdaConfig) -> np.ndarray:
    pred = class_similarity(emb, bank, cfg.tau_w)
    return np.array([
        float(prototype_data_loss(pred.cos, labels, cfg.s, cfg.m)[0].mean()),
        inter_center_loss(bank, cfg.delta1)[0],
        intra_center_loss(bank, cfg.delta2)[0],
        lda_loss(emb, labels, bank, cfg).total,
        lda_s_loss(emb, labels, bank, cfg, heads, st, il).total,
        *spoof_score(pred, cfg.s),
    ])


def random_orthogonal(rng, dim):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


@_timed
def criterion_invariance(n: int = 50, seed: int = 11, tol: float = 1e-10) -> CriterionResult:
    rng = np.random.default_rng(seed)
    cfg = LdaConfig()
    worst_perm = worst_orth = 0.0
    for _ in range(n):
        emb, labels, bank, heads, st, il = random_instance(rng, cfg)
        base = all_losses(emb, labels, bank, heads, st, il, cfg)
        permuted = PrototypeBank(bank.live[rng.permutation(bank.counts[0])],
                                 bank.spoof[rng.permutation(bank.counts[1])])
        worst_perm = max(worst_perm, np.max(np.abs(all_losses(emb, labels, permuted, heads, st, il, cfg) - base)))
        q = random_orthogonal(rng, emb.shape[1])
        rot_heads = AuxHeads(heads.w_spoof_type @ q.T, heads.b_spoof_type, heads.w_illum @ q.T, heads.b_illum)
        rotated = all_losses(emb @ q.T, labels, PrototypeBank(bank.live @ q.T, bank.spoof @ q.T), rot_heads, st, il,
                             cfg)
        worst_orth = max(worst_orth, np.max(np.abs(rotated - base)))

    # unit norms across a full training run, then after adaptation
    tr, dv, _ = splits(0)
    worst_norm = [0.0]

    def check(epoch, step, params, bank):
        dev = max(np.max(np.abs(np.linalg.norm(bank[j], axis=1) - 1)) for j in (0, 1))
        worst_norm[0] = max(worst_norm[0], dev)

    cfg_train = _config(MLP, 0, 4, use_aux=True)
    res = train(cfg_train, tr, dv, on_step=check)
    emb, _ = forward(res.params, tr.x)
    emb_dev = float(np.max(np.abs(np.linalg.norm(emb, axis=1) - 1)))
    adapted = adapt(res.bank, res.params, dv.x[:30], dv.y[:30])
    new_dev = max(abs(np.linalg.norm(adapted[j][-1]) - 1) for j in (0, 1))
    ok = worst_perm < tol and worst_orth < tol and max(worst_norm[0], emb_dev, new_dev) <= 1e-9
    return CriterionResult(8, "invariance suite", ok,
                           f"perm {worst_perm:.1e}, orth {worst_orth:.1e} (tol {tol:g}); unit-norm dev: "
                           f"prototypes {worst_norm[0]:.1e}, embeddings {emb_dev:.1e}, adapted {new_dev:.1e}")


# ---------------------------------------------------------------------------
# C9: determinism
# ---------------------------------------------------------------------------


def deterministic_pipeline(out: Path) -> None:
    """gen-data -> train -> eval -> aps -> adapt, all under ``out``."""
    from . import pipeline

    cfg = TrainConfig(lda=LdaConfig(k_init=4), epochs=5, seed=3)
    pipeline.gen_data(out, "fig1", 600, seed=3)
    pipeline.gen_data(out, "fig1", 30, seed=4, n_dev=0, n_test=0, shift=TARGET_SHIFT,
                      std_scale=TARGET_STD_SCALE, prefix="target_")
    pipeline.train_run(out, cfg, out / "train.csv", out / "dev.csv")
    pipeline.eval_run(out, out / "dev.csv", out / "test.csv", run=out)
    pipeline.aps_run(out, out / "train.csv", run=out)
    pipeline.adapt_run(out, out / "target_train.csv", run=out)
    # re-run training from the manifest alone
    pipeline.train_run(out / "rerun", pipeline.load_config(out / "manifest.json"), out / "train.csv",
                       out / "dev.csv")


def csv_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


@_timed
def criterion_determinism() -> CriterionResult:
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        deterministic_pipeline(Path(a))
        deterministic_pipeline(Path(b))
        da, db = csv_digest(Path(a)), csv_digest(Path(b))
        rerun_same = all((Path(a) / name).read_bytes() == (Path(a) / "rerun" / name).read_bytes()
                         for name in ("bank.csv", "history.csv"))
    same = da == db and len(da) > 0
    return CriterionResult(9, "determinism", same and rerun_same,
                           f"{len(da)} CSV artifacts bitwise {'identical' if same else 'DIFFERENT'} across runs; "
                           f"manifest re-run {'identical' if rerun_same else 'DIFFERENT'}")


CRITERIA = {
    1: criterion_gradients,
    2: criterion_reduction,
    3: criterion_multi_prototype,
    4: criterion_pc_ablation,
    5: criterion_aps,
    6: criterion_adaptation,
    7: criterion_metrics,
    8: criterion_invariance,
    9: criterion_determinism,
}


def run_all(only=None, echo=print) -> list:
    results = []
    for number, fn in CRITERIA.items():
        if only and number not in only:
            continue
        res = fn()
        if echo:
            echo(res.line())
        results.append(res)
    return results
