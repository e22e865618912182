"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``LDA_FAS_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
always importable under explicit names so they can be compared in tests
and in ``benchmarks/bench_kernels.py``.

Results agree between backends up to floating-point summation order; each
backend is bitwise deterministic on its own.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


def _env_disabled() -> bool:
    return os.environ.get("LDA_FAS_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# softmax-weighted aggregation of similarities (one row per sample)
# ---------------------------------------------------------------------------


def softmax_aggregate_numpy(sims, inv_tau):
    z = sims * inv_tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    w = e / e.sum(axis=1, keepdims=True)
    return w, (w * sims).sum(axis=1)


@njit(cache=True)
def softmax_aggregate_numba(sims, inv_tau):
    b, k = sims.shape
    w = np.empty((b, k))
    agg = np.empty(b)
    for i in range(b):
        zmax = sims[i, 0] * inv_tau
        for r in range(1, k):
            z = sims[i, r] * inv_tau
            if z > zmax:
                zmax = z
        total = 0.0
        for r in range(k):
            e = np.exp(sims[i, r] * inv_tau - zmax)
            w[i, r] = e
            total += e
        acc = 0.0
        for r in range(k):
            w[i, r] /= total
            acc += w[i, r] * sims[i, r]
        agg[i] = acc
    return w, agg


# ---------------------------------------------------------------------------
# prototype coverage: mask[k, i] = <p_k, f_i> > t
# ---------------------------------------------------------------------------


def coverage_mask_numpy(prototypes, embeddings, t):
    return (prototypes @ embeddings.T) > t


@njit(cache=True)
def coverage_mask_numba(prototypes, embeddings, t):
    k, n = prototypes.shape
    m = embeddings.shape[0]
    mask = np.zeros((k, m), dtype=np.bool_)
    for a in range(k):
        for i in range(m):
            acc = 0.0
            for d in range(n):
                acc += prototypes[a, d] * embeddings[i, d]
            mask[a, i] = acc > t
    return mask


# ---------------------------------------------------------------------------
# greedy max-density selection with sample popping
# ---------------------------------------------------------------------------


def greedy_cover_numpy(mask):
    """Return (order, densities, popped) for the greedy pop process.

    The first pick is mandatory even at density zero; afterwards the loop
    stops when the best remaining density is zero or no candidate is left.
    Ties go to the lowest index.
    """
    k, m = mask.shape
    remaining = np.ones(m, dtype=bool)
    alive = np.ones(k, dtype=bool)
    order, dens, popped = [], [], []
    while alive.any():
        counts = (mask & remaining).sum(axis=1)
        counts = np.where(alive, counts, -1)
        best = int(np.argmax(counts))
        if order and counts[best] == 0:
            break
        cover = mask[best] & remaining
        order.append(best)
        dens.append(int(counts[best]))
        popped.append(int(cover.sum()))
        remaining &= ~cover
        alive[best] = False
    return (np.asarray(order, dtype=np.int64), np.asarray(dens, dtype=np.int64),
            np.asarray(popped, dtype=np.int64))


@njit(cache=True)
def greedy_cover_numba(mask):
    k, m = mask.shape
    remaining = np.ones(m, dtype=np.bool_)
    alive = np.ones(k, dtype=np.bool_)
    order = np.empty(k, dtype=np.int64)
    dens = np.empty(k, dtype=np.int64)
    popped = np.empty(k, dtype=np.int64)
    n_sel = 0
    for _ in range(k):
        best = -1
        best_count = -1
        for a in range(k):
            if not alive[a]:
                continue
            c = 0
            for i in range(m):
                if mask[a, i] and remaining[i]:
                    c += 1
            if c > best_count:
                best_count = c
                best = a
        if n_sel > 0 and best_count == 0:
            break
        order[n_sel] = best
        dens[n_sel] = best_count
        popped[n_sel] = best_count
        n_sel += 1
        for i in range(m):
            if mask[best, i]:
                remaining[i] = False
        alive[best] = False
    return order[:n_sel].copy(), dens[:n_sel].copy(), popped[:n_sel].copy()


# ---------------------------------------------------------------------------
# threshold sweep error counts
# ---------------------------------------------------------------------------


def error_counts_numpy(live_scores, spoof_scores, thresholds):
    """Counts at each threshold under the rule ``score >= thr -> spoof``.

    Returns (live_rejected, spoof_accepted): live scored >= thr and spoof
    scored < thr.
    """
    live = np.sort(live_scores)
    spoof = np.sort(spoof_scores)
    live_rejected = live.size - np.searchsorted(live, thresholds, side="left")
    spoof_accepted = np.searchsorted(spoof, thresholds, side="left")
    return live_rejected.astype(np.int64), spoof_accepted.astype(np.int64)


@njit(cache=True)
def error_counts_numba(live_scores, spoof_scores, thresholds):
    live = np.sort(live_scores)
    spoof = np.sort(spoof_scores)
    order = np.argsort(thresholds, kind="mergesort")
    nt = thresholds.size
    live_rejected = np.empty(nt, dtype=np.int64)
    spoof_accepted = np.empty(nt, dtype=np.int64)
    i = 0
    j = 0
    for q in range(nt):
        thr = thresholds[order[q]]
        while i < live.size and live[i] < thr:
            i += 1
        while j < spoof.size and spoof[j] < thr:
            j += 1
        live_rejected[order[q]] = live.size - i
        spoof_accepted[order[q]] = j
    return live_rejected, spoof_accepted


if USE_NUMBA:
    softmax_aggregate = softmax_aggregate_numba
    coverage_mask = coverage_mask_numba
    greedy_cover = greedy_cover_numba
    error_counts = error_counts_numba
else:
    softmax_aggregate = softmax_aggregate_numpy
    coverage_mask = coverage_mask_numpy
    greedy_cover = greedy_cover_numpy
    error_counts = error_counts_numpy
