"""Time the numba kernels against their pure-numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--repeat 20]

Each kernel is warmed up once (numba compiles on first call, or loads from
its on-disk cache) and then timed as the best of ``--repeat`` runs.  Outputs
are compared so a speedup never hides a disagreement.
"""

import argparse
import time

import numpy as np

from lda_fas import _kernels as K


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    sims = rng.uniform(-1, 1, size=(4096, 16))
    protos = rng.standard_normal((16, 8))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    emb = rng.standard_normal((2000, 8))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    mask = K.coverage_mask_numpy(protos, emb, 0.5)
    live, spoof = rng.random(5000), rng.random(5000)
    thr = np.unique(np.concatenate([live, spoof]))
    return {
        "softmax_aggregate": ((sims, 10.0), lambda a, b: np.allclose(a[1], b[1], atol=1e-12)),
        "coverage_mask": ((protos, emb, 0.5), lambda a, b: np.mean(a != b) < 1e-3),
        "greedy_cover": ((mask,), lambda a, b: all(np.array_equal(x, y) for x, y in zip(a, b))),
        "error_counts": ((live, spoof, thr), lambda a, b: all(np.array_equal(x, y) for x, y in zip(a, b))),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if not K.HAVE_NUMBA:
        print("numba not importable; nothing to compare")
        return
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  agree")
    for name, (inputs, agree) in cases(np.random.default_rng(args.seed)).items():
        np_fn, nb_fn = getattr(K, f"{name}_numpy"), getattr(K, f"{name}_numba")
        t_np = best_of(np_fn, inputs, args.repeat)
        t_nb = best_of(nb_fn, inputs, args.repeat)
        ok = agree(np_fn(*inputs), nb_fn(*inputs))
        print(f"{name:<20}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x  {ok}")


if __name__ == "__main__":
    main()
