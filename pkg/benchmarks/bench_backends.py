"""Timing comparison of the two kernel backends on training-shaped batches.

Builds synthetic bags with the same dtypes the trainer hands to the
kernels, runs each batch kernel on both backends, and prints a table of
best-of-N wall times plus the float drift between the two (should sit at
round-off). Run as:

    python3 benchmarks/bench_backends.py [--repeats 20] [--bags 512]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from crosse.kernels import get_kernels
from crosse.model import ScoreMode, init_params


def make_batch(rng, n_e, n_r, n_bags, n_pos, n_neg, d, dropout=0.5):
    heads = rng.integers(0, n_e, n_bags).astype(np.int32)
    rels = rng.integers(0, n_r, n_bags).astype(np.int32)
    per = n_pos + n_neg
    bag_ptr = np.arange(n_bags + 1, dtype=np.int64) * per
    tails = rng.integers(0, n_e, n_bags * per).astype(np.int32)
    labels = np.tile(np.r_[np.ones(n_pos), np.zeros(n_neg)], n_bags)
    keep = (rng.random((n_bags, d)) >= dropout).astype(np.float32)
    keep /= 1.0 - dropout
    return heads, rels, bag_ptr, tails, labels, keep


def bench(fn, repeats):
    fn()  # warm-up; first numba call may compile
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--bags", type=int, default=512)
    ap.add_argument("--entities", type=int, default=2000)
    ap.add_argument("--relations", type=int, default=40)
    args = ap.parse_args(argv)

    backends = {}
    for name in ("numpy", "numba"):
        try:
            backends[name] = get_kernels(name)
        except (ImportError, ValueError) as exc:
            print(f"backend {name} unavailable: {exc}")
    if "numba" not in backends:
        print("numba missing; timing the numpy backend only")

    rng = np.random.default_rng(11)
    rows = []
    for d in (32, 100):
        params = {m: init_params(args.entities, args.relations, d, m, seed=1)
                  for m in ScoreMode}
        heads, rels, bag_ptr, tails, labels, keep = make_batch(
            rng, args.entities, args.relations, args.bags, 2, 25, d)

        def run(mod, mode):
            p = params[mode]
            dE = np.zeros((args.entities, d))
            dR = np.zeros((args.relations, d))
            if mode is ScoreMode.CROSSE:
                dC, db = np.zeros_like(dR), np.zeros(d)
                return lambda: mod.crosse_batch(p.E, p.R, p.C, p.b, heads, rels,
                                                bag_ptr, tails, labels, keep,
                                                True, dE, dR, dC, db)
            if mode is ScoreMode.CROSSE_S:
                db = np.zeros(d)
                return lambda: mod.crosse_s_batch(p.E, p.R, p.b, heads, rels,
                                                  bag_ptr, tails, labels, keep,
                                                  True, dE, dR, db)
            return lambda: mod.transe_batch(p.E, p.R, heads, rels, bag_ptr,
                                            tails, labels, 1.0, dE, dR)

        for mode in ScoreMode:
            times = {n: bench(run(m, mode), args.repeats)
                     for n, m in backends.items()}
            ce = {n: run(m, mode)()[1] for n, m in backends.items()}
            rows.append((f"{mode.value}_batch", d, times, ce))

    # negative sampling: integer-exact, so drift must be zero
    n_pos = 3
    pos_flat = np.sort(rng.choice(args.entities, args.bags * n_pos,
                                  replace=False)).astype(np.int32)
    pos_ptr = np.arange(args.bags + 1, dtype=np.int64) * n_pos
    counts = np.full(args.bags, 25, dtype=np.int32)
    rand_buf = rng.integers(0, args.entities, args.bags * 25 * 2 + 64)
    out_ptr = np.arange(args.bags + 1, dtype=np.int64) * 25
    out = {n: np.empty(args.bags * 25, dtype=np.int32) for n in backends}
    times = {n: bench(lambda m=m, n=n: m.fill_negatives(
                 pos_flat, pos_ptr, counts, args.entities, rand_buf, out[n],
                 out_ptr), args.repeats)
             for n, m in backends.items()}
    rows.append(("fill_negatives", "-", times, None))

    have = list(backends)
    hdr = f"{'kernel':<16} {'d':>4}" + "".join(f" {n + ' ms':>11}" for n in have)
    if len(have) == 2:
        hdr += f" {'speedup':>8} {'drift':>9}"
    print(hdr)
    print("-" * len(hdr))
    for kernel, d, times, ce in rows:
        line = f"{kernel:<16} {d:>4}" + "".join(f" {times[n]:>11.3f}" for n in have)
        if len(have) == 2:
            line += f" {times['numpy'] / times['numba']:>7.1f}x"
            if ce is None:
                drift = float(np.max(np.abs(out["numpy"] - out["numba"])))
            else:
                drift = abs(ce["numpy"] - ce["numba"]) / max(1.0, abs(ce["numpy"]))
            line += f" {drift:>9.1e}"
        print(line)


if __name__ == "__main__":
    main()
