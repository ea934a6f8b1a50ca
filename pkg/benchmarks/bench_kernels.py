"""Time the attention kernel backends against each other.

Usage:
    python3 benchmarks/bench_kernels.py [--sizes 200,800,2000] [--repeats 5]

Builds synthetic corpora at each size, then times attention_weights with the
compiled kernel and the pure-Python fallback on identical inputs. Reports the
median wall time per call and the speedup. Exits nonzero if the two backends
disagree beyond 1e-13, so this doubles as a parity check.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from tempora.corpus import slice_by_time
from tempora.embed import LocalProjectionEmbedder, embed_corpus
from tempora.harness import SyntheticSpec, generate_synthetic
from tempora.temporal import KERNEL_BACKEND, DecayConfig, attention_weights


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        times.append(time.perf_counter() - started)
    return sorted(times)[len(times) // 2]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="200,800,2000",
                        help="comma-separated document counts")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--window", type=int, default=3)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    if KERNEL_BACKEND != "compiled":
        print("note: compiled kernel unavailable, timing the fallback against itself")

    cfg = DecayConfig(lam=0.5, window=args.window)
    print(f"default backend: {KERNEL_BACKEND}")
    print(f"{'docs':>6} {'compiled':>12} {'python':>12} {'speedup':>8}")
    for n in sizes:
        docs_per_slice = max(1, n // 40)
        spec = SyntheticSpec(k=3, v=50, num_slices=40, docs_per_slice=docs_per_slice,
                             doc_length=30, sigma=0.01, seed=0)
        corpus, _ = generate_synthetic(spec)
        slices = slice_by_time(corpus, spec.num_slices)
        emb = embed_corpus(
            corpus,
            LocalProjectionEmbedder(corpus.vocabulary, len(corpus), d=args.dim, seed=13),
        )
        H = emb.rows

        compiled = attention_weights(H, slices, cfg, backend=KERNEL_BACKEND)
        python = attention_weights(H, slices, cfg, backend="python")
        gap = float(np.max(np.abs(compiled.to_dense() - python.to_dense())))
        if gap > 1e-13:
            print(f"backend mismatch at n={len(corpus)}: max abs gap {gap:.3e}")
            return 1

        t_compiled = _median_time(
            lambda: attention_weights(H, slices, cfg, backend=KERNEL_BACKEND), args.repeats)
        t_python = _median_time(
            lambda: attention_weights(H, slices, cfg, backend="python"), args.repeats)
        print(f"{len(corpus):>6} {t_compiled * 1e3:>10.2f}ms {t_python * 1e3:>10.2f}ms "
              f"{t_python / t_compiled:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
