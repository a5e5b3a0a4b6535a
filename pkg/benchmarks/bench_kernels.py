"""Compare the compiled and pure-Python keyword kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times co-occurrence counting, TextRank iteration and the full per-sentence
keyword extraction at a few sentence lengths, and checks that both backends
return bit-identical scores.
"""

import argparse
import timeit

import numpy as np

from kstm import kernels
from kstm.keywords import build_cooccurrence, textrank_scores


def _sentence(rng, length, vocab=400):
    return [chr(0x4E00 + int(i)) for i in rng.integers(0, vocab, size=length)]


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)

    try:
        from kstm import _ckernels  # noqa: F401
    except ImportError:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'tokens':>8}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for length in (16, 64, 256):
        tokens = _sentence(rng, length)
        graph = build_cooccurrence(tokens, 3)
        index = {t: i for i, t in enumerate(graph.nodes)}
        ids = np.array([index[t] for t in tokens], dtype=np.int64)
        cases = {
            "cooccurrence": lambda b: kernels.cooccurrence_matrix(ids, len(index), 3, backend=b),
            "textrank": lambda b: kernels.textrank_iterate(graph.weights, 0.85, 1e-6, 100, backend=b),
            "keyword": lambda b: textrank_scores(build_cooccurrence(tokens, 3, backend=b), backend=b),
        }
        for name, fn in cases.items():
            py = _time(lambda: fn("python"), args.repeat)
            cy = _time(lambda: fn("cython"), args.repeat)
            print(f"{name:<14}{length:>8}{py * 1e3:>12.3f}{cy * 1e3:>12.3f}{py / cy:>9.1f}x")
        a = kernels.textrank_iterate(graph.weights, 0.85, 1e-6, 100, backend="python")[0]
        b = kernels.textrank_iterate(graph.weights, 0.85, 1e-6, 100, backend="cython")[0]
        assert a.tobytes() == b.tobytes(), "backends disagree"
    print("backends bit-identical: yes")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
