"""Compare the Cython and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--frames 10000] [--json out.json]

Each workload is first run on both backends and the outputs compared, so a
speedup is only reported for identical results.
"""

import argparse
import json
import random
import string
import sys
import timeit

import numpy as np

from hqa.dataset import generate_synthetic_dataset
from hqa.forest import synthetic_forest
from hqa.kernels import PURE, get_backend


def levenshtein_workload(n_pairs, seed):
    rng = random.Random(seed)
    alphabet = string.ascii_lowercase + " "

    def word():
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(2, 40)))

    pairs = [(word(), word()) for _ in range(n_pairs)]

    def run(backend):
        lev = backend.levenshtein
        return [lev(a, b) for a, b in pairs]

    return run


def prune_workload(n_nodes, n_roots, n_frames, seed):
    forest = synthetic_forest(n_nodes, n_roots)
    compiled = forest.compiled()
    data = generate_synthetic_dataset(forest, n_frames, gate_pass=0.5, seed=seed)
    codes = np.stack([compiled.encode(a.answers) for a in data])

    def run(backend):
        out = np.zeros(codes.shape, dtype=np.uint8)
        first = backend.prune_matrix(compiled.parent, compiled.gate_mask, codes, out)
        return out.tobytes(), list(first)

    return run


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--frames", type=int, default=10000)
    ap.add_argument("--pairs", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    try:
        compiled = get_backend("cython")
    except ImportError as exc:
        print(exc, file=sys.stderr)
        return 1

    workloads = {
        f"levenshtein x{args.pairs}": levenshtein_workload(args.pairs, args.seed),
        f"prune 41 nodes x{args.frames}": prune_workload(41, 6, args.frames, args.seed),
        f"prune 500 nodes x{args.frames // 10}": prune_workload(500, 20, args.frames // 10, args.seed),
    }
    rows = []
    for name, run in workloads.items():
        if run(PURE) != run(compiled):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        t_py = best_of(lambda: run(PURE), args.repeat)
        t_cy = best_of(lambda: run(compiled), args.repeat)
        rows.append({"workload": name, "python_s": t_py, "cython_s": t_cy, "speedup": t_py / t_cy})

    print(f"{'workload':<28}{'python (ms)':>13}{'cython (ms)':>13}{'speedup':>10}")
    for r in rows:
        print(f"{r['workload']:<28}{r['python_s'] * 1e3:>13.2f}{r['cython_s'] * 1e3:>13.2f}{r['speedup']:>9.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"repeat": args.repeat, "seed": args.seed, "results": rows}, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
