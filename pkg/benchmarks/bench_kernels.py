"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Sizes mirror a 90x90, 50-band scene: AN attention over 4 heads, a level-4
circle neighborhood and an N-FINDR sweep with four endmembers. The first
numba call (JIT compile or cache load) is excluded from the timings.
"""

import argparse
import json
import timeit

import numpy as np

from specmix import kernels
from specmix.neighborhood import NeighborhoodSpec, neighbor_offsets


def _cases(rng):
    n_pix, heads, n_nbr, dk = 90 * 90, 4, 48, 12
    q = rng.normal(size=(n_pix * heads, 1, dk))
    k = rng.normal(size=(n_pix * heads, n_nbr, dk))
    v = rng.normal(size=(n_pix * heads, n_nbr, dk))
    scale = 1.0 / np.sqrt(dk)
    _, w = kernels.attention_forward_numpy(q, k, v, scale)
    g = rng.normal(size=(n_pix * heads, 1, dk))
    seeds = rng.uniform(0, 90, size=(12, 2))
    labels = np.arange(12, dtype=np.int64) % 4
    offsets = neighbor_offsets(NeighborhoodSpec("circle", 4))
    cof = rng.normal(size=4)
    pts = rng.normal(size=(3, n_pix))
    return {
        "attention_forward": (kernels.attention_forward_numba, kernels.attention_forward_numpy, (q, k, v, scale)),
        "attention_backward": (kernels.attention_backward_numba, kernels.attention_backward_numpy, (g, q, k, v, w, scale)),
        "worley_distances": (kernels.worley_distances_numba, kernels.worley_distances_numpy, (90, 90, seeds, labels, 4)),
        "neighbor_table": (kernels.neighbor_table_numba, kernels.neighbor_table_numpy, (90, 90, offsets)),
        "replacement_volumes": (kernels.replacement_volumes_numba, kernels.replacement_volumes_numpy, (cof, pts)),
    }


def _best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="also write the timings here")
    args = parser.parse_args(argv)

    rows = []
    for name, (fast, ref, call_args) in _cases(np.random.default_rng(args.seed)).items():
        fast(*call_args)  # compile or load from cache
        t_numba = _best(fast, call_args, args.repeat)
        t_numpy = _best(ref, call_args, args.repeat)
        rows.append({"kernel": name, "numba_s": t_numba, "numpy_s": t_numpy, "speedup": t_numpy / t_numba})

    print(f"{'kernel':<22} {'numba (ms)':>11} {'numpy (ms)':>11} {'speedup':>8}")
    for r in rows:
        print(f"{r['kernel']:<22} {1e3 * r['numba_s']:>11.2f} {1e3 * r['numpy_s']:>11.2f} {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
