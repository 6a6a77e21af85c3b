"""Compare the compiled scan/BFS/union-find against the NumPy fallback.

Run from the repo root:

    python3 benchmarks/bench_backends.py

Timings are wall-clock medians over repeats on whatever machine this is;
the point is the ratio, not the absolute numbers.  The fallback is forced
per-call here (both backends live in one process), unlike the test suite
which forces it through LRPERC_FORCE_FALLBACK in a subprocess.
"""

import time

import numpy as np

from lrperc import _bits, _fallback, backend
from lrperc.coupling import CouplingField, STREAM_BASE
from lrperc.kernel import power_law
from lrperc.sampler import Box, sample_box


def median_time(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def bench_scan():
    lo = np.array([-96, -96], dtype=np.int64)
    hi = np.array([96, 96], dtype=np.int64)
    disps = []
    for dx in range(0, 5):
        for dy in range(-4, 5):
            if (dx, dy) > (0, 0):
                disps.append((dx, dy))
    disps = np.array(disps, dtype=np.int64)
    ps = np.minimum(0.9, 1.0 / np.maximum(np.abs(disps), 1).max(1) ** 3)
    threshs = np.array([_bits.threshold_word(p) for p in ps], dtype=np.int64)
    fast = median_time(lambda: backend.scan_pairs(7, 0, lo, hi, disps,
                                                  threshs))
    slow = median_time(lambda: _fallback.scan_pairs(7, 0, lo, hi, disps,
                                                    threshs))
    report("scan_pairs 193x193, 44 classes", fast, slow)


def bench_graph_ops():
    cfg = sample_box(power_law(2, 1.0, 4.0), 0.9, Box(2, (0, 0), 96),
                     CouplingField(5, STREAM_BASE))
    n, ei, ej = cfg.n_vertices, cfg.edges_i, cfg.edges_j
    fast = median_time(lambda: backend.components(n, ei, ej))
    slow = median_time(lambda: _fallback.components(n, ei, ej))
    report(f"components n={n} m={len(ei)}", fast, slow)

    indptr, indices = cfg.csr
    allowed = np.ones(n, dtype=bool)
    sources = np.array([cfg.box.index((0, 0))], dtype=np.int64)
    fast = median_time(lambda: backend.bfs(indptr, indices, sources,
                                           allowed))
    slow = median_time(lambda: _fallback.bfs(indptr, indices, sources,
                                             allowed))
    report("bfs from origin", fast, slow)


def report(label, fast, slow):
    ratio = slow / fast if fast > 0 else float("inf")
    print(f"{label:38s} compiled {fast * 1e3:8.2f} ms   "
          f"fallback {slow * 1e3:8.2f} ms   x{ratio:.1f}")


if __name__ == "__main__":
    print(f"active backend: {backend.backend_name}")
    if backend.backend_name != "compiled":
        print("extension missing; both columns below use the fallback")
    bench_scan()
    bench_graph_ops()
