import os
import subprocess
import sys

import numpy as np
import pytest

from lrperc import _bits, _fallback, backend
from lrperc.coupling import CouplingField, STREAM_BASE
from lrperc.kernel import power_law
from lrperc.sampler import Box, sample_box

compiled = pytest.mark.skipif(backend.backend_name != "compiled",
                              reason="extension not built")

DISPS = np.array([[1, 0], [0, 1], [1, 1], [1, -1], [2, 0], [3, 2]],
                 dtype=np.int64)


def _threshs(ps):
    return np.array([_bits.threshold_word(p) for p in ps], dtype=np.int64)


@compiled
def test_scan_pairs_matches_fallback():
    lo = np.array([-6, -6], dtype=np.int64)
    hi = np.array([6, 6], dtype=np.int64)
    threshs = _threshs([0.9, 0.5, 0.2, 0.05, 0.7, 0.01])
    for seed in range(20):
        got_x, got_k = backend.scan_pairs(seed, 0, lo, hi, DISPS, threshs)
        want_x, want_k = _fallback.scan_pairs(seed, 0, lo, hi, DISPS,
                                              threshs)
        order_g = np.lexsort((got_k, got_x))
        order_w = np.lexsort((want_k, want_x))
        assert np.array_equal(got_x[order_g], want_x[order_w])
        assert np.array_equal(got_k[order_g], want_k[order_w])


@compiled
def test_scan_pairs_tiny_capacity_path():
    # force the retry loop by underestimating the hit count
    lo = np.array([-5, -5], dtype=np.int64)
    hi = np.array([5, 5], dtype=np.int64)
    threshs = _threshs([0.95] * len(DISPS))
    got_x, got_k = backend.scan_pairs(3, 0, lo, hi, DISPS, threshs,
                                      expected=0.0)
    want_x, want_k = _fallback.scan_pairs(3, 0, lo, hi, DISPS, threshs)
    assert len(got_x) == len(want_x)
    got = set(zip(got_x.tolist(), got_k.tolist()))
    want = set(zip(want_x.tolist(), want_k.tolist()))
    assert got == want


@compiled
def test_components_matches_fallback():
    rng = np.random.default_rng(7)
    n = 200
    for _ in range(10):
        m = int(rng.integers(0, 400))
        ei = rng.integers(0, n, size=m).astype(np.int64)
        ej = rng.integers(0, n, size=m).astype(np.int64)
        a = backend.components(n, ei, ej)
        b = _fallback.components(n, ei, ej)
        # labels may differ; partitions must agree
        ra = {}
        rb = {}
        for v in range(n):
            ra.setdefault(int(a[v]), set()).add(v)
            rb.setdefault(int(b[v]), set()).add(v)
        assert sorted(map(sorted, ra.values())) == \
            sorted(map(sorted, rb.values()))


@compiled
def test_bfs_distances_match_fallback():
    cfg = sample_box(power_law(2, 1.0, 4.0), 0.9, Box(2, (0, 0), 7),
                     CouplingField(11, STREAM_BASE))
    indptr, indices = cfg.csr
    allowed = np.ones(cfg.n_vertices, dtype=bool)
    sources = np.array([cfg.box.index((0, 0))], dtype=np.int64)
    da, pa = backend.bfs(indptr, indices, sources, allowed,
                         track_parent=True)
    db, pb = _fallback.bfs(indptr, indices, sources, allowed,
                           track_parent=True)
    assert np.array_equal(da, db)
    # each backend's parent array must be a valid BFS tree of its dist
    for parent, dist in ((pa, da), (pb, db)):
        for v in range(cfg.n_vertices):
            if dist[v] > 0:
                assert dist[parent[v]] == dist[v] - 1


def test_edge_uniforms_multi_rows_match_single():
    rng = np.random.default_rng(3)
    a = rng.integers(-50, 50, size=(40, 2)).astype(np.int64)
    b = a + rng.integers(1, 5, size=(40, 2)).astype(np.int64)
    seeds = np.array([0, 1, 12345, 2**63 - 1], dtype=np.uint64)
    multi = _fallback.edge_uniforms_multi(seeds, 0, a, b)
    for i, s in enumerate(seeds):
        single = _fallback.edge_uniforms(int(s), 0, a, b)
        assert np.array_equal(multi[i], single)


CFG_TEXT = """\
[experiment]
name = sample
seed = 21
replicates = 3

[kernel]
spec = power_law(d=2,C=1.0,s=4.0)

[model]
beta = 0.7

[params]
radius = 5
"""


def test_backends_agree_through_cli(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG_TEXT)
    outs = {}
    for name, env_extra in (("compiled", {}),
                            ("fallback", {"LRPERC_FORCE_FALLBACK": "1"})):
        out = tmp_path / name
        env = dict(os.environ, **env_extra)
        proc = subprocess.run(
            [sys.executable, "-m", "lrperc", "--config", str(cfg),
             "--out", str(out)],
            env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs[name] = ((out / "sample.csv").read_bytes(),
                      (out / "summary.json").read_bytes())
    assert outs["compiled"] == outs["fallback"]
