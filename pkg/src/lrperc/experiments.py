"""Named experiments behind the command line runner.

A config is plain text: `[section]` headers and `key = value` lines.
Sections are `experiment`, `kernel`, `model`, and `params`; unknown
sections, unknown keys, and malformed values are all rejected before
any sampling starts.  Outputs are a fixed-header CSV per experiment
(two for `walk`) plus a JSON summary, and are byte-identical across
reruns and worker counts.
"""

from __future__ import annotations

import functools
import json
import math
import multiprocessing
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend, estimators, metric, renorm, walk
from .coupling import CouplingField, STREAM_BASE, replicate_seed
from .errors import ConfigParse, UnknownExperiment
from .kernel import (Kernel, ShortEdgeFunction, kernel_from_spec,
                     kernel_to_spec, make_counterexample_1d, pf_probability)
from .renorm import DirectedModel
from .sampler import Box, sample_box, sample_box_pf

EXPERIMENTS = ("sample", "theta", "betac", "locality", "phi", "distance",
               "shape", "giant", "walk", "renorm", "dsb", "depthpad",
               "counterexample1d")

_SECTION_KEYS = {
    "experiment": {"name", "seed", "replicates"},
    "kernel": {"spec"},
    "model": {"beta"},
    "params": None,
}

_PARAM_KEYS = {
    "sample": {"radius"},
    "theta": {"radius"},
    "betac": {"radii", "tol", "criterion"},
    "locality": {"radii", "truncations", "tol"},
    "phi": {"points", "mode"},
    "distance": {"x", "n_values", "margin"},
    "shape": {"t_values", "eps", "n_mu", "radius"},
    "giant": {"radii"},
    "walk": {"radius", "horizon", "radii"},
    "renorm": {"n", "m", "length_cap", "depth"},
    "dsb": {"rho_values", "depth"},
    "depthpad": {"r", "length_cap", "kk_values"},
    "counterexample1d": {"gamma", "cutoffs", "radius", "p"},
}

# experiments that run on the (p, f) short-edge model or no model at all
_NO_KERNEL = {"counterexample1d", "dsb"}
_NO_BETA = {"counterexample1d", "dsb"}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    replicates: int
    kernel: Kernel | None
    beta: float | None
    params: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text; raises ConfigParse on any defect."""
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTION_KEYS:
                raise ConfigParse(f"line {lineno}: unknown section [{name}]")
            if name in sections:
                raise ConfigParse(f"line {lineno}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if "=" not in line:
            raise ConfigParse(f"line {lineno}: expected key = value")
        if current is None:
            raise ConfigParse(f"line {lineno}: key outside any section")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigParse(f"line {lineno}: empty key or value")
        if key in sections[current]:
            raise ConfigParse(f"line {lineno}: duplicate key {key}")
        allowed = _SECTION_KEYS[current]
        if allowed is not None and key not in allowed:
            raise ConfigParse(f"line {lineno}: unknown key {key} in "
                              f"[{current}]")
        sections[current][key] = value

    exp = sections.get("experiment", {})
    name = exp.get("name")
    if name is None:
        raise ConfigParse("missing [experiment] name")
    if name not in EXPERIMENTS:
        raise UnknownExperiment(f"unknown experiment: {name}")
    seed = _to_int(exp.get("seed", "0"), "experiment.seed")
    replicates = _to_int(exp.get("replicates", "100"),
                         "experiment.replicates")
    if replicates < 1:
        raise ConfigParse("experiment.replicates must be positive")

    params = dict(sections.get("params", {}))
    bad = set(params) - _PARAM_KEYS[name]
    if bad:
        raise ConfigParse(f"unknown params for {name}: "
                          f"{', '.join(sorted(bad))}")

    kern = None
    if name in _NO_KERNEL:
        if "kernel" in sections:
            raise ConfigParse(f"{name} defines its own model; no [kernel]")
    else:
        spec = sections.get("kernel", {}).get("spec")
        if spec is None:
            raise ConfigParse("missing [kernel] spec")
        try:
            kern = kernel_from_spec(spec)
        except (ValueError, TypeError) as err:
            raise ConfigParse(str(err)) from err

    beta = None
    if name in _NO_BETA:
        if "model" in sections:
            raise ConfigParse(f"{name} takes no [model] beta")
    else:
        raw_beta = sections.get("model", {}).get("beta")
        if raw_beta is None:
            raise ConfigParse("missing [model] beta")
        beta = _to_float(raw_beta, "model.beta")
        if beta < 0:
            raise ConfigParse("model.beta must be nonnegative")

    return ExperimentConfig(name=name, seed=seed, replicates=replicates,
                            kernel=kern, beta=beta, params=params)


def _to_int(s: str, what: str) -> int:
    try:
        return int(s)
    except ValueError as err:
        raise ConfigParse(f"{what}: expected integer, got {s!r}") from err


def _to_float(s: str, what: str) -> float:
    try:
        return float(s)
    except ValueError as err:
        raise ConfigParse(f"{what}: expected number, got {s!r}") from err


def _to_ints(s: str, what: str) -> list[int]:
    return [_to_int(p.strip(), what) for p in s.split(",") if p.strip()]


def _to_floats(s: str, what: str) -> list[float]:
    return [_to_float(p.strip(), what) for p in s.split(",") if p.strip()]


def _to_point(s: str, what: str, d: int) -> tuple[int, ...]:
    pt = tuple(_to_int(c.strip(), what) for c in s.split(","))
    if len(pt) != d:
        raise ConfigParse(f"{what}: expected {d} coordinates")
    return pt


def _to_points(s: str, what: str, d: int) -> list[tuple[int, ...]]:
    return [_to_point(p.strip(), what, d) for p in s.split(";") if p.strip()]


def _param(cfg: ExperimentConfig, key: str) -> str:
    if key not in cfg.params:
        raise ConfigParse(f"{cfg.name} requires params.{key}")
    return cfg.params[key]


# ------------------------------------------------------------------ plumbing

def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(min(workers, len(items))) as pool:
        return pool.map(fn, items)


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _largest_cluster(cfg) -> int:
    labels = backend.components(cfg.n_vertices, cfg.edges_i, cfg.edges_j)
    return int(np.bincount(labels).max())


def _origin_box(d: int, radius: int) -> Box:
    return Box(d, (0,) * d, radius)


# ------------------------------------------------------------------ runners

def _sample_one(kern, beta, box, base_seed, i):
    rs = replicate_seed(base_seed, i)
    cfg = sample_box(kern, beta, box, CouplingField(rs, STREAM_BASE))
    return (i, rs, cfg.n_vertices, cfg.open_edge_count, _largest_cluster(cfg))


def _run_sample(cfg: ExperimentConfig, workers: int):
    radius = _to_int(_param(cfg, "radius"), "params.radius")
    box = _origin_box(cfg.kernel.d, radius)
    fn = functools.partial(_sample_one, cfg.kernel, cfg.beta, box, cfg.seed)
    rows = _pmap(fn, range(cfg.replicates), workers)
    header = "replicate,seed,vertices,open_edges,largest_cluster"
    summary = {
        "mean_open_edges": float(np.mean([r[3] for r in rows])),
        "mean_largest_cluster": float(np.mean([r[4] for r in rows])),
    }
    return {cfg.name: (header, rows)}, summary


def _run_theta(cfg: ExperimentConfig, workers: int):
    radius = _to_int(_param(cfg, "radius"), "params.radius")
    est = estimators.theta_density(cfg.kernel, cfg.beta, radius,
                                   cfg.replicates, cfg.seed)
    header = "d,beta,radius,theta,stderr,replicates,seed"
    rows = [(cfg.kernel.d, cfg.beta, radius, est.value, est.stderr,
             est.replicates, cfg.seed)]
    return {cfg.name: (header, rows)}, {"theta": est.value,
                                        "stderr": est.stderr}


def _run_betac(cfg: ExperimentConfig, workers: int):
    radii = _to_ints(_param(cfg, "radii"), "params.radii")
    tol = _to_float(cfg.params.get("tol", "0.05"), "params.tol")
    criterion = cfg.params.get("criterion", "boundary_crossing_half")
    br = estimators.betac_bracket(cfg.kernel, radii, criterion=criterion,
                                  tol=tol, replicates=cfg.replicates,
                                  seed=cfg.seed)
    header = "radius,beta,statistic"
    rows = [(radius, b, v) for radius in sorted(br.curves)
            for b, v in br.curves[radius]]
    return {cfg.name: (header, rows)}, {"low": br.low, "high": br.high,
                                        "criterion": br.criterion}


def _run_locality(cfg: ExperimentConfig, workers: int):
    radii = _to_ints(_param(cfg, "radii"), "params.radii")
    truncs = _to_floats(_param(cfg, "truncations"), "params.truncations")
    tol = _to_float(cfg.params.get("tol", "0.05"), "params.tol")
    sweep = estimators.locality_sweep(cfg.kernel, truncs, radii, tol=tol,
                                      replicates=cfg.replicates,
                                      seed=cfg.seed)
    header = "truncation,low,high,midpoint"
    rows = [(n, br.low, br.high, 0.5 * (br.low + br.high))
            for n, br in sweep]
    summary = {"midpoints": {str(n): 0.5 * (br.low + br.high)
                             for n, br in sweep}}
    return {cfg.name: (header, rows)}, summary


def _run_phi(cfg: ExperimentConfig, workers: int):
    pts = _to_points(_param(cfg, "points"), "params.points", cfg.kernel.d)
    mode = cfg.params.get("mode", "exact")
    if mode not in ("exact", "mc"):
        raise ConfigParse("params.mode must be exact or mc")
    res = estimators.phi_value(cfg.kernel, cfg.beta, pts, mode=mode,
                               replicates=cfg.replicates, seed=cfg.seed)
    header = "beta,mode,phi,upper,certified,tail_bound"
    rows = [(cfg.beta, mode, res.value, res.upper, res.certified,
             res.tail_bound)]
    return {cfg.name: (header, rows)}, {"phi": res.value, "upper": res.upper,
                                        "certified": res.certified}


def _run_distance(cfg: ExperimentConfig, workers: int):
    d = cfg.kernel.d
    x = _to_point(cfg.params.get("x", ",".join(["1"] + ["0"] * (d - 1))),
                  "params.x", d)
    n_values = _to_ints(_param(cfg, "n_values"), "params.n_values")
    margin = _to_int(cfg.params.get("margin", "4"), "params.margin")
    pts = metric.mu_sequence(cfg.kernel, cfg.beta, x, n_values,
                             cfg.replicates, cfg.seed, margin=margin)
    header = "n,mean_ratio,stderr,subadd_violations,replicates"
    rows = [(p.n, p.mean, p.stderr, p.subadd_violations, p.replicates)
            for p in pts]
    summary = {"ratios": {str(p.n): p.mean for p in pts},
               "subadd_violations": int(sum(p.subadd_violations
                                            for p in pts))}
    return {cfg.name: (header, rows)}, summary


def _shape_mu(cfg: ExperimentConfig, n_mu: int):
    d = cfg.kernel.d
    e1 = tuple([1] + [0] * (d - 1))
    diag = (1,) * d
    m_axis = metric.mu_sequence(cfg.kernel, cfg.beta, e1, [n_mu],
                                cfg.replicates, cfg.seed)[0].mean
    m_diag = metric.mu_sequence(cfg.kernel, cfg.beta, diag, [n_mu],
                                cfg.replicates, cfg.seed + 1)[0].mean
    mu = {}
    for i in range(d):
        key = [0] * d
        key[i] = 1
        mu[tuple(key)] = m_axis
    mu[diag] = m_diag
    if d == 2:
        mu[(1, -1)] = m_diag
    return mu


def _run_shape(cfg: ExperimentConfig, workers: int):
    t_values = _to_ints(_param(cfg, "t_values"), "params.t_values")
    eps = _to_float(cfg.params.get("eps", "0.1"), "params.eps")
    n_mu = _to_int(cfg.params.get("n_mu", "8"), "params.n_mu")
    radius = _to_int(_param(cfg, "radius"), "params.radius")
    mu = _shape_mu(cfg, n_mu)
    d = cfg.kernel.d
    origin = (0,) * d
    rows = []
    mags = {t: [] for t in t_values}
    for i in range(cfg.replicates):
        rs = replicate_seed(cfg.seed, i)
        box = _origin_box(d, radius)
        config, proxy = metric.sample_with_proxy(
            cfg.kernel, cfg.beta, box, CouplingField(rs, STREAM_BASE))
        for t in t_values:
            ball = metric.chemical_ball(config, proxy, origin, t)
            rep = metric.shape_check(ball, t, mu, eps)
            rows.append((i, t, rep.ok, rep.magnitude))
            mags[t].append(rep.magnitude)
    header = "replicate,t,ok,magnitude"
    summary = {"mean_magnitude": {str(t): float(np.mean(v))
                                  for t, v in mags.items()},
               "mu": {",".join(str(c) for c in k): v
                      for k, v in sorted(mu.items())}}
    return {cfg.name: (header, rows)}, summary


def _giant_one(kern, beta, radius, base_seed, i):
    rs = replicate_seed(base_seed, i)
    box = _origin_box(kern.d, radius)
    cfg = sample_box(kern, beta, box, CouplingField(rs, STREAM_BASE))
    return _largest_cluster(cfg) / cfg.n_vertices


def _run_giant(cfg: ExperimentConfig, workers: int):
    radii = _to_ints(_param(cfg, "radii"), "params.radii")
    rows = []
    summary = {"density": {}}
    for radius in radii:
        fn = functools.partial(_giant_one, cfg.kernel, cfg.beta, radius,
                               cfg.seed)
        dens = _pmap(fn, range(cfg.replicates), workers)
        rows.extend((radius, i, v) for i, v in enumerate(dens))
        summary["density"][str(radius)] = {
            "mean": float(np.mean(dens)),
            "std": float(np.std(dens, ddof=1)) if len(dens) > 1 else 0.0,
        }
    header = "n,replicate,density"
    return {cfg.name: (header, rows)}, summary


def _run_walk(cfg: ExperimentConfig, workers: int):
    radius = _to_int(_param(cfg, "radius"), "params.radius")
    horizon = _to_int(cfg.params.get("horizon", "10000"), "params.horizon")
    radii = _to_ints(cfg.params.get("radii", str(radius)), "params.radii")
    d = cfg.kernel.d
    box = _origin_box(d, radius)
    config = sample_box(cfg.kernel, cfg.beta, box,
                        CouplingField(replicate_seed(cfg.seed, 0),
                                      STREAM_BASE))
    origin = (0,) * d
    ret = walk.return_frequency(config, origin, horizon, cfg.replicates,
                                cfg.seed)
    ret_rows = [(d, cfg.beta, horizon, ret.value, ret.stderr)]
    pts = config.box.points_array()
    res_rows = []
    for n in radii:
        rim = pts[np.max(np.abs(pts), axis=1) >= n]
        r = walk.effective_resistance(config, origin,
                                      [tuple(p) for p in rim])
        res_rows.append((d, cfg.beta, n, r))
    files = {
        "walk_return": ("d,beta,horizon,estimate,stderr", ret_rows),
        "walk_resistance": ("d,beta,n,resistance", res_rows),
    }
    summary = {"return_frequency": ret.value,
               "resistance": {str(n): row[3]
                              for n, row in zip(radii, res_rows)}}
    return files, summary


def _renorm_one(kern, beta, n, m, cap, depth, base_seed, i):
    rs = replicate_seed(base_seed, i)
    res = renorm.directed_exploration(kern, beta, n=n, m=m, N=cap,
                                      depth=depth, seed=rs)
    return (i, rs, res.depth, res.survived, res.certificate_ok)


def _run_renorm(cfg: ExperimentConfig, workers: int):
    n = _to_int(_param(cfg, "n"), "params.n")
    m = _to_int(_param(cfg, "m"), "params.m")
    cap = _to_int(_param(cfg, "length_cap"), "params.length_cap")
    depth = _to_int(_param(cfg, "depth"), "params.depth")
    fn = functools.partial(_renorm_one, cfg.kernel, cfg.beta, n, m, cap,
                           depth, cfg.seed)
    rows = _pmap(fn, range(cfg.replicates), workers)
    header = "replicate,seed,depth,survived,certificate_ok"
    survived = [r for r in rows if r[3]]
    summary = {
        "survival_frequency": len(survived) / len(rows),
        "certificate_failures": sum(1 for r in survived if not r[4]),
        "mean_depth": float(np.mean([r[2] for r in rows])),
    }
    return {cfg.name: (header, rows)}, summary


def _run_dsb(cfg: ExperimentConfig, workers: int):
    rhos = _to_floats(_param(cfg, "rho_values"), "params.rho_values")
    depth = _to_int(_param(cfg, "depth"), "params.depth")
    header = "rho,depth,survival,stderr"
    rows = []
    summary = {"survival": {}}
    for rho in rhos:
        est = renorm.directed_survival(DirectedModel(rho), depth,
                                       cfg.replicates, cfg.seed)
        rows.append((rho, depth, est.value, est.stderr))
        summary["survival"][repr(rho)] = est.value
    return {cfg.name: (header, rows)}, summary


def _run_depthpad(cfg: ExperimentConfig, workers: int):
    r = _to_float(_param(cfg, "r"), "params.r")
    cap = _to_int(_param(cfg, "length_cap"), "params.length_cap")
    kks = _to_ints(_param(cfg, "kk_values"), "params.kk_values")
    header = "k,frequency,stderr,mean_boxes"
    rows = []
    summary = {"frequency": {}}
    for kk in kks:
        rep = renorm.depth_no_pad_probe(cfg.kernel, cfg.beta, r, cap, kk,
                                        cfg.replicates, cfg.seed)
        rows.append((kk, rep.estimate.value, rep.estimate.stderr,
                     rep.mean_boxes))
        summary["frequency"][str(kk)] = rep.estimate.value
    return {cfg.name: (header, rows)}, summary


def _counterexample_crossing(model, radius, replicates, seed):
    box = Box(1, (0,), radius)
    hits = np.zeros(replicates)
    for i in range(replicates):
        rs = replicate_seed(seed, i)
        cfg = sample_box_pf(model, box, CouplingField(rs, STREAM_BASE))
        labels = backend.components(cfg.n_vertices, cfg.edges_i, cfg.edges_j)
        c = labels[cfg.box.index((0,))]
        hits[i] = 1.0 if (labels[0] == c or labels[-1] == c) else 0.0
    return estimators._estimate(hits, seed, "pf-crossing")


def _run_counterexample1d(cfg: ExperimentConfig, workers: int):
    gamma = _to_float(_param(cfg, "gamma"), "params.gamma")
    cutoffs = _param(cfg, "cutoffs")
    radius = _to_int(_param(cfg, "radius"), "params.radius")
    p = _to_float(cfg.params.get("p", "0.5"), "params.p")
    base = ShortEdgeFunction(1, p, {})
    full = make_counterexample_1d(base, gamma, 1)
    header = "cutoff,crossing,stderr"
    rows = []
    summary = {"crossing": {}}
    for tok in (t.strip() for t in cutoffs.split(",")):
        if not tok:
            continue
        if tok == "inf":
            model = full
            label = "inf"
        else:
            c = _to_int(tok, "params.cutoffs")
            table = {(j,): pf_probability(full, (j,))
                     for j in range(2, c + 1)}
            model = ShortEdgeFunction(1, p, table)
            label = str(c)
        est = _counterexample_crossing(model, radius, cfg.replicates,
                                       cfg.seed)
        rows.append((label, est.value, est.stderr))
        summary["crossing"][label] = est.value
    return {cfg.name: (header, rows)}, summary


_RUNNERS = {
    "sample": _run_sample,
    "theta": _run_theta,
    "betac": _run_betac,
    "locality": _run_locality,
    "phi": _run_phi,
    "distance": _run_distance,
    "shape": _run_shape,
    "giant": _run_giant,
    "walk": _run_walk,
    "renorm": _run_renorm,
    "dsb": _run_dsb,
    "depthpad": _run_depthpad,
    "counterexample1d": _run_counterexample1d,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str,
                   workers: int = 1) -> dict:
    """Run one experiment; writes CSV file(s) and summary.json to out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    files, result = _RUNNERS[cfg.name](cfg, workers)
    summary = {
        "experiment": cfg.name,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "kernel": kernel_to_spec(cfg.kernel) if cfg.kernel else None,
        "beta": cfg.beta,
        "params": dict(sorted(cfg.params.items())),
        "outputs": [f"{name}.csv" for name in files],
        "results": result,
    }
    for name, (header, rows) in files.items():
        _write_csv(os.path.join(out_dir, f"{name}.csv"), header, rows)
    with open(os.path.join(out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True,
                  default=_json_default)
        fh.write("\n")
    return summary
