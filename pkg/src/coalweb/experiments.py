"""Seeded Monte Carlo campaigns with reference values and verdicts.

A run is split into contiguous trial ranges. Each range returns its raw
per-trial arrays; `merge` concatenates them by range start and only then
computes statistics, so a report does not depend on how many workers ran it.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
import multiprocessing as mp
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import _kernels as K
from .errors import GuardError
from .increments import (
    LAZY_UNIFORM, UNIFORM_2, format_law, ladder_distribution, ladder_exact,
    overshoot_from, overshoot_limit, parse_law,
)
from .maps import apply_f, bm_point_count, fg_distance, lattice_family
from .rng import COUNTER_ID, GENERATOR_ID, key64, stream
from .voter import boundary_paths, interface_trace
from .walks import density_guard, enumerate_exact, occupancy_trials

KINDS = (
    "density_scan", "etahat", "pointprocess", "negcorr_exact", "negcorr_mc", "overshoot",
    "interface_clt", "fg_convergence", "tightness_scan", "hitting_tail", "bm_reference",
)

# law, trials and kind-specific defaults
DEFAULTS = {
    "density_scan": dict(law=LAZY_UNIFORM, trials=50, ts=(400.0, 2500.0), width=20000),
    "etahat": dict(law=UNIFORM_2, trials=2000, ts=(1.0,), deltas=(0.1, 0.02)),
    "pointprocess": dict(law=UNIFORM_2, trials=10000, ts=(1.0,), deltas=(0.01,)),
    "negcorr_exact": dict(law=LAZY_UNIFORM, trials=1, width=5, steps=2),
    "negcorr_mc": dict(law=LAZY_UNIFORM, trials=10000, width=200, steps=50),
    "overshoot": dict(law=UNIFORM_2, trials=100000),
    "interface_clt": dict(law=UNIFORM_2, trials=2000, ts=(1000.0, 10000.0), deltas=(0.02,),
                          time_kind="continuous"),
    "fg_convergence": dict(law=UNIFORM_2, trials=10000, deltas=(0.1, 0.05, 0.02)),
    "tightness_scan": dict(law=UNIFORM_2, trials=2000, ts=(0.04, 0.01), deltas=(0.1, 0.05, 0.02)),
    "hitting_tail": dict(law=UNIFORM_2, trials=100000, ts=(100.0, 1000.0, 10000.0),
                         time_kind="continuous"),
    "bm_reference": dict(law=UNIFORM_2, trials=2000, ts=(1.0,)),
}

BM_SPACING = 0.01  # start spacing of the coalescing Brownian reference
BM_BUFFER = 4.0  # starts extend this many sqrt(t) beyond the counting interval
KOLMOGOROV_SD = 0.2603  # sd of the limiting Kolmogorov distribution
FG_DOUBLINGS = 6
FG_GRID = 1000  # evaluation grid of the compactified distance


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a report. Unset fields get kind defaults."""

    kind: str
    law: str = ""
    trials: int = 0
    seed: int = 0
    deltas: tuple = ()
    ts: tuple = ()
    interval: tuple = (0.0, 1.0)
    width: int = 0
    grid_dt: float = 1e-4
    time_kind: str = ""
    eps: float = 0.05
    m: int = 2
    u: float = 0.05
    steps: int = 0
    cells: int = 20
    start: int = -10
    cap: int = 10 ** 6
    tolerance: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GuardError(f"unknown experiment kind {self.kind!r}")
        d = DEFAULTS[self.kind]
        law = self.law or d["law"]
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("law", format_law(parse_law(law)))
        set_("trials", int(self.trials or d["trials"]))
        set_("seed", int(self.seed))
        set_("deltas", tuple(float(x) for x in (self.deltas or d.get("deltas", ()))))
        set_("ts", tuple(float(x) for x in (self.ts or d.get("ts", ()))))
        set_("interval", tuple(float(x) for x in self.interval))
        set_("width", int(self.width or d.get("width", 0)))
        set_("grid_dt", float(self.grid_dt))
        set_("time_kind", self.time_kind or d.get("time_kind", "discrete"))
        set_("eps", float(self.eps))
        set_("u", float(self.u))
        set_("steps", int(self.steps or d.get("steps", 0)))
        if self.tolerance is not None:
            set_("tolerance", float(self.tolerance))
        if self.trials < 1:
            raise GuardError("trials must be at least 1")
        if self.time_kind not in ("discrete", "continuous"):
            raise GuardError(f"unknown time kind {self.time_kind!r}")
        if len(self.interval) != 2 or self.interval[0] > self.interval[1]:
            raise GuardError("interval needs a <= b")
        if any(not 0 < x <= 1 for x in self.deltas):
            raise GuardError("every delta must lie in (0, 1]")
        if any(t < 0 for t in self.ts):
            raise GuardError("times must be nonnegative")

    @property
    def increment_law(self):
        return parse_law(self.law)


@dataclass(frozen=True)
class Cell:
    name: str
    params: dict
    estimate: float
    stderr: float
    reference: float
    provenance: str
    tolerance: float = 0.0
    sided: str = "two"  # two | upper | lower | strict | finite | info
    se_mult: float = 3.0
    override: float | None = None

    @property
    def threshold(self):
        if self.override is not None:
            return self.override
        se = self.stderr if math.isfinite(self.stderr) else 0.0
        return max(self.tolerance, self.se_mult * se)

    @property
    def verdict(self):
        e, r, thr = self.estimate, self.reference, self.threshold
        if self.sided == "info":
            return "info"
        if self.sided == "finite":
            return "pass" if math.isfinite(e) else "fail"
        if not math.isfinite(e):
            return "fail"
        ok = {
            "two": abs(e - r) <= thr,
            "upper": e - r <= thr,
            "lower": r - e <= thr,
            "strict": e - r < thr,
        }[self.sided]
        return "pass" if ok else "fail"

    def row(self, kind):
        return {
            "kind": kind,
            "name": self.name,
            "params": ";".join(f"{k}={_fmt(v)}" for k, v in self.params.items()),
            "estimate": _fmt(self.estimate),
            "stderr": _fmt(self.stderr),
            "reference": _fmt(self.reference),
            "provenance": self.provenance,
            "threshold": _fmt(self.threshold),
            "sided": self.sided,
            "verdict": self.verdict,
        }


CSV_COLUMNS = ("kind", "name", "params", "estimate", "stderr", "reference", "provenance",
               "threshold", "sided", "verdict")


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


@dataclass(frozen=True, eq=False)
class Partial:
    config: ExperimentConfig
    lo: int
    hi: int
    data: dict


@dataclass(eq=False)
class ExperimentReport:
    config: ExperimentConfig
    cells: list
    generator: str
    merge_order: str = "per-trial arrays concatenated by trial range start; statistics after merging"
    runtime: float = field(default=0.0, compare=False)  # seconds; kept out of report files

    @property
    def passed(self):
        return all(c.verdict != "fail" for c in self.cells)

    @property
    def failing(self):
        return [c for c in self.cells if c.verdict == "fail"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for c in self.cells:
            w.writerow(c.row(self.config.kind))
        return buf.getvalue()

    def to_json(self) -> str:
        cfg = asdict(self.config)
        doc = {
            "config": cfg,
            "generator": self.generator,
            "merge_order": self.merge_order,
            "cells": [
                {**{k: v for k, v in asdict(c).items() if k != "override"},
                 "threshold": c.threshold, "verdict": c.verdict}
                for c in self.cells
            ],
            "passed": self.passed,
        }
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"

    def to_dat(self) -> str:
        """gnuplot-ready: index estimate stderr reference threshold, one line per cell."""
        out = [f"# {self.config.kind} seed {self.config.seed}", "# index estimate stderr reference threshold name"]
        for i, c in enumerate(self.cells):
            out.append(f"{i} {_fmt(c.estimate)} {_fmt(c.stderr)} {_fmt(c.reference)} {_fmt(c.threshold)} {c.name}")
        return "\n".join(out) + "\n"

    def summary_lines(self):
        return [
            f"{c.verdict.upper():4s} {self.config.kind}/{c.name}: estimate={c.estimate:.6g} "
            f"stderr={c.stderr:.3g} reference={c.reference:.6g} threshold={c.threshold:.3g}"
            for c in self.cells
        ]


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(type(o))


def report_stem(config: ExperimentConfig):
    return f"{config.kind}_seed{config.seed}"


def write_report(report: ExperimentReport, out_dir, fmt="csv"):
    """Write CSV and JSON (and a gnuplot .dat for fmt csv); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, report_stem(report.config))
    written = []
    items = [(".csv", report.to_csv()), (".json", report.to_json())]
    if fmt == "csv":
        items.append((".dat", report.to_dat()))
    for ext, text in items:
        with open(stem + ext, "w", newline="") as fh:
            fh.write(text)
        written.append(stem + ext)
    return written


# ---------------------------------------------------------------------------
# statistics helpers


def _mean(x):
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(x.tolist()) / x.size if x.size else float("nan")


def _se(x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        return float("nan")
    m = _mean(x)
    return math.sqrt(math.fsum(((x - m) ** 2).tolist()) / (x.size - 1) / x.size)


def _tv_counts(a, b, support):
    pa = np.array([_mean(a == k) for k in support])
    pb = np.array([_mean(b == k) for k in support])
    return 0.5 * math.fsum(np.abs(pa - pb).tolist()), pa, pb


# ---------------------------------------------------------------------------
# per-kind simulation (trial range) and summary (after merging)


def _lattice_steps(t, delta):
    return int(round(t / (delta * delta)))


def _counting_sites(law, a, b, delta):
    lo, hi = a * law.sigma / delta, b * law.sigma / delta
    first = math.floor(lo) + 1
    last = math.ceil(hi) - 1
    return np.arange(first, last + 1, dtype=np.int64)


def _counting_width(cfg, law, n, sites):
    need = max(int(math.ceil(10.0 * law.sigma * math.sqrt(n))), int(sites.size) + 1, 3)
    width = cfg.width or need
    if width <= sites.size:
        raise GuardError("the torus is narrower than the counting interval")
    density_guard(law, n, width, cfg.time_kind)
    return width


def _sim_counting(cfg, lo, hi):
    law = cfg.increment_law
    a, b = cfg.interval
    t = cfg.ts[0]
    out = {}
    for ci, delta in enumerate(cfg.deltas):
        n = _lattice_steps(t, delta) if cfg.time_kind == "discrete" else t / (delta * delta)
        sites = _counting_sites(law, a, b, delta)
        width = _counting_width(cfg, law, n, sites)
        _, ind = occupancy_trials(law, [n], width, hi - lo, cfg.seed, cfg.time_kind, sites, (ci,), lo)
        out[f"count{ci}"] = ind[:, 0, :].sum(axis=1).astype(np.int64)
    return out


def _sum_etahat(cfg, data):
    a, b = cfg.interval
    t = cfg.ts[0]
    ref = (b - a) / math.sqrt(math.pi * t)
    cells = []
    est = {}
    for ci, delta in enumerate(cfg.deltas):
        x = data[f"count{ci}"]
        est[delta] = (_mean(x), _se(x))
        cells.append(Cell(f"mean_etahat[delta={delta:g}]", dict(delta=delta, a=a, b=b, t=t, time_kind=cfg.time_kind),
                          est[delta][0], est[delta][1], ref, "limit (b-a)/sqrt(pi t); one-sided with 10% slack",
                          tolerance=0.10 * ref, sided="upper"))
    ds = sorted(cfg.deltas, reverse=True)
    for d1, d2 in zip(ds, ds[1:]):
        (m1, s1), (m2, s2) = est[d1], est[d2]
        cells.append(Cell(f"approach[delta={d2:g}<=delta={d1:g}]", dict(coarse=d1, fine=d2), m2 - m1,
                          math.hypot(s1, s2), 0.0, "monotone approach to the limit; 2 combined standard errors",
                          sided="upper", se_mult=2.0))
    return cells


def _sim_pointprocess(cfg, lo, hi):
    out = _sim_counting(cfg, lo, hi)
    a, b = cfg.interval
    t = cfg.ts[0]
    starts = _bm_starts(a, b, t)
    out["bm"] = np.array([
        bm_point_count(starts, t, cfg.grid_dt, key64(cfg.seed, 10 ** 6, k), a, b) for k in range(lo, hi)
    ], dtype=np.int64)
    return out


def _bm_starts(a, b, t):
    pad = BM_BUFFER * math.sqrt(t)
    xs = np.arange(math.floor((a - pad) / BM_SPACING), math.ceil((b + pad) / BM_SPACING) + 1) * BM_SPACING
    return [(float(x), 0.0) for x in np.round(xs, 12)]


def _sum_pointprocess(cfg, data):
    a, b = cfg.interval
    t = cfg.ts[0]
    scale = math.sqrt(math.pi * t) / (b - a)
    cells = []
    for ci, delta in enumerate(cfg.deltas):
        x = data[f"count{ci}"] * scale
        cells.append(Cell(f"intensity_sqrtpi[delta={delta:g}]", dict(delta=delta, a=a, b=b, t=t, time_kind=cfg.time_kind),
                          _mean(x), _se(x), 1.0, "point process intensity 1/sqrt(pi t)", tolerance=0.10))
    x = data["bm"] * scale
    cells.append(Cell("intensity_sqrtpi[coalescing_bm]", dict(grid_dt=cfg.grid_dt, spacing=BM_SPACING, a=a, b=b, t=t),
                      _mean(x), _se(x), 1.0, "coalescing Brownian motions, intensity 1/sqrt(pi t)", tolerance=0.05))
    return cells


def _sim_bm_reference(cfg, lo, hi):
    a, b = cfg.interval
    t = cfg.ts[0]
    starts = _bm_starts(a, b, t)
    out = {}
    for level in (0, 1):
        out[f"level{level}"] = np.array([
            bm_point_count(starts, t, cfg.grid_dt, key64(cfg.seed, 0, k), a, b, level) for k in range(lo, hi)
        ], dtype=np.int64)
    return out


def _sum_bm_reference(cfg, data):
    a, b = cfg.interval
    t = cfg.ts[0]
    scale = math.sqrt(math.pi * t) / (b - a)
    x0, x1 = data["level0"] * scale, data["level1"] * scale
    cells = []
    for lev, x in ((0, x0), (1, x1)):
        dt = cfg.grid_dt / 2 ** lev
        cells.append(Cell(f"intensity_sqrtpi[dt={dt:g}]", dict(grid_dt=dt, a=a, b=b, t=t, spacing=BM_SPACING),
                          _mean(x), _se(x), 1.0, "coalescing Brownian motions, intensity 1/sqrt(pi t)",
                          tolerance=0.05))
    cells.append(Cell("dt_halving_shift", dict(grid_dt=cfg.grid_dt), _mean(x1) - _mean(x0), _se(x0), 0.0,
                      "grid insensitivity: halving dt moves the estimate by < 1 standard error",
                      sided="two", se_mult=1.0))
    return cells


def _sim_density(cfg, lo, hi):
    law = cfg.increment_law
    for t in cfg.ts:
        if t > 0:
            density_guard(law, t, cfg.width, cfg.time_kind)
    ts = [t for t in cfg.ts]
    frac, _ = occupancy_trials(law, ts, cfg.width, hi - lo, cfg.seed, cfg.time_kind, (), (0,), lo)
    return {"frac": frac}


def _exact_density(law, width, t):
    """Exact p_t on the torus when enumeration is cheap, else None."""
    if int(t) != t or len(law.offsets) ** (width * int(t)) > 10 ** 6:
        return None
    return enumerate_exact(law, width, int(t)).single[0]


def _sum_density(cfg, data):
    law = cfg.increment_law
    cells = []
    for j, t in enumerate(cfg.ts):
        x = data["frac"][:, j]
        p = dict(t=t, width=cfg.width, time_kind=cfg.time_kind)
        exact = _exact_density(law, cfg.width, t) if cfg.time_kind == "discrete" else None
        if exact is not None:
            cells.append(Cell(f"density[t={t:g}]", {**p, "exact": str(exact)}, _mean(x), _se(x), float(exact),
                              "oracle:enumerate_exact", se_mult=4.0))
            continue
        c = law.sigma * math.sqrt(math.pi * t)
        cells.append(Cell(f"sigma_sqrt_pi_t_density[t={t:g}]", p, c * _mean(x), c * _se(x), 1.0,
                          "asymptotic density 1/(sigma sqrt(pi t))", tolerance=0.05))
    return cells


def _sim_none(cfg, lo, hi):
    return {}


def _sum_negcorr_exact(cfg, data):
    law = cfg.increment_law
    ex = enumerate_exact(law, cfg.width, cfg.steps)
    cells = []
    for x in range(cfg.width):
        for y in range(x + 1, cfg.width):
            cov = ex.covariance(x, y)
            cells.append(Cell(f"cov[{x},{y}]", dict(width=cfg.width, steps=cfg.steps, exact_margin=str(-cov)),
                              float(cov), 0.0, 0.0, "negative correlation; exact rational enumeration",
                              sided="upper", se_mult=0.0))
    return cells


def _negcorr_cells(cfg):
    rng = stream(cfg.seed, 2 ** 31)
    out = []
    while len(out) < cfg.cells:
        x, y = (int(v) for v in rng.integers(0, cfg.width, 2))
        t = int(rng.integers(1, cfg.steps + 1))
        if x != y:
            out.append((min(x, y), max(x, y), t))
    return out


def _sim_negcorr_mc(cfg, lo, hi):
    law = cfg.increment_law
    cells = _negcorr_cells(cfg)
    for _, _, t in cells:
        density_guard(law, t, cfg.width)
    times = sorted({t for _, _, t in cells})
    sites = sorted({s for x, y, _ in cells for s in (x, y)})
    _, ind = occupancy_trials(law, times, cfg.width, hi - lo, cfg.seed, "discrete", sites, (0,), lo)
    ix = np.stack([ind[:, times.index(t), sites.index(x)] for x, _, t in cells], axis=1)
    iy = np.stack([ind[:, times.index(t), sites.index(y)] for _, y, t in cells], axis=1)
    return {"ix": ix, "iy": iy}


def _sum_negcorr_mc(cfg, data):
    cells = []
    n = cfg.trials
    for c, (x, y, t) in enumerate(_negcorr_cells(cfg)):
        a = data["ix"][:, c].astype(float)
        b = data["iy"][:, c].astype(float)
        pa, pb, pab = _mean(a), _mean(b), _mean(a * b)
        psi = a * b - pb * a - pa * b
        cells.append(Cell(f"cov[x={x},y={y},t={t}]", dict(x=x, y=y, t=t, width=cfg.width), pab - pa * pb,
                          _se(psi) if n > 1 else float("nan"), 0.0,
                          "negative correlation: joint <= product", sided="upper"))
    return cells


def _sim_overshoot(cfg, lo, hi):
    law = cfg.increment_law.require()
    if cfg.start >= 0:
        raise GuardError("overshoot start must be negative")
    land = np.empty(hi - lo, dtype=np.int64)
    for k in range(lo, hi):
        land[k - lo] = K.first_passage(stream(cfg.seed, 0, k), cfg.start, cfg.cap, law.offsets_array, law.cdf)
    return {"land": land}


def _sum_overshoot(cfg, data):
    law = cfg.increment_law
    lad = ladder_exact(law)
    limit = overshoot_limit(law, lad)
    land = data["land"]
    ok = land[land >= 0]
    support = sorted(limit)
    n = ok.size
    p_hat = {k: _mean(ok == k) for k in support}
    tv = 0.5 * math.fsum(abs(p_hat[k] - limit[k]) for k in support)
    tv += 0.5 * _mean(~np.isin(ok, support)) if n else 0.0
    sgn = {k: np.sign(p_hat[k] - limit[k]) for k in support}
    psi = 0.5 * sum(sgn[k] * (ok == k) for k in support) if n else np.zeros(0)
    cells = [Cell("tv_to_limit", dict(start=cfg.start, cap=cfg.cap, resolved=int(n)), tv,
                  _se(psi) if n > 1 else float("nan"), 0.0, "renewal limit P[Z>=k+1]/E[Z] (exact ladder)",
                  tolerance=0.02, sided="upper")]
    for k in support:
        cells.append(Cell(f"p[{k}]", dict(k=k), p_hat[k], _se(ok == k) if n > 1 else float("nan"), limit[k],
                          "renewal limit P[Z>=k+1]/E[Z] (exact ladder)", sided="info"))
    cells.append(Cell("censored_fraction", dict(cap=cfg.cap), _mean(land < 0), _se(land < 0), 0.0,
                      "trials still below 0 after cap steps", sided="info"))
    exact = overshoot_from(law, -cfg.start, lad)
    keys = set(exact) | set(limit)
    cells.append(Cell("exact_start_tv_to_limit", dict(start=cfg.start),
                      0.5 * math.fsum(abs(exact.get(k, 0.0) - limit.get(k, 0.0)) for k in keys), 0.0, 0.0,
                      "renewal recursion from the start vs its limit", sided="info"))
    dp = ladder_distribution(law)
    cells.append(Cell("dp_ladder_tail_mass", dict(horizon=10_000, band=1_000), dp.tail_mass, 0.0, 0.0,
                      "mass of the truncated ladder dynamic program beyond its horizon", sided="info"))
    return cells


def _sim_interface(cfg, lo, hi):
    law = cfg.increment_law
    grid_end = max(_lattice_steps(1.0, d) for d in cfg.deltas) if cfg.deltas else 0
    ts_grid = np.arange(0, grid_end + 1, dtype=float)
    sample = np.union1d(ts_grid, np.asarray(cfg.ts, dtype=float))
    horizon = float(sample[-1])
    idx_t = np.searchsorted(sample, cfg.ts)
    n = hi - lo
    r = np.empty((n, len(cfg.ts)), dtype=np.int64)
    w = np.empty((n, len(cfg.ts)), dtype=np.int64)
    gap = np.empty((n, len(cfg.deltas)))
    r1 = np.empty((n, len(cfg.deltas)))
    reruns = np.empty(n, dtype=np.int64)
    for k in range(lo, hi):
        tr = interface_trace(law, horizon, sample, cfg.seed, cfg.time_kind, key=(0, k))
        r[k - lo] = tr.r[idx_t]
        w[k - lo] = (tr.r - tr.l)[idx_t]
        reruns[k - lo] = tr.reruns
        for j, d in enumerate(cfg.deltas):
            m = _lattice_steps(1.0, d)
            sub = replace(tr, times=tr.times[: m + 1], l=tr.l[: m + 1], r=tr.r[: m + 1])
            gap[k - lo, j] = boundary_paths(sub, d)[2]
            r1[k - lo, j] = tr.r[m] * d / law.sigma
    return {"r": r, "w": w, "gap": gap, "r1": r1, "reruns": reruns}


def _median_se(x):
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n < 4:
        return float("nan")
    h = math.sqrt(n) / 2
    lo, hi = int(max(0, math.floor(n / 2 - h))), int(min(n - 1, math.ceil(n / 2 + h)))
    return float((x[hi] - x[lo]) / 2)


def _sum_interface(cfg, data):
    law = cfg.increment_law
    asserted = cfg.time_kind == "continuous"
    side = "upper" if asserted else "info"
    cells = []
    n = cfg.trials
    for j, t in enumerate(cfg.ts):
        z = data["r"][:, j] / (law.sigma * math.sqrt(t))
        ks = float(stats.kstest(z, "norm").statistic)
        last = j == len(cfg.ts) - 1
        cells.append(Cell(f"ks_rightmost_one[t={t:g}]", dict(t=t, time_kind=cfg.time_kind), ks,
                          KOLMOGOROV_SD / math.sqrt(n), 0.0, "Gaussian limit of r_t/(sigma sqrt t)",
                          tolerance=0.05, sided=side if last else "info"))
    if len(cfg.ts) >= 2:
        a, b = data["w"][:, 0], data["w"][:, -1]
        support = np.union1d(a, b)
        tv, pa, pb = _tv_counts(a, b, support)
        s = np.sign(pa - pb)
        psi = 0.5 * (sum(s[i] * (a == k) for i, k in enumerate(support))
                     - sum(s[i] * (b == k) for i, k in enumerate(support)))
        cells.append(Cell(f"width_tv[t={cfg.ts[0]:g},t={cfg.ts[-1]:g}]", dict(t1=cfg.ts[0], t2=cfg.ts[-1]), tv,
                          _se(psi), 0.0, "stationary interface width law", tolerance=0.05, sided=side))
        rng = stream(cfg.seed, 2 ** 31)
        pooled = np.concatenate([a, b])
        null = []
        for _ in range(20):
            perm = rng.permutation(pooled)
            null.append(_tv_counts(perm[: a.size], perm[a.size:], support)[0])
        cells.append(Cell("width_tv_noise_floor", dict(permutations=20), _mean(null), _se(null), 0.0,
                          "mean histogram distance between random halves of the pooled widths", sided="info"))
    for j, d in enumerate(cfg.deltas):
        g = data["gap"][:, j]
        cells.append(Cell(f"median_boundary_gap[delta={d:g}]", dict(delta=d, horizon=_lattice_steps(1.0, d)),
                          float(np.median(g)), _median_se(g), 0.0,
                          "rescaled boundaries share one Brownian limit", tolerance=0.05, sided=side))
        v = data["r1"][:, j]
        m = _mean(v)
        var = _mean((v - m) ** 2) * n / max(n - 1, 1)
        se = _se((v - m) ** 2)
        cells.append(Cell(f"var_rescaled_r[delta={d:g},t=1]", dict(delta=d), var, se, 1.0,
                          "standard Brownian limit of the rescaled boundary", tolerance=0.10,
                          sided="two" if asserted else "info"))
    cells.append(Cell("band_reruns", {}, _mean(data["reruns"]), 0.0, 0.0,
                      "runs repeated with a doubled band after contamination", sided="info"))
    return cells


def _fg_trial(law, deltas, starts, seed, k, kind):
    out = np.empty(len(deltas))
    out_d = np.empty(len(deltas))
    unresolved = np.zeros(len(deltas), dtype=bool)
    for ci, delta in enumerate(deltas):
        rng = stream(seed, ci, k)
        base = _lattice_steps(1.0, delta)
        H = base
        inc = np.stack([law.sample(rng, H) for _ in starts])
        for dbl in range(FG_DOUBLINGS + 1):
            fam, _ = lattice_family(law, starts, H, increments=inc, kind=kind)
            if _f_resolved(fam):
                break
            if dbl == FG_DOUBLINGS:
                unresolved[ci] = True
                break
            more = np.stack([law.sample(rng, H) for _ in starts])
            inc = np.concatenate([inc, more], axis=1)
            H *= 2
        scaled = fam.rescaled(delta, law.sigma)
        out[ci] = fg_distance(scaled)
        out_d[ci] = fg_distance(scaled, metric="d", grid=FG_GRID)
    return out, out_d, unresolved


def _f_resolved(fam):
    """f has merged every path by the horizon (so g has too)."""
    _, state = apply_f(fam)
    return len(set(state.representative)) == 1


def _sim_fg(cfg, lo, hi):
    law = cfg.increment_law.require()
    if cfg.time_kind != "discrete":
        raise GuardError("f-vs-g comparison is implemented for discrete-time walks")
    if cfg.m < 2:
        raise GuardError("f-vs-g comparison needs m >= 2")
    starts = [(i, 0) for i in range(cfg.m)]
    d = np.empty((hi - lo, len(cfg.deltas)))
    dc = np.empty((hi - lo, len(cfg.deltas)))
    un = np.empty((hi - lo, len(cfg.deltas)), dtype=bool)
    for k in range(lo, hi):
        d[k - lo], dc[k - lo], un[k - lo] = _fg_trial(law, cfg.deltas, starts, cfg.seed, k, "lattice-interpolated")
    return {"dist": d, "dist_compact": dc, "unresolved": un}


def _sum_fg(cfg, data):
    cells = []
    probs = []
    for ci, delta in enumerate(cfg.deltas):
        x = data["dist"][:, ci] > cfg.eps
        p, se = _mean(x), _se(x)
        probs.append(p)
        cells.append(Cell(f"p_fg_exceeds[delta={delta:g}]", dict(delta=delta, eps=cfg.eps, m=cfg.m), p, se, 0.0,
                          "f and g coalescence agree in the limit", sided="info"))
        y = data["dist_compact"][:, ci] > cfg.eps
        cells.append(Cell(f"p_fg_exceeds_compactified[delta={delta:g}]", dict(delta=delta, eps=cfg.eps, grid=FG_GRID),
                          _mean(y), _se(y), 0.0, "same event under the compactified path distance", sided="info"))
        cells.append(Cell(f"unresolved[delta={delta:g}]", dict(delta=delta, doublings=FG_DOUBLINGS),
                          _mean(data["unresolved"][:, ci]), 0.0, 0.0,
                          "trials where f had not merged by the capped horizon", sided="info"))
    order = np.argsort(cfg.deltas)[::-1]
    ps = [probs[i] for i in order]
    if len(ps) >= 2:
        cells.append(Cell("strictly_decreasing", dict(deltas=" ".join(f"{cfg.deltas[i]:g}" for i in order)),
                          max(b - a for a, b in zip(ps, ps[1:])), 0.0, 0.0,
                          "decay of P(fg distance > eps) as delta decreases", sided="strict", se_mult=0.0))
    i = order[-1]
    x = data["dist"][:, i] > cfg.eps
    cells.append(Cell(f"p_fg_exceeds_below_0.1[delta={cfg.deltas[i]:g}]", dict(delta=cfg.deltas[i], eps=cfg.eps),
                      probs[i], _se(x), 0.10, "f and g coalescence agree in the limit", sided="upper"))
    return cells


def _tightness_geometry(law, delta, t, u):
    s = law.sigma
    T = max(1, _lattice_steps(t, delta))
    u_lat = u * s / delta
    wide = 17 * u * s / delta
    pad = int(math.ceil(wide + 6 * s * math.sqrt(2 * T))) + law.max_abs
    return T, u_lat, wide, pad


def _sim_tightness(cfg, lo, hi):
    law = cfg.increment_law.require()
    if cfg.u <= 0:
        raise GuardError("probe u must be positive")
    pairs = [(d, t) for d in cfg.deltas for t in cfg.ts]
    ev = np.zeros((hi - lo, len(pairs)), dtype=bool)
    bad = np.zeros((hi - lo, len(pairs)), dtype=bool)
    for ci, (d, t) in enumerate(pairs):
        T, u_lat, wide, pad = _tightness_geometry(law, d, t, cfg.u)
        for k in range(lo, hi):
            rng = stream(cfg.seed, ci, k)
            field_ = law.sample(rng, (2 * T, 2 * pad + 1))
            p, m, b = K.tightness_lattice(field_, -pad, u_lat, T, wide)
            ev[k - lo, ci] = p or m
            bad[k - lo, ci] = b
    return {"event": ev, "contaminated": bad}


def _sum_tightness(cfg, data):
    cells = []
    pairs = [(d, t) for d in cfg.deltas for t in cfg.ts]
    for ci, (d, t) in enumerate(pairs):
        x = data["event"][:, ci]
        cells.append(Cell(f"g_tilde[delta={d:g},t={t:g}]", dict(delta=d, t=t, u=cfg.u), _mean(x) / t, _se(x) / t,
                          0.0, "tightness functional mu(A_{t,u})/t; only a blowup fails", sided="finite"))
        cells.append(Cell(f"contaminated[delta={d:g},t={t:g}]", dict(delta=d, t=t),
                          _mean(data["contaminated"][:, ci]), 0.0, 0.0, "band edge reached", sided="info"))
    return cells


def _sim_hitting(cfg, lo, hi):
    law = cfg.increment_law
    tmax = max(cfg.ts)
    tau = np.empty(hi - lo)
    if cfg.time_kind == "continuous":
        law.require(continuous=True)
        for k in range(lo, hi):
            tau[k - lo] = K.meet_continuous(stream(cfg.seed, 0, k), 1, tmax, law.offsets_array, law.cdf)
    else:
        law.require()
        for k in range(lo, hi):
            v = K.meet_discrete(stream(cfg.seed, 0, k), 1, int(tmax), law.offsets_array, law.cdf)
            tau[k - lo] = np.inf if v > tmax else v
    return {"tau": tau}


def _sum_hitting(cfg, data):
    tau = data["tau"]
    ts = sorted(cfg.ts)
    cells = []
    ind = {t: (tau > t).astype(float) for t in ts}
    for t in ts:
        x = math.sqrt(t) * ind[t]
        cells.append(Cell(f"sqrt_t_survival[t={t:g}]", dict(t=t, time_kind=cfg.time_kind), _mean(x), _se(x), 0.0,
                          "meeting-time tail C/sqrt(t); constant not asserted", sided="info"))
    for t1, t2 in zip(ts, ts[1:]):
        p1, p2 = _mean(ind[t1]), _mean(ind[t2])
        c = math.sqrt(t2 / t1)
        if p1 == 0:
            cells.append(Cell(f"ratio[t={t2:g}/t={t1:g}]", dict(t1=t1, t2=t2), float("nan"), float("nan"), 1.0,
                              "scale-free tail: successive ratios of sqrt(t) P(tau>t)", tolerance=0.15))
            continue
        ratio = c * p2 / p1
        psi = c * (ind[t2] / p1 - p2 * ind[t1] / p1 ** 2)
        cells.append(Cell(f"ratio[t={t2:g}/t={t1:g}]", dict(t1=t1, t2=t2), ratio, _se(psi), 1.0,
                          "scale-free tail: successive ratios of sqrt(t) P(tau>t)", tolerance=0.15))
    return cells


KIND_TABLE = {
    "density_scan": (_sim_density, _sum_density),
    "etahat": (_sim_counting, _sum_etahat),
    "pointprocess": (_sim_pointprocess, _sum_pointprocess),
    "negcorr_exact": (_sim_none, _sum_negcorr_exact),
    "negcorr_mc": (_sim_negcorr_mc, _sum_negcorr_mc),
    "overshoot": (_sim_overshoot, _sum_overshoot),
    "interface_clt": (_sim_interface, _sum_interface),
    "fg_convergence": (_sim_fg, _sum_fg),
    "tightness_scan": (_sim_tightness, _sum_tightness),
    "hitting_tail": (_sim_hitting, _sum_hitting),
    "bm_reference": (_sim_bm_reference, _sum_bm_reference),
}


# ---------------------------------------------------------------------------
# driver


def run_partial(config: ExperimentConfig, lo: int, hi: int) -> Partial:
    if not 0 <= lo < hi <= config.trials:
        raise GuardError(f"trial range [{lo}, {hi}) outside [0, {config.trials})")
    sim, _ = KIND_TABLE[config.kind]
    try:
        data = sim(config, lo, hi)
    except GuardError as e:
        raise GuardError(f"{config.kind}: {e}") from e
    return Partial(config, lo, hi, data)


def merge(partials) -> ExperimentReport:
    """Combine partial runs over disjoint contiguous ranges covering all trials."""
    partials = sorted(partials, key=lambda p: p.lo)
    if not partials:
        raise GuardError("nothing to merge")
    cfg = partials[0].config
    pos = 0
    for p in partials:
        if p.config != cfg:
            raise GuardError("partials come from different configs")
        if p.lo != pos:
            raise GuardError(f"trial ranges overlap or leave a gap at {pos}")
        pos = p.hi
    if pos != cfg.trials:
        raise GuardError(f"trial ranges stop at {pos}, not {cfg.trials}")
    keys = partials[0].data.keys()
    data = {k: np.concatenate([p.data[k] for p in partials]) for k in keys}
    _, summarize = KIND_TABLE[cfg.kind]
    cells = summarize(cfg, data)
    if cfg.tolerance is not None:
        cells = [replace(c, override=cfg.tolerance) for c in cells]
    gen = GENERATOR_ID
    if cfg.kind in ("pointprocess", "bm_reference"):
        gen = f"{GENERATOR_ID}; {COUNTER_ID}"
    return ExperimentReport(cfg, cells, gen)


def split(trials, workers):
    workers = max(1, min(int(workers), trials))
    edges = [trials * i // workers for i in range(workers + 1)]
    return [(a, b) for a, b in zip(edges, edges[1:]) if b > a]


def _run_range(args):
    cfg, lo, hi = args
    return run_partial(cfg, lo, hi)


def run(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run all trials (in `workers` processes) and merge in trial order."""
    t0 = time.perf_counter()
    ranges = split(config.trials, workers)
    if len(ranges) == 1:
        parts = [run_partial(config, *ranges[0])]
    else:
        with ProcessPoolExecutor(len(ranges), mp_context=mp.get_context("fork")) as ex:
            parts = list(ex.map(_run_range, [(config, a, b) for a, b in ranges]))
    report = merge(parts)
    report.runtime = time.perf_counter() - t0
    return report
