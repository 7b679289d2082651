"""Experiment drivers behind the command-line interface.

Each ``cmd_*`` function takes an :class:`ExperimentSpec`, returns a dict
with ``rows`` (curve or table data) and ``summary`` (headline numbers), and
writes CSV/JSON files (plus PNG figures) when ``spec.out`` is set.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, replace
import json
import math
import os
from pathlib import Path
from typing import Optional

import numpy as np

from . import certificates, fastpath, problems, schedules, solvers
from .oracles import L1Norm

WEIGHT_SCHEDULES = ("uniform", "linear", "poly2", "poly3", "poly4", "optimized")
SIGMAS = (0.0, 1e-4, 1e-3, 1e-2, 2e-2, 5e-2)
TABLE1_CRITERIA = ("pbar", "pbar+d", "delta", "delta+d", "p", "p+d", "d")
THREADS_ENV = "PDSUBGRAD_THREADS"

# published reference values, printed next to regenerated ones
PUBLISHED_TABLE1 = {
    "pbar": (1204821, 1940, 997, 1331, 1664, 4122),
    "pbar+d": (1204821, 2000, 1223, 1630, 2038, 4156),
    "delta": (237426, 443222, 664834, 886445, 1108056, 533876),
    "delta+d": (237428, 443223, 664835, 886446, 1108058, 533876),
    "p": (4713468, 886456, 997251, 1181927, 1385070, 1067789),
    "p+d": (4713468, 886456, 997252, 1181928, 1385071, 1067790),
    "d": (263, 470, 705, 941, 1176, 509),
}
PUBLISHED_TABLE2 = {
    0.0: (4.0, 6, 1.472e5),
    1e-4: (4.022, 7, 1.497e5),
    1e-3: (4.224, 7, 1.735e5),
    1e-2: (6.911, 12, 6.985e5),
    2e-2: (12.107, 23, 3.770e6),
    5e-2: (81.179, 161, 2.663e23),
}


@dataclass
class ExperimentSpec:
    experiment: str
    n: int = 100
    m: Optional[int] = None
    sigma: float = 0.0
    sigmas: tuple = SIGMAS
    seed: int = 0
    schedules: tuple = WEIGHT_SCHEDULES
    T: Optional[int] = None
    eps: float = 0.05
    replicates: int = 1
    beta_bars: tuple = (0.0, 1.0, 10.0)
    max_iter: int = 10**7
    out: Optional[str] = None
    plot: bool = True
    load_instance: Optional[str] = None
    dump_instance: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @property
    def rows(self):
        return self.m if self.m is not None else self.n

    def to_dict(self):
        d = asdict(self)
        d["sigmas"] = list(self.sigmas)
        d["schedules"] = list(self.schedules)
        d["beta_bars"] = list(self.beta_bars)
        return d


# -- utilities -------------------------------------------------------------------

def worker_count():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    """Ordered map, in worker processes when ``PDSUBGRAD_THREADS > 1``."""
    items = list(items)
    k = worker_count()
    if k == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(k, len(items))) as ex:
        return list(ex.map(fn, items))


def write_csv(path, rows, columns=None):
    cols = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_cell(r.get(c)) for c in cols])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, np.integer):
        return int(o)
    return o


def _outdir(spec):
    if spec.out is None:
        return None
    p = Path(spec.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _maybe_plot(spec, name, *args):
    out = _outdir(spec)
    if out is None or not spec.plot:
        return None
    from . import plotting

    path = out / f"{name}.png"
    getattr(plotting, f"plot_{name}")(*args, path=path)
    return str(path)


def l1ls_instance(spec, sigma=None):
    if spec.load_instance:
        inst = problems.load_instance(spec.load_instance)
    else:
        inst = problems.gen_l1_ls(spec.rows, spec.n, spec.sigma if sigma is None else sigma, spec.seed)
    if spec.dump_instance:
        problems.dump_instance(inst, spec.dump_instance)
    return inst


def _cell_spec(spec):
    """Dump the instance once up front; worker cells must not rewrite it."""
    if spec.dump_instance:
        l1ls_instance(spec)
    return replace(spec, dump_instance=None)


# -- figure 1: schedules vs bound ----------------------------------------------------

def _fig1_cell(args):
    spec, name = args
    inst = l1ls_instance(spec)
    sch = schedules.parse_name(name, inst.mu, inst.L1)
    T = spec.T or 10_000
    log = solvers.run(inst, sch, "primal", T=T, log_every=solvers.geometric_cadence)
    rows = []
    for r in log.records:
        if r["thm2_lhs"] is None:
            continue
        rows.append({"schedule": name, "t": r["t"], "aggregate": r["thm2_lhs"],
                     "primal_gap": r["primal_gap"], "dual_gap": r["d"], "dist2": r["dist2"],
                     "thm2_rhs": r["thm2_rhs"]})
    return rows


def cmd_fig1(spec):
    """Observed aggregate measure against the rate bound for each weight schedule."""
    cells = pmap(_fig1_cell, [(_cell_spec(spec), s) for s in spec.schedules])
    rows = [r for cell in cells for r in cell]
    final = {}
    for r in rows:
        final[r["schedule"]] = r
    violations = sum(1 for r in rows if r["aggregate"] > r["thm2_rhs"] * (1 + 1e-9))
    summary = {
        "final": {k: {c: v[c] for c in ("t", "aggregate", "primal_gap", "dual_gap", "dist2", "thm2_rhs")}
                  for k, v in final.items()},
        "bound_violations": violations,
    }
    out = _outdir(spec)
    if out is not None:
        write_csv(out / "fig1.csv", rows,
                  ["schedule", "t", "aggregate", "primal_gap", "dual_gap", "dist2", "thm2_rhs"])
        write_json(out / "fig1_summary.json", summary)
    summary["figure"] = _maybe_plot(spec, "fig1", rows)
    return {"rows": rows, "summary": summary}


# -- table 1: stopping times -------------------------------------------------------

def stopping_times_reference(instance, schedule, eps, max_iter):
    """Hitting times from the general solver (slow; used off the fast path)."""
    st = solvers.init_state(instance, schedule, "primal")
    hit = {c: None for c in TABLE1_CRITERIA}
    for t in range(max_iter + 1):
        rep = certificates.gaps(st, instance)
        for c in TABLE1_CRITERIA:
            if hit[c] is None:
                v = rep.combination(c)
                if v is not None and v <= eps:
                    hit[c] = t
        if all(v is not None for v in hit.values()) or t == max_iter:
            break
        solvers.primal_step(st, instance)
    hit["gap"] = hit["p+d"]
    return hit


def _table1_cell(args):
    spec, name = args
    inst = l1ls_instance(spec)
    sch = schedules.parse_name(name, inst.mu, inst.L1)
    cap = spec.T or spec.max_iter
    if fastpath.supported(inst):
        return fastpath.stopping_times(inst, sch, spec.eps, max_iter=cap)
    return stopping_times_reference(inst, sch, spec.eps, cap)


def table1_ratios(times):
    """Headline comparisons between hitting times of one schedule."""
    def diff(a, b):
        return None if times[a] is None or times[b] is None else times[a] - times[b]

    def ratio(a, b):
        if times[a] is None or times[b] is None or times[b] == 0:
            return None
        return times[a] / times[b]

    return {
        "delta+d_minus_delta": diff("delta+d", "delta"),
        "p+d_minus_p": diff("p+d", "p"),
        "pbar+d_over_pbar": ratio("pbar+d", "pbar"),
        "p_over_d": ratio("p", "d"),
    }


def cmd_table1(spec):
    """First iteration at which each stopping quantity drops below ``eps``."""
    results = pmap(_table1_cell, [(_cell_spec(spec), s) for s in spec.schedules])
    rows = []
    for crit in TABLE1_CRITERIA:
        row = {"criterion": crit}
        for name, times in zip(spec.schedules, results):
            row[name] = times[crit]
            if name in WEIGHT_SCHEDULES and spec.eps == 0.05 and spec.n == 100:
                row[f"{name}_published"] = PUBLISHED_TABLE1[crit][WEIGHT_SCHEDULES.index(name)]
        rows.append(row)
    summary = {
        "eps": spec.eps,
        "cap": spec.T or spec.max_iter,
        "times": {name: times for name, times in zip(spec.schedules, results)},
        "ratios": {name: table1_ratios(times) for name, times in zip(spec.schedules, results)},
        "censored": sorted({f"{n}:{c}" for n, t in zip(spec.schedules, results)
                            for c, v in t.items() if v is None}),
    }
    out = _outdir(spec)
    if out is not None:
        write_csv(out / "table1.csv", rows)
        write_json(out / "table1_summary.json", summary)
    return {"rows": rows, "summary": summary}


# -- table 2 / figures 2-3: early divergence ------------------------------------------

def _divergence_cell(args):
    spec, sigma, kind = args
    inst = l1ls_instance(spec, sigma)
    if kind == "capped":
        sch = schedules.capped(inst.mu, inst.L1)
    else:
        sch = schedules.linear(inst.mu)
    T0 = sch.t0(inst.L1)
    T = max(spec.T or 10_000, (T0 or 0) + 2)
    log = solvers.run(inst, sch, "primal", T=T, log_every=solvers.geometric_cadence)
    rows = []
    for r in log.records:
        rows.append({"sigma": sigma, "schedule": kind, "t": r["t"], "p": r["p"], "pbar": r["pbar"],
                     "delta": r["delta"], "d": r["d"], "dist2": r["dist2"], "x_norm": r["x_norm"]})
    st = log.state
    if spec.replicates > 1 and inst.noise_std > 0:
        est = solvers.replicate_divergence_constants(inst, sch, spec.replicates, spec.seed)
        c0, log10_c0, se = est["C0"], est["log10_C0"], est["C0_stderr"]
    else:
        c0 = st.c0.value * math.exp(st.log_scale) if st.c0.sign else 0.0
        log10_c0 = (st.c0.log10 + st.log_scale / math.log(10.0)) if st.c0.sign else -math.inf
        se = 0.0
    peak = max(r["x_norm"] for r in log.records)
    peak_t = max(log.records, key=lambda r: r["x_norm"])["t"]
    summary = {"sigma": sigma, "schedule": kind, "L1_over_mu": inst.L1 / inst.mu, "T0": T0,
               "T0_seen": st.t0_seen, "C0": c0, "log10_C0": log10_c0, "C0_stderr": se,
               "peak_norm": peak, "peak_t": peak_t, "x0_dist": float(np.linalg.norm(inst.x0 - inst.x_opt)),
               "diverged": log.divergence is not None}
    return rows, summary


def cmd_divergence(spec):
    """Conditioning sweep: ``T0``, ``C0`` and trajectories with and without capping."""
    cells = pmap(_divergence_cell, [(replace(spec, dump_instance=None), s, k) for s in spec.sigmas for k in ("linear", "capped")])
    rows = [r for cell, _ in cells for r in cell]
    per = {}
    for _, s in cells:
        per.setdefault(s["sigma"], {})[s["schedule"]] = s
    table = []
    for sigma in spec.sigmas:
        lin, cap = per[sigma]["linear"], per[sigma]["capped"]
        row = {"sigma": sigma, "L1_over_mu": lin["L1_over_mu"], "T0": lin["T0"], "C0": lin["C0"],
               "log10_C0": lin["log10_C0"], "peak_norm": lin["peak_norm"],
               "capped_T0": cap["T0"], "capped_C0": cap["C0"], "capped_peak_norm": cap["peak_norm"],
               "x0_dist": lin["x0_dist"]}
        if sigma in PUBLISHED_TABLE2 and spec.n == 100:
            row["published_L1_over_mu"], row["published_T0"], row["published_C0"] = PUBLISHED_TABLE2[sigma]
        table.append(row)
    summary = {"table": table, "cells": [s for _, s in cells]}
    out = _outdir(spec)
    if out is not None:
        write_csv(out / "table2.csv", table)
        write_csv(out / "divergence_trajectories.csv", rows,
                  ["sigma", "schedule", "t", "p", "pbar", "delta", "d", "dist2", "x_norm"])
        write_json(out / "table2_summary.json", summary)
    summary["figures"] = [_maybe_plot(spec, "divergence", rows)]
    return {"rows": table, "trajectories": rows, "summary": summary}


# -- toy example ----------------------------------------------------------------------

def cmd_toy(spec):
    """The 2-D quadratic that diverges for about 100 steps under ``alpha_k = 2/(k+2)``."""
    inst = problems.toy_divergent()
    sch = schedules.linear(inst.mu)
    T = spec.T or 2000
    log = solvers.run(inst, sch, "primal", T=T, log_every=1, keep_iterates=True)
    rows = []
    for r in log.records:
        u, v = r["x"]
        rows.append({"t": r["t"], "u": u, "v": v, "norm": r["x_norm"], "f": r["last_value"]})
    norms = np.array([r["norm"] for r in rows])
    fvals = np.array([r["f"] for r in rows])
    peak = int(np.argmax(norms))
    after = 100 if len(rows) > 101 else peak
    mono = bool(np.all(np.diff(fvals[after:]) <= 0))
    st = log.state
    T0 = sch.t0(inst.L1)
    summary = {"norm_x100": float(norms[100]) if len(norms) > 100 else None,
               "log10_norm_x100": math.log10(norms[100]) if len(norms) > 100 else None,
               "peak_t": peak, "peak_norm": float(norms[peak]),
               "monotone_f_after_100": mono, "T0": T0, "T0_seen": st.t0_seen,
               "log10_C0": st.c0.log10 + st.log_scale / math.log(10.0) if st.c0.sign else None}
    out = _outdir(spec)
    if out is not None:
        write_csv(out / "toy.csv", rows, ["t", "u", "v", "norm", "f"])
        write_json(out / "toy_summary.json", summary)
    summary["figure"] = _maybe_plot(spec, "toy", rows)
    return {"rows": rows, "summary": summary}


# -- primal/dual equivalence -------------------------------------------------------------

EQUIV_SCHEDULES = ("uniform", "linear", "poly2", "poly3", "optimized")


def equivalence_family(name, seed=0, n=20):
    if name == "quadratic":
        # mild conditioning keeps early iterates small; see peak_norm in RunLog
        return problems.gen_quadratic(min(n, 10), seed, L=4.0)
    if name == "l1ls":
        return problems.gen_l1_ls(n, n, 0.02, seed)
    if name == "l1ls_prox":
        base = problems.gen_l1_ls(n, n, 0.02, seed)
        return solvers.ProblemInstance(objective=base.objective, x0=base.x0, mu=base.mu,
                                       reg=L1Norm(0.5), name=f"{base.name}+l1")
    if name == "constrained":
        return problems.gen_constrained(2, 2, seed)
    raise ValueError(f"unknown family {name!r}")


EQUIV_FAMILIES = ("quadratic", "l1ls", "l1ls_prox", "constrained")


def _equiv_cell(args):
    fam, name, bb, seed, T, n = args
    inst = equivalence_family(fam, seed, n)
    sch = schedules.parse_name(name, inst.mu, inst.L1, beta_bar=bb)
    log = solvers.run(inst, sch, "both", T=T, log_every=T)
    return {"family": fam, "schedule": name, "beta_bar": bb, "T": T, "max_deviation": log.max_deviation}


def cmd_equivalence(spec):
    """Largest relative gap between primal and dual iterates over a grid of settings."""
    T = spec.T or 1000
    n = min(spec.n, 20)
    cells = [(f, s, bb, spec.seed, T, n) for f in EQUIV_FAMILIES for s in spec.extra.get(
        "schedules", EQUIV_SCHEDULES) for bb in spec.beta_bars]
    rows = pmap(_equiv_cell, cells)
    worst = max(r["max_deviation"] for r in rows)
    summary = {"max_deviation": worst, "cells": len(rows), "T": T}
    out = _outdir(spec)
    if out is not None:
        write_csv(out / "equivalence.csv", rows, ["family", "schedule", "beta_bar", "T", "max_deviation"])
        write_json(out / "equivalence_summary.json", summary)
    return {"rows": rows, "summary": summary}


# -- custom runs ---------------------------------------------------------------------------

def instance_from_config(cfg):
    """``{"family": "l1ls" | "toy" | "constrained" | "quadratic", ...}`` or ``{"path": ...}``."""
    if "path" in cfg:
        return problems.load_instance(cfg["path"])
    fam = cfg.get("family", "l1ls")
    if fam == "l1ls":
        return problems.gen_l1_ls(cfg.get("m", cfg.get("n", 100)), cfg.get("n", 100), cfg.get("sigma", 0.0),
                                  cfg.get("seed", 0), smooth=cfg.get("smooth", False),
                                  noise_std=cfg.get("noise_std", 0.0))
    if fam == "toy":
        return problems.toy_divergent()
    if fam == "constrained":
        return problems.gen_constrained(cfg.get("n", 2), cfg.get("m", 2), cfg.get("seed", 0))
    if fam == "quadratic":
        return problems.gen_quadratic(cfg.get("n", 10), cfg.get("seed", 0))
    raise ValueError(f"unknown instance family {fam!r}")


def cmd_run(config, out=None, plot=True):
    """Run one configured solve and write its log.

    ``config`` holds ``instance``, ``schedule``, ``method``, ``T``, ``seed``
    and optionally ``stop = {"criterion", "eps", "every"}`` and ``log_every``.
    """
    inst = instance_from_config(config.get("instance", {}))
    sch = schedules.from_config(config.get("schedule", {"kind": "linear"}), inst.mu, inst.L1)
    stop = None
    if config.get("stop"):
        s = config["stop"]
        stop = certificates.stopping(s["criterion"], s.get("eps", 0.05), s.get("every", 1))
    log = solvers.run(inst, sch, config.get("method", "primal"), T=config.get("T", 1000), stop=stop,
                      seed=config.get("seed", 0), log_every=config.get("log_every"),
                      debug=config.get("debug", False))
    summary = log.summary()
    summary["config"] = config
    if out is not None:
        p = Path(out)
        p.mkdir(parents=True, exist_ok=True)
        log.to_jsonl(p / "run.jsonl")
        log.to_csv(p / "run.csv")
        write_json(p / "run_summary.json", summary)
        if plot:
            from . import plotting

            summary["figure"] = str(p / "run.png")
            plotting.plot_run(log.records, path=p / "run.png")
    return {"log": log, "summary": summary}
