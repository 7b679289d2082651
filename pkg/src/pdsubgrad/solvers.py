"""Switching proximal subgradient method and its dual-averaging twin.

The primal method steps

    x_{k+1} = prox_{alpha_k, r}(x_k - alpha_k g_0(x_k))   if x_k is feasible
    x_{k+1} = x_k - alpha_k g_{s(x_k)}(x_k)                 otherwise,

while the dual method minimizes the running aggregate of weighted lower
bounds. With ``alpha_k = lambda_k / (mu sum_{i<=k} lambda_i + beta_bar)``
both produce the same iterates; :func:`run` with ``method="both"`` checks it.
"""

from dataclasses import dataclass, field
import csv
import json
import math
from typing import Callable, Optional

import numpy as np

from . import certificates
from ._numerics import CompensatedSum, SignedLogSum, norm2
from .model_algebra import (
    QuadraticModel,
    append_model_term,
    minimize_with_prox,
    stationarity_subgradient,
)
from .oracles import Function, Regularizer, Zero

DIVERGENCE_NORM = 1e300
_RESCALE_AT = 1e100


class DivergenceError(FloatingPointError):
    """Raised when an iterate leaves the representable range."""

    def __init__(self, report):
        super().__init__(f"iterate diverged at k={report['k']}")
        self.report = report


@dataclass
class ProblemInstance:
    """``min f_0(x) + r(x)  s.t.  f_s(x) <= 0`` with reference data.

    Only ``objective``, ``x0`` and ``mu`` are required to run the solvers.
    The optional references (``x_opt``, ``x_sl``, ``p_star``, constants) feed
    the certificates and the theoretical bounds.
    """

    objective: Function
    x0: np.ndarray
    mu: float
    constraints: tuple = ()
    reg: Regularizer = field(default_factory=Zero)
    noise_std: float = 0.0
    x_opt: Optional[np.ndarray] = None
    x_sl: Optional[np.ndarray] = None
    p_star: Optional[float] = None
    n_opt: Optional[np.ndarray] = None
    n_sl: Optional[np.ndarray] = None
    L0_sq: Optional[float] = None
    L1: Optional[float] = None
    M: Optional[float] = None
    L: Optional[float] = None
    sigma_sq: Optional[float] = None
    h_gap_sl: Optional[float] = None
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.constraints = tuple(self.constraints)
        if self.noise_std > 0 and self.constraints:
            # constraint oracles stay exact; only the objective is noisy
            pass

    @property
    def n(self):
        return self.x0.size

    @property
    def m(self):
        return len(self.constraints)

    def objective_value(self, x):
        return self.objective.value(x) + self.reg.value(x)

    def constraint_values(self, x):
        return np.array([c.value(x) for c in self.constraints])

    @property
    def tau_sl(self):
        if self.x_sl is None or not self.constraints:
            return None
        return -float(self.constraint_values(self.x_sl).max())

    def reference(self, which):
        """``(y, n_y)`` for ``which in {"opt", "sl"}``; x_SL defaults to x_OPT when m = 0."""
        if which == "opt":
            y, ny = self.x_opt, self.n_opt
        else:
            y, ny = self.x_sl, self.n_sl
            if y is None and self.m == 0:
                y, ny = self.x_opt, self.n_opt
        if y is None:
            return None, None
        return y, (np.zeros_like(y) if ny is None else ny)


def switching_select(x, instance):
    """0 if every constraint satisfies ``f_s(x) <= 0``, else the first violated index (1-based)."""
    for s, c in enumerate(instance.constraints, start=1):
        if c.value(x) > 0.0:
            return s
    return 0


@dataclass
class StepInfo:
    k: int
    s: int
    alpha: float
    weight: float
    f_value: float
    g: np.ndarray
    x: np.ndarray
    x_next: np.ndarray
    n_next: Optional[np.ndarray]
    delta_opt: Optional[float] = None
    delta_sl: Optional[float] = None
    stationarity_residual: Optional[float] = None


class SolverState:
    """Mutable per-run state shared by the primal and dual steps.

    All weight-carrying accumulators are stored divided by
    ``exp(log_scale)``; the scale is bumped whenever the total weight gets
    large so exponentially growing weights stay in range. Every reported
    certificate is a ratio and therefore scale free.
    """

    def __init__(self, instance, schedule, method="primal", seed=0, track=True, debug=False):
        if method not in ("primal", "dual"):
            raise ValueError(f"unknown method {method!r}")
        if method == "dual" and not track:
            raise ValueError("the dual method needs its model")
        if schedule.mu > instance.mu * (1 + 1e-12):
            raise ValueError("schedule mu exceeds the instance's strong convexity modulus")
        self.method = method
        self.mu = schedule.mu
        self.beta_bar = schedule.beta_bar
        self.schedule = schedule
        self.cursor = schedule.stream()
        self.track = track
        self.debug = debug
        self.k = 0
        self.x0 = instance.x0.copy()
        self.x = instance.x0.copy()
        self.x_norm = norm2(self.x)
        self.log_scale = 0.0
        self.model = QuadraticModel.empty()
        m = instance.m
        self.w_total = CompensatedSum()
        self.w_by_index = [CompensatedSum() for _ in range(m + 1)]
        self.w_lam_alpha = CompensatedSum()
        self.w_value = CompensatedSum()
        self.w_f0 = CompensatedSum()
        self.w_h = CompensatedSum()
        self.w_x = np.zeros_like(self.x)
        self.c0 = SignedLogSum()
        self.t0_seen = None
        self.L1 = instance.L1
        self.g0_norm2 = None
        self.alpha1 = None
        self.w0 = None
        self.rng = np.random.Generator(np.random.Philox(seed))
        self.diverged = None
        self.last = None
        self._fcache = None
        y, ny = instance.reference("opt")
        self._ref_opt = None if y is None else (y, ny, instance.objective.value(y),
                                                 [c.value(y) for c in instance.constraints])
        y, ny = instance.reference("sl")
        self._ref_sl = None if y is None else (y, ny, instance.objective.value(y),
                                                [c.value(y) for c in instance.constraints])
        self._r_opt = None
        if instance.x_opt is not None:
            self._r_opt = instance.reg.value(instance.x_opt)

    # -- helpers --------------------------------------------------------------

    def objective_at_x(self, instance):
        """Deterministic ``(f_0(x_k), g_0(x_k))``, cached per iteration."""
        if self._fcache is None or self._fcache[0] != self.k:
            f, g = instance.objective.value_and_subgrad(self.x)
            self._fcache = (self.k, f, g)
        return self._fcache[1], self._fcache[2]

    def _next_pair(self):
        try:
            alpha, lam, log_lam = next(self.cursor)
        except StopIteration:
            raise IndexError("schedule exhausted") from None
        if self.log_scale == 0.0 and lam < 1e150:
            return alpha, lam
        return alpha, math.exp(log_lam - self.log_scale)

    @property
    def weight_scale(self):
        return math.exp(-self.log_scale)

    def _rescale(self):
        W = self.w_total.value
        if W < _RESCALE_AT:
            return
        f = 1.0 / W
        for acc in (self.w_total, self.w_lam_alpha, self.w_value, self.w_f0, self.w_h,
                    *self.w_by_index):
            acc.scale(f)
        self.w_x *= f
        self.model = self.model.scaled(f)
        if self.c0.sign:
            self.c0.log_abs += math.log(f)
        if self.w0 is not None:
            self.w0 *= f
        self.log_scale += math.log(W)

    def delta(self, which, s, f_value, x):
        ref = self._ref_opt if which == "opt" else self._ref_sl
        if ref is None:
            return None
        y, ny, f0y, fsy = ref
        if s == 0:
            return f_value - f0y + float(ny @ (x - y))
        return f_value - fsy[s - 1]

    def _bookkeep(self, instance, s, alpha, w, f, g, x, x_new, n_new, resid=None):
        k = self.k
        self.w_total.add(w)
        self.w_by_index[s].add(w)
        self.w_lam_alpha.add(w * alpha)
        if s == 0:
            self.w_value.add(w * (f + instance.reg.value(x)))
            self.w_f0.add(w * f)
            self.w_x += w * x
            if self._ref_opt is not None:
                y, ny = self._ref_opt[0], self._ref_opt[1]
                self.w_h.add(w * (f + self._r_opt + float(ny @ (x - y))))
        d_opt = d_sl = None
        ref = self._ref_opt
        if ref is not None:
            d_opt = (f - ref[2] + float(ref[1] @ (x - ref[0]))) if s == 0 else f - ref[3][s - 1]
        ref = self._ref_sl
        if ref is not None:
            d_sl = (f - ref[2] + float(ref[1] @ (x - ref[0]))) if s == 0 else f - ref[3][s - 1]
        if self.L1 is not None and self.L1 * alpha > 1.0:
            self.t0_seen = k
            if d_opt is not None:
                dmax = d_opt if d_sl is None else max(d_opt, d_sl)
                self.c0.add(w * (self.L1 * alpha - 1.0) * dmax)
        if k == 0:
            self.g0_norm2 = float(g @ g)
            self.w0 = w
        elif k == 1:
            self.alpha1 = alpha
        if self.track and self.method == "primal":
            r_next = instance.reg.value(x_new) if (s == 0 and n_new is not None) else 0.0
            self.model = append_model_term(self.model, s == 0, w, f, g, x, self.mu,
                                           r_next, n_new, x_new)
        self.last = StepInfo(k, s, alpha, w, f, g, x, x_new, n_new, d_opt, d_sl, resid)
        self.x = x_new
        self.k = k + 1
        nrm = self.x_norm = norm2(x_new)
        if not math.isfinite(nrm) or nrm > DIVERGENCE_NORM:
            self.diverged = {
                "k": self.k,
                "norm": nrm,
                "T0_seen": self.t0_seen,
                "log10_C0_partial": self.c0.log10 if self.c0.sign else None,
            }
            raise DivergenceError(self.diverged)
        self._rescale()

    def _oracle(self, instance, s):
        if s == 0:
            f, g = self.objective_at_x(instance)
            if instance.noise_std > 0:
                g = g + instance.noise_std * self.rng.standard_normal(g.shape)
            return f, g
        return instance.constraints[s - 1].value_and_subgrad(self.x)


def init_state(instance, schedule, method="primal", seed=0, track=True, debug=False):
    return SolverState(instance, schedule, method, seed, track, debug)


def primal_step(state, instance):
    """One step of the switching proximal subgradient method (in place)."""
    alpha, w = state._next_pair()
    x = state.x
    s = switching_select(x, instance)
    f, g = state._oracle(instance, s)
    n_new = None
    if s == 0:
        z = x - alpha * g
        if instance.reg.trivial:
            x_new = z
        else:
            x_new = np.asarray(instance.reg.prox(z, alpha), dtype=float)
            n_new = (z - x_new) / alpha
    else:
        x_new = x - alpha * g
    state._bookkeep(instance, s, alpha, w, f, g, x, x_new, n_new)
    return state


def dual_step(state, instance):
    """One step of the Lagrangian proximal dual averaging method (in place)."""
    alpha, w = state._next_pair()
    y = state.x
    s = switching_select(y, instance)
    f, g = state._oracle(instance, s)
    bb = state.beta_bar * state.weight_scale
    reg = instance.reg if s == 0 else None
    y_new, n_new = minimize_with_prox(state.model, f, g, y, w, state.mu, reg, bb, state.x0)
    if s != 0 or instance.reg.trivial:
        n_new = None
    r_next = instance.reg.value(y_new) if n_new is not None else 0.0
    prev = state.model
    state.model = append_model_term(prev, s == 0, w, f, g, y, state.mu, r_next, n_new, y_new)
    resid = None
    if state.debug:
        m = state.model
        v = m.gradient(y_new) + bb * (y_new - state.x0)
        resid = float(np.linalg.norm(v)) / max(1.0, m.curvature * (1.0 + float(np.linalg.norm(y_new))))
        if n_new is not None:
            n_alt = stationarity_subgradient(prev, y_new, g, y, w, state.mu, bb, state.x0)
            resid = max(resid, float(np.linalg.norm(n_alt - n_new)) / (1.0 + float(np.linalg.norm(n_new))))
    state._bookkeep(instance, s, alpha, w, f, g, y, y_new, n_new, resid)
    return state


# -- run harness ---------------------------------------------------------------

def default_cadence(t):
    """Every iteration below 10^4, every 100th beyond."""
    return t < 10_000 or t % 100 == 0


def geometric_cadence(t, per_decade=40):
    """Roughly log-spaced logging, suitable for log-log plots."""
    if t < per_decade:
        return True
    lo = math.floor(per_decade * math.log10(t))
    return math.floor(per_decade * math.log10(t + 1)) > lo or t == 0


@dataclass
class RunLog:
    records: list
    method: str
    instance_name: str
    schedule_name: str
    T: int
    max_deviation: Optional[float] = None
    max_abs_deviation: Optional[float] = None
    peak_norm: float = 0.0
    stopped_at: Optional[int] = None
    divergence: Optional[dict] = None
    state: Optional[SolverState] = field(default=None, repr=False)
    dual_state: Optional[SolverState] = field(default=None, repr=False)

    def column(self, name):
        return np.array([np.nan if r.get(name) is None else r[name] for r in self.records], dtype=float)

    def summary(self):
        return {
            "method": self.method,
            "instance": self.instance_name,
            "schedule": self.schedule_name,
            "iterations": self.T,
            "stopped_at": self.stopped_at,
            "max_deviation": self.max_deviation,
            "max_abs_deviation": self.max_abs_deviation,
            "peak_norm": self.peak_norm,
            "divergence": self.divergence,
            "final": self.records[-1] if self.records else None,
        }

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")

    def to_csv(self, path, columns=None):
        cols = columns or certificate_columns(self)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            for r in self.records:
                wr.writerow([_fmt(r.get(c)) for c in cols])


def certificate_columns(log):
    m = 0
    for r in log.records:
        m = max(m, sum(1 for key in r if key.startswith("u_")))
    return (["t", "p", "pbar", "delta", "d", "dist2"] + [f"u_{i}" for i in range(1, m + 1)]
            + ["thm2_rhs", "feasible_frac", "prop1_rhs", "gap", "upper", "lower", "x_norm", "s"])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _record(state, instance, report, keep_iterates):
    rec = report.as_row()
    rec["s"] = switching_select(state.x, instance)
    rec["feasible"] = rec["s"] == 0
    rec["x_norm"] = norm2(state.x)
    rec["log_scale"] = state.log_scale
    rec["model"] = state.model.snapshot(with_center=keep_iterates)
    if keep_iterates:
        rec["x"] = state.x.tolist()
    return rec


def run(instance, schedule, method="primal", T=1000, stop=None, seed=0, log_every=None,
        track_certificates=True, keep_iterates=False, on_step: Optional[Callable] = None,
        debug=False, max_iter=10**8, G_sq=None):
    """Run the primal method, the dual method or both in lockstep.

    Parameters
    ----------
    instance : ProblemInstance
    schedule : Schedule
    method : {"primal", "dual", "both"}
        With ``"both"`` the two methods consume identical noise streams and
        the largest relative deviation ``||x_k - y_k|| / (1 + ||x_k||)`` is
        reported.
    T : int or None
        Iteration budget; ``None`` runs until ``stop`` fires or ``max_iter``.
    stop : certificates.StoppingRule, optional
    log_every : int, callable or None
        Logging cadence; ``None`` uses :func:`default_cadence`.
    on_step : callable, optional
        Called as ``on_step(state)`` after each primal (or dual) step.

    Returns
    -------
    RunLog
    """
    if T is None and stop is None:
        raise ValueError("need an iteration budget or a stopping rule")
    budget = max_iter if T is None else T
    if log_every is None:
        should_log = default_cadence
    elif callable(log_every):
        should_log = log_every
    else:
        every = int(log_every)
        should_log = lambda t: t % every == 0  # noqa: E731

    if method == "both":
        main = init_state(instance, schedule, "primal", seed, True, debug)
        twin = init_state(instance, schedule, "dual", seed, True, debug)
    else:
        main = init_state(instance, schedule, method, seed, track_certificates or method == "dual", debug)
        twin = None
    step = dual_step if method == "dual" else primal_step

    records = []
    max_dev = 0.0 if twin is not None else None
    max_abs = 0.0 if twin is not None else None
    peak = float(np.linalg.norm(main.x))
    stopped_at = None
    divergence = None
    t = 0
    while True:
        log_now = should_log(t) or t == budget
        check_stop = stop is not None and t % stop.every == 0
        report = None
        if log_now or check_stop:
            report = certificates.gaps(main, instance, G_sq=G_sq)
        if check_stop and stop(report):
            stopped_at = t
            log_now = True
        if log_now:
            records.append(_record(main, instance, report, keep_iterates))
        if stopped_at is not None or t >= budget:
            break
        try:
            step(main, instance)
            if twin is not None:
                dual_step(twin, instance)
        except DivergenceError as exc:
            divergence = exc.report
            break
        nrm = main.x_norm
        if nrm > peak:
            peak = nrm
        if twin is not None:
            r = main.x - twin.x
            gap = math.sqrt(float(r @ r))
            dev = gap / (1.0 + nrm)
            if not dev <= max_dev:
                max_dev = dev
            if not gap <= max_abs:
                max_abs = gap
        if on_step is not None:
            on_step(main)
        t += 1
    return RunLog(records, method, instance.name, schedule.name, main.k, max_dev, max_abs, peak,
                  stopped_at, divergence, main, twin)


def replicate_divergence_constants(instance, schedule, replicates=32, seed=0, horizon=10**6):
    """Estimate ``(T0, C0)`` with the expectations replaced by replicate means.

    Returns a dict with ``T0``, ``C0`` (mean), ``C0_stderr`` and ``log10_C0``.
    Replicate noise streams are spawned from ``seed``.
    """
    if instance.L1 is None:
        raise ValueError("instance has no L1 constant")
    T0 = schedule.t0(instance.L1, horizon=horizon)
    if T0 is None:
        return {"T0": None, "C0": 0.0, "C0_stderr": 0.0, "log10_C0": -math.inf}
    seeds = np.random.SeedSequence(seed).spawn(replicates)
    logs = []
    for ss in seeds:
        st = init_state(instance, schedule, "primal", int(ss.generate_state(1)[0]), track=False)
        hist_opt, hist_sl = [], []
        alphas, logw = [], []
        for _ in range(T0 + 1):
            primal_step(st, instance)
            hist_opt.append(st.last.delta_opt)
            hist_sl.append(st.last.delta_sl if st.last.delta_sl is not None else st.last.delta_opt)
            alphas.append(st.last.alpha)
            logw.append(math.log(st.last.weight) + st.log_scale)
        logs.append((np.array(hist_opt), np.array(hist_sl), np.array(alphas), np.array(logw)))
    d_opt = np.mean([h[0] for h in logs], axis=0)
    d_sl = np.mean([h[1] for h in logs], axis=0)
    a, lw = logs[0][2], logs[0][3]
    t0, c0, log10_c0 = certificates.divergence_constants(
        a, lw, instance.L1, np.maximum(d_opt, d_sl), log_weights=True)
    per = []
    for h in logs:
        per.append(certificates.divergence_constants(a, lw, instance.L1, np.maximum(h[0], h[1]),
                                                     log_weights=True)[1])
    se = float(np.std(per, ddof=1) / math.sqrt(len(per))) if len(per) > 1 else 0.0
    return {"T0": t0, "C0": c0, "C0_stderr": se, "log10_C0": log10_c0}
