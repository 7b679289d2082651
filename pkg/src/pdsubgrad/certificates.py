"""Computable optimality certificates and theoretical bound evaluators.

Upper bounds on the optimal value come from feasible objective values seen
(``p``), the objective at the weighted average iterate (``pbar``) and at
the last iterate (``delta``). The lower bound is the minimum of the
aggregate model divided by the feasible weight. Their difference is a gap
that needs no knowledge of the optimal value.
"""

from dataclasses import asdict, dataclass, field
import math
from typing import Optional

import numpy as np

from ._numerics import SignedLogSum


@dataclass
class CertificateReport:
    t: int
    total_weight: float
    feasible_weight: float
    defined: bool
    last_value: float
    upper: Optional[float] = None
    avg_value: Optional[float] = None
    lower: Optional[float] = None
    p: Optional[float] = None
    pbar: Optional[float] = None
    delta: Optional[float] = None
    d: Optional[float] = None
    dist2: Optional[float] = None
    primal_gap: Optional[float] = None
    multipliers: list = field(default_factory=list)
    feasible_frac: Optional[float] = None
    thm2_lhs: Optional[float] = None
    thm2_rhs: Optional[float] = None
    prop1_rhs: Optional[float] = None
    eq26_lhs: Optional[float] = None
    eq26_rhs: Optional[float] = None
    T0: Optional[int] = None
    log10_C0: Optional[float] = None

    @property
    def gap(self):
        """Computable upper-minus-lower gap (``p + d`` without the optimum)."""
        if self.upper is None or self.lower is None:
            return None
        return self.upper - self.lower

    def combination(self, name):
        """Value of a named stopping quantity; ``None`` when undefined."""
        if name in ("gap", "p+d"):
            if self.p is not None and self.d is not None:
                return self.p + self.d
            return self.gap
        if name == "pbar+d":
            if self.avg_value is None or self.lower is None:
                return None
            return self.avg_value - self.lower
        if name == "delta+d":
            if self.lower is None:
                return None
            return self.last_value - self.lower
        single = {"p": self.p, "pbar": self.pbar, "delta": self.delta, "d": self.d}
        return single[name]

    def as_row(self):
        row = asdict(self)
        mult = row.pop("multipliers")
        for i, u in enumerate(mult, start=1):
            row[f"u_{i}"] = u
        row["gap"] = self.gap
        return row


def gaps(state, instance, G_sq=None):
    """Certificate report for the current state of a run.

    Gap fields that need a feasible iterate are ``None`` until one is seen;
    fields involving the optimal value are ``None`` when it is unknown.
    """
    W = state.w_total.value
    Wf = state.w_by_index[0].value
    x = state.x
    f_last, _ = state.objective_at_x(instance)
    last = f_last + instance.reg.value(x)
    rep = CertificateReport(t=state.k, total_weight=W, feasible_weight=Wf,
                            defined=Wf > 0, last_value=last)
    ps = instance.p_star
    if ps is not None:
        rep.delta = last - ps
    if instance.x_opt is not None:
        r = x - instance.x_opt
        rep.dist2 = 0.5 * state.mu * float(r @ r)
    if W > 0:
        rep.feasible_frac = Wf / W
        rep.thm2_rhs = _thm2_rhs(state, instance)
        rep.prop1_rhs = _prop1_rhs(state, instance)
    if state.t0_seen is not None:
        rep.T0 = state.t0_seen
    if state.c0.sign:
        rep.log10_C0 = state.c0.log10
    if Wf > 0:
        rep.upper = state.w_value.value / Wf
        xbar = state.w_x / Wf
        rep.avg_value = instance.objective_value(xbar)
        if state.track:
            rep.lower = state.model.min_value / Wf
        rep.multipliers = [acc.value / Wf for acc in state.w_by_index[1:]]
        if ps is not None:
            rep.p = rep.upper - ps
            rep.pbar = rep.avg_value - ps
            if rep.lower is not None:
                rep.d = ps - rep.lower
            if instance.x_opt is not None:
                rep.primal_gap = state.w_h.value / Wf - ps
        if rep.primal_gap is not None and rep.d is not None and rep.dist2 is not None:
            rep.thm2_lhs = (Wf / W) * (rep.primal_gap + rep.d) + rep.dist2
        if G_sq is not None and state.track and state.alpha1 is not None:
            rep.eq26_lhs, rep.eq26_rhs = eq26_monitor(
                state.w_f0.value, state.model.min_value, W, state.w_lam_alpha.value, G_sq,
                state.alpha1, state.mu, state.g0_norm2, state.w0)
    return rep


def _c0_scaled(state):
    return state.c0.value if state.c0.sign else 0.0


def _thm2_rhs(state, instance):
    if instance.L0_sq is None:
        return None
    return (instance.L0_sq * state.w_lam_alpha.value + _c0_scaled(state)) / state.w_total.value


def _prop1_rhs(state, instance):
    if instance.m == 0 or instance.L0_sq is None or instance.h_gap_sl is None:
        return None
    return prop1_bound(instance.tau_sl, instance.h_gap_sl, instance.L0_sq,
                       state.w_lam_alpha.value, _c0_scaled(state), state.w_total.value)


# -- stopping rules ------------------------------------------------------------

CRITERIA = ("p", "pbar", "delta", "d", "p+d", "pbar+d", "delta+d", "gap")
_ALIASES = {"d-only": "d", "p-only": "p", "pbar-only": "pbar", "delta-only": "delta"}


class StoppingRule:
    """Predicate ``report -> bool`` firing once a gap quantity is ``<= eps``."""

    def __init__(self, criterion, eps, every=1):
        name = _ALIASES.get(criterion, criterion)
        if name not in CRITERIA:
            raise ValueError(f"unknown stopping criterion {criterion!r}")
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.criterion = name
        self.eps = float(eps)
        self.every = max(1, int(every))

    def __call__(self, report):
        if math.isinf(self.eps):
            return True
        v = report.combination(self.criterion)
        return v is not None and v <= self.eps

    def __repr__(self):
        return f"StoppingRule({self.criterion!r}, {self.eps}, every={self.every})"


def stopping(criterion, eps, every=1):
    return StoppingRule(criterion, eps, every)


# -- divergence constants --------------------------------------------------------

def divergence_constants(alphas, weights, L1, delta_history, log_weights=False):
    """``(T0, C0, log10 C0)`` from per-iteration stepsizes, weights and deltas.

    ``T0`` is the last index with ``L1 alpha_k > 1`` (``None`` if there is
    none). ``C0`` is accumulated in log space; the float value is ``inf``
    when it exceeds the double range.
    """
    a = np.asarray(alphas, dtype=float)
    idx = np.nonzero(L1 * a > 1.0)[0]
    if idx.size == 0:
        return None, 0.0, -math.inf
    T0 = int(idx[-1])
    d = np.asarray(delta_history, dtype=float)
    if d.size <= T0:
        raise ValueError(f"delta history ends before T0={T0}")
    w = np.asarray(weights, dtype=float)
    acc = SignedLogSum()
    for k in idx:
        term = (L1 * a[k] - 1.0) * d[k]
        if term == 0.0:
            continue
        lw = w[k] if log_weights else math.log(w[k])
        acc.add_log(lw + math.log(abs(term)), 1 if term > 0 else -1)
    if not acc.sign:
        return T0, 0.0, -math.inf
    return T0, acc.value, acc.log10


def delta_k(x, y, instance, s, n_y=None):
    """``h_y(x) - h_y(y)`` when ``s = 0``, else ``f_s(x) - f_s(y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if s == 0:
        if n_y is None:
            if not instance.reg.trivial:
                raise ValueError("a subgradient of r at the reference point is required")
            n_y = np.zeros_like(y)
        return instance.objective.value(x) - instance.objective.value(y) + float(np.asarray(n_y) @ (x - y))
    c = instance.constraints[s - 1]
    return c.value(x) - c.value(y)


# -- theoretical bounds ----------------------------------------------------------

def theorem2_bound(L0_sq, sum_lam_alpha, sum_lam, C0=0.0):
    """``(L0^2 sum lambda alpha + C0) / sum lambda``."""
    return (L0_sq * sum_lam_alpha + C0) / sum_lam


def theorem2_bound_linear(L0_sq, mu, T, C0=0.0):
    """Closed-form upper bound for ``lambda_k = k + 1``: ``4 L0^2/(mu(T+1)) + 2 C0/(T(T+1))``."""
    return 4.0 * L0_sq / (mu * (T + 1)) + 2.0 * C0 / (T * (T + 1))


def prop1_bound(tau_sl, h_gap_sl, L0_sq, sum_lam_alpha, C0, sum_lam):
    """Lower bound on the feasible weight fraction; ``<= 0`` means vacuous."""
    return tau_sl / (2.0 * h_gap_sl + tau_sl) * (
        1.0 - (L0_sq * sum_lam_alpha + C0) / (tau_sl * sum_lam))


def prop2_delta_bound(dist_sq, L0_sq, L1):
    """``L1 ||x - y||^2 + L0^2 / L1`` bounding ``|delta_k(y)|``."""
    return L1 * dist_sq + L0_sq / L1


def prop2_log_envelope(T, dist0_sq, L0_sq, L1, mu):
    """Natural log of the exponential envelope on ``||x_T - y||^2``."""
    c = max(2.0, L1 / mu - 2.0)
    base = 1.0 + c * L1 / mu
    const = dist0_sq + L0_sq / L1**2 + L0_sq / (mu * c * L1)
    return T * math.log(base) + math.log(const)


def eq26_monitor(sum_feas_f, model_min, sum_lam, sum_lam_alpha, G_sq, alpha1, mu, g0_norm2, w0=1.0):
    """Return ``(lhs, rhs)`` of the computable convergence check.

    A violation ``lhs > rhs`` implies the first stepsize after the initial one
    exceeded ``1/L1``.
    """
    lhs = (sum_feas_f - model_min) / sum_lam
    c0 = w0 * (1.0 / (alpha1 * mu) - 1.0) * g0_norm2 / (2.0 * mu)
    rhs = (G_sq * sum_lam_alpha + c0) / sum_lam
    return lhs, rhs


def multipliers(state, instance=None):
    """Weight-ratio multipliers and complementary-slackness residuals.

    Returns ``(u, residual)`` where ``residual[s] = u_s f_s(xbar)``; the
    residual is ``None`` without an instance.
    """
    Wf = state.w_by_index[0].value
    if not Wf > 0:
        raise ValueError("multipliers are undefined before the first feasible iterate")
    u = np.array([acc.value / Wf for acc in state.w_by_index[1:]])
    if instance is None or instance.m == 0:
        return u, None
    xbar = state.w_x / Wf
    return u, u * instance.constraint_values(xbar)
