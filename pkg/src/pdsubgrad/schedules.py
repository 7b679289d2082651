"""Primal stepsizes and dual weights.

A primal stepsize sequence ``alpha_k`` and a dual weight sequence
``lambda_k`` describe the same method whenever

    alpha_k = lambda_k / (mu * sum_{i<=k} lambda_i + beta_bar).

This module converts between the two, provides the usual canned choices,
the one-step optimized weights, and the resulting rate bound.

Weights are streamed together with their logarithm so that exponentially
growing sequences (gradient-descent-like schedules) never need to be
materialized in double precision; every consumer only uses ratios.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ._numerics import CompensatedSum, faulhaber

KINDS = ("uniform", "linear", "poly", "optimized", "smooth", "capped", "explicit", "alpha_fn")


def _check_pos(name, v):
    if not v > 0:
        raise ValueError(f"{name} must be positive, got {v!r}")


def alpha_from_lambda(lambdas, beta_bar=0.0, mu=1.0):
    """Stepsizes ``alpha_k = lambda_k / (mu * S_k + beta_bar)``.

    Parameters
    ----------
    lambdas : array_like
        Positive dual weights.
    beta_bar : float
        Nonnegative regularization constant.
    mu : float
        Strong convexity modulus (may be zero if ``beta_bar > 0``).
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(~(lam > 0)):
        raise ValueError("dual weights must be strictly positive")
    if mu < 0 or beta_bar < 0:
        raise ValueError("mu and beta_bar must be nonnegative")
    if mu == 0 and beta_bar == 0:
        raise ValueError("mu and beta_bar cannot both be zero")
    acc = CompensatedSum()
    out = np.empty_like(lam)
    for k, lk in enumerate(lam):
        acc.add(lk)
        out[k] = lk / (mu * acc.value + beta_bar)
    return out


def lambda_from_alpha(alphas, lambda0=1.0, beta_bar=0.0, mu=1.0, rtol=1e-12):
    """Dual weights generating the stepsizes ``alphas``.

    Uses the recurrence
    ``lambda_{k+1} = alpha_{k+1} / (1 - mu alpha_{k+1}) * lambda_k / alpha_k``.

    Raises
    ------
    ValueError
        If ``alpha_0 != lambda0 / (mu lambda0 + beta_bar)``, if any
        ``alpha_k >= 1/mu`` for ``k >= 1`` or if any input is nonpositive.
    """
    a = np.asarray(alphas, dtype=float)
    _check_pos("lambda0", lambda0)
    _check_pos("mu", mu)
    if np.any(~(a > 0)):
        raise ValueError("stepsizes must be strictly positive")
    a0 = lambda0 / (mu * lambda0 + beta_bar)
    if abs(a[0] - a0) > rtol * a0:
        raise ValueError(
            f"alpha_0={a[0]!r} inconsistent with lambda0/(mu*lambda0+beta_bar)={a0!r}")
    if np.any(mu * a[1:] >= 1.0):
        k = 1 + int(np.argmax(mu * a[1:] >= 1.0))
        raise ValueError(f"alpha_{k}={a[k]!r} >= 1/mu")
    out = np.empty_like(a)
    out[0] = lambda0
    for k in range(1, a.size):
        out[k] = a[k] / (1.0 - mu * a[k]) * (out[k - 1] / a[k - 1])
    return out


def optimized_next_weight(lambdas, alphas, mu=1.0, beta_bar=0.0):
    """Weight and stepsize minimizing the one-step-ahead rate bound.

    Returns ``(lambda_T, alpha_T)`` with

        lambda_T = (sum lambda_k)(sum lambda_k alpha_k) / sum lambda_k (2/mu - alpha_k)

    over the given prefix of length ``T >= 1``.
    """
    lam = np.asarray(lambdas, dtype=float)
    a = np.asarray(alphas, dtype=float)
    if lam.size < 1 or lam.size != a.size:
        raise ValueError("need a nonempty prefix with matching lengths")
    s = math.fsum(lam)
    sa = math.fsum(lam * a)
    denom = math.fsum(lam * (2.0 / mu - a))
    if not denom > 0:
        raise ValueError("degenerate denominator in optimized weight")
    lam_t = s * sa / denom
    return lam_t, lam_t / (mu * (s + lam_t) + beta_bar)


@dataclass(frozen=True)
class Schedule:
    """Immutable description of a paired (alpha_k, lambda_k) sequence.

    Use the module-level constructors (:func:`uniform`, :func:`poly`,
    :func:`optimized`, :func:`smooth_schedule`, ...) rather than building
    this directly.
    """

    kind: str
    mu: float
    beta_bar: float = 0.0
    lambda0: float = 1.0
    p: float = 0.0
    L1: Optional[float] = None
    alphas: Optional[tuple] = None
    alpha_fn: Optional[Callable[[int], float]] = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.mu < 0 or self.beta_bar < 0:
            raise ValueError("mu and beta_bar must be nonnegative")
        if self.mu == 0 and self.beta_bar == 0:
            raise ValueError("mu and beta_bar cannot both be zero")
        _check_pos("lambda0", self.lambda0)

    @property
    def name(self):
        if self.label:
            return self.label
        if self.kind == "poly":
            return f"poly{self.p:g}"
        return self.kind

    @property
    def finite(self):
        return self.kind == "explicit"

    # -- generation ---------------------------------------------------------

    def stream(self) -> Iterator[tuple]:
        """Yield ``(alpha_k, lambda_k, log_lambda_k)`` for k = 0, 1, ...

        ``lambda_k`` is ``inf`` once it leaves double range; ``log_lambda_k``
        is always finite.
        """
        gen = {
            "uniform": self._poly_stream,
            "linear": self._poly_stream,
            "poly": self._poly_stream,
            "optimized": self._optimized_stream,
            "smooth": self._smooth_stream,
        }.get(self.kind, self._alpha_stream)
        return gen()

    def _lam_alpha(self, log_lam, log_s):
        # alpha = lambda / (mu S + beta_bar), evaluated from logs
        if self.beta_bar == 0.0:
            log_den = math.log(self.mu) + log_s
        elif self.mu == 0.0:
            log_den = math.log(self.beta_bar)
        else:
            log_den = np.logaddexp(math.log(self.mu) + log_s, math.log(self.beta_bar))
        return math.exp(log_lam - log_den)

    def _poly_stream(self):
        p = {"uniform": 0.0, "linear": 1.0}.get(self.kind, self.p)
        exact = float(p).is_integer() and 0 <= p <= 4
        l0, mu, bb = self.lambda0, self.mu, self.beta_bar
        acc = CompensatedSum()
        k = 0
        while True:
            base = float((k + 1) ** p) if exact else (k + 1.0) ** p
            lam = l0 * base
            if exact:
                s = l0 * faulhaber(int(p), k + 1)
            else:
                acc.add(lam)
                s = acc.value
            yield lam / (mu * s + bb), lam, math.log(l0) + p * math.log(k + 1.0)
            k += 1

    def _optimized_stream(self):
        mu, bb = self.mu, self.beta_bar
        lam = self.lambda0
        alpha = lam / (mu * lam + bb)
        s, sa, sd = CompensatedSum(), CompensatedSum(), CompensatedSum()
        while True:
            yield alpha, lam, math.log(lam)
            s.add(lam)
            sa.add(lam * alpha)
            sd.add(lam * (2.0 / mu - alpha))
            den = sd.value
            if not den > 0:
                raise ValueError("degenerate denominator in optimized weight")
            lam = s.value * sa.value / den
            alpha = lam / (mu * (s.value + lam) + bb)

    def _smooth_stream(self):
        mu, L1 = self.mu, self.L1
        q = mu / L1
        log1mq = math.log1p(-q)
        l0 = self.lambda0
        k = 0
        while True:
            if k == 0:
                log_lam, log_s = math.log(l0), math.log(l0)
            else:
                log_lam = math.log(l0) + math.log(q) - k * log1mq
                log_s = math.log(l0) - k * log1mq
            if self.beta_bar == 0.0:
                alpha = 1.0 / mu if k == 0 else 1.0 / L1
            else:
                alpha = self._lam_alpha(log_lam, log_s)
            lam = math.exp(log_lam) if log_lam < 709.0 else math.inf
            yield alpha, lam, log_lam
            k += 1

    def _alpha_stream(self):
        mu, bb, l0 = self.mu, self.beta_bar, self.lambda0
        if self.kind == "explicit":
            seq = iter(self.alphas)
            nxt = lambda k: next(seq)  # noqa: E731
        elif self.kind == "capped":
            L1 = self.L1
            nxt = lambda k: 1.0 / mu if k == 0 else min(1.0 / L1, 2.0 / (mu * (k + 2)))  # noqa: E731
        else:
            nxt = self.alpha_fn
        k = 0
        log_lam = math.log(l0)
        prev_alpha = None
        while True:
            try:
                alpha = float(nxt(k))
            except StopIteration:
                return
            if not alpha > 0:
                raise ValueError(f"alpha_{k}={alpha!r} must be positive")
            if k == 0:
                a0 = l0 / (mu * l0 + bb)
                if abs(alpha - a0) > 1e-12 * a0:
                    raise ValueError(
                        f"alpha_0={alpha!r} inconsistent with lambda0/(mu*lambda0+beta_bar)={a0!r}")
            else:
                if mu * alpha >= 1.0:
                    raise ValueError(f"alpha_{k}={alpha!r} >= 1/mu")
                log_lam += math.log(alpha) - math.log1p(-mu * alpha) - math.log(prev_alpha)
            lam = math.exp(log_lam) if log_lam < 709.0 else math.inf
            yield alpha, lam, log_lam
            prev_alpha = alpha
            k += 1

    # -- prefixes -----------------------------------------------------------

    def log_prefix(self, T):
        """Arrays ``(alphas, log_lambdas)`` of the first ``T`` entries."""
        a = np.empty(T)
        ll = np.empty(T)
        it = self.stream()
        for k in range(T):
            try:
                a[k], _, ll[k] = next(it)
            except StopIteration:
                return a[:k], ll[:k]
        return a, ll

    def prefix(self, T):
        """Arrays ``(alphas, lambdas)`` of the first ``T`` entries."""
        a, ll = self.log_prefix(T)
        with np.errstate(over="ignore"):
            return a, np.exp(ll)

    def t0(self, L1, horizon=10**6):
        """Last index with ``L1 * alpha_k > 1`` (``None`` if there is none).

        For the canned schedules, whose stepsizes are nonincreasing after
        the first entry, the scan stops at the first index with
        ``L1 * alpha_k <= 1``; other kinds are scanned up to ``horizon``.

        Raises
        ------
        ValueError
            If ``L1 * alpha_k > 1`` still holds at the end of the scan.
        """
        monotone = self.kind in ("uniform", "linear", "optimized", "smooth", "capped") or (
            self.kind == "poly" and self.p >= 0)
        last = None
        k = -1
        for k, (alpha, _, _) in enumerate(self.stream()):
            if L1 * alpha > 1.0:
                last = k
            elif monotone and k >= 1:
                return last
            if k >= horizon:
                break
        if last is not None and last == k and not self.finite:
            raise ValueError("T0 unbounded: stepsizes not eventually <= 1/L1")
        return last


# -- constructors -----------------------------------------------------------

def uniform(mu, beta_bar=0.0, lambda0=1.0):
    """``lambda_k = lambda0`` (``alpha_k = 1/(mu (k+1))`` when beta_bar = 0)."""
    return Schedule("uniform", mu, beta_bar, lambda0)


def linear(mu, beta_bar=0.0, lambda0=1.0):
    """``lambda_k = lambda0 (k+1)`` (``alpha_k = 2/(mu (k+2))`` when beta_bar = 0)."""
    return Schedule("linear", mu, beta_bar, lambda0, p=1.0)


def poly(p, mu, beta_bar=0.0, lambda0=1.0):
    """``lambda_k = lambda0 (k+1)^p``."""
    return Schedule("poly", mu, beta_bar, lambda0, p=float(p))


def optimized(mu, beta_bar=0.0, lambda0=1.0):
    """Greedy weights minimizing the rate bound one step ahead."""
    return Schedule("optimized", mu, beta_bar, lambda0)


def smooth_schedule(mu, L1, beta_bar=0.0):
    """``alpha_0 = 1/mu`` then ``alpha_k = 1/L1``; geometric dual weights."""
    _check_pos("mu", mu)
    if not L1 > mu:
        raise ValueError("smooth schedule requires L1 > mu")
    return Schedule("smooth", mu, beta_bar, 1.0, L1=float(L1))


def capped(mu, L1):
    """``alpha_0 = 1/mu``, ``alpha_k = min(1/L1, 2/(mu (k+2)))``."""
    _check_pos("mu", mu)
    _check_pos("L1", L1)
    return Schedule("capped", mu, 0.0, 1.0, L1=float(L1))


def explicit(alphas: Sequence[float], mu, beta_bar=0.0, lambda0=1.0):
    """Finite schedule from a list of stepsizes."""
    return Schedule("explicit", mu, beta_bar, lambda0, alphas=tuple(float(a) for a in alphas))


def from_alpha_fn(fn, mu, beta_bar=0.0, lambda0=1.0, label="alpha_fn"):
    """Infinite schedule from a stepsize rule ``k -> alpha_k``."""
    return Schedule("alpha_fn", mu, beta_bar, lambda0, alpha_fn=fn, label=label)


def from_config(cfg, mu=None, L1=None):
    """Build a schedule from ``{"kind": ..., "params": {...}, "alphas": [...]}``.

    ``mu`` and ``L1`` act as defaults when the config leaves them out
    (typically they come from the problem instance).
    """
    kind = cfg["kind"]
    prm = dict(cfg.get("params", {}))
    mu = float(prm.get("mu", mu if mu is not None else 1.0))
    L1 = prm.get("L1", L1)
    bb = float(prm.get("beta_bar", 0.0))
    l0 = float(prm.get("lambda0", 1.0))
    if kind == "uniform":
        return uniform(mu, bb, l0)
    if kind == "linear":
        return linear(mu, bb, l0)
    if kind == "poly":
        return poly(prm["p"], mu, bb, l0)
    if kind == "optimized":
        return optimized(mu, bb, l0)
    if kind == "smooth":
        return smooth_schedule(mu, float(L1), bb)
    if kind == "capped":
        return capped(mu, float(L1))
    if kind == "explicit":
        return explicit(cfg["alphas"], mu, bb, l0)
    raise ValueError(f"unknown schedule kind {kind!r}")


def parse_name(name, mu, L1=None, beta_bar=0.0):
    """Short names used on the command line: ``uniform``, ``linear``,
    ``poly2``, ``optimized``, ``smooth``, ``capped``."""
    if name in ("uniform", "1"):
        return uniform(mu, beta_bar)
    if name in ("linear", "k+1"):
        return linear(mu, beta_bar)
    if name.startswith("poly"):
        return poly(float(name[4:]), mu, beta_bar)
    if name == "optimized":
        return optimized(mu, beta_bar)
    if name == "smooth":
        return smooth_schedule(mu, L1, beta_bar)
    if name == "capped":
        return capped(mu, L1)
    raise ValueError(f"unknown schedule name {name!r}")


def rate_bound(schedule, T, L0_sq, C0=0.0):
    """Weighted-average rate bound ``(L0^2 sum lambda alpha + C0) / sum lambda`` over k < T.

    Evaluated from log weights so exponentially weighted schedules are safe.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if L0_sq < 0 or C0 < 0:
        raise ValueError("L0_sq and C0 must be nonnegative")
    a, ll = schedule.log_prefix(T)
    return rate_bound_from_arrays(a, ll, L0_sq, C0, log_weights=True)


def rate_bound_from_arrays(alphas, weights, L0_sq, C0=0.0, log_weights=False):
    a = np.asarray(alphas, dtype=float)
    w = np.asarray(weights, dtype=float)
    if log_weights:
        shift = w.max()
        rel = np.exp(w - shift)
        log_s = shift + math.log(math.fsum(rel))
        ratio = math.fsum(rel * a) / math.fsum(rel)
        c0_term = 0.0 if C0 == 0 else math.exp(math.log(C0) - log_s)
        return L0_sq * ratio + c0_term
    s = math.fsum(w)
    return (L0_sq * math.fsum(w * a) + C0) / s
