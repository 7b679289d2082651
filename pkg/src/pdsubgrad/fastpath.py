"""Compiled loop for long deterministic l1 least-squares runs.

Stopping-time experiments need millions of iterations, which the general
solver handles at tens of microseconds each. This kernel specializes to an
unconstrained, unregularized, noise-free instance and tracks only what the
stopping criteria need. It is checked against :mod:`solvers` in the tests.
"""

import numpy as np
from numba import njit

from .oracles import L1LeastSquares

# criterion order used inside the kernel
_ORDER = ("p", "pbar", "delta", "d", "p+d", "pbar+d", "delta+d")
CHUNK = 1 << 16


@njit(cache=True)
def _f_and_g(A, At, b, C, Ct, d, c_id, x, g):
    r1 = A @ x - b
    if c_id:
        r2 = x - d
    else:
        r2 = C @ x - d
    f = 0.0
    for i in range(r1.size):
        f += abs(r1[i])
    f += 0.5 * (r2 @ r2)
    if c_id:
        g[:] = At @ np.sign(r1) + r2
    else:
        g[:] = At @ np.sign(r1) + Ct @ r2
    return f


@njit(cache=True)
def _f_only(A, b, C, d, c_id, x):
    r1 = A @ x - b
    if c_id:
        r2 = x - d
    else:
        r2 = C @ x - d
    f = 0.0
    for i in range(r1.size):
        f += abs(r1[i])
    return f + 0.5 * (r2 @ r2)


@njit(cache=True)
def _kadd(acc, i, v):
    # Neumaier summation into acc[i] with compensation in acc[i + 1]
    s = acc[i]
    t = s + v
    if abs(s) >= abs(v):
        acc[i + 1] += (s - t) + v
    else:
        acc[i + 1] += (v - t) + s
    acc[i] = t


@njit(cache=True)
def _chunk(A, At, b, C, Ct, d, c_id, mu, p_star, eps, alphas, weights,
           x, wx, z, acc, hit, t0):
    """Run ``len(alphas)`` iterations starting at global index ``t0``.

    ``acc = [W, W_c, WF, WF_c, a, b, has_model]``; ``hit`` holds first
    hitting times in ``_ORDER`` (``-1`` while pending). Returns the number
    of iterations done (stops early once every criterion has fired).
    """
    n = x.size
    g = np.empty(n)
    xbar = np.empty(n)
    for j in range(alphas.size):
        t = t0 + j
        f = _f_and_g(A, At, b, C, Ct, d, c_id, x, g)
        W = acc[0] + acc[1]
        delta = f - p_star
        if hit[2] < 0 and delta <= eps:
            hit[2] = t
        if W > 0:
            upper = (acc[2] + acc[3]) / W
            lower = acc[4] / W
            p = upper - p_star
            dd = p_star - lower
            if hit[0] < 0 and p <= eps:
                hit[0] = t
            if hit[3] < 0 and dd <= eps:
                hit[3] = t
            if hit[4] < 0 and upper - lower <= eps:
                hit[4] = t
            if hit[6] < 0 and f - lower <= eps:
                hit[6] = t
            if hit[1] < 0 or hit[5] < 0:
                for i in range(n):
                    xbar[i] = wx[i] / W
                fb = _f_only(A, b, C, d, c_id, xbar)
                if hit[1] < 0 and fb - p_star <= eps:
                    hit[1] = t
                if hit[5] < 0 and fb - lower <= eps:
                    hit[5] = t
        done = True
        for i in range(7):
            if hit[i] < 0:
                done = False
        if done:
            return j
        lam = weights[j]
        alpha = alphas[j]
        _kadd(acc, 0, lam)
        _kadd(acc, 2, lam * f)
        for i in range(n):
            wx[i] += lam * x[i]
        # fold lam (f + <g, y - x> + mu/2 ||y - x||^2) into the model
        gg = g @ g
        a2 = lam * (f - gg / (2.0 * mu))
        b2 = mu * lam
        if acc[6] == 0.0:
            acc[4] = a2
            acc[5] = b2
            for i in range(n):
                z[i] = x[i] - g[i] / mu
            acc[6] = 1.0
        else:
            b1 = acc[5]
            bt = b1 + b2
            dz2 = 0.0
            for i in range(n):
                z2 = x[i] - g[i] / mu
                dzi = z[i] - z2
                dz2 += dzi * dzi
                z[i] = (b1 / bt) * z[i] + (b2 / bt) * z2
            acc[4] = acc[4] + a2 + (b1 * b2 / (2.0 * bt)) * dz2
            acc[5] = bt
        for i in range(n):
            x[i] -= alpha * g[i]
    return alphas.size


def supported(instance):
    return (isinstance(instance.objective, L1LeastSquares) and instance.m == 0
            and instance.reg.trivial and instance.noise_std == 0 and instance.p_star is not None)


def stopping_times(instance, schedule, eps=0.05, max_iter=10**7, criteria=None):
    """First ``t`` at which each stopping quantity is ``<= eps``.

    Returns ``{criterion: t or None}``; ``None`` means censored at
    ``max_iter``. ``"gap"`` is reported as an alias of ``"p+d"``.
    """
    if not supported(instance):
        raise ValueError("fast path needs a deterministic unconstrained l1-LS instance with known optimum")
    obj = instance.objective
    A = np.ascontiguousarray(obj.A)
    C = np.ascontiguousarray(obj.C)
    At, Ct = np.ascontiguousarray(A.T), np.ascontiguousarray(C.T)
    x = instance.x0.astype(float).copy()
    wx = np.zeros_like(x)
    z = np.zeros_like(x)
    acc = np.zeros(7)
    hit = np.full(7, -1, dtype=np.int64)
    stream = schedule.stream()
    t = 0
    while t < max_iter:
        size = min(CHUNK, max_iter - t)
        al = np.empty(size)
        w = np.empty(size)
        for j in range(size):
            try:
                a, lam, _ = next(stream)
            except StopIteration:
                size = j
                break
            al[j], w[j] = a, lam
        al, w = al[:size], w[:size]
        if size == 0:
            break
        if not np.all(np.isfinite(w)) or acc[0] + w.sum() > 1e250:
            raise OverflowError("weights out of range for the fast path")
        done = _chunk(A, At, obj.b, C, Ct, obj.d, obj._C_is_identity, float(schedule.mu),
                      float(instance.p_star), float(eps), al, w, x, wx, z, acc, hit, t)
        t += done
        if done < size:
            break
        if not np.all(np.isfinite(x)):
            break
    out = {name: (None if hit[i] < 0 else int(hit[i])) for i, name in enumerate(_ORDER)}
    out["gap"] = out["p+d"]
    if criteria is not None:
        out = {c: out[c] for c in criteria}
    return out

