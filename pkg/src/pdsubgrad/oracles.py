"""Function and proximal oracles used to describe problem instances.

A :class:`Function` exposes a value and one subgradient; a
:class:`Regularizer` exposes its value and proximal operator

    prox_{t, r}(z) = argmin_x  r(x) + ||x - z||^2 / (2 t).
"""

import math

import numpy as np


class Function:
    """Convex function with a deterministic subgradient oracle."""

    def value(self, x):
        raise NotImplementedError

    def subgrad(self, x):
        raise NotImplementedError

    def value_and_subgrad(self, x):
        return self.value(x), self.subgrad(x)


class Quadratic(Function):
    """``0.5 * (x - c)^T H (x - c) + offset`` with symmetric PSD ``H``.

    ``H`` may be given as a 1-D array, in which case it is diagonal.
    """

    def __init__(self, H, c, offset=0.0):
        self.H = np.asarray(H, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.offset = float(offset)
        self._diag = self.H.ndim == 1

    def _Hv(self, v):
        return self.H * v if self._diag else self.H @ v

    def value(self, x):
        r = x - self.c
        return 0.5 * float(r @ self._Hv(r)) + self.offset

    def subgrad(self, x):
        return self._Hv(x - self.c)

    def value_and_subgrad(self, x):
        r = x - self.c
        g = self._Hv(r)
        return 0.5 * float(r @ g) + self.offset, g


class BallConstraint(Quadratic):
    """``0.5 * ||x - a||^2 - rho``; feasible set is a ball of radius sqrt(2 rho)."""

    def __init__(self, a, rho):
        a = np.asarray(a, dtype=float)
        super().__init__(np.ones_like(a), a, -float(rho))
        self.a = a
        self.rho = float(rho)

    @property
    def radius(self):
        return math.sqrt(2.0 * self.rho)


class L1LeastSquares(Function):
    """``||A x - b||_1 + 0.5 ||C x - d||_2^2`` with ``sign(0) := 0``."""

    def __init__(self, A, b, C, d):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self._At = np.ascontiguousarray(self.A.T)
        self._Ct = np.ascontiguousarray(self.C.T)
        m, n = self.C.shape
        self._C_is_identity = m == n and np.array_equal(self.C, np.eye(n))

    def _residuals(self, x):
        r1 = self.A @ x - self.b
        r2 = (x - self.d) if self._C_is_identity else (self.C @ x - self.d)
        return r1, r2

    def value(self, x):
        r1, r2 = self._residuals(x)
        return float(np.add.reduce(np.abs(r1))) + 0.5 * float(r2 @ r2)

    def subgrad(self, x):
        return self.value_and_subgrad(x)[1]

    def value_and_subgrad(self, x):
        r1, r2 = self._residuals(x)
        f = float(np.add.reduce(np.abs(r1))) + 0.5 * float(r2 @ r2)
        g = self._At @ np.sign(r1)
        g += r2 if self._C_is_identity else self._Ct @ r2
        return f, g


class AbsValue(Function):
    """``weight * ||x||_1``, a convex but not strongly convex test function."""

    def __init__(self, weight=1.0):
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.add.reduce(np.abs(x)))

    def subgrad(self, x):
        return self.weight * np.sign(x)


class Perturbed(Function):
    """``base(x) + (coef / 2) ||x - anchor||^2``."""

    def __init__(self, base, coef, anchor):
        self.base = base
        self.coef = float(coef)
        self.anchor = np.asarray(anchor, dtype=float)

    def value(self, x):
        r = x - self.anchor
        return self.base.value(x) + 0.5 * self.coef * float(r @ r)

    def subgrad(self, x):
        return self.base.subgrad(x) + self.coef * (x - self.anchor)

    def value_and_subgrad(self, x):
        f, g = self.base.value_and_subgrad(x)
        r = x - self.anchor
        return f + 0.5 * self.coef * float(r @ r), g + self.coef * r


class Regularizer:
    """Closed convex ``r`` with a cheap proximal operator."""

    #: True when ``prox`` is the identity (``r == 0``)
    trivial = False

    def value(self, x):
        raise NotImplementedError

    def prox(self, z, t):
        raise NotImplementedError

    def contains_subgradient(self, x, n, tol=1e-9):
        """Check ``n in partial r(x)`` up to ``tol``."""
        raise NotImplementedError


class Zero(Regularizer):
    trivial = True

    def value(self, x):
        return 0.0

    def prox(self, z, t):
        return z

    def contains_subgradient(self, x, n, tol=1e-9):
        return bool(np.all(np.abs(n) <= tol))


class L1Norm(Regularizer):
    """``weight * ||x||_1``; prox is soft thresholding."""

    def __init__(self, weight=1.0):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.add.reduce(np.abs(x)))

    def prox(self, z, t):
        thr = self.weight * t
        return np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)

    def contains_subgradient(self, x, n, tol=1e-9):
        w = self.weight
        nz = x != 0
        ok_nz = np.abs(n[nz] - w * np.sign(x[nz])) <= tol * max(1.0, w)
        ok_z = np.abs(n[~nz]) <= w + tol * max(1.0, w)
        return bool(np.all(ok_nz) and np.all(ok_z))


class BallIndicator(Regularizer):
    """Indicator of ``{x : ||x - center|| <= radius}``; prox is projection."""

    def __init__(self, radius=1.0, center=None):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.center = None if center is None else np.asarray(center, dtype=float)

    def _offset(self, x):
        return x if self.center is None else x - self.center

    def value(self, x):
        return 0.0 if np.linalg.norm(self._offset(x)) <= self.radius * (1 + 1e-12) else math.inf

    def prox(self, z, t):
        v = self._offset(z)
        nv = np.linalg.norm(v)
        if nv <= self.radius:
            return z
        p = v * (self.radius / nv)
        return p if self.center is None else p + self.center

    def contains_subgradient(self, x, n, tol=1e-9):
        # normal cone: {0} inside, nonnegative multiples of x - center on the boundary
        v = self._offset(x)
        nv = np.linalg.norm(v)
        nn = np.linalg.norm(n)
        if nn <= tol:
            return nv <= self.radius * (1 + tol)
        if abs(nv - self.radius) > tol * max(1.0, self.radius):
            return False
        return float(n @ v) >= (1 - tol) * nn * nv


class BoxIndicator(Regularizer):
    """Indicator of ``{x : lo <= x <= hi}``."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    def value(self, x):
        return 0.0 if np.all(x >= self.lo) and np.all(x <= self.hi) else math.inf

    def prox(self, z, t):
        return np.clip(z, self.lo, self.hi)

    def contains_subgradient(self, x, n, tol=1e-9):
        at_lo = np.isclose(x, self.lo)
        at_hi = np.isclose(x, self.hi)
        ok = np.where(at_lo, n <= tol, True) & np.where(at_hi, n >= -tol, True)
        interior = ~(at_lo | at_hi)
        return bool(np.all(ok) and np.all(np.abs(n[interior]) <= tol))
