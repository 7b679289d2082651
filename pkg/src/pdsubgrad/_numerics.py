"""Small numerical helpers shared by the solver modules."""

import math

import numpy as np


class CompensatedSum:
    """Running scalar sum with Neumaier compensation.

    Used for the weight accumulators, which may see 10^7 additions of
    terms spanning many orders of magnitude.
    """

    __slots__ = ("_s", "_c")

    def __init__(self, value=0.0):
        self._s = float(value)
        self._c = 0.0

    def add(self, x):
        s = self._s
        t = s + x
        if abs(s) >= abs(x):
            self._c += (s - t) + x
        else:
            self._c += (x - t) + s
        self._s = t

    def scale(self, factor):
        self._s *= factor
        self._c *= factor

    @property
    def value(self):
        return self._s + self._c

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"CompensatedSum({self.value!r})"


class SignedLogSum:
    """Sum of signed terms kept as ``sign * exp(log_abs)``.

    Terms may be supplied either as floats or directly in log form, which
    lets quantities far beyond double range (e.g. divergence constants of
    badly conditioned runs) be accumulated without overflow.
    """

    __slots__ = ("log_abs", "sign")

    def __init__(self):
        self.log_abs = -math.inf
        self.sign = 0

    def add(self, value):
        if value == 0.0:
            return
        if math.isinf(value):
            self.add_log(math.inf, 1 if value > 0 else -1)
            return
        self.add_log(math.log(abs(value)), 1 if value > 0 else -1)

    def add_log(self, log_abs, sign=1):
        if sign == 0 or log_abs == -math.inf:
            return
        if self.sign == 0:
            self.log_abs, self.sign = log_abs, sign
            return
        hi, lo = max(self.log_abs, log_abs), min(self.log_abs, log_abs)
        if hi == math.inf:
            if self.sign != sign and lo == math.inf:
                raise FloatingPointError("inf - inf in signed log sum")
            self.sign = self.sign if self.log_abs == math.inf else sign
            self.log_abs = math.inf
            return
        if sign == self.sign:
            self.log_abs = hi + math.log1p(math.exp(lo - hi))
            return
        # opposite signs: the larger magnitude wins
        big_sign = self.sign if self.log_abs >= log_abs else sign
        diff = -math.expm1(lo - hi)
        if diff <= 0.0:
            self.log_abs, self.sign = -math.inf, 0
        else:
            self.log_abs, self.sign = hi + math.log(diff), big_sign

    @property
    def value(self):
        if self.sign == 0:
            return 0.0
        if self.log_abs > 709.78:
            return self.sign * math.inf
        return self.sign * math.exp(self.log_abs)

    @property
    def log10(self):
        """log10 of the magnitude (``-inf`` for an empty or zero sum)."""
        return self.log_abs / math.log(10.0)


def faulhaber(p, n):
    """Exact ``sum_{j=1}^{n} j**p`` for integer ``0 <= p <= 4`` as a float."""
    n = int(n)
    if p == 0:
        v = n
    elif p == 1:
        v = n * (n + 1) // 2
    elif p == 2:
        v = n * (n + 1) * (2 * n + 1) // 6
    elif p == 3:
        v = (n * (n + 1) // 2) ** 2
    elif p == 4:
        v = n * (n + 1) * (2 * n + 1) * (3 * n * n + 3 * n - 1) // 30
    else:
        raise ValueError(f"no closed form for p={p}")
    return float(v)


def norm2(v):
    return float(np.dot(v, v))


def norm2(x):
    """Euclidean norm, falling back to numpy's scaled version on overflow."""
    s = float(x @ x)
    if s < 1e300:
        return math.sqrt(s)
    return float(np.linalg.norm(x))
