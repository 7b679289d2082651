"""Aggregate lower-bound model kept as a single quadratic.

The dual model is a weighted sum of strongly convex quadratic lower
bounds plus affine lower bounds of the regularizer. Any such sum is again
``a + (b/2) ||y - z||^2``, so only three numbers (and the weight totals)
need to be stored no matter how many terms were folded in.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True, slots=True)
class QuadraticModel:
    """``min_value + (curvature / 2) ||y - center||^2``.

    ``center is None`` marks the empty (identically constant) model, which
    has zero curvature and no meaningful center.
    """

    min_value: float = 0.0
    curvature: float = 0.0
    center: Optional[np.ndarray] = None
    total_weight_feasible: float = 0.0
    total_weight: float = 0.0

    @classmethod
    def empty(cls):
        return cls()

    @property
    def is_empty(self):
        return self.center is None

    def evaluate(self, y):
        if self.center is None:
            return self.min_value
        r = np.asarray(y) - self.center
        return self.min_value + 0.5 * self.curvature * float(r @ r)

    def gradient(self, y):
        if self.center is None:
            return np.zeros_like(np.asarray(y, dtype=float))
        return self.curvature * (np.asarray(y) - self.center)

    def scaled(self, factor):
        """Model multiplied by ``factor > 0`` (used to renormalize weights)."""
        return replace(
            self,
            min_value=self.min_value * factor,
            curvature=self.curvature * factor,
            total_weight_feasible=self.total_weight_feasible * factor,
            total_weight=self.total_weight * factor,
        )

    def snapshot(self, with_center=True):
        out = {
            "min_value": self.min_value,
            "curvature": self.curvature,
            "total_weight_feasible": self.total_weight_feasible,
            "total_weight": self.total_weight,
        }
        if with_center:
            out["center"] = None if self.center is None else self.center.tolist()
        return out


def add_quadratic(model, a2, b2, z2):
    """Add ``a2 + (b2/2) ||y - z2||^2`` to ``model``.

    A zero-curvature addend only shifts the constant; an empty model takes
    the addend over verbatim.
    """
    if b2 < 0:
        raise ValueError("curvature must be nonnegative")
    tf, tw = model.total_weight_feasible, model.total_weight
    if b2 == 0.0:
        return QuadraticModel(model.min_value + a2, model.curvature, model.center, tf, tw)
    z2 = np.asarray(z2, dtype=float)
    b1, z1 = model.curvature, model.center
    if z1 is None or b1 == 0.0:
        return QuadraticModel(model.min_value + a2, float(b2), z2, tf, tw)
    b = b1 + b2
    dz = z1 - z2
    a = model.min_value + a2 + (b1 * b2 / (2.0 * b)) * float(dz @ dz)
    z = (b1 / b) * z1 + (b2 / b) * z2
    return QuadraticModel(a, b, z, tf, tw)


def add_linear(model, c, d):
    """Add the affine function ``c + <d, y>`` by completing the square."""
    b = model.curvature
    if model.center is None or not b > 0:
        raise ValueError("cannot fold an affine term into a model with zero curvature")
    d = np.asarray(d, dtype=float)
    z = model.center
    a = model.min_value + c + float(d @ z) - float(d @ d) / (2.0 * b)
    return QuadraticModel(a, b, z - d / b, model.total_weight_feasible, model.total_weight)


def lower_bound_term(weight, f_val, g, anchor, mu):
    """``weight * (f_val + <g, y - anchor> + (mu/2) ||y - anchor||^2)`` in normal form."""
    g = np.asarray(g, dtype=float)
    b = mu * weight
    if not b > 0:
        raise ValueError("lower-bound terms need mu * weight > 0")
    return QuadraticModel(
        min_value=weight * (f_val - float(g @ g) / (2.0 * mu)),
        curvature=b,
        center=np.asarray(anchor, dtype=float) - g / mu,
    )


def combine(model, other):
    """Sum of two models (weights included)."""
    if other.center is None:
        out = replace(model, min_value=model.min_value + other.min_value)
    else:
        out = add_quadratic(model, other.min_value, other.curvature, other.center)
    return replace(
        out,
        total_weight=model.total_weight + other.total_weight,
        total_weight_feasible=model.total_weight_feasible + other.total_weight_feasible,
    )


def minimize_with_prox(model, f_val, g, anchor, weight, mu, prox=None,
                       beta_bar=0.0, y0=None):
    """Minimize ``model + new lower bound + weight * r + (beta_bar/2)||y - y0||^2``.

    Parameters
    ----------
    model : QuadraticModel
        Aggregate of the previous terms.
    f_val, g, anchor : float, ndarray, ndarray
        Value and subgradient of the selected function at ``anchor``.
    weight : float
        Dual weight of the new term.
    prox : Regularizer or None
        Regularizer included in the step; ``None`` for infeasible steps.

    Returns
    -------
    y_next : ndarray
        The minimizer.
    n_next : ndarray
        Subgradient of ``r`` at ``y_next`` certifying optimality (zeros
        when ``prox`` is None or trivial).
    """
    # only the minimizer is needed: the center of the summed quadratics
    b_new = mu * weight
    if not b_new > 0:
        raise ValueError("lower-bound terms need mu * weight > 0")
    num = weight * (mu * np.asarray(anchor, dtype=float) - np.asarray(g, dtype=float))
    b_tot = b_new
    if model.center is not None and model.curvature > 0:
        num += model.curvature * model.center
        b_tot += model.curvature
    if beta_bar > 0:
        num += beta_bar * np.asarray(y0, dtype=float)
        b_tot += beta_bar
    z_tot = num / b_tot
    if prox is None or prox.trivial:
        return z_tot.copy(), np.zeros_like(z_tot)
    y = np.asarray(prox.prox(z_tot, weight / b_tot), dtype=float)
    return y, (b_tot / weight) * (z_tot - y)


def stationarity_subgradient(model, y_next, g, anchor, weight, mu, beta_bar=0.0, y0=None):
    """Recover ``n_{k+1}`` from the optimality condition of the model step.

    ``n = -(grad M(y) + weight (g + mu (y - anchor)) + beta_bar (y - y0)) / weight``.
    """
    v = model.gradient(y_next) + weight * (np.asarray(g) + mu * (y_next - anchor))
    if beta_bar > 0:
        v = v + beta_bar * (y_next - y0)
    return -v / weight


def primal_subgradient(x, alpha, g, x_next):
    """``n_{k+1} = (x_k - alpha_k g_k - x_{k+1}) / alpha_k`` from a prox step."""
    return (x - alpha * g - x_next) / alpha


def append_model_term(model, feasible, weight, f_val, g, anchor, mu,
                      r_next=0.0, n_next=None, y_next=None):
    """Fold one iteration's lower bound into the aggregate model.

    The quadratic ``weight (f + <g, . - anchor> + mu/2 ||. - anchor||^2)`` is
    always added; on feasible steps with a subgradient ``n_next`` of ``r``
    at ``y_next`` the affine bound ``weight (r_next + <n_next, . - y_next>)``
    is folded into the same term first.
    """
    g = np.asarray(g, dtype=float)
    c = f_val
    if feasible and n_next is not None:
        # both bounds are linearized at the anchor, so they share one center
        n_next = np.asarray(n_next, dtype=float)
        c += r_next + float(n_next @ (anchor - y_next))
        g = g + n_next
    elif feasible:
        c += r_next
    b = mu * weight
    if not b > 0:
        raise ValueError("lower-bound terms need mu * weight > 0")
    out = add_quadratic(model, weight * (c - float(g @ g) / (2.0 * mu)), b, anchor - g / mu)
    return QuadraticModel(
        out.min_value, out.curvature, out.center,
        model.total_weight_feasible + (weight if feasible else 0.0),
        model.total_weight + weight,
    )
