"""Benchmark instances with known solutions and growth constants.

Three families are provided: a sharp l1 plus least-squares objective whose
minimizer is planted, a badly conditioned 2-D quadratic that makes the
classic stepsize diverge before converging, and ball-constrained quadratics
whose KKT points are computed independently.
"""

from dataclasses import dataclass
import json
import math
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import eigsh

from .oracles import BallConstraint, L1LeastSquares, Perturbed, Quadratic
from .solvers import ProblemInstance

DENSE_EIG_MAX_N = 200


def eigen_extremes(M, tol=1e-10, max_iter=10_000):
    """Smallest and largest eigenvalue of a symmetric PSD matrix.

    Dense ``eigvalsh`` up to ``n = 200``; Lanczos beyond, accepted only when
    the Ritz residuals certify the requested relative accuracy.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(M, M.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(M).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    n = M.shape[0]
    if n <= DENSE_EIG_MAX_N:
        w = np.linalg.eigvalsh(M)
        return float(w[0]), float(w[-1])
    out = []
    for which in ("SA", "LA"):
        vals, vecs = eigsh(M, k=1, which=which, tol=tol * 1e-2, maxiter=max_iter)
        lam, v = float(vals[0]), vecs[:, 0]
        res = float(np.linalg.norm(M @ v - lam * v))
        if res > tol * max(abs(lam), 1.0) * 10:
            raise RuntimeError(f"eigenvalue iteration did not converge (residual {res:.3g})")
        out.append(lam)
    return out[0], out[1]


@dataclass
class L1LSInstance(ProblemInstance):
    """``||A x - b||_1 + 0.5 ||C x - d||^2`` with ``b = A x_opt``, ``d = C x_opt``."""

    A: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    sigma: float = 0.0
    seed: Optional[int] = None

    @property
    def condition(self):
        return self.L1 / self.mu


def l1_ls_from_matrices(A, C, x_opt, sigma=0.0, seed=None, x0=None, noise_std=0.0):
    """Build an instance from explicit matrices, planting ``x_opt`` as minimizer."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    x_opt = np.asarray(x_opt, dtype=float)
    b = A @ x_opt
    d = C @ x_opt
    lo, hi = eigen_extremes(C.T @ C)
    if not lo > 1e-12:
        raise ValueError("C^T C is not positive definite")
    row_norms = float(np.linalg.norm(A, axis=1).sum())
    n = x_opt.size
    return L1LSInstance(
        objective=L1LeastSquares(A, b, C, d),
        x0=np.zeros(n) if x0 is None else np.asarray(x0, dtype=float),
        mu=lo,
        noise_std=noise_std,
        x_opt=x_opt,
        p_star=0.0,
        n_opt=np.zeros(n),
        L0_sq=8.0 * row_norms**2,
        L1=4.0 * hi,
        M=row_norms,
        L=hi,
        name=f"l1ls(m={A.shape[0]},n={n},sigma={sigma:g},seed={seed})",
        A=A, C=C, b=b, d=d, sigma=float(sigma), seed=seed,
    )


def gen_l1_ls(m=100, n=100, sigma=0.0, seed=0, smooth=False, noise_std=0.0):
    """Random instance with ``A``, ``C~``, ``x_opt`` i.i.d. standard normal and ``C = I + sigma C~``.

    With ``smooth=True`` the l1 term is dropped (``A = 0``) after the same
    draws, so the least-squares part matches the non-smooth instance.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    Ct = rng.standard_normal((m, n))
    x_opt = rng.standard_normal(n)
    if smooth:
        A = np.zeros((m, n))
    C = np.eye(m, n) + sigma * Ct
    inst = l1_ls_from_matrices(A, C, x_opt, sigma, seed, noise_std=noise_std)
    if smooth:
        # beta-smooth objective: L0 = 0 and L1 = 2 beta
        inst.L1 = 2.0 * inst.L
        inst.name += "+smooth"
    return inst


def toy_divergent():
    """``f(u, v) = 50 u^2 + 0.5 v^2`` from ``x0 = (1, 0)``; ``mu = 1``, ``L1 = 200``, ``L0 = 0``."""
    return ProblemInstance(
        objective=Quadratic(np.array([100.0, 1.0]), np.zeros(2)),
        x0=np.array([1.0, 0.0]),
        mu=1.0,
        x_opt=np.zeros(2),
        p_star=0.0,
        n_opt=np.zeros(2),
        L0_sq=0.0,
        L1=200.0,
        M=None,
        L=100.0,
        name="toy",
    )


def assumption_c_constants(M=0.0, L=0.0, sigma_sq=0.0, slack=0.0):
    """``(L0^2, L1) = (6 M^2 + sigma^2 + 6 L slack, 6 L)``."""
    for name, v in (("M", M), ("L", L), ("sigma_sq", sigma_sq), ("slack", slack)):
        if v < 0:
            raise ValueError(f"{name} must be nonnegative")
    return 6.0 * M * M + sigma_sq + 6.0 * L * slack, 6.0 * L


def strongly_convexify(instance, epsilon, D, x0=None):
    """Add ``(epsilon / 2 D^2) ||x - x0||^2`` to a convex objective.

    The perturbed optimal value is only known to lie in
    ``[p*, p* + epsilon ||x_opt - x0||^2 / (2 D^2)]``; that interval is stored
    in ``meta["p_star_interval"]`` and ``p_star`` is left unset.
    """
    if not (epsilon > 0 and D > 0):
        raise ValueError("epsilon and D must be positive")
    anchor = instance.x0 if x0 is None else np.asarray(x0, dtype=float)
    coef = epsilon / D**2
    meta = dict(instance.meta)
    if instance.p_star is not None and instance.x_opt is not None:
        r = instance.x_opt - anchor
        meta["p_star_interval"] = (instance.p_star, instance.p_star + 0.5 * coef * float(r @ r))
    L0_sq = None
    if instance.M is not None:
        L0_sq, _ = assumption_c_constants(M=instance.M)
    return ProblemInstance(
        objective=Perturbed(instance.objective, coef, anchor),
        x0=anchor.copy(),
        mu=instance.mu + coef,
        constraints=instance.constraints,
        reg=instance.reg,
        noise_std=instance.noise_std,
        M=instance.M,
        L0_sq=L0_sq,
        L1=0.0 if L0_sq is not None else None,
        name=f"{instance.name}+eps{epsilon:g}",
        meta=meta,
    )


# -- ball-constrained quadratics -------------------------------------------------

def ball_kkt(c, centers, rhos, tol=1e-13):
    """Solve ``min 0.5||x - c||^2  s.t.  0.5||x - a_s||^2 <= rho_s``.

    Maximizes the smooth concave dual over ``u >= 0`` and then polishes the
    active set with a root solve. Returns ``(x, u)``.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(centers, dtype=float)
    rho = np.asarray(rhos, dtype=float)
    m = len(rho)

    def x_of(u):
        return (c + u @ A) / (1.0 + u.sum())

    def neg_dual(u):
        x = x_of(u)
        fs = 0.5 * ((x - A) ** 2).sum(axis=1) - rho
        val = 0.5 * float((x - c) @ (x - c)) + float(u @ fs)
        return -val, -fs

    res = optimize.minimize(neg_dual, np.zeros(m), jac=True, method="L-BFGS-B",
                            bounds=[(0.0, None)] * m,
                            options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 10_000})
    u = np.maximum(res.x, 0.0)
    active = np.nonzero(u > 1e-9)[0]
    if active.size:
        def eqs(ua):
            uu = np.zeros(m)
            uu[active] = ua
            x = x_of(uu)
            return 0.5 * ((x - A[active]) ** 2).sum(axis=1) - rho[active]
        sol = optimize.root(eqs, u[active], tol=tol)
        # hybr can report "no progress" at machine precision, so judge by the residual
        good = np.abs(sol.fun).max() <= 1e-12 * (1.0 + float(np.abs(rho).max()))
        if good and np.all(sol.x >= 0):
            u = np.zeros(m)
            u[active] = sol.x
    x = x_of(u)
    fs = 0.5 * ((x - A) ** 2).sum(axis=1) - rho
    scale = 1.0 + float(np.abs(rho).max())
    if fs.max() > 1e-8 * scale or np.abs(u * fs).max() > 1e-8 * scale:
        raise RuntimeError("KKT solve failed")
    return x, u


def constrained_instance(c, centers, rhos, x_sl, x0=None, name="constrained", seed=None):
    """Quadratic objective ``0.5||x - c||^2`` under ball constraints with a Slater point."""
    c = np.asarray(c, dtype=float)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    rhos = np.asarray(rhos, dtype=float)
    x_sl = np.asarray(x_sl, dtype=float)
    cons = tuple(BallConstraint(a, r) for a, r in zip(centers, rhos))
    if max(f.value(x_sl) for f in cons) >= 0:
        raise ValueError("x_sl is not a Slater point")
    x_opt, u = ball_kkt(c, centers, rhos)
    obj = Quadratic(np.ones_like(c), c)
    refs = (x_opt, x_sl)
    # ||g_0(x)||^2 = 2 f_0(x) = 2 delta + 2 f_0(y), ||g_s(x)||^2 = 2 delta + ||y - a_s||^2
    L0_sq = max([2.0 * obj.value(y) for y in refs]
                + [float((y - a) @ (y - a)) for y in refs for a in centers])
    return ProblemInstance(
        objective=obj,
        x0=c.copy() if x0 is None else np.asarray(x0, dtype=float),
        mu=1.0,
        constraints=cons,
        x_opt=x_opt,
        x_sl=x_sl,
        p_star=obj.value(x_opt),
        n_opt=np.zeros_like(c),
        n_sl=np.zeros_like(c),
        L0_sq=L0_sq,
        L1=2.0,
        L=1.0,
        h_gap_sl=obj.value(x_sl),
        name=name,
        meta={"kkt_multipliers": u, "c": c, "centers": centers, "rhos": rhos, "seed": seed},
    )


def gen_constrained(n=2, m_constraints=2, seed=0, margin=0.1, max_tries=100):
    """Random ball-constrained quadratic whose constraints are active at the solution.

    Centers are drawn around the origin, the Slater point is their centroid
    and each ``rho_s`` is inflated until ``f_s(x_sl) <= -margin``. The
    objective center ``c`` is placed outside the intersection.
    """
    if m_constraints < 1:
        raise ValueError("need at least one constraint")
    if n > 10:
        raise ValueError("the KKT reference is limited to n <= 10")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        centers = rng.standard_normal((m_constraints, n))
        x_sl = centers.mean(axis=0)
        rhos = 0.5 * ((x_sl - centers) ** 2).sum(axis=1) + margin + rng.uniform(0.0, 0.5, m_constraints)
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        c = x_sl + (2.0 + 2.0 * rng.uniform()) * direction * math.sqrt(2.0 * rhos.max())
        try:
            inst = constrained_instance(c, centers, rhos, x_sl, name=f"constrained(n={n},m={m_constraints},seed={seed})",
                                        seed=seed)
        except (RuntimeError, ValueError):
            continue
        return inst
    raise RuntimeError("could not generate a constrained instance")


# -- serialization ----------------------------------------------------------------

def _arr(v):
    return None if v is None else np.asarray(v).tolist()


def instance_to_dict(inst):
    if isinstance(inst, L1LSInstance):
        return {"family": "l1ls", "A": _arr(inst.A), "C": _arr(inst.C), "x_opt": _arr(inst.x_opt),
                "x0": _arr(inst.x0), "sigma": inst.sigma, "seed": inst.seed,
                "noise_std": inst.noise_std,
                "constants": {"mu": inst.mu, "L0_sq": inst.L0_sq, "L1": inst.L1}}
    if inst.name == "toy":
        return {"family": "toy"}
    if inst.meta.get("family") == "quadratic":
        return {"family": "quadratic", "n": inst.meta["n"], "seed": inst.meta["seed"]}
    if "centers" in inst.meta:
        return {"family": "constrained", "c": _arr(inst.meta["c"]), "centers": _arr(inst.meta["centers"]),
                "rhos": _arr(inst.meta["rhos"]), "x_sl": _arr(inst.x_sl), "x0": _arr(inst.x0),
                "seed": inst.meta.get("seed"), "name": inst.name}
    raise ValueError(f"cannot serialize instance {inst.name!r}")


def instance_from_dict(d):
    fam = d["family"]
    if fam == "l1ls":
        return l1_ls_from_matrices(d["A"], d["C"], d["x_opt"], d.get("sigma", 0.0), d.get("seed"),
                                   x0=d.get("x0"), noise_std=d.get("noise_std", 0.0))
    if fam == "toy":
        return toy_divergent()
    if fam == "quadratic":
        return gen_quadratic(d["n"], d["seed"])
    if fam == "constrained":
        return constrained_instance(d["c"], d["centers"], d["rhos"], d["x_sl"], d.get("x0"),
                                    d.get("name", "constrained"), d.get("seed"))
    raise ValueError(f"unknown instance family {fam!r}")


def dump_instance(inst, path):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh)


def load_instance(path):
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def gen_quadratic(n=10, seed=0, mu=1.0, L=20.0):
    """Random ``0.5 (x - c)^T H (x - c)`` with spectrum in ``[mu, L]``, started at ``x0 = 0``."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    spec = np.concatenate([[mu, L], rng.uniform(mu, L, max(n - 2, 0))])[:n]
    H = (Q * spec) @ Q.T
    H = 0.5 * (H + H.T)
    c = rng.standard_normal(n)
    return ProblemInstance(
        objective=Quadratic(H, c),
        x0=np.zeros(n),
        mu=mu,
        x_opt=c,
        p_star=0.0,
        n_opt=np.zeros(n),
        L0_sq=0.0,
        L1=2.0 * L,
        L=L,
        name=f"quadratic(n={n},seed={seed})",
        meta={"family": "quadratic", "n": n, "seed": seed},
    )
