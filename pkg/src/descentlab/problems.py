"""Synthetic test problems, their exact minimizers, and the constants the bounds consume.

Every problem is a finite sum f(x) = (1/n) * sum_i f_i(x) with per-term value and
(sub)gradient oracles.  Builders return the problem together with its ground truth
(minimizer, infimum, per-term infima) and the full set of constants needed by the
convergence bounds: smoothness L and per-term L_i, strong convexity mu, the
quadratic-growth modulus mu_pl, the gradient noise sigma*_f, the function noise
Delta*_f, and for nonsmooth problems the subgradient bound G on a solution ball
of radius B.

Problem objects are immutable after construction; all oracles are pure functions
of (i, x) and safe to share across concurrent workers.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .nonsmooth import Regularizer, prox

__all__ = [
    "FiniteSumProblem",
    "GroundTruth",
    "ProblemConstants",
    "CompositeProblem",
    "Fixture",
    "build_least_squares",
    "build_scalar_pl",
    "build_abs_loss",
    "build_custom",
    "minibatch_constants",
    "make_composite",
    "composite_noise",
    "gradient_variance",
    "fixture",
    "fixture_names",
]

# Relative eigenvalue cutoff separating "zero" from "nonzero" when ranking the
# spectrum of (1/n) Phi^T Phi.
_EIG_CUTOFF = 1e-10


@dataclass(frozen=True)
class FiniteSumProblem:
    """Oracle bundle for f = (1/n) sum_i f_i.

    ``kind`` is one of ``least_squares``, ``abs_loss``, ``scalar_pl``, ``custom``.
    For nondifferentiable kinds, ``grad_i`` returns a fixed subgradient selection
    (sign convention: 0 at kinks).
    """

    kind: str
    n: int
    d: int
    data: dict = field(default_factory=dict, repr=False)
    value_i_fn: Optional[Callable[[int, np.ndarray], float]] = field(default=None, repr=False)
    grad_i_fn: Optional[Callable[[int, np.ndarray], np.ndarray]] = field(default=None, repr=False)
    default_x0: np.ndarray = field(default=None, repr=False)
    differentiable: bool = True

    def value_i(self, i: int, x: np.ndarray) -> float:
        if self.kind == "least_squares":
            r = float(self.data["features"][i] @ x - self.data["targets"][i])
            return 0.5 * r * r
        if self.kind == "abs_loss":
            r = float(self.data["rows"][i] @ x - self.data["targets"][i])
            return abs(r) + 0.5 * self.data["strong_mu"] * float(x @ x)
        if self.kind == "scalar_pl":
            t = float(x[0])
            return t * t + 3.0 * math.sin(t) ** 2
        return self.value_i_fn(i, x)

    def grad_i(self, i: int, x: np.ndarray) -> np.ndarray:
        if self.kind == "least_squares":
            phi = self.data["features"][i]
            return (phi @ x - self.data["targets"][i]) * phi
        if self.kind == "abs_loss":
            a = self.data["rows"][i]
            s = np.sign(float(a @ x - self.data["targets"][i]))
            return s * a + self.data["strong_mu"] * x
        if self.kind == "scalar_pl":
            t = float(x[0])
            return np.array([2.0 * t + 3.0 * math.sin(2.0 * t)])
        return self.grad_i_fn(i, x)

    def value(self, x: np.ndarray) -> float:
        if self.kind == "least_squares":
            r = self.data["features"] @ x - self.data["targets"]
            return 0.5 * float(r @ r) / self.n
        if self.kind == "abs_loss":
            r = self.data["rows"] @ x - self.data["targets"]
            return float(np.abs(r).mean()) + 0.5 * self.data["strong_mu"] * float(x @ x)
        if self.kind == "scalar_pl":
            return self.value_i(0, x)
        return sum(self.value_i_fn(i, x) for i in range(self.n)) / self.n

    def grad(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "least_squares":
            r = self.data["features"] @ x - self.data["targets"]
            return (self.data["features"].T @ r) / self.n
        if self.kind == "abs_loss":
            r = self.data["rows"] @ x - self.data["targets"]
            return (self.data["rows"].T @ np.sign(r)) / self.n + self.data["strong_mu"] * x
        if self.kind == "scalar_pl":
            return self.grad_i(0, x)
        g = np.zeros(self.d)
        for i in range(self.n):
            g += self.grad_i_fn(i, x)
        return g / self.n


@dataclass(frozen=True)
class GroundTruth:
    """A minimizer of f, its infimum, and the per-term infima."""

    x_star: np.ndarray
    inf_f: float
    inf_f_i: tuple
    provenance: str  # "closed_form" | "reference_solver"


@dataclass(frozen=True)
class ProblemConstants:
    """Every constant the convergence bounds consume.

    ``mu`` is 0 when the problem is not (known) strongly convex, ``mu_pl`` is 0
    when no quadratic-growth modulus is known.  ``G`` and ``B`` are only
    populated for bounded-subgradient problems; ``L`` is +inf for nonsmooth f.
    """

    n: int
    L: float
    L_i: tuple
    L_max: float
    L_avg: float
    mu: float
    mu_pl: float
    sigma_star_f: float
    delta_star_f: float
    G: float = 0.0
    B: float = 0.0


@dataclass(frozen=True)
class CompositeProblem:
    """Composite objective F = f + g with reference minimizer of F."""

    smooth: FiniteSumProblem
    reg: Regularizer
    x_star_F: np.ndarray
    inf_F: float
    sigma_star_F: float

    def value(self, x: np.ndarray) -> float:
        g = self.reg.value(x)
        if not np.isfinite(g):
            return math.inf
        return self.smooth.value(x) + g


@dataclass(frozen=True)
class Fixture:
    """A named problem bundle from the embedded catalogue."""

    name: str
    problem: FiniteSumProblem
    ground_truth: GroundTruth
    constants: ProblemConstants
    regularizer: Optional[Regularizer] = None
    composite: Optional[CompositeProblem] = None


def gradient_variance(problem: FiniteSumProblem, x: np.ndarray) -> float:
    """(1/n) sum_i ||grad f_i(x) - grad f(x)||^2."""
    grads = np.array([problem.grad_i(i, x) for i in range(problem.n)])
    mean = grads.mean(axis=0)
    return float(np.sum((grads - mean) ** 2) / problem.n)


def _check_matrix(features, targets, mat_name: str):
    features = np.atleast_2d(np.asarray(features, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if features.size == 0 or features.shape[0] < 1 or features.shape[1] < 1:
        raise ValueError(f"{mat_name} must have n >= 1 rows and d >= 1 columns")
    if not (np.isfinite(features).all() and np.isfinite(targets).all()):
        raise ValueError(f"{mat_name}/targets must be finite")
    if targets.shape[0] != features.shape[0]:
        raise ValueError("targets length must match row count")
    return features, targets


def build_least_squares(features, targets):
    """Least squares f_i(x) = 0.5*(<phi_i, x> - y_i)^2, f = (1/n) sum f_i.

    Constants come from the symmetric eigen-decomposition of (1/n) Phi^T Phi:
    L is the largest eigenvalue, mu the smallest if positive, mu_pl the smallest
    nonzero eigenvalue (cutoff 1e-10 * lambda_max).  The minimizer is the
    minimum-norm solution of the normal equations; sigma*_f and Delta*_f are
    evaluated exactly from the residuals there.
    """
    features, targets = _check_matrix(features, targets, "features")
    n, d = features.shape
    problem = FiniteSumProblem(
        kind="least_squares",
        n=n,
        d=d,
        data={"features": features, "targets": targets},
        default_x0=np.zeros(d),
    )

    H = features.T @ features / n
    eigs = np.linalg.eigvalsh(H)
    lam_max = float(eigs[-1])
    L = lam_max
    L_i = tuple(float(r @ r) for r in features)
    L_max = max(L_i)
    L_avg = sum(L_i) / n
    cutoff = _EIG_CUTOFF * max(lam_max, 1e-300)
    lam_min = float(eigs[0])
    mu = lam_min if lam_min > cutoff else 0.0
    nonzero = eigs[eigs > cutoff]
    mu_pl = float(nonzero[0]) if nonzero.size else 0.0

    x_star = np.linalg.lstsq(features, targets, rcond=None)[0]
    inf_f = problem.value(x_star)
    sigma_star_f = gradient_variance(problem, x_star)
    delta_star_f = inf_f  # inf f_i = 0 for every term

    gt = GroundTruth(x_star=x_star, inf_f=inf_f, inf_f_i=(0.0,) * n, provenance="closed_form")
    consts = ProblemConstants(
        n=n, L=L, L_i=L_i, L_max=L_max, L_avg=L_avg, mu=mu, mu_pl=mu_pl,
        sigma_star_f=sigma_star_f, delta_star_f=delta_star_f,
    )
    return problem, gt, consts


def build_scalar_pl():
    """The 1-d nonconvex benchmark f(t) = t^2 + 3 sin(t)^2.

    f is 8-smooth (f'' = 2 + 6 cos 2t), has inf f = 0 at t = 0, and satisfies the
    gradient-dominance inequality with modulus 1/40 while not being convex.
    """
    problem = FiniteSumProblem(
        kind="scalar_pl", n=1, d=1, data={}, default_x0=np.array([3.0]),
    )
    gt = GroundTruth(x_star=np.zeros(1), inf_f=0.0, inf_f_i=(0.0,), provenance="closed_form")
    consts = ProblemConstants(
        n=1, L=8.0, L_i=(8.0,), L_max=8.0, L_avg=8.0, mu=0.0, mu_pl=1.0 / 40.0,
        sigma_star_f=0.0, delta_star_f=0.0,
    )
    return problem, gt, consts


def _abs_reference_solve(problem: FiniteSumProblem, ball_B: float, strong_mu: float):
    """Reference minimizer: projected subgradient descent with tail averaging,
    polished with a derivative-free local search, then (when the minimizer may be
    non-unique) shrunk toward the origin for a minimum-norm representative."""
    n, d = problem.n, problem.d
    rows = problem.data["rows"]
    G = float(np.max(np.linalg.norm(rows, axis=1))) + strong_mu * ball_B
    rng = np.random.default_rng(123456789)
    T = 60_000
    idx = (rng.random(T) * n).astype(np.int64)
    x = np.zeros(d)
    tail_from = T // 2
    acc = np.zeros(d)
    scale = ball_B / max(G, 1e-12)
    for t in range(T):
        g = problem.grad_i(int(idx[t]), x)
        x = x - (scale / math.sqrt(t + 1.0)) * g
        nx = float(np.linalg.norm(x))
        if nx > ball_B:
            x = x * (ball_B / nx)
        if t >= tail_from:
            acc += x
    xbar = acc / (T - tail_from)

    res = _scipy_minimize(
        problem.value, xbar, method="Nelder-Mead",
        options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 20_000, "maxfev": 40_000},
    )
    cand = res.x if res.fun <= problem.value(xbar) else xbar
    fbest = problem.value(cand)

    if strong_mu == 0.0 and np.linalg.norm(cand) > 0:
        # minimum-norm representative: smallest s with f(s * cand) still optimal
        tol = 1e-12 * (1.0 + abs(fbest))
        lo, hi = 0.0, 1.0
        if problem.value(0.0 * cand) <= fbest + tol:
            hi = 0.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if problem.value(mid * cand) <= fbest + tol:
                hi = mid
            else:
                lo = mid
        cand = hi * cand
        fbest = min(fbest, problem.value(cand))
    return np.asarray(cand, dtype=float), float(fbest)


def build_abs_loss(rows, targets, strong_mu: float = 0.0, ball_B: float = 1.0):
    """Absolute loss f_i(x) = |<a_i, x> - b_i| + (strong_mu/2) ||x||^2.

    Subgradients are bounded on the ball of radius ball_B by
    G = max_i ||a_i|| + strong_mu * ball_B.  The minimizer comes from a pinned
    reference solver and must lie inside the ball (error otherwise).
    """
    rows, targets = _check_matrix(rows, targets, "rows")
    if strong_mu < 0:
        raise ValueError("strong_mu must be >= 0")
    if ball_B <= 0:
        raise ValueError("ball_B must be > 0")
    n, d = rows.shape
    problem = FiniteSumProblem(
        kind="abs_loss", n=n, d=d,
        data={"rows": rows, "targets": targets, "strong_mu": float(strong_mu)},
        default_x0=np.zeros(d),
        differentiable=False,
    )

    x_star, inf_f = _abs_reference_solve(problem, ball_B, strong_mu)
    if np.linalg.norm(x_star) > ball_B * (1.0 - 1e-9):
        raise ValueError(
            f"reference minimizer sits on the ball boundary (|x*| = "
            f"{np.linalg.norm(x_star):.6g}); increase ball_B beyond {ball_B}"
        )

    inf_f_i = []
    for i in range(n):
        a2 = float(rows[i] @ rows[i])
        b = float(targets[i])
        if a2 == 0.0:
            inf_f_i.append(abs(b))
        elif strong_mu == 0.0:
            inf_f_i.append(0.0)
        else:
            c = strong_mu / (2.0 * a2)
            thr = 1.0 / (2.0 * c)
            inf_f_i.append(c * b * b if abs(b) <= thr else abs(b) - 1.0 / (4.0 * c))

    G = float(np.max(np.linalg.norm(rows, axis=1))) + strong_mu * ball_B
    gt = GroundTruth(
        x_star=x_star, inf_f=inf_f, inf_f_i=tuple(inf_f_i), provenance="reference_solver",
    )
    consts = ProblemConstants(
        n=n, L=math.inf, L_i=(math.inf,) * n, L_max=math.inf, L_avg=math.inf,
        mu=float(strong_mu), mu_pl=0.0,
        sigma_star_f=gradient_variance(problem, x_star),
        delta_star_f=inf_f - sum(inf_f_i) / n,
        G=G, B=float(ball_B),
    )
    return problem, gt, consts


def build_custom(n, d, value_i, grad_i, x0=None):
    """Finite sum from user callables (no constants derived)."""
    return FiniteSumProblem(
        kind="custom", n=n, d=d, value_i_fn=value_i, grad_i_fn=grad_i,
        default_x0=np.zeros(d) if x0 is None else np.asarray(x0, dtype=float),
    )


def minibatch_constants(constants: ProblemConstants, b: int):
    """Expected-smoothness and gradient-noise constants for batch size b.

    L_b = n(b-1)/(b(n-1)) * L + (n-b)/(b(n-1)) * L_max and
    sigma_b = (n-b)/(b(n-1)) * sigma*_f.  At b = 1 this is (L_max, sigma*_f);
    at b = n it is (L, 0).
    """
    n = constants.n
    if not (isinstance(b, (int, np.integer)) and 1 <= b <= n):
        raise ValueError(f"batch size b={b} out of range [1, {n}]")
    if n == 1:
        return constants.L, 0.0
    w_full = n * (b - 1) / (b * (n - 1))
    w_single = (n - b) / (b * (n - 1))
    L_b = w_full * constants.L + w_single * constants.L_max
    sigma_b = w_single * constants.sigma_star_f
    return float(L_b), float(sigma_b)


def make_composite(
    problem: FiniteSumProblem,
    constants: ProblemConstants,
    reg: Regularizer,
    x0: Optional[np.ndarray] = None,
    max_iters: int = 10**6,
    tol: float = 1e-12,
) -> CompositeProblem:
    """Build F = f + g with a reference minimizer of F.

    The reference solve is forward-backward iteration at step 1/L, run until the
    fixed-point residual ||x - prox_{g/L}(x - grad f(x)/L)|| falls below
    tol * (1 + ||x||), with a hard iteration budget.
    """
    if not np.isfinite(constants.L) or constants.L <= 0:
        raise ValueError("composite reference solve needs finite smoothness L > 0")
    gamma = 1.0 / constants.L
    x = problem.default_x0.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    x = prox(reg, gamma, x)  # start feasible
    residual = math.inf
    for _ in range(max_iters):
        x_next = prox(reg, gamma, x - gamma * problem.grad(x))
        residual = float(np.linalg.norm(x_next - x))
        x = x_next
        if residual <= tol * (1.0 + float(np.linalg.norm(x))):
            break
    else:
        raise RuntimeError(
            f"composite reference solver did not converge: fixed-point residual "
            f"{residual:.3e} after {max_iters} iterations"
        )
    g_val = reg.value(x)
    inf_F = problem.value(x) + g_val
    sigma_star_F = gradient_variance(problem, x)
    return CompositeProblem(
        smooth=problem, reg=reg, x_star_F=x, inf_F=float(inf_F), sigma_star_F=sigma_star_F,
    )


def composite_noise(composite: CompositeProblem) -> float:
    """Gradient variance of the smooth terms at the composite minimizer."""
    return gradient_variance(composite.smooth, composite.x_star_F)


# ---------------------------------------------------------------------------
# Embedded fixture catalogue
# ---------------------------------------------------------------------------

_LS_4X2 = (np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]]),
           np.array([1.0, 1.0, 0.0, 0.0]))
_LS_6X2 = (np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0], [2.0, 0.0], [0.0, 2.0]]),
           np.array([1.0, 1.0, 0.0, 0.0, 1.0, -1.0]))
_ABS_2X1 = (np.array([[1.0], [1.0]]), np.array([1.0, -1.0]))


def _fx_ls_4x2():
    p, gt, c = build_least_squares(*_LS_4X2)
    return Fixture("ls_4x2", p, gt, c)


def _fx_ls_6x2():
    p, gt, c = build_least_squares(*_LS_6X2)
    return Fixture("ls_6x2", p, gt, c)


def _fx_scalar_pl():
    p, gt, c = build_scalar_pl()
    return Fixture("scalar_pl", p, gt, c)


def _fx_abs_2x1():
    p, gt, c = build_abs_loss(*_ABS_2X1, strong_mu=0.0, ball_B=2.0)
    return Fixture("abs_2x1", p, gt, c)


def _fx_abs_2x1_reg():
    p, gt, c = build_abs_loss(*_ABS_2X1, strong_mu=0.5, ball_B=2.0)
    return Fixture("abs_2x1_reg", p, gt, c)


def _fx_lasso_4x2():
    p, gt, c = build_least_squares(*_LS_4X2)
    reg = Regularizer.l1(0.1)
    comp = make_composite(p, c, reg)
    return Fixture("lasso_4x2", p, gt, c, regularizer=reg, composite=comp)


_CATALOGUE = {
    "ls_4x2": _fx_ls_4x2,
    "ls_6x2": _fx_ls_6x2,
    "scalar_pl": _fx_scalar_pl,
    "abs_2x1": _fx_abs_2x1,
    "abs_2x1_reg": _fx_abs_2x1_reg,
    "lasso_4x2": _fx_lasso_4x2,
}

_FIXTURE_CACHE: dict = {}


def fixture_names():
    return sorted(_CATALOGUE)


def _fixture_from_file(path: str) -> Fixture:
    with open(path) as fh:
        spec = json.load(fh)
    name = os.path.splitext(os.path.basename(path))[0]
    kind = spec.get("kind")
    if kind == "least_squares":
        p, gt, c = build_least_squares(spec["features"], spec["targets"])
    elif kind == "abs_loss":
        p, gt, c = build_abs_loss(
            spec["rows"], spec["targets"],
            strong_mu=spec.get("strong_mu", 0.0), ball_B=spec.get("ball_B", 1.0),
        )
    elif kind == "scalar_pl":
        p, gt, c = build_scalar_pl()
    else:
        raise ValueError(f"unsupported fixture kind {kind!r} in {path}")
    reg = comp = None
    if "regularizer" in spec:
        reg = Regularizer.from_config(spec["regularizer"])
        comp = make_composite(p, c, reg)
    return Fixture(name, p, gt, c, regularizer=reg, composite=comp)


def fixture(name: str) -> Fixture:
    """Look up a problem bundle by name, building and caching on first use.

    Searches the embedded catalogue first, then `$DESCENTLAB_FIXTURES/<name>.json`.
    """
    if name in _FIXTURE_CACHE:
        return _FIXTURE_CACHE[name]
    if name in _CATALOGUE:
        fx = _CATALOGUE[name]()
    else:
        ext_dir = os.environ.get("DESCENTLAB_FIXTURES")
        path = os.path.join(ext_dir, f"{name}.json") if ext_dir else None
        if path and os.path.exists(path):
            fx = _fixture_from_file(path)
        else:
            raise KeyError(f"unknown fixture {name!r}; available: {fixture_names()}")
    _FIXTURE_CACHE[name] = fx
    return fx
