"""Closed-form convergence bounds and iteration-complexity calculators.

Each supported setting exposes the exact right-hand side of its convergence
guarantee as a `BoundCurve` with a validity window, and (where a stepsize
recommendation exists) an iteration count sufficient to reach a target accuracy.
All logarithms are natural.

Conventions adopted here (documented in the README):
  * the sublinear rate for full-gradient descent is stated for gamma = 1/L;
  * strongly convex single-sample and minibatch rates accept the closed
    endpoint gamma = 1/(2*L_max) (resp. 1/(2*L_b)), which their derivations
    support, while the averaged convex rates require the strict inequality so
    that averaging weights stay positive;
  * the momentum horizon complexity is stated so that plugging the recommended
    eta back into the momentum bound meets the target exactly;
  * the finite-horizon subgradient recommendation is gamma = D/(G*sqrt(T)) with
    T >= D^2 G^2 / eps^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .algorithms import StepSchedule
from .problems import ProblemConstants, minibatch_constants

__all__ = [
    "SETTINGS",
    "InitState",
    "BoundCurve",
    "ComplexityAnswer",
    "bound_curve",
    "complexity_iterations",
    "complexity_table",
    "table_to_text",
    "table_to_csv",
    "contraction_iterations",
    "linear_plus_constant",
    "answer_schedule",
]

SETTINGS = (
    "gd_convex", "gd_strongly_convex", "gd_pl",
    "sgd_convex_general", "sgd_convex_const", "sgd_convex_invsqrt",
    "sgd_strongly_convex", "sgd_pl",
    "mini_convex_general", "mini_convex_const", "mini_strongly_convex",
    "momentum_convex",
    "ssd_convex_general", "ssd_convex_invsqrt", "pssd_convex", "ssd_strongly_convex",
    "pgd_convex", "pgd_strongly_convex",
    "spgd_convex_general", "spgd_convex_const", "spgd_convex_invsqrt",
    "spgd_strongly_convex",
)

_DETERMINISTIC = ("gd_convex", "gd_strongly_convex", "gd_pl", "pgd_convex", "pgd_strongly_convex")


@dataclass(frozen=True)
class InitState:
    """Initial quantities the bounds depend on.

    D2 is the squared distance from x0 to the reference minimizer (of f, or of
    F for composite settings); f0_gap / F0_gap are initial objective gaps.
    """

    D2: float = math.nan
    f0_gap: float = math.nan
    F0_gap: float = math.nan


@dataclass(frozen=True)
class BoundCurve:
    """Theoretical upper bound t -> bound(t) for one convergence guarantee."""

    setting: str
    constants: ProblemConstants
    schedule: StepSchedule
    init: InitState
    min_t: int
    eval_fn: Callable[[int], float] = field(repr=False)

    @property
    def deterministic(self) -> bool:
        return self.setting in _DETERMINISTIC

    def eval(self, t: int) -> float:
        if t < self.min_t:
            raise ValueError(
                f"{self.setting} bound is valid for t >= {self.min_t}, got t={t}"
            )
        return self.eval_fn(int(t))


def _hyp(condition: bool, constraint: str):
    if not condition:
        raise ValueError(f"hypothesis violated: {constraint}")


def _need(value: float, name: str) -> float:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        raise ValueError(f"missing constant: {name}")
    return float(value)


def _gamma_sums(schedule: StepSchedule, t: int, L_ref: float):
    g = np.array([schedule.gamma_at(k) for k in range(t)])
    w = g * (1.0 - 2.0 * g * L_ref)
    return float(w.sum()), float((g * g).sum())


def bound_curve(
    setting: str,
    constants: ProblemConstants,
    schedule: StepSchedule,
    init: InitState,
    b: Optional[int] = None,
    sigma_star_F: Optional[float] = None,
) -> BoundCurve:
    """Build the exact bound curve for a setting, validating its hypotheses.

    Minibatch settings need the batch size ``b``; composite stochastic settings
    need ``sigma_star_F``.  Hypothesis violations raise ValueError naming the
    violated constraint.
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}")
    c = constants
    D2, f0, F0 = init.D2, init.f0_gap, init.F0_gap
    min_t = 0

    if setting in ("gd_convex", "gd_strongly_convex", "gd_pl", "pgd_convex", "pgd_strongly_convex"):
        _hyp(schedule.is_constant, "constant stepsize required")
        g = schedule.gamma
        _hyp(np.isfinite(c.L) and 0 < g <= 1.0 / c.L, "gamma <= 1/L")
        if setting == "gd_convex":
            D2 = _need(D2, "D2")
            min_t, fn = 1, lambda t: D2 / (2.0 * g * t)
        elif setting == "gd_strongly_convex":
            _hyp(c.mu > 0, "mu > 0")
            D2 = _need(D2, "D2")
            fn = lambda t: (1.0 - g * c.mu) ** t * D2
        elif setting == "gd_pl":
            _hyp(c.mu_pl > 0, "mu_pl > 0")
            f0 = _need(f0, "f0_gap")
            fn = lambda t: (1.0 - g * c.mu_pl) ** t * f0
        elif setting == "pgd_convex":
            D2 = _need(D2, "D2")
            min_t, fn = 1, lambda t: D2 / (2.0 * g * t)
        else:  # pgd_strongly_convex
            _hyp(c.mu > 0, "mu > 0")
            D2 = _need(D2, "D2")
            fn = lambda t: (1.0 - g * c.mu) ** t * D2

    elif setting.startswith("sgd_convex") or setting.startswith("mini_convex"):
        if setting.startswith("mini"):
            if b is None:
                raise ValueError("minibatch settings need the batch size b")
            L_ref, sigma = minibatch_constants(c, b)
        else:
            L_ref, sigma = c.L_max, c.sigma_star_f
        _need(sigma, "sigma_star_f")
        D2 = _need(D2, "D2")
        half = 1.0 / (2.0 * L_ref)
        if setting.endswith("general"):
            # constant and inv_sqrt schedules both peak at t = 0
            _hyp(schedule.gamma_at(0) < half, "gamma_t < 1/(2 L_ref) for all t")
            min_t = 1

            def fn(t, _s=schedule, _L=L_ref, _D2=D2, _sig=sigma):
                wsum, g2sum = _gamma_sums(_s, t, _L)
                return _D2 / (2.0 * wsum) + _sig * g2sum / wsum
        elif setting.endswith("const"):
            _hyp(schedule.is_constant, "constant stepsize required")
            g = schedule.gamma
            _hyp(g < half, "gamma < 1/(2 L_ref)")
            denom = 1.0 - 2.0 * g * L_ref
            min_t = 1
            fn = lambda t: D2 / (2.0 * g * denom * t) + g * sigma / denom
        else:  # invsqrt
            _hyp(schedule.kind == "inv_sqrt", "inv_sqrt stepsize required")
            g0 = schedule.gamma0
            _hyp(g0 < half, "gamma0 < 1/(2 L_ref)")
            min_t = 49
            fn = lambda t: D2 / (2.0 * g0 * math.sqrt(t)) + g0 * math.log(t) * sigma / math.sqrt(t)

    elif setting in ("sgd_strongly_convex", "mini_strongly_convex"):
        _hyp(schedule.is_constant, "constant stepsize required")
        _hyp(c.mu > 0, "mu > 0")
        if setting.startswith("mini"):
            if b is None:
                raise ValueError("minibatch settings need the batch size b")
            L_ref, sigma = minibatch_constants(c, b)
        else:
            L_ref, sigma = c.L_max, c.sigma_star_f
        g = schedule.gamma
        _hyp(g <= 1.0 / (2.0 * L_ref), "gamma <= 1/(2 L_ref)")
        D2 = _need(D2, "D2")
        fn = lambda t: (1.0 - g * c.mu) ** t * D2 + 2.0 * g * sigma / c.mu

    elif setting == "sgd_pl":
        _hyp(schedule.is_constant, "constant stepsize required")
        _hyp(c.mu_pl > 0, "mu_pl > 0")
        _hyp(np.isfinite(c.L), "finite L")
        g = schedule.gamma
        _hyp(g <= c.mu_pl / (c.L * c.L_max), "gamma <= mu_pl/(L_f L_max)")
        f0 = _need(f0, "f0_gap")
        delta = _need(c.delta_star_f, "delta_star_f")
        fn = lambda t: (1.0 - g * c.mu_pl) ** t * f0 + g * c.L * c.L_max * delta / c.mu_pl

    elif setting == "momentum_convex":
        _hyp(schedule.kind == "momentum_pair", "momentum_pair schedule required")
        eta = schedule.eta
        _hyp(eta <= 1.0 / (4.0 * c.L_max), "eta <= 1/(4 L_max)")
        D2 = _need(D2, "D2")
        sigma = _need(c.sigma_star_f, "sigma_star_f")
        fn = lambda t: D2 / (eta * (t + 1.0)) + 2.0 * eta * sigma

    elif setting in ("ssd_convex_general", "ssd_convex_invsqrt", "pssd_convex", "ssd_strongly_convex"):
        G = c.G
        _hyp(G > 0, "G > 0")
        D2 = _need(D2, "D2")
        if setting == "ssd_convex_general":
            min_t = 1

            def fn(t, _s=schedule, _D2=D2, _G=G):
                g = np.array([_s.gamma_at(k) for k in range(t)])
                ssum = float(g.sum())
                return _D2 / (2.0 * ssum) + _G * _G * float((g * g).sum()) / (2.0 * ssum)
        elif setting == "ssd_convex_invsqrt":
            _hyp(schedule.kind == "inv_sqrt", "inv_sqrt stepsize required")
            g0 = schedule.gamma0
            min_t = 2
            fn = lambda t: (D2 / (4.0 * g0) + g0 * G * G * math.log(t) / 4.0) / (math.sqrt(t) - 1.0)
        elif setting == "pssd_convex":
            _hyp(schedule.kind == "inv_sqrt", "inv_sqrt stepsize required")
            _hyp(c.B > 0, "B > 0")
            g0 = schedule.gamma0
            min_t = 2
            fn = lambda t: (3.0 * c.B * c.B / g0 + g0 * G * G) / math.sqrt(t)
        else:  # ssd_strongly_convex
            _hyp(schedule.is_constant, "constant stepsize required")
            _hyp(c.mu > 0, "mu > 0")
            g = schedule.gamma
            _hyp(0 < g <= 1.0 / c.mu, "gamma <= 1/mu")
            fn = lambda t: (1.0 - g * c.mu) ** t * D2 + g * G * G / c.mu

    elif setting.startswith("spgd"):
        sF = _need(sigma_star_F, "sigma_star_F")
        D2 = _need(D2, "D2")
        Lm = c.L_max
        if setting == "spgd_strongly_convex":
            _hyp(schedule.is_constant, "constant stepsize required")
            _hyp(c.mu > 0, "mu > 0")
            g = schedule.gamma
            _hyp(g <= 1.0 / (2.0 * Lm), "gamma <= 1/(2 L_max)")
            fn = lambda t: (1.0 - g * c.mu) ** t * D2 + 2.0 * g * sF / c.mu
        else:
            F0 = _need(F0, "F0_gap")
            g0 = schedule.gamma_at(0)
            _hyp(g0 < 1.0 / (4.0 * Lm), "gamma0 < 1/(4 L_max)")
            slack = 1.0 - 4.0 * g0 * Lm
            if setting == "spgd_convex_const":
                _hyp(schedule.is_constant, "constant stepsize required")
                min_t = 1
                fn = lambda t: ((D2 + 2.0 * g0 * F0) / (2.0 * slack * g0 * t)
                                + 2.0 * sF * g0 / slack)
            elif setting == "spgd_convex_invsqrt":
                _hyp(schedule.kind == "inv_sqrt", "inv_sqrt stepsize required")
                min_t = 3

                def fn(t, _g0=g0, _slack=slack, _D2=D2, _F0=F0, _sF=sF):
                    denom = 2.0 * _g0 * (math.sqrt(t) - math.sqrt(2.0))
                    return ((_D2 + 2.0 * _g0 * _F0) / (2.0 * _slack * denom)
                            + 2.0 * _sF * _g0 * _g0 * math.log(t) / (_slack * denom))
            else:  # spgd_convex_general
                min_t = 1

                def fn(t, _s=schedule, _g0=g0, _slack=slack, _D2=D2, _F0=F0, _sF=sF):
                    g = np.array([_s.gamma_at(k) for k in range(t)])
                    ssum = float(g.sum())
                    return ((_D2 + 2.0 * _g0 * _F0) / (2.0 * _slack * ssum)
                            + 2.0 * _sF * float((g * g).sum()) / (_slack * ssum))

    else:  # pragma: no cover
        raise ValueError(f"unhandled setting {setting!r}")

    return BoundCurve(setting=setting, constants=c, schedule=schedule, init=init,
                      min_t=min_t, eval_fn=fn)


# ---------------------------------------------------------------------------
# Iteration complexity
# ---------------------------------------------------------------------------


def _ceil(value: float) -> int:
    """Ceiling robust to float noise a hair above an integer."""
    return math.ceil(value - 1e-9 * max(1.0, abs(value)))


def contraction_iterations(rho: float, epsilon: float) -> int:
    """Iterations for alpha_k <= rho^k alpha_0 to reach alpha_k <= eps*alpha_0."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("contraction factor rho must be in [0, 1)")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1) for a relative target")
    if rho == 0.0:
        return 1
    return _ceil(math.log(1.0 / epsilon) / (1.0 - rho))


def linear_plus_constant(mu: float, A: float, C: float, alpha0: float, epsilon: float):
    """Stepsize and iterations for the recurrence alpha_t <= (1-gamma mu)^t alpha0 + A gamma.

    Returns (gamma, t) with gamma = min(eps/(2A), 1/C) and
    t = ceil(max(2A/(eps mu), C/mu) * log(2 alpha0 / eps)).
    """
    if mu <= 0:
        raise ValueError("mu must be > 0")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    gamma = 1.0 / C if A == 0.0 else min(epsilon / (2.0 * A), 1.0 / C)
    factor = C / mu if A == 0.0 else max(2.0 * A / (epsilon * mu), C / mu)
    log_term = math.log(2.0 * alpha0 / epsilon) if 2.0 * alpha0 > epsilon else 0.0
    return gamma, max(0, _ceil(factor * log_term))


@dataclass(frozen=True)
class ComplexityAnswer:
    """Sufficient iteration count (and stepsize, when prescribed) for accuracy eps."""

    setting: str
    epsilon: float
    recommended_gamma: Optional[float]
    t_min: int
    formula: str
    relative: bool  # target is eps * (initial scale) rather than eps


def complexity_iterations(
    setting: str,
    constants: ProblemConstants,
    epsilon: float,
    init: InitState,
    b: Optional[int] = None,
    sigma_star_F: Optional[float] = None,
) -> ComplexityAnswer:
    """Evaluate the sufficient iteration count for a setting's accuracy target."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    c = constants
    e = float(epsilon)

    if setting in ("gd_convex", "pgd_convex"):
        D2 = _need(init.D2, "D2")
        _hyp(np.isfinite(c.L) and c.L > 0, "finite L > 0")
        t = max(1, _ceil(c.L * D2 / (2.0 * e)))
        return ComplexityAnswer(setting, e, 1.0 / c.L, t, "L*D2/(2*eps)", relative=False)

    if setting in ("gd_strongly_convex", "pgd_strongly_convex"):
        _hyp(c.mu > 0, "mu > 0")
        _hyp(0 < e < 1, "epsilon in (0,1) for a relative contraction target")
        t = contraction_iterations(1.0 - c.mu / c.L, e)
        return ComplexityAnswer(setting, e, 1.0 / c.L, t, "(L/mu)*log(1/eps)", relative=True)

    if setting == "gd_pl":
        _hyp(c.mu_pl > 0, "mu_pl > 0")
        _hyp(0 < e < 1, "epsilon in (0,1) for a relative contraction target")
        t = contraction_iterations(1.0 - c.mu_pl / c.L, e)
        return ComplexityAnswer(setting, e, 1.0 / c.L, t, "(L/mu_pl)*log(1/eps)", relative=True)

    if setting in ("sgd_convex_const", "mini_convex_const"):
        if setting.startswith("mini"):
            if b is None:
                raise ValueError("minibatch settings need the batch size b")
            L_ref, sigma = minibatch_constants(c, b)
        else:
            L_ref, sigma = c.L_max, _need(c.sigma_star_f, "sigma_star_f")
        D2 = _need(init.D2, "D2")
        t = max(4, _ceil((2.0 * L_ref * D2 + sigma / L_ref) ** 2 / e**2))
        gamma = 1.0 / (2.0 * L_ref * math.sqrt(t))
        return ComplexityAnswer(setting, e, gamma, t,
                                "((2*L_ref*D2 + sigma/L_ref)/eps)^2", relative=False)

    if setting in ("sgd_strongly_convex", "mini_strongly_convex"):
        _hyp(c.mu > 0, "mu > 0")
        if setting.startswith("mini"):
            if b is None:
                raise ValueError("minibatch settings need the batch size b")
            L_ref, sigma = minibatch_constants(c, b)
        else:
            L_ref, sigma = c.L_max, _need(c.sigma_star_f, "sigma_star_f")
        D2 = _need(init.D2, "D2")
        gamma, t = linear_plus_constant(c.mu, 2.0 * sigma / c.mu, 2.0 * L_ref, D2, e)
        return ComplexityAnswer(setting, e, gamma, t,
                                "max(4*sigma/(eps*mu^2), 2*L_ref/mu)*log(2*D2/eps)",
                                relative=False)

    if setting == "sgd_pl":
        _hyp(c.mu_pl > 0, "mu_pl > 0")
        _hyp(np.isfinite(c.L), "finite L")
        f0 = _need(init.f0_gap, "f0_gap")
        delta = _need(c.delta_star_f, "delta_star_f")
        base = c.mu_pl / (c.L * c.L_max)
        gamma = base if delta == 0.0 else base * min(e / (2.0 * delta), 1.0)
        factor = (c.L * c.L_max / c.mu_pl**2) * max(2.0 * delta / e, 1.0)
        log_term = math.log(2.0 * f0 / e) if 2.0 * f0 > e else 0.0
        t = max(0, _ceil(factor * log_term))
        return ComplexityAnswer(setting, e, gamma, t,
                                "(L*L_max/mu_pl^2)*max(2*Delta/eps,1)*log(2*f0/eps)",
                                relative=False)

    if setting == "momentum_convex":
        D2 = _need(init.D2, "D2")
        sigma = _need(c.sigma_star_f, "sigma_star_f")
        Lm = c.L_max
        t = max(0, _ceil((8.0 * Lm * Lm * D2 + sigma) ** 2 / (4.0 * Lm * Lm * e * e) - 1.0))
        eta = 1.0 / (4.0 * Lm * math.sqrt(t + 1.0))
        return ComplexityAnswer(setting, e, eta, t,
                                "((8*L_max^2*D2 + sigma)/(2*L_max*eps))^2 - 1", relative=False)

    if setting == "ssd_convex_general":
        D2 = _need(init.D2, "D2")
        _hyp(c.G > 0, "G > 0")
        t = max(1, _ceil(D2 * c.G * c.G / (e * e)))
        gamma = math.sqrt(D2) / (c.G * math.sqrt(t))
        return ComplexityAnswer(setting, e, gamma, t, "D2*G^2/eps^2", relative=False)

    if setting == "ssd_strongly_convex":
        _hyp(c.mu > 0, "mu > 0")
        _hyp(c.G > 0, "G > 0")
        _hyp(c.B > 0, "B > 0")
        gamma, t = linear_plus_constant(c.mu, c.G**2 / c.mu, c.mu, 4.0 * c.B**2, e)
        return ComplexityAnswer(setting, e, gamma, t,
                                "max(2*G^2/(eps*mu^2), 1)*log(8*B^2/eps)", relative=False)

    if setting == "spgd_convex_const":
        sF = _need(sigma_star_F, "sigma_star_F")
        D2 = _need(init.D2, "D2")
        F0 = _need(init.F0_gap, "F0_gap")
        _hyp(sF > 0 and e <= sF / c.L_max, "eps <= sigma_star_F / L_max")
        gamma = e / (8.0 * sF)
        C0 = 16.0 * (D2 + F0 / (4.0 * c.L_max))
        t = max(1, _ceil(C0 * sF / (e * e)))
        return ComplexityAnswer(setting, e, gamma, t, "16*(D2 + F0/(4*L_max))*sigma_F/eps^2",
                                relative=False)

    if setting == "spgd_strongly_convex":
        _hyp(c.mu > 0, "mu > 0")
        sF = _need(sigma_star_F, "sigma_star_F")
        D2 = _need(init.D2, "D2")
        gamma, t = linear_plus_constant(c.mu, 2.0 * sF / c.mu, 2.0 * c.L_max, D2, e)
        return ComplexityAnswer(setting, e, gamma, t,
                                "max(4*sigma_F/(eps*mu^2), 2*L_max/mu)*log(2*D2/eps)",
                                relative=False)

    raise ValueError(f"no iteration-complexity recommendation for setting {setting!r}")


def answer_schedule(answer: ComplexityAnswer) -> StepSchedule:
    """Schedule that realizes a complexity answer's recommended stepsize."""
    if answer.setting == "momentum_convex":
        return StepSchedule.momentum_pair(answer.recommended_gamma)
    if answer.setting in ("sgd_convex_const", "mini_convex_const", "ssd_convex_general"):
        return StepSchedule.horizon_constant(answer.recommended_gamma, answer.t_min)
    return StepSchedule.constant(answer.recommended_gamma)


# ---------------------------------------------------------------------------
# Complexity table
# ---------------------------------------------------------------------------

TABLE_METHODS = ("gd", "sgd", "mini_sgd", "momentum", "prox_gd", "prox_sgd")
TABLE_COLUMNS = ("convex_smooth", "convex_lipschitz", "strongly_convex", "pl")
NOT_COVERED = "not covered"


def _req(source: dict, key: str):
    if source is None or key not in source or source[key] is None:
        raise ValueError(f"missing constant: {key}")
    val = source[key]
    if isinstance(val, float) and math.isnan(val):
        raise ValueError(f"missing constant: {key}")
    return val


def complexity_table(sources: dict, epsilon: float) -> dict:
    """Evaluate every covered complexity cell numerically.

    ``sources`` carries three sections: "smooth" (constants, D2, f0_gap),
    "lipschitz" (G, D2), "composite" (sigma_star_F, D2, F0_gap), plus
    "batch_size".  Cells without a guarantee are the string "not covered".
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    e = float(epsilon)
    sm = sources.get("smooth")
    c: ProblemConstants = _req(sm, "constants")
    D2 = float(_req(sm, "D2"))
    f0 = float(_req(sm, "f0_gap"))
    for name in ("L", "L_max", "mu", "mu_pl", "sigma_star_f", "delta_star_f"):
        _req({name: getattr(c, name)}, name)
    b = int(sources.get("batch_size", 2))
    Lb, sb = minibatch_constants(c, b)
    lip = sources.get("lipschitz")
    G = float(_req(lip, "G"))
    D2_lip = float(_req(lip, "D2"))
    comp = sources.get("composite")
    sF = float(_req(comp, "sigma_star_F"))
    D2F = float(_req(comp, "D2"))
    F0 = float(_req(comp, "F0_gap"))

    log_rel = math.log(1.0 / e) if e < 1 else 0.0

    def loggy(num):
        return math.log(num / e) if num > e else 0.0

    table = {m: dict.fromkeys(TABLE_COLUMNS, NOT_COVERED) for m in TABLE_METHODS}
    table["gd"]["convex_smooth"] = c.L * D2 / (2.0 * e)
    table["gd"]["convex_lipschitz"] = D2_lip * G * G / (e * e)
    table["gd"]["strongly_convex"] = (c.L / c.mu) * log_rel if c.mu > 0 else NOT_COVERED
    table["gd"]["pl"] = (c.L / c.mu_pl) * log_rel if c.mu_pl > 0 else NOT_COVERED

    table["sgd"]["convex_smooth"] = ((2.0 * c.L_max * D2 + c.sigma_star_f / c.L_max) / e) ** 2
    table["sgd"]["convex_lipschitz"] = D2_lip * G * G / (e * e)
    if c.mu > 0:
        table["sgd"]["strongly_convex"] = (
            max(4.0 * c.sigma_star_f / (e * c.mu**2), 2.0 * c.L_max / c.mu) * loggy(2.0 * D2)
        )
    if c.mu_pl > 0:
        table["sgd"]["pl"] = (
            (c.L * c.L_max / c.mu_pl**2) * max(2.0 * c.delta_star_f / e, 1.0) * loggy(2.0 * f0)
        )

    table["mini_sgd"]["convex_smooth"] = ((2.0 * Lb * D2 + sb / Lb) / e) ** 2
    if c.mu > 0:
        table["mini_sgd"]["strongly_convex"] = (
            max(4.0 * sb / (e * c.mu**2), 2.0 * Lb / c.mu) * loggy(2.0 * D2)
        )

    table["momentum"]["convex_smooth"] = (
        (8.0 * c.L_max**2 * D2 + c.sigma_star_f) ** 2 / (4.0 * c.L_max**2 * e * e)
    )

    table["prox_gd"]["convex_smooth"] = c.L * D2F / (2.0 * e)
    table["prox_gd"]["strongly_convex"] = (c.L / c.mu) * log_rel if c.mu > 0 else NOT_COVERED

    table["prox_sgd"]["convex_smooth"] = 16.0 * (D2F + F0 / (4.0 * c.L_max)) * sF / (e * e)
    if c.mu > 0:
        table["prox_sgd"]["strongly_convex"] = (
            max(4.0 * sF / (e * c.mu**2), 2.0 * c.L_max / c.mu) * loggy(2.0 * D2F)
        )
    return table


def _cell_str(v) -> str:
    return v if isinstance(v, str) else f"{v:.6g}"


def table_to_text(table: dict) -> str:
    headers = ["method"] + list(TABLE_COLUMNS)
    rows = [[m] + [_cell_str(table[m][col]) for col in TABLE_COLUMNS] for m in TABLE_METHODS]
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def table_to_csv(table: dict) -> str:
    lines = ["method," + ",".join(TABLE_COLUMNS)]
    for m in TABLE_METHODS:
        lines.append(m + "," + ",".join(_cell_str(table[m][col]) for col in TABLE_COLUMNS))
    return "\n".join(lines) + "\n"
