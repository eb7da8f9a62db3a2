"""Non-asymptotic error bounds and sample-size planners.

All logarithms are natural. Planners return ``ceil(rhs)`` floored at 1.
The overlay helpers turn the variance/summand bounds into the expected
relative error curves used by the parametric studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ParameterError


@dataclass(frozen=True)
class FidelityParams:
    """Constants of the almost-sure gradient assumptions.

    ``beta^2`` bounds ``||grad f||^2 / E||grad f||^2`` and ``theta^2`` bounds
    ``||grad f - grad g||^2 / E||grad f||^2``.
    """

    beta: float
    theta: float
    delta_H: float
    dim: int
    grad_norm_sq_mean: Optional[float] = None

    def __post_init__(self):
        for name in ("beta", "theta", "delta_H"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "dim", int(self.dim))
        for name in ("beta", "theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ParameterError(f"{name} must be finite and non-negative, got {v}")
        if not self.delta_H >= 1:
            raise ParameterError(f"delta_H must be >= 1, got {self.delta_H}")
        if self.dim < 1:
            raise ParameterError("dim must be positive")

    def to_dict(self):
        return {
            "beta": self.beta,
            "theta": self.theta,
            "delta_H": self.delta_H,
            "dim": self.dim,
            "grad_norm_sq_mean": self.grad_norm_sq_mean,
        }


@dataclass(frozen=True)
class BernsteinInputs:
    """Variance proxy ``v``, summand bound ``L`` and dimension data."""

    v: float
    L: float
    dim: int
    delta_V: float = field(default=1.0)

    def __post_init__(self):
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "L", float(self.L))
        if self.v < 0 or self.L < 0:
            raise ParameterError("v and L must be non-negative")


@dataclass(frozen=True)
class SamplePlan:
    m1: int
    m2: int
    epsilon: float
    eta: float
    mode: str


def _ceil_at_least_one(x):
    return max(1, math.ceil(x))


def _positive(name, x):
    if not (x > 0 and math.isfinite(x)):
        raise ParameterError(f"{name} must be positive and finite, got {x}")


def _check_eps_unit(eps):
    if not 0 < eps <= 1:
        raise ParameterError(f"eps must lie in (0, 1], got {eps}")


# MF planners ----------------------------------------------------------


def min_m2_ratio(theta, beta):
    """Smallest admissible ``m2 / m1`` for the MF guarantees."""
    if theta == 0:
        raise ParameterError("theta = 0: the ratio diverges (perfect low-fidelity model)")
    _positive("theta", theta)
    _positive("beta", beta)
    first = (theta + beta) ** 2 * (1 + theta) ** 2 / (theta**2 * (2 + theta) ** 2)
    second = (theta + beta) ** 2 / (theta * (2 * beta + theta))
    return max(first, second)


def mf_m1_expectation_rhs(eps, p):
    _positive("eps", eps)
    t, b, dl = p.theta, p.beta, p.delta_H
    return eps**-2 * dl * t * math.log(2 * p.dim) * max(
        4 * dl * t * (2 + t) ** 2, 2.0 / 3.0 * (2 * b + t)
    )


def mf_m1_expectation(eps, p):
    """Paired samples giving ``E||H - Hmf|| <= (eps + eps^2) ||H||``."""
    return _ceil_at_least_one(mf_m1_expectation_rhs(eps, p))


def _mf_tail_denominator(eps, p):
    t, b, dl = p.theta, p.beta, p.delta_H
    return 4 * dl**2 * t**2 * (2 + t) ** 2 + 4.0 / 3.0 * dl * t * (2 * b + t) * eps


def mf_m1_probability_rhs(eps, eta, p):
    _check_eps_unit(eps)
    if not 0 < eta < 1:
        raise ParameterError(f"eta must lie in (0, 1), got {eta}")
    return eps**-2 * math.log(2 * p.dim / eta) * _mf_tail_denominator(eps, p)


def mf_m1_probability(eps, eta, p):
    """Paired samples giving ``P{||H - Hmf|| <= eps ||H||} >= 1 - eta``."""
    return _ceil_at_least_one(mf_m1_probability_rhs(eps, eta, p))


def mf_tail_at(m1, eps, p):
    """Failure-probability bound implied by ``m1`` (with admissible ``m2``)."""
    denom = _mf_tail_denominator(eps, p)
    if denom == 0:
        return 0.0
    return 2 * p.dim * math.exp(-(eps**2) * m1 / denom)


def mf_expectation_at(m1, p):
    """Relative expected-error bound ``E||H - Hmf|| / ||H||`` at ``m1``.

    Uses the simplified variance/summand bounds valid when ``m2`` meets
    :func:`min_m2_ratio`.
    """
    t, b, dl = p.theta, p.beta, p.delta_H
    lg = math.log(2 * p.dim)
    return dl * (
        2 * t * (2 + t) * math.sqrt(lg / m1) + 2 * t * (2 * b + t) * lg / (3 * m1)
    )


# SF planners ----------------------------------------------------------


def sf_m1_expectation(eps, p, C_abs):
    """SF expectation planner; ``C_abs`` is an unquantified absolute constant."""
    _check_eps_unit(eps)
    _positive("C_abs", C_abs)
    dl = p.delta_H
    rhs = C_abs * eps**-2 * dl * math.log(1 + 2 * dl) * (1 + p.beta**2)
    return _ceil_at_least_one(rhs)


def sf_m1_probability_rhs(eps, eta, p):
    _check_eps_unit(eps)
    if not 0 < eta <= 1:
        raise ParameterError(f"eta must lie in (0, 1], got {eta}")
    dl, b2 = p.delta_H, p.beta**2
    return 2 * eps**-2 * dl * math.log(8 * dl / eta) * (b2 + eps * (1 + b2) / 3)


def sf_m1_probability(eps, eta, p):
    """SF samples giving ``P{||H - Hsf|| <= eps ||H||} >= 1 - eta``."""
    return _ceil_at_least_one(sf_m1_probability_rhs(eps, eta, p))


def sf_tail_at(m1, eps, p):
    dl, b2 = p.delta_H, p.beta**2
    denom = b2 * dl + (1 + b2) * dl * eps / 3
    if denom == 0:
        return 0.0
    return 8 * dl * math.exp(-m1 * eps**2 / 2 / denom)


# Bernstein forms --------------------------------------------------------


def bernstein_expectation(b):
    """``sqrt(2 v log 2d) + L log(2d) / 3``."""
    lg = math.log(2 * b.dim)
    return math.sqrt(2 * b.v * lg) + b.L * lg / 3


def bernstein_tail(b, t):
    """``2d exp(-(t^2/2) / (v + L t / 3))``; may exceed 1."""
    if t < 0:
        raise ParameterError("t must be non-negative")
    denom = b.v + b.L * t / 3
    if denom == 0:
        return 0.0 if t > 0 else 2.0 * b.dim
    return 2 * b.dim * math.exp(-(t**2) / 2 / denom)


def intrinsic_bernstein_threshold(b):
    return math.sqrt(b.v) + b.L / 3


def intrinsic_bernstein_tail(b, t):
    """``8 delta_V exp(-(t^2/2) / (v + L t / 3))`` for ``t >= sqrt(v) + L/3``."""
    thr = intrinsic_bernstein_threshold(b)
    if t < thr:
        raise ParameterError(f"intrinsic Bernstein bound requires t >= {thr:.6g}, got {t}")
    denom = b.v + b.L * t / 3
    if denom == 0:
        return 0.0
    return 8 * b.delta_V * math.exp(-(t**2) / 2 / denom)


# variance and summand bounds -----------------------------------------


def mf_variance_bound(theta, beta, m1, m2, grad_norm_sq_mean):
    """Bound on ``||E[(S_1 + ... + S_m)^2]||`` for the MF error summands."""
    e = grad_norm_sq_mean
    return (
        theta**2 * (2 + theta) ** 2 / m1 + (theta + beta) ** 2 * (1 + theta) ** 2 / m2
    ) * e**2


def mf_summand_bound(theta, beta, m1, m2, grad_norm_sq_mean):
    """Almost-sure bound on ``||S_i||`` for the MF error summands."""
    return max(2 * theta * (2 * beta + theta) / m1, 2 * (theta + beta) ** 2 / m2) * grad_norm_sq_mean


def sf_variance_bound(beta, m1, grad_norm_sq_mean, H_norm):
    """``||V||`` with ``V = beta^2 E||grad f||^2 H / m1``."""
    return beta**2 * grad_norm_sq_mean * H_norm / m1


def sf_summand_bound(beta, m1, grad_norm_sq_mean):
    return (1 + beta**2) * grad_norm_sq_mean / m1


def mf_bernstein_inputs(theta, beta, m1, m2, dim, grad_norm_sq_mean=1.0):
    return BernsteinInputs(
        v=mf_variance_bound(theta, beta, m1, m2, grad_norm_sq_mean),
        L=mf_summand_bound(theta, beta, m1, m2, grad_norm_sq_mean),
        dim=dim,
    )


def sf_bernstein_inputs(beta, m1, dim, delta_H, H_norm=1.0):
    e = delta_H * H_norm
    return BernsteinInputs(
        v=sf_variance_bound(beta, m1, e, H_norm),
        L=sf_summand_bound(beta, m1, e),
        dim=dim,
        delta_V=delta_H,
    )


def mf_relative_overlay(p, m1, m2):
    """Expected relative MF error bound for fixed ``(m1, m2)``.

    ``E||grad f||^2 = trace(H) = delta_H ||H||``, so the overlay is computed
    with ``||H|| = 1``.
    """
    return bernstein_expectation(mf_bernstein_inputs(p.theta, p.beta, m1, m2, p.dim, p.delta_H))


def sf_relative_overlay(p, m1):
    """Expected relative SF error bound at ``m1`` samples.

    Feeds the SF summand and variance bounds into the dimension-dependent
    expectation form, which has explicit constants.
    """
    return bernstein_expectation(sf_bernstein_inputs(p.beta, m1, p.dim, p.delta_H))


# plan reports ---------------------------------------------------------


def plan(mode, eps, p, eta=None, C_abs=None):
    """Compute a :class:`SamplePlan` and the diagnostics for the JSON report.

    ``mode`` is one of ``mf-exp``, ``mf-prob``, ``sf-exp``, ``sf-prob``.
    """
    _positive("eps", eps)
    diag = {}
    if mode.startswith("mf"):
        ratio = min_m2_ratio(p.theta, p.beta)
        if mode == "mf-exp":
            m1 = mf_m1_expectation(eps, p)
            eta_out = 1.0
        elif mode == "mf-prob":
            if eta is None:
                raise ParameterError("mf-prob requires eta")
            m1 = mf_m1_probability(eps, eta, p)
            eta_out = eta
        else:
            raise ParameterError(f"unknown plan mode {mode!r}")
        m2 = math.ceil(m1 * ratio)
        bern = mf_bernstein_inputs(p.theta, p.beta, m1, m2, p.dim, p.delta_H)
        diag.update(
            m2_ratio_min=ratio,
            v=bern.v,
            L=bern.L,
            expectation_bound=bernstein_expectation(bern),
            tail_bound=bernstein_tail(bern, eps),
        )
    elif mode.startswith("sf"):
        if mode == "sf-exp":
            if C_abs is None:
                raise ParameterError("sf-exp requires the absolute constant C")
            m1 = sf_m1_expectation(eps, p, C_abs)
            eta_out = 1.0
        elif mode == "sf-prob":
            if eta is None:
                raise ParameterError("sf-prob requires eta")
            m1 = sf_m1_probability(eps, eta, p)
            eta_out = eta
        else:
            raise ParameterError(f"unknown plan mode {mode!r}")
        m2 = 0
        bern = sf_bernstein_inputs(p.beta, m1, p.dim, p.delta_H)
        diag.update(
            v=bern.v,
            L=bern.L,
            expectation_bound=bernstein_expectation(bern),
            tail_bound=bernstein_tail(bern, eps),
        )
        if eps >= intrinsic_bernstein_threshold(bern):
            diag["intrinsic_tail_bound"] = intrinsic_bernstein_tail(bern, eps)
    else:
        raise ParameterError(f"unknown plan mode {mode!r}")
    kind = "expectation" if mode.endswith("exp") else "probability"
    return SamplePlan(m1, m2, eps, eta_out, kind), diag


def plan_report(mode, eps, p, eta=None, C_abs=None):
    """JSON-ready dictionary for a plan; diagnostics use ``||H|| = 1`` units."""
    sp, diag = plan(mode, eps, p, eta=eta, C_abs=C_abs)
    inputs = {"mode": mode, "eps": eps, "eta": eta, **p.to_dict()}
    if C_abs is not None:
        inputs["C_abs"] = C_abs
    return {
        "inputs": inputs,
        "plan": {"m1": sp.m1, "m2": sp.m2, "mode": sp.mode, "eta": sp.eta},
        "diagnostics": diag,
    }
