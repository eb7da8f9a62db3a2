"""Gradient oracles and input densities.

Oracles are evaluated on batches: ``f(X)`` maps an ``(n, d)`` array to ``(n,)``
and ``grad(X)`` maps it to ``(n, d)``. Single points are accepted too.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .bounds import FidelityParams
from .errors import ParameterError
from .symmat import SymMatrix, eigenvalues

SQRT3 = math.sqrt(3.0)


class DensityKind(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class InputDensity:
    """Uniform on ``[-1, 1]^d`` or standard Gaussian on ``R^d``."""

    kind: DensityKind
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", DensityKind(self.kind))
        if self.dim < 1:
            raise ParameterError(f"dimension must be positive, got {self.dim}")

    @classmethod
    def uniform(cls, d):
        return cls(DensityKind.UNIFORM, d)

    @classmethod
    def gaussian(cls, d):
        return cls(DensityKind.GAUSSIAN, d)

    @property
    def second_moment(self):
        """``E[x_i^2]`` for one coordinate."""
        return 1.0 / 3.0 if self.kind is DensityKind.UNIFORM else 1.0


# sampling -------------------------------------------------------------

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter value
_TO_UNIT = 2.0**-53


def _blocks_per_sample(d):
    return -(-d // _WORDS_PER_BLOCK)


def _philox_key(seed, stream):
    if not (0 <= seed < 2**64 and 0 <= stream < 2**64):
        raise ParameterError("seed and stream must be integers in [0, 2**64)")
    return int(seed) | (int(stream) << 64)


def sample_inputs(density, n, rng_seed, stream=0, start=0):
    """Draw samples ``start, ..., start + n - 1`` of a counter-based stream.

    Sample ``i`` is a function of ``(rng_seed, stream, i)`` only: it is read
    from a fixed block of the Philox counter space, so any sub-range can be
    regenerated in isolation and in any order.
    """
    if n < 0:
        raise ParameterError("n must be non-negative")
    d = density.dim
    if n == 0:
        return np.empty((0, d))
    bps = _blocks_per_sample(d)
    gen = np.random.Philox(key=_philox_key(rng_seed, stream), counter=start * bps)
    words = gen.random_raw(n * bps * _WORDS_PER_BLOCK)
    words = words.reshape(n, bps * _WORDS_PER_BLOCK)[:, :d]
    np.right_shift(words, np.uint64(11), out=words)
    u = words.astype(np.float64)
    u += 0.5
    if density.kind is DensityKind.UNIFORM:
        # 2u - 1 with the power-of-two scaling folded in (exact)
        u *= 2.0 * _TO_UNIT
        u -= 1.0
        return u
    u *= _TO_UNIT
    return ndtri(u)


# oracles --------------------------------------------------------------


def _as_batch(x, d):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != d:
        raise ParameterError(f"expected points of dimension {d}, got {x.shape[1]}")
    return x, single


@dataclass(frozen=True)
class GradientOracle:
    """A differentiable model with its reference input density.

    ``f`` and ``grad`` are vectorized callables on ``(n, d)`` arrays.
    ``cost_weight`` is the relative cost of one gradient evaluation.
    """

    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    density: InputDensity
    cost_weight: float = 1.0
    name: str = field(default="oracle", compare=False)

    def __post_init__(self):
        if self.density.dim != self.dim:
            raise ParameterError("density dimension does not match oracle dimension")
        if not self.cost_weight > 0:
            raise ParameterError("cost_weight must be positive")

    def eval_f(self, x):
        x, single = _as_batch(x, self.dim)
        out = np.asarray(self.f(x), dtype=np.float64)
        return float(out[0]) if single else out

    def eval_grad(self, x):
        x, single = _as_batch(x, self.dim)
        out = np.asarray(self.grad(x), dtype=np.float64)
        return out[0] if single else out


@dataclass(frozen=True)
class ModelPair:
    """High- and low-fidelity oracles sharing one input density."""

    hi: GradientOracle
    lo: GradientOracle

    def __post_init__(self):
        if self.hi.dim != self.lo.dim:
            raise ParameterError("hi and lo oracles have different dimensions")
        if self.hi.density != self.lo.density:
            raise ParameterError("hi and lo oracles must share the input density")

    @property
    def dim(self):
        return self.hi.dim

    @property
    def density(self):
        return self.hi.density

    @property
    def cost_ratio(self):
        return self.hi.cost_weight / self.lo.cost_weight


@dataclass(frozen=True)
class QuadraticModelSpec:
    """Parameters of the analytic quadratic benchmark and its perturbation."""

    a: tuple
    b: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).ravel()
        if a.size == 0:
            raise ParameterError("a must be non-empty")
        if not np.all(np.isfinite(a)):
            raise ParameterError("a must be finite")
        mags = np.abs(a)
        if np.any(np.diff(mags) > 0):
            raise ParameterError("|a_i| must be non-increasing")
        if not self.b >= 0:
            raise ParameterError("b must be non-negative")
        if not self.T > 0:
            raise ParameterError("T must be positive")
        object.__setattr__(self, "a", tuple(float(v) for v in a))

    @property
    def dim(self):
        return len(self.a)

    @property
    def a_array(self):
        return np.array(self.a)

    @property
    def a_norm(self):
        return float(np.linalg.norm(self.a_array))


def quad_hi_oracle(spec, density, cost_weight=1.0):
    """``f(x) = (sqrt(3)/2) sum a_i x_i^2`` and its gradient ``sqrt(3) a * x``."""
    a = spec.a_array
    _check_density(spec, density)

    def f(x):
        return 0.5 * SQRT3 * (x * x) @ a

    def grad(x):
        return SQRT3 * (x * a)

    return GradientOracle(spec.dim, f, grad, density, cost_weight, name="quadratic-hi")


def quad_lo_oracle(spec, density, cost_weight=1.0):
    """Perturbed quadratic: ``g = f - b T ||a|| cos(x_d / T)``.

    The gradient differs from the high-fidelity one in the last coordinate
    only, by ``b ||a|| sin(x_d / T)``.
    """
    a = spec.a_array
    amp = spec.b * spec.a_norm
    T = spec.T
    _check_density(spec, density)

    def f(x):
        return 0.5 * SQRT3 * (x * x) @ a - amp * T * np.cos(x[:, -1] / T)

    def grad(x):
        g = SQRT3 * (x * a)
        g[:, -1] += amp * np.sin(x[:, -1] / T)
        return g

    return GradientOracle(spec.dim, f, grad, density, cost_weight, name="quadratic-lo")


def quadratic_pair(spec, density, cost_ratio=1.0):
    """Hi/lo pair with the low-fidelity evaluation as the unit of cost."""
    return ModelPair(
        quad_hi_oracle(spec, density, cost_weight=cost_ratio),
        quad_lo_oracle(spec, density, cost_weight=1.0),
    )


def _check_density(spec, density):
    if density.dim != spec.dim:
        raise ParameterError(f"density has dim {density.dim}, model has {spec.dim}")


def exact_H(spec, density):
    """``diag(3 E[x^2] a_i^2)``: the identity-scaled diag(a^2) for the box."""
    _check_density(spec, density)
    return SymMatrix.diag(3.0 * density.second_moment * spec.a_array**2)


def exact_fidelity_params(spec, density=None):
    """Closed-form ``beta``, ``theta``, intrinsic dimension for the box density.

    ``beta^2 = 3``; ``theta^2 = b^2 sin(1/T)^2`` when ``T >= 2/pi`` and ``b^2``
    otherwise (the sine reaches 1 inside ``[-1, 1]``).
    """
    if density is not None and density.kind is not DensityKind.UNIFORM:
        raise ParameterError(
            "closed-form beta/theta exist only for the uniform box; "
            "beta is unbounded under a Gaussian density"
        )
    a = spec.a_array
    if a[0] == 0:
        raise ParameterError("a must be nonzero")
    if spec.T >= 2.0 / math.pi:
        theta_sq = spec.b**2 * math.sin(1.0 / spec.T) ** 2
    else:
        theta_sq = spec.b**2
    norm_sq = float(a @ a)
    return FidelityParams(
        beta=SQRT3,
        theta=math.sqrt(theta_sq),
        delta_H=norm_sq / a[0] ** 2,
        dim=spec.dim,
        grad_norm_sq_mean=norm_sq,
    )


def rank_deficient_a(d, k):
    """``k`` leading ones followed by zeros: intrinsic dimension exactly ``k``."""
    if not 1 <= k <= d:
        raise ParameterError(f"k must lie in [1, {d}], got {k}")
    a = np.zeros(d)
    a[:k] = 1.0
    return a


def _delta_of_decay(c, d):
    return float(np.sum(np.exp(-2.0 * c * np.arange(d))))


def full_rank_a(d, delta_target):
    """``a_i = exp(-C i)`` with ``C`` tuned so that ``delta_H = delta_target``.

    The intrinsic dimension ``sum_i exp(-2C(i-1))`` is strictly decreasing in
    ``C``; ``C`` is found by bisection on ``[0, 50]``.
    """
    if not 1.0 <= delta_target <= d:
        raise ParameterError(f"delta_target must lie in [1, {d}], got {delta_target}")
    if delta_target == d:
        c = 0.0
    else:
        lo, hi = 0.0, 50.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if _delta_of_decay(mid, d) > delta_target:
                lo = mid
            else:
                hi = mid
        c = 0.5 * (lo + hi)
    return np.exp(-c * np.arange(1, d + 1))


def decay_rate(a):
    """Recover ``C`` from a vector produced by :func:`full_rank_a`."""
    a = np.asarray(a, dtype=np.float64)
    return float(-math.log(a[0]))


def whiten(oracle, sigma_sqrt):
    """Change of variables ``x = S x_std`` with ``S`` a symmetric square root.

    The returned oracle lives under the standard Gaussian and has gradient
    ``S^T grad f(S x_std)``; its active subspace matrix is ``S^T H S``
    (see :func:`whitened_H`).
    """
    if not isinstance(sigma_sqrt, SymMatrix):
        sigma_sqrt = SymMatrix.from_dense(sigma_sqrt)
    if sigma_sqrt.dim != oracle.dim:
        raise ParameterError(f"sigma_sqrt has dim {sigma_sqrt.dim}, oracle has {oracle.dim}")
    w = eigenvalues(sigma_sqrt)
    scale = max(abs(w[0]), abs(w[-1]), 1.0)
    if w[-1] < -1e-10 * scale:
        raise ParameterError("sigma_sqrt must be positive semi-definite")
    s = np.array(sigma_sqrt.to_dense())
    inner_f, inner_grad = oracle.f, oracle.grad

    def f(x):
        return inner_f(x @ s)

    def grad(x):
        # rows: (S^T g)^T = g^T S, S symmetric
        return inner_grad(x @ s) @ s

    return GradientOracle(
        oracle.dim,
        f,
        grad,
        InputDensity.gaussian(oracle.dim),
        oracle.cost_weight,
        name=f"whitened-{oracle.name}",
    )


def whitened_H(h, sigma_sqrt):
    """``S^T H S`` for the whitened model."""
    if not isinstance(sigma_sqrt, SymMatrix):
        sigma_sqrt = SymMatrix.from_dense(sigma_sqrt)
    return h.congruence(sigma_sqrt.to_dense())


def whiten_pair(pair, sigma_sqrt):
    return ModelPair(whiten(pair.hi, sigma_sqrt), whiten(pair.lo, sigma_sqrt))


# JSON model specs -----------------------------------------------------


def model_spec_to_dict(spec, density, cost_ratio=1.0):
    return {
        "kind": "quadratic",
        "a": list(spec.a),
        "b": spec.b,
        "T": spec.T,
        "density": density.kind.value,
        "cost_ratio": cost_ratio,
    }


def model_spec_from_dict(obj):
    """Parse ``{"kind": "quadratic", "a": [...], "b", "T", "density"}``.

    Returns ``(spec, density, cost_ratio)``; ``cost_ratio`` defaults to 1.
    """
    if obj.get("kind") != "quadratic":
        raise ParameterError(f"unsupported model kind {obj.get('kind')!r}")
    try:
        spec = QuadraticModelSpec(tuple(obj["a"]), float(obj.get("b", 0.0)), float(obj.get("T", 1.0)))
        density = InputDensity(DensityKind(obj.get("density", "uniform")), spec.dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"invalid model spec: {exc}") from exc
    return spec, density, float(obj.get("cost_ratio", 1.0))


def load_model_spec(path):
    with open(path) as fh:
        return model_spec_from_dict(json.load(fh))
