"""Active subspaces from AS-matrix estimates and their quality measures."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericalError, ParameterError
from .models import DensityKind, InputDensity, sample_inputs
from .symmat import eigendecomp, operator_norm, trace

ORTHO_TOL = 1e-10
DEGENERATE_TOL = 1e-10
INDEFINITE_TOL = 1e-8


@dataclass(frozen=True)
class Subspace:
    """``r``-dimensional subspace of ``R^d`` held as an orthonormal basis."""

    basis: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        u = np.array(self.basis, dtype=np.float64)
        if u.ndim == 1:
            u = u[:, None]
        d, r = u.shape
        if not 1 <= r <= d:
            raise ParameterError(f"subspace rank {r} outside [1, {d}]")
        err = np.max(np.abs(u.T @ u - np.eye(r)))
        if err > ORTHO_TOL:
            raise ParameterError(f"basis is not orthonormal (max deviation {err:.2e})")
        u.setflags(write=False)
        object.__setattr__(self, "basis", u)

    @classmethod
    def from_vectors(cls, vectors):
        """Orthonormalize the columns of ``vectors`` (QR, positive diagonal)."""
        m = np.asarray(vectors, dtype=np.float64)
        if m.ndim == 1:
            m = m[:, None]
        q, rr = np.linalg.qr(m)
        q = q * np.where(np.diag(rr) < 0, -1.0, 1.0)
        return cls(q)

    @property
    def dim_ambient(self):
        return self.basis.shape[0]

    @property
    def r(self):
        return self.basis.shape[1]

    def projector(self):
        return self.basis @ self.basis.T

    def complement(self):
        """Orthonormal basis of the orthogonal complement (``d x (d - r)``)."""
        q, _ = np.linalg.qr(self.basis, mode="complete")
        return q[:, self.r :]


def _check_rank(r, d):
    if not 1 <= r <= d:
        raise ParameterError(f"r must lie in [1, {d}], got {r}")


def active_subspace(h_hat, r):
    """Dominant ``r``-dimensional eigenspace of ``h_hat``.

    Sets ``degenerate`` when ``lambda_r - lambda_{r+1} <= 1e-10 ||h_hat||``;
    any basis of a tied eigenspace maximizes the trace objective equally.
    """
    _check_rank(r, h_hat.dim)
    eig = eigendecomp(h_hat)
    w = eig.eigenvalues
    norm = max(abs(w[0]), abs(w[-1]))
    degenerate = r < h_hat.dim and (w[r - 1] - w[r]) <= DEGENERATE_TOL * norm
    return Subspace(eig.eigenvectors[:, :r], degenerate=bool(degenerate))


def trace_objective(u, a):
    """``trace(U^T A U)``."""
    basis = u.basis if isinstance(u, Subspace) else np.asarray(u)
    if basis.shape[0] != a.dim:
        raise ParameterError(f"subspace lives in R^{basis.shape[0]}, matrix has dim {a.dim}")
    return float(np.einsum("ij,ij->", basis, a.to_dense() @ basis))


def top_eigen_sum(a, r):
    _check_rank(r, a.dim)
    return float(np.sum(eigendecomp(a).eigenvalues[:r]))


def near_optimality_gap(h_ref, h_hat, r):
    """``2 r ||H - Hhat||``: maximal loss in the trace objective from using Hhat."""
    if h_ref.dim != h_hat.dim:
        raise ParameterError(f"dimension mismatch: {h_ref.dim} vs {h_hat.dim}")
    _check_rank(r, h_ref.dim)
    return 2.0 * r * operator_norm(h_ref - h_hat)


def _check_nearly_psd(a, tol):
    eig = eigendecomp(a)
    w = eig.eigenvalues
    norm = max(abs(w[0]), abs(w[-1]))
    if w[-1] < -tol * norm:
        raise NumericalError(
            f"matrix is too indefinite (min eigenvalue {w[-1]:.3e}, norm {norm:.3e})"
        )
    return eig


def functional_error_bound(a, u):
    """``trace(A) - trace(U^T A U)``, an upper bound on the ridge MSE.

    Accepts slightly indefinite ``A`` (min eigenvalue down to ``-1e-8 ||A||``).
    """
    _check_nearly_psd(a, INDEFINITE_TOL)
    return max(trace(a) - trace_objective(u, a), 0.0)


def spectral_energy(h_hat, r):
    """Fraction of the trace captured by the ``r`` leading eigenvalues."""
    _check_rank(r, h_hat.dim)
    w = _check_nearly_psd(h_hat, INDEFINITE_TOL).eigenvalues
    tr = float(np.sum(w))
    if tr <= 0:
        raise NumericalError("spectral energy undefined for non-positive trace")
    return min(1.0, max(0.0, float(np.sum(w[:r])) / tr))


def principal_angle(u, v):
    """Largest principal angle, ``arcsin ||U U^T - V V^T||``."""
    if u.dim_ambient != v.dim_ambient:
        raise ParameterError("subspaces live in different ambient spaces")
    if u.r != v.r:
        raise ParameterError(f"rank mismatch: {u.r} vs {v.r}")
    diff = u.projector() - v.projector()
    s = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.T)))))
    return math.asin(min(1.0, s))


@dataclass(frozen=True)
class RidgeMSE:
    """Nested Monte Carlo estimate of ``E[(f(X) - E[f(X) | U^T X])^2]``."""

    mse: float
    stderr: float
    n_outer: int
    n_inner: int
    inflation: float

    def __float__(self):
        return self.mse


def ridge_mse(oracle, u, n_outer, n_inner, seed, stream=0):
    """Mean squared error of the conditional-expectation ridge approximation.

    Each outer draw ``X = U z + U_perp w0`` is compared with the average of
    ``f(U z + U_perp w_k)`` over ``n_inner`` fresh complement draws. Since
    ``f(X)`` is itself a conditional draw, the squared deviation has mean
    ``(1 + 1/n_inner)`` times the target and is divided by that factor.
    Gaussian densities only.
    """
    if oracle.density.kind is not DensityKind.GAUSSIAN:
        raise ParameterError("ridge_mse requires the standard Gaussian density")
    if n_outer < 1 or n_inner < 1:
        raise ParameterError("n_outer and n_inner must be >= 1")
    d, r = u.dim_ambient, u.r
    if d != oracle.dim:
        raise ParameterError("subspace and oracle dimensions differ")
    inflation = 1.0 + 1.0 / n_inner
    if r == d:
        return RidgeMSE(0.0, 0.0, n_outer, n_inner, inflation)

    ub, uperp = u.basis, u.complement()
    outer = sample_inputs(InputDensity.gaussian(d), n_outer, seed, 2 * stream)
    z, w0 = outer[:, :r], outer[:, r:]
    active = z @ ub.T
    fx = np.asarray(oracle.f(active + w0 @ uperp.T))
    inner = sample_inputs(InputDensity.gaussian(d - r), n_outer * n_inner, seed, 2 * stream + 1)
    inner = inner.reshape(n_outer, n_inner, d - r)
    pts = active[:, None, :] + inner @ uperp.T
    h = np.asarray(oracle.f(pts.reshape(-1, d))).reshape(n_outer, n_inner).mean(axis=1)
    sq = (fx - h) ** 2 / inflation
    stderr = float(np.std(sq, ddof=1) / math.sqrt(n_outer)) if n_outer > 1 else math.inf
    return RidgeMSE(float(np.mean(sq)), stderr, n_outer, n_inner, inflation)


# reports ----------------------------------------------------------------


@dataclass(frozen=True)
class SubspaceReport:
    subspace: Subspace
    captured_trace: float
    spectral_energy: Optional[float]
    functional_bound: Optional[float]
    optimality_gap_bound: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "r": self.subspace.r,
            "dim": self.subspace.dim_ambient,
            "degenerate": self.subspace.degenerate,
            "captured_trace": self.captured_trace,
            "spectral_energy": self.spectral_energy,
            "functional_bound": self.functional_bound,
            "optimality_gap_bound": self.optimality_gap_bound,
        }
        out.update(self.extras)
        return out


def subspace_report(h_hat, r, h_ref=None):
    """Subspace of ``h_hat`` with energy, functional bound and, given a
    reference, the trace certificate ``trace(U^T H U) >= opt - 2r||H - Hhat||``.
    """
    sub = active_subspace(h_hat, r)
    captured = trace_objective(sub, h_hat)
    try:
        energy = spectral_energy(h_hat, r)
        fbound = functional_error_bound(h_hat, sub)
    except NumericalError:
        energy = fbound = None
    gap = None
    extras = {}
    if h_ref is not None:
        gap = near_optimality_gap(h_ref, h_hat, r)
        optimum = top_eigen_sum(h_ref, r)
        achieved = trace_objective(sub, h_ref)
        err = gap / (2 * r)
        w_ref = eigendecomp(h_ref).eigenvalues
        extras = {
            "reference_trace_achieved": achieved,
            "reference_trace_optimum": optimum,
            "certified_lower_bound": optimum - gap,
            "certificate_holds": bool(achieved >= optimum - gap - 1e-12 * max(1.0, abs(optimum))),
            "error_norm": err,
            "reference_tail": float(np.sum(w_ref[r:])),
            "functional_error_terms": [float(np.sum(w_ref[r:])), gap],
        }
    return SubspaceReport(sub, captured, energy, fbound, gap, extras)


def basis_to_csv(sub):
    buf = io.StringIO()
    for row in sub.basis:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()
