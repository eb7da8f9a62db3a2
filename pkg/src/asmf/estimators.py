"""Single- and multifidelity Monte Carlo estimators of the AS matrix.

Summation order is fixed by sample index. Samples are split into blocks of
``BLOCK_SIZE`` (one task each); a block is summed in chunks of
``CHUNK_SIZE`` rows by the packed kernel, and chunk and block partial sums
are combined pairwise in index order. The result is therefore bitwise
independent of the number of worker threads.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import kernels
from .errors import DataFormatError, NonFiniteGradientError, NumericalError, ParameterError
from .models import sample_inputs
from .symmat import SymMatrix, operator_norm, packed_length, project_psd, trace

CHUNK_SIZE = 64
BLOCK_SIZE = 16 * CHUNK_SIZE

__all__ = [
    "ASEstimate",
    "CharacteristicEstimate",
    "EstimatorKind",
    "GradientBatch",
    "estimate_characteristics",
    "estimate_from_batch",
    "estimate_mf",
    "estimate_sf",
    "evaluate_batch",
    "project_psd",
    "parse_batch_csv",
    "read_batch_csv",
    "resolve_workers",
    "write_batch_csv",
]


class EstimatorKind(str, Enum):
    SF = "SF"
    MF = "MF"


@dataclass(frozen=True)
class ASEstimate:
    """An estimated AS matrix and how it was obtained."""

    matrix: SymMatrix
    kind: EstimatorKind
    m1: int
    m2: int
    seed: Optional[int]
    cost: float
    stream: int = 0

    def metadata(self):
        return {
            "kind": self.kind.value,
            "m1": self.m1,
            "m2": self.m2,
            "seed": self.seed,
            "stream": self.stream,
            "cost": self.cost,
            "dim": self.matrix.dim,
        }


@dataclass(frozen=True)
class GradientBatch:
    """Gradient samples in the layout of the MF algorithm.

    ``hi_paired[i]`` and ``lo_paired[i]`` are evaluated at the same input;
    ``lo_extra`` holds low-fidelity gradients at fresh inputs. Both low-fidelity
    blocks are ``None`` for single-fidelity data.
    """

    hi_paired: np.ndarray
    lo_paired: Optional[np.ndarray] = None
    lo_extra: Optional[np.ndarray] = None

    def __post_init__(self):
        hi = _as_rows(self.hi_paired, "hi")
        d = hi.shape[1]
        object.__setattr__(self, "hi_paired", hi)
        for role in ("lo_paired", "lo_extra"):
            arr = getattr(self, role)
            if arr is None:
                continue
            arr = _as_rows(arr, role, d)
            object.__setattr__(self, role, arr)
        if self.lo_paired is not None and self.lo_paired.shape[0] != hi.shape[0]:
            raise DataFormatError(
                f"hi has {hi.shape[0]} rows but lo_paired has {self.lo_paired.shape[0]}"
            )

    @property
    def dim(self):
        return self.hi_paired.shape[1]

    @property
    def m1(self):
        return self.hi_paired.shape[0]

    @property
    def m2(self):
        return 0 if self.lo_extra is None else self.lo_extra.shape[0]

    @property
    def is_multifidelity(self):
        return self.lo_paired is not None or self.lo_extra is not None


def _as_rows(arr, role, d=None):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DataFormatError(f"{role} gradients must be a 2-D array")
    if d is not None and arr.shape[1] != d:
        raise DataFormatError(f"{role} rows have length {arr.shape[1]}, expected {d}")
    bad = ~np.all(np.isfinite(arr), axis=1)
    if bad.any():
        raise DataFormatError(f"non-finite {role} gradient", row=int(np.argmax(bad)))
    return arr


@dataclass(frozen=True)
class CharacteristicEstimate:
    """Sample-based estimates of the quantities entering the bounds."""

    grad_norm_sq_mean: float
    H_norm: float
    delta_H: float
    beta_sq: float
    theta_sq: Optional[float] = None

    def to_dict(self):
        return {
            "grad_norm_sq_mean": self.grad_norm_sq_mean,
            "H_norm": self.H_norm,
            "delta_H": self.delta_H,
            "beta_sq": self.beta_sq,
            "theta_sq": self.theta_sq,
        }


# deterministic reduction ---------------------------------------------


def resolve_workers(workers=None):
    if workers is None:
        env = os.environ.get("ASMF_THREADS")
        workers = int(env) if env else 1
    if workers < 1:
        raise ParameterError(f"worker count must be >= 1, got {workers}")
    return workers


def _pairwise_sum(parts):
    parts = list(parts)
    if not parts:
        return None
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _sum_block(a, b, d):
    partials = []
    for c in range(0, a.shape[0], CHUNK_SIZE):
        buf = np.zeros(packed_length(d))
        kernels.outer_sum_packed(
            np.ascontiguousarray(a[c : c + CHUNK_SIZE]),
            None if b is None else np.ascontiguousarray(b[c : c + CHUNK_SIZE]),
            buf,
        )
        partials.append(buf)
    return _pairwise_sum(partials)


def _blocks(n):
    return [(s, min(s + BLOCK_SIZE, n)) for s in range(0, n, BLOCK_SIZE)]


def _accumulate(n, d, rows, workers):
    """Sum of ``a a^T - b b^T`` over rows produced block-wise by ``rows``."""

    def task(block):
        a, b = rows(*block)
        return _sum_block(a, b, d)

    blocks = _blocks(n)
    if workers == 1 or len(blocks) == 1:
        sums = [task(blk) for blk in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(task, blocks))
    return _pairwise_sum(sums)


def _checked(grads, start, fidelity):
    grads = np.asarray(grads, dtype=np.float64)
    bad = ~np.all(np.isfinite(grads), axis=1)
    if bad.any():
        raise NonFiniteGradientError(start + int(np.argmax(bad)), fidelity)
    return grads


# live oracles -------------------------------------------------------------


def _live_rows(pair_or_oracle, seed, stream, offset, paired):
    """Row generator over global sample indices ``offset + [i0, i1)``."""
    if paired:
        hi, lo = pair_or_oracle.hi, pair_or_oracle.lo
    else:
        hi, lo = pair_or_oracle, None
    density = hi.density

    def rows(i0, i1):
        x = sample_inputs(density, i1 - i0, seed, stream, start=offset + i0)
        a = _checked(hi.grad(x), offset + i0, "hi")
        b = _checked(lo.grad(x), offset + i0, "lo") if lo is not None else None
        return a, b

    return rows


def _lo_only_rows(lo, seed, stream, offset):
    def rows(i0, i1):
        x = sample_inputs(lo.density, i1 - i0, seed, stream, start=offset + i0)
        return _checked(lo.grad(x), offset + i0, "lo"), None

    return rows


def estimate_sf(oracle, m1, seed, stream=0, workers=None):
    """Monte Carlo average of ``grad f grad f^T`` over ``m1`` samples."""
    if m1 < 1:
        raise ParameterError("m1 must be >= 1")
    workers = resolve_workers(workers)
    d = oracle.dim
    total = _accumulate(m1, d, _live_rows(oracle, seed, stream, 0, paired=False), workers)
    return ASEstimate(
        SymMatrix(total / m1, d), EstimatorKind.SF, m1, 0, seed, m1 * oracle.cost_weight, stream
    )


def estimate_mf(pair, m1, m2, seed, stream=0, workers=None):
    """Control-variate estimator with ``m1`` paired and ``m2`` extra samples.

    Samples ``0..m1-1`` are evaluated with both fidelities, samples
    ``m1..m1+m2-1`` with the low fidelity only. The result is symmetric but
    may be indefinite.
    """
    if m1 < 1 or m2 < 1:
        raise ParameterError("m1 and m2 must be >= 1")
    workers = resolve_workers(workers)
    d = pair.dim
    paired = _accumulate(m1, d, _live_rows(pair, seed, stream, 0, paired=True), workers)
    extra = _accumulate(m2, d, _lo_only_rows(pair.lo, seed, stream, m1), workers)
    cost = m1 * pair.hi.cost_weight + (m1 + m2) * pair.lo.cost_weight
    return ASEstimate(
        SymMatrix(paired / m1 + extra / m2, d), EstimatorKind.MF, m1, m2, seed, cost, stream
    )


def evaluate_batch(pair, m1, m2, seed, stream=0):
    """The gradient values :func:`estimate_mf` would use, as a batch.

    With ``m2 = 0`` only the paired block is produced; pass a single oracle as
    ``pair`` to get single-fidelity data.
    """
    paired = hasattr(pair, "hi")
    rows = _live_rows(pair, seed, stream, 0, paired=paired)
    his, los = [], []
    for blk in _blocks(m1):
        a, b = rows(*blk)
        his.append(a)
        los.append(b)
    d = pair.dim
    hi = np.concatenate(his) if his else np.empty((0, d))
    if not paired:
        return GradientBatch(hi)
    lo = np.concatenate(los) if los else np.empty((0, d))
    extra = None
    if m2 > 0:
        xrows = _lo_only_rows(pair.lo, seed, stream, m1)
        extra = np.concatenate([xrows(*blk)[0] for blk in _blocks(m2)])
    return GradientBatch(hi, lo, extra)


# file-backed data -----------------------------------------------------


def _array_rows(a, b):
    def rows(i0, i1):
        return a[i0:i1], (None if b is None else b[i0:i1])

    return rows


def estimate_from_batch(batch, workers=None, hi_cost=1.0, lo_cost=1.0, seed=None):
    """SF or MF estimate from precomputed gradients.

    Uses exactly the reduction of :func:`estimate_mf`, so a batch produced by
    :func:`evaluate_batch` gives a bitwise-identical matrix.
    """
    workers = resolve_workers(workers)
    d, m1 = batch.dim, batch.m1
    if m1 < 1:
        raise DataFormatError("batch has no hi rows")
    if not batch.is_multifidelity:
        total = _accumulate(m1, d, _array_rows(batch.hi_paired, None), workers)
        return ASEstimate(SymMatrix(total / m1, d), EstimatorKind.SF, m1, 0, seed, m1 * hi_cost)
    if batch.lo_paired is None:
        raise DataFormatError("multifidelity batch is missing lo_paired rows")
    if batch.m2 < 1:
        raise DataFormatError("multifidelity batch is missing lo_extra rows")
    paired = _accumulate(m1, d, _array_rows(batch.hi_paired, batch.lo_paired), workers)
    extra = _accumulate(batch.m2, d, _array_rows(batch.lo_extra, None), workers)
    m2 = batch.m2
    cost = m1 * hi_cost + (m1 + m2) * lo_cost
    return ASEstimate(
        SymMatrix(paired / m1 + extra / m2, d), EstimatorKind.MF, m1, m2, seed, cost
    )


def estimate_characteristics(batch, estimate=None):
    """Plug-in estimates of ``E||grad f||^2``, ``||H||``, ``delta_H``, ``beta^2``, ``theta^2``.

    The gradient-norm mean uses the scalar control-variate estimator when the
    batch is multifidelity. ``||H||`` and ``delta_H`` come from ``estimate``
    (computed from the batch when omitted).
    """
    hi = batch.hi_paired
    hi_sq = np.einsum("ij,ij->i", hi, hi)
    mf = batch.lo_paired is not None and batch.m2 > 0
    if mf:
        lo_sq = np.einsum("ij,ij->i", batch.lo_paired, batch.lo_paired)
        ex_sq = np.einsum("ij,ij->i", batch.lo_extra, batch.lo_extra)
        mean = float(np.mean(hi_sq - lo_sq) + np.mean(ex_sq))
    else:
        mean = float(np.mean(hi_sq))
    if not mean > 0:
        raise NumericalError("mean squared gradient norm is not positive; beta is undefined")
    if estimate is None:
        estimate = estimate_from_batch(batch)
    h_norm = operator_norm(estimate.matrix)
    if h_norm == 0:
        raise NumericalError("estimated AS matrix is zero")
    theta_sq = None
    if batch.lo_paired is not None:
        diff = hi - batch.lo_paired
        theta_sq = float(np.max(np.einsum("ij,ij->i", diff, diff)) / mean)
    return CharacteristicEstimate(
        grad_norm_sq_mean=mean,
        H_norm=h_norm,
        delta_H=trace(estimate.matrix) / h_norm,
        beta_sq=float(np.max(hi_sq) / mean),
        theta_sq=theta_sq,
    )


# batch CSV -----------------------------------------------------------

ROLES = ("hi", "lo_paired", "lo_extra")


def write_batch_csv(batch, fh=None):
    """Write ``role,index,g_1..g_d`` rows; returns the text if ``fh`` is None."""
    buf = io.StringIO() if fh is None else fh
    d = batch.dim
    buf.write(",".join(["role", "index"] + [f"g_{k + 1}" for k in range(d)]) + "\n")

    def emit(role, arr, start):
        for i, row in enumerate(arr):
            buf.write(f"{role},{start + i}," + ",".join(repr(float(v)) for v in row) + "\n")

    emit("hi", batch.hi_paired, 0)
    if batch.lo_paired is not None:
        emit("lo_paired", batch.lo_paired, 0)
    if batch.lo_extra is not None:
        emit("lo_extra", batch.lo_extra, batch.m1)
    return buf.getvalue() if fh is None else None


def read_batch_csv(path):
    with open(path, newline="") as fh:
        return parse_batch_csv(fh.read())


def parse_batch_csv(text):
    """Parse a gradient batch, validating the hi/lo_paired index bijection."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty batch file") from None
    if header[:2] != ["role", "index"] or len(header) < 3:
        raise DataFormatError("header must start with role,index,g_1", row=1)
    d = len(header) - 2
    data = {r: {} for r in ROLES}
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != d + 2:
            raise DataFormatError(f"expected {d + 2} fields, found {len(rec)}", row=lineno)
        role = rec[0].strip()
        if role not in data:
            raise DataFormatError(f"unknown role {role!r}", row=lineno, column=1)
        try:
            idx = int(rec[1])
        except ValueError:
            raise DataFormatError(f"bad index {rec[1]!r}", row=lineno, column=2) from None
        if idx in data[role]:
            raise DataFormatError(f"duplicate {role} index {idx}", row=lineno)
        vals = np.empty(d)
        for k, cell in enumerate(rec[2:]):
            try:
                vals[k] = float(cell)
            except ValueError:
                raise DataFormatError(f"non-numeric gradient entry {cell!r}", row=lineno,
                                      column=k + 3) from None
        if not np.all(np.isfinite(vals)):
            col = int(np.argmax(~np.isfinite(vals))) + 3
            raise DataFormatError("non-finite gradient entry", row=lineno, column=col)
        data[role][idx] = vals

    if not data["hi"]:
        raise DataFormatError("batch has no hi rows")
    if data["lo_paired"] and set(data["lo_paired"]) != set(data["hi"]):
        missing = sorted(set(data["hi"]) ^ set(data["lo_paired"]))
        raise DataFormatError(f"hi and lo_paired indices are not paired: {missing[:5]}")

    def stack(role):
        rows = data[role]
        if not rows:
            return None
        return np.array([rows[k] for k in sorted(rows)])

    return GradientBatch(stack("hi"), stack("lo_paired"), stack("lo_extra"))
