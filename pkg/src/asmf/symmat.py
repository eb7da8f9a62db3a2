"""Dense symmetric matrices with structural symmetry and spectral helpers.

A :class:`SymMatrix` stores only its upper triangle (row-major, packed), so
no operation can make it asymmetric. All constructors reject NaN/Inf.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DataFormatError, NumericalError, ParameterError

ASMX_MAGIC = b"ASMX"
ASMX_FLAG_PACKED = 1
_HEADER = struct.Struct("<4sIII")

EIG_RESIDUAL_TOL = 1e-10
PSD_TOL = 1e-10


def packed_length(d):
    return d * (d + 1) // 2


class SymMatrix:
    """Immutable real symmetric ``d x d`` matrix.

    Parameters
    ----------
    packed : array_like
        Upper triangle in row-major order, length ``d*(d+1)/2``.
    dim : int
        Matrix dimension ``d``.
    """

    __slots__ = ("_packed", "_dim", "_dense")

    def __init__(self, packed, dim):
        dim = int(dim)
        if dim < 1:
            raise ParameterError(f"dimension must be positive, got {dim}")
        arr = np.array(packed, dtype=np.float64).ravel()
        if arr.shape[0] != packed_length(dim):
            raise DataFormatError(
                f"packed array of length {arr.shape[0]} does not match dim {dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise NumericalError("matrix entries must be finite")
        arr.setflags(write=False)
        self._packed = arr
        self._dim = dim
        self._dense = None

    # construction -----------------------------------------------------

    @classmethod
    def from_dense(cls, a, rtol=1e-12):
        """Build from a full square array, rejecting asymmetric input.

        Entries may differ from their transpose by at most
        ``rtol * max(1, max|a|)``; the upper triangle is kept.
        """
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataFormatError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NumericalError("matrix entries must be finite")
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        asym = np.abs(a - a.T)
        if asym.size and asym.max() > rtol * scale:
            i, j = np.unravel_index(np.argmax(asym), asym.shape)
            raise DataFormatError(
                f"matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {asym[i, j]:.3e}"
            )
        d = a.shape[0]
        return cls(a[np.triu_indices(d)], d)

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros(packed_length(d)), d)

    @classmethod
    def identity(cls, d):
        return cls.diag(np.ones(d))

    @classmethod
    def diag(cls, values):
        values = np.asarray(values, dtype=np.float64).ravel()
        d = values.shape[0]
        packed = np.zeros(packed_length(d))
        packed[_diag_positions(d)] = values
        return cls(packed, d)

    # accessors --------------------------------------------------------

    @property
    def dim(self):
        return self._dim

    @property
    def packed(self):
        """Read-only packed upper triangle."""
        return self._packed

    def to_dense(self):
        """Full matrix as a read-only array (cached)."""
        if self._dense is None:
            d = self._dim
            out = np.empty((d, d))
            iu = np.triu_indices(d)
            out[iu] = self._packed
            out.T[iu] = self._packed
            out.setflags(write=False)
            self._dense = out
        return self._dense

    def __array__(self, dtype=None, copy=None):
        a = self.to_dense()
        return a.astype(dtype) if dtype is not None else a.copy()

    def diagonal(self):
        return self._packed[_diag_positions(self._dim)].copy()

    def __getitem__(self, idx):
        return self.to_dense()[idx]

    # arithmetic -------------------------------------------------------

    def _check_same(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        if other.dim != self.dim:
            raise ParameterError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return None

    def __add__(self, other):
        bad = self._check_same(other)
        if bad is NotImplemented:
            return bad
        return SymMatrix(self._packed + other._packed, self._dim)

    def __sub__(self, other):
        bad = self._check_same(other)
        if bad is NotImplemented:
            return bad
        return SymMatrix(self._packed - other._packed, self._dim)

    def __mul__(self, c):
        if isinstance(c, SymMatrix):
            return NotImplemented
        return SymMatrix(self._packed * float(c), self._dim)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return SymMatrix(self._packed / float(c), self._dim)

    def __neg__(self):
        return SymMatrix(-self._packed, self._dim)

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self._dim == other._dim and np.array_equal(self._packed, other._packed)

    __hash__ = None

    def congruence(self, m):
        """Return ``m^T A m`` for a ``d x k`` matrix ``m``."""
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != self._dim:
            raise ParameterError(f"expected {self._dim} rows, got shape {m.shape}")
        return SymMatrix.from_dense(_symmetrize(m.T @ self.to_dense() @ m), rtol=np.inf)

    def __repr__(self):
        return f"SymMatrix(dim={self._dim})"


def _diag_positions(d):
    i = np.arange(d)
    return i * d - i * (i - 1) // 2


def _symmetrize(a):
    return 0.5 * (a + a.T)


# spectral primitives --------------------------------------------------


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs sorted by non-increasing eigenvalue."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _normalize_signs(v):
    # first component above noise level is made positive
    for k in range(v.shape[1]):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-10)
        if nz.size and col[nz[0]] < 0:
            v[:, k] = -col
    return v


def eigendecomp(a):
    """Symmetric eigendecomposition with deterministic ordering and signs.

    Eigenvalues are returned in non-increasing order; each eigenvector has a
    positive first non-negligible entry. Raises :class:`ConvergenceError` if
    LAPACK fails or the reconstruction residual exceeds
    ``1e-10 * max(1, ||A||)``.
    """
    dense = a.to_dense()
    try:
        w, v = np.linalg.eigh(dense)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver did not converge: {exc}") from exc
    w = w[::-1].copy()
    v = _normalize_signs(v[:, ::-1].copy())
    norm = float(np.max(np.abs(w))) if w.size else 0.0
    resid = float(np.max(np.abs(dense - (v * w) @ v.T)))
    if resid > EIG_RESIDUAL_TOL * max(1.0, norm):
        raise ConvergenceError("eigendecomposition failed accuracy check", residual=resid)
    w.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomposition(w, v)


def eigenvalues(a):
    """Eigenvalues only, non-increasing."""
    try:
        w = np.linalg.eigvalsh(a.to_dense())
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w[::-1].copy()


def operator_norm(a):
    """Spectral norm ``max_i |lambda_i|``."""
    w = eigenvalues(a)
    return float(max(abs(w[0]), abs(w[-1])))


def trace(a):
    return float(np.sum(a.diagonal()))


def intrinsic_dimension(a):
    """Effective rank ``trace(A) / ||A||`` of a PSD matrix."""
    w = eigenvalues(a)
    norm = float(max(abs(w[0]), abs(w[-1])))
    if norm == 0.0:
        raise NumericalError("intrinsic dimension of the zero matrix is undefined")
    if w[-1] < -PSD_TOL * norm:
        raise NumericalError(f"matrix is indefinite: most negative eigenvalue {w[-1]:.6e}")
    return trace(a) / norm


def relative_error(h, h_hat):
    """``||H - Hhat|| / ||H||``."""
    if h.dim != h_hat.dim:
        raise ParameterError(f"dimension mismatch: {h.dim} vs {h_hat.dim}")
    denom = operator_norm(h)
    if denom == 0.0:
        raise NumericalError("reference matrix has zero norm")
    return operator_norm(h - h_hat) / denom


def project_psd(a):
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    eig = eigendecomp(a)
    w = np.clip(eig.eigenvalues, 0.0, None)
    v = eig.eigenvectors
    return SymMatrix.from_dense(_symmetrize((v * w) @ v.T), rtol=np.inf)


# serialization --------------------------------------------------------


def to_csv(a):
    """CSV text: dimension on the first line, then ``d`` rows."""
    buf = io.StringIO()
    buf.write(f"{a.dim}\n")
    for row in a.to_dense():
        buf.write(",".join(repr(float(x)) for x in row))
        buf.write("\n")
    return buf.getvalue()


def from_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError("empty matrix file")
    try:
        d = int(lines[0].strip())
    except ValueError:
        raise DataFormatError("first line must be the matrix dimension", row=1) from None
    if len(lines) - 1 != d:
        raise DataFormatError(f"expected {d} matrix rows, found {len(lines) - 1}")
    out = np.empty((d, d))
    for r, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != d:
            raise DataFormatError(f"expected {d} values, found {len(cells)}", row=r + 2)
        for c, cell in enumerate(cells):
            try:
                out[r, c] = float(cell)
            except ValueError:
                raise DataFormatError(f"not a number: {cell!r}", row=r + 2, column=c + 1) from None
    return SymMatrix.from_dense(out)


def to_asmx(a, packed=True):
    """Binary form: 16-byte header then little-endian float64 payload."""
    flags = ASMX_FLAG_PACKED if packed else 0
    header = _HEADER.pack(ASMX_MAGIC, a.dim, flags, 0)
    payload = a.packed if packed else a.to_dense().ravel()
    return header + np.ascontiguousarray(payload, dtype="<f8").tobytes()


def from_asmx(data):
    if len(data) < _HEADER.size:
        raise DataFormatError("file shorter than ASMX header")
    magic, d, flags, _ = _HEADER.unpack_from(data)
    if magic != ASMX_MAGIC:
        raise DataFormatError(f"bad magic {magic!r}")
    n = packed_length(d) if flags & ASMX_FLAG_PACKED else d * d
    body = data[_HEADER.size:]
    if len(body) != 8 * n:
        raise DataFormatError(f"payload has {len(body)} bytes, expected {8 * n}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if flags & ASMX_FLAG_PACKED:
        return SymMatrix(values, d)
    return SymMatrix.from_dense(values.reshape(d, d))


def save_matrix(a, path):
    """Write ``a`` as CSV or ASMX depending on the file suffix."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(to_csv(a))
    else:
        path.write_bytes(to_asmx(a))


def load_matrix(path):
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == ASMX_MAGIC:
        return from_asmx(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise DataFormatError(f"{path}: neither ASMX nor CSV") from None
    return from_csv(text)
