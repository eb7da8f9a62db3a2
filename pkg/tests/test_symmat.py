import numpy as np
import pytest

from asmf.errors import ConvergenceError, DataFormatError, NumericalError, ParameterError
from asmf.symmat import (
    SymMatrix,
    eigendecomp,
    eigenvalues,
    from_asmx,
    from_csv,
    intrinsic_dimension,
    load_matrix,
    operator_norm,
    packed_length,
    project_psd,
    relative_error,
    save_matrix,
    to_asmx,
    to_csv,
    trace,
)


def random_sym(d, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    return SymMatrix.from_dense(a + a.T)


def test_packed_layout_is_row_major_upper():
    a = np.arange(9.0).reshape(3, 3)
    s = SymMatrix.from_dense(np.triu(a) + np.triu(a, 1).T)
    assert s.packed.tolist() == [0, 1, 2, 4, 5, 8]
    assert packed_length(3) == 6
    d = 5
    m = random_sym(d)
    dense = m.to_dense()
    for i in range(d):
        for j in range(i, d):
            assert m.packed[i * d - i * (i - 1) // 2 + (j - i)] == dense[i, j]


def test_dense_round_trip_and_indexing():
    m = random_sym(7, 1)
    assert SymMatrix.from_dense(m.to_dense()) == m
    assert m[2, 5] == m[5, 2] == m.to_dense()[2, 5]
    np.testing.assert_array_equal(m.diagonal(), np.diag(m.to_dense()))
    assert not m.to_dense().flags.writeable


def test_rejects_asymmetric_and_nonfinite():
    a = np.eye(3)
    a[0, 1] = 1.0
    with pytest.raises(DataFormatError):
        SymMatrix.from_dense(a)
    with pytest.raises((NumericalError, DataFormatError, ParameterError)):
        SymMatrix(np.array([1.0, np.nan, 1.0]), 2)
    with pytest.raises((DataFormatError, ParameterError)):
        SymMatrix(np.zeros(4), 2)


def test_arithmetic_matches_dense():
    a, b = random_sym(4, 2), random_sym(4, 3)
    np.testing.assert_allclose((a + b).to_dense(), a.to_dense() + b.to_dense())
    np.testing.assert_allclose((a - b).to_dense(), a.to_dense() - b.to_dense())
    np.testing.assert_allclose((2.5 * a).to_dense(), 2.5 * a.to_dense())
    np.testing.assert_allclose((a / 4).to_dense(), a.to_dense() / 4)
    np.testing.assert_allclose((-a).to_dense(), -a.to_dense())
    m = np.random.default_rng(4).standard_normal((4, 2))
    np.testing.assert_allclose(a.congruence(m).to_dense(), m.T @ a.to_dense() @ m, atol=1e-12)
    with pytest.raises(ParameterError):
        a + random_sym(3)


def test_constructors():
    assert SymMatrix.zeros(3).packed.sum() == 0
    np.testing.assert_array_equal(SymMatrix.identity(3).to_dense(), np.eye(3))
    np.testing.assert_array_equal(SymMatrix.diag([3, 2]).to_dense(), np.diag([3.0, 2.0]))


@pytest.mark.parametrize("d", [1, 2, 10, 60])
def test_eigendecomposition(d):
    a = random_sym(d, d)
    eig = eigendecomp(a)
    w, v = eig.eigenvalues, eig.eigenvectors
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(v.T @ v, np.eye(d), atol=1e-12)
    np.testing.assert_allclose(eig.reconstruct(), a.to_dense(), atol=1e-10 * max(1, operator_norm(a)))
    for k in range(d):
        col = v[:, k]
        first = col[np.abs(col) > 1e-10][0]
        assert first > 0
    np.testing.assert_allclose(eigenvalues(a), w)


def test_eigendecomposition_is_deterministic():
    a = random_sym(20, 5)
    e1, e2 = eigendecomp(a), eigendecomp(a)
    np.testing.assert_array_equal(e1.eigenvectors, e2.eigenvectors)


def test_norm_trace_intrinsic_dimension():
    a = SymMatrix.diag([1, 1, 1, 0, 0])
    assert operator_norm(a) == 1.0
    assert trace(a) == 3.0
    assert intrinsic_dimension(a) == 3.0
    assert intrinsic_dimension(SymMatrix.diag([4, 1])) == pytest.approx(1.25)
    with pytest.raises(NumericalError):
        intrinsic_dimension(SymMatrix.zeros(3))
    with pytest.raises(NumericalError):
        intrinsic_dimension(SymMatrix.diag([1, -1]))
    assert operator_norm(SymMatrix.diag([1, -3])) == 3.0


def test_relative_error_and_psd_projection():
    h = SymMatrix.diag([2, 1])
    assert relative_error(h, h) == 0
    assert relative_error(h, SymMatrix.diag([2, 0])) == pytest.approx(0.5)
    p = project_psd(SymMatrix.diag([1, -2, 3]))
    np.testing.assert_allclose(p.to_dense(), np.diag([1.0, 0.0, 3.0]), atol=1e-14)
    with pytest.raises(NumericalError):
        relative_error(SymMatrix.zeros(2), h)


def test_csv_round_trip_is_exact(tmp_path):
    a = random_sym(6, 7) / 3
    assert from_csv(to_csv(a)) == a
    path = tmp_path / "m.csv"
    save_matrix(a, path)
    assert load_matrix(path) == a


@pytest.mark.parametrize("packed", [True, False])
def test_asmx_round_trip_is_exact(tmp_path, packed):
    a = random_sym(9, 8)
    data = to_asmx(a, packed=packed)
    assert data[:4] == b"ASMX"
    assert from_asmx(data) == a
    path = tmp_path / "m.asmx"
    save_matrix(a, path)
    assert load_matrix(path) == a


def test_malformed_files():
    with pytest.raises(DataFormatError, match="row 3, column 2"):
        from_csv("2\n1,2\n2,x\n")
    with pytest.raises(DataFormatError, match="expected 2 matrix rows"):
        from_csv("2\n1,2\n")
    with pytest.raises(DataFormatError):
        from_csv("2\n1,2\n3,1\n")
    with pytest.raises(DataFormatError):
        from_asmx(b"XXXX" + bytes(12))
    good = to_asmx(SymMatrix.identity(3))
    with pytest.raises(DataFormatError, match="payload"):
        from_asmx(good[:-8])


def test_eigensolver_failure_is_reported(monkeypatch):
    import asmf.symmat as sm

    def bad_eigh(a):
        n = a.shape[0]
        return np.zeros(n), np.eye(n)

    monkeypatch.setattr(sm.np.linalg, "eigh", bad_eigh)
    with pytest.raises(ConvergenceError):
        sm.eigendecomp(random_sym(3))
