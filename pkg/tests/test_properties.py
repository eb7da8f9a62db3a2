import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asmf.bounds import FidelityParams, mf_m1_probability, mf_tail_at, min_m2_ratio
from asmf.models import InputDensity, sample_inputs
from asmf.subspace import active_subspace, near_optimality_gap, top_eigen_sum, trace_objective
from asmf.symmat import SymMatrix, eigendecomp, from_asmx, from_csv, operator_norm, to_asmx, to_csv

finite = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def sym_matrices(draw, max_dim=12):
    d = draw(st.integers(1, max_dim))
    a = draw(arrays(np.float64, (d, d), elements=finite))
    return SymMatrix.from_dense(np.triu(a) + np.triu(a, 1).T)


@given(sym_matrices())
def test_serialization_round_trips(a):
    assert from_csv(to_csv(a)) == a
    assert from_asmx(to_asmx(a)) == a
    assert from_asmx(to_asmx(a, packed=False)) == a


@given(sym_matrices())
def test_eigendecomposition_residual(a):
    eig = eigendecomp(a)
    scale = max(1.0, operator_norm(a))
    assert np.max(np.abs(eig.reconstruct() - a.to_dense())) <= 1e-10 * scale * a.dim


@settings(max_examples=50)
@given(sym_matrices(8), st.data())
def test_certificate(h, data):
    noise = data.draw(arrays(np.float64, (h.dim, h.dim), elements=st.floats(-10, 10)))
    h_hat = h + SymMatrix.from_dense(noise + noise.T)
    r = data.draw(st.integers(1, h.dim))
    u = active_subspace(h_hat, r)
    slack = 1e-9 * max(1.0, operator_norm(h), operator_norm(h_hat)) * r
    assert trace_objective(u, h) >= top_eigen_sum(h, r) - near_optimality_gap(h, h_hat, r) - slack


@given(st.integers(0, 2**32), st.integers(0, 50), st.integers(0, 30), st.integers(1, 20),
       st.integers(1, 9))
def test_counter_stream_subranges(seed, start, offset, n, d):
    dens = InputDensity.uniform(d)
    full = sample_inputs(dens, start + offset + n, seed)
    np.testing.assert_array_equal(full[start + offset:], sample_inputs(dens, n, seed, start=start + offset))


@given(st.floats(0.01, 2.0), st.floats(0.5, 5.0))
def test_m2_ratio_at_least_one(theta, beta):
    assert min_m2_ratio(theta, beta) >= 1.0


@given(st.floats(0.05, 1.0), st.floats(0.01, 0.99), st.floats(1.0, 50.0), st.floats(0.01, 1.0))
def test_probability_planner_is_minimal(eps, eta, delta, theta):
    p = FidelityParams(beta=1.7, theta=theta, delta_H=delta, dim=100)
    m1 = mf_m1_probability(eps, eta, p)
    assert mf_tail_at(m1, eps, p) <= eta * (1 + 1e-12)
    if m1 > 1:
        assert mf_tail_at(m1 - 1, eps, p) > eta * (1 - 1e-12)
