import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dilution_lab.pauli_core import (DenseOperator, PauliOperator, PauliString, PauliVector,
                                     commutes, dense_to_coefficients, from_pauli_coefficients,
                                     multiply, noise_commutator_weight, pauli_matrix,
                                     to_pauli_coefficients, weight_histogram,
                                     write_histogram_csv)
from dilution_lab.model_builder import sx_operator


def strings(n):
    full = (1 << n) - 1
    return st.builds(lambda x, z, ph: PauliString(x, z, n, ph),
                     st.integers(0, full), st.integers(0, full), st.integers(0, 3))


def random_hermitian(n, rng):
    d = 1 << n
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return a + a.conj().T


# ---------------------------------------------------------------- examples

def test_x_times_z_is_minus_i_y():
    p = multiply(PauliString.from_label("X"), PauliString.from_label("Z"))
    assert p.label() == "Y" and p.coefficient == -1j


def test_identity_is_neutral():
    p = PauliString.from_label("XYZI")
    assert multiply(p, PauliString.identity(4)) == p


def test_factorwise_product():
    p = multiply(PauliString.from_label("XZ"), PauliString.from_label("ZX"))
    assert p.label() == "YY" and p.coefficient == 1


def test_commutation_examples():
    assert commutes(PauliString.from_label("XX"), PauliString.from_label("ZZ"))
    assert not commutes(PauliString.from_label("X"), PauliString.from_label("Z"))


def test_mismatched_sizes_raise():
    with pytest.raises(ValueError):
        multiply(PauliString.from_label("X"), PauliString.from_label("XX"))
    with pytest.raises(ValueError):
        commutes(PauliString.from_label("X"), PauliString.from_label("XX"))


def test_noise_commutator_weight_examples():
    p = PauliString.from_label("XX")
    assert noise_commutator_weight(p, "Z", [0, 1]) == 2
    assert noise_commutator_weight(PauliString.from_label("XIX"), "X", range(3)) == 0
    # sum_j [K_j, P] K_j = -2 alpha P, checked densely
    n = 2
    k = [PauliString.single("Z", j, n).to_dense() for j in range(n)]
    pm = p.to_dense()
    lhs = sum((kj @ pm - pm @ kj) @ kj for kj in k)
    assert np.allclose(lhs, -4 * pm)


def test_depolarizing_average_is_length():
    n = 4
    for x, z in itertools.product(range(16), repeat=2):
        p = PauliString(x, z, n)
        alpha = sum(noise_commutator_weight(p, kind, range(n)) for kind in "XYZ")
        # (1/3) sum_K sum_j [K_j, P] K_j = -(4 l_P / 3) P
        assert alpha == 2 * p.weight


def test_transform_identity_and_single_string():
    op = to_pauli_coefficients(np.eye(2))
    assert op.terms == {(0, 0): 1.0}
    m = PauliString.from_label("XI").to_dense()
    op = to_pauli_coefficients(m)
    assert list(op.terms) == [(1, 0)] and op.terms[(1, 0)] == pytest.approx(1.0)


def test_transform_matches_naive_traces():
    rng = np.random.default_rng(3)
    n = 3
    m = random_hermitian(n, rng)
    c = dense_to_coefficients(m)
    for x, z in itertools.product(range(8), repeat=2):
        ref = np.trace(pauli_matrix(x, z, n).conj().T @ m) / 8
        assert abs(c[x, z] - ref) < 1e-12


def test_dimension_check():
    with pytest.raises(ValueError):
        DenseOperator.from_matrix(np.eye(3))


def test_histogram_examples(tmp_path):
    hist = weight_histogram(sx_operator(4))
    assert np.allclose(hist, [0, 0.25, 0, 0, 0])
    hist = weight_histogram(PauliOperator.from_strings(4, [("XYZI", 1.0)]))
    assert np.allclose(hist, [0, 0, 0, 1, 0])
    path = tmp_path / "h.csv"
    write_histogram_csv(path, hist)
    assert path.read_text().splitlines()[0] == "k,p_k"


def test_vector_and_sparse_histograms_agree():
    rng = np.random.default_rng(1)
    v = PauliVector(rng.standard_normal(4 ** 4), 4)
    assert np.allclose(weight_histogram(v), weight_histogram(v.to_operator()))


def test_hermitian_operator_has_real_coefficients():
    op = to_pauli_coefficients(random_hermitian(2, np.random.default_rng(0)))
    assert op.is_hermitian


# ---------------------------------------------------------------- properties

@given(st.integers(1, 4).flatmap(lambda n: st.tuples(strings(n), strings(n), strings(n))))
def test_associativity(abc):
    a, b, c = abc
    assert multiply(multiply(a, b), c) == multiply(a, multiply(b, c))


@given(st.integers(1, 5).flatmap(strings))
def test_square_is_plus_minus_identity(p):
    sq = multiply(p, p)
    assert sq.x_bits == 0 and sq.z_bits == 0 and sq.phase in (0, 2)


@given(st.integers(1, 4).flatmap(lambda n: st.tuples(strings(n), strings(n))))
def test_commutes_symmetric_and_dense(ab):
    a, b = ab
    assert commutes(a, b) == commutes(b, a)
    ma, mb = a.to_dense(), b.to_dense()
    assert np.allclose(ma @ mb, mb @ ma) == commutes(a, b)


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(strings(n), strings(n))))
def test_product_matches_dense(ab):
    a, b = ab
    assert np.allclose(multiply(a, b).to_dense(), a.to_dense() @ b.to_dense())


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_parseval_and_round_trip(n, seed):
    m = random_hermitian(n, np.random.default_rng(seed))
    c = dense_to_coefficients(m)
    assert abs(np.sum(np.abs(c) ** 2) - np.trace(m.conj().T @ m).real / 2 ** n) < 1e-10 * (
        1 + np.abs(m).max() ** 2 * 2 ** n)
    back = from_pauli_coefficients(to_pauli_coefficients(m, threshold=0.0)).matrix
    assert np.allclose(back, m, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_frobenius_preserved_under_unitary(n, seed):
    rng = np.random.default_rng(seed)
    m = random_hermitian(n, rng)
    q, _ = np.linalg.qr(rng.standard_normal((2 ** n, 2 ** n))
                        + 1j * rng.standard_normal((2 ** n, 2 ** n)))
    w0 = PauliVector.from_dense(m).frobenius_weight()
    w1 = PauliVector.from_dense(q @ m @ q.conj().T).frobenius_weight()
    assert abs(w0 - w1) < 1e-10 * max(1.0, w0)


@given(st.integers(1, 4).flatmap(strings), st.sampled_from("XYZ"))
def test_alpha_bounded_by_weight(p, kind):
    alpha = noise_commutator_weight(p, kind, range(p.num_qubits))
    assert 0 <= alpha <= p.weight
