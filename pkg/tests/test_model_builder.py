import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dilution_lab.model_builder import (H1_1_TABLE, ObservableSpec, TrotterCircuit,
                                        apply_channel_dense, build_chain, build_noise_preset,
                                        build_square_lattice, build_wheel_spokes,
                                        cosine_schedule, floquet_hamiltonian_expansion,
                                        h1_1_scale, product_state, sx_operator)
from dilution_lab.pauli_core import PauliString


def test_square_lattice_counts():
    g = build_square_lattice(5, 4, True)
    assert g.num_sites == 20 and g.num_edges == 40
    assert build_square_lattice(2, 2, True).num_edges == 8
    assert build_square_lattice(3, 4, True).num_edges == 24
    assert build_square_lattice(3, 4, False).num_edges == 17


def test_gate_order_three_groups():
    g = build_square_lattice(4, 5, True)
    order = g.ordered_edges()
    assert order[:4] == [(0, 1), (2, 3), (4, 0), (6, 7)]
    second = g.edge_colors[1][0]
    assert g.edges[second] == (1, 2)
    third = g.edge_colors[2][0]
    assert g.edges[third] == (0, 5)


def test_lattice_minimum_size():
    with pytest.raises(ValueError):
        build_square_lattice(1, 4, True)
    with pytest.raises(ValueError):
        build_square_lattice(0, 4, False)


def test_wheel_spokes():
    base = build_square_lattice(3, 4, True)
    g = build_wheel_spokes(base, 1)
    assert g.num_edges == 31
    assert set(base.edges) <= set(g.edges)
    linked = {b if a == 1 else a for a, b in g.edges if 1 in (a, b)}
    assert linked == set(range(12)) - {1}
    # idempotent once the hub touches everything
    assert build_wheel_spokes(g, 1).num_edges == 31
    small = build_wheel_spokes(build_square_lattice(2, 2, True), 1)
    assert small.edges[8:] == ((1, 2),)
    with pytest.raises(ValueError):
        build_wheel_spokes(base, 12)


def test_no_self_loops():
    for g in (build_square_lattice(2, 3), build_chain(5), build_wheel_spokes(build_chain(6), 0)):
        assert all(a != b for a, b in g.edges)


def test_h1_1_table_values():
    ch = build_noise_preset("h1_1_two_qubit", theta=math.pi / 2)
    probs = dict((lbl, p) for p, lbl in ch.probabilities())
    # the angle law gives 0.418*pi/2 + 0.34 = 0.9966 at pi/2, within 0.5% of the table
    assert probs["IZ"] == pytest.approx(0.000327, rel=5e-3)
    assert probs["IZ"] == pytest.approx(0.000327 * h1_1_scale(math.pi / 2), rel=1e-12)
    assert "XX" not in probs and "YY" not in probs and len(probs) == 11
    low = dict((lbl, p) for p, lbl in build_noise_preset("h1_1_two_qubit",
                                                         theta=0.3).probabilities())
    assert h1_1_scale(0.3) == pytest.approx(0.465, abs=5e-4)
    assert h1_1_scale(0.3) == pytest.approx(0.47, abs=0.01)
    for lbl in probs:
        assert low[lbl] == pytest.approx(H1_1_TABLE[lbl] * h1_1_scale(0.3), rel=1e-12)


def test_noise_preset_errors():
    with pytest.raises(ValueError):
        build_noise_preset("amplitude_damping", 0.1)
    with pytest.raises(ValueError):
        build_noise_preset("h1_1_two_qubit", theta=2.0)
    with pytest.raises(ValueError):
        build_noise_preset("h1_1_two_qubit", theta=0.0)


def test_zero_epsilon_is_identity():
    ch = build_noise_preset("depolarizing_1q", 0.0)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rho = a @ a.conj().T
    assert np.allclose(apply_channel_dense(rho, ch, [1], 2), rho)


def test_depolarizing_weights():
    ch = build_noise_preset("depolarizing_1q", 0.01)
    assert ch.identity_weight == pytest.approx(1 - 0.0075)
    assert sum(p for p, _ in ch.probabilities()) + ch.identity_weight == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["single_pauli_X", "depolarizing_1q", "h1_1_two_qubit"]),
       st.floats(0.0, 0.2), st.integers(0, 2 ** 32 - 1))
def test_channel_preserves_trace(name, eps, seed):
    ch = build_noise_preset(name, eps)
    rng = np.random.default_rng(seed)
    n = 3
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    sites = [0, 2] if ch.arity == 2 else [1]
    out = apply_channel_dense(rho, ch, sites, n)
    assert abs(np.trace(out) - 1) < 1e-12
    w = [p for p, _ in ch.dense_kraus()]
    assert min(w) >= 0 and sum(w) == pytest.approx(1.0, abs=1e-12)


def test_floquet_order0():
    c = TrotterCircuit(build_chain(4), 0.1, 0.7)
    hx, hzz = c.hamiltonian_terms()
    assert floquet_hamiltonian_expansion(c, 0).terms == (hx + hzz).terms


def test_floquet_order1_two_site():
    h, dt = 0.8, 0.1
    c = TrotterCircuit(build_chain(2, periodic=False), dt, h)
    op = floquet_hamiltonian_expansion(c, 1)
    for lbl in ("YZ", "ZY"):
        assert abs(op.coefficient(lbl)) == pytest.approx(2 * h * dt / 2)


def test_floquet_order2_string_lengths_and_accuracy():
    from scipy.linalg import expm
    c = TrotterCircuit(build_chain(5, periodic=False), 0.05, 1.0)
    op = floquet_hamiltonian_expansion(c, 2)
    assert op.max_weight() <= 3
    # the truncated generator reproduces one step to O(dt^4)
    err = np.abs(expm(-1j * c.dt * op.to_dense()) - c.step_unitary(1)).max()
    assert err < 1e-4
    with pytest.raises(ValueError):
        floquet_hamiltonian_expansion(c, 3)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_step_then_inverse_is_identity(seed):
    from dilution_lab.sim_engines import apply_inverse_step_statevector, apply_step_statevector
    rng = np.random.default_rng(seed)
    c = TrotterCircuit(build_square_lattice(2, 3), 0.13, cosine_schedule(1.2, 40.0), 5)
    psi = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    psi /= np.linalg.norm(psi)
    phi = psi.copy()
    for t in range(1, 4):
        apply_step_statevector(phi, c, t)
    for t in range(3, 0, -1):
        apply_inverse_step_statevector(phi, c, t)
    assert np.abs(phi - psi).max() < 1e-10


def test_step_commutes_with_parity():
    for g in (build_square_lattice(2, 3), build_chain(8), build_wheel_spokes(build_chain(7), 0)):
        c = TrotterCircuit(g, 0.3, 1.7)
        n = g.num_sites
        u = c.step_unitary(1)
        par = PauliString((1 << n) - 1, 0, n).to_dense()
        assert np.array_equal(u @ par, par @ u) or np.abs(u @ par - par @ u).max() < 1e-13


def test_cosine_schedule_uses_step_number():
    h = cosine_schedule(1.0, 100.0)
    assert h(0) == 1.0 and h(25) == pytest.approx(-1.0)
    c = TrotterCircuit(build_chain(3), 0.1, h)
    assert c.time_dependent and c.field(50) == pytest.approx(1.0)


def test_sx_k_observables():
    for n in (3, 5):
        for k in range(1, n + 1):
            op = sx_operator(n, k)
            assert op.max_weight() == k
            psi = product_state(n, "plus")
            assert np.vdot(psi, op.to_dense() @ psi).real == pytest.approx(1.0)
    assert ObservableSpec("parity").weight_k(6) == 6
    with pytest.raises(ValueError):
        ObservableSpec("sx", 7).to_operator(4)
    with pytest.raises(ValueError):
        ObservableSpec("magnetization")
