import numpy as np
import pytest

from dilution_lab import kernels
from dilution_lab.model_builder import build_square_lattice

pytestmark = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                reason="compiled kernels not built")


def both(name):
    return (getattr(kernels.backend_module("cython"), name),
            getattr(kernels.backend_module("python"), name))


@pytest.fixture
def setup():
    rng = np.random.default_rng(0)
    g = build_square_lattice(2, 3)
    n = g.num_sites
    psi = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return rng, n, g.edge_array(), rng.standard_normal(4 ** n), psi / np.linalg.norm(psi)


def run(name, make):
    out = []
    for fn in both(name):
        args = make()
        ret = fn(*args)
        out.append(args[0] if ret is None else ret)
    return out


def test_pauli_layers(setup):
    rng, n, edges, vec, _ = setup
    xa = rng.uniform(-1, 1, n)
    za = rng.uniform(-1, 1, len(edges))
    a, b = run("ptm_x_layer", lambda: (vec.copy(), n, xa))
    assert np.abs(a - b).max() < 1e-12
    a, b = run("ptm_zz_layer", lambda: (vec.copy(), n, edges, za))
    assert np.abs(a - b).max() < 1e-12


def test_pauli_channels(setup):
    rng, n, _, vec, _ = setup
    a, b = run("ptm_site_channel", lambda: (vec.copy(), n, 0.9, 0.8, 0.7, 0b101101))
    assert np.abs(a - b).max() < 1e-12
    table = rng.uniform(0.5, 1.0, 16)
    a, b = run("ptm_edge_channel", lambda: (vec.copy(), n, 1, 4, table))
    assert np.abs(a - b).max() < 1e-12


def test_length_histograms(setup):
    rng, n, _, vec, _ = setup
    other = rng.standard_normal(4 ** n)
    fc, fp = both("ptm_length_histograms")
    for hc, hp in zip(fc(vec, other, n), fp(vec, other, n)):
        assert np.allclose(hc, hp, atol=1e-10)


def test_statevector_kernels(setup):
    rng, n, _, _, psi = setup
    xa = rng.uniform(-1, 1, n)
    a, b = run("sv_x_layer", lambda: (psi.copy(), n, xa))
    assert np.abs(a - b).max() < 1e-12
    a, b = run("sv_zz_gate", lambda: (psi.copy(), n, 2, 5, 0.37))
    assert np.abs(a - b).max() < 1e-12
    a, b = run("sv_apply_pauli", lambda: (psi.copy(), n, 0b110010, 0b011011))
    assert np.abs(a - b).max() < 1e-12


def test_majorana_step():
    q = np.random.default_rng(1).standard_normal((24, 24))
    a, b = run("mj_trotter_step", lambda: (q.copy(), 12, 0.15, 0.1))
    assert np.abs(a - b).max() < 1e-12
    # the step is a rotation
    r = np.eye(24)
    kernels.mj_trotter_step(r, 12, 0.15, 0.1)
    assert np.allclose(r @ r.T, np.eye(24), atol=1e-12)
