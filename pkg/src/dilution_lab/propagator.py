"""Pauli-basis propagation of states and observables.

A state is stored through its Pauli expectation values ``a_P = tr(rho P)``
in the flat layout ``(x << n) | z``.  Unitary conjugation is a real
orthogonal map on this vector and every Pauli noise location is diagonal,
with three per-string eigenvalues:

* ``f = 1 + eps*g``: the channel itself,
* ``g``: the generator ``sum_u w_u (K_u . K_u - id)``,
* ``d = c + g``: the bare insertion ``sum_u w_u K_u . K_u``.

Tracks carried along the circuit:

``rho``      the noisy state;
``drho``     d rho / d eps at the channel's eps (noisy first-order sector);
``taylor``   Taylor coefficients in eps at eps = 0 (the Sigma_n);
``sectors``  ordered insertion sums D_n at eps = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .model_builder import NoiseChannel, ObservableSpec, TrotterCircuit, initial_basis

_DIGIT = {"I": 0, "X": 1, "Z": 2, "Y": 3}


@lru_cache(maxsize=2)
def _letter_counts(n: int, mask: int):
    """Per-index counts (nI, nX, nZ, nY) of the letters on masked sites, uint8."""
    dim = 1 << n
    v = np.arange(dim, dtype=np.int64)
    pc = np.array([bin(i).count("1") for i in range(dim)], dtype=np.uint8)
    x = v[:, None] & mask
    z = v[None, :] & mask
    nx = pc[(x & ~z)].reshape(-1)
    nz = pc[(~x & z) & mask].reshape(-1)
    ny = pc[(x & z)].reshape(-1)
    ni = (pc[mask] - nx - ny - nz).astype(np.uint8)
    return ni, nx, nz, ny


def _power_product(vals, counts):
    out = np.ones(counts[0].shape)
    for v, k in zip(vals, counts):
        if v != 1.0:
            out *= np.power(v, k, dtype=float)
    return out


def _elementary(vals, counts, order):
    """Elementary symmetric polynomials e_1..e_order of the per-site values."""
    p = []
    for m in range(1, order + 1):
        acc = np.zeros(counts[0].shape)
        for v, k in zip(vals, counts):
            if v != 0.0:
                acc += (v ** m) * k
        p.append(acc)
    e = [np.ones(counts[0].shape)]
    for k in range(1, order + 1):
        acc = np.zeros(counts[0].shape)
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * p[i - 1]
        e.append(acc / k)
    return e[1:]


def _product_derivative(f, g, counts):
    """d/deps prod_sites (1 + eps g_site) written with f = 1 + eps g."""
    out = np.zeros(counts[0].shape)
    for li in range(4):
        if g[li] == 0.0:
            continue
        term = g[li] * counts[li].astype(float)
        for lj in range(4):
            if lj == li:
                term *= np.power(f[lj], np.maximum(counts[lj].astype(np.int64) - 1, 0))
            elif f[lj] != 1.0:
                term *= np.power(f[lj], counts[lj], dtype=float)
        out += term
    return out


@dataclass
class Tracks:
    rho: np.ndarray | None = None
    drho: np.ndarray | None = None
    taylor: list = field(default_factory=list)
    sectors: list = field(default_factory=list)

    def vectors(self):
        out = [v for v in (self.rho, self.drho) if v is not None]
        return out + list(self.taylor) + list(self.sectors)


class PauliPropagator:
    """Applies Trotter steps and noise locations to Pauli-basis vectors."""

    def __init__(self, circuit: TrotterCircuit, noise: NoiseChannel | None = None, backend=None):
        self.circuit = circuit
        self.noise = noise
        self.n = circuit.num_qubits
        if self.n > 13:
            raise MemoryError(f"Pauli-basis propagation is limited to N <= 12 (got N={self.n})")
        self.k = kernels.backend_module(backend) if backend else kernels
        self._edges = circuit.graph.edge_array()
        self._zz = circuit.zz_angles()
        self._cache = {}
        if noise is not None:
            g = noise.insertion_table()
            self._tables = {"g": g, "f": 1.0 + noise.epsilon * g, "d": noise.c + g}

    # ---------------------------------------------------------------- layout

    @property
    def locations_per_step(self) -> int:
        if self.noise is None:
            return 0
        return len(self.step_locations())

    def step_locations(self) -> list:
        """Noise locations of one step, in application order."""
        noise = self.noise
        if noise.cadence == "step":
            if noise.arity == 1:
                return [(j,) for j in range(self.n)]
            return [tuple(int(s) for s in e) for e in self._edges]
        locs = []
        for a, b in self._edges:
            locs += [(int(a), int(b))] if noise.arity == 2 else [(int(a),), (int(b),)]
        return locs

    def program(self, t: int):
        """Operations of step t: ('x', angles), ('zz', edges, angles), ('noise', locations)."""
        ops = [("x", self.circuit.x_angles(t))]
        if self.noise is None or self.noise.cadence == "step":
            ops.append(("zz", self._edges, self._zz))
            if self.noise is not None:
                ops.append(("noise", self.step_locations()))
        else:
            for e in range(len(self._edges)):
                ops.append(("zz", self._edges[e:e + 1], self._zz[e:e + 1]))
                a, b = (int(s) for s in self._edges[e])
                ops.append(("noise", [(a, b)] if self.noise.arity == 2 else [(a,), (b,)]))
        return ops

    # ---------------------------------------------------------------- unitary part

    def unitary_step(self, c: np.ndarray, t: int, inverse: bool = False) -> None:
        """Conjugate by the step-t unitary (or its inverse), in place."""
        xa = self.circuit.x_angles(t)
        if inverse:
            self.k.ptm_zz_layer(c, self.n, self._edges, -self._zz)
            self.k.ptm_x_layer(c, self.n, -xa)
        else:
            self.k.ptm_x_layer(c, self.n, xa)
            self.k.ptm_zz_layer(c, self.n, self._edges, self._zz)

    # ---------------------------------------------------------------- noise part

    def _group_arrays(self, locs, what):
        """Cached diagonal arrays for an all-site single-qubit group."""
        key = (what, len(locs))
        if key not in self._cache:
            counts = _letter_counts(self.n, (1 << self.n) - 1)
            tb = self._tables
            kind, order = what
            if kind == "f":
                arr = _power_product(tb["f"], counts)
            elif kind == "df":
                arr = _product_derivative(tb["f"], tb["g"], counts)
            else:
                arr = _elementary(tb[kind], counts, order)
            self._cache[key] = arr
        return self._cache[key]

    def _diag(self, c, loc, table):
        """Multiply c in place by the per-location table (digits I, X, Z, Y)."""
        if len(loc) == 1:
            scale = table[0]
            if scale == 1.0:
                self.k.ptm_site_channel(c, self.n, table[1], table[3], table[2], 1 << loc[0])
            elif self.n > 1:
                # identity entry != 1: use the edge kernel with a spectator site
                spectator = (loc[0] + 1) % self.n
                self.k.ptm_edge_channel(c, self.n, loc[0], spectator,
                                        np.repeat(np.asarray(table, dtype=float), 4))
            else:
                c *= np.asarray(table, dtype=float)[np.array([0, 2, 1, 3])]
        else:
            self.k.ptm_edge_channel(c, self.n, loc[0], loc[1], np.ascontiguousarray(table))

    def _add_diag(self, dst, src, loc, table):
        tmp = src.copy()
        self._diag(tmp, loc, table)
        dst += tmp

    def apply_noise(self, tracks: Tracks, locs) -> None:
        tb = self._tables
        combined = self.noise.arity == 1 and len(locs) == self.n
        if combined:
            m = max(len(tracks.taylor), len(tracks.sectors)) - 1
            if tracks.drho is not None:
                tracks.drho *= self._group_arrays(locs, ("f", 0))
                tracks.drho += self._group_arrays(locs, ("df", 0)) * tracks.rho
            if tracks.rho is not None:
                tracks.rho *= self._group_arrays(locs, ("f", 0))
            for name, kind in (("taylor", "g"), ("sectors", "d")):
                series = getattr(tracks, name)
                if len(series) < 2:
                    continue
                e = self._group_arrays(locs, (kind, m))
                for order in range(len(series) - 1, 0, -1):
                    for j in range(1, order + 1):
                        series[order] += e[j - 1] * series[order - j]
            return
        for loc in locs:
            if tracks.drho is not None:
                self._diag(tracks.drho, loc, tb["f"])
                self._add_diag(tracks.drho, tracks.rho, loc, tb["g"])
            if tracks.rho is not None:
                self._diag(tracks.rho, loc, tb["f"])
            for name, kind in (("taylor", "g"), ("sectors", "d")):
                series = getattr(tracks, name)
                for order in range(len(series) - 1, 0, -1):
                    self._add_diag(series[order], series[order - 1], loc, tb[kind])

    def step(self, tracks: Tracks, t: int) -> None:
        vecs = tracks.vectors()
        for op in self.program(t):
            if op[0] == "x":
                for v in vecs:
                    self.k.ptm_x_layer(v, self.n, op[1])
            elif op[0] == "zz":
                for v in vecs:
                    self.k.ptm_zz_layer(v, self.n, op[1], op[2])
            else:
                self.apply_noise(tracks, op[1])


# ---------------------------------------------------------------- states and readout

def product_state_vector(n: int, initial: str = "plus") -> np.ndarray:
    """Pauli expectation vector of a product eigenstate: 1 on its string family."""
    basis = initial_basis(initial)
    dim = 1 << n
    mat = np.zeros((dim, dim))
    s = np.arange(dim)
    if basis == "X":
        mat[:, 0] = 1.0
    elif basis == "Y":
        mat[s, s] = 1.0
    else:
        mat[0, :] = 1.0
    return mat.reshape(-1)


@lru_cache(maxsize=8)
def _popcounts(n: int) -> np.ndarray:
    return np.array([bin(i).count("1") for i in range(1 << n)], dtype=np.int64)


def family_values(vec: np.ndarray, n: int, basis: str) -> np.ndarray:
    dim = 1 << n
    mat = vec.reshape(dim, dim)
    basis = basis.upper()
    if basis == "X":
        return mat[:, 0]
    if basis == "Z":
        return mat[0, :]
    s = np.arange(dim)
    return mat[s, s]


def symmetric_averages(values: np.ndarray, n: int) -> np.ndarray:
    """S^(k) for k = 0..n from values indexed by support mask."""
    sums = np.bincount(_popcounts(n), weights=values, minlength=n + 1)
    return sums / np.array([math.comb(n, k) for k in range(n + 1)])


class PauliReadout:
    """Evaluates an ObservableSpec on Pauli-basis vectors (``sum_P o_P a_P``)."""

    def __init__(self, spec: ObservableSpec, n: int):
        self.spec = spec
        self.n = n
        self._dense = None
        if spec.kind in ("pauli", "custom"):
            from .pauli_core import PauliVector
            self._dense = PauliVector.from_operator(spec.to_operator(n)).coeffs

    def __call__(self, vec: np.ndarray) -> float:
        spec, n = self.spec, self.n
        if self._dense is not None:
            return float(np.dot(self._dense, vec))
        vals = family_values(vec, n, spec.basis)
        if spec.kind == "parity":
            return float(vals[(1 << n) - 1])
        k = spec.k
        return float(np.sum(vals[_popcounts(n) == k]) / math.comb(n, k))
