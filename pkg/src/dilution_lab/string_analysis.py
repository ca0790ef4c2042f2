"""Heisenberg evolution, relevant-subspace projection and string-length diagnostics.

Operators are Pauli coefficient vectors (layout ``(x << n) | z``).  One
layer maps ``A -> U(u)^dagger A U(u)``, so s layers give the Heisenberg
operator O(s) whose family sum is the expectation value after s steps.
For a product initial state the relevant string family is the one of its
stabilizers (X strings for |+...+>, Y strings for the Y=+1 state, Z
strings for |0...0>), so that ``<O(t)> = sum over the family of c_P(t)``.

Layer u is conjugated last, i.e. it sits next to the initial state.  With
a time-dependent field the layers therefore have to carry the schedule in
reverse (:func:`reversed_schedule`) for O(t) to be the Heisenberg operator
of the physical circuit; the index s then counts layers from the
measurement, and an error at index s sits after physical step t - s.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model_builder import ObservableSpec, TrotterCircuit, initial_basis
from .pauli_core import PauliOperator, PauliString, PauliVector, pauli_matrix
from .propagator import PauliPropagator, _popcounts, family_values

MISSING_TOL = 1e-10


def observable_vector(obs: ObservableSpec | PauliOperator, n: int) -> np.ndarray:
    op = obs.to_operator(n) if isinstance(obs, ObservableSpec) else obs
    return PauliVector.from_operator(op).coeffs.copy()


def reversed_schedule(circuit: TrotterCircuit, t: int) -> TrotterCircuit:
    """Circuit whose layer u carries the field of step t + 1 - u."""
    if not circuit.time_dependent:
        return circuit
    h = circuit.h
    return TrotterCircuit(circuit.graph, circuit.dt, lambda u: h(t + 1 - u), t)


def heisenberg_evolve(obs, circuit: TrotterCircuit, s: int, start: int = 0) -> PauliVector:
    """Apply the layer maps start+1..s to O; a Pauli coefficient vector.

    For a constant field this is the Heisenberg operator U^-(s-start) O U^(s-start).
    """
    n = circuit.num_qubits
    if n > 12:
        raise MemoryError("Heisenberg evolution is limited to N <= 12")
    if isinstance(obs, PauliVector):
        c = obs.coeffs.astype(float).copy()
    elif isinstance(obs, np.ndarray):
        c = obs.astype(float).copy()
    else:
        c = observable_vector(obs, n)
    prop = PauliPropagator(circuit)
    for t in range(start + 1, s + 1):
        prop.unitary_step(c, t, inverse=True)
    return PauliVector(c, n)


def back_evolve(vec: np.ndarray, circuit: TrotterCircuit, t: int, s: int) -> np.ndarray:
    """Undo the layer maps t..s+1, bringing an operator at index t back to s."""
    c = vec.copy()
    prop = PauliPropagator(circuit)
    for u in range(t, s, -1):
        prop.unitary_step(c, u)
    return c


def relevant_mask(n: int, basis: str) -> np.ndarray:
    return PauliVector.zeros(n).family_mask(basis)


def project(vec: np.ndarray, n: int, basis: str) -> np.ndarray:
    """Pi_B: keep only strings built from I and the basis letter."""
    return np.where(relevant_mask(n, basis), vec, 0.0)


def average_projector_dense(m: np.ndarray, basis: str) -> np.ndarray:
    """Pi_B(M) = 2^-N sum_S B_S M B_S, the twirl over all basis strings."""
    dim = m.shape[0]
    n = dim.bit_length() - 1
    out = np.zeros_like(m, dtype=complex)
    for s in range(dim):
        x, z = {"X": (s, 0), "Y": (s, s), "Z": (0, s)}[basis.upper()]
        p = pauli_matrix(x, z, n)
        out += p @ m @ p
    return out / dim


@dataclass
class RelevantProjection:
    vector: np.ndarray
    basis: str
    s: int
    t: int
    num_qubits: int

    def to_dense(self) -> np.ndarray:
        return PauliVector(self.vector, self.num_qubits).to_dense()


def project_relevant(O_t, circuit: TrotterCircuit, s: int, t: int,
                     basis: str = "X") -> RelevantProjection:
    """O_rel(s;t): Pi_B(O(t)) brought back to index s."""
    if s > t:
        raise ValueError("need s <= t")
    n = circuit.num_qubits
    vec = O_t.coeffs if isinstance(O_t, PauliVector) else np.asarray(O_t, dtype=float)
    r = back_evolve(project(vec, n, basis), circuit, t, s)
    return RelevantProjection(r, basis.upper(), s, t, n)


# ---------------------------------------------------------------- length diagnostics

def _ratio(num, den, scale):
    return num / den if abs(den) > MISSING_TOL * max(scale, 1e-300) else np.nan


def _lengths(hcc, hcd, had, k):
    scale_c = hcc.sum()
    L = _ratio(np.dot(k, hcc), hcc.sum(), scale_c)
    L_rel = _ratio(np.dot(k, hcd), hcd.sum(), math.sqrt(scale_c * max(had.sum(), 0.0)) or 1.0)
    L_abs = _ratio(np.dot(k, had), had.sum(), had.sum())
    dil = hcc * 3.0 ** (-k)
    L_dil = _ratio(np.dot(k, dil), dil.sum(), dil.sum())
    return L, L_rel, L_abs, L_dil


@dataclass
class LengthSeries:
    """Length diagnostics indexed by s (entries NaN where flagged missing)."""

    s: np.ndarray
    t: int
    L: np.ndarray
    L_rel: np.ndarray
    L_abs: np.ndarray
    L_dil: np.ndarray
    L_rel_tt: np.ndarray = None           # relevant length of O(s) at time s
    relevant_norm: np.ndarray = None      # sum over the family of |c_P(t)|^2, per s
    hist_total: np.ndarray = None         # length histograms of O(t)
    hist_relevant: np.ndarray = None
    expectation: np.ndarray = None        # <O(s)> = sum over the family of c_P(s)
    extras: dict = field(default_factory=dict)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.L_rel)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "L", "L_rel", "L_abs", "L_dil"])
            for i, s in enumerate(self.s):
                w.writerow([int(s)] + [repr(float(v[i])) for v in
                                       (self.L, self.L_rel, self.L_abs, self.L_dil)])

    def histogram_rows(self):
        """(k, p_k_total, p_k_relevant, p_k_diluted), each normalized to 1."""
        k = np.arange(len(self.hist_total))
        tot = self.hist_total / self.hist_total.sum()
        rel = self.hist_relevant / self.hist_relevant.sum()
        dil = self.hist_total * 3.0 ** (-k)
        dil = dil / dil.sum()
        return list(zip(k, tot, rel, dil))


def length_diagnostics(O_series, O_rel_series, t: int | None = None) -> LengthSeries:
    """Lengths from explicit vectors: O_series[i] = O(s_i), O_rel_series[i] = O_rel(s_i; t)."""
    rows = []
    n = None
    for c, r in zip(O_series, O_rel_series):
        c = c.coeffs if isinstance(c, PauliVector) else np.asarray(c, dtype=float)
        r = r.vector if isinstance(r, RelevantProjection) else (
            r.coeffs if isinstance(r, PauliVector) else np.asarray(r, dtype=float))
        n = (len(c).bit_length() - 1) // 2
        h = kernels.ptm_length_histograms(np.ascontiguousarray(c), np.ascontiguousarray(r), n)
        rows.append(_lengths(*h, np.arange(n + 1)))
    arr = np.array(rows).reshape(-1, 4)
    return LengthSeries(np.arange(len(rows)), t if t is not None else len(rows) - 1,
                        arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def length_sweep(circuit: TrotterCircuit, obs, t: int, initial: str = "plus",
                 backend=None) -> LengthSeries:
    """All length diagnostics for s = 0..t at fixed t.

    Forward to O(t), project, then step O(s) and O_rel(s;t) back together
    with inverse steps, so only two coefficient vectors are held.  A
    time-dependent field is run in reverse so that O(t) is exact; the
    ``expectation`` entries are then only physical at s = t.
    """
    n = circuit.num_qubits
    if n > 12:
        raise MemoryError("length diagnostics are limited to N <= 12")
    circuit = reversed_schedule(circuit, t)
    basis = initial_basis(initial)
    prop = PauliPropagator(circuit, None, backend)
    c = observable_vector(obs, n) if not isinstance(obs, np.ndarray) else obs.astype(float)
    k = np.arange(n + 1)
    pc = _popcounts(n)
    fwd_rel_tt, fwd_exp = [], []

    def family_stats(vec):
        fam = family_values(vec, n, basis)
        w = fam * fam
        hist = np.bincount(pc, weights=w, minlength=n + 1)
        return _ratio(np.dot(k, hist), hist.sum(), hist.sum()), fam.sum(), hist

    for u in range(0, t + 1):
        if u > 0:
            prop.unitary_step(c, u, inverse=True)
        lr, ex, _ = family_stats(c)
        fwd_rel_tt.append(lr)
        fwd_exp.append(ex)
    _, _, hist_rel = family_stats(c)
    hist_tot = kernels.ptm_length_histograms(c, c, n)[0]
    r = project(c, n, basis)
    rows = [None] * (t + 1)
    norms = np.zeros(t + 1)
    for s in range(t, -1, -1):
        h = kernels.ptm_length_histograms(c, r, n)
        rows[s] = _lengths(*h, k)
        norms[s] = float(np.dot(r, r))
        if s > 0:
            prop.unitary_step(c, s)
            prop.unitary_step(r, s)
    arr = np.array(rows)
    return LengthSeries(np.arange(t + 1), t, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                        np.array(fwd_rel_tt), norms, hist_tot, hist_rel, np.array(fwd_exp))


# ---------------------------------------------------------------- string transfer equation

def short_string_coefficients(vec: np.ndarray, circuit: TrotterCircuit) -> tuple[float, float]:
    """(c_X, c_ZZ): coefficients of X_j and Z_aZ_b averaged over sites and edge entries."""
    n = circuit.num_qubits
    dim = 1 << n
    mat = vec.reshape(dim, dim)
    cx = np.mean([mat[1 << j, 0] for j in range(n)])
    czz = np.mean([mat[0, (1 << a) | (1 << b)] for a, b in circuit.graph.edges])
    return float(cx), float(czz)


def ste_residual(O_series, circuit: TrotterCircuit, h_schedule=None) -> np.ndarray:
    """Residuals of the string transfer equation along a Heisenberg series.

    With kappa = (#edges)/N (2 on the square lattice) and constant h:
    ``c_X(t) h + kappa c_ZZ(t) - h c_X(0) - kappa c_ZZ(0)`` (for S_x the
    reference value is h/N).  For a schedule h(t) the stepwise form
    ``c_X(t+1)h(t+1) + kappa c_ZZ(t+1) - c_X(t)h(t+1) - kappa c_ZZ(t)`` is
    returned for t = 0..T-1.
    """
    kappa = circuit.graph.num_edges / circuit.num_qubits
    coeffs = [short_string_coefficients(v.coeffs if isinstance(v, PauliVector) else v, circuit)
              for v in O_series]
    cx = np.array([a for a, _ in coeffs])
    cz = np.array([b for _, b in coeffs])
    if h_schedule is None and not circuit.time_dependent:
        h = circuit.field(1)
        return cx * h + kappa * cz - (cx[0] * h + kappa * cz[0])
    hfun = h_schedule if h_schedule is not None else circuit.field
    hs = np.array([hfun(t + 1) for t in range(len(cx) - 1)])
    return cx[1:] * hs + kappa * cz[1:] - cx[:-1] * hs - kappa * cz[:-1]


def heisenberg_series(circuit: TrotterCircuit, obs, T: int, every: int = 1):
    """Yield (s, vector) for s = 0..T, layer s carrying h(s) (vector reused; copy if kept)."""
    n = circuit.num_qubits
    c = observable_vector(obs, n) if not isinstance(obs, np.ndarray) else obs.astype(float)
    prop = PauliPropagator(circuit)
    yield 0, c
    for s in range(1, T + 1):
        prop.unitary_step(c, s, inverse=True)
        if s % every == 0 or s == T:
            yield s, c


def ste_residual_sweep(circuit: TrotterCircuit, obs, T: int) -> np.ndarray:
    """STE residual for every step without storing the series."""
    kappa = circuit.graph.num_edges / circuit.num_qubits
    out, prev = [], None
    for s, c in heisenberg_series(circuit, obs, T):
        cx, cz = short_string_coefficients(c, circuit)
        if circuit.time_dependent:
            if prev is not None:
                h = circuit.field(s)
                out.append(cx * h + kappa * cz - prev[0] * h - kappa * prev[1])
        else:
            h = circuit.field(1)
            if prev is None:
                ref = cx * h + kappa * cz
            out.append(cx * h + kappa * cz - ref)
        prev = (cx, cz)
    return np.array(out)


# ---------------------------------------------------------------- sensitivity r(s;t)

def depolarizing_perturbation(vec: np.ndarray, n: int, sites, kinds: str = "XYZ") -> np.ndarray:
    """delta O = sum_{j in sites} sum_{K in kinds} [K_j, O] K_j (diagonal in the Pauli basis)."""
    dim = 1 << n
    xs = np.arange(dim)[:, None]
    zs = np.arange(dim)[None, :]
    factor = np.zeros((dim, dim))
    for j in sites:
        xj, zj = (xs >> j) & 1, (zs >> j) & 1
        for kind in kinds:
            kx, kz = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}[kind]
            anti = (xj * kz + zj * kx) & 1
            factor = factor - 2.0 * anti
    return vec * factor.reshape(-1)


@dataclass
class Sensitivity:
    r: float
    baseline: float
    true_shift: float


def r_sensitivity(circuit: TrotterCircuit, obs, s: int, t: int, sites=None,
                  kinds: str = "XYZ", initial: str = "plus") -> Sensitivity:
    """r(s;t) = tr[O_rel(s;t) dO(s)] / tr[O_rel(s;t) O(s)] with its unprojected baseline.

    ``true_shift`` is the first-order relative change of <O(t)> when dO is
    added at index s and carried on to t.
    """
    n = circuit.num_qubits
    basis = initial_basis(initial)
    sites = range(n) if sites is None else sites
    circuit = reversed_schedule(circuit, t)
    O_s = heisenberg_evolve(obs, circuit, s).coeffs
    O_t = heisenberg_evolve(O_s, circuit, t, start=s).coeffs
    rel = project_relevant(O_t, circuit, s, t, basis).vector
    dO = depolarizing_perturbation(O_s, n, sites, kinds)
    den = float(np.dot(rel, O_s))
    r = float(np.dot(rel, dO)) / den if abs(den) > MISSING_TOL else np.nan
    baseline = float(np.dot(O_s, dO) / np.dot(O_s, O_s))
    dO_t = heisenberg_evolve(dO, circuit, t, start=s).coeffs
    ex = family_values(O_t, n, basis).sum()
    shift = family_values(dO_t, n, basis).sum() / ex if abs(ex) > MISSING_TOL else np.nan
    return Sensitivity(r, baseline, float(shift))


def predict_rho(L_rel, N: int, t: int, C: float = 8.0 / 3.0) -> float:
    """rho ~ (C / (N t)) sum_{s=1}^t L_rel(s;t); L_rel indexed by s = 0..t or 1..t."""
    L = np.asarray(L_rel, dtype=float)
    if len(L) == t + 1:
        L = L[1:]
    if len(L) != t:
        raise ValueError("series must cover s = 1..t")
    return float(C / (N * t) * np.sum(L))


# ---------------------------------------------------------------- toy models

@dataclass
class ToyDistribution:
    p: np.ndarray
    mean: float
    diluted_mean: float


def toy_model_pk(p1: float, N: int) -> ToyDistribution:
    """Equal weight on every string of length k != 1, total p1 on length 1."""
    if not 0 <= p1 <= 1:
        raise ValueError("p1 must lie in [0, 1]")
    k = np.arange(N + 1)
    # exact integer counts, then one float division to keep tiny weights accurate
    counts = np.array([3 ** j * math.comb(N, j) for j in k], dtype=object)
    total = 4 ** N - 3 * N
    p = np.array([float((1 - p1) * c / total) if j != 1 else p1 for j, c in zip(k, counts)])
    if abs(p.sum() - 1) > 1e-12:
        raise ArithmeticError("toy distribution is not normalized")
    dil = p * 3.0 ** (-k)
    return ToyDistribution(p, float(np.dot(k, p)), float(np.dot(k, dil) / dil.sum()))


def toy_model_interference(p1: float, q1: float, N: int, num_samples: int, rng) -> np.ndarray:
    """Signed relevant length with independent random signs on every string.

    For each length k the sum of c_P c_P^rel over the 3^k C(N,k) strings
    equals sqrt(p_k q_k) / M_k times a sum of M_k random signs, sampled
    exactly as 2 Binomial(M_k, 1/2) - M_k.  Draws with a vanishing
    denominator are returned as NaN.
    """
    p = toy_model_pk(p1, N).p
    q = toy_model_pk(q1, N).p
    k = np.arange(N + 1)
    out = np.empty(num_samples)
    for i in range(num_samples):
        num = den = 0.0
        for j in k:
            if p[j] == 0 or q[j] == 0:
                continue
            m = 3 ** int(j) * math.comb(N, int(j))
            if m < 2 ** 62:
                signs = 2.0 * rng.binomial(m, 0.5) - m
            else:
                signs = rng.normal(0.0, math.sqrt(m))
            term = math.sqrt(p[j] * q[j]) / m * signs
            num += j * term
            den += term
        out[i] = num / den if den != 0 else np.nan
    return out


# ---------------------------------------------------------------- Trotter-error correlators

def _bond_string(K: PauliString, a: int, b: int, n: int) -> tuple[int, int]:
    """Place the two-site pattern of K (sites 0, 1) on bond (a, b)."""
    x = ((K.x_bits & 1) << a) | (((K.x_bits >> 1) & 1) << b)
    z = ((K.z_bits & 1) << a) | (((K.z_bits >> 1) & 1) << b)
    return x, z


def correlator_states(circuit: TrotterCircuit, K: PauliString, t_star: int, pairs,
                      initial: str = "plus"):
    """phi(p, s) = U^{t*-s} K_p U^s |init> for each (bond index p, time s) in pairs."""
    from .model_builder import product_state
    from .sim_engines import apply_step_statevector
    n = circuit.num_qubits
    edges = circuit.graph.ordered_edges()
    need = sorted({s for _, s in pairs})
    psi = np.ascontiguousarray(product_state(n, initial), dtype=complex)
    prefix = {}
    for s in range(0, t_star + 1):
        if s > 0:
            apply_step_statevector(psi, circuit, s)
        if s in need:
            prefix[s] = psi.copy()
    out = {}
    for p, s in pairs:
        phi = prefix[s].copy()
        x, z = _bond_string(K, *edges[p], n)
        kernels.sv_apply_pauli(phi, n, x, z)
        for u in range(s + 1, t_star + 1):
            apply_step_statevector(phi, circuit, u)
        out[(p, s)] = phi
    return out


def _matrix_element(bra, ket, obs_terms, n):
    total = 0.0 + 0.0j
    for (x, z), c in obs_terms:
        tmp = ket.copy()
        kernels.sv_apply_pauli(tmp, n, x, z)
        total += c * np.vdot(bra, tmp)
    return complex(total)


def trotter_noise_correlator(circuit: TrotterCircuit, obs, t_star: int, K: PauliString,
                             p: int, q: int, s: int, t: int, initial: str = "plus") -> complex:
    """<init| K_q(s) O(t*) K_p(t) |init> with A(u) = U^{-u} A U^{u}."""
    n = circuit.num_qubits
    states = correlator_states(circuit, K, t_star, [(q, s), (p, t)], initial)
    op = obs.to_operator(n) if isinstance(obs, ObservableSpec) else obs
    return _matrix_element(states[(q, s)], states[(p, t)], list(op.terms.items()), n)


def correlator_time_grid(circuit: TrotterCircuit, obs, t_star: int, K: PauliString,
                         bond: int = 0, times=None, initial: str = "plus") -> np.ndarray:
    """Matrix over (s, t) of <K(s) O(t*) K(t)> at a fixed bond."""
    times = list(range(t_star + 1)) if times is None else list(times)
    n = circuit.num_qubits
    states = correlator_states(circuit, K, t_star, [(bond, s) for s in times], initial)
    op = obs.to_operator(n) if isinstance(obs, ObservableSpec) else obs
    terms = list(op.terms.items())
    # O applied once per ket
    o_kets = {}
    for s in times:
        acc = np.zeros_like(states[(bond, s)])
        for (x, z), c in terms:
            tmp = states[(bond, s)].copy()
            kernels.sv_apply_pauli(tmp, n, x, z)
            acc += c * tmp
        o_kets[s] = acc
    g = np.zeros((len(times), len(times)), dtype=complex)
    for i, s in enumerate(times):
        for j, t in enumerate(times):
            g[i, j] = np.vdot(states[(bond, s)], o_kets[t])
    return g


def correlator_bond_grid(circuit: TrotterCircuit, obs, t_star: int, K: PauliString, s: int,
                         bonds=None, initial: str = "plus") -> np.ndarray:
    """Matrix over bonds (q, p) of <K_q(s) O(t*) K_p(s)>."""
    bonds = list(range(circuit.graph.num_edges)) if bonds is None else list(bonds)
    n = circuit.num_qubits
    states = correlator_states(circuit, K, t_star, [(b, s) for b in bonds], initial)
    op = obs.to_operator(n) if isinstance(obs, ObservableSpec) else obs
    terms = list(op.terms.items())
    o_kets = {}
    for b in bonds:
        acc = np.zeros_like(states[(b, s)])
        for (x, z), c in terms:
            tmp = states[(b, s)].copy()
            kernels.sv_apply_pauli(tmp, n, x, z)
            acc += c * tmp
        o_kets[b] = acc
    g = np.zeros((len(bonds), len(bonds)), dtype=complex)
    for i, bq in enumerate(bonds):
        for j, bp in enumerate(bonds):
            g[i, j] = np.vdot(states[(bq, s)], o_kets[bp])
    return g


def write_grid_csv(path, grid: np.ndarray, labels, names=("s", "t")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([names[0], names[1], "re", "im"])
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                w.writerow([a, b, repr(float(grid[i, j].real)), repr(float(grid[i, j].imag))])
