"""Statevector, density-matrix and Pauli-error trajectory engines.

All engines share the step convention of :class:`TrotterCircuit` (X layer
first, then the ZZ gates in colour order) and report expectation values in
a :class:`QuenchResult` indexed by step ``t = 0..T``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .model_builder import (NoiseChannel, ObservableSpec, TrotterCircuit, apply_channel_dense,
                            product_state)
from .pauli_core import _fwht_rows, coefficients_to_dense, pauli_matrix
from .propagator import PauliPropagator, PauliReadout, Tracks, product_state_vector

MAX_STATEVECTOR_QUBITS = 26
MAX_DENSE_QUBITS = 10
MAX_PAULI_QUBITS = 12

_BASIS_ROT = {
    "X": np.array([[1, 1], [1, -1]]) / math.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]]) / math.sqrt(2),
}


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class QuenchResult:
    """Per-step expectation values, t = 0..T, keyed by observable name."""

    steps: np.ndarray
    values: dict
    stderr: dict = field(default_factory=dict)
    engine: str = ""
    config_hash: str = ""

    def series(self, name: str) -> np.ndarray:
        return self.values[name]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={self.config_hash}\n")
            w = csv.writer(fh)
            w.writerow(["step", "observable", "value", "stderr", "engine"])
            for name, vals in self.values.items():
                err = self.stderr.get(name)
                for i, t in enumerate(self.steps):
                    e = "" if err is None else repr(float(err[i]))
                    w.writerow([int(t), name, repr(float(vals[i])), e, self.engine])

    @classmethod
    def from_csv(cls, path) -> "QuenchResult":
        with open(path) as fh:
            head = fh.readline().strip()
            rows = list(csv.DictReader(fh))
        chash = head.split("=", 1)[1] if head.startswith("# config_hash=") else ""
        values, errs, steps = {}, {}, {}
        for r in rows:
            values.setdefault(r["observable"], []).append(float(r["value"]))
            if r["stderr"]:
                errs.setdefault(r["observable"], []).append(float(r["stderr"]))
            steps.setdefault(r["observable"], []).append(int(r["step"]))
        first = next(iter(steps.values()))
        engine = rows[0]["engine"] if rows else ""
        return cls(np.array(first), {k: np.array(v) for k, v in values.items()},
                   {k: np.array(v) for k, v in errs.items()}, engine, chash)


# ---------------------------------------------------------------- statevector

def _check_initial(initial: str):
    if initial not in ("plus", "zero", "y"):
        raise ValueError(f"unknown initial state {initial!r}")


_ZZ_PHASES: dict = {}


def zz_layer_phases(circuit: TrotterCircuit) -> np.ndarray:
    """Diagonal of the whole ZZ layer (the gates commute), cached per circuit."""
    key = (circuit.graph.edges, circuit.graph.num_sites, circuit.dt)
    if key not in _ZZ_PHASES:
        n = circuit.num_qubits
        b = np.arange(1 << n, dtype=np.int64)
        energy = np.zeros(1 << n)
        for a, c in circuit.graph.edges:
            energy += 1 - 2 * (((b >> a) ^ (b >> c)) & 1)
        if len(_ZZ_PHASES) > 4:
            _ZZ_PHASES.clear()
        _ZZ_PHASES[key] = np.exp(-1j * circuit.dt * energy)
    return _ZZ_PHASES[key]


def apply_step_statevector(psi: np.ndarray, circuit: TrotterCircuit, t: int,
                           on_gate=None, kmod=kernels) -> None:
    """One Trotter step in place; ``on_gate(psi, a, b)`` runs after each ZZ gate."""
    n = circuit.num_qubits
    kmod.sv_x_layer(psi, n, circuit.x_angles(t))
    if on_gate is None and n >= 10:
        psi *= zz_layer_phases(circuit)
        return
    for a, b in circuit.graph.ordered_edges():
        kmod.sv_zz_gate(psi, n, int(a), int(b), circuit.dt)
        if on_gate is not None:
            on_gate(psi, int(a), int(b))


def apply_inverse_step_statevector(psi: np.ndarray, circuit: TrotterCircuit, t: int) -> None:
    n = circuit.num_qubits
    for a, b in reversed(circuit.graph.ordered_edges()):
        kernels.sv_zz_gate(psi, n, int(a), int(b), -circuit.dt)
    kernels.sv_x_layer(psi, n, -circuit.x_angles(t))


def iter_statevector(circuit: TrotterCircuit, initial: str = "plus",
                     steps: int | None = None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (t, psi) for t = 0..steps; psi is reused between yields."""
    _check_initial(initial)
    n = circuit.num_qubits
    if n > MAX_STATEVECTOR_QUBITS:
        raise MemoryError(f"statevector engine is limited to N <= {MAX_STATEVECTOR_QUBITS}")
    steps = circuit.num_steps if steps is None else steps
    psi = np.ascontiguousarray(product_state(n, initial), dtype=complex)
    yield 0, psi
    for t in range(1, steps + 1):
        apply_step_statevector(psi, circuit, t)
        yield t, psi


def evolve_statevector(circuit: TrotterCircuit, initial: str = "plus",
                       steps: int | None = None) -> list[np.ndarray]:
    """States after each step (copies), t = 0..steps."""
    return [psi.copy() for _, psi in iter_statevector(circuit, initial, steps)]


def basis_correlators(psi: np.ndarray, n: int, basis: str = "X") -> np.ndarray:
    """<B_S> = <prod_{j in S} B_j> for every support mask S, via two Walsh transforms."""
    basis = basis.upper()
    v = np.asarray(psi, dtype=complex)
    if basis in _BASIS_ROT:
        rot = _BASIS_ROT[basis]
        v = v.copy()
        for a in range(n):
            w = v.reshape(-1, 2, 1 << a)
            p, q = w[:, 0, :].copy(), w[:, 1, :].copy()
            w[:, 0, :] = rot[0, 0] * p + rot[0, 1] * q
            w[:, 1, :] = rot[1, 0] * p + rot[1, 1] * q
    prob = (np.abs(v) ** 2).reshape(1, -1)
    _fwht_rows(prob)
    return prob[0]


class StateReadout:
    """Evaluates an ObservableSpec on statevectors."""

    def __init__(self, spec: ObservableSpec, n: int):
        self.spec, self.n = spec, n
        self._terms = None
        if spec.kind in ("pauli", "custom"):
            self._terms = list(spec.to_operator(n).terms.items())

    def __call__(self, psi: np.ndarray) -> float:
        spec, n = self.spec, self.n
        if self._terms is not None:
            total = 0.0
            for (x, z), c in self._terms:
                tmp = psi.copy()
                kernels.sv_apply_pauli(tmp, n, x, z)
                total += np.real(c * np.vdot(psi, tmp))
            return float(total)
        corr = basis_correlators(psi, n, spec.basis)
        if spec.kind == "parity":
            return float(corr[(1 << n) - 1])
        from .propagator import _popcounts
        return float(np.sum(corr[_popcounts(n) == spec.k]) / math.comb(n, spec.k))


def _names(observables):
    names = [o.name() for o in observables]
    if len(set(names)) != len(names):
        raise ValueError("observable names must be unique")
    return names


def quench_statevector(circuit: TrotterCircuit, observables: Sequence[ObservableSpec],
                       initial: str = "plus", steps: int | None = None) -> QuenchResult:
    n = circuit.num_qubits
    reads = [StateReadout(o, n) for o in observables]
    rows = [[r(psi) for r in reads] for _, psi in iter_statevector(circuit, initial, steps)]
    arr = np.array(rows).reshape(len(rows), len(reads))
    return QuenchResult(np.arange(len(rows)), {nm: arr[:, i] for i, nm in
                                               enumerate(_names(observables))},
                        engine="statevector")


# ---------------------------------------------------------------- density matrix

@dataclass
class DensityMatrix:
    matrix: np.ndarray
    num_qubits: int

    @classmethod
    def from_pauli(cls, vec: np.ndarray, n: int) -> "DensityMatrix":
        return cls(coefficients_to_dense(vec / (1 << n), n), n)

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self.matrix @ op)))


def _dense_step(rho: np.ndarray, circuit: TrotterCircuit, noise: NoiseChannel | None,
                t: int) -> np.ndarray:
    """Reference dense step with gate-resolved noise placement."""
    n = circuit.num_qubits
    dim = 1 << n
    b = np.arange(dim)
    th = circuit.dt * circuit.field(t)
    rx = np.array([[math.cos(th), -1j * math.sin(th)], [-1j * math.sin(th), math.cos(th)]])
    ux = np.ones((1, 1))
    for _ in range(n):
        ux = np.kron(rx, ux)
    rho = ux @ rho @ ux.conj().T
    gate_noise = noise is not None and noise.cadence == "gate"
    for a, c in circuit.graph.ordered_edges():
        s = 1 - 2 * (((b >> a) ^ (b >> c)) & 1)
        ph = np.exp(-1j * circuit.dt * s)
        rho = ph[:, None] * rho * ph.conj()[None, :]
        if gate_noise:
            locs = [(a, c)] if noise.arity == 2 else [(a,), (c,)]
            for loc in locs:
                rho = apply_channel_dense(rho, noise, loc, n)
    if noise is not None and not gate_noise:
        if noise.arity == 1:
            locs = [(j,) for j in range(n)]
        else:
            locs = [tuple(e) for e in circuit.graph.ordered_edges()]
        for loc in locs:
            rho = apply_channel_dense(rho, noise, loc, n)
    return rho


def evolve_density_matrix(circuit: TrotterCircuit, noise: NoiseChannel | None,
                          steps: int | None = None, initial: str = "plus",
                          method: str = "dense") -> list[DensityMatrix]:
    """Density matrices after each step, t = 0..steps.

    ``method="dense"`` applies gates and Kraus maps to 2^N x 2^N matrices
    (N <= 10); ``method="pauli"`` propagates the Pauli expectation vector and
    converts each step back to a dense matrix.
    """
    _check_initial(initial)
    n = circuit.num_qubits
    steps = circuit.num_steps if steps is None else steps
    if method == "dense":
        if n > MAX_DENSE_QUBITS:
            raise MemoryError(f"dense density engine is limited to N <= {MAX_DENSE_QUBITS}")
        psi = product_state(n, initial)
        rho = np.outer(psi, psi.conj())
        out = [DensityMatrix(rho, n)]
        for t in range(1, steps + 1):
            rho = _dense_step(rho, circuit, noise, t)
            out.append(DensityMatrix(rho, n))
        return out
    if method == "pauli":
        out = []
        for _, vec in iter_pauli_states(circuit, noise, initial, steps):
            out.append(DensityMatrix.from_pauli(vec, n))
        return out
    raise ValueError(f"unknown method {method!r}")


def iter_pauli_states(circuit: TrotterCircuit, noise: NoiseChannel | None,
                      initial: str = "plus", steps: int | None = None, backend=None):
    """Yield (t, a) with a the Pauli expectation vector of the noisy state."""
    n = circuit.num_qubits
    if n > MAX_PAULI_QUBITS:
        raise MemoryError(f"exact density engine is limited to N <= {MAX_PAULI_QUBITS}")
    steps = circuit.num_steps if steps is None else steps
    prop = PauliPropagator(circuit, noise, backend)
    tracks = Tracks(rho=product_state_vector(n, initial))
    yield 0, tracks.rho
    for t in range(1, steps + 1):
        prop.step(tracks, t)
        yield t, tracks.rho


def quench_density(circuit: TrotterCircuit, noise: NoiseChannel | None,
                   observables: Sequence[ObservableSpec], initial: str = "plus",
                   steps: int | None = None, backend=None) -> QuenchResult:
    """Exact noisy expectation values through Pauli-basis propagation."""
    n = circuit.num_qubits
    reads = [PauliReadout(o, n) for o in observables]
    rows = [[r(v) for r in reads] for _, v in iter_pauli_states(circuit, noise, initial, steps,
                                                               backend)]
    arr = np.array(rows).reshape(len(rows), len(reads))
    return QuenchResult(np.arange(len(rows)), {nm: arr[:, i] for i, nm in
                                               enumerate(_names(observables))},
                        engine="density")


# ---------------------------------------------------------------- trajectories

@dataclass
class TrajectoryBatch:
    num_trajectories: int
    seed: int
    errors: list  # per trajectory: list of (step, location, label)


def _branch_tables(noise: NoiseChannel):
    probs = [p for p, _ in noise.probabilities()]
    masks = []
    for _, lbl in noise.probabilities():
        masks.append([{"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}[ch] for ch in lbl])
    return np.cumsum(probs), masks


def _insert(psi, n, loc, bits):
    x = z = 0
    for (bx, bz), s in zip(bits, loc):
        x |= bx << s
        z |= bz << s
    if x or z:
        kernels.sv_apply_pauli(psi, n, x, z)


def _run_trajectory(i, circuit, noise, steps, initial, reads, seed, cum, masks):
    n = circuit.num_qubits
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
    psi = np.ascontiguousarray(product_state(n, initial), dtype=complex)
    record = []
    vals = np.empty((steps + 1, len(reads)))
    vals[0] = [r(psi) for r in reads]

    def sample(loc, t):
        u = int(np.searchsorted(cum, rng.random(), side="right"))
        if u < len(masks):
            _insert(psi, n, loc, masks[u])
            record.append((t, loc, noise.kraus[u][1]))

    for t in range(1, steps + 1):
        if noise is not None and noise.cadence == "gate":
            def on_gate(_psi, a, b, t=t):
                for loc in ([(a, b)] if noise.arity == 2 else [(a,), (b,)]):
                    sample(loc, t)
            apply_step_statevector(psi, circuit, t, on_gate)
        else:
            apply_step_statevector(psi, circuit, t)
            if noise is not None:
                locs = ([(j,) for j in range(n)] if noise.arity == 1
                        else [tuple(e) for e in circuit.graph.ordered_edges()])
                for loc in locs:
                    sample(loc, t)
        vals[t] = [r(psi) for r in reads]
    return vals, record


def evolve_trajectories(circuit: TrotterCircuit, noise: NoiseChannel | None,
                        observables: Sequence[ObservableSpec], num_trajectories: int,
                        seed: int = 0, initial: str = "plus", steps: int | None = None,
                        threads: int = 1, return_batch: bool = False):
    """Monte-Carlo unravelling of a Pauli channel into random Pauli insertions.

    Trajectory i uses the RNG stream ``SeedSequence(seed, spawn_key=(i,))``,
    so results do not depend on ``threads``.  The reported standard error
    is the unbiased sample deviation over sqrt(num_trajectories).
    """
    n = circuit.num_qubits
    if n > MAX_STATEVECTOR_QUBITS:
        raise MemoryError(f"trajectory engine is limited to N <= {MAX_STATEVECTOR_QUBITS}; "
                          "use free_fermion.gaussian_trajectories for large chains")
    _check_initial(initial)
    if num_trajectories < 1:
        raise ValueError("need at least one trajectory")
    steps = circuit.num_steps if steps is None else steps
    reads = [StateReadout(o, n) for o in observables]
    cum, masks = _branch_tables(noise) if noise is not None else (np.zeros(0), [])

    def work(i):
        return _run_trajectory(i, circuit, noise, steps, initial, reads, seed, cum, masks)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(num_trajectories)))
    else:
        results = [work(i) for i in range(num_trajectories)]
    stack = np.stack([r[0] for r in results])
    mean = stack.mean(axis=0)
    if num_trajectories > 1:
        err = stack.std(axis=0, ddof=1) / math.sqrt(num_trajectories)
    else:
        err = np.zeros_like(mean)
    names = _names(observables)
    res = QuenchResult(np.arange(steps + 1), {nm: mean[:, i] for i, nm in enumerate(names)},
                       {nm: err[:, i] for i, nm in enumerate(names)}, engine="trajectories")
    if return_batch:
        return res, TrajectoryBatch(num_trajectories, seed, [r[1] for r in results])
    return res


# ---------------------------------------------------------------- shots and metrics

def sample_measurements(psi: np.ndarray, n: int, shots: int, rng, basis: str = "X") -> np.ndarray:
    """Projective single-qubit measurements in ``basis``: (shots, n) array of +-1."""
    basis = basis.upper()
    v = np.asarray(psi, dtype=complex).copy()
    if basis in _BASIS_ROT:
        rot = _BASIS_ROT[basis]
        for a in range(n):
            w = v.reshape(-1, 2, 1 << a)
            p, q = w[:, 0, :].copy(), w[:, 1, :].copy()
            w[:, 0, :] = rot[0, 0] * p + rot[0, 1] * q
            w[:, 1, :] = rot[1, 0] * p + rot[1, 1] * q
    prob = np.abs(v) ** 2
    idx = rng.choice(len(prob), size=shots, p=prob / prob.sum())
    bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
    return 1 - 2 * bits


def elementary_symmetric(outcomes: np.ndarray) -> np.ndarray:
    """Per-shot e_0..e_N of the outcomes via the product of (1 + x_j z)."""
    x = np.atleast_2d(np.asarray(outcomes, dtype=float))
    shots, n = x.shape
    e = np.zeros((shots, n + 1))
    e[:, 0] = 1.0
    for j in range(n):
        e[:, 1:j + 2] = e[:, 1:j + 2] + x[:, j:j + 1] * e[:, 0:j + 1]
    return e


def estimate_sxk_from_samples(outcomes: np.ndarray, k: int) -> float:
    """Shot estimate of S^(k): mean over shots of e_k(x) / C(N, k)."""
    x = np.atleast_2d(outcomes)
    n = x.shape[1]
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    return float(np.mean(elementary_symmetric(x)[:, k]) / math.comb(n, k))


def estimate_all_sxk(outcomes: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(outcomes)
    n = x.shape[1]
    return np.mean(elementary_symmetric(x), axis=0) / np.array(
        [math.comb(n, k) for k in range(n + 1)])


def _as_array(r):
    return np.asarray(r, dtype=float)


def decay_rate(noisy, noiseless, steps=None, tol: float = 1e-9) -> np.ma.MaskedArray:
    """lambda(t) = -(1/t) ln(noisy/noiseless); entries without a valid log are masked.

    ``noisy`` and ``noiseless`` are aligned series (or QuenchResult series)
    indexed by step; t = 0 is always masked.
    """
    a, b = _as_array(noisy), _as_array(noiseless)
    if a.shape != b.shape:
        raise ValueError("series are not aligned")
    t = np.arange(len(a)) if steps is None else _as_array(steps)
    out = np.zeros(len(a))
    mask = np.ones(len(a), dtype=bool)
    for i in range(len(a)):
        if t[i] <= 0 or abs(b[i]) < tol:
            continue
        ratio = a[i] / b[i]
        if ratio <= 0:
            continue
        out[i] = -math.log(ratio) / t[i]
        mask[i] = False
    return np.ma.MaskedArray(out, mask)


def normalized_difference(noisy, noiseless, epsilon: float, window: int = 20,
                          steps=None) -> np.ma.MaskedArray:
    """Windowed normalized difference Delta O(t), windows clipped at the ends."""
    if epsilon == 0:
        raise ValueError("epsilon must be nonzero")
    if window < 0 or window % 2:
        raise ValueError("window must be a non-negative even integer")
    a, b = _as_array(noisy), _as_array(noiseless)
    if a.shape != b.shape:
        raise ValueError("series are not aligned")
    t = np.arange(len(a)) if steps is None else _as_array(steps)
    diff = np.abs(a - b)
    ref = np.abs(b)
    half = window // 2
    out = np.zeros(len(a))
    mask = np.ones(len(a), dtype=bool)
    for i in range(len(a)):
        lo, hi = max(0, i - half), min(len(a), i + half + 1)
        den = ref[lo:hi].sum()
        if t[i] <= 0 or den == 0:
            continue
        out[i] = diff[lo:hi].sum() / (epsilon * t[i] * den)
        mask[i] = False
    return np.ma.MaskedArray(out, mask)


def pauli_expectation_dense(rho: np.ndarray, label: str) -> float:
    from .pauli_core import PauliString
    p = PauliString.from_label(label)
    return float(np.real(np.trace(rho @ pauli_matrix(p.x_bits, p.z_bits, p.num_qubits))))
