"""Lattices, Trotter circuits, observables and Pauli noise channels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .pauli_core import PauliOperator, PauliString, commutes

# Two-qubit Pauli error probabilities after a ZZ gate at angle pi/2 (trapped-ion
# calibration table).  Character 0 of each label acts on the first qubit of the gate.
H1_1_TABLE = {
    "IX": 0.000124, "IY": 0.000124, "IZ": 0.000327,
    "XI": 0.000114, "XX": 4.7e-6, "XY": 4.7e-6, "XZ": 0.000114,
    "YI": 0.000114, "YX": 4.7e-6, "YY": 4.7e-6, "YZ": 0.000114,
    "ZI": 0.000221, "ZX": 0.000124, "ZY": 0.000124, "ZZ": 0.000122,
}
H1_1_NEGLECTED = ("XX", "XY", "YX", "YY")


@dataclass(frozen=True)
class LatticeGraph:
    num_sites: int
    edges: tuple
    edge_colors: tuple | None = None
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on site {a}")
            if not (0 <= a < self.num_sites and 0 <= b < self.num_sites):
                raise ValueError(f"edge ({a}, {b}) outside the lattice")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def ordered_edges(self) -> list:
        """Edges in gate order: color groups in sequence, else list order."""
        if self.edge_colors is None:
            return list(self.edges)
        return [self.edges[i] for group in self.edge_colors for i in group]

    def edge_array(self) -> np.ndarray:
        return np.asarray(self.ordered_edges(), dtype=np.int32).reshape(-1, 2)


def build_square_lattice(rows: int, cols: int, periodic: bool = True) -> LatticeGraph:
    """Square lattice with site index r*cols + c.

    Edges come in three gate groups: horizontal bonds starting at (r, c)
    with r + c even, then those with r + c odd, then vertical bonds.  For a
    4 x 5 periodic lattice this is the ordering (0,1), (2,3), (4,0), (6,7), ...
    then (1,2), (3,4), (5,6), ... then (0,5), (1,6), ...
    """
    lo = 2 if periodic else 1
    if rows < lo or cols < lo:
        raise ValueError(f"lattice {rows}x{cols} below minimum size {lo}x{lo}")
    site = lambda r, c: r * cols + c  # noqa: E731
    groups: list[list] = [[], [], []]
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols or periodic:
                groups[(r + c) % 2].append((site(r, c), site(r, (c + 1) % cols)))
    for r in range(rows):
        for c in range(cols):
            if r + 1 < rows or periodic:
                groups[2].append((site(r, c), site((r + 1) % rows, c)))
    edges = tuple(e for g in groups for e in g)
    colors, start = [], 0
    for g in groups:
        colors.append(tuple(range(start, start + len(g))))
        start += len(g)
    return LatticeGraph(rows * cols, edges, tuple(colors), rows, cols)


def build_chain(n: int, periodic: bool = True) -> LatticeGraph:
    if n < (3 if periodic else 2):
        raise ValueError("chain too short")
    edges = tuple((j, (j + 1) % n) for j in range(n if periodic else n - 1))
    return LatticeGraph(n, edges, None, 1, n)


def build_wheel_spokes(base: LatticeGraph, hub: int) -> LatticeGraph:
    """Add hub-j couplings for every site j not already adjacent to the hub."""
    if not 0 <= hub < base.num_sites:
        raise ValueError(f"hub {hub} is not a site")
    linked = {b if a == hub else a for a, b in base.edges if hub in (a, b)}
    spokes = tuple((hub, j) for j in range(base.num_sites) if j != hub and j not in linked)
    edges = tuple(base.edges) + spokes
    colors = None
    if base.edge_colors is not None:
        n0 = len(base.edges)
        colors = tuple(base.edge_colors) + (tuple(range(n0, n0 + len(spokes))),)
    return LatticeGraph(base.num_sites, edges, colors, base.rows, base.cols)


def cosine_schedule(amplitude: float, period: float) -> Callable[[int], float]:
    """h(t) = amplitude * cos(4 pi t / period), t the 1-based step number."""
    def h(t: int) -> float:
        return amplitude * math.cos(4.0 * math.pi * t / period)
    return h


@dataclass(frozen=True)
class TrotterCircuit:
    """Ising Trotter steps U(t) = prod_e exp(-i dt Z_a Z_b) prod_j exp(-i dt h(t) X_j).

    The X layer acts first on the state.  ``h`` is either a constant or a
    callable of the 1-based step number.
    """

    graph: LatticeGraph
    dt: float
    h: float | Callable[[int], float] = 1.0
    num_steps: int = 0

    @property
    def num_qubits(self) -> int:
        return self.graph.num_sites

    @property
    def time_dependent(self) -> bool:
        return callable(self.h)

    def field(self, t: int) -> float:
        return float(self.h(t)) if callable(self.h) else float(self.h)

    def x_angles(self, t: int) -> np.ndarray:
        return np.full(self.num_qubits, self.dt * self.field(t))

    def zz_angles(self) -> np.ndarray:
        return np.full(self.graph.num_edges, self.dt)

    def with_steps(self, steps: int) -> "TrotterCircuit":
        return TrotterCircuit(self.graph, self.dt, self.h, steps)

    def step_unitary(self, t: int) -> np.ndarray:
        """Dense unitary of step t (small N only)."""
        n = self.num_qubits
        dim = 1 << n
        b = np.arange(dim)
        spins = 1 - 2 * ((b[:, None] >> np.arange(n)[None, :]) & 1)
        energy = sum(spins[:, a] * spins[:, c] for a, c in self.graph.edges)
        uzz = np.exp(-1j * self.dt * energy)
        th = self.dt * self.field(t)
        rx = np.array([[math.cos(th), -1j * math.sin(th)], [-1j * math.sin(th), math.cos(th)]])
        ux = np.ones((1, 1))
        for _ in range(n):
            ux = np.kron(rx, ux)
        return uzz[:, None] * ux

    def hamiltonian_terms(self, t: int = 1) -> tuple[PauliOperator, PauliOperator]:
        """(H_X, H_ZZ) as Pauli operators; doubled edges add up."""
        n = self.num_qubits
        hx = PauliOperator.from_strings(n, [(PauliString.single("X", j, n), self.field(t))
                                            for j in range(n)])
        hzz = PauliOperator.from_strings(n, [(PauliString(0, (1 << a) | (1 << b), n), 1.0)
                                             for a, b in self.graph.edges])
        return hx, hzz


def floquet_hamiltonian_expansion(circuit: TrotterCircuit, order: int = 2) -> PauliOperator:
    """dt-expansion of H_F with exp(-i dt H_F) = exp(-i dt H_ZZ) exp(-i dt H_X)."""
    if order > 2 or order < 0:
        raise ValueError("only orders 0, 1, 2 are supported")
    if circuit.time_dependent:
        raise ValueError("expansion needs a constant field")
    hx, hzz = circuit.hamiltonian_terms()
    dt = circuit.dt
    out = hx + hzz
    if order >= 1:
        c1 = hzz.commutator(hx)
        out = out + c1.scale(-0.5j * dt)
        if order == 2:
            out = out + (hx.commutator(c1) - hzz.commutator(c1)).scale(dt * dt / 12.0)
    return out


# ---------------------------------------------------------------- observables

@dataclass(frozen=True)
class ObservableSpec:
    """Measured observable.

    kind: ``"sx"`` (symmetric weight-k average, basis letter from ``basis``),
    ``"pauli"`` (a single string given by ``label``), ``"parity"``
    (product of the basis letter on all sites) or ``"custom"``.
    """

    kind: str = "sx"
    k: int = 1
    basis: str = "X"
    label: str | None = None
    operator: PauliOperator | None = None

    def __post_init__(self):
        if self.kind not in ("sx", "pauli", "parity", "custom"):
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.basis.upper() not in ("X", "Y", "Z"):
            raise ValueError(f"unknown basis {self.basis!r}")
        object.__setattr__(self, "basis", self.basis.upper())

    def weight_k(self, n: int) -> int:
        return n if self.kind == "parity" else self.k

    def name(self) -> str:
        if self.kind == "sx":
            return f"S{self.basis.lower()}^({self.k})"
        if self.kind == "parity":
            return f"prod{self.basis}"
        if self.kind == "pauli":
            return self.label
        return "custom"

    def to_operator(self, n: int) -> PauliOperator:
        if self.kind == "custom":
            return self.operator
        if self.kind == "pauli":
            return PauliOperator.from_strings(n, [(self.label, 1.0)])
        k = n if self.kind == "parity" else self.k
        if not 0 <= k <= n:
            raise ValueError(f"k={k} outside 0..{n}")
        bx, bz = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}[self.basis]
        norm = 1.0 / math.comb(n, k)
        terms = {}
        for s in _subsets(n, k):
            terms[(s * bx, s * bz)] = norm
        return PauliOperator(n, terms)


def _subsets(n: int, k: int):
    from itertools import combinations
    for comb in combinations(range(n), k):
        yield sum(1 << j for j in comb)


def sx_operator(n: int, k: int = 1, basis: str = "X") -> PauliOperator:
    return ObservableSpec("sx", k, basis).to_operator(n)


INITIAL_STATES = {"plus": "X", "zero": "Z", "y": "Y"}


def initial_basis(initial: str) -> str:
    try:
        return INITIAL_STATES[initial]
    except KeyError:
        raise ValueError(f"unknown initial state {initial!r}") from None


def product_state(n: int, initial: str = "plus") -> np.ndarray:
    """Statevector of |+>^n, |0>^n or the Y=+1 product state."""
    single = {"plus": np.array([1, 1]) / math.sqrt(2),
              "zero": np.array([1, 0]),
              "y": np.array([1, 1j]) / math.sqrt(2)}
    if initial not in single:
        raise ValueError(f"unknown initial state {initial!r}")
    psi = np.ones(1, dtype=complex)
    for _ in range(n):
        psi = np.kron(single[initial], psi)
    return psi


# ---------------------------------------------------------------- noise

@dataclass(frozen=True)
class NoiseChannel:
    """Pauli channel rho -> (1 - c eps) rho + eps sum_u w_u K_u rho K_u.

    ``kraus`` holds ``(w_u, label)`` with labels of length ``arity``; the
    identity weight is ``1 - c*eps`` with ``c = sum_u w_u``.  The cadence is
    ``"step"`` (after each Trotter step on every site) or ``"gate"`` (after
    each two-qubit gate on its qubits).
    """

    name: str
    epsilon: float
    kraus: tuple
    arity: int = 1
    cadence: str = "step"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if any(w < 0 for w, _ in self.kraus):
            raise ValueError("Kraus weights must be non-negative")
        if any(len(lbl) != self.arity for _, lbl in self.kraus):
            raise ValueError("Kraus label length must equal the arity")
        if self.cadence not in ("step", "gate"):
            raise ValueError(f"unknown cadence {self.cadence!r}")
        if self.c * self.epsilon > 1 + 1e-12:
            raise ValueError("identity weight would be negative")

    @property
    def c(self) -> float:
        return float(sum(w for w, _ in self.kraus))

    @property
    def identity_weight(self) -> float:
        return 1.0 - self.c * self.epsilon

    def probabilities(self) -> list[tuple[float, str]]:
        return [(self.epsilon * w, lbl) for w, lbl in self.kraus]

    def with_epsilon(self, eps: float) -> "NoiseChannel":
        return NoiseChannel(self.name, eps, self.kraus, self.arity, self.cadence)

    def _anticommuting_weight(self, digits: Sequence[int]) -> float:
        """sum of w_u over Kraus terms anticommuting with the local Pauli given by digits."""
        local = PauliString.from_label("".join("IXZY"[d] for d in digits))
        return sum(w for w, lbl in self.kraus if not commutes(PauliString.from_label(lbl), local))

    def _digit_tables(self):
        shape = (4,) * self.arity
        anti = np.zeros(shape)
        for idx in np.ndindex(*shape):
            anti[idx] = self._anticommuting_weight(idx)
        return anti.reshape(-1)

    def damping_table(self) -> np.ndarray:
        """Per-local-Pauli multiplier of the channel; digit order I, X, Z, Y."""
        return 1.0 - 2.0 * self.epsilon * self._digit_tables()

    def insertion_table(self) -> np.ndarray:
        """Per-local-Pauli eigenvalue of sum_u w_u (K_u . K_u - id)."""
        return -2.0 * self._digit_tables()

    def dense_kraus(self) -> list[tuple[float, np.ndarray]]:
        """(probability, matrix) pairs including the identity branch."""
        from .pauli_core import PauliString as PS
        dim = 1 << self.arity
        out = [(self.identity_weight, np.eye(dim))]
        out += [(p, PS.from_label(lbl).to_dense()) for p, lbl in self.probabilities()]
        return out


def build_noise_preset(name: str, epsilon: float | None = None, theta: float | None = None,
                       cadence: str | None = None) -> NoiseChannel:
    """Noise presets: single_pauli_X, depolarizing_1q, h1_1_two_qubit.

    For ``h1_1_two_qubit`` the tabulated probabilities are rescaled by
    ``0.418*theta + 0.34`` (theta is the two-qubit gate angle) and the
    weak XX, XY, YX, YY entries are dropped; ``epsilon`` is then the total
    error probability.
    """
    if name == "single_pauli_X":
        return NoiseChannel(name, 0.0 if epsilon is None else epsilon, ((1.0, "X"),), 1,
                            cadence or "step")
    if name == "depolarizing_1q":
        return NoiseChannel(name, 0.0 if epsilon is None else epsilon,
                            ((0.25, "X"), (0.25, "Y"), (0.25, "Z")), 1, cadence or "step")
    if name == "h1_1_two_qubit":
        if theta is None:
            theta = math.pi / 2
        if not 0 < theta <= math.pi / 2 + 1e-12:
            raise ValueError("theta must lie in (0, pi/2]")
        scale = 0.418 * theta + 0.34
        probs = {k: v * scale for k, v in H1_1_TABLE.items() if k not in H1_1_NEGLECTED}
        total = sum(probs.values())
        if epsilon is not None:
            # user override: keep the table shape, set the total probability
            total_eps = epsilon
        else:
            total_eps = total
        kraus = tuple((p / total, lbl) for lbl, p in sorted(probs.items()))
        return NoiseChannel(name, total_eps, kraus, 2, cadence or "gate")
    raise ValueError(f"unknown noise preset {name!r}")


def h1_1_scale(theta: float) -> float:
    return 0.418 * theta + 0.34


def apply_channel_dense(rho: np.ndarray, channel: NoiseChannel, sites: Sequence[int],
                        n: int) -> np.ndarray:
    """Apply the channel to a dense density matrix on the given sites (reference path)."""
    from .pauli_core import pauli_matrix
    out = channel.identity_weight * rho
    for p, lbl in channel.probabilities():
        x = z = 0
        for ch, s in zip(lbl, sites):
            bx, bz = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}[ch]
            x |= bx << s
            z |= bz << s
        k = pauli_matrix(x, z, n)
        out = out + p * (k @ rho @ k)
    return out


@dataclass
class ExperimentModel:
    """Bundle of circuit, noise, observable and initial state."""

    circuit: TrotterCircuit
    noise: NoiseChannel | None
    observable: ObservableSpec = field(default_factory=ObservableSpec)
    initial: str = "plus"
