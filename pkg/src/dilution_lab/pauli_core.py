"""Bit-packed Pauli algebra and the Pauli-basis representation of operators.

A Hermitian Pauli string on ``n`` qubits is stored as two ``n``-bit words
``(x, z)``; site ``j`` carries I, X, Y, Z for ``(x_j, z_j)`` = (0,0), (1,0),
(1,1), (0,1).  The Hermitian string is ``sigma(x, z) = i^{x.z} X^x Z^z``.

Dense coefficient vectors (``PauliVector``) use the flat index
``(x << n) | z``; the same layout is used by the propagation kernels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import kernels

PRUNE_THRESHOLD = 1e-14
_PHASES = (1.0, 1j, -1.0, -1j)
_LETTER = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_BITS = {v: k for k, v in _LETTER.items()}


def popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliString:
    """``i**phase * sigma(x_bits, z_bits)`` on ``num_qubits`` qubits."""

    x_bits: int
    z_bits: int
    num_qubits: int
    phase: int = 0

    def __post_init__(self):
        full = (1 << self.num_qubits) - 1
        if self.num_qubits < 1 or self.x_bits & ~full or self.z_bits & ~full:
            raise ValueError("bits outside the qubit range")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_label(cls, label: str, phase: int = 0) -> "PauliString":
        """Build from a label such as ``"XIZY"``; character j acts on site j."""
        x = z = 0
        for j, ch in enumerate(label.upper()):
            try:
                bx, bz = _BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r}") from None
            x |= bx << j
            z |= bz << j
        return cls(x, z, len(label), phase)

    @classmethod
    def single(cls, kind: str, site: int, num_qubits: int) -> "PauliString":
        bx, bz = _BITS[kind.upper()]
        return cls(bx << site, bz << site, num_qubits)

    @classmethod
    def identity(cls, num_qubits: int) -> "PauliString":
        return cls(0, 0, num_qubits)

    @property
    def weight(self) -> int:
        return popcount(self.x_bits | self.z_bits)

    @property
    def key(self) -> tuple[int, int]:
        return (self.x_bits, self.z_bits)

    @property
    def coefficient(self) -> complex:
        return _PHASES[self.phase]

    def local(self, site: int) -> str:
        return _LETTER[((self.x_bits >> site) & 1, (self.z_bits >> site) & 1)]

    def label(self) -> str:
        return "".join(self.local(j) for j in range(self.num_qubits))

    def __repr__(self) -> str:
        sign = ("+", "+i", "-", "-i")[self.phase]
        return f"{sign}{self.label()}"

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def to_dense(self) -> np.ndarray:
        return self.coefficient * pauli_matrix(self.x_bits, self.z_bits, self.num_qubits)


def _check_same(a: PauliString, b: PauliString):
    if a.num_qubits != b.num_qubits:
        raise ValueError(f"qubit counts differ: {a.num_qubits} vs {b.num_qubits}")


def product_phase(x1: int, z1: int, x2: int, z2: int) -> int:
    """Power of i in sigma(x1,z1) sigma(x2,z2) = i^e sigma(x1^x2, z1^z2)."""
    x3, z3 = x1 ^ x2, z1 ^ z2
    e = popcount(x1 & z1) + popcount(x2 & z2) - popcount(x3 & z3) + 2 * popcount(z1 & x2)
    return e % 4


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Group product with exact phase tracking."""
    _check_same(a, b)
    e = product_phase(a.x_bits, a.z_bits, b.x_bits, b.z_bits)
    return PauliString(a.x_bits ^ b.x_bits, a.z_bits ^ b.z_bits, a.num_qubits,
                       a.phase + b.phase + e)


def commutes(a: PauliString, b: PauliString) -> bool:
    _check_same(a, b)
    return (popcount(a.x_bits & b.z_bits) + popcount(a.z_bits & b.x_bits)) % 2 == 0


def noise_commutator_weight(p: PauliString, kind: str, sites: Iterable[int]) -> int:
    """Number of listed sites where the single-site Pauli ``kind`` anticommutes with ``p``.

    With this count alpha, sum_j [K_j, P] K_j = -2 alpha P.
    """
    kx, kz = _BITS[kind.upper()]
    alpha = 0
    for j in sites:
        px, pz = (p.x_bits >> j) & 1, (p.z_bits >> j) & 1
        alpha += (px * kz + pz * kx) % 2
    return alpha


def pauli_matrix(x: int, z: int, n: int) -> np.ndarray:
    """Dense matrix of the Hermitian string sigma(x, z); qubit j is bit j of the index."""
    dim = 1 << n
    b = np.arange(dim)
    sign = 1 - 2 * (kernels._pykernels._popcount(b & z) & 1)
    m = np.zeros((dim, dim), dtype=complex)
    m[b ^ x, b] = _PHASES[popcount(x & z) % 4] * sign
    return m


@dataclass
class PauliOperator:
    """Sparse operator ``sum_P c_P P`` over Hermitian Pauli strings.

    Coefficients are real for Hermitian operators; complex coefficients are
    allowed for intermediate results such as commutators.
    """

    num_qubits: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, val in dict(self.terms).items():
            if isinstance(key, PauliString):
                val = val * key.coefficient
                key = key.key
            clean[key] = clean.get(key, 0) + val
        self.terms = _normalize(clean)

    @classmethod
    def from_strings(cls, num_qubits: int, items: Iterable[tuple[PauliString | str, complex]]):
        terms = {}
        for s, c in items:
            if isinstance(s, str):
                s = PauliString.from_label(s)
            v = c * s.coefficient
            terms[s.key] = terms.get(s.key, 0) + v
        return cls(num_qubits, terms)

    def items(self):
        for (x, z), c in sorted(self.terms.items()):
            yield PauliString(x, z, self.num_qubits), c

    def coefficient(self, p: PauliString | str) -> complex:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return self.terms.get(p.key, 0.0) * np.conj(p.coefficient)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "PauliOperator") -> "PauliOperator":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return PauliOperator(self.num_qubits, out)

    def __sub__(self, other: "PauliOperator") -> "PauliOperator":
        return self + other.scale(-1)

    def scale(self, a: complex) -> "PauliOperator":
        return PauliOperator(self.num_qubits, {k: a * v for k, v in self.terms.items()})

    def __matmul__(self, other: "PauliOperator") -> "PauliOperator":
        out: dict = {}
        for (x1, z1), a in self.terms.items():
            for (x2, z2), b in other.terms.items():
                k = (x1 ^ x2, z1 ^ z2)
                out[k] = out.get(k, 0) + a * b * _PHASES[product_phase(x1, z1, x2, z2)]
        return PauliOperator(self.num_qubits, out)

    def commutator(self, other: "PauliOperator") -> "PauliOperator":
        return (self @ other) - (other @ self)

    @property
    def is_hermitian(self) -> bool:
        return all(abs(np.imag(v)) < 1e-12 for v in self.terms.values())

    def frobenius_weight(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.terms.values()))

    def max_weight(self) -> int:
        return max((popcount(x | z) for x, z in self.terms), default=0)

    def to_dense(self) -> np.ndarray:
        dim = 1 << self.num_qubits
        m = np.zeros((dim, dim), dtype=complex)
        for (x, z), c in self.terms.items():
            m += c * pauli_matrix(x, z, self.num_qubits)
        return m


def _normalize(terms: Mapping, threshold: float = PRUNE_THRESHOLD) -> dict:
    out = {}
    real = all(abs(np.imag(v)) <= threshold for v in terms.values())
    for k, v in terms.items():
        if abs(v) < threshold:
            continue
        out[k] = float(np.real(v)) if real else complex(v)
    return out


@dataclass
class DenseOperator:
    """A ``2**n x 2**n`` complex matrix; qubit j is bit j of the basis index."""

    matrix: np.ndarray
    num_qubits: int

    @classmethod
    def from_matrix(cls, m) -> "DenseOperator":
        m = np.asarray(m, dtype=complex)
        dim = m.shape[0]
        if m.ndim != 2 or m.shape[1] != dim or dim & (dim - 1) or dim < 2:
            raise ValueError("matrix dimension must be a power of two")
        return cls(m, dim.bit_length() - 1)


def _fwht_rows(a: np.ndarray) -> None:
    """In-place unnormalized Walsh-Hadamard transform along axis 1."""
    rows, dim = a.shape
    h = 1
    while h < dim:
        v = a.reshape(rows, dim // (2 * h), 2, h)
        lo = v[:, :, 0, :].copy()
        hi = v[:, :, 1, :]
        v[:, :, 0, :] += hi
        v[:, :, 1, :] = lo - hi
        h *= 2


def _phase_table(n: int) -> np.ndarray:
    """i^{popcount(x & z)} on the (x, z) grid."""
    v = np.arange(1 << n, dtype=np.uint64)
    k = kernels._pykernels._popcount(v[:, None] & v[None, :]) & 3
    return np.asarray(_PHASES)[k]


def dense_to_coefficients(m: np.ndarray) -> np.ndarray:
    """Complex Pauli coefficients c[x, z] = 2^-n tr(sigma(x,z) M) in O(4^n n)."""
    op = DenseOperator.from_matrix(m)
    n, dim = op.num_qubits, 1 << op.num_qubits
    b = np.arange(dim)
    g = op.matrix[b[None, :], b[None, :] ^ b[:, None]]  # g[x, b] = M[b, b ^ x]
    _fwht_rows(g)
    return g * _phase_table(n) / dim


def coefficients_to_dense(c: np.ndarray, n: int) -> np.ndarray:
    dim = 1 << n
    g = np.asarray(c, dtype=complex).reshape(dim, dim) * _phase_table(n)
    _fwht_rows(g)
    m = np.zeros((dim, dim), dtype=complex)
    b = np.arange(dim)
    m[b[None, :] ^ b[:, None], b[None, :]] = g  # M[b ^ x, b] = g[x, b]
    return m


def to_pauli_coefficients(m, threshold: float = PRUNE_THRESHOLD) -> PauliOperator:
    """Sparse Pauli decomposition of a dense operator via the fast transform."""
    if isinstance(m, DenseOperator):
        m = m.matrix
    c = dense_to_coefficients(np.asarray(m))
    n = (c.shape[0]).bit_length() - 1
    idx = np.nonzero(np.abs(c) >= threshold)
    return PauliOperator(n, {(int(x), int(z)): c[x, z] for x, z in zip(*idx)})


def from_pauli_coefficients(op: PauliOperator) -> DenseOperator:
    vec = PauliVector.from_operator(op, dtype=complex)
    return DenseOperator(coefficients_to_dense(vec.coeffs, op.num_qubits), op.num_qubits)


class PauliVector:
    """Dense real coefficient vector of a Hermitian operator over all 4^n strings."""

    def __init__(self, coeffs: np.ndarray, num_qubits: int):
        coeffs = np.ascontiguousarray(coeffs)
        if coeffs.shape != (1 << (2 * num_qubits),):
            raise ValueError("coefficient vector has the wrong length")
        self.coeffs = coeffs
        self.num_qubits = num_qubits

    @classmethod
    def zeros(cls, n: int) -> "PauliVector":
        return cls(np.zeros(1 << (2 * n)), n)

    @classmethod
    def from_operator(cls, op: PauliOperator, dtype=float) -> "PauliVector":
        n = op.num_qubits
        c = np.zeros(1 << (2 * n), dtype=dtype)
        for (x, z), v in op.terms.items():
            c[(x << n) | z] = v if dtype is complex else np.real(v)
        return cls(c, n)

    @classmethod
    def from_dense(cls, m) -> "PauliVector":
        c = dense_to_coefficients(m.matrix if isinstance(m, DenseOperator) else np.asarray(m))
        if np.max(np.abs(c.imag)) > 1e-10:
            raise ValueError("operator is not Hermitian")
        n = c.shape[0].bit_length() - 1
        return cls(c.real.reshape(-1).copy(), n)

    def copy(self) -> "PauliVector":
        return PauliVector(self.coeffs.copy(), self.num_qubits)

    def get(self, p: PauliString | str) -> float:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return float(self.coeffs[(p.x_bits << self.num_qubits) | p.z_bits])

    def to_operator(self, threshold: float = PRUNE_THRESHOLD) -> PauliOperator:
        n = self.num_qubits
        idx = np.nonzero(np.abs(self.coeffs) >= threshold)[0]
        mask = (1 << n) - 1
        return PauliOperator(n, {(int(i) >> n, int(i) & mask): float(self.coeffs[i]) for i in idx})

    def to_dense(self) -> np.ndarray:
        return coefficients_to_dense(self.coeffs, self.num_qubits)

    def frobenius_weight(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    def weight_histogram(self) -> np.ndarray:
        hcc, _, _ = kernels.ptm_length_histograms(self.coeffs, self.coeffs, self.num_qubits)
        return hcc

    def family_view(self, basis: str) -> np.ndarray:
        """Coefficients of the strings built only from I and ``basis`` letters.

        Returned array is indexed by the support mask (length 2^n).
        """
        n, dim = self.num_qubits, 1 << self.num_qubits
        mat = self.coeffs.reshape(dim, dim)
        s = np.arange(dim)
        basis = basis.upper()
        if basis == "X":
            return mat[:, 0]
        if basis == "Y":
            return mat[s, s]
        if basis == "Z":
            return mat[0, :]
        raise ValueError(f"unknown basis {basis!r}")

    def family_mask(self, basis: str) -> np.ndarray:
        """Boolean mask over the flat index selecting the ``basis`` string family."""
        dim = 1 << self.num_qubits
        s = np.arange(dim)
        mask = np.zeros((dim, dim), dtype=bool)
        basis = basis.upper()
        if basis == "X":
            mask[:, 0] = True
        elif basis == "Y":
            mask[s, s] = True
        elif basis == "Z":
            mask[0, :] = True
        else:
            raise ValueError(f"unknown basis {basis!r}")
        return mask.reshape(-1)


def weight_histogram(op: PauliOperator | PauliVector) -> np.ndarray:
    """p_k = sum over strings of length k of |c_P|^2, for k = 0..n."""
    if isinstance(op, PauliVector):
        return op.weight_histogram()
    hist = np.zeros(op.num_qubits + 1)
    for (x, z), v in op.terms.items():
        hist[popcount(x | z)] += abs(v) ** 2
    return hist


def write_histogram_csv(path, hist) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "p_k"])
        for k, p in enumerate(hist):
            w.writerow([k, repr(float(p))])
