"""Error-count sectors D_n, the eps-expansion Sigma_n, and LIN / EXP mitigation.

With M = N_loc * T noise locations, each applying ``(1 - c eps) id + eps I``
where ``I = sum_u w_u K_u . K_u``, the noisy value expands as

    <O>_noisy = sum_n eps^n (1 - c eps)^(M - n) D_n = sum_n eps^n Sigma_n,

with D_n the ordered sum over n distinct insertion locations.  Hence

    Sigma_1 = D_1 - c M D_0,
    Sigma_2 = D_2 - c (M - 1) D_1 + c^2 C(M, 2) D_0.

The "noisy" first-order sector replaces one channel of the noisy circuit by
its generator ``I - c``; it equals d<O>_noisy/d eps at the running eps.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .model_builder import NoiseChannel, ObservableSpec, TrotterCircuit, product_state
from .propagator import PauliPropagator, PauliReadout, Tracks, product_state_vector
from .sim_engines import StateReadout, apply_step_statevector
from . import kernels


@dataclass(frozen=True)
class ErrorInsertion:
    step: int
    location: tuple
    kraus_index: int
    weight: float


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0

    def __float__(self):
        return float(self.value)


@dataclass
class SigmaReport:
    D0: float
    D1: float
    Sigma0: float
    Sigma1: float
    epsilon: float
    N_loc: int
    T: int
    c: float
    rho: float | None
    lin: float
    exp: float | None
    D2: float | None = None
    Sigma2: float | None = None
    D0_stderr: float = 0.0
    D1_stderr: float = 0.0
    noisy_value: float | None = None
    Sigma1_noisy: float | None = None
    D1_noisy: float | None = None

    @property
    def ratio(self) -> float | None:
        return None if self.Sigma0 == 0 else self.Sigma1 / self.Sigma0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratio"] = self.ratio
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


# ---------------------------------------------------------------- sector algebra

def sigma_from_sectors(D: Sequence[float], c: float, M: int) -> list[float]:
    """Sigma_n = sum_{m<=n} C(M-m, n-m) (-c)^(n-m) D_m for as many orders as given."""
    return [sum(math.comb(M - m, n - m) * (-c) ** (n - m) * D[m] for m in range(n + 1))
            for n in range(len(D))]


def sectors_from_sigma(S: Sequence[float], c: float, M: int) -> list[float]:
    """Inverse of :func:`sigma_from_sectors`: D_n = sum_{m<=n} C(M-m, n-m) c^(n-m) Sigma_m."""
    return [sum(math.comb(M - m, n - m) * c ** (n - m) * S[m] for m in range(n + 1))
            for n in range(len(S))]


def resum_sectors(D: Sequence[float], c: float, M: int, eps: float) -> float:
    """sum_n eps^n (1 - c eps)^(M - n) D_n over the supplied sectors."""
    return float(sum(eps ** n * (1 - c * eps) ** (M - n) * d for n, d in enumerate(D)))


# ---------------------------------------------------------------- exact series

@dataclass
class SigmaSeries:
    """Per-step sector data, index t = 0..T."""

    steps: np.ndarray
    N_loc: int
    c: float
    epsilon: float
    Sigma: list | None = None       # Sigma[n][t] at eps = 0
    D: list | None = None           # D[n][t] at eps = 0
    noisy: np.ndarray | None = None
    Sigma1_noisy: np.ndarray | None = None

    @property
    def D1_noisy(self) -> np.ndarray | None:
        if self.Sigma1_noisy is None:
            return None
        return self.Sigma1_noisy + self.c * self.N_loc * self.steps * self.noisy


def sigma_series(circuit: TrotterCircuit, noise: NoiseChannel, observable: ObservableSpec,
                 T: int | None = None, order: int = 1, initial: str = "plus",
                 tracks: Sequence[str] = ("taylor",), backend=None) -> SigmaSeries:
    """Exact sector series by Pauli-basis propagation.

    ``tracks`` selects any of ``"taylor"`` (Sigma_n at eps = 0),
    ``"sectors"`` (D_n by direct insertion at eps = 0) and ``"noisy"``
    (noisy value and noisy Sigma_1 at the channel's eps).
    """
    T = circuit.num_steps if T is None else T
    n = circuit.num_qubits
    prop = PauliPropagator(circuit, noise, backend)
    read = PauliReadout(observable, n)
    tr = Tracks()
    start = product_state_vector(n, initial)
    if "noisy" in tracks:
        tr.rho, tr.drho = start.copy(), np.zeros_like(start)
    if "taylor" in tracks:
        tr.taylor = [start.copy()] + [np.zeros_like(start) for _ in range(order)]
    if "sectors" in tracks:
        tr.sectors = [start.copy()] + [np.zeros_like(start) for _ in range(order)]
    rows = {"taylor": [], "sectors": [], "noisy": [], "dnoisy": []}

    def record():
        rows["taylor"].append([read(v) for v in tr.taylor])
        rows["sectors"].append([read(v) for v in tr.sectors])
        if tr.rho is not None:
            rows["noisy"].append(read(tr.rho))
            rows["dnoisy"].append(read(tr.drho))

    record()
    for t in range(1, T + 1):
        prop.step(tr, t)
        record()
    out = SigmaSeries(np.arange(T + 1), prop.locations_per_step, noise.c, noise.epsilon)
    if tr.taylor:
        arr = np.array(rows["taylor"])
        out.Sigma = [arr[:, k] for k in range(order + 1)]
    if tr.sectors:
        arr = np.array(rows["sectors"])
        out.D = [arr[:, k] for k in range(order + 1)]
    if tr.rho is not None:
        out.noisy = np.array(rows["noisy"])
        out.Sigma1_noisy = np.array(rows["dnoisy"])
    return out


# ---------------------------------------------------------------- insertion enumeration

def _flat_program(circuit: TrotterCircuit, noise: NoiseChannel, T: int):
    """Noiseless gate list with noise-location markers ('loc', step, location)."""
    prop = PauliPropagator.__new__(PauliPropagator)
    prop.circuit, prop.noise, prop.n = circuit, noise, circuit.num_qubits
    prop._edges = circuit.graph.edge_array()
    ops = []
    for t in range(1, T + 1):
        ops.append(("x", t))
        if noise.cadence == "step":
            ops += [("zz", int(a), int(b)) for a, b in prop._edges]
            ops += [("loc", t, loc) for loc in prop.step_locations()]
        else:
            for a, b in prop._edges:
                ops.append(("zz", int(a), int(b)))
                locs = [(int(a), int(b))] if noise.arity == 2 else [(int(a),), (int(b),)]
                ops += [("loc", t, loc) for loc in locs]
    return ops


def _run_ops(psi, circuit, ops):
    n = circuit.num_qubits
    for op in ops:
        if op[0] == "x":
            kernels.sv_x_layer(psi, n, circuit.x_angles(op[1]))
        elif op[0] == "zz":
            kernels.sv_zz_gate(psi, n, op[1], op[2], circuit.dt)


def _kraus_bits(label, loc):
    x = z = 0
    for ch, s in zip(label, loc):
        bx, bz = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}[ch]
        x |= bx << s
        z |= bz << s
    return x, z


def _insertion_value(circuit, noise, ops, markers, states, read, picks):
    """<O> with Kraus insertions ``picks`` = [(marker index, kraus index), ...] (sorted)."""
    n = circuit.num_qubits
    first = picks[0][0]
    psi = states[first].copy()
    pos = markers[first]
    for j, (mi, u) in enumerate(picks):
        if j > 0:
            _run_ops(psi, circuit, ops[pos:markers[mi]])
            pos = markers[mi]
        x, z = _kraus_bits(noise.kraus[u][1], ops[pos][2])
        if x or z:
            kernels.sv_apply_pauli(psi, n, x, z)
    _run_ops(psi, circuit, ops[pos:])
    return read(psi)


def _prefix_states(circuit, ops, markers, initial):
    psi = np.ascontiguousarray(product_state(circuit.num_qubits, initial), dtype=complex)
    states, pos = [], 0
    for m in markers:
        _run_ops(psi, circuit, ops[pos:m])
        pos = m
        states.append(psi.copy())
    return states


def enumerate_sectors(circuit: TrotterCircuit, noise: NoiseChannel, observable: ObservableSpec,
                      T: int, order: int = 1, initial: str = "plus",
                      budget: int = 200_000) -> list[float]:
    """D_0..D_order by explicit statevector insertions (noiseless circuit)."""
    ops = _flat_program(circuit, noise, T)
    markers = [i for i, op in enumerate(ops) if op[0] == "loc"]
    M, nk = len(markers), len(noise.kraus)
    cost = sum(math.comb(M, k) * nk ** k for k in range(1, order + 1))
    if cost > budget:
        raise RuntimeError(f"{cost} insertion circuits exceed the budget of {budget}")
    read = StateReadout(observable, circuit.num_qubits)
    psi = np.ascontiguousarray(product_state(circuit.num_qubits, initial), dtype=complex)
    _run_ops(psi, circuit, ops)
    D = [read(psi)]
    states = _prefix_states(circuit, ops, markers, initial)
    from itertools import combinations, product
    for k in range(1, order + 1):
        total = 0.0
        for locs in combinations(range(M), k):
            for us in product(range(nk), repeat=k):
                w = math.prod(noise.kraus[u][0] for u in us)
                total += w * _insertion_value(circuit, noise, ops, markers, states, read,
                                              list(zip(locs, us)))
        D.append(total)
    return D


def enumerate_noisy_expectation(circuit: TrotterCircuit, noise: NoiseChannel,
                                observable: ObservableSpec, T: int, initial: str = "plus",
                                budget: int = 200_000) -> float:
    """Exact noisy value by summing every branch of every location (tiny instances)."""
    ops = _flat_program(circuit, noise, T)
    markers = [i for i, op in enumerate(ops) if op[0] == "loc"]
    M, nk = len(markers), len(noise.kraus)
    if (nk + 1) ** M > budget:
        raise RuntimeError("branch enumeration exceeds the budget")
    read = StateReadout(observable, circuit.num_qubits)
    states = _prefix_states(circuit, ops, markers, initial)
    psi = np.ascontiguousarray(product_state(circuit.num_qubits, initial), dtype=complex)
    _run_ops(psi, circuit, ops)
    base = read(psi)
    eps = noise.epsilon
    total = 0.0
    from itertools import product
    for branch in product(range(nk + 1), repeat=M):
        w = 1.0
        picks = []
        for mi, b in enumerate(branch):
            if b == 0:
                w *= noise.identity_weight
            else:
                w *= eps * noise.kraus[b - 1][0]
                picks.append((mi, b - 1))
        if w == 0.0:
            continue
        total += w * (_insertion_value(circuit, noise, ops, markers, states, read, picks)
                      if picks else base)
    return total


# ---------------------------------------------------------------- measurement API

def measure_D1(circuit: TrotterCircuit, noise: NoiseChannel, T: int,
               observable: ObservableSpec, engine: str = "pauli", noisy: bool = False,
               initial: str = "plus", rng=None, num_draws: int = 10_000) -> Estimate:
    """First-order insertion sector D_1.

    engine ``"pauli"``: exact propagation (``noisy=True`` inserts into the
    noisy circuit); ``"statevector"``: explicit enumeration of every
    insertion; ``"randomized"``: uniform draws of (s, location) with the
    binary rejection rule, reweighted by N_loc * T.
    """
    if engine == "pauli":
        if noisy:
            ser = sigma_series(circuit, noise, observable, T, 1, initial, ("noisy",))
            return Estimate(float(ser.D1_noisy[-1]))
        ser = sigma_series(circuit, noise, observable, T, 1, initial, ("sectors",))
        return Estimate(float(ser.D[1][-1]))
    if noisy:
        raise ValueError("noisy insertions are only available with the pauli engine")
    if engine == "statevector":
        return Estimate(enumerate_sectors(circuit, noise, observable, T, 1, initial)[1])
    if engine == "randomized":
        return randomized_D1(circuit, noise, observable, T, rng or np.random.default_rng(0),
                             num_draws, initial)
    raise ValueError(f"unknown engine {engine!r}")


def measure_D2(circuit: TrotterCircuit, noise: NoiseChannel, T: int,
               observable: ObservableSpec, engine: str = "pauli", initial: str = "plus",
               allow_quadratic: bool = False) -> Estimate:
    """Second-order sector D_2 (ordered double insertions).

    Gated behind ``allow_quadratic`` because explicit enumeration costs
    O((N_loc T)^2) circuits.
    """
    if not allow_quadratic:
        raise RuntimeError("D2 requires allow_quadratic=True")
    if engine == "pauli":
        ser = sigma_series(circuit, noise, observable, T, 2, initial, ("sectors",))
        return Estimate(float(ser.D[2][-1]))
    if engine == "statevector":
        return Estimate(enumerate_sectors(circuit, noise, observable, T, 2, initial)[2])
    raise ValueError(f"unknown engine {engine!r}")


def randomized_insertion_schedule(T: int, locations: Sequence, rng, num_draws: int):
    """Draw (s, location) uniformly with the binary rejection rule.

    s is read from ceil(log2 T) random bits as ``1 + binary value``; draws
    with s > T are discarded (yielded as ``None``).
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    bits = max(0, math.ceil(math.log2(T)))
    for _ in range(num_draws):
        s = 1 + int(sum(int(b) << i for i, b in enumerate(rng.integers(0, 2, bits))))
        if s > T:
            yield None
            continue
        loc = locations[int(rng.integers(len(locations)))] if len(locations) > 1 else locations[0]
        yield s, loc


def rejection_probability(T: int) -> float:
    return 1.0 - T / 2 ** math.ceil(math.log2(T)) if T > 1 else 0.0


def randomized_D1(circuit: TrotterCircuit, noise: NoiseChannel, observable: ObservableSpec,
                  T: int, rng, num_draws: int, initial: str = "plus") -> Estimate:
    """Unbiased D_1 estimate from randomized insertion locations (exact expectation per draw)."""
    ops = _flat_program(circuit, noise, T)
    markers = [i for i, op in enumerate(ops) if op[0] == "loc"]
    index = {(ops[m][1], ops[m][2]): k for k, m in enumerate(markers)}
    nloc = len(markers) // T
    locations = [ops[m][2] for m in markers[:nloc]]
    read = StateReadout(observable, circuit.num_qubits)
    states = _prefix_states(circuit, ops, markers, initial)
    cache = {}
    samples = []
    for draw in randomized_insertion_schedule(T, locations, rng, num_draws):
        if draw is None:
            continue
        mi = index[draw]
        if mi not in cache:
            cache[mi] = sum(w * _insertion_value(circuit, noise, ops, markers, states, read,
                                                 [(mi, u)])
                            for u, (w, _) in enumerate(noise.kraus))
        samples.append(cache[mi])
    samples = np.array(samples) * (nloc * T)
    if len(samples) < 2:
        raise RuntimeError("too few accepted draws")
    return Estimate(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(len(samples))))


# ---------------------------------------------------------------- estimators

def mitigate_LIN(D0_noisy: float, Sigma1_noisy: float, epsilon: float) -> float:
    """<O>_LIN = <O>_noisy - eps <Sigma_1>_noisy."""
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    return float(D0_noisy - epsilon * Sigma1_noisy)


def mitigate_EXP(D0_noisy: float, Sigma1_noisy: float, epsilon: float, scale: float = 1.0,
                 tol: float = 1e-6) -> float | None:
    """<O>_EXP = <O>_noisy exp(-eps <Sigma_1>_noisy / <O>_noisy); None when <O>_noisy ~ 0."""
    if abs(D0_noisy) < tol * scale:
        return None
    return float(D0_noisy * math.exp(-epsilon * Sigma1_noisy / D0_noisy))


def variance_and_shots(sigma0: float, sigma1: float, epsilon: float, N_gate: int,
                       method: str = "LIN", S0: float | None = None, S1: float | None = None,
                       D0: float | None = None, D1: float | None = None,
                       Sigma1: float | None = None) -> tuple[float | None, float]:
    """Variance of the mitigated value and the optimal shot ratio beta = S0/S1.

    The variance is returned when S0 and S1 are given (else None).  EXP
    needs the noisy D0, D1 and Sigma1.
    """
    if sigma0 <= 0 or sigma1 <= 0:
        raise ValueError("sigma0 and sigma1 must be positive")
    ne = N_gate * epsilon
    if ne <= 0:
        raise ValueError("N_gate * epsilon must be positive")
    method = method.upper()
    if method == "LIN":
        a = 1 + ne
        growth = 1.0
    elif method == "EXP":
        if D0 is None or D1 is None or Sigma1 is None or D0 == 0:
            raise ValueError("EXP needs nonzero D0 and the values of D1 and Sigma1")
        a = 1 + epsilon * D1 / D0
        growth = math.exp(-2 * epsilon * Sigma1 / D0)
    else:
        raise ValueError(f"unknown method {method!r}")
    beta = (sigma0 / sigma1) * abs(a) / ne
    var = None
    if S0 is not None and S1 is not None:
        if S0 <= 0 or S1 <= 0:
            raise ValueError("shot counts must be positive")
        var = (sigma0 ** 2 / S0 * a ** 2 + sigma1 ** 2 / S1 * ne ** 2) * growth
    return var, beta


def split_shots(total: float, beta: float) -> tuple[float, float]:
    """(S0, S1) with S0 / S1 = beta and S0 + S1 = total."""
    s1 = total / (1 + beta)
    return total - s1, s1


# ---------------------------------------------------------------- report

def sigma_report(circuit: TrotterCircuit, noise: NoiseChannel, observable: ObservableSpec,
                 T: int | None = None, order: int = 1, initial: str = "plus",
                 backend=None) -> SigmaReport:
    """Noiseless sectors plus noisy-circuit LIN / EXP at the final step."""
    T = circuit.num_steps if T is None else T
    if order >= 2 and circuit.num_qubits > 10:
        raise RuntimeError("second-order sectors are limited to N <= 10 in reports")
    base = sigma_series(circuit, noise.with_epsilon(0.0), observable, T, order, initial,
                        ("sectors",), backend)
    D = [float(d[-1]) for d in base.D]
    M = base.N_loc * T
    S = sigma_from_sectors(D, noise.c, M)
    noisy = sigma_series(circuit, noise, observable, T, 1, initial, ("noisy",), backend)
    d0n, s1n = float(noisy.noisy[-1]), float(noisy.Sigma1_noisy[-1])
    rho = None if S[0] == 0 or M == 0 else -S[1] / (S[0] * M)
    return SigmaReport(
        D0=D[0], D1=D[1], Sigma0=S[0], Sigma1=S[1], epsilon=noise.epsilon, N_loc=base.N_loc,
        T=T, c=noise.c, rho=rho, lin=mitigate_LIN(d0n, s1n, noise.epsilon),
        exp=mitigate_EXP(d0n, s1n, noise.epsilon), D2=D[2] if order >= 2 else None,
        Sigma2=S[2] if order >= 2 else None, noisy_value=d0n, Sigma1_noisy=s1n,
        D1_noisy=float(noisy.D1_noisy[-1]))
