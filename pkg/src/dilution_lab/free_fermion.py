"""Free-fermion treatment of the periodic transverse-field Ising chain.

Conventions.  Sites are 0..N-1, the step is ``U = exp(-i dt sum ZZ) exp(-i dt h sum X)``
and the initial state |+...+> is the fermion vacuum (X_j = 1 - 2 c_j^dag c_j).
Majoranas are ``eta_{2j} = c_j + c_j^dag`` and ``eta_{2j+1} = i(c_j - c_j^dag)``, so
that ``X_j = i eta_{2j} eta_{2j+1}`` and ``Z_j Z_{j+1} = i eta_{2j+1} eta_{2j+2}``; the
boundary bond closes with ``eta_{2N} = -eta_0`` (even parity sector).

States are described by the real antisymmetric covariance
``Gamma_ab = (i/2) <[eta_a, eta_b]>``, for which ``<X_j> = Gamma_{2j,2j+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, linalg

from . import kernels
from .sim_engines import QuenchResult, config_hash

# ---------------------------------------------------------------- momentum space


def even_momenta(N: int) -> np.ndarray:
    """P_e = {2(n + 1/2) pi / N, n = -N/2 .. N/2 - 1}."""
    if N < 2 or N % 2:
        raise ValueError("N must be even and >= 2")
    n = np.arange(-N // 2, N // 2)
    return 2 * (n + 0.5) * np.pi / N


def continuum_angles(k, h: float):
    """(cos 2theta_k, sin 2theta_k, eps_plus, eps_minus) in the dt -> 0 limit."""
    k = np.asarray(k, dtype=float)
    root = np.sqrt(1 + h * h - 2 * h * np.cos(k))
    return (h - np.cos(k)) / root, np.sin(k) / root, 2 * np.cos(k) + 2 * root, 2 * np.cos(k) - 2 * root


def v_block(k: float, h: float, dt: float) -> np.ndarray:
    """2x2 block of one Trotter step on span{|0>, a_k^dag a_-k^dag |0>}."""
    gen = np.array([[0, -2 * dt * math.sin(k)], [2 * dt * math.sin(k), -4j * dt * math.cos(k)]])
    return linalg.expm(gen) @ np.diag([np.exp(-2j * dt * h), np.exp(2j * dt * h)])


def u_block(k: float, h: float, dt: float) -> np.ndarray:
    """4x4 block on {|0>, a_k^dag a_-k^dag|0>, a_k^dag|0>, a_-k^dag|0>}."""
    u = np.zeros((4, 4), dtype=complex)
    u[:2, :2] = v_block(k, h, dt)
    u[2, 2] = u[3, 3] = np.exp(-2j * dt * math.cos(k))
    return u


@dataclass
class FloquetBlock:
    k: float
    U: np.ndarray
    eps_plus: float
    eps_minus: float
    theta: float
    phi: float

    @property
    def delta_eps(self) -> float:
        return self.eps_plus - self.eps_minus


def _decompose(k: float, h: float, dt: float) -> FloquetBlock:
    V = v_block(k, h, dt)
    w, vecs = np.linalg.eig(V)
    eps = -np.angle(w) / dt
    if abs(w[0] - w[1]) < 1e-12:
        c2, s2, ep, em = continuum_angles(k, h)
        return FloquetBlock(k, u_block(k, h, dt), float(ep), float(em),
                            0.5 * math.atan2(float(s2), float(c2)), 0.0)
    order = np.argsort(-eps)
    v = vecs[:, order[0]]
    v = v * np.exp(-1j * np.angle(v[0])) / np.linalg.norm(v)
    theta = math.atan2(abs(v[1]), v[0].real)
    # v = (cos theta, i sin theta e^{i phi})
    phi = float(np.angle(v[1] / 1j)) if abs(v[1]) > 1e-14 else 0.0
    return FloquetBlock(k, u_block(k, h, dt), float(eps[order[0]]), float(eps[order[1]]), theta, phi)


def floquet_blocks(model: "FreeFermionModel") -> list[FloquetBlock]:
    """Per-momentum (k in P_e, k > 0) Trotter-step blocks with their spectral data."""
    if model.dt <= 0:
        raise ValueError("Floquet blocks need dt > 0")
    return [_decompose(float(k), model.h, model.dt) for k in model.positive_momenta]


@dataclass
class FreeFermionModel:
    N: int
    h: float
    dt: float = 0.1

    def __post_init__(self):
        if self.N % 2 or self.N < 2:
            raise ValueError("N must be even")
        if self.h < 0:
            raise ValueError("h must be >= 0")
        if self.dt < 0:
            raise ValueError("dt must be >= 0")

    @property
    def momenta(self) -> np.ndarray:
        return even_momenta(self.N)

    @property
    def positive_momenta(self) -> np.ndarray:
        k = self.momenta
        return k[k > 0]

    @cached_property
    def spectrum(self):
        """(cos 2theta_k, sin 2theta_k, delta_eps_k) for k in P_e^+; time unit is one step when dt > 0."""
        k = self.positive_momenta
        if self.dt == 0:
            c2, s2, ep, em = continuum_angles(k, self.h)
            return c2, s2, ep - em
        blocks = floquet_blocks(self)
        th = np.array([b.theta for b in blocks])
        return np.cos(2 * th), np.sin(2 * th), np.array([b.delta_eps for b in blocks])

    def to_circuit(self, steps: int = 0):
        from .model_builder import TrotterCircuit, build_chain
        return TrotterCircuit(build_chain(self.N, periodic=True), self.dt, self.h, steps)


# ---------------------------------------------------------------- noiseless magnetization

def analytic_magnetization(model: FreeFermionModel, t) -> np.ndarray:
    """<S_x> after t steps (t may be an array); for dt = 0, t is a continuous time."""
    c2, s2, de = model.spectrum
    t = np.atleast_1d(np.asarray(t, dtype=float))
    scale = model.dt if model.dt > 0 else 1.0
    vals = (2.0 / model.N) * (c2 ** 2 + s2 ** 2 * np.cos(np.outer(t * scale, de))).sum(axis=1)
    return vals


def block_magnetization(model: FreeFermionModel, t: int) -> float:
    """Same quantity from powers of the 4x4 blocks (no spectral formula)."""
    total = 0.0
    for b in floquet_blocks(model):
        v = np.linalg.matrix_power(b.U, t)[:, 0]
        total += abs(v[0]) ** 2 - abs(v[1]) ** 2
    return 2.0 * total / model.N


def magnetization_limit(h: float, dt: float = 0.0) -> float:
    """m(h, dt) = (1/pi) int_0^pi cos^2(2 theta_k) dk."""
    if dt == 0:
        return 0.5 if h < 1 else (1 - 1 / (2 * h * h) if h > 1 else 0.5)

    def f(k):
        return math.cos(2 * _decompose(k, h, dt).theta) ** 2
    val, _ = integrate.quad(f, 0, math.pi, limit=200)
    return val / math.pi


def thermodynamic_magnetization(h: float, times, num_points: int = 20001) -> np.ndarray:
    """Continuum-time <S_x(t)> for N -> infinity by Simpson quadrature over k."""
    k = np.linspace(0, np.pi, num_points)
    c2, s2, ep, em = continuum_angles(k, h)
    out = []
    for t in np.atleast_1d(times):
        out.append(integrate.simpson(c2 ** 2 + s2 ** 2 * np.cos(t * (ep - em)), x=k) / np.pi)
    return np.array(out)


# ---------------------------------------------------------------- decay rates

def phi_depolarizing(j) -> np.ndarray:
    """phi(j) = -(4/3)(|j| + 1), argument already reduced to -N/2 < j <= N/2."""
    return -(4.0 / 3.0) * (np.abs(np.asarray(j)) + 1)


def _reduced_offsets(N: int) -> np.ndarray:
    return np.arange(-N // 2 + 1, N // 2 + 1)


def phi_hat(k, N: int) -> np.ndarray:
    """(1/N) sum_{j=1}^{N} e^{ijk} phi(j) as an exact finite sum."""
    j = np.arange(1, N + 1)
    jr = ((j + N // 2 - 1) % N) - N // 2 + 1
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return (np.exp(1j * np.outer(k, j)) @ phi_depolarizing(jr)).real / N


def analytic_decay_rate(model: FreeFermionModel, noise: str = "X") -> float:
    """lambda with <Sigma_1(t)> ~ -lambda t <Sigma_0(t)> (X noise) at late times.

    For ``noise="depolarizing"`` the Fourier expression
    ``-1/2 sum_j phi(j)(|alpha_j|^2 + |beta_j|^2)`` is evaluated over one period
    of j; it is the late-time slope of <Sigma_1> itself (not divided by m).
    """
    if noise.upper() == "X":
        return 4.0 * (1.0 - magnetization_limit(model.h, model.dt))
    if noise.lower() != "depolarizing":
        raise ValueError(f"unknown noise kind {noise!r}")
    if model.dt != 0:
        raise ValueError("depolarizing decay rate is defined for dt -> 0 only")
    k = model.momenta
    c2, s2, _, _ = continuum_angles(k, model.h)
    j = _reduced_offsets(model.N)
    phase = np.exp(1j * np.outer(j, k))
    alpha = phase @ (c2 ** 2) / model.N
    beta = phase @ (c2 * s2) / model.N
    return float(-0.5 * np.sum(phi_depolarizing(j) * (abs(alpha) ** 2 + abs(beta) ** 2)))


def depolarizing_relative_rate(model: FreeFermionModel) -> float:
    """First-order relative decay rate of <S_x> under depolarizing noise, 2 lambda / m(h).

    The Fourier expression is the slope for an initial vector x_{k,A} = 1/N,
    i.e. for <S_x(0)> = 1/2; with <S_x(0)> = 1 the slope doubles.
    """
    return 2.0 * analytic_decay_rate(model, "depolarizing") / magnetization_limit(model.h, model.dt)


def sigma1_free_fermion(model: FreeFermionModel, t) -> np.ndarray:
    """<Sigma_1(t)> = -4 t <S_x(t)> + 4 sum_{s=1}^t <S_x(s)><S_x(t-s)> under X noise."""
    t = np.atleast_1d(np.asarray(t, dtype=int))
    T = int(t.max()) if len(t) else 0
    sx = analytic_magnetization(model, np.arange(T + 1))
    out = []
    for tt in t:
        s = np.arange(1, tt + 1)
        out.append(-4 * tt * sx[tt] + 4 * np.sum(sx[s] * sx[tt - s]))
    return np.array(out)


# ---------------------------------------------------------------- Majorana covariance engine

def vacuum_covariance(N: int) -> np.ndarray:
    g = np.zeros((2 * N, 2 * N))
    idx = np.arange(N)
    g[2 * idx, 2 * idx + 1] = 1.0
    g[2 * idx + 1, 2 * idx] = -1.0
    return g


def sx_from_covariance(g: np.ndarray) -> np.ndarray:
    """<S_x> for a covariance or a stack of covariances."""
    N = g.shape[-1] // 2
    idx = np.arange(N)
    return g[..., 2 * idx, 2 * idx + 1].mean(axis=-1)


class MajoranaStepper:
    """One Trotter step of the chain as a rotation Q of the Majoranas.

    ``rotate_modes`` maps a mode matrix W to Q W (the covariance being
    W Gamma_0 W^T); ``step`` maps a covariance to Q Gamma Q^T.
    """

    def __init__(self, N: int, h, dt: float):
        self.N = N
        self.dt = dt
        self.h = h

    def field(self, t: int) -> float:
        return self.h(t) if callable(self.h) else self.h

    def rotate_modes(self, w: np.ndarray, t: int = 1) -> None:
        kernels.mj_trotter_step(w, self.N, self.dt * self.field(t), self.dt)

    def step(self, g: np.ndarray, t: int = 1) -> None:
        self.rotate_modes(g, t)
        gt = np.ascontiguousarray(g.T)
        self.rotate_modes(gt, t)
        g[...] = gt.T


def offsite_mask(N: int) -> np.ndarray:
    site = np.arange(2 * N) // 2
    return site[:, None] != site[None, :]


def covariance_series(model: FreeFermionModel, T: int, epsilon: float = 0.0) -> np.ndarray:
    """Exact trajectory-averaged <S_x(t)>, t = 0..T, under per-site X flips with probability epsilon.

    Independent flips on sites i and j multiply Gamma_ab (a on i, b on j != i) by
    (1 - 2 eps)^2 on average, and the mean covariance evolves linearly.
    """
    g = vacuum_covariance(model.N)
    stepper = MajoranaStepper(model.N, model.h, model.dt)
    damp = np.where(offsite_mask(model.N), (1 - 2 * epsilon) ** 2, 1.0)
    out = [sx_from_covariance(g)]
    for t in range(1, T + 1):
        stepper.step(g, t)
        if epsilon:
            g *= damp
        out.append(sx_from_covariance(g))
    return np.array(out)


def _series_engine(model: FreeFermionModel, T: int, order: int, offsite_poly, onsite_poly):
    N = model.N
    stepper = MajoranaStepper(N, model.h, model.dt)
    mask = offsite_mask(N)
    coef = [np.where(mask, offsite_poly[m] if m < len(offsite_poly) else 0.0,
                     onsite_poly[m] if m < len(onsite_poly) else 0.0) for m in range(order + 1)]
    series = [vacuum_covariance(N)] + [np.zeros((2 * N, 2 * N)) for _ in range(order)]
    out = np.zeros((T + 1, order + 1))
    out[0, 0] = sx_from_covariance(series[0])
    for t in range(1, T + 1):
        for g in series:
            stepper.step(g, t)
        new = []
        for n in range(order + 1):
            acc = np.zeros_like(series[0])
            for m in range(n + 1):
                if np.any(coef[m]):
                    acc += coef[m] * series[n - m]
            new.append(acc)
        series = new
        out[t] = [sx_from_covariance(g) for g in series]
    return out


def sigma_series_free_fermion(model: FreeFermionModel, T: int, order: int = 3) -> np.ndarray:
    """Exact <Sigma_n(t)>, shape (T+1, order+1): Taylor coefficients in epsilon of the X-noise series."""
    return _series_engine(model, T, order, [1.0, -4.0, 4.0], [1.0])


def sector_series_free_fermion(model: FreeFermionModel, T: int, order: int = 3) -> np.ndarray:
    """Ordered bare-insertion sums D_n(t) for X insertions on all N sites each step."""
    N = model.N
    off = np.polynomial.polynomial.polymul(np.polynomial.polynomial.polypow([1, -1], 2),
                                           np.polynomial.polynomial.polypow([1, 1], N - 2))
    on = np.polynomial.polynomial.polypow([1, 1], N)
    return _series_engine(model, T, order, list(off[:order + 1]), list(on[:order + 1]))


def sigma_n_asymptotic(n: int, lam: float, t, sigma0) -> np.ndarray:
    """(-lambda t)^n / n! <Sigma_0(t)>."""
    t = np.asarray(t, dtype=float)
    return (-lam * t) ** n / math.factorial(n) * np.asarray(sigma0)


# ---------------------------------------------------------------- Gaussian trajectories

def sx_from_modes(w: np.ndarray) -> float:
    """<S_x> of the pure Gaussian state with covariance W Gamma_0 W^T."""
    e, o = w[0::2], w[1::2]
    return float(np.sum(e[:, 0::2] * o[:, 1::2] - e[:, 1::2] * o[:, 0::2]) / (w.shape[0] // 2))


def gaussian_trajectories(model: FreeFermionModel, eta: float, T: int, batch: int,
                          seed: int = 0, noise: str = "X", record_every: int = 1,
                          bin_counts: bool = False) -> QuenchResult:
    """Stochastic unraveling of per-step X errors; each trajectory stays Gaussian.

    Errors hit each site with probability ``eta * dt`` after every step.  A
    trajectory is a pure Gaussian state held as its mode matrix W; an X_j
    error negates rows 2j and 2j+1 of W.  Returns the trajectory mean of
    <S_x> with its standard error; with ``bin_counts`` the final values are
    also grouped by error count in ``result.by_count`` as n -> (sum, count).
    """
    if noise.upper() != "X":
        raise ValueError("Gaussian trajectories support X noise only")
    if model.dt <= 0:
        raise ValueError("trajectories need a finite step dt")
    p = eta * model.dt
    if not 0 <= p <= 1:
        raise ValueError("eta * dt must be a probability")
    N = model.N
    stepper = MajoranaStepper(N, model.h, model.dt)
    rec = list(range(0, T + 1, record_every))
    if rec[-1] != T:
        rec.append(T)
    vals = np.zeros((batch, len(rec)))
    by_count = {}
    for i in range(batch):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        hits_all = rng.random((T, N)) < p
        w = np.eye(2 * N)
        r = 0
        for t in range(0, T + 1):
            if t > 0:
                stepper.rotate_modes(w, t)
                for j in np.flatnonzero(hits_all[t - 1]):
                    w[2 * j:2 * j + 2] *= -1.0
            if t == rec[r]:
                vals[i, r] = sx_from_modes(w)
                r += 1
        if bin_counts:
            n = int(hits_all.sum())
            s, c = by_count.get(n, (0.0, 0))
            by_count[n] = (s + vals[i, -1], c + 1)
    mean = vals.mean(axis=0)
    err = vals.std(axis=0, ddof=1) / np.sqrt(batch) if batch > 1 else np.zeros(len(rec))
    res = QuenchResult(np.array(rec), {"Sx": mean}, {"Sx": err}, "gaussian",
                       config_hash({"N": N, "h": model.h, "dt": model.dt, "eta": eta,
                                    "T": T, "batch": batch, "seed": seed}))
    res.by_count = by_count
    return res


def decay_rate_mes(noisy, clean, eta: float, times) -> np.ndarray:
    """lambda_mes(t) = -log(noisy / clean) / (eta t) with t in physical time; t = 0 gives NaN."""
    noisy, clean, times = (np.asarray(x, dtype=float) for x in (noisy, clean, times))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(times > 0, -np.log(noisy / clean) / (eta * times), np.nan)


# ---------------------------------------------------------------- depolarizing transfer matrix

@dataclass
class TransferResult:
    times: np.ndarray
    sx: np.ndarray
    decay_rate: float            # relative rate per unit eta
    eigenvalues: np.ndarray


def transfer_matrices(model: FreeFermionModel):
    """(H, Nmat) of the 3N/2-dimensional generator M = H + eta Nmat (continuum time).

    x = (A_k, B_k, C_k) for k in P_e^+.  The rotation block is oriented so that the
    closed-form single-momentum evolution of A, B, C holds.
    """
    k = model.positive_momenta
    c2, s2, ep, em = continuum_angles(k, model.h)
    de = ep - em
    K = len(k)
    H = np.zeros((3 * K, 3 * K))
    for i in range(K):
        blk = np.array([[0, 0, -s2[i]], [0, 0, c2[i]], [s2[i], -c2[i], 0]]) * de[i]
        H[3 * i:3 * i + 3, 3 * i:3 * i + 3] = blk
    pm = phi_hat(np.subtract.outer(k, k).ravel(), model.N).reshape(K, K)
    pp = phi_hat(np.add.outer(k, k).ravel(), model.N).reshape(K, K)
    Nm = np.zeros((3 * K, 3 * K))
    for a, mat in enumerate((pm + pp, pm - pp, pm - pp)):
        Nm[a::3, a::3] = mat
    return H, Nm


def rotation_closed_form(theta: float, de: float, s: float, x0) -> np.ndarray:
    """Noiseless (A, B, C)(s) of one momentum from the closed-form displays."""
    A, B, C = x0
    c2, s2, s4 = math.cos(2 * theta), math.sin(2 * theta), math.sin(4 * theta)
    cs, sn, h2 = math.cos(s * de), math.sin(s * de), math.sin(s * de / 2) ** 2
    return np.array([
        (c2 ** 2 + s2 ** 2 * cs) * A + s4 * h2 * B - s2 * sn * C,
        s4 * h2 * A + (s2 ** 2 + c2 ** 2 * cs) * B + c2 * sn * C,
        s2 * sn * A - c2 * sn * B + cs * C,
    ])


def depolarizing_transfer_evolution(model: FreeFermionModel, eta: float, times) -> TransferResult:
    """<S_x(t)> from dx/dt = (H + eta Nmat) x with x_{k,A}(0) = 2/N.

    The decay rate is the real part of the eigenvalue of -M whose eigenvector
    has the largest overlap with x(0), divided by eta.
    """
    if model.dt != 0:
        raise ValueError("the transfer-matrix model is continuous time (dt = 0)")
    H, Nm = transfer_matrices(model)
    M = H + eta * Nm
    K = M.shape[0] // 3
    x0 = np.zeros(3 * K)
    x0[0::3] = 2.0 / model.N
    times = np.atleast_1d(np.asarray(times, dtype=float))
    w, V = np.linalg.eig(M)
    coeff = np.linalg.solve(V, x0.astype(complex))
    sx = np.array([(V[0::3] @ (coeff * np.exp(w * t))).real.sum() for t in times])
    rate = np.nan
    if eta > 0:
        weight = np.abs(coeff) * np.linalg.norm(V[0::3], axis=0)
        _, _, de = model.spectrum
        near_zero = np.abs(w.imag) < 0.1 * de.min()
        cand = np.where(near_zero, weight, -1.0)
        rate = float(-w[int(np.argmax(cand))].real / eta)
    return TransferResult(times, sx, rate, w)


# ---------------------------------------------------------------- dense Majorana checks (N <= 8)

def jw_majoranas(N: int) -> list[np.ndarray]:
    """Dense eta_0 .. eta_{2N-1} in the computational (Z) basis; qubit j is bit j."""
    if N > 8:
        raise MemoryError("dense Majoranas are limited to N <= 8")
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Y = np.array([[0, -1j], [1j, 0]])
    Z = np.diag([1.0 + 0j, -1.0])
    I = np.eye(2, dtype=complex)

    def kron_sites(ops):
        out = np.array([[1.0 + 0j]])
        for j in reversed(range(N)):     # site 0 is the least significant bit
            out = np.kron(out, ops.get(j, I))
        return out
    # c_j = (prod_{m<j} X_m) (Z_j - i Y_j)/2 gives X_j = 1 - 2 c_j^dag c_j
    etas = []
    for j in range(N):
        string = {m: X for m in range(j)}
        etas.append(kron_sites({**string, j: Z}))
        etas.append(kron_sites({**string, j: Y}))
    return etas


def majorana_quadratic(M: np.ndarray, etas) -> np.ndarray:
    dim = etas[0].shape[0]
    out = np.zeros((dim, dim), dtype=complex)
    for a in range(len(etas)):
        for b in range(len(etas)):
            if M[a, b] != 0:
                out += M[a, b] * (etas[a] @ etas[b])
    return out


def x_noise_majorana_map(M: np.ndarray) -> np.ndarray:
    """Sum_j [X_j, O] X_j on O = sum M_ab eta_a eta_b: -4 off-site, 0 on-site."""
    return np.where(offsite_mask(M.shape[0] // 2), -4.0 * M, 0.0)


def depolarizing_majorana_map(M: np.ndarray) -> np.ndarray:
    """(1/3) sum_{j,P} [P_j, O] P_j with translation-invariant rates phi(i - j)."""
    N = M.shape[0] // 2
    site = np.arange(2 * N) // 2
    d = np.subtract.outer(site, site)
    d = ((d + N // 2 - 1) % N) - N // 2 + 1
    rate = np.where(d == 0, -4.0 / 3.0, phi_depolarizing(d))
    return rate * M


def qubit_noise_map(O: np.ndarray, N: int, kinds: str = "X", weight: float = 1.0) -> np.ndarray:
    """weight * sum_j sum_{K in kinds} [K_j, O] K_j on a dense operator."""
    from .pauli_core import pauli_matrix
    out = np.zeros_like(O, dtype=complex)
    for j in range(N):
        for kind in kinds:
            x, z = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}[kind]
            P = pauli_matrix(x << j, z << j, N)
            out += (P @ O - O @ P) @ P
    return weight * out


def parity_operator(N: int) -> np.ndarray:
    from .pauli_core import pauli_matrix
    return pauli_matrix((1 << N) - 1, 0, N)


def majorana_to_qubit(M: np.ndarray, etas) -> np.ndarray:
    """Qubit operator equal to sum M_ab eta_a eta_b in the even sector, built from short strings.

    Bilinears whose sites are closer across the boundary carry a long
    Jordan-Wigner string; multiplying them by the parity prod X_j (= +1 in the
    even sector) turns them into the short translation-invariant strings.
    """
    N = M.shape[0] // 2
    site = np.arange(2 * N) // 2
    wrap = np.abs(np.subtract.outer(site, site)) > N // 2
    bulk = majorana_quadratic(np.where(wrap, 0.0, M), etas)
    if not wrap.any():
        return bulk
    return bulk + majorana_quadratic(np.where(wrap, M, 0.0), etas) @ parity_operator(N)


def random_translation_invariant(N: int, rng, max_range: int | None = None,
                                 uniform_onsite: bool = True) -> np.ndarray:
    """Random real antisymmetric M with M_{a+2,b+2} = M_ab (antiperiodic wrap) and range <= max_range."""
    max_range = N // 2 if max_range is None else max_range
    M = np.zeros((2 * N, 2 * N))
    for r in range(0, max_range + 1):
        blk = rng.normal(size=(2, 2))
        for i in range(N):
            j = i + r
            sign = -1.0 if j >= N else 1.0
            j %= N
            for a1 in range(2):
                for b1 in range(2):
                    a, b = 2 * i + a1, 2 * j + b1
                    if a == b:
                        continue
                    val = sign * blk[a1, b1]
                    M[a, b] += val
                    M[b, a] -= val
    return M * 0.5


def vacuum_expectation(O: np.ndarray, N: int) -> complex:
    """<+...+| O |+...+>."""
    plus = np.full(1 << N, 2.0 ** (-N / 2))
    return complex(plus @ O @ plus)
