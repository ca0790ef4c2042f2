"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances are pinned to the acceptance table.  Long runs share module
fixtures so the standard 3x4 density propagation is done once.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

import dilution_lab
from dilution_lab import free_fermion as ff
from dilution_lab import string_analysis as sa
from dilution_lab.config import build_model, validate_config, validate_manifest
from dilution_lab.experiments import correspondence_metrics, run, variant_model
from dilution_lab.model_builder import (ObservableSpec, TrotterCircuit, apply_channel_dense,
                                        build_noise_preset, build_square_lattice)
from dilution_lab.pauli_core import (PauliString, commutes,
                                     dense_to_coefficients, from_pauli_coefficients, multiply,
                                     to_pauli_coefficients)
from dilution_lab.sigma_mitigation import mitigate_EXP, mitigate_LIN, sigma_series
from dilution_lab.sim_engines import normalized_difference, quench_density, quench_statevector

MANIFESTS = Path(dilution_lab.__file__).parent / "manifests"
SIZES = [(2, 3), (2, 4), (2, 5), (3, 4)]
T_OBS, WINDOW = 100, 20
STEPS = T_OBS + WINDOW // 2


@pytest.fixture
def report(capsys):
    def emit(num, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {num:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail
    return emit


def manifest(name):
    return validate_manifest(json.loads((MANIFESTS / f"{name}.json").read_text()))


def delta_at(circ, noise, obs, initial, eps):
    name = obs.name()
    clean = quench_statevector(circ, [obs], initial).values[name]
    noisy = quench_density(circ, noise, [obs], initial).values[name]
    return float(normalized_difference(noisy, clean, eps, WINDOW)[T_OBS])


@pytest.fixture(scope="module")
def standard_cfg():
    return validate_config({})


@pytest.fixture(scope="module")
def size_scan(standard_cfg):
    """Delta O(t=100) of S_x and of the global parity for N = 6..12."""
    eps = standard_cfg["noise"]["epsilon"]
    out = {}
    for r, c in SIZES:
        circ, noise, obs, initial = variant_model(standard_cfg, "standard", r, c, STEPS)
        parity = ObservableSpec("parity")
        clean = quench_statevector(circ, [obs, parity], initial)
        noisy = quench_density(circ, noise, [obs, parity], initial)
        out[r * c] = {key: float(normalized_difference(
            noisy.values[o.name()], clean.values[o.name()], eps, WINDOW)[T_OBS])
            for key, o in (("sx", obs), ("parity", parity))}
    return out


@pytest.fixture(scope="module")
def length_scan():
    out = {}
    for r, c in SIZES:
        circ = TrotterCircuit(build_square_lattice(r, c), 0.1, 1.0, T_OBS)
        out[r * c] = sa.length_sweep(circ, ObservableSpec(), T_OBS)
    return out


# ---------------------------------------------------------------- 1

def test_acc01_statevector_matches_floquet_blocks(report):
    start = time.perf_counter()
    model = ff.FreeFermionModel(8, 1.5, 0.01)
    sv = quench_statevector(model.to_circuit(100), [ObservableSpec()]).values["Sx^(1)"]
    ref = ff.analytic_magnetization(model, np.arange(101))
    err = float(np.abs(sv - ref).max())
    elapsed = time.perf_counter() - start
    report(1, "statevector vs Floquet-block S_x (N=8 chain)", err <= 1e-8 and elapsed < 10,
           f"max error {err:.2e} (tol 1e-8), runtime {elapsed:.1f}s (< 10s)")


# ---------------------------------------------------------------- 2, 3

def test_acc02_free_fermion_decay_rates(report, tmp_path):
    res = run(manifest("fig_ff_decay_rates"), str(tmp_path))["results"]["results"]
    ratios = {e["h"]: e["lambda_mes"] / e["lambda_analytic"] for e in res.values()}
    ok = len(ratios) == 4 and all(abs(r - 1) <= 0.10 for r in ratios.values())
    report(2, "Gaussian-trajectory lambda_mes vs analytic (N=100, eta=0.1)", ok,
           ", ".join(f"h={h:g}: ratio {r:.3f}" for h, r in sorted(ratios.items()))
           + " (within 10%)")


def test_acc03_free_fermion_size_independence(report, tmp_path):
    res = run(manifest("fig_ff_sizes_eta0.1"), str(tmp_path))["results"]["results"]
    lam = {e["N"]: e["lambda_mes"] for e in res.values()}
    spread = max(lam.values()) / min(lam.values()) - 1
    report(3, "lambda_mes at N=20, 50, 100 (h=1.5)", sorted(lam) == [20, 50, 100]
           and spread <= 0.10,
           ", ".join(f"N={n}: {v:.4f}" for n, v in sorted(lam.items()))
           + f", max pairwise spread {spread:.3%} (<= 10%)")


# ---------------------------------------------------------------- 4

def test_acc04_sigma1_is_the_noise_derivative(report):
    start = time.perf_counter()
    man = manifest("fig_compare_sigma")
    model = build_model(man["config"])
    circ, noise, obs = model.circuit, model.noise, model.observable
    T = man["config"]["steps"]
    S1 = sigma_series(circ, noise, obs, T, 1).Sigma[1]
    h = 1e-5
    f = [quench_density(circ, noise.with_epsilon(k * h), [obs]).values[obs.name()]
         for k in (1, 2)]
    f0 = quench_statevector(circ, [obs]).values[obs.name()]
    one_sided = (f[0] - f0) / h
    # second-order stencil on eps >= 0 (eps < 0 is not a channel)
    three_point = (-3 * f0 + 4 * f[0] - f[1]) / (2 * h)
    sel = np.abs(S1) >= 0.1 * np.abs(S1).max()
    e1 = float(np.max(np.abs(S1 - one_sided)[sel] / np.abs(S1[sel])))
    e2 = float(np.max(np.abs(S1 - three_point)[sel] / np.abs(S1[sel])))
    elapsed = time.perf_counter() - start
    report(4, f"Sigma_1 vs finite differences (3x4, {T} steps)",
           e1 <= 1e-2 and e2 <= 1e-3 and elapsed < 300,
           f"one-sided rel {e1:.2e} (<= 1e-2), second-order rel {e2:.2e} (<= 1e-3), "
           f"runtime {elapsed:.0f}s (< 300s)")


# ---------------------------------------------------------------- 5

def test_acc05_lin_bias_is_second_order(report, standard_cfg):
    model = build_model(standard_cfg)
    circ, obs = model.circuit, model.observable
    exact = quench_statevector(circ, [obs], steps=T_OBS).values[obs.name()][T_OBS]
    eps_list = [1e-3, 2e-3, 4e-3]
    errs = []
    for eps in eps_list:
        ser = sigma_series(circ, model.noise.with_epsilon(eps), obs, T_OBS, 1,
                           tracks=("noisy",))
        errs.append(abs(mitigate_LIN(ser.noisy[T_OBS], ser.Sigma1_noisy[T_OBS], eps) - exact))
    slope = float(np.polyfit(np.log(eps_list), np.log(errs), 1)[0])
    report(5, "log-log slope of |LIN - exact| vs eps (3x4, t=100)", 1.7 <= slope <= 2.3,
           f"slope {slope:.3f} in [1.7, 2.3], errors "
           + ", ".join(f"{e:.2e}" for e in errs))


# ---------------------------------------------------------------- 6

def test_acc06_exp_beats_lin_under_factorization(report):
    # lambda t in [1, 3] over steps 267..800, before the N = 200 revival
    model = ff.FreeFermionModel(200, 1.5, 0.05)
    T = 800
    lam = ff.analytic_decay_rate(model)
    eps = 3.0 / (lam * T)
    d = 1e-7
    noisy = ff.covariance_series(model, T, eps)
    # noisy Sigma_1 = d<O>/d eps at the running eps
    s1 = (ff.covariance_series(model, T, eps + d) - ff.covariance_series(model, T, eps - d)) / (
        2 * d)
    exact = ff.analytic_magnetization(model, np.arange(T + 1))
    x = eps * lam * np.arange(T + 1)
    idx = np.nonzero((x >= 1 - 1e-9) & (x <= 3 + 1e-9))[0]
    lin = np.array([abs(mitigate_LIN(noisy[t], s1[t], eps) - exact[t]) / abs(exact[t])
                    for t in idx])
    ex = np.array([abs(mitigate_EXP(noisy[t], s1[t], eps) - exact[t]) / abs(exact[t])
                   for t in idx])
    ok = bool(np.all(ex < lin) and ex.max() < 0.05)
    report(6, "EXP vs LIN on free-fermion X noise, lambda t in [1, 3]", ok,
           f"max EXP rel error {ex.max():.2e} (< 5%), min LIN rel error {lin.min():.2e}, "
           f"EXP < LIN at {int(np.sum(ex < lin))}/{len(idx)} steps")


# ---------------------------------------------------------------- 7

def test_acc07_dilution_trend(report, size_scan):
    ns = sorted(size_scan)
    sx = [size_scan[n]["sx"] for n in ns]
    par = [size_scan[n]["parity"] for n in ns]
    flat = all(b <= 1.10 * a for a, b in zip(sx, sx[1:]))
    # least-squares kappa for parity = kappa N, each point within 25% of the fit
    x, y = np.array(ns, float), np.array(par)
    kappa = float(x @ y / (x @ x))
    prop = y / (kappa * x)
    linear = bool(np.all(np.abs(prop - 1) <= 0.25))
    report(7, "Delta O(t=100) vs N (S_x non-increasing, parity ~ N)", flat and linear,
           "S_x " + ", ".join(f"N={n}: {v:.3f}" for n, v in zip(ns, sx))
           + f"; parity / (kappa N) with kappa={kappa:.4f}: "
           + ", ".join(f"{r:.3f}" for r in prop) + " (within 25%), parity ratio to N=6 "
           + ", ".join(f"{(p / n) / (par[0] / ns[0]):.3f}" for n, p in zip(ns, par)))


# ---------------------------------------------------------------- 8

def test_acc08_relevant_length_system_size(report, length_scan):
    ns = sorted(length_scan)
    s_late = T_OBS // 2
    max_rel = [float(np.nanmax(length_scan[n].L_rel[:T_OBS])) for n in ns]
    late = [float(np.mean(length_scan[n].L[s_late:T_OBS + 1]) / (0.75 * n)) for n in ns]
    l_abs = [float(length_scan[n].L_abs[s_late]) for n in ns]
    spread = max(max_rel) / min(max_rel)
    ok_rel = spread < 1.5
    ok_late = all(0.8 <= v <= 1.1 for v in late)
    ok_abs = all(b > a for a, b in zip(l_abs, l_abs[1:]))
    report(8, "relevant and total string lengths vs N (t=100)", ok_rel and ok_late and ok_abs,
           f"max L_rel {', '.join(f'{v:.2f}' for v in max_rel)} spread x{spread:.2f} (< 1.5); "
           f"late L/(3N/4) {', '.join(f'{v:.3f}' for v in late)} (in [0.8, 1.1]); "
           f"L_abs(s={s_late}) {', '.join(f'{v:.2f}' for v in l_abs)} (increasing)")


# ---------------------------------------------------------------- 9

def test_acc09_validity_contrasts(report, standard_cfg, size_scan):
    eps = standard_cfg["noise"]["epsilon"]
    base = size_scan[12]["sx"]
    ratio = {}
    for v in ("large-dt", "y-initial", "time-dependent", "central"):
        circ, noise, obs, initial = variant_model(standard_cfg, v, 3, 4, STEPS)
        ratio[v] = delta_at(circ, noise, obs, initial, eps) / base
    ok = (ratio["large-dt"] >= 3 and ratio["y-initial"] >= 3
          and ratio["time-dependent"] <= 2 and ratio["central"] <= 2)
    report(9, "validity variants at N=12, Delta O(t=100) / standard", ok,
           ", ".join(f"{k}: {v:.2f}" for k, v in ratio.items())
           + " (large-dt, y-initial >= 3; time-dependent, central <= 2)")


# ---------------------------------------------------------------- 10

def test_acc10_ste_residual_linear_in_dt(report):
    dts = [0.05, 0.1, 0.2]
    res = []
    for dt in dts:
        circ = TrotterCircuit(build_square_lattice(3, 4), dt, 1.0, T_OBS)
        res.append(float(np.abs(sa.ste_residual_sweep(circ, ObservableSpec(), T_OBS)).max()))
    slope = float(np.polyfit(np.log(dts), np.log(res), 1)[0])
    report(10, "STE residual max over 100 steps vs dt (3x4)", 0.8 <= slope <= 1.2,
           f"slope {slope:.3f} in [0.8, 1.2], residuals "
           + ", ".join(f"{r:.2e}" for r in res))


# ---------------------------------------------------------------- 11

def test_acc11_correspondence_suppression(report):
    t_star, stride, s_bonds = 30, 3, 25
    circ = TrotterCircuit(build_square_lattice(4, 5), 0.1, 1.0, t_star)
    n = circ.num_qubits
    label = ["I"] * n
    label[12] = "X"
    obs = ObservableSpec("pauli", label="".join(label))
    K = PauliString.from_label("ZY")
    tg = sa.correlator_time_grid(circ, obs, t_star, K, 0, range(0, t_star + 1, stride))
    bg = sa.correlator_bond_grid(circ, obs, t_star, K, s_bonds)
    m = correspondence_metrics(tg, bg, 5, stride)
    report(11, "on-diagonal vs off-diagonal correlators (4x5, t*=30, K=ZY)",
           m["suppression"] >= 10,
           f"suppression x{m['suppression']:.1f} (>= 10), median diagonal "
           f"{m['median_diagonal']:.3e}, median off-diagonal {m['median_off_diagonal']:.3e}")


# ---------------------------------------------------------------- 12

def test_acc12_toy_model(report):
    rng = np.random.default_rng(0)
    lines, ok = [], True
    for N in (16, 20):
        local = sa.toy_model_pk(1.0 / N, N)
        uniform = sa.toy_model_pk(3.0 * N / 4.0 ** N, N)
        norm = max(abs(local.p.sum() - 1), abs(uniform.p.sum() - 1))
        med_local = float(np.nanmedian(sa.toy_model_interference(1.0 / N, 1.0 / N, N, 2000,
                                                                   rng)))
        med_unif = float(np.nanmedian(sa.toy_model_interference(3.0 * N / 4.0 ** N, 1.0 / N,
                                                                  N, 2000, rng)))
        ok &= (norm <= 1e-12 and local.diluted_mean < 3 and uniform.diluted_mean > N / 4
               and med_local < 3 and med_unif > N / 4)
        lines.append(f"N={N}: |sum p - 1| {norm:.1e}, diluted means {local.diluted_mean:.2f} "
                     f"/ {uniform.diluted_mean:.2f}, medians {med_local:.2f} / {med_unif:.2f}")
    report(12, "toy-model oracles", ok, "; ".join(lines)
           + " (local < 3, uniform > N/4)")


# ---------------------------------------------------------------- 13

def _random_string(n, rng):
    return PauliString(int(rng.integers(1 << n)), int(rng.integers(1 << n)), n,
                       int(rng.integers(4)))


def _random_matrix(d, rng):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def test_acc13_property_suites(report):
    rng = np.random.default_rng(13)
    fails = []
    for _ in range(200):
        n = int(rng.integers(1, 5))
        a, b, c = (_random_string(n, rng) for _ in range(3))
        if multiply(multiply(a, b), c) != multiply(a, multiply(b, c)):
            fails.append("associativity")
        sq = multiply(a, a)
        if sq.x_bits or sq.z_bits or sq.phase not in (0, 2):
            fails.append("square")
        ma, mb = a.to_dense(), b.to_dense()
        if not np.allclose(multiply(a, b).to_dense(), ma @ mb):
            fails.append("product")
        if np.allclose(ma @ mb, mb @ ma) != commutes(a, b):
            fails.append("commutation")
    for n in range(1, 7):
        m = _random_matrix(1 << n, rng)
        coef = dense_to_coefficients(m)
        if abs(np.sum(np.abs(coef) ** 2) - np.sum(np.abs(m) ** 2) / 2 ** n) > 1e-9 * np.sum(
                np.abs(m) ** 2):
            fails.append(f"parseval n={n}")
        if not np.allclose(from_pauli_coefficients(to_pauli_coefficients(m, 0.0)).matrix, m):
            fails.append(f"round trip n={n}")
    for basis in ("X", "Y", "Z"):
        v = rng.standard_normal(4 ** 4)
        p = sa.project(v, 4, basis)
        if not np.array_equal(sa.project(p, 4, basis), p):
            fails.append(f"projector {basis}")
    for name in ("single_pauli_X", "depolarizing_1q", "h1_1_two_qubit"):
        ch = build_noise_preset(name, 0.05)
        a = _random_matrix(8, rng)
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        out = apply_channel_dense(rho, ch, [0, 2] if ch.arity == 2 else [1], 3)
        if abs(np.trace(out) - 1) > 1e-12:
            fails.append(f"trace {name}")
    worst = 0.0
    for N in (4, 6, 8):
        etas = ff.jw_majoranas(N)
        even = (np.eye(1 << N) + ff.parity_operator(N)) / 2
        M = ff.random_translation_invariant(N, rng)
        lhs = ff.qubit_noise_map(ff.majorana_to_qubit(M, etas), N, "X")
        rhs = ff.majorana_to_qubit(ff.x_noise_majorana_map(M), etas)
        worst = max(worst, float(np.abs(even @ (lhs - rhs) @ even).max()))
    if worst > 1e-10:
        fails.append("majorana noise map")
    report(13, "property suites (Pauli laws, Parseval, projectors, channels, Majorana map)",
           not fails, f"failures: {sorted(set(fails)) or 'none'}, Majorana map max deviation "
           f"{worst:.1e} (<= 1e-10, N = 4, 6, 8)")
