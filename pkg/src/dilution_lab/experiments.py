"""Experiment runners behind ``dilution-lab run``.

Each runner takes a normalized manifest (see :mod:`dilution_lab.config`)
and an :class:`Artifacts` sink, writes its CSV files through the sink and
returns a JSON-serializable summary.  Outputs depend only on the manifest:
no timestamps, no thread-count dependence.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import free_fermion as ff
from . import string_analysis as sa
from .config import (EXPERIMENTS, build_lattice, build_model, field_of, manifest_hash,
                     noise_of, observable_of)
from .model_builder import ObservableSpec, TrotterCircuit, build_wheel_spokes, cosine_schedule
from .pauli_core import PauliString
from .sigma_mitigation import mitigate_EXP, mitigate_LIN, sigma_series
from .sim_engines import (MAX_PAULI_QUBITS, decay_rate, evolve_trajectories,
                          normalized_difference, quench_density, quench_statevector)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    return obj


@dataclass
class Artifacts:
    """Writes CSV files tagged with the manifest hash into one directory."""

    directory: str
    manifest_hash: str
    files: list = field(default_factory=list)

    def __post_init__(self):
        os.makedirs(self.directory, exist_ok=True)

    def csv(self, name: str, header, rows) -> str:
        path = os.path.join(self.directory, name)
        with open(path, "w", newline="") as fh:
            fh.write(f"# manifest_hash={self.manifest_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(name)
        return path

    def json(self, name: str, payload: dict) -> str:
        path = os.path.join(self.directory, name)
        body = dict(_clean(payload))
        body["manifest_hash"] = self.manifest_hash
        with open(path, "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        return path


# ---------------------------------------------------------------- helpers

def _circuit(cfg, steps=None, lattice=None, dt=None, h=None):
    lat = cfg["lattice"] if lattice is None else lattice
    return TrotterCircuit(build_lattice(lat), cfg["dt"] if dt is None else dt,
                          field_of(cfg) if h is None else h,
                          cfg["steps"] if steps is None else steps)


def _size_lattice(cfg, rows, cols):
    lat = dict(cfg["lattice"])
    lat.update(rows=rows, cols=cols)
    lat.pop("wheel_hub", None)
    return lat


def _delta_at(noisy, clean, eps, window, t):
    if eps <= 0 or t >= len(noisy):
        return None
    d = normalized_difference(noisy, clean, eps, window)
    return None if d.mask[t] else float(d[t])


# ---------------------------------------------------------------- quench

def run_quench(man, out: Artifacts, threads: int = 1) -> dict:
    cfg, opts = man["config"], man["options"]
    model = build_model(cfg, opts["initial"])
    circ, noise = model.circuit, model.noise
    n = circ.num_qubits
    obs = [model.observable]
    for k in opts["k_values"]:
        spec = ObservableSpec("sx", k, "X")
        if k <= n and spec not in obs:
            obs.append(spec)
    if opts["parity"] and ObservableSpec("parity") not in obs:
        obs.append(ObservableSpec("parity"))
    eps = noise.epsilon
    engine = opts["engine"]
    if engine == "auto":
        engine = "statevector" if eps == 0 else ("density" if n <= MAX_PAULI_QUBITS
                                                 else "trajectories")
    clean = quench_statevector(circ, obs, opts["initial"])
    if engine == "statevector" or eps == 0:
        noisy = clean
    elif engine == "density":
        noisy = quench_density(circ, noise, obs, opts["initial"])
    else:
        noisy = evolve_trajectories(circ, noise, obs, opts["trajectories"], man["seed"],
                                    opts["initial"], threads=threads)
    rows, summary = [], {}
    for spec in obs:
        name = spec.name()
        a, b = noisy.values[name], clean.values[name]
        err = noisy.stderr.get(name)
        dO = normalized_difference(a, b, eps, opts["window"]) if eps > 0 else None
        lam = decay_rate(a, b)
        for t in range(len(a)):
            rows.append([t, t * circ.dt, name, a[t], None if err is None else err[t], b[t],
                         None if dO is None or dO.mask[t] else dO[t],
                         None if lam.mask[t] else lam[t]])
        summary[name] = {"final_noisy": a[-1], "final_noiseless": b[-1],
                         "delta_O_t100": _delta_at(a, b, eps, opts["window"], 100)}
    out.csv("quench.csv", ["step", "time", "observable", "noisy", "noisy_stderr",
                           "noiseless", "delta_O", "decay_rate"], rows)
    return {"engine": engine, "num_qubits": n, "observables": summary}


# ---------------------------------------------------------------- sigma

def run_sigma(man, out: Artifacts, threads: int = 1) -> dict:
    cfg, opts = man["config"], man["options"]
    model = build_model(cfg, opts["initial"])
    order = opts["order"]
    tracks = ("taylor", "sectors", "noisy") if order > 0 else ("taylor", "noisy")
    ser = sigma_series(model.circuit, model.noise, model.observable, cfg["steps"], order,
                       opts["initial"], tracks)
    S = ser.Sigma
    D = ser.D if ser.D is not None else [S[0]]
    header = (["step"] + [f"Sigma_{k}" for k in range(order + 1)]
              + [f"D_{k}" for k in range(len(D))] + ["noisy", "Sigma1_noisy", "rho"])
    rows = []
    for t in ser.steps:
        M = ser.N_loc * t
        rho = None
        if order >= 1 and M > 0 and abs(S[0][t]) > 1e-12:
            rho = -S[1][t] / (S[0][t] * M)
        rows.append([t] + [s[t] for s in S] + [d[t] for d in D]
                    + [ser.noisy[t], ser.Sigma1_noisy[t], rho])
    out.csv("sigma.csv", header, rows)
    return {"locations_per_step": ser.N_loc, "c": ser.c, "epsilon": ser.epsilon,
            "final": dict(zip(header, rows[-1]))}


# ---------------------------------------------------------------- mitigate

def run_mitigate(man, out: Artifacts, threads: int = 1) -> dict:
    cfg, opts = man["config"], man["options"]
    model = build_model(cfg, opts["initial"])
    circ, obs = model.circuit, model.observable
    method = opts["method"]
    clean = quench_statevector(circ, [obs], opts["initial"]).values[obs.name()]
    summary = {}
    for eps in opts["epsilons"]:
        ser = sigma_series(circ, model.noise.with_epsilon(eps), obs, cfg["steps"], 1,
                           opts["initial"], ("noisy",))
        rows = []
        scale = float(np.max(np.abs(clean)))
        for t in ser.steps:
            d0, s1 = ser.noisy[t], ser.Sigma1_noisy[t]
            lin = mitigate_LIN(d0, s1, eps) if method in ("lin", "both") else None
            ex = mitigate_EXP(d0, s1, eps, scale) if method in ("exp", "both") else None
            rows.append([t, t * circ.dt, clean[t], d0, s1, lin, ex])
        out.csv(f"mitigate_eps{eps:g}.csv",
                ["step", "time", "noiseless", "noisy", "Sigma1_noisy", "LIN", "EXP"], rows)
        last = rows[-1]
        summary[f"{eps:g}"] = {
            "noiseless": last[2], "noisy": last[3], "LIN": last[5], "EXP": last[6],
            "LIN_error": None if last[5] is None else abs(last[5] - last[2]),
            "EXP_error": None if last[6] is None else abs(last[6] - last[2]),
            "mean_errors": _mean_errors(rows)}
    return {"method": method, "epsilons": summary}


def _mean_errors(rows):
    out = {}
    for name, col in (("noisy", 3), ("LIN", 5), ("EXP", 6)):
        vals = [abs(r[col] - r[2]) for r in rows if r[col] is not None]
        out[name] = float(np.mean(vals)) if vals else None
    return out


# ---------------------------------------------------------------- string length

def _length_rows(ls: sa.LengthSeries, label):
    rows = []
    for s in ls.s:
        rows.append(list(label) + [s, ls.L[s], ls.L_rel[s], ls.L_abs[s], ls.L_dil[s],
                                   ls.L_rel_tt[s], ls.relevant_norm[s], ls.expectation[s]])
    return rows


LENGTH_HEADER = ["s", "L", "L_rel", "L_abs", "L_dil", "L_rel_tt", "relevant_norm",
                 "expectation"]


def _length_summary(ls: sa.LengthSeries, n, t):
    late = ls.s >= t // 2
    with np.errstate(invalid="ignore"):
        return {"N": n, "max_L_rel": float(np.nanmax(ls.L_rel[:t])) if t > 0 else None,
                "mean_late_L_over_3N4": float(np.nanmean(ls.L[late]) / (0.75 * n)),
                "L_abs_at_s_t2": float(ls.L_abs[t // 2]),
                "rho_predicted": sa.predict_rho(ls.L_rel[1:t + 1], n, t) if t > 0 else None,
                "missing_points": int(np.sum(ls.missing))}


def run_string_length(man, out: Artifacts, threads: int = 1) -> dict:
    cfg, opts = man["config"], man["options"]
    t = opts["t"]
    obs = observable_of(cfg)
    summary = {}
    for rows_, cols in opts["sizes"]:
        circ = _circuit(cfg, t, _size_lattice(cfg, rows_, cols))
        n = circ.num_qubits
        ls = sa.length_sweep(circ, obs, t, opts["initial"])
        tag = f"{rows_}x{cols}"
        out.csv(f"lengths_{tag}.csv", LENGTH_HEADER, _length_rows(ls, ()))
        out.csv(f"histogram_{tag}.csv", ["k", "total", "relevant", "diluted"],
                ls.histogram_rows())
        summary[tag] = _length_summary(ls, n, t)
    return {"t": t, "sizes": summary}


# ---------------------------------------------------------------- validity sweep

def variant_model(cfg, variant: str, rows: int, cols: int, steps: int):
    """(circuit, noise, observable, initial) of one validity-sweep variant."""
    lat = _size_lattice(cfg, rows, cols)
    noise, obs = noise_of(cfg), observable_of(cfg)
    h = cfg.get("h", 1.0)
    dt, initial, graph = cfg["dt"], "plus", build_lattice(lat)
    field_ = field_of(cfg)
    if variant == "time-dependent":
        field_ = cosine_schedule(h, 100.0)
    elif variant == "central":
        graph = build_wheel_spokes(graph, 0)
    elif variant == "y-initial":
        initial = "y"
    elif variant == "large-dt":
        dt = 1.0
    elif variant != "standard":
        raise ValueError(f"unknown variant {variant!r}")
    return TrotterCircuit(graph, dt, field_, steps), noise, obs, initial


def run_validity_sweep(man, out: Artifacts, threads: int = 1) -> dict:
    cfg, opts = man["config"], man["options"]
    t, window = opts["t"], opts["window"]
    steps = t + window // 2
    eps = cfg["noise"]["epsilon"]
    summary = {}
    for variant in opts["variants"]:
        rows, lrows, per_n = [], [], {}
        for r, c in opts["sizes"]:
            circ, noise, obs, initial = variant_model(cfg, variant, r, c, steps)
            n = circ.num_qubits
            name = obs.name()
            clean = quench_statevector(circ, [obs], initial).values[name]
            noisy = quench_density(circ, noise, [obs], initial).values[name]
            dO = normalized_difference(noisy, clean, eps, window)
            for s in range(steps + 1):
                rows.append([n, s, noisy[s], clean[s], None if dO.mask[s] else dO[s]])
            per_n[str(n)] = {"delta_O": None if dO.mask[t] else float(dO[t])}
            if opts["lengths"]:
                ls = sa.length_sweep(circ.with_steps(t), obs, t, initial)
                lrows += _length_rows(ls, (n,))
                per_n[str(n)]["max_L_rel"] = float(np.nanmax(ls.L_rel[:t]))
        out.csv(f"validity_{variant}.csv", ["N", "step", "noisy", "noiseless", "delta_O"],
                rows)
        if opts["lengths"]:
            out.csv(f"validity_lengths_{variant}.csv", ["N"] + LENGTH_HEADER, lrows)
        summary[variant] = per_n
    return {"t": t, "window": window, "epsilon": eps, "variants": summary}


# ---------------------------------------------------------------- free fermion

def run_free_fermion(man, out: Artifacts, threads: int = 1) -> dict:
    cfg, opts = man["config"], man["options"]
    dt, eta = cfg["dt"], opts["eta"]
    t0, t1 = opts["t_window"]
    T = int(math.ceil(t1 / dt - 1e-9))
    summary = {}
    for h in opts["fields"]:
        lam_ref = ff.analytic_decay_rate(ff.FreeFermionModel(100, h, 0.0))
        for N in opts["sizes"]:
            model = ff.FreeFermionModel(N, h, dt)
            if opts["engine"] == "exact":
                steps = np.arange(0, T + 1, opts["record_every"])
                noisy = ff.covariance_series(model, T, eta * dt)[steps]
                err = np.zeros(len(steps))
            else:
                res = ff.gaussian_trajectories(model, eta, T, opts["trajectories"],
                                               seed=man["seed"],
                                               record_every=opts["record_every"])
                steps, noisy, err = res.steps, res.values["Sx"], res.stderr["Sx"]
            times = steps * dt
            clean = ff.analytic_magnetization(model, steps)
            lam = ff.decay_rate_mes(noisy, clean, eta, times)
            rows = [[s, tt, a, e, b, l] for s, tt, a, e, b, l in
                    zip(steps, times, noisy, err, clean, lam)]
            out.csv(f"free_fermion_h{h:g}_N{N}.csv",
                    ["step", "time", "sx_noisy", "sx_stderr", "sx_noiseless", "lambda_mes"],
                    rows)
            sel = (times >= t0 - 1e-9) & (times <= t1 + 1e-9)
            lam_w = float(np.nanmean(lam[sel])) if np.any(sel) else None
            summary[f"h={h:g},N={N}"] = {
                "h": h, "N": N, "lambda_analytic": lam_ref, "lambda_mes": lam_w,
                "ratio": None if lam_w is None else lam_w / lam_ref}
    return {"eta": eta, "dt": dt, "t_window": [t0, t1], "engine": opts["engine"],
            "results": summary}


# ---------------------------------------------------------------- correspondence

def correspondence_metrics(time_grid, bond_grid, gap: int, stride: int = 1):
    """On-diagonal magnitudes against the median off-diagonal magnitude of |Re G|."""
    tg, bg = np.abs(time_grid.real), np.abs(bond_grid.real)
    idx = np.arange(tg.shape[0]) * stride
    sep = np.abs(idx[:, None] - idx[None, :])
    diag = np.concatenate([np.diag(tg), np.diag(bg)])
    off = np.concatenate([tg[sep > gap], bg[~np.eye(bg.shape[0], dtype=bool)]])
    med_off = float(np.median(off))
    med_diag = float(np.median(diag))
    return {"median_diagonal": med_diag, "median_off_diagonal": med_off,
            "suppression": med_diag / med_off if med_off > 0 else None}


def run_correspondence(man, out: Artifacts, threads: int = 1) -> dict:
    cfg, opts = man["config"], man["options"]
    t_star = opts["t_star"]
    circ = _circuit(cfg, t_star)
    n = circ.num_qubits
    lat = cfg["lattice"]
    site = opts.get("site", (lat["rows"] // 2) * lat["cols"] + lat["cols"] // 2)
    if site >= n:
        raise ValueError(f"site {site} outside the lattice")
    label = ["I"] * n
    label[site] = "X"
    obs = ObservableSpec("pauli", label="".join(label))
    K = PauliString.from_label(opts["kraus"])
    times = list(range(0, t_star + 1, opts["time_stride"]))
    tg = sa.correlator_time_grid(circ, obs, t_star, K, opts["bond"], times)
    out.csv("correspondence_time.csv", ["s", "t", "re", "im"],
            [[s, t, tg[i, j].real, tg[i, j].imag] for i, s in enumerate(times)
             for j, t in enumerate(times)])
    bg = sa.correlator_bond_grid(circ, obs, t_star, K, opts["s_bonds"])
    bonds = range(circ.graph.num_edges)
    out.csv("correspondence_bonds.csv", ["q", "p", "re", "im"],
            [[q, p, bg[i, j].real, bg[i, j].imag] for i, q in enumerate(bonds)
             for j, p in enumerate(bonds)])
    m = correspondence_metrics(tg, bg, opts["off_diagonal_gap"], opts["time_stride"])
    return {"num_qubits": n, "site": site, "kraus": opts["kraus"], "t_star": t_star, **m}


# ---------------------------------------------------------------- toy model

def toy_regimes(N: int) -> dict:
    return {"local": 1.0 / N, "uniform": 3.0 * N / 4.0 ** N}


def run_toy_model(man, out: Artifacts, threads: int = 1) -> dict:
    opts = man["options"]
    rng = np.random.default_rng(man["seed"])
    prow, srow, summary = [], [], {}
    for N in opts["sizes"]:
        for regime, p1 in toy_regimes(N).items():
            dist = sa.toy_model_pk(p1, N)
            prow += [[N, regime, k, p] for k, p in enumerate(dist.p)]
            samples = sa.toy_model_interference(p1, 1.0 / N, N, opts["samples"], rng)
            srow += [[N, regime, i, v] for i, v in enumerate(samples)]
            summary[f"N={N},{regime}"] = {
                "p1": p1, "sum_p": float(dist.p.sum()), "mean_length": dist.mean,
                "diluted_mean": dist.diluted_mean,
                "interference_median": float(np.nanmedian(samples))}
    out.csv("toy_pk.csv", ["N", "regime", "k", "p_k"], prow)
    out.csv("toy_interference.csv", ["N", "regime", "sample", "L_rel"], srow)
    return summary


RUNNERS = {
    "quench": run_quench,
    "sigma": run_sigma,
    "mitigate": run_mitigate,
    "string-length": run_string_length,
    "validity-sweep": run_validity_sweep,
    "free-fermion": run_free_fermion,
    "correspondence": run_correspondence,
    "toy-model": run_toy_model,
}
assert set(RUNNERS) == set(EXPERIMENTS)


def run(man: dict, out_dir: str | None = None, threads: int = 1) -> dict:
    """Run a normalized manifest; returns the summary also written to summary.json."""
    h = manifest_hash(man)
    out = Artifacts(out_dir or man["output"], h)
    result = RUNNERS[man["experiment"]](man, out, threads)
    summary = {"experiment": man["experiment"], "manifest": {k: v for k, v in man.items()
                                                             if k != "output"},
               "files": sorted(out.files), "results": result}
    out.json("summary.json", summary)
    summary["manifest_hash"] = h
    return _clean(summary)
