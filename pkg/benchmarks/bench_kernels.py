"""Compiled kernels against the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 10] [--repeat 5] [--json out.json]

Every kernel is run on identical inputs with both backends; the script
checks that the outputs agree and reports the best-of-``repeat`` time.
"""

import argparse
import json
import time

import numpy as np

from dilution_lab import kernels
from dilution_lab.model_builder import build_square_lattice


def _best(fn, setup, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        args = setup()
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
        out = args[0]
    return best, out


def cases(n, rng):
    g = build_square_lattice(2, max(2, n // 2), True)
    n = g.num_sites
    edges = g.edge_array()
    zz = np.full(len(edges), 0.1)
    xa = np.full(n, 0.1)
    vec = rng.standard_normal(4 ** n)
    psi = rng.standard_normal(2 ** n) + 1j * rng.standard_normal(2 ** n)
    psi /= np.linalg.norm(psi)
    table = rng.uniform(0.9, 1.0, 16)
    N = 200
    Q = np.eye(2 * N)
    return n, {
        "ptm_x_layer": (lambda m: m.ptm_x_layer, lambda: (vec.copy(), n, xa)),
        "ptm_zz_layer": (lambda m: m.ptm_zz_layer, lambda: (vec.copy(), n, edges, zz)),
        "ptm_edge_channel": (lambda m: m.ptm_edge_channel,
                             lambda: (vec.copy(), n, 0, 1, table.copy())),
        "sv_x_layer": (lambda m: m.sv_x_layer, lambda: (psi.copy(), n, xa)),
        "sv_zz_gate": (lambda m: m.sv_zz_gate, lambda: (psi.copy(), n, 0, 1, 0.1)),
        "mj_trotter_step (N=200)": (lambda m: m.mj_trotter_step,
                                    lambda: (Q.copy(), N, 0.15, 0.1)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=10, help="qubits for the Pauli/statevector cases")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="write the timings to this file")
    args = p.parse_args(argv)
    if "cython" not in kernels.available_backends():
        raise SystemExit("compiled kernels are not built; run pip install -e .")
    cy, py = kernels.backend_module("cython"), kernels.backend_module("python")
    n, table = cases(args.n, np.random.default_rng(0))
    print(f"N = {n}, best of {args.repeat}")
    print(f"{'kernel':<26}{'cython [ms]':>12}{'python [ms]':>13}{'speedup':>9}  max|diff|")
    report = {}
    for name, (get, setup) in table.items():
        tc, oc = _best(get(cy), setup, args.repeat)
        tp, op = _best(get(py), setup, args.repeat)
        diff = float(np.max(np.abs(oc - op)))
        report[name] = {"cython_s": tc, "python_s": tp, "max_abs_diff": diff}
        print(f"{name:<26}{tc * 1e3:>12.3f}{tp * 1e3:>13.3f}{tp / tc:>9.1f}  {diff:.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"n": n, "repeat": args.repeat, "kernels": report}, fh, indent=2)


if __name__ == "__main__":
    main()
