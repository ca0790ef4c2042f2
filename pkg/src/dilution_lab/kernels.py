"""Kernel backend selection.

The compiled Cython extension is used when importable; otherwise the NumPy
reference kernels are used.  Set ``DILUTION_LAB_KERNELS=python`` to force
the fallback (the benchmark and the cross-check tests do this explicitly).
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = (
    "ptm_x_layer",
    "ptm_zz_layer",
    "ptm_site_channel",
    "ptm_edge_channel",
    "ptm_length_histograms",
    "sv_x_layer",
    "sv_zz_gate",
    "sv_apply_pauli",
    "mj_trotter_step",
)


def _select(name):
    if name == "python" or _ckernels is None:
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _select(os.environ.get("DILUTION_LAB_KERNELS", "cython"))


def available_backends():
    return ["cython", "python"] if _ckernels is not None else ["python"]


def backend_module(name):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    if name == "python":
        return _pykernels
    raise ValueError(f"unknown kernel backend {name!r}")


ptm_x_layer = _impl.ptm_x_layer
ptm_zz_layer = _impl.ptm_zz_layer
ptm_site_channel = _impl.ptm_site_channel
ptm_edge_channel = _impl.ptm_edge_channel
ptm_length_histograms = _impl.ptm_length_histograms
sv_x_layer = _impl.sv_x_layer
sv_zz_gate = _impl.sv_zz_gate
sv_apply_pauli = _impl.sv_apply_pauli
mj_trotter_step = _impl.mj_trotter_step
