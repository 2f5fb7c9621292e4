"""Hot-loop dispatch: compiled extension when built, numpy/scipy otherwise.

The compiled backend is selected at import when `dmchain._kernels` is present;
set DMCHAIN_PURE_PYTHON=1 (or call `set_backend`) to force the fallback.  Both
backends implement identical semantics and are cross-checked by the test
suite and compared by benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_backend = "python" if (_compiled is None or os.environ.get("DMCHAIN_PURE_PYTHON")) else "compiled"


def backend() -> str:
    return _backend


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _compiled is not None else ("python",)


def set_backend(name: str) -> None:
    global _backend
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _compiled is None:
        raise RuntimeError("compiled kernels are not built in this environment")
    _backend = name


def _coerce(op, x, out, want_real_ok: bool):
    """Pick the kernel flavour and allocate/validate the output buffer."""
    x = np.asarray(x)
    real_path = op.is_real and x.dtype != np.complex128 and want_real_ok
    if real_path:
        x = np.ascontiguousarray(x, dtype=np.float64)
        dtype = np.float64
    else:
        x = np.ascontiguousarray(x, dtype=np.complex128)
        dtype = np.complex128
    if out is None:
        out = np.empty(op.dim, dtype=dtype)
    elif out.dtype != dtype:
        raise TypeError(f"output buffer dtype {out.dtype} does not match {dtype}")
    return x, out, real_path


def matvec(op, x, out=None):
    x, out, real_path = _coerce(op, x, out, want_real_ok=True)
    if _backend == "python":
        return _kernels_py.matvec(op, x, out)
    if real_path:
        _compiled.matvec_rr(op.indptr, op.indices, op.values, x, out)
    elif op.is_real:
        _compiled.matvec_r(op.indptr, op.indices, op.values, x, out)
    else:
        _compiled.matvec_c(op.indptr, op.indices, op.values, x, out)
    return out


def norm_apply(op, inv_a, shift, x, out=None):
    """out = ((H x) - shift x) * inv_a."""
    x, out, real_path = _coerce(op, x, out, want_real_ok=True)
    if _backend == "python":
        return _kernels_py.norm_apply(op, inv_a, shift, x, out)
    if real_path:
        _compiled.norm_apply_rr(op.indptr, op.indices, op.values, inv_a, shift, x, out)
    elif op.is_real:
        _compiled.norm_apply_r(op.indptr, op.indices, op.values, inv_a, shift, x, out)
    else:
        _compiled.norm_apply_c(op.indptr, op.indices, op.values, inv_a, shift, x, out)
    return out


def cheb_step(op, inv_a, shift, v, u, out):
    """out = 2*((H v) - shift v)*inv_a - u; out may alias u but never v."""
    if out is v:
        raise ValueError("out must not alias v in the three-term recursion")
    v = np.asarray(v)
    real_path = op.is_real and v.dtype != np.complex128
    if _backend == "python":
        return _kernels_py.cheb_step(op, inv_a, shift, v, u, out)
    if real_path:
        _compiled.cheb_step_rr(op.indptr, op.indices, op.values, inv_a, shift, v, u, out)
    elif op.is_real:
        _compiled.cheb_step_r(op.indptr, op.indices, op.values, inv_a, shift, v, u, out)
    else:
        _compiled.cheb_step_c(op.indptr, op.indices, op.values, inv_a, shift, v, u, out)
    return out


def ggm_cut_sweep(amps, plan):
    """(max squared Schmidt coefficient, first argmax cut index) over a plan."""
    amps = np.ascontiguousarray(amps, dtype=np.complex128)
    if _backend == "python":
        return _kernels_py.ggm_cut_sweep(amps, plan)
    val, cut = _compiled.ggm_cut_sweep(
        amps, plan.row_small, plan.group_id, plan.order,
        plan.offsets, plan.d_small, plan.n_groups,
    )
    return float(val), int(cut)
