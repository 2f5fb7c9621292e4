"""Pure numpy/scipy fallback for the compiled kernels (same semantics)."""

from __future__ import annotations

import numpy as np


def matvec(op, x, out):
    out[:] = op.to_scipy() @ x
    return out


def norm_apply(op, inv_a, shift, x, out):
    y = op.to_scipy() @ x
    out[:] = inv_a * (y - shift * x)
    return out


def cheb_step(op, inv_a, shift, v, u, out):
    # right-hand side is evaluated into a temporary, so out may alias u
    y = op.to_scipy() @ v
    out[:] = (2.0 * inv_a) * (y - shift * v) - u
    return out


def ggm_cut_sweep(amps, plan):
    best = -1.0
    best_cut = 0
    row_small, group_id, order = plan.row_small, plan.group_id, plan.order
    offsets = plan.offsets
    for c in range(plan.n_cuts):
        lo, hi = offsets[c], offsets[c + 1]
        d = int(plan.d_small[c])
        g = int(plan.n_groups[c])
        buf = np.zeros(d * g, dtype=np.complex128)
        flat = row_small[lo:hi].astype(np.int64) * g + group_id[lo:hi]
        buf[flat] = amps[order[lo:hi]]
        m = buf.reshape(d, g)
        gram = m @ m.conj().T
        lam = np.linalg.eigvalsh(gram)[-1]
        if lam > best:
            best = lam
            best_cut = c
    return best, best_cut
