"""Spectra: dense diagonalization, spectral bounds, polynomially filtered interior.

Large sectors are handled by a spectral-transformation scheme: the operator is
rescaled so its spectrum fits [-1, 1], a Chebyshev polynomial filter peaked at
the spectral center is applied matrix-free, and a Krylov eigensolver run on the
filtered operator returns the mid-spectrum eigenpairs.  The filter order is
auto-selected from trace-based density-of-states moments and accepted only when
the smallest retained filter value clears a floor that separates the main lobe
from the filter's side lobes; otherwise the order is shrunk geometrically and
the solve retried.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from math import ceil, cos, acos, exp, pi, sqrt

import numpy as np
import scipy.sparse.linalg

from . import kernels
from .model import SectorBasis, SectorState, SparseHermitianOperator

__all__ = [
    "EigenSelection",
    "PolfedConfig",
    "SolverError",
    "SpectralBounds",
    "auto_filter_order",
    "chebyshev_filter",
    "dense_spectrum",
    "extremal_bounds",
    "filter_apply",
    "load_selection",
    "middle_selection",
    "polfed_interior",
    "save_selection",
    "solve_interior",
]


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralBounds:
    """Estimated spectral interval, already inflated by the safety margin."""

    e_min: float
    e_max: float
    margin: float = 0.0

    def __post_init__(self):
        if not self.e_max > self.e_min:
            raise SolverError(f"degenerate spectral interval [{self.e_min}, {self.e_max}]")

    @property
    def half_width(self) -> float:
        return 0.5 * (self.e_max - self.e_min)

    @property
    def center(self) -> float:
        return 0.5 * (self.e_max + self.e_min)


def _start_vector(dim: int, seed: int = 0x5EED) -> np.ndarray:
    # fixed Krylov start vector keeps ARPACK output reproducible
    rng = np.random.default_rng(seed + dim)
    v0 = rng.standard_normal(dim)
    return v0 / np.linalg.norm(v0)


def extremal_bounds(
    op: SparseHermitianOperator,
    margin: float = 1e-2,
    tol: float = 1e-10,
) -> SpectralBounds:
    """Converged extremal eigenvalues, interval inflated symmetrically by margin."""
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    dim = op.dim
    if dim <= 64:
        vals = np.linalg.eigvalsh(op.to_dense())
        lo, hi = float(vals[0]), float(vals[-1])
    else:
        linop = scipy.sparse.linalg.LinearOperator(
            op.shape,
            matvec=lambda x: kernels.matvec(op, x),
            dtype=np.float64 if op.is_real else np.complex128,
        )
        v0 = _start_vector(dim)
        try:
            lo = float(
                scipy.sparse.linalg.eigsh(
                    linop, k=1, which="SA", tol=tol, v0=v0, maxiter=100 * dim
                )[0][0]
            )
            hi = float(
                scipy.sparse.linalg.eigsh(
                    linop, k=1, which="LA", tol=tol, v0=v0, maxiter=100 * dim
                )[0][0]
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise SolverError(f"extremal eigenvalue iteration did not converge: {exc}") from exc
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + margin)
    if half == 0.0:
        raise SolverError("operator spectrum has zero width")
    return SpectralBounds(center - half, center + half, margin)


def dense_spectrum(op: SparseHermitianOperator) -> tuple[np.ndarray, np.ndarray]:
    """Full spectrum by dense diagonalization: (values ascending, column vectors)."""
    return np.linalg.eigh(op.to_dense())


@dataclass
class EigenSelection:
    """A batch of interior eigenpairs sorted by distance from the target energy."""

    basis: SectorBasis
    values: np.ndarray
    vectors: np.ndarray
    target_energy: float
    solver: str
    residual_norms: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.vectors.shape != (self.basis.dim, len(self.values)):
            raise ValueError(
                f"vector block {self.vectors.shape} does not match "
                f"(dim={self.basis.dim}, n={len(self.values)})"
            )
        if self.residual_norms is None:
            self.residual_norms = np.zeros(len(self.values))

    @property
    def n_states(self) -> int:
        return len(self.values)

    def state(self, j: int) -> SectorState:
        return SectorState(self.basis, self.vectors[:, j])


def middle_selection(
    values: np.ndarray,
    vectors: np.ndarray,
    n_eps: int,
    basis: SectorBasis,
    target: float | None = None,
    solver: str = "dense",
    residual_norms: np.ndarray | None = None,
) -> EigenSelection:
    """Keep the n_eps eigenpairs closest to the spectral center.

    The target defaults to the arithmetic center of the supplied spectrum.
    Selected pairs are ordered by |E - target| with index order breaking ties,
    so the selection is deterministic.
    """
    values = np.asarray(values, dtype=np.float64)
    if n_eps < 1 or n_eps > len(values):
        raise SolverError(f"cannot select {n_eps} states out of {len(values)}")
    if target is None:
        target = 0.5 * (float(values[0]) + float(values[-1]))
    order = np.argsort(np.abs(values - target), kind="stable")[:n_eps]
    res = None if residual_norms is None else np.asarray(residual_norms)[order]
    return EigenSelection(
        basis=basis,
        values=values[order],
        vectors=np.ascontiguousarray(vectors[:, order]),
        target_energy=float(target),
        solver=solver,
        residual_norms=res,
    )


def chebyshev_filter(sigma: float, order: int) -> np.ndarray:
    """Normalized Chebyshev coefficients of the spectral filter peaked at sigma.

    Coefficient p is 2^min(1,p) cos(p arccos sigma); the vector is scaled so the
    filter evaluates to exactly 1 at sigma.
    """
    if not -1.0 < sigma < 1.0:
        raise ValueError(f"filter target must lie inside (-1, 1), got {sigma}")
    if order < 1:
        raise ValueError(f"filter order must be >= 1, got {order}")
    theta = acos(sigma)
    p = np.arange(order + 1)
    coeffs = 2.0 * np.cos(p * theta)
    coeffs[0] = 1.0
    norm = np.sum(coeffs * np.cos(p * theta))
    if norm <= 0:
        raise SolverError(f"filter normalization {norm} <= 0 at order {order}")
    return coeffs / norm


def filter_apply(
    op: SparseHermitianOperator,
    bounds: SpectralBounds,
    coeffs: np.ndarray,
    x: np.ndarray,
    ) -> np.ndarray:
    """Apply the filter polynomial of the rescaled operator to a vector."""
    inv_a = 1.0 / bounds.half_width
    b = bounds.center
    dtype = np.float64 if (op.is_real and np.asarray(x).dtype != np.complex128) else np.complex128
    t_prev = np.ascontiguousarray(x, dtype=dtype)
    y = coeffs[0] * t_prev
    if len(coeffs) == 1:
        return y
    t_cur = kernels.norm_apply(op, inv_a, b, t_prev, out=np.empty_like(t_prev))
    y += coeffs[1] * t_cur
    t_prev = t_prev.copy()
    for c in coeffs[2:]:
        kernels.cheb_step(op, inv_a, b, t_cur, t_prev, out=t_prev)
        t_prev, t_cur = t_cur, t_prev
        if c != 0.0:
            y += c * t_cur
    return y


def auto_filter_order(op: SparseHermitianOperator, bounds: SpectralBounds, n_eps: int) -> int:
    """Filter order from a Gaussian density-of-states model at the target.

    Trace moments of the operator are exact and cheap in CSR form; the order is
    chosen so the filter's main lobe holds roughly the wanted number of states,
    rounded to a multiple of 10.
    """
    dim = op.dim
    diag = op.diagonal()
    tr1 = float(np.sum(diag.real))
    tr2 = float(np.sum(np.abs(op.values) ** 2))
    mean = tr1 / dim
    var = tr2 / dim - mean**2
    if var <= 0:
        raise SolverError("trace moments give non-positive spectral variance")
    mu = (mean - bounds.center) / bounds.half_width
    sdev = sqrt(var) / bounds.half_width
    dos0 = dim * exp(-0.5 * (mu / sdev) ** 2) / (sdev * sqrt(2.0 * pi))
    raw = 1.2 * pi * dos0 / n_eps
    return max(20, 10 * int(round(raw / 10.0)))


@dataclass(frozen=True)
class PolfedConfig:
    """Knobs of the filtered interior solve."""

    theta_floor: float = 0.2
    margin: float = 1e-2
    order: int | None = None
    max_retries: int = 4
    tol: float = 1e-12
    residual_bound: float = 1e-6
    dense_dim_max: int = 3500


def polfed_interior(
    op: SparseHermitianOperator,
    n_eps: int,
    config: PolfedConfig = PolfedConfig(),
) -> EigenSelection:
    """Mid-spectrum eigenpairs through the polynomial filter.

    Accepts the n_eps dominant filtered eigenpairs only when the smallest
    filtered value theta_min clears the configured floor; the filter sharpens
    with growing order, so a failed acceptance shrinks the order geometrically
    and retries.  Energies are recovered as Rayleigh quotients and the
    selection is returned sorted by distance from the spectral center.
    """
    dim = op.dim
    if n_eps > dim - 2:
        raise SolverError(f"n_eps={n_eps} too close to sector dim={dim}")
    bounds = extremal_bounds(op, margin=config.margin)
    order = config.order or auto_filter_order(op, bounds, n_eps)
    dtype = np.float64 if op.is_real else np.complex128
    v0 = _start_vector(dim)

    theta_min = None
    accepted = False
    for _ in range(config.max_retries + 1):
        coeffs = chebyshev_filter(0.0, order)
        linop = scipy.sparse.linalg.LinearOperator(
            op.shape,
            matvec=lambda x: filter_apply(op, bounds, coeffs, np.ascontiguousarray(x)),
            dtype=dtype,
        )
        try:
            thetas, vecs = scipy.sparse.linalg.eigsh(
                linop, k=n_eps, which="LA", tol=config.tol, v0=v0, maxiter=50 * dim
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise SolverError(f"filtered eigensolve did not converge (order={order})") from exc
        theta_min = float(np.min(thetas))
        if theta_min > config.theta_floor:
            accepted = True
            break
        # a sharper filter starves the wanted count, so failure means the
        # order was too high: widen the main lobe by shrinking geometrically
        shrunk = int(round(order / 1.5))
        if shrunk >= 40:
            shrunk = 10 * int(round(shrunk / 10.0))
        if shrunk >= order:
            shrunk = order - 1
        if shrunk < 4:
            break
        order = shrunk
    if not accepted:
        raise SolverError(
            f"filter acceptance failed: theta_min={theta_min:.4f} "
            f"<= floor={config.theta_floor} after retries (last order {order})"
        )

    # Rayleigh-quotient energy recovery on the original operator
    hv = np.empty_like(vecs, dtype=np.complex128 if not op.is_real else np.float64)
    for j in range(n_eps):
        kernels.matvec(op, np.ascontiguousarray(vecs[:, j]), out=hv[:, j])
    energies = np.real(np.einsum("ij,ij->j", vecs.conj(), hv))
    residuals = np.linalg.norm(hv - vecs * energies[None, :], axis=0)
    if np.any(residuals > config.residual_bound):
        raise SolverError(
            f"accepted pair residuals up to {residuals.max():.2e} exceed "
            f"{config.residual_bound:.0e} (order={order})"
        )
    return middle_selection(
        energies,
        vecs,
        n_eps,
        op.basis,
        target=bounds.center,
        solver=f"polfed(order={order},theta_min={theta_min:.3f})",
        residual_norms=residuals,
    )


def solve_interior(
    op: SparseHermitianOperator,
    n_eps: int,
    config: PolfedConfig = PolfedConfig(),
) -> EigenSelection:
    """Dense below the dispatch threshold, filtered iteration above."""
    if op.dim <= config.dense_dim_max:
        values, vectors = dense_spectrum(op)
        return middle_selection(values, vectors, n_eps, op.basis, solver="dense")
    return polfed_interior(op, n_eps, config)


_MAGIC = b"DMEIG01\x00"


def save_selection(sel: EigenSelection, path) -> None:
    """Little-endian checkpoint: dim, n_eps, values, interleaved re/im vectors."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qq", sel.basis.dim, sel.n_states))
        sel.values.astype("<f8").tofile(fh)
        np.ascontiguousarray(sel.vectors, dtype="<c16").T.tofile(fh)


def load_selection(path, basis: SectorBasis) -> EigenSelection:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise SolverError(f"{path} is not an eigenpair checkpoint")
        dim, n = struct.unpack("<qq", fh.read(16))
        if dim != basis.dim:
            raise SolverError(f"checkpoint dim {dim} does not match sector dim {basis.dim}")
        values = np.fromfile(fh, dtype="<f8", count=n)
        vectors = np.fromfile(fh, dtype="<c16", count=dim * n).reshape(n, dim).T
    target = 0.5 * (float(values.min()) + float(values.max())) if n else 0.0
    return EigenSelection(
        basis=basis,
        values=values,
        vectors=np.ascontiguousarray(vectors),
        target_energy=target,
        solver="checkpoint",
        residual_norms=None,
    )
