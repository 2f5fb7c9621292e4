"""Chebyshev time evolution of the Neel quench and its entanglement series.

The propagator expands e^{-iHt} in Chebyshev polynomials of the rescaled
Hamiltonian with Bessel-function coefficients; each log-grid interval is one
expansion whose order adapts to a*dt, and the evolved state is re-used across
intervals so the total matrix-vector count scales with t_max once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import ceil, log10

import numpy as np
import scipy.special

from . import entanglement, kernels
from .eigensolve import SpectralBounds, extremal_bounds
from .model import (
    CouplingParams,
    SectorState,
    build_hamiltonian,
    sample_disorder,
    sector_basis,
)

__all__ = [
    "PropagationError",
    "QuenchSeries",
    "TimeGrid",
    "aggregate_quench",
    "chebyshev_propagate",
    "evolve_ggm_series",
    "ggm_trajectory",
    "neel_state",
    "quench_realization",
    "steady_state_value",
]

log = logging.getLogger(__name__)

DEFAULT_EPS_M = 1e-10
ORDER_CAP = 10**6
NORM_DRIFT_LIMIT = 1e-6


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing positive times, usually log-spaced."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("time grid must be a nonempty 1d array")
        if t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be positive and strictly increasing")

    @classmethod
    def log_grid(
        cls, t_min: float = 1e-2, t_max: float = 1e5, points_per_decade: int = 20
    ) -> "TimeGrid":
        if not 0 < t_min < t_max:
            raise ValueError(f"need 0 < t_min < t_max, got ({t_min}, {t_max})")
        n = int(round(points_per_decade * log10(t_max / t_min))) + 1
        return cls(np.geomspace(t_min, t_max, n))

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)


def neel_state(basis) -> SectorState:
    """Alternating product state: site 0 down, site 1 up, and so on."""
    if basis.n_sites % 2 or basis.sz != 0:
        raise ValueError("alternating initial state needs the Sz=0 sector of an even chain")
    encoding = sum(1 << k for k in range(1, basis.n_sites, 2))
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index_of(encoding)] = 1.0
    return SectorState(basis, amps)


def _final_order(z: float, eps_m: float) -> int:
    order = max(30, ceil(2.0 * z))
    while order < ORDER_CAP and 2.0 * abs(scipy.special.jv(order, z)) >= eps_m:
        order += max(10, order // 10)
    return order


def chebyshev_propagate(
    op,
    bounds: SpectralBounds,
    amplitudes: np.ndarray,
    dt: float,
    eps_m: float = DEFAULT_EPS_M,
) -> np.ndarray:
    """One expansion step: amplitudes advanced by dt under exp(-iHt).

    Coefficient n is 2^min(1,n) (-i)^n J_n(a dt) with the global phase
    e^{-ib dt}; the order starts at max(30, ceil(2 a dt)) and grows until the
    first dropped term satisfies |a_L| ||v_L|| < eps_m.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    a, b = bounds.half_width, bounds.center
    inv_a = 1.0 / a
    z = a * dt
    order = _final_order(z, eps_m)
    if order >= ORDER_CAP:
        raise PropagationError(
            f"expansion order exceeds {ORDER_CAP} at a*dt={z:.3g}; split the step"
        )
    coef = scipy.special.jv(np.arange(order + 2), z)
    cycle = (1.0, -1.0j, -1.0, 1.0j)

    v_prev = np.ascontiguousarray(amplitudes, dtype=np.complex128).copy()
    y = coef[0] * v_prev
    v_cur = kernels.norm_apply(op, inv_a, b, v_prev, out=np.empty_like(v_prev))
    y += (2.0 * coef[1] * cycle[1]) * v_cur
    n = 1
    while True:
        while n < order:
            n += 1
            kernels.cheb_step(op, inv_a, b, v_cur, v_prev, out=v_prev)
            v_prev, v_cur = v_cur, v_prev
            c = coef[n]
            if c != 0.0:
                y += (2.0 * c * cycle[n % 4]) * v_cur
        # first dropped term, with the true vector norm
        if 2.0 * abs(coef[order + 1]) * float(np.linalg.norm(v_cur)) < eps_m:
            break
        grown = min(ORDER_CAP, order + max(10, order // 10))
        if grown == order:
            raise PropagationError(f"expansion did not terminate below order {ORDER_CAP}")
        coef = np.concatenate(
            [coef, scipy.special.jv(np.arange(order + 2, grown + 2), z)]
        )
        order = grown
    y *= np.exp(-1j * b * dt)
    return y


def ggm_trajectory(
    op,
    bounds: SpectralBounds,
    initial: SectorState,
    grid: TimeGrid,
    eps_m: float = DEFAULT_EPS_M,
    ggm_mode: str = "single_site",
) -> np.ndarray:
    """Entanglement measure at every grid time for one evolved state."""
    basis = initial.basis
    amps = initial.amplitudes
    previous_t = 0.0
    values = np.empty(len(grid))
    for k, t in enumerate(grid.times):
        amps = chebyshev_propagate(op, bounds, amps, t - previous_t, eps_m)
        previous_t = t
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_DRIFT_LIMIT:
            raise PropagationError(f"norm drifted to {norm:.12f} at t={t:.4g}")
        values[k] = entanglement.ggm_values(amps[:, None], basis, ggm_mode)[0]
    return values


def quench_realization(
    n_sites: int,
    h: float,
    params: CouplingParams,
    grid: TimeGrid,
    seed: int,
    eps_m: float = DEFAULT_EPS_M,
    ggm_mode: str = "single_site",
) -> np.ndarray:
    """One disorder realization of the quench: draw fields, evolve, measure."""
    if params.boundary != "open":
        raise ValueError("quench evolution is defined with open boundaries")
    basis = sector_basis(n_sites)
    field = sample_disorder(n_sites, h, seed)
    op = build_hamiltonian(basis, params, field)
    bounds = extremal_bounds(op)
    initial = neel_state(basis)
    energy = float(np.real(initial.amplitudes.conj() @ kernels.matvec(op, initial.amplitudes)))
    span = bounds.e_max - bounds.e_min
    if abs(energy - bounds.center) > 0.1 * span:
        log.warning(
            "initial state energy %.4f outside the central 20%% of [%.4f, %.4f] (seed %d)",
            energy, bounds.e_min, bounds.e_max, seed,
        )
    return ggm_trajectory(op, bounds, initial, grid, eps_m, ggm_mode)


@dataclass
class QuenchSeries:
    """Disorder-averaged entanglement time series for one parameter point."""

    times: np.ndarray
    mean_ggm: np.ndarray
    stderr: np.ndarray
    n_realizations: int
    n_sites: int
    h: float
    d_two: float
    d_three: float
    ggm_mode: str
    master_seed: int


def aggregate_quench(series_matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-time standard error over the realization axis."""
    series_matrix = np.asarray(series_matrix, dtype=np.float64)
    n = series_matrix.shape[0]
    mean = np.mean(series_matrix, axis=0)
    if n >= 2:
        stderr = np.std(series_matrix, axis=0, ddof=1) / np.sqrt(n)
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr


def evolve_ggm_series(
    n_sites: int,
    h: float,
    params: CouplingParams,
    grid: TimeGrid,
    seeds,
    master_seed: int = 0,
    eps_m: float = DEFAULT_EPS_M,
    ggm_mode: str = "single_site",
) -> QuenchSeries:
    """Serial reference loop over disorder realizations."""
    rows = np.empty((len(seeds), len(grid)))
    for k, seed in enumerate(seeds):
        try:
            rows[k] = quench_realization(n_sites, h, params, grid, seed, eps_m, ggm_mode)
        except PropagationError as exc:
            raise PropagationError(f"realization {k} (seed {seed}): {exc}") from exc
    mean, stderr = aggregate_quench(rows)
    return QuenchSeries(
        times=grid.times,
        mean_ggm=mean,
        stderr=stderr,
        n_realizations=len(seeds),
        n_sites=n_sites,
        h=h,
        d_two=params.D,
        d_three=params.Dprime,
        ggm_mode=ggm_mode,
        master_seed=master_seed,
    )


def steady_state_value(
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float | None] = (1e4, None),
) -> tuple[float, int]:
    """Time average over grid points inside the window: (value, point count)."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    lo, hi = window
    if hi is None:
        hi = times[-1]
    mask = (times >= lo) & (times <= hi)
    if not np.any(mask):
        raise ValueError(f"no grid points inside the window [{lo}, {hi}]")
    return float(np.mean(values[mask])), int(np.sum(mask))
