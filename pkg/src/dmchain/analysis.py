"""Finite-size scaling collapse and the transient/steady fits of the quench."""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite

import numpy as np
import scipy.optimize

__all__ = [
    "ALPHA_THRESHOLD",
    "AnalysisError",
    "CollapseFit",
    "ScalingDataset",
    "SteadyFit",
    "TransientFit",
    "correlation_length",
    "crossing_point",
    "fss_cost",
    "fss_fit",
    "scaled_variable",
    "steady_scaling_fit",
    "transient_fit",
]

# growth-rate value separating slow-growth from frozen transients
ALPHA_THRESHOLD = 0.0025


class AnalysisError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingDataset:
    """One observable tabulated over system sizes and disorder strengths."""

    n_sites: np.ndarray
    h: np.ndarray
    value: np.ndarray
    observable: str = "observable"

    def __post_init__(self):
        n = np.asarray(self.n_sites, dtype=np.int64)
        h = np.asarray(self.h, dtype=np.float64)
        v = np.asarray(self.value, dtype=np.float64)
        if not len(n) == len(h) == len(v):
            raise ValueError("size, disorder, and value columns must align")
        if not np.all(np.isfinite(h)) or not np.all(np.isfinite(v)):
            raise ValueError("non-finite entries in scaling dataset")
        if len(np.unique(n)) < 2:
            raise AnalysisError("collapse needs at least two distinct system sizes")
        for size in np.unique(n):
            if len(np.unique(h[n == size])) < 5:
                raise AnalysisError(f"need at least 5 disorder points per size, N={size}")
        object.__setattr__(self, "n_sites", n)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "value", v)

    @classmethod
    def from_records(cls, records, observable: str) -> "ScalingDataset":
        rows = [r for r in records if r.observable == observable]
        if not rows:
            raise AnalysisError(f"no records for observable {observable!r}")
        return cls(
            n_sites=np.array([r.n_sites for r in rows]),
            h=np.array([r.h for r in rows]),
            value=np.array([r.mean for r in rows]),
            observable=observable,
        )


def correlation_length(h: float, h_star: float, nu: float) -> float:
    """Diverging length scale 1/|h - h*|^nu."""
    if nu <= 0:
        raise ValueError(f"exponent must be positive, got {nu}")
    if h == h_star:
        raise AnalysisError("correlation length diverges at the critical point")
    return 1.0 / abs(h - h_star) ** nu


def scaled_variable(n_sites, h, h_star: float, nu: float) -> np.ndarray:
    """Signed collapse coordinate sgn(h - h*) N |h - h*|^nu."""
    n = np.asarray(n_sites, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return np.sign(h - h_star) * n * np.abs(h - h_star) ** nu


def fss_cost(dataset: ScalingDataset, h_star: float, nu: float) -> float:
    """Collapse quality: total variation of the sorted values over their range, minus 1.

    Zero for data that become monotone when sorted by the scaled coordinate.
    """
    u = scaled_variable(dataset.n_sites, dataset.h, h_star, nu)
    order = np.lexsort((dataset.h, dataset.n_sites, u))
    x = dataset.value[order]
    span = x.max() - x.min()
    if span <= 0:
        raise AnalysisError("constant observable; collapse cost undefined")
    return float(np.sum(np.abs(np.diff(x))) / span - 1.0)


@dataclass(frozen=True)
class CollapseFit:
    observable: str
    h_star: float
    nu: float
    cost: float
    grid_h_star: np.ndarray
    grid_nu: np.ndarray
    grid_cost: np.ndarray
    refined: bool


def fss_fit(
    dataset: ScalingDataset,
    h_star_bounds: tuple[float, float] = (0.5, 12.0),
    nu_bounds: tuple[float, float] = (0.3, 3.0),
    grid_step: float = 0.1,
) -> CollapseFit:
    """Coarse grid scan of the cost surface, then simplex refinement.

    Grid ties resolve to the smallest h_star, then the smallest nu; the
    refinement is kept only when it improves on the grid optimum inside the
    bounds.
    """
    h_grid = np.round(
        np.arange(round(h_star_bounds[0] / grid_step), round(h_star_bounds[1] / grid_step) + 1)
        * grid_step,
        10,
    )
    nu_grid = np.round(
        np.arange(round(nu_bounds[0] / grid_step), round(nu_bounds[1] / grid_step) + 1)
        * grid_step,
        10,
    )
    surface = np.empty((len(h_grid), len(nu_grid)))
    for i, hs in enumerate(h_grid):
        for j, nu in enumerate(nu_grid):
            surface[i, j] = fss_cost(dataset, hs, nu)
    if surface.max() - surface.min() < 1e-6:
        raise AnalysisError("flat collapse cost surface; data carry no size dependence")
    flat = int(np.argmin(surface))
    i0, j0 = divmod(flat, len(nu_grid))
    best = (float(h_grid[i0]), float(nu_grid[j0]), float(surface[i0, j0]))

    result = scipy.optimize.minimize(
        lambda p: fss_cost(dataset, p[0], p[1]),
        x0=np.array(best[:2]),
        method="Nelder-Mead",
        bounds=[h_star_bounds, nu_bounds],
        options={"xatol": 1e-4, "fatol": 1e-10, "maxiter": 400},
    )
    refined = bool(result.success) and isfinite(result.fun) and result.fun < best[2]
    if refined:
        h_star, nu, cost = float(result.x[0]), float(result.x[1]), float(result.fun)
    else:
        h_star, nu, cost = best
    return CollapseFit(
        observable=dataset.observable,
        h_star=h_star,
        nu=nu,
        cost=cost,
        grid_h_star=h_grid,
        grid_nu=nu_grid,
        grid_cost=surface,
        refined=refined,
    )


@dataclass(frozen=True)
class TransientFit:
    """Slope of the series against ln t, under the unit-amplitude convention."""

    alpha: float
    offset: float
    window: tuple[float, float]
    rms_residual: float
    n_points: int


def transient_fit(
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float] = (2.0, 1e3),
) -> TransientFit:
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    mask = (times >= window[0]) & (times <= window[1])
    if int(np.sum(mask)) < 10:
        raise AnalysisError(f"fewer than 10 grid points inside the window {window}")
    x = np.log(times[mask])
    y = values[mask]
    design = np.column_stack([x, np.ones_like(x)])
    (alpha, offset), *_ = np.linalg.lstsq(design, y, rcond=None)
    rms = float(np.sqrt(np.mean((design @ [alpha, offset] - y) ** 2)))
    return TransientFit(
        alpha=float(alpha),
        offset=float(offset),
        window=(float(window[0]), float(window[1])),
        rms_residual=rms,
        n_points=int(np.sum(mask)),
    )


@dataclass(frozen=True)
class SteadyFit:
    """Saturation-value scaling c N^beta + d across system sizes."""

    coeff: float
    beta: float
    offset: float
    rms_residual: float
    plateau: bool


def steady_scaling_fit(sizes, values) -> SteadyFit:
    sizes = np.asarray(sizes, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(np.unique(sizes)) < 3:
        raise AnalysisError("scaling fit needs at least 3 distinct sizes")
    spread = values.max() - values.min()
    scale = max(float(np.abs(values).mean()), 1e-30)
    if spread / scale < 1e-3:
        d = float(values.mean())
        rms = float(np.sqrt(np.mean((values - d) ** 2)))
        return SteadyFit(coeff=0.0, beta=0.0, offset=d, rms_residual=rms, plateau=True)

    def residual(p):
        c, beta, d = p
        return c * sizes**beta + d - values

    best = None
    for frac in (0.05, 0.5, 2.0):
        d0 = values.min() - frac * spread
        shifted = values - d0
        slope, intercept = np.polyfit(np.log(sizes), np.log(shifted), 1)
        x0 = np.array(
            [np.clip(np.exp(intercept), 1e-12, 1e6), np.clip(slope, -9.0, 9.0), d0]
        )
        try:
            fit = scipy.optimize.least_squares(
                residual,
                x0,
                bounds=([0.0, -10.0, -np.inf], [np.inf, 10.0, np.inf]),
                max_nfev=2000,
            )
        except ValueError:
            continue
        if fit.success and (best is None or fit.cost < best.cost):
            best = fit
    if best is None:
        raise AnalysisError("saturation scaling fit did not converge from any start")
    c, beta, d = best.x
    rms = float(np.sqrt(np.mean(best.fun**2)))
    return SteadyFit(coeff=float(c), beta=float(beta), offset=float(d), rms_residual=rms, plateau=False)


def crossing_point(x: np.ndarray, y: np.ndarray, level: float) -> float:
    """Abscissa where the series first crosses the level, linearly interpolated."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need two aligned arrays with at least 2 points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("abscissae must be strictly increasing")
    d = y - level
    for k in range(len(x) - 1):
        if d[k] == 0.0:
            return float(x[k])
        if d[k] * d[k + 1] < 0:
            frac = d[k] / (d[k] - d[k + 1])
            return float(x[k] + frac * (x[k + 1] - x[k]))
    if d[-1] == 0.0:
        return float(x[-1])
    raise AnalysisError(f"series never crosses {level} on the given range")
