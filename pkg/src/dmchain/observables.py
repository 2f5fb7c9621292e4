"""Level statistics, zz correlators, and the quenched-averaging engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SectorBasis

__all__ = [
    "CorrelatorProfile",
    "SweepRecord",
    "block_standard_error",
    "correlator_profile",
    "gap_ratios",
    "mean_gap_ratio",
    "quenched_average",
    "zz_correlator",
    "zz_correlator_matrix",
]

LOG_CLAMP = 1e-14
DEGENERACY_TOL = 1e-12

# reference mean gap ratios of the random-matrix ensembles and of
# uncorrelated (Poisson) spectra
MEAN_R_GOE = 0.5307
MEAN_R_GUE = 0.5996
MEAN_R_POISSON = 0.3863


def gap_ratios(energies) -> np.ndarray:
    """Ratios min/max of consecutive level spacings, one per interior level."""
    e = np.asarray(energies, dtype=np.float64)
    if e.ndim != 1 or len(e) < 3:
        raise ValueError(f"need at least 3 energies, got shape {e.shape}")
    gaps = np.diff(e)
    if np.any(gaps <= 0):
        raise ValueError("energies must be strictly increasing")
    return np.minimum(gaps[1:], gaps[:-1]) / np.maximum(gaps[1:], gaps[:-1])


def mean_gap_ratio(energies, degeneracy_tol: float = DEGENERACY_TOL) -> float:
    """Mean gap ratio after merging numerically degenerate levels."""
    e = np.sort(np.asarray(energies, dtype=np.float64))
    keep = np.concatenate(([True], np.diff(e) > degeneracy_tol))
    return float(np.mean(gap_ratios(e[keep])))


def _diagonal_moments(vectors: np.ndarray, basis: SectorBasis):
    """Per-state <Sz_i> and <Sz_i Sz_j> from amplitude weights."""
    szs = basis.sz_table()
    weights = np.abs(np.asarray(vectors)) ** 2
    single = szs.T @ weights
    double = np.einsum("di,dn,dj->nij", szs, weights, szs, optimize=True)
    return single, double


def zz_correlator(state, i: int, j: int) -> float:
    """Connected <Sz_i Sz_j> - <Sz_i><Sz_j> in one eigenstate."""
    if i == j:
        raise ValueError("correlator needs two distinct sites")
    szs = state.basis.sz_table()
    w = np.abs(state.amplitudes) ** 2
    mi = float(szs[:, i] @ w)
    mj = float(szs[:, j] @ w)
    return float((szs[:, i] * szs[:, j]) @ w) - mi * mj


def zz_correlator_matrix(vectors: np.ndarray, basis: SectorBasis) -> np.ndarray:
    """Connected correlator matrices, shape (n_states, N, N)."""
    single, double = _diagonal_moments(vectors, basis)
    return double - np.einsum("in,jn->nij", single, single)


@dataclass(frozen=True)
class CorrelatorProfile:
    """Distance-resolved average of ln|C^zz| over pairs and states."""

    distances: np.ndarray
    mean_log_abs: np.ndarray
    boundary: str
    n_states: int


def correlator_profile(vectors: np.ndarray, basis: SectorBasis, boundary: str) -> CorrelatorProfile:
    """ln|C^zz| averaged over all site pairs at each separation, then states.

    Periodic distances run 1..N/2 with ring separation; open distances run
    1..N-1 over all in-chain pairs.  |C| below the clamp floor is clamped
    before the logarithm so product states stay finite.
    """
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[1] == 0:
        raise ValueError("need a (dim, n_states) block with at least one state")
    n = basis.n_sites
    corr = zz_correlator_matrix(vectors, basis)
    logs = np.log(np.maximum(np.abs(corr), LOG_CLAMP))
    if boundary == "periodic":
        distances = np.arange(1, n // 2 + 1)
        pairs = [
            [(i, (i + r) % n) for i in range(n)] if 2 * r != n
            else [(i, i + r) for i in range(n // 2)]
            for r in distances
        ]
    elif boundary == "open":
        distances = np.arange(1, n)
        pairs = [[(i, i + r) for i in range(n - r)] for r in distances]
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    mean_log = np.array(
        [np.mean([logs[:, i, j] for i, j in pr]) for pr in pairs]
    )
    return CorrelatorProfile(
        distances=distances,
        mean_log_abs=mean_log,
        boundary=boundary,
        n_states=vectors.shape[1],
    )


def block_standard_error(values) -> tuple[float, str]:
    """Standard error of the mean of per-realization values.

    With at least 10 realizations: standard deviation of 10 consecutive block
    means.  Below that the block method degenerates and the per-realization
    standard error is used instead (flagged in the method label).
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n >= 10:
        blocks = np.array_split(values, 10)
        means = np.array([np.mean(b) for b in blocks])
        return float(np.std(means, ddof=1)), "block10"
    if n >= 2:
        return float(np.std(values, ddof=1) / np.sqrt(n)), "per_realization"
    return 0.0, "single"


@dataclass
class SweepRecord:
    """Quenched average of one observable at one parameter point."""

    n_sites: int
    h: float
    d_two: float
    d_three: float
    observable: str
    mean: float
    stderr: float
    n_eps: int
    n_r: int
    master_seed: int
    stderr_method: str = "block10"
    n_failed: int = 0


def quenched_average(
    observable,
    realizations,
    seeds,
    *,
    n_sites: int,
    h: float,
    d_two: float,
    d_three: float,
    n_eps: int,
    master_seed: int,
    label: str,
) -> SweepRecord:
    """Serial reference engine: average an observable over disorder realizations.

    observable maps an EigenSelection to a scalar or a vector of per-state
    samples (vectors are averaged within the realization first, so states and
    realizations enter exactly as two nested means).  realizations maps a seed
    to an EigenSelection.
    """
    per_real = np.empty(len(seeds))
    for k, seed in enumerate(seeds):
        samples = np.asarray(observable(realizations(seed)), dtype=np.float64)
        per_real[k] = np.mean(samples)
    stderr, method = block_standard_error(per_real)
    return SweepRecord(
        n_sites=n_sites,
        h=h,
        d_two=d_two,
        d_three=d_three,
        observable=label,
        mean=float(np.mean(per_real)),
        stderr=stderr,
        n_eps=n_eps,
        n_r=len(seeds),
        master_seed=master_seed,
        stderr_method=method,
    )
