"""Multipartite entanglement of sector states.

The genuine-multipartite measure used here is 1 minus the largest squared
Schmidt coefficient over bipartitions of the chain.  Exact mode sweeps every
bipartition once (complement-symmetric cuts visited through a canonical half);
single-site mode restricts the maximization to one-site-vs-rest cuts, which for
magnetization eigenstates reduces to site occupation probabilities.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np

from . import kernels
from .model import SectorBasis, SectorState

__all__ = [
    "Bipartition",
    "GgmHistogram",
    "GgmResult",
    "canonical_bipartitions",
    "ggm",
    "ggm_histogram",
    "ggm_values",
    "max_schmidt_sq",
    "reduced_density_matrix",
    "single_site_probabilities",
]

GGM_EXACT_MAX_SITES = 14
RDM_MAX_SITES = 14
_VALUE_FLOOR = 1e-12


@dataclass(frozen=True)
class Bipartition:
    """One side of a cut; the complement is implied."""

    sites: tuple[int, ...]
    n_sites: int

    def __post_init__(self):
        sites = tuple(sorted(int(s) for s in self.sites))
        object.__setattr__(self, "sites", sites)
        if not 0 < len(sites) < self.n_sites:
            raise ValueError(f"bipartition must be a nonempty strict subset, got {sites}")
        if len(set(sites)) != len(sites):
            raise ValueError(f"duplicate sites in bipartition {sites}")
        if sites[0] < 0 or sites[-1] >= self.n_sites:
            raise ValueError(f"sites {sites} outside chain of {self.n_sites}")

    @property
    def complement(self) -> tuple[int, ...]:
        members = set(self.sites)
        return tuple(k for k in range(self.n_sites) if k not in members)


@lru_cache(maxsize=8)
def _canonical_cuts(n_sites: int) -> tuple[Bipartition, ...]:
    cuts = []
    for a in range(1, n_sites // 2 + 1):
        balanced = 2 * a == n_sites
        for combo in itertools.combinations(range(n_sites), a):
            if balanced and combo[0] != 0:
                continue
            cuts.append(Bipartition(combo, n_sites))
    assert len(cuts) == 2 ** (n_sites - 1) - 1
    return tuple(cuts)


def canonical_bipartitions(n_sites: int) -> list[Bipartition]:
    """Every cut once: |A| <= N/2, and site 0 in A for the balanced size."""
    return list(_canonical_cuts(n_sites))


@dataclass
class PlanChunk:
    """Flat cut data for one batch of bipartitions, laid out for the kernels.

    Entries of cut c occupy [offsets[c], offsets[c+1]); within a cut they are
    sorted by environment configuration, relabeled to dense group ids, so each
    group is one column of that cut's amplitude matrix.
    """

    cut_start: int
    row_small: np.ndarray
    group_id: np.ndarray
    order: np.ndarray
    offsets: np.ndarray
    d_small: np.ndarray
    n_groups: np.ndarray

    @property
    def n_cuts(self) -> int:
        return len(self.d_small)


_PLAN_CACHE: dict[tuple[int, int], list[PlanChunk]] = {}
_PLAN_CHUNK_ENTRIES = 2_500_000


def _build_plan(basis: SectorBasis) -> list[PlanChunk]:
    bits = basis.bit_table()
    dim = basis.dim
    cuts = _canonical_cuts(basis.n_sites)
    per_chunk = max(1, _PLAN_CHUNK_ENTRIES // dim)
    chunks = []
    for start in range(0, len(cuts), per_chunk):
        batch = cuts[start : start + per_chunk]
        rows, gids, orders, offsets, dims, counts = [], [], [], [0], [], []
        for cut in batch:
            a_sites = np.array(cut.sites)
            b_sites = np.array(cut.complement)
            row = bits[:, a_sites].astype(np.int64) @ (1 << np.arange(len(a_sites)))
            env = bits[:, b_sites].astype(np.int64) @ (1 << np.arange(len(b_sites)))
            order = np.argsort(env, kind="stable")
            env = env[order]
            dense = np.cumsum(np.concatenate(([0], (np.diff(env) != 0).astype(np.int64))))
            rows.append(row[order].astype(np.int32))
            gids.append(dense.astype(np.int32))
            orders.append(order.astype(np.int32))
            offsets.append(offsets[-1] + dim)
            dims.append(2 ** len(a_sites))
            counts.append(int(dense[-1]) + 1)
        chunks.append(
            PlanChunk(
                cut_start=start,
                row_small=np.ascontiguousarray(np.concatenate(rows)),
                group_id=np.ascontiguousarray(np.concatenate(gids)),
                order=np.ascontiguousarray(np.concatenate(orders)),
                offsets=np.array(offsets, dtype=np.int64),
                d_small=np.array(dims, dtype=np.int32),
                n_groups=np.array(counts, dtype=np.int32),
            )
        )
    return chunks


def _plan_for(basis: SectorBasis) -> list[PlanChunk]:
    key = (basis.n_sites, basis.sz)
    if key not in _PLAN_CACHE:
        if len(_PLAN_CACHE) >= 4:
            _PLAN_CACHE.pop(next(iter(_PLAN_CACHE)))
        _PLAN_CACHE[key] = _build_plan(basis)
    return _PLAN_CACHE[key]


def _as_sites(part, n_sites: int) -> Bipartition:
    if isinstance(part, Bipartition):
        return part
    return Bipartition(tuple(part), n_sites)


def _amplitude_matrix(state: SectorState, sites: tuple[int, ...]) -> np.ndarray:
    """Amplitudes rearranged to a 2^|A| x 2^|B| matrix for the given cut."""
    basis = state.basis
    bits = basis.bit_table()
    part = _as_sites(sites, basis.n_sites)
    a_sites = np.array(part.sites)
    b_sites = np.array(part.complement)
    row = bits[:, a_sites].astype(np.int64) @ (1 << np.arange(len(a_sites)))
    col = bits[:, b_sites].astype(np.int64) @ (1 << np.arange(len(b_sites)))
    mat = np.zeros((2 ** len(a_sites), 2 ** len(b_sites)), dtype=np.complex128)
    mat[row, col] = state.amplitudes
    return mat


def reduced_density_matrix(state: SectorState, part) -> np.ndarray:
    """Partial trace of |psi><psi| over the complement of the given sites."""
    part = _as_sites(part, state.basis.n_sites)
    if len(part.sites) > RDM_MAX_SITES:
        raise ValueError(
            f"reduced matrix over {len(part.sites)} sites exceeds the "
            f"{RDM_MAX_SITES}-site memory guard"
        )
    mat = _amplitude_matrix(state, part)
    return mat @ mat.conj().T


def max_schmidt_sq(state: SectorState, part) -> float:
    """Largest squared Schmidt coefficient across the cut (side-symmetric)."""
    part = _as_sites(part, state.basis.n_sites)
    n = state.basis.n_sites
    small = part if len(part.sites) <= n - len(part.sites) else Bipartition(part.complement, n)
    rho = reduced_density_matrix(state, small)
    return float(np.linalg.eigvalsh(rho)[-1])


def single_site_probabilities(state: SectorState) -> np.ndarray:
    """Occupation probability p_k of the up state at each site."""
    weights = np.abs(state.amplitudes) ** 2
    return state.basis.bit_table().astype(np.float64).T @ weights


@dataclass(frozen=True)
class GgmResult:
    value: float
    mode: str
    argmax_partition: Bipartition
    lambda_sq: float

    def __post_init__(self):
        if not -_VALUE_FLOOR <= self.value < 1.0:
            raise ValueError(f"measure value {self.value} outside [0, 1)")


def _clamp(value: float) -> float:
    return 0.0 if value < _VALUE_FLOOR else value


def _exact_lambda_sq(amps: np.ndarray, basis: SectorBasis) -> tuple[float, int]:
    best = -1.0
    best_cut = 0
    for chunk in _plan_for(basis):
        val, cut = kernels.ggm_cut_sweep(amps, chunk)
        if val > best:
            best = val
            best_cut = chunk.cut_start + cut
    return best, best_cut


def ggm(state: SectorState, mode: str = "exact") -> GgmResult:
    """Genuine multipartite entanglement of a sector state.

    exact         1 - max lambda^2 over all bipartitions (N <= 14 guard)
    single_site   same with the maximization restricted to single-site cuts;
                  magnetization symmetry makes each single-site reduced matrix
                  diagonal, so only occupation probabilities are needed
    """
    basis = state.basis
    if mode == "exact":
        if basis.n_sites > GGM_EXACT_MAX_SITES:
            raise ValueError(
                f"exact mode sweeps 2^(N-1)-1 cuts; N={basis.n_sites} exceeds "
                f"the {GGM_EXACT_MAX_SITES}-site guard"
            )
        lam, cut_index = _exact_lambda_sq(state.amplitudes, basis)
        cut = _canonical_cuts(basis.n_sites)[cut_index]
        return GgmResult(_clamp(1.0 - lam), "exact", cut, lam)
    if mode == "single_site":
        p = single_site_probabilities(state)
        lam_per_site = np.maximum(p, 1.0 - p)
        site = int(np.argmax(lam_per_site))
        lam = float(lam_per_site[site])
        return GgmResult(_clamp(1.0 - lam), "single_site", Bipartition((site,), basis.n_sites), lam)
    raise ValueError(f"unknown mode {mode!r}, expected 'exact' or 'single_site'")


def ggm_values(vectors: np.ndarray, basis: SectorBasis, mode: str = "exact") -> np.ndarray:
    """Measure per column of a (dim, n) block of state vectors."""
    vectors = np.asarray(vectors)
    if mode == "single_site":
        probs = basis.bit_table().astype(np.float64).T @ (np.abs(vectors) ** 2)
        lam = np.maximum(probs, 1.0 - probs).max(axis=0)
        return np.where(1.0 - lam < _VALUE_FLOOR, 0.0, 1.0 - lam)
    if mode == "exact":
        out = np.empty(vectors.shape[1])
        for j in range(vectors.shape[1]):
            amps = np.ascontiguousarray(vectors[:, j], dtype=np.complex128)
            lam, _ = _exact_lambda_sq(amps, basis)
            out[j] = _clamp(1.0 - lam)
        return out
    raise ValueError(f"unknown mode {mode!r}, expected 'exact' or 'single_site'")


@dataclass(frozen=True)
class GgmHistogram:
    """Mass-normalized distribution over bins of width 2*eps from 0."""

    centers: np.ndarray
    masses: np.ndarray
    eps: float
    n_samples: int


def ggm_histogram(samples, eps: float = 5e-3) -> GgmHistogram:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("histogram needs at least one sample")
    if eps <= 0:
        raise ValueError(f"bin half-width must be positive, got {eps}")
    if samples.min() < -_VALUE_FLOOR or samples.max() > 0.5 + _VALUE_FLOOR:
        raise ValueError("samples outside [0, 1/2]")
    n_bins = ceil((0.5 + 2.0 * eps) / (2.0 * eps))
    edges = 2.0 * eps * np.arange(n_bins + 1)
    counts, _ = np.histogram(np.clip(samples, 0.0, None), bins=edges)
    return GgmHistogram(
        centers=edges[:-1] + eps,
        masses=counts / samples.size,
        eps=eps,
        n_samples=samples.size,
    )
