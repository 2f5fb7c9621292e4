"""Spin-1/2 chain model: magnetization-sector basis and Hamiltonian assembly.

The chain couples nearest-neighbour Heisenberg exchange, a chiral two-site
(Dzyaloshinskii-Moriya) term, a chiral three-site term acting on
next-nearest-neighbour pairs through the intervening spin, and a random
longitudinal field.  All couplings are measured in units of the exchange J.

Basis convention: a sector state is a bit pattern where bit k = 1 means spin
up at site k, site 0 sits in the lowest bit, and the sector list is sorted by
ascending integer encoding.  Spin operators are S = sigma/2.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse

__all__ = [
    "CouplingParams",
    "DisorderField",
    "SectorBasis",
    "SectorState",
    "SparseHermitianOperator",
    "build_hamiltonian",
    "sample_disorder",
    "sector_basis",
]

BOUNDARIES = ("periodic", "open")


@dataclass(frozen=True)
class CouplingParams:
    """Dimensionless couplings of the chain (everything in units of J)."""

    J: float = 1.0
    D: float = 0.0
    Dprime: float = 0.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.J <= 0:
            raise ValueError(f"exchange must be positive, got J={self.J}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def is_real(self) -> bool:
        """True when the Hamiltonian matrix is purely real (no chiral terms)."""
        return self.D == 0.0 and self.Dprime == 0.0


class SectorBasis:
    """Computational basis of a fixed total-magnetization sector."""

    def __init__(self, n_sites: int, sz: int = 0):
        if n_sites < 2:
            raise ValueError(f"need at least 2 sites, got {n_sites}")
        # odd chains round the default sector down to floor(N/2) up spins
        n_up = n_sites // 2 + sz
        if not 0 <= n_up <= n_sites:
            raise ValueError(f"sector Sz={sz} empty for N={n_sites}")
        self.n_sites = n_sites
        self.sz = sz
        self.n_up = n_up
        states = np.arange(1 << n_sites, dtype=np.uint64)
        popcount = np.zeros(states.shape, dtype=np.uint64)
        for k in range(n_sites):
            popcount += (states >> np.uint64(k)) & np.uint64(1)
        self.states = states[popcount == n_up]
        self.states.setflags(write=False)
        self._bits = None
        self._szs = None

    @property
    def dim(self) -> int:
        return len(self.states)

    def index_of(self, encoding) -> np.ndarray | np.intp:
        """Position of encoding(s) in the sector list (binary search)."""
        idx = np.searchsorted(self.states, np.asarray(encoding, dtype=np.uint64))
        if not np.all(self.states[idx] == np.asarray(encoding, dtype=np.uint64)):
            raise KeyError("encoding outside this magnetization sector")
        return idx

    def bit_table(self) -> np.ndarray:
        """(dim, N) table of site occupations, bit k = 1 for spin up."""
        if self._bits is None:
            shifts = np.arange(self.n_sites, dtype=np.uint64)
            bits = (self.states[:, None] >> shifts[None, :]) & np.uint64(1)
            self._bits = bits.astype(np.uint8)
            self._bits.setflags(write=False)
        return self._bits

    def sz_table(self) -> np.ndarray:
        """(dim, N) table of S^z eigenvalues, +-1/2."""
        if self._szs is None:
            self._szs = self.bit_table().astype(np.float64) - 0.5
            self._szs.setflags(write=False)
        return self._szs

    def __repr__(self):
        return f"SectorBasis(n_sites={self.n_sites}, sz={self.sz}, dim={self.dim})"


@functools.lru_cache(maxsize=8)
def sector_basis(n_sites: int, sz: int = 0) -> SectorBasis:
    """Cached sector basis; dim = C(N, N/2 + Sz)."""
    basis = SectorBasis(n_sites, sz)
    assert basis.dim == comb(n_sites, basis.n_up)
    return basis


@dataclass(frozen=True)
class DisorderField:
    """One realization of the random longitudinal field, h_k in [-h, h]."""

    h_max: float
    values: np.ndarray
    seed: int

    def __post_init__(self):
        if self.h_max < 0:
            raise ValueError(f"disorder strength must be >= 0, got {self.h_max}")
        vals = np.asarray(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if np.any(np.abs(vals) > self.h_max + 1e-12):
            raise ValueError("field values exceed the disorder strength")


def sample_disorder(n_sites: int, h_max: float, seed: int) -> DisorderField:
    """Draw a uniform field realization from a PCG64 stream (reproducible)."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(-h_max, h_max, size=n_sites) if h_max > 0 else np.zeros(n_sites)
    return DisorderField(h_max=h_max, values=values, seed=seed)


@dataclass
class SectorState:
    """Normalized amplitude vector over a sector basis."""

    basis: SectorBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.basis.dim,):
            raise ValueError(f"amplitude shape {amps.shape} != sector dim {self.basis.dim}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state norm {norm} deviates from 1 beyond 1e-10")
        self.amplitudes = amps

    @property
    def n_sites(self) -> int:
        return self.basis.n_sites


class SparseHermitianOperator:
    """Hermitian operator on a sector in compressed sparse row layout.

    `values` is float64 when the matrix is purely real (no chiral couplings)
    and complex128 otherwise; `apply` handles real or complex input either way.
    """

    def __init__(self, basis: SectorBasis, indptr, indices, values):
        self.basis = basis
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.values = np.ascontiguousarray(values)
        if self.values.dtype not in (np.float64, np.complex128):
            raise TypeError(f"unsupported value dtype {self.values.dtype}")
        if len(self.indptr) != basis.dim + 1:
            raise ValueError("row pointer length does not match sector dim")
        self._scipy = None

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def shape(self):
        return (self.dim, self.dim)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    @property
    def is_real(self) -> bool:
        return self.values.dtype == np.float64

    def apply(self, x, out=None) -> np.ndarray:
        """Matrix-vector product; dispatches to the selected kernel backend."""
        from . import kernels

        amps = x.amplitudes if isinstance(x, SectorState) else x
        return kernels.matvec(self, np.asarray(amps), out=out)

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        if self._scipy is None:
            self._scipy = scipy.sparse.csr_matrix(
                (self.values, self.indices, self.indptr), shape=self.shape
            )
        return self._scipy

    def to_dense(self) -> np.ndarray:
        if self.dim > 16384:
            raise MemoryError(f"refusing dense conversion at dim={self.dim}")
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def dump_coo(self, path) -> None:
        """Text dump, one `row col real imag` line per stored entry."""
        with open(path, "w") as fh:
            for row in range(self.dim):
                for p in range(self.indptr[row], self.indptr[row + 1]):
                    v = complex(self.values[p])
                    fh.write(f"{row} {self.indices[p]} {v.real:.17g} {v.imag:.17g}\n")


def build_hamiltonian(
    basis: SectorBasis,
    params: CouplingParams,
    field: DisorderField | None = None,
) -> SparseHermitianOperator:
    """Assemble the chain Hamiltonian restricted to one magnetization sector.

    Terms, with sz_k = +-1/2 and J scaled to 1 unit:

    * exchange: J sz_k sz_{k+1} on the diagonal plus J/2 pair flips,
    * two-site chiral term: pure-imaginary +-i D/2 on the same pair flips,
    * three-site chiral term: pure-imaginary next-nearest pair flips weighted
      by the middle-spin sign, +-i D' sz_mid,
    * random field: sum_k h_k sz_k on the diagonal.

    Duplicate couplings that arise on tiny rings (N=2 nearest-neighbour, N=4
    next-nearest wrap-around) sum, which is the meaning of the bond sums.
    """
    n = basis.n_sites
    if field is not None and len(field.values) != n:
        raise ValueError(f"field has {len(field.values)} entries for {n} sites")
    if params.boundary == "periodic" and params.Dprime != 0.0 and n < 3:
        raise ValueError("three-site couplings on a ring need at least 3 sites")
    states = basis.states
    szs = basis.sz_table()
    bits = basis.bit_table()
    J, D, Dp = params.J, params.D, params.Dprime

    if params.boundary == "periodic":
        nn_bonds = [(k, (k + 1) % n) for k in range(n)]
        nnn_triples = [(k, (k + 1) % n, (k + 2) % n) for k in range(n)] if Dp != 0.0 else []
    else:
        nn_bonds = [(k, k + 1) for k in range(n - 1)]
        nnn_triples = [(k, k + 1, k + 2) for k in range(n - 2)] if Dp != 0.0 else []

    diag = np.zeros(basis.dim)
    for k, kp in nn_bonds:
        diag += J * szs[:, k] * szs[:, kp]
    if field is not None:
        diag += szs @ field.values

    complex_values = not params.is_real
    dtype = np.complex128 if complex_values else np.float64
    rows = [np.arange(basis.dim, dtype=np.int64)]
    cols = [np.arange(basis.dim, dtype=np.int64)]
    vals = [diag.astype(dtype)]

    for k, kp in nn_bonds:
        differ = bits[:, k] != bits[:, kp]
        src = np.nonzero(differ)[0]
        if len(src) == 0:
            continue
        flip = np.uint64((1 << k) | (1 << kp))
        dst = np.searchsorted(states, states[src] ^ flip)
        # source spin up at site k picks the -iD/2 branch, down the +iD/2 one
        sign = 1.0 - 2.0 * bits[src, k].astype(np.float64)
        if complex_values:
            amp = np.full(len(src), J / 2.0, dtype=np.complex128)
            amp += sign * (1j * D / 2.0)
        else:
            amp = np.full(len(src), J / 2.0)
        rows.append(dst.astype(np.int64))
        cols.append(src.astype(np.int64))
        vals.append(amp)

    for k, km, kp in nnn_triples:
        differ = bits[:, k] != bits[:, kp]
        src = np.nonzero(differ)[0]
        if len(src) == 0:
            continue
        flip = np.uint64((1 << k) | (1 << kp))
        dst = np.searchsorted(states, states[src] ^ flip)
        sign = 1.0 - 2.0 * bits[src, k].astype(np.float64)
        amp = sign * (1j * Dp) * szs[src, km]
        rows.append(dst.astype(np.int64))
        cols.append(src.astype(np.int64))
        vals.append(amp.astype(np.complex128))

    coo = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    )
    csr = coo.tocsr()
    csr.sum_duplicates()
    csr.sort_indices()
    return SparseHermitianOperator(basis, csr.indptr, csr.indices, csr.data)
