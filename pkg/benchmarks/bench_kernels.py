"""Time the compiled kernels against the pure numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n-sites 12] [--repeats 5]
"""

import argparse
import time

import numpy as np

from dmchain import kernels
from dmchain.entanglement import _plan_for
from dmchain.model import CouplingParams, build_hamiltonian, sample_disorder, sector_basis


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-sites", type=int, default=12)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    basis = sector_basis(args.n_sites)
    field = sample_disorder(args.n_sites, 3.0, seed=1)
    op = build_hamiltonian(basis, CouplingParams(D=0.5), field)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    x /= np.linalg.norm(x)
    v = x.copy()
    u = kernels.matvec(op, x)
    out = np.empty_like(x)
    plan = _plan_for(basis)

    cases = {
        "matvec": lambda: kernels.matvec(op, x, out=out),
        "norm_apply": lambda: kernels.norm_apply(op, 0.1, 0.0, x, out=out),
        "cheb_step": lambda: kernels.cheb_step(op, 0.1, 0.0, v, u, out=out),
        "ggm_cut_sweep": lambda: [kernels.ggm_cut_sweep(x, chunk) for chunk in plan],
    }

    print(f"N={args.n_sites}  dim={basis.dim}  nnz={op.nnz}  best of {args.repeats}")
    available = kernels.available_backends()
    header = "kernel".ljust(16) + "".join(b.rjust(14) for b in available)
    if len(available) == 2:
        header += "speedup".rjust(10)
    print(header)
    saved = kernels.backend()
    try:
        for name, fn in cases.items():
            times = []
            for backend_name in available:
                kernels.set_backend(backend_name)
                fn()  # warm up caches and JIT-free paths alike
                times.append(timed(fn, args.repeats))
            line = name.ljust(16) + "".join(f"{t * 1e3:11.3f} ms" for t in times)
            if len(times) == 2 and times[0] > 0:
                # available_backends lists compiled first
                line += f"{times[1] / times[0]:9.1f}x"
            print(line)
    finally:
        kernels.set_backend(saved)


if __name__ == "__main__":
    main()
