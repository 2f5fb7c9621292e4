"""Pipeline orchestration: deterministic seeding, worker pool, CSV/JSON output.

Work units are independent disorder realizations.  Seeds derive from the run
coordinates alone and results merge in realization-index order, so the numeric
output is identical for any worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .analysis import (
    ALPHA_THRESHOLD,
    AnalysisError,
    ScalingDataset,
    crossing_point,
    fss_cost,
    fss_fit,
    steady_scaling_fit,
    transient_fit,
)
from .config import ExperimentConfig, parse_config, serialize_config
from .dynamics import TimeGrid, aggregate_quench, quench_realization, steady_state_value
from .eigensolve import PolfedConfig, dense_spectrum, solve_interior
from .entanglement import ggm_histogram, ggm_values
from .model import CouplingParams, build_hamiltonian, sample_disorder, sector_basis
from .observables import (
    SweepRecord,
    block_standard_error,
    correlator_profile,
    mean_gap_ratio,
)

FAILURE_BUDGET = 0.01


class PipelineError(RuntimeError):
    """A pipeline exceeded its failure budget or lacked required inputs."""


def derive_seed(master_seed: int, n_sites: int, h_index: int, realization_index: int) -> int:
    """Stable 64-bit seed from the run coordinates."""
    blob = f"{master_seed}:{n_sites}:{h_index}:{realization_index}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(config).encode()).hexdigest()


@dataclass
class RunManifest:
    pipeline: str
    config_hash: str
    code_version: str
    wall_seconds: float
    files: list[str] = field(default_factory=list)
    seeds: dict[str, int] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    n_units: int = 0

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as handle:
            json.dump(self.__dict__, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def _htag(h: float) -> str:
    return ("%g" % h).replace(".", "p").replace("-", "m")


# Worker processes receive the config once through the pool initializer;
# units then carry only their coordinates.
_WORKER_CONFIG: ExperimentConfig | None = None


def _worker_init(config_text: str) -> None:
    global _WORKER_CONFIG
    _WORKER_CONFIG = parse_config(config_text)


def _polfed_config(config: ExperimentConfig) -> PolfedConfig:
    s = config.solver
    return PolfedConfig(
        theta_floor=s.theta_floor,
        residual_bound=s.residual_bound,
        dense_dim_max=s.dense_dim_max,
    )


def _solve_unit(config: ExperimentConfig, n_sites: int, h: float, seed: int):
    basis = sector_basis(n_sites)
    field_ = sample_disorder(n_sites, h, seed)
    params = CouplingParams(
        D=config.model.d_two,
        Dprime=config.model.d_three,
        boundary=config.model.boundary,
    )
    op = build_hamiltonian(basis, params, field_)
    sel = solve_interior(op, config.n_eps_for(n_sites), _polfed_config(config))
    return basis, sel


def _run_spectrum_unit(unit):
    n_sites, h_index, r_index = unit
    config = _WORKER_CONFIG
    seed = derive_seed(config.sampling.master_seed, n_sites, h_index, r_index)
    try:
        with threadpool_limits(limits=1):
            basis = sector_basis(n_sites)
            field_ = sample_disorder(n_sites, config.model.h[h_index], seed)
            params = CouplingParams(
                D=config.model.d_two,
                Dprime=config.model.d_three,
                boundary=config.model.boundary,
            )
            values, _ = dense_spectrum(build_hamiltonian(basis, params, field_))
        return ("ok", values)
    except Exception as exc:
        return ("err", f"{type(exc).__name__}: {exc}")


def _run_equilibrium_unit(unit):
    n_sites, h_index, r_index = unit
    config = _WORKER_CONFIG
    seed = derive_seed(config.sampling.master_seed, n_sites, h_index, r_index)
    wanted = config.sampling.observables
    try:
        with threadpool_limits(limits=1):
            basis, sel = _solve_unit(config, n_sites, config.model.h[h_index], seed)
            payload = {}
            if "ggm" in wanted:
                payload["ggm"] = float(np.mean(ggm_values(sel.vectors, basis, "exact")))
            if "ggm1" in wanted:
                payload["ggm1"] = float(
                    np.mean(ggm_values(sel.vectors, basis, "single_site"))
                )
            if "gap_ratio" in wanted:
                payload["gap_ratio"] = mean_gap_ratio(
                    np.sort(sel.values), config.solver.degeneracy_tol
                )
            if "zz_profile" in wanted:
                profile = correlator_profile(sel.vectors, basis, config.model.boundary)
                payload["zz_profile"] = (profile.distances, profile.mean_log_abs)
        return ("ok", payload)
    except Exception as exc:
        return ("err", f"{type(exc).__name__}: {exc}")


def _run_distribution_unit(unit):
    n_sites, h_index, r_index = unit
    config = _WORKER_CONFIG
    seed = derive_seed(config.sampling.master_seed, n_sites, h_index, r_index)
    try:
        with threadpool_limits(limits=1):
            basis, sel = _solve_unit(config, n_sites, config.model.h[h_index], seed)
            order = np.argsort(sel.values, kind="stable")
            energies = sel.values[order]
            exact = ggm_values(sel.vectors[:, order], basis, "exact")
            single = ggm_values(sel.vectors[:, order], basis, "single_site")
        return ("ok", (energies, exact, single))
    except Exception as exc:
        return ("err", f"{type(exc).__name__}: {exc}")


def _run_dynamics_unit(unit):
    n_sites, h_index, r_index = unit
    config = _WORKER_CONFIG
    seed = derive_seed(config.sampling.master_seed, n_sites, h_index, r_index)
    dyn = config.dynamics
    grid = TimeGrid.log_grid(dyn.t_min, dyn.t_max, dyn.points_per_decade)
    params = CouplingParams(
        D=config.model.d_two, Dprime=config.model.d_three, boundary="open"
    )
    try:
        with threadpool_limits(limits=1):
            values = quench_realization(
                n_sites,
                config.model.h[h_index],
                params,
                grid,
                seed,
                eps_m=dyn.eps_m,
                ggm_mode=dyn.ggm_mode,
            )
        return ("ok", values)
    except Exception as exc:
        return ("err", f"{type(exc).__name__}: {exc}")


_UNIT_RUNNERS = {
    "spectrum": _run_spectrum_unit,
    "equilibrium_sweep": _run_equilibrium_unit,
    "distribution": _run_distribution_unit,
    "dynamics": _run_dynamics_unit,
}


def _execute_units(config: ExperimentConfig, units, workers: int):
    """Run units inline or on a process pool; results keep unit order."""
    runner = _UNIT_RUNNERS[config.pipeline]
    if workers <= 0:
        _worker_init(serialize_config(config))
        return [runner(u) for u in units]
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=workers,
        initializer=_worker_init,
        initargs=(serialize_config(config),),
    ) as pool:
        return list(pool.map(runner, units, chunksize=1))


def _collect(results, units, manifest):
    """Split ordered results into per-unit payloads, enforcing the failure budget."""
    payloads = {}
    for unit, (status, payload) in zip(units, results):
        label = "N%d_h%d_r%d" % unit
        if status == "ok":
            payloads[unit] = payload
        else:
            manifest.failures.append(f"{label}: {payload}")
    manifest.n_units = len(units)
    if len(manifest.failures) > FAILURE_BUDGET * len(units):
        raise PipelineError(
            f"{len(manifest.failures)} of {len(units)} work units failed: "
            + "; ".join(manifest.failures[:5])
        )
    return payloads


def _sampling_units(config: ExperimentConfig, count_for):
    units = []
    for n in config.model.n_sites:
        for h_index in range(len(config.model.h)):
            for r_index in range(count_for(n)):
                units.append((n, h_index, r_index))
    return units


def _record_seeds(config: ExperimentConfig, units, manifest):
    for n, h_index, r_index in units:
        label = "N%d_h%d_r%d" % (n, h_index, r_index)
        manifest.seeds[label] = derive_seed(
            config.sampling.master_seed, n, h_index, r_index
        )


def _pipeline_spectrum(config, out_dir, workers, manifest):
    n_r = config.sampling.n_r or 1
    units = _sampling_units(config, lambda n: n_r)
    _record_seeds(config, units, manifest)
    payloads = _collect(_execute_units(config, units, workers), units, manifest)
    for (n, h_index, r_index), values in sorted(payloads.items()):
        name = f"spectrum_N{n}_h{_htag(config.model.h[h_index])}_r{r_index}.csv"
        _write_csv(os.path.join(out_dir, name), ["energy"], ([v] for v in values))
        manifest.files.append(name)


def _pipeline_equilibrium(config, out_dir, workers, manifest):
    units = _sampling_units(config, config.n_r_for)
    _record_seeds(config, units, manifest)
    payloads = _collect(_execute_units(config, units, workers), units, manifest)
    scalars = [o for o in ("ggm", "ggm1", "gap_ratio") if o in config.sampling.observables]
    rows = []
    profiles = []
    for n in config.model.n_sites:
        for h_index, h in enumerate(config.model.h):
            per_real = [
                payloads[(n, h_index, r)]
                for r in range(config.n_r_for(n))
                if (n, h_index, r) in payloads
            ]
            if not per_real:
                continue
            for observable in scalars:
                values = np.asarray([p[observable] for p in per_real])
                err, _ = block_standard_error(values)
                rows.append(
                    (
                        n,
                        h,
                        config.model.d_two,
                        config.model.d_three,
                        observable,
                        float(np.mean(values)),
                        err,
                        config.n_eps_for(n),
                        len(per_real),
                        config.sampling.master_seed,
                    )
                )
            if "zz_profile" in config.sampling.observables:
                distances = per_real[0]["zz_profile"][0]
                stack = np.asarray([p["zz_profile"][1] for p in per_real])
                profiles.append((n, h, distances, np.mean(stack, axis=0)))
    if scalars:
        name = "sweep.csv"
        _write_csv(
            os.path.join(out_dir, name),
            ["N", "h", "D", "Dprime", "observable", "mean", "stderr", "n_eps", "n_R", "seed"],
            rows,
        )
        manifest.files.append(name)
    for n, h, distances, mean_log in profiles:
        name = f"profile_N{n}_h{_htag(h)}.csv"
        _write_csv(
            os.path.join(out_dir, name),
            ["r", "mean_ln_abs_C"],
            zip(distances, mean_log),
        )
        manifest.files.append(name)


def _pipeline_distribution(config, out_dir, workers, manifest):
    units = _sampling_units(config, config.n_r_for)
    _record_seeds(config, units, manifest)
    payloads = _collect(_execute_units(config, units, workers), units, manifest)
    for n in config.model.n_sites:
        for h_index, h in enumerate(config.model.h):
            rows = []
            samples = []
            for r in range(config.n_r_for(n)):
                if (n, h_index, r) not in payloads:
                    continue
                energies, exact, single = payloads[(n, h_index, r)]
                samples.append(exact)
                for j in range(len(energies)):
                    rows.append((r, j, energies[j], exact[j], single[j]))
            if not rows:
                continue
            tag = f"N{n}_h{_htag(h)}"
            name = f"ggm_samples_{tag}.csv"
            _write_csv(
                os.path.join(out_dir, name),
                ["realization", "eigen_index", "energy", "ggm", "ggm1"],
                rows,
            )
            manifest.files.append(name)
            hist = ggm_histogram(np.concatenate(samples))
            name = f"ggm_hist_{tag}.csv"
            _write_csv(
                os.path.join(out_dir, name),
                ["bin_center", "mass"],
                zip(hist.centers, hist.masses),
            )
            manifest.files.append(name)


def _pipeline_dynamics(config, out_dir, workers, manifest):
    units = _sampling_units(config, config.n_r_dyn_for)
    _record_seeds(config, units, manifest)
    payloads = _collect(_execute_units(config, units, workers), units, manifest)
    dyn = config.dynamics
    grid = TimeGrid.log_grid(dyn.t_min, dyn.t_max, dyn.points_per_decade)
    for n in config.model.n_sites:
        for h_index, h in enumerate(config.model.h):
            matrix = [
                payloads[(n, h_index, r)]
                for r in range(config.n_r_dyn_for(n))
                if (n, h_index, r) in payloads
            ]
            if not matrix:
                continue
            mean, stderr = aggregate_quench(np.asarray(matrix))
            name = f"quench_N{n}_h{_htag(h)}.csv"
            _write_csv(
                os.path.join(out_dir, name),
                ["t", "mean_ggm", "stderr", "n_realizations"],
                (
                    (grid.times[k], mean[k], stderr[k], len(matrix))
                    for k in range(len(grid))
                ),
            )
            manifest.files.append(name)


def _read_sweep(path: str) -> list[SweepRecord]:
    if not os.path.exists(path):
        raise PipelineError(f"missing sweep input '{path}'; run equilibrium_sweep first")
    records = []
    with open(path) as handle:
        for row in csv.DictReader(handle):
            records.append(
                SweepRecord(
                    n_sites=int(row["N"]),
                    h=float(row["h"]),
                    d_two=float(row["D"]),
                    d_three=float(row["Dprime"]),
                    observable=row["observable"],
                    mean=float(row["mean"]),
                    stderr=float(row["stderr"]),
                    n_eps=int(row["n_eps"]),
                    n_r=int(row["n_R"]),
                    master_seed=int(row["seed"]),
                )
            )
    return records


def _pipeline_fss(config, out_dir, workers, manifest):
    records = _read_sweep(os.path.join(out_dir, "sweep.csv"))
    observables = sorted({rec.observable for rec in records} & {"ggm", "ggm1", "gap_ratio"})
    fits = []
    for observable in observables:
        dataset = ScalingDataset.from_records(records, observable)
        fit = fss_fit(dataset)
        fits.append(fit)
        name = f"collapse_surface_{observable}.csv"
        rows = (
            (hs, nu, fit.grid_cost[i, j])
            for i, hs in enumerate(fit.grid_h_star)
            for j, nu in enumerate(fit.grid_nu)
        )
        _write_csv(os.path.join(out_dir, name), ["h_star", "nu", "cost"], rows)
        manifest.files.append(name)
    name = "collapse.json"
    with open(os.path.join(out_dir, name), "w") as handle:
        json.dump(
            [
                {
                    "observable": fit.observable,
                    "h_star": fit.h_star,
                    "nu": fit.nu,
                    "cost_min": fit.cost,
                    "grid_resolution": 0.1,
                }
                for fit in fits
            ],
            handle,
            indent=2,
        )
        handle.write("\n")
    manifest.files.append(name)


def _read_quench(out_dir: str, n: int, h: float):
    path = os.path.join(out_dir, f"quench_N{n}_h{_htag(h)}.csv")
    if not os.path.exists(path):
        return None
    times, means = [], []
    with open(path) as handle:
        for row in csv.DictReader(handle):
            times.append(float(row["t"]))
            means.append(float(row["mean_ggm"]))
    return np.asarray(times), np.asarray(means)


def _pipeline_transient(config, out_dir, workers, manifest):
    fits = []
    rows = []
    for n in config.model.n_sites:
        for h in config.model.h:
            series = _read_quench(out_dir, n, h)
            if series is None:
                continue
            fit = transient_fit(*series)
            fits.append((n, h, fit))
            rows.append((n, h, fit.alpha, fit.offset, fit.rms_residual, fit.n_points))
    if not fits:
        raise PipelineError("no quench series found; run the dynamics pipeline first")
    name = "transient.csv"
    _write_csv(
        os.path.join(out_dir, name),
        ["N", "h", "alpha", "offset", "rms_residual", "n_points"],
        rows,
    )
    manifest.files.append(name)
    report = {"threshold": ALPHA_THRESHOLD, "fits": [], "h_star_alpha": {}}
    for n, h, fit in fits:
        report["fits"].append(
            {
                "n_sites": n,
                "h": h,
                "alpha": fit.alpha,
                "offset": fit.offset,
                "window": list(fit.window),
                "rms_residual": fit.rms_residual,
                "n_points": fit.n_points,
            }
        )
    for n in config.model.n_sites:
        curve = [(h, fit.alpha) for m, h, fit in fits if m == n]
        if len(curve) < 2:
            continue
        hs = np.asarray([c[0] for c in curve])
        alphas = np.asarray([c[1] for c in curve])
        order = np.argsort(hs)
        try:
            report["h_star_alpha"][str(n)] = crossing_point(
                hs[order], alphas[order], ALPHA_THRESHOLD
            )
        except AnalysisError:
            report["h_star_alpha"][str(n)] = None
    name = "transient.json"
    with open(os.path.join(out_dir, name), "w") as handle:
        json.dump(report, handle, indent=2)
        handle.write("\n")
    manifest.files.append(name)


def _pipeline_steady(config, out_dir, workers, manifest):
    window = config.dynamics.window
    points = []
    for n in config.model.n_sites:
        for h in config.model.h:
            series = _read_quench(out_dir, n, h)
            if series is None:
                continue
            value, n_points = steady_state_value(*series, window=window)
            points.append((n, h, value, n_points))
    if not points:
        raise PipelineError("no quench series found; run the dynamics pipeline first")
    name = "steady.csv"
    _write_csv(
        os.path.join(out_dir, name), ["N", "h", "ggm_inf", "n_points"], points
    )
    manifest.files.append(name)
    report = {"window": [window[0], window[1]], "points": [], "fits": [], "h_star_beta": None}
    for n, h, value, n_points in points:
        report["points"].append(
            {"n_sites": n, "h": h, "ggm_inf": value, "n_points": n_points}
        )
    betas = []
    for h in config.model.h:
        sizes = np.asarray([p[0] for p in points if p[1] == h])
        values = np.asarray([p[2] for p in points if p[1] == h])
        if len(sizes) < 3:
            continue
        try:
            fit = steady_scaling_fit(sizes, values)
        except AnalysisError as exc:
            report["fits"].append({"h": h, "error": str(exc)})
            continue
        report["fits"].append(
            {
                "h": h,
                "coeff": fit.coeff,
                "beta": fit.beta,
                "offset": fit.offset,
                "plateau": fit.plateau,
                "rms_residual": fit.rms_residual,
            }
        )
        betas.append((h, fit.beta))
    if len(betas) >= 2:
        hs = np.asarray([b[0] for b in betas])
        vals = np.asarray([b[1] for b in betas])
        order = np.argsort(hs)
        try:
            report["h_star_beta"] = crossing_point(hs[order], vals[order], 0.0)
        except AnalysisError:
            pass
    name = "steady.json"
    with open(os.path.join(out_dir, name), "w") as handle:
        json.dump(report, handle, indent=2)
        handle.write("\n")
    manifest.files.append(name)


_PIPELINES = {
    "spectrum": _pipeline_spectrum,
    "equilibrium_sweep": _pipeline_equilibrium,
    "distribution": _pipeline_distribution,
    "dynamics": _pipeline_dynamics,
    "fss": _pipeline_fss,
    "transient": _pipeline_transient,
    "steady": _pipeline_steady,
}


def run_pipeline(config: ExperimentConfig, workers: int = 0) -> RunManifest:
    """Dispatch one pipeline and write its outputs plus a manifest."""
    out_dir = config.output
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(
        pipeline=config.pipeline,
        config_hash=config_hash(config),
        code_version=__version__,
        wall_seconds=0.0,
    )
    start = time.monotonic()
    _PIPELINES[config.pipeline](config, out_dir, workers, manifest)
    manifest.wall_seconds = time.monotonic() - start
    manifest.files.append("manifest.json")
    manifest.write(out_dir)
    return manifest
