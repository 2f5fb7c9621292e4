import csv
import json
import os

import numpy as np
import pytest

from dmchain.config import parse_config
from dmchain.dynamics import TimeGrid, quench_realization
from dmchain.eigensolve import dense_spectrum
from dmchain.model import CouplingParams, build_hamiltonian, sample_disorder, sector_basis
from dmchain.runner import PipelineError, config_hash, derive_seed, run_pipeline

SWEEP_TEXT = """
pipeline: equilibrium_sweep
model:
  n_sites: [6, 8]
  h: [1.0, 8.0]
  boundary: periodic
sampling:
  n_eps: 10
  n_r: 4
  master_seed: 11
output: {out}
"""


def read_rows(path):
    with open(path) as handle:
        return list(csv.DictReader(handle))


def test_derive_seed_stability():
    assert derive_seed(1, 12, 0, 3) == derive_seed(1, 12, 0, 3)
    assert 0 <= derive_seed(5, 8, 1, 2) < 2**64


def test_derive_seed_distinctness():
    seen = set()
    for master in (0, 1):
        for n in (8, 10, 12):
            for h_index in range(6):
                for r in range(500):
                    seen.add(derive_seed(master, n, h_index, r))
    assert len(seen) == 2 * 3 * 6 * 500


def test_spectrum_pipeline_matches_direct_call(tmp_path):
    out = tmp_path / "spec"
    config = parse_config(
        f"pipeline: spectrum\nmodel: {{n_sites: [6], h: [3.0]}}\noutput: {out}\n"
    )
    manifest = run_pipeline(config)
    name = [f for f in manifest.files if f.startswith("spectrum_")][0]
    emitted = np.array([float(r["energy"]) for r in read_rows(out / name)])

    seed = derive_seed(0, 6, 0, 0)
    basis = sector_basis(6)
    op = build_hamiltonian(basis, CouplingParams(), sample_disorder(6, 3.0, seed))
    values, _ = dense_spectrum(op)
    np.testing.assert_array_equal(emitted, values)


def test_equilibrium_sweep_and_rerun_determinism(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    manifest = run_pipeline(parse_config(SWEEP_TEXT.format(out=out_a)))
    run_pipeline(parse_config(SWEEP_TEXT.format(out=out_b)))
    assert "sweep.csv" in manifest.files
    assert (out_a / "sweep.csv").read_text() == (out_b / "sweep.csv").read_text()

    rows = read_rows(out_a / "sweep.csv")
    # 2 sizes x 2 fields x 3 observables
    assert len(rows) == 12
    assert {r["observable"] for r in rows} == {"ggm", "ggm1", "gap_ratio"}
    for row in rows:
        assert row["n_R"] == "4"
        if row["observable"] in ("ggm", "ggm1"):
            assert 0.0 <= float(row["mean"]) <= 0.5


def test_worker_count_independence(tmp_path):
    out_serial = tmp_path / "serial"
    out_pool = tmp_path / "pool"
    run_pipeline(parse_config(SWEEP_TEXT.format(out=out_serial)), workers=0)
    run_pipeline(parse_config(SWEEP_TEXT.format(out=out_pool)), workers=2)
    assert (out_serial / "sweep.csv").read_text() == (out_pool / "sweep.csv").read_text()


def test_manifest_contents(tmp_path):
    out = tmp_path / "m"
    config = parse_config(SWEEP_TEXT.format(out=out))
    manifest = run_pipeline(config)
    data = json.loads((out / "manifest.json").read_text())
    assert data["pipeline"] == "equilibrium_sweep"
    assert data["config_hash"] == config_hash(config)
    assert data["n_units"] == 2 * 2 * 4
    assert len(data["seeds"]) == 16
    assert data["seeds"]["N6_h0_r2"] == derive_seed(11, 6, 0, 2)
    for name in data["files"]:
        assert os.path.exists(out / name)
    assert "manifest.json" in data["files"]
    assert data["failures"] == []


def test_distribution_pipeline_outputs(tmp_path):
    out = tmp_path / "dist"
    config = parse_config(
        "pipeline: distribution\n"
        "model: {n_sites: [6], h: [1.0]}\n"
        "sampling: {n_eps: 8, n_r: 3, master_seed: 2}\n"
        f"output: {out}\n"
    )
    manifest = run_pipeline(config)
    samples = read_rows(out / "ggm_samples_N6_h1.csv")
    assert len(samples) == 3 * 8
    assert set(samples[0]) == {"realization", "eigen_index", "energy", "ggm", "ggm1"}
    for row in samples:
        assert 0.0 <= float(row["ggm"]) <= float(row["ggm1"]) + 1e-12
    hist = read_rows(out / "ggm_hist_N6_h1.csv")
    mass = sum(float(r["mass"]) for r in hist)
    assert mass == pytest.approx(1.0, abs=1e-12)
    assert len(manifest.files) == 3


def test_dynamics_pipeline_matches_direct_loop(tmp_path):
    out = tmp_path / "dyn"
    config = parse_config(
        "pipeline: dynamics\n"
        "model: {n_sites: [6], h: [2.0]}\n"
        "sampling: {n_r_dyn: 3, master_seed: 4}\n"
        "dynamics: {t_min: 0.1, t_max: 10.0, points_per_decade: 4}\n"
        f"output: {out}\n"
    )
    run_pipeline(config)
    rows = read_rows(out / "quench_N6_h2.csv")
    grid = TimeGrid.log_grid(0.1, 10.0, 4)
    assert len(rows) == len(grid)

    params = CouplingParams(boundary="open")
    direct = np.array(
        [
            quench_realization(6, 2.0, params, grid, derive_seed(4, 6, 0, r))
            for r in range(3)
        ]
    )
    np.testing.assert_allclose(
        [float(r["mean_ggm"]) for r in rows], direct.mean(axis=0), atol=1e-15
    )
    assert all(r["n_realizations"] == "3" for r in rows)


def test_fss_pipeline_chains_from_sweep(tmp_path):
    out = tmp_path / "chain"
    out.mkdir()
    # synthetic sweep with a clean crossing so the collapse is well posed
    rows = ["N,h,D,Dprime,observable,mean,stderr,n_eps,n_R,seed"]
    hs = np.linspace(0.5, 7.5, 15)
    rng = np.random.default_rng(3)
    for n in (8, 10, 12):
        u = np.sign(hs - 3.5) * n * np.abs(hs - 3.5)
        vals = 0.25 * (1.0 - np.tanh(u / 20.0)) + 0.0025 * rng.standard_normal(len(hs))
        for h, v in zip(hs, vals):
            rows.append(f"{n},{h},0,0,ggm,{v},0.001,22,4,0")
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")

    config = parse_config(f"pipeline: fss\noutput: {out}\n")
    manifest = run_pipeline(config)
    report = json.loads((out / "collapse.json").read_text())
    assert len(report) == 1
    fit = report[0]
    assert fit["observable"] == "ggm"
    assert abs(fit["h_star"] - 3.5) <= 0.3
    assert fit["grid_resolution"] == 0.1
    surface = read_rows(out / "collapse_surface_ggm.csv")
    assert {"h_star", "nu", "cost"} == set(surface[0])
    assert "collapse.json" in manifest.files


def test_fss_pipeline_requires_sweep(tmp_path):
    config = parse_config(f"pipeline: fss\noutput: {tmp_path / 'empty'}\n")
    with pytest.raises(PipelineError, match="sweep"):
        run_pipeline(config)


def test_transient_and_steady_chain_from_dynamics(tmp_path):
    out = tmp_path / "ts"
    out.mkdir()
    grid = TimeGrid.log_grid(0.5, 3e4, 6)
    for n in (8, 10, 12):
        for h, alpha in ((1.0, 0.02), (4.0, 0.001)):
            values = alpha * np.log(grid.times) + 0.01 * n
            lines = ["t,mean_ggm,stderr,n_realizations"]
            for t, v in zip(grid.times, values):
                lines.append(f"{t},{v},0.0,5")
            (out / f"quench_N{n}_h{['1','4'][h > 2]}.csv").write_text(
                "\n".join(lines) + "\n"
            )
    base = (
        "model: {{n_sites: [8, 10, 12], h: [1.0, 4.0]}}\n"
        "dynamics: {{window: [1.0e4, null]}}\n"
        "output: {out}\n"
    ).format(out=out)

    run_pipeline(parse_config("pipeline: transient\n" + base))
    report = json.loads((out / "transient.json").read_text())
    assert report["threshold"] == 0.0025
    fits = {(f["n_sites"], f["h"]): f["alpha"] for f in report["fits"]}
    assert fits[(8, 1.0)] == pytest.approx(0.02, abs=1e-10)
    assert fits[(12, 4.0)] == pytest.approx(0.001, abs=1e-10)
    # alpha falls from 0.02 through the 0.0025 threshold between h=1 and h=4
    assert 1.0 < report["h_star_alpha"]["10"] < 4.0

    run_pipeline(parse_config("pipeline: steady\n" + base))
    steady = json.loads((out / "steady.json").read_text())
    points = {(p["n_sites"], p["h"]): p["ggm_inf"] for p in steady["points"]}
    window_mask = grid.times >= 1e4
    expect = float(np.mean(0.02 * np.log(grid.times[window_mask]) + 0.08))
    assert points[(8, 1.0)] == pytest.approx(expect, abs=1e-12)
    assert len(steady["fits"]) == 2


def test_failure_budget_enforced(tmp_path):
    # asking for more interior states than the sector holds fails every unit
    config = parse_config(
        "pipeline: equilibrium_sweep\n"
        "model: {n_sites: [4], h: [1.0]}\n"
        "sampling: {n_eps: 10, n_r: 2}\n"
        f"output: {tmp_path / 'fail'}\n"
    )
    with pytest.raises(PipelineError, match="work units failed"):
        run_pipeline(config)


def test_observable_selection_and_profile_output(tmp_path):
    out = str(tmp_path / "zz")
    text = f"""
pipeline: equilibrium_sweep
model:
  n_sites: [8]
  h: [6.0]
  d_two: 0.5
  boundary: periodic
sampling:
  n_eps: 12
  n_r: {{8: 3}}
  master_seed: 7
  observables: [gap_ratio, zz_profile]
output: {out}
"""
    run_pipeline(parse_config(text))
    rows = read_rows(os.path.join(out, "sweep.csv"))
    assert {r["observable"] for r in rows} == {"gap_ratio"}
    profile = read_rows(os.path.join(out, "profile_N8_h6.csv"))
    assert [int(r["r"]) for r in profile] == [1, 2, 3, 4]
    values = [float(r["mean_ln_abs_C"]) for r in profile]
    assert all(np.isfinite(values))
    # strong disorder: correlations decay away from r=1
    assert values[0] > values[-1]
