import json

import pytest

from dmchain.cli import build_parser, main, resolve_workers


def test_parser_has_all_pipelines():
    parser = build_parser()
    for name in (
        "spectrum",
        "equilibrium_sweep",
        "distribution",
        "dynamics",
        "fss",
        "transient",
        "steady",
    ):
        args = parser.parse_args([name])
        assert args.pipeline == name


def test_workers_resolution(monkeypatch):
    monkeypatch.delenv("DMCHAIN_WORKERS", raising=False)
    assert resolve_workers(None) == 0
    assert resolve_workers(3) == 3
    monkeypatch.setenv("DMCHAIN_WORKERS", "5")
    assert resolve_workers(None) == 5
    assert resolve_workers(2) == 2  # flag beats the environment


def test_spectrum_end_to_end(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        [
            "spectrum",
            "--out",
            str(out),
            "--override",
            "model.n_sites=[4]",
            "--override",
            "model.h=[2.0]",
        ]
    )
    assert code == 0
    captured = capsys.readouterr().out
    assert "spectrum finished" in captured
    assert (out / "manifest.json").exists()
    files = json.loads((out / "manifest.json").read_text())["files"]
    assert any(f.startswith("spectrum_N4") for f in files)


def test_config_file_and_seed_flag(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "pipeline: spectrum\n"
        "model: {n_sites: [4], h: [1.0]}\n"
        f"output: {tmp_path / 'from_file'}\n"
    )
    code = main([ "spectrum", "--config", str(cfg), "--seed", "77"])
    assert code == 0
    manifest = json.loads((tmp_path / "from_file" / "manifest.json").read_text())
    assert manifest["seeds"]["N4_h0_r0"] is not None


def test_subcommand_overrides_config_pipeline(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "pipeline: dynamics\n"
        "model: {n_sites: [4], h: [1.0]}\n"
        f"output: {tmp_path / 'sub'}\n"
    )
    assert main(["spectrum", "--config", str(cfg)]) == 0
    manifest = json.loads((tmp_path / "sub" / "manifest.json").read_text())
    assert manifest["pipeline"] == "spectrum"


def test_bad_inputs_exit_nonzero(tmp_path, capsys):
    assert main(["spectrum", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert "not found" in capsys.readouterr().err
    assert main(["spectrum", "--override", "model.warp=1"]) == 1
    assert "warp" in capsys.readouterr().err
    assert main(["fss", "--out", str(tmp_path / "nothing")]) == 1
    assert "sweep" in capsys.readouterr().err


def test_unknown_subcommand_rejected(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["warp"])
