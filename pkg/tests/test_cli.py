import json
import subprocess
import sys

import pytest

from ldnormal.cli import RunConfig, load_config, main, resolve
from ldnormal.errors import ParameterError


def run_cli(tmp_path, *args, sub="out"):
    outdir = tmp_path / sub
    code = main([*args, "--output-dir", str(outdir)])
    return code, outdir


def test_solve_params_example(tmp_path, capsys):
    code, outdir = run_cli(tmp_path, "solve-params", "--g1", "4", "--g2", "3", "--g3", "6", "--mu", "4")
    text = capsys.readouterr().out
    assert code == 0
    assert "r=3" in text and "p=0.5" in text and "lam=1" in text
    assert (outdir / "manifest.json").exists()


def test_enumerate_example(tmp_path, capsys):
    code, outdir = run_cli(tmp_path, "enumerate", "--model", "hypercube", "--d", "2")
    lines = capsys.readouterr().out.splitlines()
    assert code == 0
    assert lines[:3] == ["0 0.125", "1 0.75", "2 0.125"]
    assert (outdir / "enumerate.csv").read_text().splitlines()[1:] == ["0,0.125", "1,0.75", "2,0.125"]


def test_exit_status_for_infeasible_family(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "solve-params", "--g1", "1", "--g2", "-0.75", "--g3", "1.25", "--family", "M2")
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path, capsys):
    assert run_cli(tmp_path, "simulate", "--model", "hypercube", "--d", "2")[0] == 1
    assert "needs --seed" in capsys.readouterr().err
    assert main(["no-such-command"]) == 1
    assert run_cli(tmp_path, "pmf", "--family", "Yd", "--mu", "1", "--sigma2", "1", "--eps", "0.1")[0] == 1
    assert run_cli(tmp_path, "enumerate", "--model", "hypercube", "--d", "5")[0] == 1


def test_config_defaults_and_rejection(tmp_path, monkeypatch):
    monkeypatch.setenv("LDNORMAL_OUTPUT_DIR", str(tmp_path / "env-out"))
    f = tmp_path / "min.json"
    f.write_text('{"command": "enumerate"}')
    cfg = load_config(f)
    assert cfg == RunConfig(command="enumerate", output_dir=str(tmp_path / "env-out"))
    f.write_text('{\n  "command": "enumerate",\n  "sampels": 3\n}')
    with pytest.raises(ParameterError, match=r"min\.json:3.*sampels"):
        load_config(f)
    f.write_text('{"command": "enumerate", "model": {"name": "hypercube", "dd": 2}}')
    with pytest.raises(ParameterError, match="unknown model key"):
        load_config(f)
    f.write_text('{"command": "enumerate",\n')
    with pytest.raises(ParameterError, match=r"min\.json:2"):
        load_config(f)


def test_flags_override_config_and_are_recorded(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"command": "simulate", "model": {"name": "hypercube", "d": 3}, "seed": 1, "samples": 50}))
    cfg, overrides, _ = resolve(["simulate", "--config", str(f), "--samples", "80", "--output-dir", str(tmp_path / "o")])
    assert cfg.samples == 80 and cfg.model == {"name": "hypercube", "d": 3}
    assert overrides["samples"] == {"file": 50, "flag": 80}
    code, outdir = run_cli(tmp_path, "simulate", "--config", str(f), "--samples", "80")
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert code == 0
    assert manifest["overrides"]["samples"] == {"file": 50, "flag": 80}
    assert manifest["config"]["samples"] == 80 and manifest["config"]["seed"] == 1
    with pytest.raises(ParameterError, match="config file is for"):
        resolve(["enumerate", "--config", str(f)])


def test_manifest_reruns(tmp_path):
    code, outdir = run_cli(tmp_path, "dist", "--model", "triangles", "--n", "20", "--p", "0.3", "--seed", "5",
                           "--samples", "3000", "--bootstrap-reps", "5")  # fmt: skip
    assert code == 0
    manifest = json.loads((outdir / "manifest.json").read_text())
    cfg = RunConfig(**manifest["config"])
    cfg.output_dir = str(tmp_path / "again")
    from ldnormal.cli import run

    assert run(cfg) == 0
    assert (tmp_path / "again" / "dist.csv").read_bytes() == (outdir / "dist.csv").read_bytes()


def test_csv_bytes_identical_across_workers(tmp_path):
    args = ["dist", "--model", "triangles", "--n", "40", "--p", "0.2", "--seed", "9", "--samples", "20000",
            "--bootstrap-reps", "10"]  # fmt: skip
    a = run_cli(tmp_path, *args, "--workers", "1", sub="w1")[1]
    b = run_cli(tmp_path, *args, "--workers", "3", sub="w3")[1]
    assert (a / "dist.csv").read_bytes() == (b / "dist.csv").read_bytes()
    header = (a / "dist.csv").read_text().splitlines()[0]
    assert header == "model,N,p,target,samples,dtv,stderr,seed"


def test_other_commands(tmp_path, capsys):
    assert run_cli(tmp_path, "pmf", "--family", "M3", "--lam", "1", "--omega", "0.5", "--eta", "0.25")[0] == 0
    assert run_cli(tmp_path, "bounds", "--model", "monoedges", "--graph", "example", "--c", "3")[0] == 0
    assert run_cli(tmp_path, "stein-verify", "--family", "M3", "--lam", "3", "--omega", "0.4", "--eta", "0.1",
                   "--seed", "1", "--trials", "5")[0] == 0  # fmt: skip
    code, outdir = run_cli(tmp_path, "lemma24-verify", "--model", "birthday", "--n", "3", "--k", "2", "--d", "2")
    assert code == 0
    assert json.loads((outdir / "lemma24-verify.json").read_text())["gap"] == 0
    assert "G1=3/4" in capsys.readouterr().out


def test_show_config(capsys):
    assert main(["table1", "--seed", "7", "--show-config"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["samples"] == 200000 and shown["eps"] == 1e-12 and shown["seed"] == 7


def test_console_script_installed():
    out = subprocess.run([sys.executable, "-m", "ldnormal.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("ldnormal ")
