import json
from pathlib import Path

import numpy as np
import pytest

from ppbounds.cli import main
from ppbounds.errors import ConfigurationError
from ppbounds.harness import derive_seed, load_config, parse_config, run

BERNSTEIN_TOML = """
kind = "bernstein"
master_seed = 321
replicates = 2000
chunk_size = 256

[model]
type = "atom"
spacing = 1.0
atom_probability = 1.0
marks = [-1.0, 1.0]
kernel = [0.5, 0.5]

[integrand]
type = "identity"

[bernstein]
horizon = 50.0
x_grid = [6.0, 9.0]
y2_grid = [25.0, 50.0]
k = "auto"
"""


def _write(tmp_path: Path, text: str, name: str = "cfg.toml") -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


def test_derive_seed_determinism_and_collisions():
    assert derive_seed(123, 45) == derive_seed(123, 45)
    n = 1_000_000
    seeds = {derive_seed(99, i) for i in range(n)}
    assert len(seeds) == n
    # distinct master seeds at the same index
    assert len({derive_seed(s, 7) for s in range(10_000)}) == 10_000


def test_config_rejects_unknown_keys(tmp_path):
    bad = BERNSTEIN_TOML.replace("master_seed = 321", "master_seed = 321\ntypo_key = 1")
    with pytest.raises(ConfigurationError):
        load_config(_write(tmp_path, bad))
    bad2 = BERNSTEIN_TOML.replace("horizon = 50.0", "horizon = 50.0\nbogus = 2")
    with pytest.raises(ConfigurationError):
        load_config(_write(tmp_path, bad2, "cfg2.toml"))


def test_config_kind_mismatch(tmp_path):
    path = _write(tmp_path, BERNSTEIN_TOML)
    with pytest.raises(ConfigurationError):
        load_config(path, kind_override="martingale")
    cfg = load_config(path, kind_override="bernstein")
    assert cfg.kind == "bernstein"
    assert cfg.replicates == 2000


def test_parse_config_requires_known_kind():
    with pytest.raises(ConfigurationError):
        parse_config({"kind": "nonsense"})


def test_run_simulate_writes_stream_csv(tmp_path):
    cfg = parse_config({
        "kind": "simulate", "master_seed": 5, "replicates": 1,
        "model": {"type": "atom", "spacing": 1.0, "atom_probability": 1.0,
                  "marks": [-1.0, 1.0], "kernel": [0.5, 0.5]},
        "simulate": {"horizon": 5.0, "paths": 2},
    })
    report = run(cfg, out_dir=tmp_path)
    assert report.summary_pass
    text = (tmp_path / "streams.csv").read_text()
    assert text.startswith("replicate,time,mark")
    assert (tmp_path / "report.jsonl").exists()


def test_run_bernstein_all_pass(tmp_path):
    cfg = load_config(_write(tmp_path, BERNSTEIN_TOML))
    report = run(cfg, out_dir=tmp_path / "out")
    assert report.summary_pass
    rows = [json.loads(line) for line in (tmp_path / "out" / "report.jsonl").read_text().splitlines()]
    assert len(rows) == 4
    assert all(r["verdict"] == "pass" for r in rows)


def test_run_bernstein_invalid_k_unconditioned(tmp_path):
    toml = BERNSTEIN_TOML.replace('k = "auto"', "k = 0.05")
    cfg = load_config(_write(tmp_path, toml))
    report = run(cfg, out_dir=tmp_path / "out")
    assert not report.summary_pass
    assert report.exit_code == 1
    rows = report.rows
    assert all(r["verdict"] == "unconditioned" for r in rows)


def test_report_bytes_identical_across_runs_and_workers(tmp_path):
    cfg = load_config(_write(tmp_path, BERNSTEIN_TOML))
    run(cfg, out_dir=tmp_path / "a")
    run(cfg, out_dir=tmp_path / "b")
    bytes_a = (tmp_path / "a" / "report.jsonl").read_bytes()
    bytes_b = (tmp_path / "b" / "report.jsonl").read_bytes()
    assert bytes_a == bytes_b
    toml_workers = BERNSTEIN_TOML.replace("master_seed = 321", "master_seed = 321\nworkers = 2")
    cfg2 = load_config(_write(tmp_path, toml_workers, "cfg_w.toml"))
    run(cfg2, out_dir=tmp_path / "c")
    assert (tmp_path / "c" / "report.jsonl").read_bytes() == bytes_a


def test_martingale_experiment(tmp_path):
    toml = """
kind = "martingale"
master_seed = 7
replicates = 4000

[model]
type = "poisson"
rate = 1.0
marks = [-1.0, 1.0]
kernel = [0.5, 0.5]

[integrand]
type = "identity"

[martingale]
horizon = 20.0
lambdas = [0.2, 1.0]
"""
    cfg = load_config(_write(tmp_path, toml))
    report = run(cfg, out_dir=tmp_path / "out")
    assert report.summary_pass
    assert {row["se_kind"] for row in report.rows} == {"exact"}


def test_gamma_experiment(tmp_path):
    toml = """
kind = "gamma"
master_seed = 1

[gamma]
points = ["a", "b", "c"]
matrix = [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]
alphas = [1.0, 2.0]
solver = "both"
"""
    cfg = load_config(_write(tmp_path, toml))
    report = run(cfg, out_dir=tmp_path / "out")
    assert report.summary_pass
    for row in report.rows:
        assert row["gamma_exact"] == pytest.approx(1.0)
        assert row["gamma_greedy"] >= row["gamma_exact"] - 1e-12


def test_cli_exit_codes(tmp_path, capsys):
    path = _write(tmp_path, BERNSTEIN_TOML)
    assert main(["bernstein", "--config", str(path), "--out", str(tmp_path / "o1")]) == 0
    # configuration error: unknown key
    bad = _write(tmp_path, BERNSTEIN_TOML.replace("master_seed = 321", "wat = 3"), "bad.toml")
    assert main(["bernstein", "--config", str(bad)]) == 2
    # missing file
    assert main(["bernstein", "--config", str(tmp_path / "nope.toml")]) == 2
    # failure exit: K too small -> unconditioned -> 1
    worse = _write(tmp_path, BERNSTEIN_TOML.replace('k = "auto"', "k = 0.05"), "worse.toml")
    assert main(["bernstein", "--config", str(worse), "--out", str(tmp_path / "o2")]) == 1


def test_cli_seed_override_changes_rows(tmp_path):
    path = _write(tmp_path, BERNSTEIN_TOML)
    assert main(["bernstein", "--config", str(path), "--out", str(tmp_path / "s1"),
                 "--seed", "11", "--replicates", "500"]) == 0
    assert main(["bernstein", "--config", str(path), "--out", str(tmp_path / "s2"),
                 "--seed", "12", "--replicates", "500"]) == 0
    a = (tmp_path / "s1" / "report.jsonl").read_text()
    b = (tmp_path / "s2" / "report.jsonl").read_text()
    assert a != b


def test_tail_curve_written_for_u_grid_experiments(tmp_path):
    toml = """
kind = "chaining"
master_seed = 3
replicates = 400

[model]
type = "atom"
spacing = 1.0
atom_probability = 1.0
marks = [0.0, 1.0, 2.0, 3.0]
kernel = [0.25, 0.25, 0.25, 0.25]

[chaining]
horizon = 16.0
thresholds = [0.5, 1.5, 2.5]
u_grid = [1.0, 2.0, 3.0]
"""
    cfg = load_config(_write(tmp_path, toml))
    report = run(cfg, out_dir=tmp_path / "out")
    curve = (tmp_path / "out" / "tail_curve.csv").read_text().splitlines()
    assert curve[0] == "u,empirical,cp99,bound"
    assert len(curve) == 4
    assert report.rows[0]["case"] == "uniform"
