import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mrlbm.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from mrlbm.config import ConfigError, dump_config, from_dict, parse_config
from mrlbm.fields import FieldSet
from mrlbm.io import read_snapshot, tree_from_leaves, write_snapshot
from mrlbm.mesh import CellTree, Grid
from mrlbm.multiresolution import adapt
from mrlbm.runner import run
from mrlbm.schemes import advection_d2q4, equilibrium_field, ns_d2q9

from conftest import random_tree

DATA = Path(__file__).parent / "data"


# --- config

def test_minimal_advection3d():
    c = from_dict({"problem": "advection3d"})
    assert (c.min_level, c.max_level, c.mu, c.eps) == (1, 8, 2, 1e-3)
    assert c.dim == 3
    assert c.n_steps == round(c.t_final * c.lam * 2 ** 8)


@pytest.mark.parametrize("raw", [
    {"problem": "custom", "max_steps": 3, "min_level": 6, "max_level": 6},
    {"problem": "custom", "max_steps": 3, "mu": 4},
    {"problem": "custom", "max_steps": 3, "gamma": 4},
    {"problem": "custom", "max_steps": 3, "foo": 1},
    {"problem": "custom", "max_steps": 3, "scheme": {"bar": 1}},
    {"problem": "custom", "max_steps": 3, "eps": "small"},
    {"problem": "custom", "max_steps": 3, "scheme": {"dim": 2}},
    {"problem": "custom"},
    {"problem": "nope"},
    {"problem": "advection3d", "scheme": {"V": [0.5, 0.5, 0.5]}},
    {"problem": "custom", "max_steps": 3, "scheme": {"dim": 2, "V": [0.6, 0.0]},
     "initial": {"center": [0.5, 0.5]}},
])
def test_bad_configs(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_mu_upper_bound_tracks_gamma():
    from_dict({"problem": "custom", "max_steps": 1, "gamma": 2, "mu": 5})
    with pytest.raises(ConfigError):
        from_dict({"problem": "custom", "max_steps": 1, "gamma": 2, "mu": 6})


def test_dump_round_trip(tmp_path):
    c = parse_config(DATA / "golden_1d.toml")
    p = tmp_path / "c.toml"
    p.write_text(dump_config(c))
    assert parse_config(p) == c


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/x.toml")


# --- snapshots

def test_snapshot_round_trip(tmp_path):
    g = Grid(2, 1, 5)
    s = advection_d2q4()
    rng = np.random.default_rng(3)
    tree = random_tree(g, 3, 0.4)
    f = FieldSet(tree, rng.normal(size=(tree.n_leaves, 4)))
    [path] = write_snapshot(f, s, 7, tmp_path, ["u"])
    t2, vals, names = read_snapshot(path, g)
    assert t2 == tree
    assert names == ["u"]
    assert np.array_equal(vals[:, 0], f.values.sum(1))


def test_full_mesh_row_count(tmp_path):
    g = Grid(2, 2, 4, base=(2, 1))
    s = ns_d2q9(dx=g.dx)
    f = equilibrium_field(g, s, np.broadcast_to([1.0, 0.0, 0.0], (32, 16, 3)).copy())
    [path] = write_snapshot(f, s, 0, tmp_path, ["rho", "q_x", "q_y"])
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 32 * 16
    assert lines[0] == "level,k0,k1,x0,x1,edge,rho,q_x,q_y"


def test_finest_dump(tmp_path):
    g = Grid(2, 1, 4)
    s = advection_d2q4()
    x = (np.arange(16) + 0.5) / 16
    f = equilibrium_field(g, s, np.exp(-30 * (x[:, None] - 0.5) ** 2 + 0 * x[None])[..., None])
    a = adapt(f, 1e-3, 1, s.velocities)
    paths = write_snapshot(a, s, 1, tmp_path, ["u"], dump_finest=True)
    fin = np.load(paths[1])
    assert fin.shape == (16, 16, 1)
    assert fin.sum() / 256 == pytest.approx(a.totals().sum())


def test_tree_from_leaves_rejects_gaps():
    g = Grid(1, 1, 3)
    with pytest.raises(ValueError):
        tree_from_leaves(g, {1: np.array([[0]])})
    t = tree_from_leaves(g, {1: np.array([[0]]), 2: np.array([[2], [3]])})
    assert t == CellTree(g, [np.array([False, True]), np.zeros(4, bool)])


# --- runs and CLI

def test_golden_fixture(tmp_path):
    run(parse_config(DATA / "golden_1d.toml"), tmp_path)
    for name in ("cells_000005.csv", "metrics.csv"):
        assert (tmp_path / name).read_bytes() == (DATA / "golden_1d" / name).read_bytes()


def test_repeat_runs_identical(tmp_path):
    cfg = parse_config(DATA / "golden_1d.toml")
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(DATA / "golden_1d.toml"), "--output", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "resolved_config.toml").exists()
    bad = tmp_path / "bad.toml"
    bad.write_text('problem = "custom"\nwhatever = 1\n')
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_cli_numerical_failure(tmp_path, monkeypatch, capsys):
    from mrlbm import runner

    real = runner.AdaptiveSolver.step

    def poisoned(self):
        out = real(self)
        self.field.values[3] = np.nan
        return out
    monkeypatch.setattr(runner.AdaptiveSolver, "step", poisoned)
    rc = main(["run", "--config", str(DATA / "golden_1d.toml"), "--output", str(tmp_path)])
    assert rc == EXIT_NUMERIC
    assert "step 1" in capsys.readouterr().err


def test_cli_env_output_dir(tmp_path):
    env = dict(os.environ, MRLBM_OUTPUT_DIR=str(tmp_path / "env"))
    r = subprocess.run([sys.executable, "-m", "mrlbm.cli", "run", "--config", str(DATA / "golden_1d.toml")],
                       env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "env" / "metrics.csv").exists()


def test_cli_compress(tmp_path, capsys):
    x = (np.arange(64) + 0.5) / 64
    p = tmp_path / "u.npy"
    np.save(p, np.exp(-50 * (x - 0.5) ** 2))
    assert main(["compress", "--input", str(p), "--eps", "1e-3"]) == EXIT_OK
    out = dict(ln.split() for ln in capsys.readouterr().out.splitlines())
    assert float(out["meshor"]) < 1
    assert float(out["linf"]) < 1e-2
    odd = tmp_path / "odd.txt"
    odd.write_text("1 2 3\n")
    assert main(["compress", "--input", str(odd), "--eps", "1e-3"]) == EXIT_CONFIG


def test_cli_verify(capsys):
    assert main(["verify"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all(ln.startswith("PASS") for ln in lines)
