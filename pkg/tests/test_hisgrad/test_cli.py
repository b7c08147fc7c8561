import json

import pytest  # type: ignore
from hisgrad.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main

TINY = [
    "--set", "n_agents=2", "--set", "action_dim=1", "--set", "episodes=4",
    "--set", "episode_length=5", "--set", "warmup_steps=10", "--set",
    "train_interval=5", "--set", "updates_per_train=2", "--set",
    "batch_size=8", "--set", "buffer_size=100", "--set", "hidden_sizes=[8]"
]


def write_game(path, n, values):
    with open(path, "w") as f:
        json.dump({"n": n, "values": values}, f)
    return str(path)


@pytest.fixture
def square_game(tmp_path):
    values = {"": 0, "0": 1, "1": 1, "2": 1, "0,1": 4, "0,2": 4, "1,2": 4,
              "0,1,2": 9}
    return write_game(tmp_path / "square.json", 3, values)


def test_game_shapley(tmp_path, capsys):
    path = write_game(tmp_path / "g.json", 2, {
        "": 0,
        "0": 0,
        "1": 0,
        "0,1": 1
    })
    assert main(["game", "shapley", path]) == EXIT_OK
    assert capsys.readouterr().out == "0.5 0.5\n"


def test_game_hybrid(square_game, capsys):
    assert main(["game", "hybrid", square_game]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == [
        "3 3 3", "efficient=true", "core=true"
    ]


def test_game_convex(tmp_path, square_game, capsys):
    assert main(["game", "convex", square_game]) == EXIT_OK
    assert capsys.readouterr().out == "true\n"

    path = write_game(tmp_path / "g.json", 2, {
        "": 0,
        "0": 1,
        "1": 1,
        "0,1": 1
    })
    assert main(["game", "convex", path]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == ["false", "C={0} D={1}"]


def test_game_core(square_game, capsys):
    assert main(["game", "core", square_game]) == EXIT_OK
    assert capsys.readouterr().out == "true\n"
    assert main(
        ["game", "core", square_game, "--allocation", "9,0,0"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "false"
    assert out[1].startswith("blocking=")


@pytest.mark.parametrize("content", ["not json", '{"n": 2, "values": {}}'])
def test_game_malformed(tmp_path, content):
    path = tmp_path / "g.json"
    path.write_text(content)
    assert main(["game", "shapley", str(path)]) == EXIT_USAGE


def test_game_missing_file(tmp_path):
    assert main(["game", "shapley", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_verify(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert main(["verify", "theorems", "--count", "20", "--report",
                 str(report)]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["passed"]
    assert json.loads(report.read_text()) == printed


def test_verify_failure_exit_code(monkeypatch, capsys):
    from hisgrad import cli
    monkeypatch.setitem(cli.suites, "theorems",
                        lambda **kw: {"passed": False})
    assert main(["verify", "theorems"]) == EXIT_FAILURE


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["verify", "everything"]) == EXIT_USAGE
    assert main(["run", "--ablation", "everything"]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_run(tmp_path, capsys):
    out = tmp_path / "run"
    args = ["run", *TINY, "--ablation", "share", "--out", str(out),
            "--no-mlflow"]
    assert main(args) == EXIT_OK
    assert (out / "metrics.csv").exists()
    with open(out / "summary.json") as f:
        summary = json.load(f)
    assert summary["ablation"] == "share"
    assert summary["steps"] == 20
    assert "Finished 20 steps" in capsys.readouterr().out

    # A completed run is not overwritten without --force.
    assert main(args) == EXIT_USAGE
    assert "--force" in capsys.readouterr().err
    assert main(args + ["--force", "--seed", "2"]) == EXIT_OK
    with open(out / "summary.json") as f:
        assert json.load(f)["seed"] == 2


def test_run_default_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("HIS_OUT_DIR", str(tmp_path))
    assert main(["run", *TINY, "--seed", "5", "--no-mlflow"]) == EXIT_OK
    assert (tmp_path / "quad_coupled-full-seed5" / "summary.json").exists()


def test_run_config_errors(tmp_path, capsys):
    config = tmp_path / "run.toml"
    config.write_text("episodes = 4\nbogus = 1\n")
    assert main(["run", "--config", str(config)]) == EXIT_USAGE
    assert f"{config}:2:" in capsys.readouterr().err

    assert main(["run", "--set", "gamma=2"]) == EXIT_USAGE
    assert main(["run", "--set", "bogus=2"]) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "none.toml")]) == EXIT_USAGE


def test_print_config(tmp_path, capsys):
    config = tmp_path / "run.toml"
    config.write_text("episodes = 4\n")
    assert main(["run", "--config", str(config), "--set", "beta=3",
                 "--print-config"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "episodes = 4\n" in out
    assert "beta = 3.0\n" in out
    assert not (tmp_path / "runs").exists()


def test_ablate(tmp_path, capsys):
    assert main(["ablate", *TINY, "--modes", "full,share", "--seeds", "0",
                 "--out", str(tmp_path), "--no-mlflow"]) == EXIT_OK
    assert (tmp_path / "comparison.csv").exists()
    assert main(["ablate", *TINY, "--modes", "full", "--seeds", "0",
                 "--out", str(tmp_path), "--no-mlflow"]) == EXIT_USAGE


def test_sweep(tmp_path, capsys):
    assert main(["sweep", *TINY, "--grid", "beta=1,10", "--seeds", "0",
                 "--out", str(tmp_path), "--no-mlflow"]) == EXIT_OK
    assert (tmp_path / "sweep_medians.csv").exists()
