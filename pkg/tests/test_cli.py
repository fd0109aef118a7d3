import json
import subprocess
import sys
from pathlib import Path

import pytest

from regot.cli import load_config, main

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
CHEAP = ["trainer.population=8", "trainer.iterations=2", "trainer.train_episodes=2",
         "run.eval_episodes=4", "run.rollouts=2"]


def _run_args(tmp_path, iterations=2):
    sets = CHEAP + [f'run.run_dir="{tmp_path / "run"}"', f"run.iterations={iterations}"]
    return ["run", "--config", str(FIXTURES / "hinge1d_scripted.toml")] + \
        [a for s in sets for a in ("--set", s)]


def test_validate_graph_exit_codes(capsys):
    assert main(["validate-graph", str(FIXTURES / "graphs" / "linear_chain.json")]) == 0
    assert capsys.readouterr().out == "valid\n"
    assert main(["validate-graph", str(FIXTURES / "graphs" / "stage_skip.json")]) == 1
    out = capsys.readouterr().out
    assert out.startswith("R3 edge approach->opened:") and len(out.splitlines()) == 1
    assert main(["validate-graph", str(FIXTURES / "graphs" / "malformed.json")]) == 2
    assert main(["validate-graph", str(FIXTURES / "graphs" / "press_start_button.json")]) == 0
    assert main(["validate-graph", "no/such/file.json"]) == 2


def test_eval_reward_is_stable(capsys):
    args = ["eval-reward", str(FIXTURES / "hinge_default.reward"), "--env", "hinge1d",
            "--n", "5", "--seed", "3"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    lines = first.splitlines()
    assert lines[0].split() == ["component", "mean", "min", "max", "std"]
    assert [ln.split()[0] for ln in lines[1:3]] == ["progress", "effort"]
    assert lines[-1].startswith("success_rate: ") and lines[-1].endswith("/5)")


def test_eval_reward_names_hallucinated_identifier(capsys):
    code = main(["eval-reward", str(FIXTURES / "hallucinated.reward"), "--env", "reach2d",
                 "--n", "3", "--seed", "0"])
    assert code == 1
    assert "[lid_angle]" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["eval-reward", "x.reward", "--env", "hinge1d", "--n", "0", "--seed", "0"],
    ["eval-reward", "x.reward", "--env", "cabinet", "--n", "2", "--seed", "0"],
    ["eval-reward", "x.reward", "--env", "hinge1d", "--n", "two", "--seed", "0"],
    ["run", "--config", "missing.toml"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 2


def test_set_overrides_and_relative_sessions():
    config, base = load_config(str(FIXTURES / "hinge1d_scripted.toml"),
                               ["run.iterations=2", "trainer.gamma=0.5", 'run.run_dir="x"'])
    assert config.iterations == 2 and config.trainer.gamma == 0.5 and config.run_dir == "x"
    assert base == FIXTURES
    replay, _ = load_config(str(FIXTURES / "hinge1d_replay.toml"))
    session = Path(replay.backend("graph").session)
    assert session.is_absolute() and session.exists()


def test_bad_config_values_exit_2(tmp_path, capsys):
    assert main(_run_args(tmp_path) + ["--set", "run.iterations=0"]) == 2
    assert main(_run_args(tmp_path) + ["--set", "run.colour=1"]) == 2
    assert "colour" in capsys.readouterr().err


def test_run_resume_and_report(tmp_path, capsys):
    assert main(_run_args(tmp_path)) == 0
    out = capsys.readouterr().out
    assert "iteration 1: completed" in out and "best iteration:" in out
    run = tmp_path / "run"
    csv_rows = (run / "summary.csv").read_text().splitlines()
    assert csv_rows[0] == "iteration,success_rate,mean_episode_length" and len(csv_rows) == 3

    report = (run / "report.json").read_bytes()
    assert main(_run_args(tmp_path) + ["--resume", str(run)]) == 0
    assert "iteration 1:" not in capsys.readouterr().out
    assert (run / "report.json").read_bytes() == report

    assert main(["report", str(run), "--plot-data"]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].split() == ["iteration", "success_rate", "mean_episode_length"]
    dat = (run / "plot_success_rate.dat").read_text().splitlines()
    rates = [r["success_rate"] for r in json.loads(report)["summary"]]
    assert dat[0].startswith("#") and [float(x.split()[1]) for x in dat[1:]] == rates
    assert (run / "plot_episode_length.dat").exists()


def test_report_without_run_exits_1(tmp_path):
    assert main(["report", str(tmp_path)]) == 1


def test_resume_with_changed_config_exits_1(tmp_path):
    assert main(_run_args(tmp_path, iterations=1)) == 0
    code = main(_run_args(tmp_path, iterations=1) + ["--set", "run.master_seed=9",
                                                      "--resume", str(tmp_path / "run")])
    assert code == 1


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "regot.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0
    for cmd in ("run", "validate-graph", "eval-reward", "report"):
        assert cmd in out.stdout
