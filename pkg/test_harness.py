import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from celltune_cli import main
from config.run_config import Algorithm, ConfigError, RunConfig, load_run_config, save_run_config
from harness.orchestrator import ExperimentOrchestrator, evaluate, sweep, train
from infrastructure.artifact_store import file_digest, load_checkpoint, read_csv_rows

CONFIG_DIR = Path(__file__).parent / "config"


def volte(**updates):
    return RunConfig.for_environment("volte").with_updates(**updates)


# configuration

def test_config_file_round_trip(tmp_path):
    config = volte(seed=7, **{"topology.max_ues_per_bs": 5, "env.power_unbounded": True})
    path = tmp_path / "run.conf"
    save_run_config(config, path)
    assert load_run_config(path) == config


def test_unknown_or_missing_config_is_rejected(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("environment=volte\nradio.warp_factor=9\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.conf")
    with pytest.raises(ConfigError):
        volte(**{"agent.momentum": 0.5})


@pytest.mark.parametrize("name, kind", [("volte_pc.conf", "volte"), ("son_fm.conf", "son")])
def test_shipped_configs_match_the_defaults(name, kind):
    assert load_run_config(CONFIG_DIR / name) == RunConfig.for_environment(kind)


def test_updates_accept_double_underscore_keys():
    config = volte(topology__max_ues_per_bs=3, algorithm="fpa")
    assert config.topology.max_ues_per_bs == 3
    assert config.algorithm is Algorithm.FPA


# training and evaluation

def test_training_is_reproducible(tmp_path):
    config = volte(episodes=20, seed=3)
    first = train(config, tmp_path / "a")
    second = train(config, tmp_path / "b")
    assert first.trace_digest == second.trace_digest
    assert file_digest(first.checkpoint_path) == file_digest(second.checkpoint_path)


def test_zero_episodes_persists_an_untrained_table(tmp_path):
    result = train(volte(episodes=0), tmp_path)
    assert result.metrics is None
    checkpoint = load_checkpoint(result.checkpoint_path, expected_kind="qtable")
    np.testing.assert_array_equal(checkpoint.arrays["q"], np.zeros((3, 5)))
    assert result.trace_path.read_text(encoding="utf-8").count("\n") == 1


def test_evaluation_leaves_the_checkpoint_untouched(tmp_path):
    config = volte(episodes=30, eval_episodes=5)
    trained = train(config, tmp_path)
    before = file_digest(trained.checkpoint_path)
    result = evaluate(config, trained.checkpoint_path, tmp_path)
    assert file_digest(trained.checkpoint_path) == before
    assert result.metrics is not None
    assert (result.trace_path.parent / "eval_metrics.csv").is_file()


def test_proposed_evaluation_needs_a_checkpoint(tmp_path):
    with pytest.raises(ValueError):
        evaluate(volte(), None, tmp_path)


def test_fpa_never_reaches_the_target(tmp_path):
    result = evaluate(volte(algorithm="fpa", eval_episodes=10), None, tmp_path)
    assert all(r.power_commands == 0 for r in result.episodes)
    assert not any(r.target_met for r in result.episodes)
    assert all(len(r.transitions) == 20 for r in result.episodes)


def test_max_sinr_keeps_every_call(tmp_path):
    orchestrator = ExperimentOrchestrator(volte(algorithm="maxsinr", eval_episodes=500), tmp_path)
    assert orchestrator.config.env.power_unbounded
    result = orchestrator.evaluate()
    assert result.metrics.retainability == 1.0
    assert all(np.all(r.sinr_db > 0.0) for r in result.episodes)


def test_learned_power_control_beats_fixed_power(tmp_path):
    proposed = volte(episodes=300, eval_episodes=200, seed=1)
    trained = train(proposed, tmp_path)
    learned = evaluate(proposed, trained.checkpoint_path, tmp_path)
    fixed = evaluate(proposed.with_updates(algorithm="fpa"), None, tmp_path)
    assert learned.metrics.retainability - fixed.metrics.retainability >= 0.10
    assert np.mean([r.target_met for r in learned.episodes]) >= 0.80
    assert learned.metrics.mos >= fixed.metrics.mos
    assert all(r.power_commands == 0 for r in fixed.episodes)


def test_learned_fault_clearing_matches_fifo_and_random(tmp_path):
    son = RunConfig.for_environment("son").with_updates(eval_episodes=200, seed=1)
    assert son.topology.ues_per_bs == 10
    trained = train(son, tmp_path)
    reports = {"proposed": evaluate(son, trained.checkpoint_path, tmp_path).metrics}
    for name in ("fifo", "random"):
        reports[name] = evaluate(son.with_updates(algorithm=name), None, tmp_path).metrics
    for metric in ("ue_throughput_avg_mbps", "avg_spectral_efficiency"):
        proposed, fifo, random = (getattr(reports[name], metric) for name in ("proposed", "fifo", "random"))
        assert proposed >= fifo - 1e-9
        assert fifo >= random - 1e-9


def test_training_records_time_and_model_size(tmp_path):
    result = train(volte(episodes=3), tmp_path)
    assert result.model_bytes == 3 * 5 * 8
    assert result.train_time_s is not None and result.train_time_s >= 0.0
    rows = read_csv_rows(result.trace_path.parent / "train_cost.csv")
    assert len(rows) == 1
    assert rows[0]["algorithm"] == "proposed"
    assert int(rows[0]["episodes"]) == 3
    assert int(rows[0]["model_bytes"]) == 120
    dqn = train(RunConfig.for_environment("son").with_updates(episodes=1), tmp_path)
    assert dqn.model_bytes == 8 * (7 * 24 + 24 + 24 * 24 + 24 + 24 * 5 + 5)


def test_power_commands_are_exported_with_the_gamma_plot(tmp_path):
    result = evaluate(volte(algorithm="fpa", eval_episodes=2), None, tmp_path, emit_plot_data=True)
    assert result.commands_path.name == "plot_commands.csv"
    rows = read_csv_rows(result.commands_path)
    assert len(rows) == 2 * 20
    assert {r["command_db"] for r in rows} == {"0"}
    assert [int(r["tti"]) for r in rows[:20]] == list(range(1, 21))

    trained = train(volte(episodes=2), tmp_path, emit_plot_data=True)
    assert trained.commands_path.name == "train_plot_commands.csv"
    steps = {int(r["action"]): int(r["command_db"]) for r in read_csv_rows(trained.commands_path)}
    assert all(steps[a] == {0: 0, 1: -3, 2: -1, 3: 1, 4: 3}[a] for a in steps)
    son = evaluate(RunConfig.for_environment("son").with_updates(algorithm="fifo", eval_episodes=1), None,
                   tmp_path, emit_plot_data=True)
    assert son.commands_path is None


def test_runs_are_reproducible_across_processes(tmp_path):
    root = Path(__file__).parent
    digests = []
    for hash_seed in ("1", "2"):
        out = tmp_path / f"run{hash_seed}"
        env = dict(os.environ, PYTHONHASHSEED=hash_seed)
        completed = subprocess.run(
            [sys.executable, str(root / "celltune_cli.py"), "volte-pc", "train", "--episodes", "10",
             "--seed", "4", "--out", str(out)],
            cwd=root, env=env, capture_output=True, text=True, timeout=600,
        )
        assert completed.returncode == 0, completed.stderr
        run_dir = out / "volte-proposed-q10-s4"
        digests.append((file_digest(run_dir / "train_trace.csv"), file_digest(run_dir / "model.ckpt")))
    assert digests[0] == digests[1]


def test_plot_data_is_written_on_request(tmp_path):
    result = evaluate(volte(algorithm="fpa", eval_episodes=2), None, tmp_path, emit_plot_data=True)
    assert result.plot_path.name == "plot_gamma.csv"
    lines = result.plot_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "algorithm,episode,tti,gamma_eff_db"
    assert len(lines) == 1 + 2 * 21


# command line

def test_cli_missing_config_fails_without_writing(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["volte-pc", "train", "--config", str(tmp_path / "absent.conf"), "--out", str(out)])
    assert code == 1
    assert not out.exists()
    assert "absent.conf" in capsys.readouterr().err


def test_cli_rejects_unknown_commands():
    with pytest.raises(SystemExit) as excinfo:
        main(["volte-pc", "dance"])
    assert excinfo.value.code == 2


def test_cli_train_then_evaluate(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["volte-pc", "train", "--episodes", "5", "--seed", "2", "--out", out]) == 0
    assert (tmp_path / "volte-proposed-q10-s2" / "model.ckpt").is_file()
    assert main(["volte-pc", "evaluate", "--eval-episodes", "3", "--seed", "2", "--out", out]) == 0
    assert "retainability" in capsys.readouterr().out


def test_cli_rejects_a_config_for_the_other_environment(tmp_path):
    code = main(["son-fm", "train", "--config", str(CONFIG_DIR / "volte_pc.conf"), "--out", str(tmp_path)])
    assert code == 1


# sweeps

def test_son_sweep_writes_one_row_per_metric(tmp_path):
    base = RunConfig.for_environment("son").with_updates(eval_episodes=2)
    result = sweep(base, [Algorithm.RANDOM, Algorithm.FIFO], [5, 10], [0], tmp_path, workers=2)
    assert not result.failures
    rows = read_csv_rows(result.csv_path)
    keys = [(r["algorithm"], r["q"], r["metric"]) for r in rows]
    assert len(keys) == len(set(keys)) == 24
    assert {r["metric"] for r in rows} == {
        "retainability", "avg_cell_throughput_mbps", "ue_throughput_peak_mbps",
        "ue_throughput_avg_mbps", "ue_throughput_edge_mbps", "avg_spectral_efficiency",
    }
    table = result.table_path.read_text(encoding="utf-8")
    assert "q=5 fifo" in table and "q=10 random" in table
