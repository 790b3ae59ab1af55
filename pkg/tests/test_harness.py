import csv
import json

import numpy as np
import pytest

from imitbench import cli
from imitbench import dataset as ds
from imitbench.approx import make_policy
from imitbench.envs import make_env
from imitbench.errors import ConfigError, NumericalError
from imitbench.harness import config as hc
from imitbench.harness import profiling, report, search, training
from imitbench.harness.config import RunConfig


def tiny(**kw):
    base = dict(hidden_size=16, rollout_length=256, steps=1024, eval_interval=256,
                eval_episodes=3, horizon=50, imitation_epochs=5, strict=False)
    return RunConfig(**{**base, **kw})


@pytest.fixture(scope="module")
def expert_file(tmp_path_factory):
    env = make_env("pointmass", 50)
    policy = make_policy(4, 2, np.random.default_rng(0), hidden=(16,))
    path = tmp_path_factory.mktemp("data") / "pm.ilds"
    ds.save(ds.record_expert(policy, env, 8, seed=1), path)
    return path


# configuration ---------------------------------------------------------------

def test_defaults_are_valid_and_in_the_search_space():
    cfg = RunConfig()
    assert cfg.steps == 300_000 and cfg.eval_episodes == 50
    for key, options in hc.CHOICES.items():
        assert getattr(cfg, key) in options
    assert cfg.hidden == (256, 256)
    assert cfg.interval == 15_000


@pytest.mark.parametrize("change", [dict(rollout_length=1000), dict(agent_lr=1e-2),
                                    dict(hidden_size=32), dict(gamma=0.9), dict(steps=0),
                                    dict(algo="sac"), dict(env="ant"), dict(dril_quantile=0.0)])
def test_invalid_values_are_rejected(change):
    with pytest.raises(ConfigError):
        RunConfig(**change)


def test_relaxed_mode_allows_small_networks():
    assert tiny().hidden == (16, 16)
    with pytest.raises(ConfigError):
        tiny(steps=-1)


def test_text_format_round_trips(tmp_path):
    cfg = RunConfig(algo="gmmil", gmmil_self_similarity=False, agent_lr=1e-4, seed=7)
    path = tmp_path / "run.cfg"
    path.write_text("# comment line\n" + cfg.to_text())
    assert hc.load_config(path) == cfg
    assert hc.load_config(path, {"seed": 3}).seed == 3


def test_parse_errors():
    with pytest.raises(ConfigError):
        hc.parse_value("nonsense", "1")
    with pytest.raises(ConfigError):
        hc.parse_value("steps", "1.5")
    with pytest.raises(ConfigError):
        hc.parse_value("gmmil_self_similarity", "maybe")
    with pytest.raises(ConfigError):
        hc.parse_assignments(["steps 100"])
    assert hc.parse_value("gmmil_self_similarity", "off") is False


# evaluation and training --------------------------------------------------------

def test_evaluate_counts_episodes_and_is_exact_without_reset_noise(monkeypatch):
    env = make_env("pointmass")
    policy = make_policy(4, 2, np.random.default_rng(0), hidden=(8,))
    res = training.evaluate(policy, env, 50, seed=3)
    assert res.episodes == 50 and res.std > 0
    monkeypatch.setattr(ds, "episode_seeds",
                        lambda seed, n: [np.random.SeedSequence(seed) for _ in range(n)])
    fixed = training.evaluate(policy, env, 10, seed=3)
    assert fixed.std == 0.0


def test_eval_report_statistics():
    results = [training.EvalResult(np.array([1.0, 3.0]), s) for s in range(2)]
    results.append(training.EvalResult(np.array([4.0, 6.0]), 2))
    rep = training.EvalReport.from_results(results)
    assert rep.n_seeds == 3 and rep.episodes == 2
    assert rep.mean == pytest.approx(3.0)
    assert rep.stderr == pytest.approx(np.std([2, 2, 5], ddof=1) / np.sqrt(3))


def test_normalised_score():
    assert training.normalised_score(-10.0, 0.0, -100.0) == pytest.approx(0.9)
    with pytest.raises(ValueError):
        training.normalised_score(1.0, 2.0, 2.0)


def test_bc_never_touches_the_environment_loop(expert_file, monkeypatch):
    def boom(*a, **k):
        raise AssertionError("BC collected a rollout")

    monkeypatch.setattr(training, "collect_rollout", boom)
    result = training.run_training(tiny(algo="bc", dataset=str(expert_file)))
    assert result.env_steps == 0 and result.train_seconds == 0.0
    assert [e.step for e in result.evals] == [1, 2, 3, 4, 5]


def test_ppo_runs_without_a_dataset():
    result = training.run_training(tiny(algo="ppo"))
    assert result.env_steps == 1024
    assert [e.step for e in result.evals] == [256, 512, 768, 1024]


@pytest.mark.parametrize("algo", ["ppo", "bc", "gail", "airl", "fairl", "gmmil", "red", "dril"])
def test_runs_are_bit_identical(algo, expert_file):
    cfg = tiny(algo=algo, dataset=str(expert_file), steps=512, adversarial_epochs=1)
    a = training.run_training(cfg)
    b = training.run_training(cfg)
    assert [(e.step, e.mean, e.std) for e in a.evals] == [(e.step, e.mean, e.std) for e in b.evals]
    for x, y in zip(a.policy.arrays(), b.policy.arrays()):
        assert x.tobytes() == y.tobytes()


def test_imitation_requires_an_existing_dataset(tmp_path):
    with pytest.raises(ConfigError):
        training.run_training(tiny(algo="gail"))
    with pytest.raises(ConfigError):
        training.run_training(tiny(algo="gail", dataset=str(tmp_path / "missing.ilds")))


def test_dataset_environment_must_match(expert_file):
    with pytest.raises(ConfigError):
        training.load_expert(tiny(algo="bc", env="pendulum", dataset=str(expert_file)))


def test_subsampling_applied_on_load(expert_file):
    full = training.load_expert(tiny(algo="bc", dataset=str(expert_file), subsample=1))
    sub = training.load_expert(tiny(algo="bc", dataset=str(expert_file), subsample=20))
    assert len(full) == 400 and len(sub) == 8 * 3


def test_policy_round_trip(tmp_path):
    policy = make_policy(4, 2, np.random.default_rng(0), hidden=(8, 8))
    training.save_policy(policy, tmp_path / "p.npz")
    back = training.load_policy(tmp_path / "p.npz")
    for x, y in zip(policy.arrays(), back.arrays()):
        np.testing.assert_array_equal(x, y)
    with pytest.raises(ConfigError):
        training.load_policy(tmp_path / "nothing.npz")


def test_expert_checkpoint_is_first_to_reach_quality():
    run = training.train_expert(tiny(steps=2048), quality=0.5)
    assert len(run.checkpoints) == 8
    idx = [c.step for c in run.checkpoints].index(run.checkpoint_step)
    scores = [training.normalised_score(c.mean, run.final_return, run.zero_return)
              for c in run.checkpoints]
    if run.final_return > run.zero_return:
        assert scores[idx] >= 0.5 and all(s < 0.5 for s in scores[:idx])


# search ---------------------------------------------------------------------

def test_budget_must_be_positive():
    with pytest.raises(ConfigError):
        search.sample_configs("gail", 0)


def test_samples_cover_the_space_deterministically():
    a = search.sample_configs("gail", 20, seed=4)
    assert a == search.sample_configs("gail", 20, seed=4)
    assert a != search.sample_configs("gail", 20, seed=5)
    for params in a:
        assert set(params) == set(hc.SEARCH_KEYS["gail"])
        RunConfig(algo="gail", **params)     # stays inside the strict search space
    lrs = [p["agent_lr"] for p in a]
    assert min(lrs) < 6e-5 and max(lrs) > 1.5e-4


def test_objective_needs_five_evaluations_and_ties_go_first():
    assert search.TrialRecord(0, {}, [1.0] * 4, 0.0).objective is None
    t = search.TrialRecord(0, {}, [9.0, 1, 2, 3, 4, 5], 0.0)
    assert t.objective == 3.0
    trials = [search.TrialRecord(i, {"i": i}, [1.0] * 5, 0.0) for i in range(4)]
    assert search.best_trial(trials).index == 0
    trials.append(search.TrialRecord(4, {}, [2.0] * 5, 0.0))
    assert search.best_trial(trials).index == 4
    incomplete = [search.TrialRecord(i, {}, [1.0], 0.0) for i in range(3)]
    assert search.best_trial(incomplete).index == 0


def test_budget_one_returns_the_only_trial(expert_file):
    best, trials = search.hyperparameter_search(tiny(algo="bc", dataset=str(expert_file)), 1)
    assert len(trials) == 1 and best is trials[0]


def test_twenty_trials_are_persisted(expert_file, tmp_path):
    base = tiny(algo="bc", dataset=str(expert_file), eval_episodes=2)
    best, trials = search.hyperparameter_search(base, 20, 0, tmp_path)
    with open(tmp_path / "trials.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20 and len(json.loads((tmp_path / "trials.json").read_text())) == 20
    assert all(r["objective"] for r in rows)
    assert best.objective == max(t.objective for t in trials)
    assert hc.load_config(tmp_path / "best.cfg").agent_lr == best.params["agent_lr"]


# reports ----------------------------------------------------------------------

def _records(n_seeds=5, n_points=8, algo="gail"):
    rng = np.random.default_rng(0)
    return [report.RunRecord(algo, "pointmass", s,
                             tuple((1000 * (k + 1), float(rng.normal()), float(rng.random()))
                                   for k in range(n_points)), 50)
            for s in range(n_seeds)]


def test_curve_has_one_row_per_seed_and_point(tmp_path):
    n = report.write_curve(_records(), tmp_path / "c.csv")
    with open(tmp_path / "c.csv") as fh:
        rows = list(csv.reader(fh))
    assert n == 40 and len(rows) == 41
    assert rows[0] == ["step", "seed", "mean_return", "std_return"]


def test_summary_has_dataset_and_baseline_rows(tmp_path):
    records = _records() + _records(3, 8, "ppo")
    report.emit_report(records, tmp_path, {"pointmass": (-28.0, 9.3)})
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    labels = [r["algorithm"] for r in rows]
    assert labels[:3] == ["Dataset", "PPO", "BC"]
    assert rows[0]["mean_return"] == repr(-28.0)
    gail = next(r for r in rows if r["algorithm"] == "GAIL")
    finals = [r.final for r in _records()]
    assert float(gail["mean_return"]) == pytest.approx(np.mean(finals))
    assert gail["seeds"] == "5"
    text = (tmp_path / "summary.txt").read_text()
    assert "Dataset" in text and "episodes per evaluation: 50" in text
    spec = json.loads((tmp_path / "plot.vl.json").read_text())
    assert spec["$schema"].startswith("https://vega.github.io/schema/vega-lite")


def test_reemitting_from_persisted_runs_is_byte_identical(tmp_path):
    for rec in _records():
        d = tmp_path / "runs" / f"seed_{rec.seed}"
        d.mkdir(parents=True)
        report.save_record(rec, d / "run.json")
    outputs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        report.emit_report(report.load_records([tmp_path / "runs"]), out)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]


def test_report_needs_runs(tmp_path):
    with pytest.raises(ConfigError):
        report.emit_report([], tmp_path)
    with pytest.raises(ConfigError):
        report.load_records([tmp_path / "absent"])


# profiling --------------------------------------------------------------------

def test_profile_cells_follow_the_table_layout():
    row = profiling.ProfileRow("bc", "pointmass", [1.0, 3.0], [0.0, 0.0], [None, None])
    assert row.pretrain_cell == "2.0 ± 1.0" and row.train_cell == "-"
    assert row.memory_cell == "unavailable"
    gail = profiling.ProfileRow("gail", "pointmass", [0.0], [5.0], [2**20 * 300])
    assert gail.pretrain_cell == "-" and gail.memory_cell == "300"


def test_standardised_profile_settings():
    cfg = profiling.standardised(RunConfig(rollout_length=1024, replay_multiplier=5))
    assert cfg.rollout_length == 2048 and cfg.replay_multiplier == 3
    assert cfg.ppo_iterations == 10 and cfg.imitation_epochs == 25
    assert cfg.adversarial_epochs == 5


def test_peak_rss_sampler_sees_an_allocation():
    with profiling.PeakRss(period=0.01) as sampler:
        block = np.ones(50 * 2**20 // 8)
        import time
        time.sleep(0.05)
    if sampler.available:
        assert sampler.peak > block.nbytes


def test_child_peak_memory_excludes_the_parent_high_water_mark(expert_file):
    ballast = np.ones(400 * 2**20 // 8)     # parent RSS well above any tiny run
    _, _, peak = profiling.measure(tiny(algo="bc", dataset=str(expert_file)))
    if peak is not None:
        assert peak < ballast.nbytes
    del ballast


# command line ---------------------------------------------------------------

def test_cli_exit_code_for_bad_configuration(tmp_path, capsys):
    assert cli.main(["train", "--algo", "gail", "--out", str(tmp_path)]) == 1
    assert cli.main(["train", "--algo", "nope", "--out", str(tmp_path)]) == 1
    assert cli.main(["train", "--algo", "ppo", "--set", "hidden_size=32",
                     "--out", str(tmp_path)]) == 1
    assert cli.main(["evaluate", "--policy", str(tmp_path / "x.npz"), "--env", "pointmass"]) == 1
    assert cli.main(["report", "--runs", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_cli_exit_code_for_numerical_failure(tmp_path, monkeypatch):
    def fail(*a, **k):
        raise NumericalError("non-finite PPO loss")

    monkeypatch.setattr(training, "run_training", fail)
    assert cli.main(["train", "--algo", "ppo", "--out", str(tmp_path)]) == 2


def test_cli_train_evaluate_report(tmp_path, expert_file):
    common = ["--set", "strict=false", "--set", "hidden_size=16", "--set", "rollout_length=256",
              "--set", "eval_episodes=3", "--set", "horizon=50", "--steps", "512",
              "--set", "eval_interval=256", "--dataset", str(expert_file)]
    assert cli.main(["train", "--algo", "gmmil", "--seeds", "0", "1",
                     "--out", str(tmp_path / "g"), *common]) == 0
    assert (tmp_path / "g" / "seed_1" / "run.json").is_file()
    with open(tmp_path / "g" / "curve.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 2 * 2
    assert cli.main(["evaluate", "--policy", str(tmp_path / "g" / "seed_0" / "policy.npz"),
                     "--env", "pointmass", "--episodes", "4", "--out",
                     str(tmp_path / "e.csv")]) == 0
    assert cli.main(["report", "--runs", str(tmp_path / "g"), "--dataset", str(expert_file),
                     "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "summary.csv").is_file()
