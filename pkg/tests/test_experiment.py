from pathlib import Path

import numpy as np
import pytest

from hcbandit.cli import main
from hcbandit.errors import ConsistencyError, InvalidConfigError
from hcbandit.experiment import (
    LOG_COLUMNS,
    ExperimentConfig,
    ExperimentLog,
    PolicySpec,
    TreeSpec,
    WorldSpec,
    config_from_dict,
    format_table,
    load_config,
    report,
    run_experiment,
    with_overrides,
)

ROOT = Path(__file__).resolve().parents[1]

TINY_TOML = """
[world]
num_users = 6
num_items = 150
dim = 4
num_clusters = 4
seed = 2
reward_scale = 8.0
reward_bias = 3.0

[tree]
level_sizes = [1, 4, 12]
max_iter = 20

[run]
rounds = 6
seeds = [0, 1]
checkpoints = [2, 5, 100]

[[policy]]
name = "flat"

[[policy]]
name = "hcb"
base = "thompson"
v = 0.1

[[policy]]
name = "phcb"

[[policy]]
name = "cb_leaf"

[[policy]]
name = "cb_category"
base = "epsgreedy"
epsilon = 0.05
"""


def tiny(**run):
    cfg = ExperimentConfig(
        world=WorldSpec(num_users=6, num_items=150, dim=4, num_clusters=4, seed=2, reward_scale=8.0, reward_bias=3.0),
        tree=TreeSpec(level_sizes=[1, 4, 12], max_iter=20),
        rounds=6, seeds=[0, 1],
    )
    for k, v in run.items():
        setattr(cfg, k, v)
    return cfg.validate()


@pytest.fixture
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML)
    return path


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig().validate()
        assert (cfg.budget, cfg.q, cfg.p) == (50, 10.0, 0.1)
        assert cfg.tree.level_sizes == [1, 20, 400]
        assert cfg.checkpoints == [100, 500, 1000, 2000]

    @pytest.mark.parametrize("field,value", [("rounds", 0), ("q", -1.0), ("p", 1.5), ("seeds", []),
                                             ("seeds", [1, 1]), ("policies", []), ("budget", 2)])
    def test_invalid(self, field, value):
        cfg = ExperimentConfig()
        setattr(cfg, field, value)
        with pytest.raises(InvalidConfigError):
            cfg.validate()

    def test_unknown_policy_type(self):
        with pytest.raises(InvalidConfigError):
            ExperimentConfig(policies=[PolicySpec("x", "ucb9")]).validate()

    def test_toml_grammar(self, tiny_toml):
        cfg = load_config(tiny_toml)
        assert [p.name for p in cfg.policies] == ["flat", "hcb", "phcb", "cb_leaf", "cb_category"]
        assert cfg.policies[1].estimator.kind == "thompson"
        assert cfg.policies[4].estimator.epsilon == 0.05
        assert cfg.rounds == 6 and cfg.seeds == [0, 1]

    def test_unknown_keys(self):
        with pytest.raises(InvalidConfigError):
            config_from_dict({"run": {"roundz": 3}})
        with pytest.raises(InvalidConfigError):
            config_from_dict({"world": {"users": 3, "colour": 1}})
        with pytest.raises(InvalidConfigError):
            config_from_dict({"policy": [{"name": "flat", "gamma": 1}]})

    def test_shipped_config_loads(self):
        cfg = load_config(ROOT / "configs" / "desk.toml")
        assert cfg.world.num_items == 10_000 and len(cfg.seeds) == 10

    def test_overrides(self):
        cfg = with_overrides(ExperimentConfig(), seeds=[3], policies=["hcb"], budget=30)
        assert cfg.seeds == [3] and [p.name for p in cfg.policies] == ["hcb"] and cfg.budget == 30
        with pytest.raises(InvalidConfigError):
            with_overrides(ExperimentConfig(), policies=["nope"])


class TestRun:
    def test_single_round(self):
        log = run_experiment(tiny(rounds=1, seeds=[0]))
        assert len(log.rows) == 5
        for r in log.rows:
            assert r.round == 1 and r.user_count == 6
            assert 0 <= r.cum_reward_expected <= 6
            assert r.cum_regret_expected >= -1e-12

    def test_rows_complete(self):
        log = run_experiment(tiny())
        assert len(log.rows) == 2 * 5 * 6
        for seed in (0, 1):
            for p in log.policies():
                assert [r.round for r in log.select(seed, p)] == list(range(1, 7))

    def test_budget_traces(self):
        log = run_experiment(tiny())
        assert sum(t.violations for t in log.budget.values()) == 0
        for (seed, name), t in log.budget.items():
            assert t.max_total.max() <= 50
            if name == "phcb":
                assert t.max_stage.max() <= 25

    def test_csv_deterministic(self, tmp_path):
        run_experiment(tiny()).to_csv(tmp_path / "a.csv")
        run_experiment(tiny()).to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == ",".join(LOG_COLUMNS)

    def test_policy_isolation(self):
        cfg = tiny()
        forward = run_experiment(cfg)
        backward = run_experiment(with_overrides(cfg, policies=[p.name for p in reversed(cfg.policies)]))
        for p in forward.policies():
            assert forward.select(policy=p) == backward.select(policy=p)

    def test_csv_round_trip(self, tmp_path):
        log = run_experiment(tiny(seeds=[0]))
        log.to_csv(tmp_path / "log.csv")
        assert ExperimentLog.from_csv(tmp_path / "log.csv").rows == log.rows


class TestReport:
    def test_single_seed_zero_std(self):
        rows = report(run_experiment(tiny(seeds=[4])), checkpoints=[2, 6])
        assert rows and all(r.reward_std == 0 and r.regret_std == 0 for r in rows)

    def test_identical_runs_average_to_one_run(self):
        one = run_experiment(tiny(seeds=[0]))
        copies = [ExperimentLog(list(one.rows)) for _ in range(3)]
        a, b = report(one, [3, 6]), report(copies, [3, 6])
        for x, y in zip(a, b):
            assert x.reward_mean == y.reward_mean and x.regret_mean == y.regret_mean and y.reward_std == 0

    def test_mean_and_std(self):
        log = run_experiment(tiny())
        rows = {(r.policy, r.round): r for r in report(log, [6])}
        vals = np.array([log.final(s, "hcb", 6).cum_reward_realized for s in (0, 1)])
        assert rows[("hcb", 6)].reward_mean == pytest.approx(vals.mean())
        assert rows[("hcb", 6)].reward_std == pytest.approx(vals.std())

    def test_unreachable_checkpoints_dropped(self):
        rows = report(run_experiment(tiny(seeds=[0])), [2, 5, 100])
        assert sorted({r.round for r in rows}) == [2, 5]

    def test_inconsistent_policies(self):
        log = run_experiment(tiny())
        log.rows = [r for r in log.rows if not (r.seed == 1 and r.policy == "hcb")]
        with pytest.raises(ConsistencyError):
            report(log)

    def test_table_layout(self):
        text = format_table(report(run_experiment(tiny(seeds=[0, 1])), [2, 6]))
        lines = text.splitlines()
        assert lines[0].split() == ["policy", "2", "6"]
        assert len(lines) == 2 + 5 and "±" in lines[2]


class TestCli:
    def test_full_pipeline(self, tmp_path, tiny_toml, capsys):
        assert main(["gen-world", "--config", str(tiny_toml), "--out", str(tmp_path / "w"), "--format", "csv"]) == 0
        assert {p.name for p in (tmp_path / "w").iterdir()} == {"items.csv", "users.csv", "labels.csv"}
        assert main(["build-tree", "--config", str(tiny_toml), "--out", str(tmp_path / "t"),
                     "--items", str(tmp_path / "w" / "items.csv"), "--users", str(tmp_path / "w" / "users.csv")]) == 0
        assert (tmp_path / "t" / "tree.json").exists()
        assert main(["run", "--config", str(tiny_toml), "--out", str(tmp_path / "r"), "--seed", "0,3",
                     "--policies", "flat,phcb"]) == 0
        log = ExperimentLog.from_csv(tmp_path / "r" / "log.csv")
        assert log.seeds() == [0, 3] and log.policies() == ["flat", "phcb"]
        assert main(["report", "--config", str(tiny_toml), "--out", str(tmp_path / "s"),
                     str(tmp_path / "r" / "log.csv")]) == 0
        assert (tmp_path / "s" / "summary.csv").read_text().startswith("policy,round,seeds")
        assert "±" in (tmp_path / "s" / "summary.txt").read_text()

    def test_imported_world_with_tree_file(self, tmp_path, tiny_toml):
        main(["gen-world", "--config", str(tiny_toml), "--out", str(tmp_path)])
        main(["build-tree", "--config", str(tiny_toml), "--out", str(tmp_path), "--items",
              str(tmp_path / "items.emb"), "--users", str(tmp_path / "users.emb")])
        cfg = tmp_path / "imp.toml"
        cfg.write_text(TINY_TOML.replace("[world]\n", '[world]\nsource = "import"\nitems = "items.emb"\n'
                                         'users = "users.emb"\nlabels = "labels.csv"\n')
                       .replace("[tree]\n", '[tree]\nfile = "tree.json"\n'))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0

    def test_config_error_exit_2(self, tmp_path, tiny_toml, capsys):
        assert main(["run", "--config", str(tiny_toml), "--budget", "1", "--out", str(tmp_path)]) == 2
        bad = tmp_path / "bad.toml"
        bad.write_text("[run\nrounds = 3")
        assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_input_error_exit_3(self, tmp_path, tiny_toml):
        assert main(["report", "--out", str(tmp_path), str(tmp_path / "missing.csv")]) == 3
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        assert main(["report", "--out", str(tmp_path), str(bad)]) == 3
        assert main(["build-tree", "--config", str(tiny_toml), "--out", str(tmp_path),
                     "--items", str(tmp_path / "nope.emb")]) == 3

    def test_consistency_error_exit_4(self, tmp_path, tiny_toml):
        main(["run", "--config", str(tiny_toml), "--out", str(tmp_path / "a"), "--seed", "0"])
        main(["run", "--config", str(tiny_toml), "--out", str(tmp_path / "b"), "--seed", "1",
              "--policies", "flat"])
        assert main(["report", "--out", str(tmp_path), str(tmp_path / "a" / "log.csv"),
                     str(tmp_path / "b" / "log.csv")]) == 4
        main(["build-tree", "--config", str(tiny_toml), "--out", str(tmp_path)])
        cfg = tmp_path / "t.toml"
        # tree built over 150 items, world now has only 100
        cfg.write_text(TINY_TOML.replace("[tree]\n", '[tree]\nfile = "tree.json"\n')
                       .replace("num_items = 150", "num_items = 100"))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 4

    def test_malformed_tree_file_exit_3(self, tmp_path, tiny_toml):
        main(["build-tree", "--config", str(tiny_toml), "--out", str(tmp_path)])
        tree = tmp_path / "tree.json"
        tree.write_text(tree.read_text().replace('"parent_id": 0', '"parent_id": 1', 1))
        cfg = tmp_path / "t.toml"
        cfg.write_text(TINY_TOML.replace("[tree]\n", '[tree]\nfile = "tree.json"\n'))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 3
