import csv
import json

import pytest
import yaml

from reinforced_lsmc import cli
from reinforced_lsmc.cli import CSV_COLUMNS, ExperimentConfig, config_hash, emit_results, main, preset, run_experiment
from reinforced_lsmc.problems import ConfigurationError

SMALL = {
    "name": "small",
    "problem": {"type": "max_call", "d": 2, "horizon": 4, "maturity": 1.0},
    "methods": [{"algorithm": "standard", "basis": "psi1"}, {"algorithm": "hrr_b", "basis": "psi1", "depth": 1}],
    "train_paths": 500,
    "test_paths": 800,
    "seed": 3,
}


def write_config(tmp_path, data, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def record(**over):
    rec = {c: 0 for c in CSV_COLUMNS}
    rec.update(method="SR", basis="psi1", lower_bound=13.7724567891, mc_half_width_997=0.0152345, v0=1234567.891)
    rec.update(over)
    return rec


class TestEmit:
    def test_single_record_two_lines(self, tmp_path):
        csv_path, json_path = emit_results([record()], tmp_path, "one")
        rows = read_csv(csv_path)
        assert len(rows) == 2 and tuple(rows[0]) == CSV_COLUMNS
        assert json.loads(json_path.read_text())["records"][0]["method"] == "SR"

    def test_number_formatting(self, tmp_path):
        csv_path, _ = emit_results([record()], tmp_path)
        row = dict(zip(*read_csv(csv_path)))
        assert row["lower_bound"] == "13.7725"
        assert row["mc_half_width_997"] == "0.0152"
        assert row["v0"] == "1.23457e+06"
        assert row["M"] == "0"

    def test_config_hash_round_trip(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL)
        _, json_path = emit_results([record()], tmp_path, configs=[cfg.raw])
        entry = json.loads(json_path.read_text())["configs"][0]
        assert config_hash(entry["config"]) == entry["config_hash"] == cfg.config_hash()
        assert ExperimentConfig.from_dict(entry["config"]).config_hash() == cfg.config_hash()

    def test_no_records(self, tmp_path):
        with pytest.raises(ValueError):
            emit_results([], tmp_path)


class TestConfig:
    @pytest.mark.parametrize(
        "patch,key",
        [
            ({"colour": 1}, "colour"),
            ({"problem": {**SMALL["problem"], "strik": 1}}, "problem.strik"),
            ({"methods": [{"algorithm": "standard", "basis": "psi1", "deep": 2}]}, "methods[0].deep"),
            ({"model": {"type": "gbm", "vol": 0.3}}, "model.vol"),
        ],
    )
    def test_unknown_key_named(self, patch, key):
        with pytest.raises(ConfigurationError, match=key.replace("[", r"\[").replace("]", r"\]")):
            ExperimentConfig.from_dict({**SMALL, **patch})

    @pytest.mark.parametrize(
        "patch",
        [
            {"seed_test": 3},
            {"train_paths": 0},
            {"methods": []},
            {"methods": [{"algorithm": "magic", "basis": "psi1"}]},
            {"methods": [{"algorithm": "standard", "basis": "psi9"}]},
            {"methods": [{"algorithm": "standard", "basis": "psi1", "depth": 2}]},
            {"truncate": True},
        ],
    )
    def test_invalid_values(self, patch):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({**SMALL, **patch})

    def test_defaults(self):
        cfg = ExperimentConfig.from_dict({"problem": SMALL["problem"], "methods": SMALL["methods"]})
        assert (cfg.train_paths, cfg.test_paths) == (100_000, 200_000)
        assert cfg.seed_test == cfg.seed + 1
        assert cfg.raw == ExperimentConfig.from_dict(cfg.raw).raw

    def test_experiment_list(self, tmp_path):
        path = write_config(tmp_path, {"experiments": [SMALL, {**SMALL, "name": "other"}]})
        assert [c.name for c in cli.load_config(path)] == ["small", "other"]


class TestPresets:
    def test_all_parse(self):
        for name in cli.PRESETS:
            assert all(isinstance(ExperimentConfig.from_dict(b), ExperimentConfig) for b in preset(name))

    def test_table2_parameters(self):
        (cfg,) = [ExperimentConfig.from_dict(b) for b in preset("table2_swing")]
        s = cfg.problem.spec
        assert (s.state_dim, s.horizon, s.maturity, s.rights) == (5, 24, 2.0, 4)
        assert sorted({m["depth"] for m in cfg.methods}) == [0, 1, 2, 3, 5]

    def test_table3_parameters(self):
        (cfg,) = [ExperimentConfig.from_dict(b) for b in preset("table3_gas")]
        s = cfg.problem.spec
        assert (s.stride_days, s.horizon, s.levels, s.rate, s.initial_fill) == (7, 52, 8, 0.1, 0.5)
        assert tuple(cfg.model.x0) == (100.0, 100.0)
        assert cfg.y0 == 0.5

    def test_table1_bases(self):
        (cfg,) = [ExperimentConfig.from_dict(b) for b in preset("table1_d2")]
        assert {m["basis"] for m in cfg.methods if m["algorithm"] == "standard"} == {"psi1", "psi1g", "psi2", "psi3"}
        assert cfg.problem.horizon == 9 and cfg.problem.spec.state_dim == 2

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            preset("table9")


class TestMain:
    def test_run_writes_results(self, tmp_path):
        path = write_config(tmp_path, SMALL)
        assert main(["run", str(path), "--out", str(tmp_path / "o"), "-q"]) == 0
        rows = read_csv(tmp_path / "o" / "exp.csv")
        assert [r[0] for r in rows[1:]] == ["SR", "HRR-B"]
        assert rows[1][CSV_COLUMNS.index("seed_test")] == "4"

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RLSMC_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["run", str(write_config(tmp_path, SMALL)), "-q"]) == 0
        assert (tmp_path / "env" / "exp.json").exists()

    def test_flag_overrides(self, tmp_path):
        path = write_config(tmp_path, SMALL)
        assert main(["run", str(path), "--out", str(tmp_path), "--seed", "7", "--depth", "2", "--train-paths", "300", "--no-counters", "-q"]) == 0
        rows = read_csv(tmp_path / "exp.csv")
        col = {c: i for i, c in enumerate(CSV_COLUMNS)}
        hrr = rows[2]
        assert (hrr[col["I"]], hrr[col["M"]], hrr[col["seed_train"]], hrr[col["seed_test"]]) == ("2", "300", "7", "8")
        assert hrr[col["n_lsq_solves"]] == ""

    def test_unknown_key_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, {**SMALL, "colour": "red"})
        assert main(["run", str(path), "--out", str(tmp_path)]) == 2
        assert "colour" in capsys.readouterr().err

    def test_stage_error_exit_code(self, tmp_path, monkeypatch, capsys):
        def broken(*args, **kwargs):
            raise FloatingPointError("singular")

        monkeypatch.setattr(cli, "solve", broken)
        assert main(["run", str(write_config(tmp_path, SMALL)), "--out", str(tmp_path), "-q"]) == 3
        assert "stage 'train'" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["run", str(write_config(tmp_path, SMALL)), "--out", str(blocker / "sub"), "-q"]) == 3
        assert "stage 'emit'" in capsys.readouterr().err

    def test_list(self, capsys):
        assert main(["list"]) == 0
        assert "table3_gas" in capsys.readouterr().out.split()

    def test_rerun_reproduces_numbers(self, tmp_path):
        path = write_config(tmp_path, SMALL)
        outs = []
        for k in range(2):
            assert main(["run", str(path), "--out", str(tmp_path / str(k)), "-q"]) == 0
            outs.append(read_csv(tmp_path / str(k) / "exp.csv"))
        timing = {CSV_COLUMNS.index("t_train_s"), CSV_COLUMNS.index("t_eval_s")}
        strip = lambda rows: [[v for i, v in enumerate(r) if i not in timing] for r in rows]
        assert strip(outs[0]) == strip(outs[1])


def test_run_experiment_records_share_paths():
    cfg = ExperimentConfig.from_dict(SMALL)
    recs = run_experiment(cfg)
    assert {(r["seed_train"], r["seed_test"], r["M_test"]) for r in recs} == {(3, 4, 800)}
    assert recs[0]["n_lsq_solves"] == 4 * 2
    assert all(r["config_hash"] == cfg.config_hash() for r in recs)
