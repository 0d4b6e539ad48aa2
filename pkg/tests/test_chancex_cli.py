import csv
import json
import math

import pytest

import chancex
from chancexLib.exceptions import ConfigError
from chancexLib.load_config import (
    DEFAULTS,
    build_agent_config,
    build_environment_config,
    coerce_value,
    elevation_grid,
    merge_config,
    parse_values,
    read_config_file,
)
from chancexLib.write_results import config_fingerprint, format_float, to_jsonable

SMALL_GRID = ["--x-min", "1.0", "--x-max", "3.0", "--x-step", "0.5"]


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestLoadConfig:

    def test_defaults_are_the_reference_setting(self):
        config = merge_config()
        assert (config["horizon"], config["epsilon"], config["wind_var"], config["lambda"]) == (1, 0.01, 0.2, 1e-12)
        assert config["safe_upper"] == math.inf

    def test_flags_override_the_file(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[CHANCEX]\n# comment\nepsilon = 0.1\nhorizon = 3\nm_x =\n", encoding="utf-8")

        file_values = read_config_file(str(path))
        config = merge_config(file_values, {"horizon": 2})

        assert config["epsilon"] == 0.1
        assert config["horizon"] == 2
        assert config["m_x"] == DEFAULTS["m_x"]

    def test_json_result_files_can_be_replayed(self, tmp_path):
        path = tmp_path / "previous.json"
        path.write_text(json.dumps({"config": {"epsilon": 0.05, "safe_upper": "inf"}}), encoding="utf-8")
        assert read_config_file(str(path)) == {"epsilon": 0.05, "safe_upper": math.inf}

    def test_missing_section(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[OTHER]\nepsilon = 0.1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_config_file(str(path))

    @pytest.mark.parametrize("key, raw", [("horizon", "2.5"), ("epsilon", "abc"), ("driver", "random"), ("nope", "1")])
    def test_malformed_values(self, key, raw):
        with pytest.raises(ConfigError):
            coerce_value(key, raw)

    def test_comma_lists(self):
        assert parse_values("lambda", "1e-12, 1e1,1e2") == [1e-12, 10.0, 100.0]
        with pytest.raises(ConfigError):
            parse_values("epsilon", "0.1,,0.2")

    @pytest.mark.parametrize("flags", [{"epsilon": 1.5}, {"x_min": 3.0, "x_max": 1.0}, {"runs": 0}])
    def test_range_checks(self, flags):
        with pytest.raises(ConfigError):
            merge_config({}, flags)

    def test_builders(self):
        config = merge_config({}, {"driver": "goal", "steps": 7, "seed": 3})
        agent = build_agent_config(config)
        env = build_environment_config(config)

        assert not agent.is_chance_driven
        assert agent.wind_mean_profile == env.wind_mean_profile
        assert (env.horizon_length, env.rng_seed) == (7, 3)

    def test_elevation_grid_includes_both_ends(self):
        grid = elevation_grid(merge_config({}, {"x_min": 0.0, "x_max": 1.0, "x_step": 0.1}))
        assert len(grid) == 11
        assert grid[-1] == pytest.approx(1.0)


class TestWriteResults:

    def test_nine_significant_digits(self):
        assert format_float(1.0 / 3.0) == "0.333333333"
        assert format_float(math.inf) == "inf"

    def test_json_safe_values(self):
        assert to_jsonable({"a": (1.0 / 3.0, math.nan), "b": True}) == {"a": [0.333333333, "nan"], "b": True}

    def test_fingerprint_ignores_key_order(self):
        assert config_fingerprint({"a": 1, "b": 2.0}) == config_fingerprint({"b": 2.0, "a": 1})


class TestControlLawCommand:

    def test_vary_epsilon(self, tmp_path):
        out = tmp_path / "law.csv"
        code = chancex.main(["control-law", "--vary", "epsilon", "--values", "0.01,0.5", "--out", str(out)] + SMALL_GRID)
        rows = read_rows(out)

        assert code == 0
        assert rows[0] == ["x_t", "a_t", "variant"]
        assert len(rows) == 1 + 2 * 5
        assert {row[2] for row in rows[1:]} == {"epsilon=0.01", "epsilon=0.5"}

        sidecar = json.loads((tmp_path / "law.json").read_text(encoding="utf-8"))
        assert sidecar["tool_version"] == chancex.__version__
        assert sidecar["vary"] == "epsilon"
        assert len(sidecar["config_sha256"]) == 64

    def test_goal_driver_with_a_lambda_list(self, tmp_path):
        out = tmp_path / "goal.csv"
        code = chancex.main(["control-law", "--driver", "goal", "--lambda", "1e-12,1e1,1e2", "--out", str(out)] + SMALL_GRID)
        assert code == 0
        assert len({row[2] for row in read_rows(out)[1:]}) == 3

    def test_empty_grid_is_a_config_error(self, tmp_path, capsys):
        code = chancex.main(["control-law", "--x-min", "3", "--x-max", "1", "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_parameter_to_vary(self, tmp_path):
        code = chancex.main(["control-law", "--vary", "gravity", "--values", "1,2", "--out", str(tmp_path / "x.csv")])
        assert code == 1

    def test_bad_flag_exits_with_code_one(self):
        with pytest.raises(SystemExit) as info:
            chancex.main(["control-law", "--no-such-flag"])
        assert info.value.code == 1


class TestSimulateCommand:

    def test_writes_a_full_episode(self, tmp_path):
        out = tmp_path / "episode.json"
        assert chancex.main(["simulate", "--seed", "7", "--driver", "chance", "--epsilon", "0.01", "--out", str(out)]) == 0

        payload = json.loads(out.read_text(encoding="utf-8"))
        assert len(payload["record"]["actions"]) == 20
        assert payload["config"]["seed"] == 7
        assert "draft_mean" in payload["repo_defaults"]

    def test_same_seed_gives_identical_bytes(self, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        args = ["simulate", "--seed", "7", "--steps", "8"]
        chancex.main(args + ["--out", str(first)])
        chancex.main(args + ["--out", str(second)])
        assert first.read_bytes() == second.read_bytes()

    def test_goal_driven_episode(self, tmp_path):
        out = tmp_path / "goal.json"
        code = chancex.main(["simulate", "--driver", "goal", "--m-x", "2", "--var-x", "0.18478", "--steps", "5", "--out", str(out)])
        assert code == 0

    def test_value_lists_are_rejected(self, tmp_path):
        assert chancex.main(["simulate", "--epsilon", "0.1,0.2", "--out", str(tmp_path / "x.json")]) == 1

    def test_unwritable_output_is_an_io_error(self, tmp_path):
        blocker = tmp_path / "file.txt"
        blocker.write_text("", encoding="utf-8")
        assert chancex.main(["simulate", "--steps", "2", "--out", str(blocker / "out.json")]) == 3


class TestMonteCarloCommand:

    def test_violation_table(self, tmp_path):
        out = tmp_path / "mc.csv"
        assert chancex.main(["mc", "--runs", "20", "--out", str(out)]) == 0

        rows = read_rows(out)
        assert rows[0] == ["t", "violation_ratio", "elevation_q05", "elevation_q50", "elevation_q95"]
        assert len(rows) == 21

        summary = json.loads((tmp_path / "mc.json").read_text(encoding="utf-8"))
        assert summary["summary"]["runs"] == 20
        assert summary["exceeds_epsilon"] == (summary["summary"]["max_violation"] > 0.01)

    def test_outputs_are_stable_across_runs(self, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        chancex.main(["mc", "--runs", "5", "--steps", "6", "--out", str(first)])
        chancex.main(["mc", "--runs", "5", "--steps", "6", "--out", str(second)])
        assert first.read_bytes() == second.read_bytes()

    def test_zero_runs_is_rejected(self, tmp_path):
        assert chancex.main(["mc", "--runs", "0", "--out", str(tmp_path / "x.csv")]) == 1
