"""
Tests for key=value configuration parsing and validation
"""

import pytest

from config import (
    CommandConfig,
    load_config_file,
    parse_key_values,
    resolve_config,
)
from errors import ConfigError
from glm_core import Family, Link


class TestParsing:
    def test_key_values(self):
        lines = ["# planning inputs", "", "alpha = 0.01", "--mean-y=0.5", 'family="bernoulli"', "empty=", "junk"]
        assert parse_key_values(lines) == {"alpha": "0.01", "mean_y": "0.5", "family": "bernoulli"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config_file(tmp_path / "study.env")

    def test_command_line_overrides_file(self, tmp_path):
        path = tmp_path / "study.env"
        path.write_text("f2=0.04\nn=100\nalpha=0.01\n", encoding="utf-8")
        config = resolve_config("power", {"n": "393", "f2": None}, str(path))
        assert config.get("n") == 393
        assert config.get("f2") == 0.04
        assert config.get("alpha") == 0.01


class TestValidation:
    def test_defaults_filled(self):
        config = resolve_config("power", {"n": "10", "f2": "0.02"})
        assert config.validated
        assert config.get("alpha") == 0.05
        assert config.get("df") == 1
        assert config.seed == 0

    def test_reports_every_problem(self):
        with pytest.raises(ConfigError) as excinfo:
            CommandConfig("power", {"colour": "red", "alpha": "high"}).validate()
        message = excinfo.value.message
        assert "unknown parameter 'colour'" in message
        assert "malformed value for 'alpha'" in message
        assert "missing required parameter 'n'" in message

    def test_unknown_command(self):
        with pytest.raises(ConfigError, match="unknown command"):
            CommandConfig("plot").validate()

    def test_exactly_one_effect_source(self):
        with pytest.raises(ConfigError, match="exactly one"):
            resolve_config("power", {"n": "10", "f2": "0.02", "pseudo_r2": "0.1"})
        with pytest.raises(ConfigError, match="exactly one"):
            resolve_config("samplesize", {"power": "0.8"})
        with pytest.raises(ConfigError, match="mean_y"):
            resolve_config("samplesize", {"power": "0.8", "phi": "1", "family": "bernoulli", "link": "logit"})

    def test_bad_family(self):
        with pytest.raises(ConfigError, match="unknown family"):
            resolve_config("power", {"n": "10", "phi": "1", "mean_y": "0.5", "family": "weibull", "link": "log"})

    def test_range_rules(self):
        with pytest.raises(ConfigError, match="power must lie"):
            resolve_config("samplesize", {"power": "0.01", "f2": "0.02"})
        with pytest.raises(ConfigError, match="seed"):
            resolve_config("power", {"n": "10", "f2": "0.02", "seed": "-1"})
        with pytest.raises(ConfigError, match="rel_errors"):
            resolve_config("table1", {"rel_errors": "-1.5,0.1"})

    def test_verify_needs_one_design_source(self):
        with pytest.raises(ConfigError, match="either design"):
            resolve_config("verify", {})
        config = resolve_config("verify", {"model": "poisson-log"})
        assert config.get("reps") == 2000

    def test_family_link(self):
        config = resolve_config("effectsize", {"family": "gamma", "link": "log", "aux": "2", "ref_mean": "4"})
        fl = config.family_link()
        assert (fl.family, fl.link, fl.aux) == (Family.GAMMA, Link.LOG, 2.0)
        assert resolve_config("table1", {}).family_link() is None


class TestListsAndAxes:
    def test_float_lists(self):
        config = resolve_config("table1", {"targets": "0.7, 0.8", "rel_errors": "-0.1,0.1"})
        assert config.get("targets") == (0.7, 0.8)
        assert config.get("rel_errors") == (-0.1, 0.1)

    def test_axes(self):
        config = resolve_config(
            "relerror-sweep",
            {"family": "bernoulli", "link": "logit", "ref_mean": "0.25", "axis": "a_x=0.5,1.5;s_x2=0.01"},
        )
        assert config.get("axis") == (("a_x", (0.5, 1.5)), ("s_x2", (0.01,)))

    def test_malformed_axis(self):
        with pytest.raises(ConfigError, match="axis"):
            resolve_config("relerror-sweep", {"figure": "logistic", "axis": "a_x"})


class TestEcho:
    @pytest.mark.parametrize("command,values", [
        ("samplesize", {"power": "0.8", "phi": "1", "mean_y": "0.6156", "family": "bernoulli", "link": "logit"}),
        ("relerror-sweep", {"figure": "gamma", "variant": "mean-rho", "axis": "aux=1,2", "n_mc": "1000"}),
        ("verify", {"model": "gamma-log", "reps": "10", "out": "verify.csv"}),
        ("table1", {"targets": "0.6,0.8"}),
    ])
    def test_round_trip(self, command, values):
        config = resolve_config(command, values)
        lines = config.to_lines()
        assert lines[0] == f"command={command}"
        assert CommandConfig.from_lines(lines) == config

    def test_metadata_keys_ignored(self):
        config = resolve_config("power", {"n": "10", "f2": "0.02"})
        lines = ["version=1.0.0", *config.to_lines(), "information_estimator=expected"]
        assert CommandConfig.from_lines(lines) == config

    def test_echo_needs_command(self):
        with pytest.raises(ConfigError):
            CommandConfig.from_lines(["n=10"])
