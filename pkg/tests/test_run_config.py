"""Tests for run-configuration parsing and validation."""

import json

import pytest

from mda_impute.errors import ConfigError
from mda_impute.run_config import ChainSettings, load_run_config, parse_matrix, validate_run_config

BASE_INI = """
[data]
path = trial.csv
treatment_columns = x2

[chain]
iterations = 200
burn_in = 50
"""


def _payload(**sections) -> dict:
    payload = {"data": {"path": "trial.csv"}, "chain": {"iterations": 200, "burn_in": 50, "seed": 1}}
    for name, values in sections.items():
        payload.setdefault(name, {}).update(values)
    return payload


@pytest.fixture
def ini(tmp_path):
    def write(extra: str = "", seed: bool = True):
        text = BASE_INI + ("seed = 3\n" if seed else "") + extra
        path = tmp_path / "run.ini"
        path.write_text(text)
        return path

    return write


class TestParseMatrix:
    """Matrix text in INI values."""

    @pytest.mark.parametrize(
        ("text", "expected"),
        [
            ("2.5", 2.5),
            ("1, 2", [1.0, 2.0]),
            ("1 0; 0 1", [[1.0, 0.0], [0.0, 1.0]]),
            ("[1, 0.5]", [1.0, 0.5]),
            ("", None),
            (3.0, 3.0),
        ],
    )
    def test_forms(self, text, expected):
        assert parse_matrix(text) == expected


class TestLoading:
    """Reading configuration files."""

    def test_ini_defaults(self, ini, tmp_path):
        config = load_run_config(ini())
        assert config.data.path == (tmp_path / "trial.csv").resolve()
        assert config.data.treatment_columns == ["x2"]
        assert config.chain.seed == 3
        assert config.chain.retained == 150
        assert config.sampler.kind == "gibbs"
        assert config.imputation.mechanism == "MAR"
        assert config.prior.preset == "weakly_informative"

    def test_cli_overrides(self, ini, tmp_path):
        config = load_run_config(ini(seed=False), seed=11, out=tmp_path / "out")
        assert config.chain.seed == 11
        assert config.output.directory == tmp_path / "out"

    def test_seed_required(self, ini):
        with pytest.raises(ConfigError, match="seed"):
            load_run_config(ini(seed=False))

    def test_mechanism_case_insensitive(self, ini):
        config = load_run_config(ini("\n[imputation]\nmechanism = j2r\nm = 5\n"))
        assert config.imputation.mechanism == "J2R"

    def test_prior_matrices(self, ini):
        config = load_run_config(ini("\n[prior]\npreset = custom\nnu0 = 5\na = 1\nm = 0.5, 0\n"))
        assert config.prior.nu0 == 5.0
        assert config.prior.m == [0.5, 0.0]

    def test_manifest_round_trip(self, ini, tmp_path):
        config = load_run_config(ini())
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"command": "fit", "config": config.model_dump(mode="json")}))
        assert load_run_config(manifest) == config

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.ini")

    def test_broken_manifest(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="Cannot parse"):
            load_run_config(path)

    def test_unknown_key(self, ini):
        with pytest.raises(ConfigError, match="sampler"):
            load_run_config(ini("\n[sampler]\nspeed = fast\n"))


class TestCrossFieldRules:
    """Rules spanning several sections."""

    @pytest.mark.parametrize(
        ("sections", "message"),
        [
            ({"sampler": {"kind": "imh-joint"}}, "binary or ordinal"),
            (
                {"sampler": {"kind": "imh-joint"}, "data": {"outcome_kind": "binary"}},
                "general_prior",
            ),
            ({"sampler": {"kind": "fda"}, "data": {"outcome_kind": "binary"}}, "continuous"),
            ({"data": {"outcome_kind": "ordinal", "categories": 2}}, "categories >= 3"),
            ({"data": {"outcome_kind": "binary", "categories": 3}}, "exactly 2"),
            ({"imputation": {"selection": "per-chain", "m": 4}}, "chains >= m"),
            ({"imputation": {"m": 200}}, "retained draws"),
            ({"prior": {"preset": "custom"}}, "custom"),
            ({"prior": {"preset": "diffuse"}}, "precision"),
        ],
    )
    def test_rejected(self, sections, message):
        with pytest.raises(ConfigError, match=message):
            validate_run_config(_payload(**sections))

    def test_imh_with_general_prior(self):
        config = validate_run_config(
            _payload(
                sampler={"kind": "imh-marginal"},
                data={"outcome_kind": "ordinal", "categories": 4},
                general_prior={"weight": "det_power", "delta": "1.5"},
            )
        )
        assert config.categories == 4
        assert config.general_prior.delta == 1.5

    def test_binary_categories_implied(self):
        assert validate_run_config(_payload(data={"outcome_kind": "binary"})).categories == 2


class TestChainSettings:
    """Chain length checks."""

    def test_burn_in_must_leave_draws(self):
        with pytest.raises(ValueError, match="burn_in"):
            ChainSettings(iterations=100, burn_in=100)

    def test_retained_with_thinning(self):
        assert ChainSettings(iterations=1000, burn_in=100, thin=3).retained == 300
