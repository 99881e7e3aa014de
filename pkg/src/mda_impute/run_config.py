"""Pydantic models for the run configuration file.

A run is described by an INI file with the sections ``[data]``, ``[prior]``,
``[general_prior]``, ``[sampler]``, ``[chain]``, ``[imputation]`` and
``[output]``. A ``manifest.json`` written by an earlier run is accepted too.
"""

import configparser
import json
import re
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mda_impute.config import Config
from mda_impute.errors import ConfigError

MatrixSpec = float | list[float] | list[list[float]]

_ROW_SPLIT = re.compile(r"\s*;\s*")
_ENTRY_SPLIT = re.compile(r"[,\s]+")


def parse_matrix(text: Any) -> Any:
    """Parse ``"1"``, ``"1, 2"`` or ``"1 0; 0 1"`` into a scalar, list or nested list."""
    if not isinstance(text, str):
        return text
    text = text.strip().strip("[]")
    if not text:
        return None
    rows = [row for row in _ROW_SPLIT.split(text) if row]
    parsed = [[float(v) for v in _ENTRY_SPLIT.split(row.strip()) if v] for row in rows]
    if len(parsed) > 1:
        return parsed
    if len(parsed[0]) == 1:
        return parsed[0][0]
    return parsed[0]


def _parse_list(text: Any) -> Any:
    if isinstance(text, str):
        return [item.strip() for item in text.split(",") if item.strip()]
    return text


class _Section(BaseModel):
    model_config = ConfigDict(str_strip_whitespace=True, extra="forbid")


class DataSection(_Section):
    """Input dataset and outcome coding."""

    path: Path
    outcome_kind: Literal["continuous", "binary", "ordinal"] = "continuous"
    categories: int | None = Field(None, ge=2)
    reference_arm: str | None = None
    treatment_columns: list[str] = Field(default_factory=list)

    @field_validator("treatment_columns", mode="before")
    @classmethod
    def split_columns(cls, v):
        """Accept a comma-separated column list."""
        return _parse_list(v)


class PriorSection(_Section):
    """MNIW prior, given as a preset or explicit matrices.

    Matrices accept a scalar (times identity), a list (diagonal) or rows
    separated by ``;``.
    """

    preset: Literal["weakly_informative", "jeffreys_flat", "diffuse", "custom"] = (
        "weakly_informative"
    )
    nu0: float | None = None
    a: MatrixSpec | None = None
    m: MatrixSpec | None = None
    b0: MatrixSpec | None = None
    precision: float | None = Field(None, ge=0)
    cutoff_mean: float = 0.0
    cutoff_variance: float = Field(default_factory=lambda: Config.DEFAULT_CUTOFF_VARIANCE, gt=0)
    ridge: bool = False

    @field_validator("a", "m", "b0", mode="before")
    @classmethod
    def parse_matrices(cls, v):
        """Parse matrix text."""
        try:
            return parse_matrix(v)
        except ValueError as exc:
            raise ValueError(f"Cannot parse matrix {v!r}") from exc

    @model_validator(mode="after")
    def check_preset(self):
        """Custom priors need every matrix spelled out."""
        if self.preset == "custom" and (self.nu0 is None or self.a is None or self.m is None):
            raise ValueError("preset = custom needs nu0, a and m")
        if self.preset == "diffuse" and self.precision is None:
            raise ValueError("preset = diffuse needs precision")
        return self


class GeneralPriorSection(_Section):
    """Weight function and prior means for the independence Metropolis-Hastings layer."""

    weight: Literal["identity", "det_power", "beta_correlation", "coef_shrinkage"] = "identity"
    delta: float = 0.0
    beta_a: float = Field(1.0, gt=0)
    beta_b: float = Field(1.0, gt=0)
    shrinkage: float = Field(0.0, ge=0)
    log_offset: float = 0.0
    cutoff_mode: Literal["flat", "normal"] = "normal"
    coef_mean: MatrixSpec = 0.0
    proposal_mean: MatrixSpec = 0.0
    recenter_at: int | None = Field(None, ge=1)

    @field_validator("coef_mean", "proposal_mean", mode="before")
    @classmethod
    def parse_means(cls, v):
        """Parse matrix text."""
        parsed = parse_matrix(v)
        return 0.0 if parsed is None else parsed


class SamplerSection(_Section):
    """Which chain to run."""

    kind: Literal["gibbs", "imh-joint", "imh-sequential", "imh-marginal", "fda"] = "gibbs"
    regression_draw: Literal["joint", "marginal"] = "joint"
    marginal_flavour: Literal["simultaneous", "sequential"] = "simultaneous"
    latent_init: Literal["quantile", "probit"] = "quantile"


class ChainSettings(_Section):
    """Chain length, retention and seeding."""

    iterations: int = Field(default_factory=lambda: Config.DEFAULT_ITERATIONS, ge=1)
    burn_in: int = Field(default_factory=lambda: Config.DEFAULT_BURN_IN, ge=0)
    thin: int = Field(default_factory=lambda: Config.DEFAULT_THIN, ge=1)
    chains: int = Field(1, ge=1)
    workers: int = Field(default_factory=lambda: Config.DEFAULT_WORKERS, ge=1)
    seed: int | None = Field(None, ge=0)

    @model_validator(mode="after")
    def check_retention(self):
        """At least one draw must survive burn-in."""
        if self.burn_in >= self.iterations:
            raise ValueError(
                f"burn_in ({self.burn_in}) must be smaller than iterations ({self.iterations})"
            )
        return self

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


class ImputationSection(_Section):
    """Dropout mechanism, number of completed datasets and the analysis endpoint."""

    mechanism: Literal["MAR", "J2R", "CR"] = "MAR"
    m: int = Field(20, ge=2)
    reference_arm: str | None = None
    active_arm: str | None = None
    selection: Literal["stride", "per-chain"] = "stride"
    responder_category: int | None = Field(None, ge=1)

    @field_validator("mechanism", mode="before")
    @classmethod
    def upper_mechanism(cls, v):
        """Mechanisms are case-insensitive."""
        return v.upper() if isinstance(v, str) else v


class OutputSection(_Section):
    """Where artifacts go."""

    directory: Path = Field(default_factory=lambda: Config.OUTPUT_DIR)
    write_completed: bool = True


class RunConfig(_Section):
    """Validated run configuration."""

    data: DataSection
    prior: PriorSection = Field(default_factory=PriorSection)
    general_prior: GeneralPriorSection | None = None
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    chain: ChainSettings = Field(default_factory=ChainSettings)
    imputation: ImputationSection = Field(default_factory=ImputationSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def check_cross_fields(self):
        """Rules that span sections."""
        categorical = self.data.outcome_kind != "continuous"
        if self.chain.seed is None:
            raise ValueError("chain.seed is required (or pass --seed)")
        if self.sampler.kind == "fda" and categorical:
            raise ValueError(
                f"sampler = fda needs continuous outcomes, got outcome_kind = {self.data.outcome_kind}"
            )
        if self.sampler.kind.startswith("imh"):
            if not categorical:
                raise ValueError("imh samplers need binary or ordinal outcomes")
            if self.general_prior is None:
                raise ValueError(f"sampler = {self.sampler.kind} needs a [general_prior] section")
        if self.data.outcome_kind == "ordinal" and (self.data.categories or 0) < 3:
            raise ValueError("outcome_kind = ordinal needs categories >= 3")
        if self.data.outcome_kind == "binary" and self.data.categories not in (None, 2):
            raise ValueError("outcome_kind = binary has exactly 2 categories")
        if self.imputation.selection == "per-chain" and self.chain.chains < self.imputation.m:
            raise ValueError(
                f"selection = per-chain needs chains >= m ({self.chain.chains} < {self.imputation.m})"
            )
        if self.chain.retained < self.imputation.m and self.imputation.selection == "stride":
            raise ValueError(
                f"Only {self.chain.retained} retained draws for m = {self.imputation.m} imputations"
            )
        return self

    @property
    def categories(self) -> int | None:
        if self.data.outcome_kind == "binary":
            return 2
        return self.data.categories


def validate_run_config(payload: dict[str, Any]) -> RunConfig:
    """Validate a raw configuration mapping.

    Raises:
        ConfigError: With the first validation message.
    """
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"Invalid configuration ({where}): {first['msg']}") from exc


def read_config_payload(path: str | Path) -> dict[str, Any]:
    """Read an INI run file or a JSON manifest into a plain mapping."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Configuration file not found: {path}")

    if path.suffix.lower() == ".json":
        try:
            document = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Cannot parse manifest {path}: {exc}") from exc
        payload = document.get("config", document)
        if not isinstance(payload, dict):
            raise ConfigError(f"Manifest {path} has no config object")
        return payload

    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"Cannot parse {path}: {exc}") from exc

    payload: dict[str, Any] = {}
    for section in parser.sections():
        values = {key: value for key, value in parser[section].items() if value.strip() != ""}
        payload[section] = values
    data = payload.get("data")
    if data and "path" in data and not Path(data["path"]).is_absolute():
        data["path"] = str((path.parent / data["path"]).resolve())
    return payload


def load_run_config(
    path: str | Path,
    seed: int | None = None,
    out: str | Path | None = None,
) -> RunConfig:
    """Load, apply CLI overrides and validate a run configuration."""
    payload = read_config_payload(path)
    if seed is not None:
        payload.setdefault("chain", {})["seed"] = seed
    if out is not None:
        payload.setdefault("output", {})["directory"] = str(out)
    return validate_run_config(payload)
