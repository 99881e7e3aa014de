"""Run orchestration: fit, impute, analyze, validate and benchmark.

Every stream derives from the run seed through ``SeedSequence.spawn``: one
child for the chains (split again per chain), one for imputation and one for
the benchmark. A run is therefore byte-reproducible from its manifest.
"""

import json
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from mda_impute import __version__
from mda_impute.config import Config
from mda_impute.data.dataset import LongitudinalDataset, arrange_monotone, load_dataset
from mda_impute.diagnostics import ComparisonReport, compare_mda_fda, summarize_result
from mda_impute.errors import ConfigError, DataError
from mda_impute.imputation.engine import (
    ImputationSpec,
    analyze_endpoint,
    emit_completed_datasets,
    select_draws,
)
from mda_impute.imputation.rubin import MiResult, rubin_combine
from mda_impute.logging_config import get_logger
from mda_impute.parallel import run_chains
from mda_impute.run_config import GeneralPriorSection, PriorSection, RunConfig
from mda_impute.sampling.imh import GeneralPrior, ImhSampler, make_weight
from mda_impute.sampling.mmrm import (
    ChainResult,
    MniwPrior,
    decompose_prior,
    fda_chain,
    mmrm_mda_chain,
    relative_rank,
)
from mda_impute.sampling.probit import MvpPrior, mvp_chain

logger = get_logger(__name__)

_VERSIONED = ("numpy", "scipy", "pandas", "statsmodels", "pydantic", "joblib")


def _matrix(spec: Any, rows: int, cols: int, name: str, scale: bool = True) -> np.ndarray:
    """Expand a scalar, list or nested list.

    Scale matrices read a scalar as a multiple of the identity and a list as
    the diagonal; mean matrices are filled with a scalar.
    """
    if np.isscalar(spec):
        if scale and rows == cols:
            return float(spec) * np.eye(rows)
        return np.full((rows, cols), float(spec))
    array = np.asarray(spec, dtype=float)
    if scale and array.ndim == 1 and rows == cols and array.shape[0] == rows:
        return np.diag(array)
    if array.ndim == 1 and rows * cols == array.shape[0]:
        return array.reshape(rows, cols)
    if array.shape != (rows, cols):
        raise ConfigError(f"Prior {name} must be {rows} x {cols}, got shape {array.shape}")
    return array


def build_prior(section: PriorSection, p: int, q: int) -> MniwPrior:
    """MNIW prior from a preset, with explicit entries taking precedence."""
    if section.preset == "jeffreys_flat":
        nu0, A, M = 0.0, np.zeros((p, p)), np.zeros((q, q))
    else:
        precision = section.precision
        if precision is None:
            precision = Config.DEFAULT_PRIOR_PRECISION
        nu0, A, M = float(p + 1), np.eye(p), precision * np.eye(q)
    B0 = np.zeros((q, p))

    if section.nu0 is not None:
        nu0 = section.nu0
    if section.a is not None:
        A = _matrix(section.a, p, p, "a")
    if section.m is not None:
        M = _matrix(section.m, q, q, "m")
    elif section.precision is not None:
        M = section.precision * np.eye(q)
    if section.b0 is not None:
        B0 = _matrix(section.b0, q, p, "b0", scale=False)
    return MniwPrior(A=A, nu0=nu0, B0=B0, M=M)


def build_mvp_prior(section: PriorSection, p: int, q: int) -> MvpPrior:
    """Probit prior; only ``nu0``, ``m`` and the cutoff moments apply."""
    if section.a is not None or section.b0 is not None:
        logger.warning("Prior entries a and b0 are fixed in the probit model and are ignored")
    mniw = build_prior(section, p, q)
    return MvpPrior(
        nu0=mniw.nu0,
        M=mniw.M,
        cutoff_mean=section.cutoff_mean,
        cutoff_variance=section.cutoff_variance,
    )


def build_general_prior(
    section: GeneralPriorSection,
    prior_section: PriorSection,
    p: int,
    q: int,
) -> GeneralPrior:
    base = build_mvp_prior(prior_section, p, q)
    weight = make_weight(
        section.weight,
        delta=section.delta,
        beta_a=section.beta_a,
        beta_b=section.beta_b,
        shrinkage=section.shrinkage,
        log_offset=section.log_offset,
    )
    return GeneralPrior(
        weight=weight,
        nu0=base.nu0,
        M=base.M,
        coef_mean=_matrix(section.coef_mean, q, p, "coef_mean", scale=False),
        proposal_mean=_matrix(section.proposal_mean, q, p, "proposal_mean", scale=False),
        cutoff_mode=section.cutoff_mode,
        cutoff_mean=base.cutoff_mean,
        cutoff_variance=base.cutoff_variance,
        recenter_at=section.recenter_at,
    )


def load_data(config: RunConfig) -> LongitudinalDataset:
    return load_dataset(
        config.data.path,
        outcome_kind=config.data.outcome_kind,
        categories=config.categories,
        reference_arm=config.imputation.reference_arm or config.data.reference_arm,
        treatment_columns=tuple(config.data.treatment_columns),
    )


def run_chain(
    rng: np.random.Generator,
    data: LongitudinalDataset,
    config: RunConfig,
    keep: set[int] | None = None,
) -> ChainResult:
    """One chain of the configured sampler."""
    kind = config.sampler.kind
    if kind == "fda":
        return fda_chain(data, build_prior(config.prior, data.p, data.q), config.chain, rng)
    if not data.is_categorical:
        return mmrm_mda_chain(
            data,
            build_prior(config.prior, data.p, data.q),
            config.chain,
            rng,
            mode=config.sampler.regression_draw,
            ridge=config.prior.ridge,
        )
    if kind == "gibbs":
        return mvp_chain(
            data,
            build_mvp_prior(config.prior, data.p, data.q),
            config.chain,
            rng,
            keep=keep,
            regression_draw=config.sampler.regression_draw,
            latent_init=config.sampler.latent_init,
        )
    general = build_general_prior(config.general_prior, config.prior, data.p, data.q)
    sampler = ImhSampler(
        data,
        general,
        rng,
        mode=kind.removeprefix("imh-"),
        marginal_flavour=config.sampler.marginal_flavour,
        latent_init=config.sampler.latent_init,
    )
    return sampler.run(config.chain, keep=keep)


def imputation_spec(config: RunConfig) -> ImputationSpec:
    section = config.imputation
    return ImputationSpec(
        mechanism=section.mechanism,
        m=section.m,
        reference_arm=section.reference_arm or config.data.reference_arm,
        active_arm=section.active_arm,
        selection=section.selection,
        responder_category=section.responder_category,
    )


Streams = tuple[list[np.random.SeedSequence], np.random.Generator, np.random.Generator]


def _streams(config: RunConfig) -> Streams:
    """Chain seeds, the imputation stream and the benchmark stream."""
    chains_root, imputation_root, bench_root = np.random.SeedSequence(config.chain.seed).spawn(3)
    return (
        chains_root.spawn(config.chain.chains),
        np.random.default_rng(imputation_root),
        np.random.default_rng(bench_root),
    )


@dataclass
class FitOutcome:
    data: LongitudinalDataset
    chains: list[ChainResult]
    artifacts: list[Path] = field(default_factory=list)


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")
    return path


def _versions() -> dict[str, str]:
    versions = {"mda-impute": __version__}
    for package in _VERSIONED:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def write_manifest(config: RunConfig, command: str, artifacts: list[Path]) -> Path:
    """Fully defaulted config echo, seed, command and library versions."""
    out = config.output.directory
    return _write_json(
        out / "manifest.json",
        {
            "command": command,
            "seed": config.chain.seed,
            "config": config.model_dump(mode="json"),
            "versions": _versions(),
            "artifacts": sorted(str(path.relative_to(out)) for path in artifacts),
        },
    )


def draws_frame(chains: list[ChainResult]) -> pd.DataFrame:
    """All retained draws, one row each, with 1-based chain and draw numbers."""
    frames = []
    for number, chain in enumerate(chains, start=1):
        names, matrix = chain.parameter_table()
        frame = pd.DataFrame(matrix, columns=names)
        frame.insert(0, "draw", np.arange(1, chain.n_draws + 1))
        frame.insert(0, "chain", number)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_json_safe(item) for item in value]
    return value


def fit(config: RunConfig) -> FitOutcome:
    """Run the chains and write ``draws.csv`` and ``diagnostics.json``."""
    data = load_data(config)
    seeds, _, _ = _streams(config)
    keep_by_chain: list[dict[str, Any]] = [{"keep": set()} for _ in seeds]
    if data.is_categorical:
        picks = select_draws(
            config.chain.retained, config.imputation.m, config.imputation.selection, len(seeds)
        )
        for chain, index in picks:
            keep_by_chain[chain]["keep"].add(index)

    chains = run_chains(
        run_chain,
        seeds,
        workers=config.chain.workers,
        per_chain=keep_by_chain,
        data=data,
        config=config,
    )

    out = config.output.directory
    out.mkdir(parents=True, exist_ok=True)
    draws_path = out / "draws.csv"
    draws_frame(chains).to_csv(draws_path, index=False, float_format="%.17g")

    diagnostics: dict[str, Any] = {"sampler": config.sampler.kind, "chains": []}
    for number, chain in enumerate(chains, start=1):
        entry: dict[str, Any] = {"chain": number, "draws": chain.n_draws}
        if chain.acceptance is not None:
            entry["acceptance"] = chain.acceptance
        if chain.n_draws >= Config.MIN_SUMMARY_DRAWS:
            entry["summary"] = summarize_result(chain).to_dict()
        else:
            logger.warning(f"Chain {number}: too few draws for a summary ({chain.n_draws})")
        diagnostics["chains"].append(entry)
    diagnostics_path = _write_json(out / "diagnostics.json", _json_safe(diagnostics))
    logger.info(f"Wrote {draws_path} and {diagnostics_path}")
    return FitOutcome(data=data, chains=chains, artifacts=[draws_path, diagnostics_path])


def completed_frame(data: LongitudinalDataset, outcomes: np.ndarray, index: int) -> pd.DataFrame:
    frame = data.to_frame(outcomes)
    frame["imputation_index"] = index
    return frame


def impute(
    config: RunConfig, outcome: FitOutcome | None = None
) -> tuple[FitOutcome, list[np.ndarray]]:
    """Fit if needed, then write the completed datasets."""
    if outcome is None:
        outcome = fit(config)
    _, imputation_rng, _ = _streams(config)
    completed = emit_completed_datasets(
        outcome.chains, imputation_spec(config), outcome.data, imputation_rng
    )
    if config.output.write_completed:
        directory = config.output.directory / "completed"
        directory.mkdir(parents=True, exist_ok=True)
        for index, outcomes in enumerate(completed, start=1):
            path = directory / f"imputation_{index:03d}.csv"
            completed_frame(outcome.data, outcomes, index).to_csv(
                path, index=False, float_format="%.17g"
            )
            outcome.artifacts.append(path)
        logger.info(f"Wrote {len(completed)} completed datasets to {directory}")
    return outcome, completed


def read_completed(data: LongitudinalDataset, directory: Path) -> list[np.ndarray]:
    """Outcome matrices of ``imputation_*.csv`` files, in file-name order."""
    paths = sorted(Path(directory).glob("imputation_*.csv"))
    if not paths:
        raise DataError(f"No imputation_*.csv files in {directory}")
    matrices = []
    for path in paths:
        frame = pd.read_csv(path, dtype={"id": str, "arm": str})
        missing = [name for name in data.outcome_names if name not in frame.columns]
        if missing:
            raise DataError(f"{path.name} lacks outcome columns {missing}")
        if list(frame["id"]) != [str(i) for i in data.ids]:
            raise DataError(f"{path.name} does not list the input subjects in input order")
        matrices.append(frame[list(data.outcome_names)].to_numpy(dtype=float))
    return matrices


def analyze(
    config: RunConfig,
    completed: list[np.ndarray] | None = None,
    data: LongitudinalDataset | None = None,
) -> MiResult:
    """Analyze each completed dataset and combine with Rubin's rules."""
    if completed is None:
        outcome, completed = impute(config)
        data = outcome.data
    elif data is None:
        data = load_data(config)
    spec = imputation_spec(config).validate(data)
    result = rubin_combine([analyze_endpoint(data, outcomes, spec) for outcomes in completed])
    endpoint = "responder_difference" if data.is_categorical else "mean_difference"
    _write_json(
        config.output.directory / "mi_result.json",
        result.to_dict(mechanism=spec.mechanism, endpoint=endpoint),
    )
    logger.info(f"MI estimate {result.point:.4g} (se {result.se:.4g}, m = {result.m})")
    return result


def run(config: RunConfig) -> MiResult:
    """Fit, impute and analyze, writing every artifact and the manifest."""
    outcome, completed = impute(config)
    result = analyze(config, completed=completed, data=outcome.data)
    artifacts = [*outcome.artifacts, config.output.directory / "mi_result.json"]
    write_manifest(config, "analyze", artifacts)
    return result


@dataclass
class ValidationReport:
    """Dry-run checks of data and prior."""

    counts: list[int]
    pattern_histogram: list[int]
    prior_df: list[float]
    posterior_df: list[float]
    prior_rank: int
    notes: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "pattern_histogram": self.pattern_histogram,
            "prior_df": self.prior_df,
            "posterior_df": self.posterior_df,
            "prior_rank": self.prior_rank,
            "notes": self.notes,
            "warnings": self.warnings,
        }

    def format_table(self) -> str:
        frame = pd.DataFrame(
            {
                "n_j": self.counts,
                "f_j0": self.prior_df,
                "f_j": self.posterior_df,
                "proper": [f > 0 for f in self.posterior_df],
            },
            index=pd.Index(range(1, len(self.counts) + 1), name="visit"),
        )
        lines = [frame.to_string(), "", "pattern  subjects"]
        lines += [f"{s:>7}  {count}" for s, count in enumerate(self.pattern_histogram)]
        lines += [f"note: {text}" for text in self.notes]
        lines += [f"warning: {text}" for text in self.warnings]
        return "\n".join(lines)


def _collinear_columns(gram: np.ndarray, names: tuple[str, ...]) -> list[str]:
    eigenvalues, vectors = np.linalg.eigh(gram)
    scale = max(float(eigenvalues[-1]), 1.0)
    null = vectors[:, eigenvalues <= Config.RANK_TOLERANCE * scale]
    involved = np.flatnonzero(np.abs(null).max(axis=1) > 1e-8) if null.size else []
    return [names[k] for k in involved]


def validate(config: RunConfig) -> ValidationReport:
    """Pattern table, propriety forecast, rank checks and category coverage."""
    data = load_data(config)
    arrangement = arrange_monotone(data)
    if data.is_categorical:
        prior = build_mvp_prior(config.prior, data.p, data.q).mniw(data.p)
    else:
        prior = build_prior(config.prior, data.p, data.q)
    decomposition = decompose_prior(prior, data.p, data.q)
    prior_df = [float(params.f) for params in decomposition]
    posterior_df = [float(n + f) for n, f in zip(arrangement.counts, prior_df, strict=True)]

    report = ValidationReport(
        counts=[int(n) for n in arrangement.counts],
        pattern_histogram=[int(c) for c in arrangement.pattern_histogram()],
        prior_df=prior_df,
        posterior_df=posterior_df,
        prior_rank=prior.r,
    )
    for j, f in enumerate(posterior_df):
        if f <= 0:
            report.warnings.append(
                f"visit {j + 1}: posterior degrees of freedom {f:g} <= 0; use a more informative prior"
            )
    for j in range(data.p):
        rows = data.patterns >= j + 1
        gram = data.X[rows].T @ data.X[rows] + prior.M
        if relative_rank(gram) < data.q:
            columns = _collinear_columns(gram, data.covariate_names)
            report.warnings.append(
                f"visit {j + 1}: covariate Gram matrix is rank deficient "
                f"(collinear columns: {', '.join(columns)})"
            )
    if arrangement.intermittent_cells:
        report.notes.append(f"{len(arrangement.intermittent_cells)} intermittent missing cells")
    if data.is_categorical:
        W = data.W
        for j in range(data.p):
            counts = np.bincount(W[:, j], minlength=int(data.K) + 1)[1:]
            for k in np.flatnonzero(counts == 0):
                report.notes.append(
                    f"visit {j + 1}: category {k + 1} never observed (its cutoff bounds are infinite)"
                )
    for text in report.warnings:
        logger.warning(text)
    return report


def bench(config: RunConfig) -> ComparisonReport:
    """Compare the MDA and FDA chains on the configured continuous data."""
    data = load_data(config)
    if data.is_categorical:
        raise ConfigError("bench compares the continuous MDA and FDA chains")
    _, _, bench_rng = _streams(config)
    report = compare_mda_fda(data, build_prior(config.prior, data.p, data.q), config.chain, bench_rng)
    out = config.output.directory
    path = _write_json(out / "benchmark.json", _json_safe(report.to_dict()))
    write_manifest(config, "bench", [path])
    return report
