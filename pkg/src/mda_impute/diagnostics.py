"""Chain diagnostics: autocorrelation, effective sample size and MDA/FDA comparison."""

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from mda_impute.config import Config
from mda_impute.data.dataset import LongitudinalDataset
from mda_impute.errors import PreconditionViolated
from mda_impute.logging_config import get_logger
from mda_impute.run_config import ChainSettings
from mda_impute.sampling.mmrm import ChainResult, MniwPrior, fda_chain, mmrm_mda_chain

logger = get_logger(__name__)


def autocorrelation(x: ArrayLike, max_lag: int | None = None) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag`` computed by FFT.

    A constant series has autocorrelation 1 at lag 0 and 0 elsewhere.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    max_lag = n - 1 if max_lag is None else min(max_lag, n - 1)
    centered = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(centered, n=size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=size)[:n]
    if acov[0] <= 0:
        rho = np.zeros(max_lag + 1)
        rho[0] = 1.0
        return rho
    return acov[: max_lag + 1] / acov[0]


def effective_sample_size(x: ArrayLike) -> float:
    """ESS from Geyer's initial positive sequence, capped at the draw count."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    rho = autocorrelation(x)
    if np.all(rho[1:] == 0):
        return float(n)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(min(n, n / tau)) if tau > 0 else float(n)


def split_discrepancy(x: ArrayLike) -> float:
    """Difference of the two half-chain means in standard-error units."""
    x = np.asarray(x, dtype=float)
    half = x.shape[0] // 2
    first, second = x[:half], x[-half:]
    variance = 0.0
    for part in (first, second):
        sd = float(part.std(ddof=1))
        variance += sd**2 / effective_sample_size(part) if sd > 0 else 0.0
    if variance == 0:
        return 0.0
    return float((first.mean() - second.mean()) / np.sqrt(variance))


@dataclass(frozen=True)
class ParameterSummary:
    """Posterior summary of one scalar parameter."""

    name: str
    mean: float
    sd: float
    mcse: float
    ess: float
    split_z: float
    autocorrelation: list[float] = field(default_factory=list)


@dataclass
class ChainSummary:
    """Per-parameter summaries of one chain."""

    draws: int
    parameters: list[ParameterSummary]
    seconds_per_iteration: float | None = None

    def __getitem__(self, name: str) -> ParameterSummary:
        for parameter in self.parameters:
            if parameter.name == name:
                return parameter
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {key: value for key, value in asdict(p).items() if key != "autocorrelation"}
            for p in self.parameters
        ]
        return pd.DataFrame(rows).set_index("name")

    def to_dict(self) -> dict:
        payload = {"draws": self.draws, "parameters": [asdict(p) for p in self.parameters]}
        if self.seconds_per_iteration is not None:
            payload["seconds_per_iteration"] = self.seconds_per_iteration
        return payload

    def format_table(self) -> str:
        return self.to_frame().to_string(float_format=lambda v: f"{v:.4g}")


def summarize_chain(draws: ArrayLike, names: list[str]) -> ChainSummary:
    """Summaries of every column of ``draws`` (one row per retained draw).

    Raises:
        PreconditionViolated: With fewer than ``Config.MIN_SUMMARY_DRAWS`` draws.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    n = draws.shape[0]
    if n < Config.MIN_SUMMARY_DRAWS:
        raise PreconditionViolated(
            f"Summaries need at least {Config.MIN_SUMMARY_DRAWS} retained draws, got {n}"
        )
    parameters = []
    for name, column in zip(names, draws.T, strict=True):
        sd = float(column.std(ddof=1))
        if sd == 0:
            logger.warning(f"Parameter {name} is constant across the chain")
        ess = effective_sample_size(column)
        parameters.append(
            ParameterSummary(
                name=name,
                mean=float(column.mean()),
                sd=sd,
                mcse=sd / np.sqrt(ess),
                ess=ess,
                split_z=split_discrepancy(column),
                autocorrelation=autocorrelation(column, Config.MAX_AUTOCORRELATION_LAG).tolist(),
            )
        )
    return ChainSummary(draws=n, parameters=parameters)


def summarize_result(result: ChainResult) -> ChainSummary:
    names, matrix = result.parameter_table()
    return summarize_chain(matrix, names)


@dataclass
class ComparisonReport:
    """Side-by-side MDA and FDA summaries of the shared parameters."""

    iterations: int
    mda_seconds: float
    fda_seconds: float
    mda: ChainSummary
    fda: ChainSummary

    def to_frame(self) -> pd.DataFrame:
        mda, fda = self.mda.to_frame(), self.fda.to_frame()
        frame = pd.DataFrame(
            {
                "mda_mean": mda["mean"],
                "fda_mean": fda["mean"],
                "mda_ess": mda["ess"],
                "fda_ess": fda["ess"],
                "mda_ess_per_s": mda["ess"] / self.mda_seconds,
                "fda_ess_per_s": fda["ess"] / self.fda_seconds,
            }
        )
        frame["z"] = (mda["mean"] - fda["mean"]) / np.sqrt(mda["mcse"] ** 2 + fda["mcse"] ** 2)
        return frame

    @property
    def mda_per_iteration(self) -> float:
        return self.mda_seconds / self.iterations

    @property
    def fda_per_iteration(self) -> float:
        return self.fda_seconds / self.iterations

    def to_dict(self) -> dict:
        frame = self.to_frame().replace([np.inf, -np.inf], np.nan)
        frame = frame.astype(object).where(frame.notna(), None)
        return {
            "iterations": self.iterations,
            "mda_seconds": self.mda_seconds,
            "fda_seconds": self.fda_seconds,
            "mda_seconds_per_iteration": self.mda_per_iteration,
            "fda_seconds_per_iteration": self.fda_per_iteration,
            "parameters": frame.reset_index().to_dict(orient="records"),
        }

    def format_table(self) -> str:
        header = (
            f"MDA {self.mda_per_iteration * 1e3:.3f} ms/iter, "
            f"FDA {self.fda_per_iteration * 1e3:.3f} ms/iter"
        )
        return header + "\n" + self.to_frame().to_string(float_format=lambda v: f"{v:.4g}")


def compare_mda_fda(
    data: LongitudinalDataset,
    prior: MniwPrior,
    settings: ChainSettings,
    rng: np.random.Generator,
) -> ComparisonReport:
    """Run both schemes on the same data with independent streams and compare them."""
    mda_rng, fda_rng = rng.spawn(2)

    start = time.perf_counter()
    mda = mmrm_mda_chain(data, prior, settings, mda_rng)
    mda_seconds = time.perf_counter() - start

    start = time.perf_counter()
    fda = fda_chain(data, prior, settings, fda_rng)
    fda_seconds = time.perf_counter() - start

    mda_summary = summarize_result(mda)
    fda_summary = summarize_result(fda)
    mda_summary.seconds_per_iteration = mda_seconds / settings.iterations
    fda_summary.seconds_per_iteration = fda_seconds / settings.iterations
    logger.info(f"Benchmark: MDA {mda_seconds:.2f}s, FDA {fda_seconds:.2f}s")
    return ComparisonReport(
        iterations=settings.iterations,
        mda_seconds=mda_seconds,
        fda_seconds=fda_seconds,
        mda=mda_summary,
        fda=fda_summary,
    )
