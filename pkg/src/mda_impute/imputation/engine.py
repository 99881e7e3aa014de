"""Dropout imputation from posterior draws.

After the chain has converged, each selected draw fills the remaining missing
cells of one completed dataset. Intermittent cells follow the subject's own
arm; dropout cells follow the chosen mechanism:

* ``MAR``: own-arm mean at every visit,
* ``J2R`` (jump to reference): own-arm mean up to the last observed visit and
  the reference arm's mean afterwards,
* ``CR`` (copy reference): reference-arm mean at every visit,

each conditioned on the subject's history under the shared covariance. Probit
draws work on the restricted latent scale and categorize the imputed latents
with the draw's cutoffs.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from mda_impute.data.dataset import LongitudinalDataset
from mda_impute.errors import ConfigError, DataError, MissingHistory, PreconditionViolated, UnknownArm
from mda_impute.logging_config import get_logger
from mda_impute.sampling.distributions import (
    FloatArray,
    conditional_normal,
    conditional_normal_draws,
    sample_mvn,
)
from mda_impute.sampling.mmrm import ChainResult, ParameterDraw
from mda_impute.sampling.probit import categorize

logger = get_logger(__name__)

Mechanism = Literal["MAR", "J2R", "CR"]
Selection = Literal["stride", "per-chain"]


@dataclass(frozen=True)
class ImputationSpec:
    """What to impute and how to analyze it."""

    mechanism: Mechanism = "MAR"
    m: int = 20
    reference_arm: str | None = None
    active_arm: str | None = None
    selection: Selection = "stride"
    responder_category: int | None = None

    def validate(self, data: LongitudinalDataset) -> "ImputationSpec":
        """Check against the data and fill the reference arm from it."""
        if self.m < 2:
            raise PreconditionViolated(f"At least 2 imputations are needed, got {self.m}")
        if self.mechanism not in ("MAR", "J2R", "CR"):
            raise ConfigError(f"Unknown imputation mechanism: {self.mechanism}")
        reference = self.reference_arm or data.reference_arm
        if reference is None and self.mechanism != "MAR":
            raise UnknownArm(f"{self.mechanism} imputation needs a reference arm")
        for label in (reference, self.active_arm):
            if label is not None and label not in data.arms:
                raise UnknownArm(f"Arm '{label}' not present in data (arms: {', '.join(data.arms)})")
        if self.mechanism != "MAR" and not data.treatment_columns:
            raise ConfigError(f"{self.mechanism} imputation needs treatment columns")
        return ImputationSpec(
            mechanism=self.mechanism,
            m=self.m,
            reference_arm=reference,
            active_arm=self.active_arm,
            selection=self.selection,
            responder_category=self.responder_category,
        )


def imputation_means(
    data: LongitudinalDataset,
    alpha: ArrayLike,
    rows: ArrayLike,
    mechanism: Mechanism,
    reference_arm: str | None = None,
) -> FloatArray:
    """Mean trajectories ``mu*`` of the listed subjects under ``mechanism``."""
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    alpha = np.asarray(alpha, dtype=float)
    own = data.X[rows] @ alpha
    if mechanism == "MAR":
        return own
    reference = np.vstack([data.reference_design(int(i), reference_arm) for i in rows]) @ alpha
    if mechanism == "CR":
        return reference
    if mechanism == "J2R":
        after = np.arange(data.p)[None, :] >= data.patterns[rows][:, None]
        return np.where(after, reference, own)
    raise ConfigError(f"Unknown imputation mechanism: {mechanism}")


def _history(data: LongitudinalDataset, draw: ParameterDraw, i: int) -> FloatArray:
    s = int(data.patterns[i])
    if data.is_categorical:
        if draw.latent is None:
            raise MissingHistory("Probit draws need their latent values for imputation")
        history = draw.latent[i, :s]
    else:
        history = data.Y[i, :s]
    if np.any(np.isnan(history)):
        raise MissingHistory(
            f"Subject {data.ids[i]} has unfilled history; impute intermittent cells first"
        )
    return history


def dropout_conditional(
    data: LongitudinalDataset,
    draw: ParameterDraw,
    i: int,
    mechanism: Mechanism,
    reference_arm: str | None = None,
    history: ArrayLike | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Conditional mean and covariance of subject ``i``'s post-dropout visits.

    Args:
        data: Dataset.
        draw: Posterior draw.
        i: Subject index.
        mechanism: Dropout mechanism.
        reference_arm: Overrides the dataset's reference arm.
        history: Values of visits ``1..s_i``; defaults to the observed outcomes
            (continuous) or the draw's latent values (probit).
    """
    s = int(data.patterns[i])
    if s >= data.p:
        raise PreconditionViolated(f"Subject {data.ids[i]} completed every visit")
    values = _history(data, draw, i) if history is None else np.asarray(history, dtype=float)
    mean = imputation_means(data, draw.alpha, [i], mechanism, reference_arm)[0]
    given = np.arange(data.p) < s
    return conditional_normal(mean, draw.sigma, given, values)


def impute_dropout(
    data: LongitudinalDataset,
    draw: ParameterDraw,
    i: int,
    mechanism: Mechanism,
    rng: np.random.Generator,
    reference_arm: str | None = None,
    history: ArrayLike | None = None,
) -> FloatArray:
    """Completed trajectory of one subject; categories for probit draws."""
    s = int(data.patterns[i])
    values = _history(data, draw, i) if history is None else np.asarray(history, dtype=float)
    cond_mean, cond_cov = dropout_conditional(data, draw, i, mechanism, reference_arm, values)
    trajectory = np.concatenate([values, sample_mvn(cond_mean, cond_cov, rng)])
    if not data.is_categorical:
        return trajectory
    categories = categorize(trajectory[None, :], draw.cutoffs)[0].astype(float)
    return np.where(data.observed[i], data.Y[i], categories)


def impute_dataset(
    data: LongitudinalDataset,
    draw: ParameterDraw,
    spec: ImputationSpec,
    rng: np.random.Generator,
) -> FloatArray:
    """Outcome matrix with every missing cell filled from one draw.

    Observed cells are copied unchanged.
    """
    patterns = data.patterns
    visit = np.arange(data.p)[None, :]
    history_mask = visit < patterns[:, None]

    if data.is_categorical:
        if draw.latent is None:
            raise MissingHistory("Probit draws need their latent values for imputation")
        values = np.where(history_mask, draw.latent, np.nan)
    else:
        values = data.Y.copy()
        gaps = np.flatnonzero((~data.observed & history_mask).any(axis=1))
        for s in np.unique(patterns[gaps]):
            rows = gaps[patterns[gaps] == s]
            values[rows, :s] = conditional_normal_draws(
                data.X[rows] @ draw.alpha[:, :s],
                draw.sigma[:s, :s],
                values[rows, :s],
                data.observed[rows, :s],
                rng,
            )

    dropped = np.flatnonzero(patterns < data.p)
    if dropped.size:
        means = imputation_means(data, draw.alpha, dropped, spec.mechanism, spec.reference_arm)
        values[dropped] = conditional_normal_draws(
            means, draw.sigma, values[dropped], history_mask[dropped], rng
        )

    if data.is_categorical:
        values = categorize(values, draw.cutoffs).astype(float)
    completed = np.where(data.observed, data.Y, values)
    if np.any(np.isnan(completed)):
        raise DataError("Imputation left missing cells")
    return completed


def select_draws(
    retained: int,
    m: int,
    selection: Selection = "stride",
    chains: int = 1,
) -> list[tuple[int, int]]:
    """``(chain, draw)`` pairs feeding the ``m`` completed datasets.

    ``stride`` takes every ``total // m``-th draw of the chains laid end to end;
    ``per-chain`` takes the last draw of each of the first ``m`` chains.
    """
    if m < 1:
        raise PreconditionViolated(f"Need at least one imputation, got {m}")
    if selection == "per-chain":
        if chains < m:
            raise PreconditionViolated(f"per-chain selection needs {m} chains, have {chains}")
        return [(c, retained - 1) for c in range(m)]
    total = retained * chains
    if total < m:
        raise PreconditionViolated(f"Only {total} retained draws for {m} imputations")
    stride = total // m
    return [divmod(k * stride, retained) for k in range(m)]


def emit_completed_datasets(
    chains: list[ChainResult],
    spec: ImputationSpec,
    data: LongitudinalDataset,
    rng: np.random.Generator,
) -> list[FloatArray]:
    """Completed outcome matrices, one per selected draw and independent stream."""
    spec = spec.validate(data)
    picks = select_draws(chains[0].n_draws, spec.m, spec.selection, len(chains))
    streams = rng.spawn(spec.m)
    completed = []
    for (chain, index), stream in zip(picks, streams, strict=True):
        completed.append(impute_dataset(data, chains[chain].draw(index), spec, stream))
    logger.info(
        f"Imputed {spec.m} datasets under {spec.mechanism} "
        f"({int((~data.observed).sum())} missing cells each)"
    )
    return completed


def analyze_endpoint(
    data: LongitudinalDataset,
    completed: ArrayLike,
    spec: ImputationSpec,
) -> tuple[float, float]:
    """Active-minus-reference contrast at the last visit and its variance.

    Continuous outcomes compare means; categorical outcomes compare the
    proportion of subjects at or above ``responder_category`` (default the top
    category).
    """
    completed = np.asarray(completed, dtype=float)
    reference = spec.reference_arm or data.reference_arm
    if reference is None:
        raise UnknownArm("The analysis needs a reference arm")
    active = spec.active_arm
    if active is None:
        others = [label for label in data.arms if label != reference]
        if len(others) != 1:
            raise ConfigError(f"Name the active arm; candidates are {', '.join(others)}")
        active = others[0]

    last = completed[:, -1]
    if data.is_categorical:
        threshold = spec.responder_category or int(data.K)
        last = (last >= threshold).astype(float)

    estimate, variance = 0.0, 0.0
    for label, sign in ((active, 1.0), (reference, -1.0)):
        values = last[data.arm == label]
        if values.size < 2:
            raise DataError(f"Arm '{label}' has fewer than two subjects")
        estimate += sign * float(values.mean())
        if data.is_categorical:
            share = float(values.mean())
            variance += share * (1.0 - share) / values.size
        else:
            variance += float(values.var(ddof=1)) / values.size
    return estimate, variance
