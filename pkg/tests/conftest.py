"""
Shared fixtures for the mda-impute test suite.

Synthetic two-arm trials are generated from known parameters so sampler
output can be checked against the truth. Arms are ``placebo`` (reference) and
``active``; covariates are an intercept and the active-arm indicator.
"""

from collections.abc import Callable

import numpy as np
import pytest

from mda_impute.data.dataset import LongitudinalDataset
from mda_impute.run_config import ChainSettings

TRUE_SIGMA = np.array([[1.0, 0.5, 0.3], [0.5, 1.2, 0.6], [0.3, 0.6, 1.5]])
TRUE_ALPHA = np.array([[0.0, 0.5, 1.0], [0.0, 0.4, 0.8]])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def _trial_design(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    active = np.arange(n) % 2
    X = np.column_stack([np.ones(n), active.astype(float)])
    arm = np.where(active == 1, "active", "placebo").astype(object)
    ids = np.array([f"S{i:04d}" for i in range(n)], dtype=object)
    return ids, arm, X


def _monotone_dropout(
    Y: np.ndarray, rng: np.random.Generator, dropout: float
) -> np.ndarray:
    """Drop each later visit with probability ``dropout`` once visit 1 is seen."""
    Y = Y.copy()
    n, p = Y.shape
    for i in range(n):
        for j in range(1, p):
            if rng.uniform() < dropout:
                Y[i, j:] = np.nan
                break
    return Y


@pytest.fixture
def make_continuous() -> Callable[..., LongitudinalDataset]:
    """Factory for continuous trials drawn from ``TRUE_ALPHA`` and ``TRUE_SIGMA``."""

    def factory(
        rng: np.random.Generator,
        n: int = 200,
        p: int = 3,
        dropout: float = 0.0,
        intermittent: float = 0.0,
    ) -> LongitudinalDataset:
        ids, arm, X = _trial_design(n)
        alpha, sigma = TRUE_ALPHA[:, :p], TRUE_SIGMA[:p, :p]
        Y = X @ alpha + rng.multivariate_normal(np.zeros(p), sigma, size=n)
        Y = _monotone_dropout(Y, rng, dropout)
        if intermittent > 0 and p >= 3:
            holes = (rng.uniform(size=n) < intermittent) & ~np.isnan(Y[:, -1])
            Y[holes, 1] = np.nan
        return LongitudinalDataset(
            ids=ids,
            arm=arm,
            X=X,
            Y=Y,
            reference_arm="placebo",
            treatment_columns=(1,),
        )

    return factory


@pytest.fixture
def make_categorical() -> Callable[..., LongitudinalDataset]:
    """Factory for binary or ordinal trials from thresholded correlated latents."""

    def factory(
        rng: np.random.Generator,
        n: int = 200,
        p: int = 2,
        K: int = 2,
        correlation: float = 0.5,
        dropout: float = 0.0,
    ) -> LongitudinalDataset:
        ids, arm, X = _trial_design(n)
        R = np.full((p, p), correlation)
        np.fill_diagonal(R, 1.0)
        alpha = np.vstack([np.full(p, 0.2), np.linspace(0.0, 0.6, p)])
        latent = X @ alpha + rng.multivariate_normal(np.zeros(p), R, size=n)
        cutoffs = np.concatenate([[0.0], np.linspace(0.8, 1.6, K - 2)]) if K > 2 else [0.0]
        W = np.searchsorted(np.asarray(cutoffs), latent, side="left").astype(float) + 1.0
        W = _monotone_dropout(W, rng, dropout)
        return LongitudinalDataset(
            ids=ids,
            arm=arm,
            X=X,
            Y=W,
            kind="categorical",
            K=K,
            reference_arm="placebo",
            treatment_columns=(1,),
        )

    return factory


@pytest.fixture
def short_chain() -> ChainSettings:
    return ChainSettings(iterations=300, burn_in=100, thin=1, seed=7)


@pytest.fixture
def true_sigma() -> np.ndarray:
    return TRUE_SIGMA.copy()
