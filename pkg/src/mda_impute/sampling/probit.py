"""Parameter-expanded MDA Gibbs sampler for the multivariate probit model.

Binary and ordinal outcomes ``w_ij`` are thresholded latent normals. The chain
runs on the expanded scale, where the latent covariance is an unrestricted
``Sigma``, and reports the identified restricted-scale quantities: the
correlation matrix ``R``, coefficients ``alpha / sqrt(d)`` and cutoffs
``c / sqrt(d)`` with ``d = diag(Sigma)``.

One iteration:

1. draw the sequential regressions from the MDA posterior given the latents,
2. draw the cutoffs (three or more categories),
3. refresh the latents with one truncated-normal Gibbs sweep per subject,
4. rescale by fresh expansion factors ``d*``.
"""

import warnings
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import statsmodels.api as sm
from numpy.typing import ArrayLike
from scipy import special
from statsmodels.miscmodels.ordinal_model import OrderedModel
from statsmodels.tools.sm_exceptions import PerfectSeparationError, PerfectSeparationWarning

from mda_impute.config import Config
from mda_impute.data.dataset import LongitudinalDataset, arrange_monotone
from mda_impute.errors import ConfigError, DataError, ImproperPosteriorError, PreconditionViolated
from mda_impute.logging_config import get_logger
from mda_impute.run_config import ChainSettings
from mda_impute.sampling.distributions import (
    FloatArray,
    cholesky_lower,
    truncated_mvn_sample_batch,
    truncated_normal,
)
from mda_impute.sampling.mmrm import (
    ChainResult,
    DrawRecorder,
    MniwPrior,
    NgPosteriorSet,
    SamplingMode,
    SeqRegState,
    decompose_prior,
    mda_posterior,
    pattern_gram,
    sample_seq_reg,
)

logger = get_logger(__name__)

CutoffMode = Literal["normal", "flat"]
LatentInit = Literal["quantile", "probit"]

MIN_CUTOFF_GAP = 1e-3
_QUANTILE_CLIP = 1e-6


@dataclass(eq=False)
class MvpPrior:
    """Prior of the restricted model.

    ``R`` and ``alpha_ring`` follow from ``MNIW(nu0, I, 0, M)`` on the expanded
    scale; ``nu0 = p + 1`` gives marginally uniform correlations. Cutoff
    ``c_jk`` (``k >= 2``) has an independent ``N(cutoff_mean, cutoff_variance)``
    prior on the restricted scale.
    """

    nu0: float
    M: FloatArray
    cutoff_mean: FloatArray | float = 0.0
    cutoff_variance: FloatArray | float = Config.DEFAULT_CUTOFF_VARIANCE
    proposal_mean: FloatArray | None = None

    def __post_init__(self) -> None:
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if np.any(np.asarray(self.cutoff_variance) <= 0):
            raise ConfigError("Cutoff prior variances must be positive")

    @property
    def q(self) -> int:
        return self.M.shape[0]

    @classmethod
    def default(cls, p: int, q: int, precision: float | None = None) -> "MvpPrior":
        precision = Config.DEFAULT_PRIOR_PRECISION if precision is None else precision
        return cls(nu0=float(p + 1), M=precision * np.eye(q))

    def mniw(self, p: int) -> MniwPrior:
        """Expanded-scale conjugate prior (or proposal) ``MNIW(nu0, I, alpha*_0, M)``."""
        B0 = np.zeros((self.q, p)) if self.proposal_mean is None else self.proposal_mean
        return MniwPrior(A=np.eye(p), nu0=self.nu0, B0=np.broadcast_to(B0, (self.q, p)), M=self.M)

    def cutoff_moments(self, p: int, K: int) -> tuple[FloatArray, FloatArray]:
        """Restricted-scale prior mean and variance of ``c_j2..c_j,K-1``, each ``(p, K - 2)``."""
        shape = (p, max(K - 2, 0))
        mean = np.broadcast_to(np.asarray(self.cutoff_mean, dtype=float), shape)
        var = np.broadcast_to(np.asarray(self.cutoff_variance, dtype=float), shape)
        return mean, var


@dataclass(frozen=True, eq=False)
class RestrictedParams:
    """Identified quantities: ``alpha_ring``, ``R``, cutoffs and the scale ``d``."""

    alpha: FloatArray
    R: FloatArray
    gamma: FloatArray
    cutoffs: FloatArray
    d: FloatArray


@dataclass(eq=False)
class MvpState:
    """Expanded-scale chain state.

    ``cutoffs`` has shape ``(p, K - 1)`` with ``cutoffs[:, 0] == 0``; ``latent``
    is ``(n, p)`` with ``nan`` beyond each subject's pattern.
    """

    seq: SeqRegState
    cutoffs: FloatArray
    latent: FloatArray

    @property
    def d(self) -> FloatArray:
        return self.seq.variance_diagonal()

    @property
    def K(self) -> int:
        return self.cutoffs.shape[1] + 1


def to_restricted(seq: SeqRegState, cutoffs: ArrayLike) -> RestrictedParams:
    """Map the expanded parameters to the identified scale.

    ``gamma`` of the result are the LDL precisions of ``R``, ``gamma_j d_j``.
    """
    d = seq.variance_diagonal()
    root = np.sqrt(d)
    sigma = seq.sigma()
    R = sigma / np.outer(root, root)
    np.fill_diagonal(R, 1.0)
    return RestrictedParams(
        alpha=seq.alpha() / root[None, :],
        R=R,
        gamma=seq.gamma * d,
        cutoffs=np.asarray(cutoffs, dtype=float) / root[:, None],
        d=d,
    )


def to_expanded(restricted: RestrictedParams) -> tuple[SeqRegState, FloatArray]:
    """Inverse of :func:`to_restricted` at scale ``restricted.d``."""
    root = np.sqrt(restricted.d)
    sigma = restricted.R * np.outer(root, root)
    seq = SeqRegState.from_parameters(restricted.alpha * root[None, :], sigma)
    return seq, restricted.cutoffs * root[:, None]


def extended_cutoffs(cutoffs: ArrayLike) -> FloatArray:
    """``[-inf, c_1, ..., c_{K-1}, inf]`` per visit."""
    cutoffs = np.atleast_2d(np.asarray(cutoffs, dtype=float))
    p = cutoffs.shape[0]
    return np.hstack([np.full((p, 1), -np.inf), cutoffs, np.full((p, 1), np.inf)])


def category_bounds(W: ArrayLike, cutoffs: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """Latent boxes ``(c_{w-1}, c_w]``; missing categories (``w = 0``) are unbounded."""
    W = np.asarray(W, dtype=int)
    ext = extended_cutoffs(cutoffs)
    cols = np.arange(W.shape[1])[None, :]
    observed = W > 0
    lower = np.where(observed, ext[cols, np.maximum(W - 1, 0)], -np.inf)
    upper = np.where(observed, ext[cols, W], np.inf)
    return lower, upper


def categorize(latent: ArrayLike, cutoffs: ArrayLike) -> np.ndarray:
    """Category ``k`` with ``c_{k-1} < y <= c_k``, per visit column."""
    latent = np.atleast_2d(np.asarray(latent, dtype=float))
    cutoffs = np.atleast_2d(np.asarray(cutoffs, dtype=float))
    out = np.zeros(latent.shape, dtype=int)
    for j in range(latent.shape[1]):
        out[:, j] = np.searchsorted(cutoffs[j], latent[:, j], side="left") + 1
    return out


def _quantile_cutoffs(codes: np.ndarray, K: int, visit: int) -> tuple[FloatArray, float]:
    """Restricted-scale starting cutoffs from observed category frequencies.

    ``c_k = Phi^-1(F_k) - Phi^-1(F_1)`` with ``F`` the cumulative frequencies;
    returns the cutoffs and the latent mean ``-Phi^-1(F_1)``.
    """
    if codes.size == 0:
        cumulative = np.arange(1, K) / K
    else:
        counts = np.bincount(codes, minlength=K + 1)[1:]
        empty = [k + 1 for k in np.flatnonzero(counts == 0)]
        if empty:
            logger.warning(f"Visit {visit + 1}: categories {empty} never observed")
        cumulative = np.cumsum(counts)[:-1] / codes.size
    quantiles = special.ndtri(np.clip(cumulative, _QUANTILE_CLIP, 1 - _QUANTILE_CLIP))
    cutoffs = quantiles - quantiles[0]
    for k in range(1, K - 1):
        cutoffs[k] = max(cutoffs[k], cutoffs[k - 1] + MIN_CUTOFF_GAP)
    return cutoffs, float(-quantiles[0])


def _probit_start(
    endog: np.ndarray,
    exog: FloatArray,
    K: int,
) -> tuple[FloatArray, FloatArray] | None:
    """Coefficients on ``exog`` and cutoffs of a probit fit, shifted so ``c_1 = 0``.

    Returns None when the fit separates, is singular or does not produce
    finite estimates.
    """
    if np.unique(endog).size < K:
        return None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", PerfectSeparationWarning)
            if K == 2:
                result = sm.Probit((endog == 2).astype(float), exog).fit(disp=0)
                coef = np.asarray(result.params, dtype=float)
                thresholds = np.array([0.0])
            else:
                # thresholds absorb the intercept
                model = OrderedModel(endog, exog[:, 1:], distr="probit")
                result = model.fit(method="bfgs", disp=0)
                params = np.asarray(result.params, dtype=float)
                thresholds = model.transform_threshold_params(params)[1:-1]
                coef = np.concatenate([[0.0], params[: exog.shape[1] - 1]])
    except (PerfectSeparationError, PerfectSeparationWarning, np.linalg.LinAlgError, ValueError):
        return None
    if not (np.all(np.isfinite(coef)) and np.all(np.isfinite(thresholds))):
        return None
    coef[0] -= thresholds[0]
    return coef, thresholds - thresholds[0]


def init_latent(
    data: LongitudinalDataset,
    rng: np.random.Generator,
    method: LatentInit = "quantile",
) -> MvpState:
    """Starting state with ``Sigma = I``.

    ``quantile`` places the cutoffs at normal quantiles of the observed category
    frequencies and draws each latent from ``N(-Phi^-1(F_1), 1)`` truncated to
    its category. ``probit`` instead fits a probit regression per visit on the
    covariates and earlier latents and draws from the fitted unit-variance
    normal; visits where the fit fails fall back to ``quantile``.
    """
    if not data.is_categorical:
        raise DataError("Latent initialization needs categorical outcomes")
    K = int(data.K)
    n, p = data.n, data.p
    W = data.W
    reach = np.arange(p)[None, :] < data.patterns[:, None]
    latent = np.full((n, p), np.nan)
    cutoffs = np.zeros((p, K - 1))

    for j in range(p):
        rows = np.flatnonzero(reach[:, j])
        observed = rows[W[rows, j] > 0]
        mean = np.zeros(rows.shape[0])
        fitted = None
        if method == "probit" and observed.size:
            design = np.hstack([data.X, latent[:, :j]])
            fitted = _probit_start(W[observed, j], design[observed], K)
            if fitted is None:
                logger.warning(f"Visit {j + 1}: probit start failed, using category quantiles")
            else:
                cutoffs[j] = fitted[1]
                mean = design[rows] @ fitted[0]
        if fitted is None:
            cutoffs[j], center = _quantile_cutoffs(W[observed, j], K, j)
            mean = np.full(rows.shape[0], center)

        ext = extended_cutoffs(cutoffs[j][None, :])[0]
        codes = W[rows, j]
        lower = np.where(codes > 0, ext[np.maximum(codes - 1, 0)], -np.inf)
        upper = np.where(codes > 0, ext[codes], np.inf)
        latent[rows, j] = truncated_normal(mean, np.ones_like(mean), lower, upper, rng)

    seq = SeqRegState(alpha_tilde=np.zeros((data.q, p)), beta=np.zeros((p, p)), gamma=np.ones(p))
    return MvpState(seq=seq, cutoffs=cutoffs, latent=latent)


def cutoff_bounds(latent: ArrayLike, W: ArrayLike, j: int, k: int) -> tuple[float, float]:
    """Data bounds of cutoff ``c_jk`` (visit ``j`` 0-based, category ``k`` 1-based).

    ``m_lo`` is the largest latent with ``w_ij = k`` and ``m_hi`` the smallest
    with ``w_ij = k + 1``; missing categories do not contribute.
    """
    latent = np.asarray(latent, dtype=float)
    W = np.asarray(W, dtype=int)
    column, codes = latent[:, j], W[:, j]
    below = column[codes == k]
    above = column[codes == k + 1]
    m_lo = float(below.max()) if below.size else -np.inf
    m_hi = float(above.min()) if above.size else np.inf
    return m_lo, m_hi


def sample_cutoffs(
    state: MvpState,
    W: ArrayLike,
    prior: MvpPrior,
    rng: np.random.Generator,
    mode: CutoffMode = "normal",
) -> FloatArray:
    """Draw ``c_j2..c_j,K-1`` for every visit given the latents.

    Under the normal prior the expanded-scale law is
    ``N(sqrt(d_j) mu_c, d_j V_c)`` restricted to the data bounds; under the flat
    prior the draw is uniform within them. The update is a coordinate sweep: each
    cutoff is a univariate truncated draw given its neighbours and the latents,
    a valid Gibbs step for the diagonal cutoff prior.

    Raises:
        ImproperPosteriorError: Flat prior with an unbounded cutoff.
    """
    cutoffs = state.cutoffs.copy()
    p, K = cutoffs.shape[0], state.K
    if K <= 2:
        return cutoffs

    W = np.asarray(W, dtype=int)
    d = state.d
    mean, var = prior.cutoff_moments(p, K)
    for j in range(p):
        ext = extended_cutoffs(cutoffs[j][None, :])[0]
        for k in range(2, K):
            m_lo, m_hi = cutoff_bounds(state.latent, W, j, k)
            lo = max(m_lo, ext[k - 1])
            hi = min(m_hi, ext[k + 1])
            if mode == "flat":
                if not (np.isfinite(lo) and np.isfinite(hi)):
                    raise ImproperPosteriorError(
                        f"Cutoff {k} at visit {j + 1} is unbounded under a flat prior",
                        visit=j + 1,
                    )
                value = rng.uniform(lo, hi)
            else:
                value = truncated_normal(
                    np.sqrt(d[j]) * mean[j, k - 2],
                    np.sqrt(d[j] * var[j, k - 2]),
                    np.array([lo]),
                    np.array([hi]),
                    rng,
                )[0]
            cutoffs[j, k - 1] = value
            ext[k] = value
    return cutoffs


def sample_latent(
    state: MvpState,
    data: LongitudinalDataset,
    rng: np.random.Generator,
    cutoffs: ArrayLike | None = None,
) -> FloatArray:
    """One warm-started truncated-normal Gibbs sweep over every subject's latents.

    Subject ``i`` targets ``N(x_i alpha, Sigma_s)`` on its first ``s_i`` visits,
    restricted to the category boxes; missing categories leave a coordinate
    unbounded.
    """
    cutoffs = state.cutoffs if cutoffs is None else np.asarray(cutoffs, dtype=float)
    latent = state.latent.copy()
    lower, upper = category_bounds(data.W, cutoffs)
    alpha = state.seq.alpha()
    chol = cholesky_lower(state.seq.sigma())
    patterns = data.patterns
    for s in np.unique(patterns[patterns > 0]):
        rows = np.flatnonzero(patterns == s)
        latent[rows, :s] = truncated_mvn_sample_batch(
            data.X[rows] @ alpha[:, :s],
            chol[:s, :s],
            lower[rows, :s],
            upper[rows, :s],
            latent[rows, :s],
            rng,
        )
    return latent


def px_rescale_factors(state: MvpState, nu0: float, rng: np.random.Generator) -> FloatArray:
    """Expansion factors ``d*_j = Sigma^jj / kappa_j`` with ``kappa_j ~ chi2(nu0)``."""
    if not nu0 > 0:
        raise ConfigError(f"Expansion needs nu0 > 0, got {nu0}")
    kappa = rng.chisquare(nu0, size=state.seq.p)
    return state.seq.precision_diagonal() / kappa


def apply_px_transform(state: MvpState, dstar: ArrayLike) -> MvpState:
    """Rescale visit ``j`` by ``sqrt(d*_j)``; ``R`` and category memberships are unchanged."""
    dstar = np.asarray(dstar, dtype=float)
    if np.any(~(dstar > 0)):
        raise ConfigError("Expansion factors must be positive")
    root = np.sqrt(dstar)
    seq = SeqRegState(
        alpha_tilde=state.seq.alpha_tilde * root[None, :],
        beta=state.seq.beta * np.outer(root, 1.0 / root),
        gamma=state.seq.gamma / dstar,
    )
    return MvpState(seq=seq, cutoffs=state.cutoffs * root[:, None], latent=state.latent * root[None, :])


class MvpSampler:
    """Gibbs sampler for the multivariate probit model.

    Subclasses replace :meth:`update_regression` to change how the sequential
    regressions are drawn.
    """

    scheme = "gibbs"
    allows_flat_covariates = False

    def __init__(
        self,
        data: LongitudinalDataset,
        prior: MvpPrior,
        rng: np.random.Generator,
        regression_draw: SamplingMode = "joint",
        latent_init: LatentInit = "quantile",
        cutoff_mode: CutoffMode = "normal",
    ) -> None:
        if not data.is_categorical:
            raise ConfigError("The probit sampler needs binary or ordinal outcomes")
        if prior.q != data.q:
            raise ConfigError(f"Prior has {prior.q} covariates, data has {data.q}")
        if not prior.nu0 > data.p - 1:
            raise ConfigError(f"Probit prior needs nu0 > p - 1 = {data.p - 1}, got {prior.nu0}")
        self.data = data
        self.prior = prior
        self.rng = rng
        self.regression_draw = regression_draw
        self.latent_init = latent_init
        self.cutoff_mode = cutoff_mode
        self.arrangement = arrange_monotone(data)
        self.decomposition = decompose_prior(prior.mniw(data.p), data.p, data.q)
        if not self.allows_flat_covariates and prior.mniw(data.p).r < data.q:
            raise PreconditionViolated("The probit Gibbs sampler needs a full-rank M")

    def initial_state(self) -> MvpState:
        return init_latent(self.data, self.rng, method=self.latent_init)

    def posterior(self, latent: FloatArray) -> NgPosteriorSet:
        gram = pattern_gram(self.data.X, latent, self.arrangement.patterns)
        return mda_posterior(self.decomposition, self.arrangement, self.data.X, latent, gram=gram)

    def update_regression(self, state: MvpState, iteration: int) -> SeqRegState:
        return sample_seq_reg(self.posterior(state.latent), self.rng, mode=self.regression_draw)

    def step(self, state: MvpState, iteration: int = 0) -> MvpState:
        """One full iteration, ending on a freshly expanded state."""
        state = replace(state, seq=self.update_regression(state, iteration))
        state = replace(
            state, cutoffs=sample_cutoffs(state, self.data.W, self.prior, self.rng, self.cutoff_mode)
        )
        state = replace(state, latent=sample_latent(state, self.data, self.rng))
        dstar = px_rescale_factors(state, self.prior.nu0, self.rng)
        return apply_px_transform(state, dstar)

    def observe(self, state: MvpState, iteration: int) -> None:
        """Hook called after every iteration."""

    def acceptance(self) -> dict[str, float] | None:
        return None

    def run(self, settings: ChainSettings, keep: set[int] | None = None) -> ChainResult:
        """Run a chain and record restricted-scale draws.

        Args:
            settings: Iterations, burn-in and thinning.
            keep: Retained-draw indices whose latent matrix is stored.
        """
        keep = set() if keep is None else set(keep)
        K = int(self.data.K)
        recorder = DrawRecorder(settings, self.data.q, self.data.p, cutoff_count=K - 1)
        latents: dict[int, FloatArray] = {}
        state = self.initial_state()
        logger.info(
            f"Probit {self.scheme} chain: {settings.iterations} iterations, K = {K}, "
            f"{recorder.keep_at.shape[0]} retained draws"
        )
        for t in range(settings.iterations):
            state = self.step(state, t)
            self.observe(state, t)
            if t in recorder.slot:
                restricted = to_restricted(state.seq, state.cutoffs)
                slot = recorder.record(
                    t, restricted.alpha, restricted.R, restricted.gamma, restricted.cutoffs
                )
                if slot in keep:
                    latents[slot] = state.latent / np.sqrt(restricted.d)[None, :]

        return ChainResult(
            scheme=self.scheme,
            alpha=recorder.alpha,
            sigma=recorder.sigma,
            gamma=recorder.gamma,
            cutoffs=recorder.cutoffs,
            latent=latents,
            acceptance=self.acceptance(),
            iterations=settings.iterations,
        )


def mvp_gibbs_iteration(
    state: MvpState,
    data: LongitudinalDataset,
    prior: MvpPrior,
    rng: np.random.Generator,
) -> MvpState:
    """One Gibbs iteration of the probit chain."""
    return MvpSampler(data, prior, rng).step(state)


def mvp_chain(
    data: LongitudinalDataset,
    prior: MvpPrior,
    settings: ChainSettings,
    rng: np.random.Generator,
    keep: set[int] | None = None,
    regression_draw: SamplingMode = "joint",
    latent_init: LatentInit = "quantile",
) -> ChainResult:
    """Run the parameter-expanded Gibbs chain."""
    sampler = MvpSampler(data, prior, rng, regression_draw=regression_draw, latent_init=latent_init)
    return sampler.run(settings, keep=keep)
