"""Monotone data augmentation for the multivariate normal repeated-measures model.

The MNIW prior on ``(alpha, Sigma)`` is decomposed into independent
normal-gamma priors on the sequential regressions of each visit on covariates
and earlier visits. Given data made monotone by imputing intermittent cells,
the per-visit posteriors are again independent normal-gamma laws, so a chain
only ever imputes intermittent cells and integrates dropout out.

Coefficients are stored as ``alpha`` with shape ``(q, p)``: column ``j`` holds
the covariate effects on visit ``j``, so a subject's mean is ``x_i @ alpha``.
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg, stats

from mda_impute.config import Config
from mda_impute.data.dataset import LongitudinalDataset, MonotoneArrangement, arrange_monotone
from mda_impute.errors import ConfigError, ImproperPosteriorError, MissingHistory
from mda_impute.logging_config import get_logger
from mda_impute.run_config import ChainSettings
from mda_impute.sampling.distributions import (
    FloatArray,
    LdlFactors,
    NormalGammaParams,
    cholesky_lower,
    conditional_normal_draws,
    ldl_decompose,
    normal_gamma_sample,
    normal_gamma_sample_marginal,
)

logger = get_logger(__name__)

SamplingMode = Literal["joint", "marginal"]


def relative_rank(matrix: ArrayLike) -> int:
    """Rank at ``Config.RANK_TOLERANCE`` relative to the largest singular value."""
    singular = np.linalg.svd(np.atleast_2d(np.asarray(matrix, dtype=float)), compute_uv=False)
    if singular.size == 0 or singular[0] == 0:
        return 0
    return int(np.sum(singular > Config.RANK_TOLERANCE * singular[0]))


@dataclass(eq=False)
class MniwPrior:
    """Matrix-normal inverse-Wishart prior ``MNIW(A, nu0, B0, M)``.

    ``Sigma ~ IW(nu0, A)`` and ``alpha | Sigma ~ MN(B0, M^+, Sigma)``. Zero rows
    of ``M`` mark covariates with flat priors; ``nu0 = 0`` with ``A = 0`` is
    Jeffreys' prior on ``Sigma``.
    """

    A: FloatArray
    nu0: float
    B0: FloatArray
    M: FloatArray

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B0 = np.atleast_2d(np.asarray(self.B0, dtype=float)).copy()
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        p, q = self.A.shape[0], self.M.shape[0]
        if self.A.shape != (p, p) or self.M.shape != (q, q) or self.B0.shape != (q, p):
            raise ConfigError(
                f"Prior shapes disagree: A {self.A.shape}, M {self.M.shape}, B0 {self.B0.shape}"
            )
        for name, matrix in (("A", self.A), ("M", self.M)):
            if not np.allclose(matrix, matrix.T):
                raise ConfigError(f"Prior matrix {name} must be symmetric")
            if matrix.size and np.linalg.eigvalsh(matrix)[0] < -Config.RANK_TOLERANCE * max(
                1.0, float(np.abs(matrix).max())
            ):
                raise ConfigError(f"Prior matrix {name} must be positive semidefinite")

        flat = self.flat_covariates
        if flat and np.any(self.B0[list(flat)] != 0):
            logger.warning(f"Prior mean rows {[k + 1 for k in flat]} reset to 0 for flat covariates")
            self.B0[list(flat)] = 0.0

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.M.shape[0]

    @property
    def r(self) -> int:
        return relative_rank(self.M)

    @property
    def flat_covariates(self) -> tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(np.all(self.M == 0, axis=1)))

    def joint_scale(self) -> FloatArray:
        """``D0 = [[M, M B0], [B0' M, B0' M B0 + A]]``."""
        MB = self.M @ self.B0
        return np.block([[self.M, MB], [MB.T, self.B0.T @ MB + self.A]])

    @classmethod
    def weakly_informative(
        cls,
        p: int,
        q: int,
        precision: float | None = None,
        nu0: float | None = None,
        scale: float = 1.0,
    ) -> "MniwPrior":
        """``nu0 = p + 1``, ``A = scale * I``, ``B0 = 0``, ``M = precision * I``."""
        precision = Config.DEFAULT_PRIOR_PRECISION if precision is None else precision
        return cls(
            A=scale * np.eye(p),
            nu0=float(p + 1) if nu0 is None else nu0,
            B0=np.zeros((q, p)),
            M=precision * np.eye(q),
        )

    @classmethod
    def jeffreys(cls, p: int, q: int) -> "MniwPrior":
        """Jeffreys' prior on ``Sigma`` with flat coefficients."""
        return cls(A=np.zeros((p, p)), nu0=0.0, B0=np.zeros((q, p)), M=np.zeros((q, q)))


def decompose_prior(prior: MniwPrior, p: int | None = None, q: int | None = None) -> list[NormalGammaParams]:
    """Split the MNIW prior into independent per-visit normal-gamma priors.

    Visit ``j`` (1-based) gets ``f_j0 = nu0 + j - p - (q - r)`` and the leading
    ``(q + j)`` block of ``D0``. Zero rows of that block are recorded as flat
    dimensions.
    """
    p = prior.p if p is None else p
    q = prior.q if q is None else q
    if (p, q) != (prior.p, prior.q):
        raise ConfigError(f"Prior is {prior.p} visits x {prior.q} covariates, data is {p} x {q}")

    D0 = prior.joint_scale()
    r = prior.r
    priors = []
    for j in range(1, p + 1):
        block = D0[: q + j, : q + j]
        flat = tuple(int(k) for k in np.flatnonzero(np.all(block == 0, axis=1)))
        priors.append(NormalGammaParams(f=prior.nu0 + j - p - (q - r), D=block, flat_dims=flat))
    return priors


@dataclass(eq=False)
class NgPosteriorSet:
    """Per-visit normal-gamma posteriors ``(f_j, D_j)``."""

    params: list[NormalGammaParams]
    counts: np.ndarray
    ridge_applied: tuple[int, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, j: int) -> NormalGammaParams:
        return self.params[j]

    @property
    def degrees_of_freedom(self) -> FloatArray:
        return np.array([params.f for params in self.params])


def pattern_gram(
    X: ArrayLike,
    filled: ArrayLike,
    patterns: ArrayLike,
    rows: ArrayLike | None = None,
) -> FloatArray:
    """Cumulative Gram matrices of ``[x, y]`` for subjects reaching each visit.

    Entry ``j`` of the result holds ``Z_j' Z_j`` in its leading
    ``(q + j + 1)`` block, with ``Z_j`` the rows of subjects with
    ``s_i >= j + 1``.
    """
    X = np.asarray(X, dtype=float)
    filled = np.asarray(filled, dtype=float)
    patterns = np.asarray(patterns, dtype=int)
    if rows is not None:
        rows = np.asarray(rows, dtype=int)
        X, filled, patterns = X[rows], filled[rows], patterns[rows]

    q, p = X.shape[1], filled.shape[1]
    visit = np.arange(p)[None, :]
    within = visit < patterns[:, None]
    if np.any(np.isnan(filled) & within):
        raise MissingHistory("Intermittent cells must be filled before building posteriors")

    Z = np.hstack([X, np.where(within, filled, 0.0)])
    grams = np.zeros((p, q + p, q + p))
    running = np.zeros((q + p, q + p))
    for j in range(p - 1, -1, -1):
        members = patterns == j + 1
        if members.any():
            block = Z[members]
            running = running + block.T @ block
        grams[j] = running
    return grams


def mda_posterior(
    prior_decomp: list[NormalGammaParams],
    arrangement: MonotoneArrangement,
    X: ArrayLike,
    filled: ArrayLike,
    ridge: bool = False,
    gram: FloatArray | None = None,
) -> NgPosteriorSet:
    """Per-visit posteriors ``f_j = n_j + f_j0``, ``D_j = D_j0 + Z_j' Z_j``.

    Args:
        prior_decomp: Output of :func:`decompose_prior`.
        arrangement: Monotone arrangement of the data.
        X: Covariates, ``(n, q)``.
        filled: Outcomes with every intermittent cell filled.
        ridge: Add ``RIDGE_SCALE * trace / dim`` to rank-deficient ``D_j``
            instead of failing.
        gram: Precomputed :func:`pattern_gram` output.

    Raises:
        ImproperPosteriorError: If some ``f_j <= 0`` or ``D_j`` is singular.
    """
    if gram is None:
        gram = pattern_gram(X, filled, arrangement.patterns)
    q = np.asarray(X).shape[1]
    params = []
    ridged = []
    for j, prior in enumerate(prior_decomp):
        dim = q + j + 1
        f = float(arrangement.counts[j]) + prior.f
        D = prior.D + gram[j][:dim, :dim]
        if f <= 0:
            raise ImproperPosteriorError(
                f"Posterior for visit {j + 1} is improper: degrees of freedom {f:g} <= 0 "
                f"({arrangement.counts[j]} subjects); use a more informative prior",
                visit=j + 1,
            )
        posterior = NormalGammaParams(f=f, D=D, flat_dims=prior.flat_dims)
        if not posterior.full_rank:
            if not ridge:
                raise ImproperPosteriorError(
                    f"Posterior for visit {j + 1} is improper: scale matrix is singular "
                    "(collinear covariates or too few subjects); use a weakly informative prior",
                    visit=j + 1,
                )
            eps = Config.RIDGE_SCALE * float(np.trace(D)) / dim
            logger.warning(f"Ridge {eps:.3g} added to posterior scale for visit {j + 1}")
            posterior = NormalGammaParams(f=f, D=D + eps * np.eye(dim), flat_dims=prior.flat_dims)
            ridged.append(j + 1)
        params.append(posterior)
    return NgPosteriorSet(params=params, counts=arrangement.counts.copy(), ridge_applied=tuple(ridged))


@dataclass(eq=False)
class SeqRegState:
    """Sequential-regression parameters of ``(alpha, Sigma)``.

    Visit ``j`` regresses on the covariates with coefficients
    ``alpha_tilde[:, j]`` and on earlier visits with ``beta[j, :j]``;
    ``gamma[j]`` is its residual precision.
    """

    alpha_tilde: FloatArray
    beta: FloatArray
    gamma: FloatArray

    def __post_init__(self) -> None:
        self.alpha_tilde = np.asarray(self.alpha_tilde, dtype=float)
        self.beta = np.tril(np.asarray(self.beta, dtype=float), -1)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if np.any(~(self.gamma > 0)):
            raise ImproperPosteriorError("Sequential-regression precisions must be positive")

    @property
    def q(self) -> int:
        return self.alpha_tilde.shape[0]

    @property
    def p(self) -> int:
        return self.gamma.shape[0]

    @property
    def theta(self) -> list[FloatArray]:
        return [np.concatenate([self.alpha_tilde[:, j], self.beta[j, :j]]) for j in range(self.p)]

    @classmethod
    def from_theta(cls, theta: list[ArrayLike], gamma: ArrayLike, q: int) -> "SeqRegState":
        p = len(theta)
        alpha_tilde = np.zeros((q, p))
        beta = np.zeros((p, p))
        for j, theta_j in enumerate(theta):
            theta_j = np.asarray(theta_j, dtype=float)
            alpha_tilde[:, j] = theta_j[:q]
            beta[j, :j] = theta_j[q:]
        return cls(alpha_tilde=alpha_tilde, beta=beta, gamma=np.asarray(gamma, dtype=float))

    @classmethod
    def from_parameters(cls, alpha: ArrayLike, sigma: ArrayLike) -> "SeqRegState":
        """Map ``(alpha, Sigma)`` to the sequential-regression parameters."""
        factors = ldl_decompose(sigma)
        alpha_tilde = np.asarray(alpha, dtype=float) @ factors.U.T
        return cls(alpha_tilde=alpha_tilde, beta=factors.beta, gamma=factors.gamma)

    def ldl(self) -> LdlFactors:
        return LdlFactors.from_regression(self.beta, self.gamma)

    def sigma(self) -> FloatArray:
        return self.ldl().sigma()

    def alpha(self) -> FloatArray:
        return self.alpha_tilde @ self.ldl().L.T

    def variance_diagonal(self) -> FloatArray:
        """``d_j = sum_{k<j} l_jk^2 / gamma_k + 1 / gamma_j``, the diagonal of ``Sigma``."""
        L = self.ldl().L
        return (L**2 / self.gamma[None, :]).sum(axis=1)

    def precision_diagonal(self) -> FloatArray:
        """``Sigma^jj = gamma_j + sum_{k>j} gamma_k beta_kj^2``."""
        return self.gamma + (self.gamma[:, None] * self.beta**2).sum(axis=0)

    def log_det_sigma(self) -> float:
        return float(-np.sum(np.log(self.gamma)))

    def prior_quadratic(self, center: ArrayLike, M: ArrayLike) -> float:
        """``tr[M (alpha - center) Sigma^-1 (alpha - center)']`` without inverting ``Sigma``."""
        U = self.ldl().U
        resid = self.alpha_tilde - np.asarray(center, dtype=float) @ U.T
        return float(np.einsum("kj,kl,lj,j->", resid, np.asarray(M, dtype=float), resid, self.gamma))

    def with_visit(self, j: int, alpha_col: ArrayLike, beta_row: ArrayLike, gamma_j: float) -> "SeqRegState":
        """Copy with visit ``j``'s regression replaced."""
        alpha_tilde = self.alpha_tilde.copy()
        beta = self.beta.copy()
        gamma = self.gamma.copy()
        alpha_tilde[:, j] = alpha_col
        beta[j, :j] = beta_row
        gamma[j] = gamma_j
        return SeqRegState(alpha_tilde=alpha_tilde, beta=beta, gamma=gamma)

    def copy(self) -> "SeqRegState":
        return SeqRegState(self.alpha_tilde.copy(), self.beta.copy(), self.gamma.copy())


def sample_visit(
    params: NormalGammaParams,
    q: int,
    rng: np.random.Generator,
    mode: SamplingMode = "joint",
) -> tuple[FloatArray, FloatArray, float]:
    """Draw one visit's ``(alpha_tilde_j, beta_j, gamma_j)``."""
    if mode == "joint":
        theta, gamma = normal_gamma_sample(params, rng)
        return theta[:q], theta[q:], float(gamma)
    if mode == "marginal":
        beta, gamma, alpha = normal_gamma_sample_marginal(params, q, rng)
        return alpha, beta, float(gamma)
    raise ValueError(f"Unknown sampling mode: {mode}")


def sample_seq_reg(
    posteriors: NgPosteriorSet,
    rng: np.random.Generator,
    mode: SamplingMode = "joint",
) -> SeqRegState:
    """Independent draws of ``(theta_j, gamma_j)`` for every visit."""
    p = len(posteriors)
    q = posteriors[0].m - 1
    alpha_tilde = np.zeros((q, p))
    beta = np.zeros((p, p))
    gamma = np.zeros(p)
    for j, params in enumerate(posteriors.params):
        alpha_tilde[:, j], beta[j, :j], gamma[j] = sample_visit(params, q, rng, mode)
    return SeqRegState(alpha_tilde=alpha_tilde, beta=beta, gamma=gamma)


def impute_intermittent(
    state: SeqRegState,
    X: ArrayLike,
    Y: ArrayLike,
    arrangement: MonotoneArrangement,
    rng: np.random.Generator,
) -> FloatArray:
    """Draw intermittent cells from their conditional normal given observed history.

    Each subject's cells before the last observed visit are drawn jointly from
    ``N(x_i alpha, Sigma_s)`` conditioned on the observed ones. Dropout cells
    stay missing.
    """
    X = np.asarray(X, dtype=float)
    filled = np.array(Y, dtype=float)
    subjects = arrangement.intermittent_subjects()
    if not subjects:
        return filled

    alpha = state.alpha()
    sigma = state.sigma()
    patterns = arrangement.patterns
    subjects_arr = np.asarray(subjects)
    for s in np.unique(patterns[subjects_arr]):
        rows = subjects_arr[patterns[subjects_arr] == s]
        values = filled[rows, :s]
        filled[rows, :s] = conditional_normal_draws(
            X[rows] @ alpha[:, :s], sigma[:s, :s], values, ~np.isnan(values), rng
        )
    return filled


def initial_fill(
    data: LongitudinalDataset,
    arrangement: MonotoneArrangement,
    complete: bool = False,
    Y: ArrayLike | None = None,
) -> FloatArray:
    """Starting values by last observation carried forward.

    Missing first-visit cells come from a covariate-only least-squares fit.
    With ``complete`` set every missing cell is filled, dropout included.
    """
    filled = np.array(data.Y if Y is None else Y, dtype=float)
    missing = np.isnan(filled)
    visit = np.arange(data.p)[None, :]
    need = missing if complete else missing & (visit < arrangement.patterns[:, None] - 1)

    if need[:, 0].any():
        seen = ~missing[:, 0]
        if seen.sum() >= 1:
            coef, *_ = np.linalg.lstsq(data.X[seen], filled[seen, 0], rcond=None)
            filled[need[:, 0], 0] = data.X[need[:, 0]] @ coef
        else:
            filled[need[:, 0], 0] = 0.0
    for j in range(1, data.p):
        rows = need[:, j]
        filled[rows, j] = filled[rows, j - 1]
    return filled


@dataclass(eq=False)
class FdaPosterior:
    """Conjugate full-data posterior: ``Sigma ~ IW(df, A_post)``, ``alpha | Sigma ~ MN``."""

    Omega: FloatArray
    alpha_mean: FloatArray
    A_post: FloatArray
    df: float


def fda_posterior_params(prior: MniwPrior, X: ArrayLike, Y: ArrayLike) -> FdaPosterior:
    """Posterior of ``(alpha, Sigma)`` given complete outcomes.

    ``Omega = X'X + M``, ``alpha_pos = Omega^-1 (X'Y + M B0)``,
    ``A_pos = A + Y'Y + B0' M B0 - alpha_pos' Omega alpha_pos`` and
    ``df = n + nu0 + r - q``.

    Raises:
        ImproperPosteriorError: If ``df <= p - 1`` or ``Omega`` is singular.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if np.any(np.isnan(Y)):
        raise MissingHistory("Full-data posterior needs complete outcomes")
    n, q = X.shape
    p = Y.shape[1]
    df = n + prior.nu0 + prior.r - q
    if df <= p - 1:
        raise ImproperPosteriorError(f"Inverse-Wishart degrees of freedom {df:g} <= p - 1 = {p - 1}")

    Omega = X.T @ X + prior.M
    try:
        chol = cholesky_lower(Omega)
    except Exception as exc:
        raise ImproperPosteriorError("Full-data coefficient precision X'X + M is singular") from exc
    alpha_mean = linalg.cho_solve((chol, True), X.T @ Y + prior.M @ prior.B0)
    A_post = prior.A + Y.T @ Y + prior.B0.T @ prior.M @ prior.B0 - alpha_mean.T @ Omega @ alpha_mean
    A_post = 0.5 * (A_post + A_post.T)
    return FdaPosterior(Omega=Omega, alpha_mean=alpha_mean, A_post=A_post, df=float(df))


def fda_posterior_sample(
    prior: MniwPrior,
    X: ArrayLike,
    Y: ArrayLike,
    rng: np.random.Generator,
    posterior: FdaPosterior | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Draw ``(Sigma, alpha)`` from the full-data posterior."""
    posterior = posterior or fda_posterior_params(prior, X, Y)
    cholesky_lower(posterior.A_post)
    p = posterior.A_post.shape[0]
    sigma = np.atleast_2d(
        stats.invwishart.rvs(df=posterior.df, scale=posterior.A_post, random_state=rng)
    ).reshape(p, p)
    chol_omega = cholesky_lower(posterior.Omega)
    chol_sigma = cholesky_lower(sigma)
    noise = rng.standard_normal(posterior.alpha_mean.shape)
    row_noise = linalg.solve_triangular(chol_omega, noise, trans="T", lower=True)
    alpha = posterior.alpha_mean + row_noise @ chol_sigma.T
    return sigma, alpha


def retained_iterations(iterations: int, burn_in: int, thin: int) -> np.ndarray:
    """Iteration indices kept after burn-in and thinning; ``floor((T - b) / t)`` of them."""
    if iterations <= burn_in:
        return np.zeros(0, dtype=int)
    return np.arange(burn_in + thin - 1, iterations, thin)


@dataclass(frozen=True, eq=False)
class ParameterDraw:
    """One posterior draw handed to dropout imputation.

    For probit chains ``sigma`` is the correlation matrix ``R`` and ``latent``
    the restricted-scale latent matrix of the same iteration.
    """

    alpha: FloatArray
    sigma: FloatArray
    cutoffs: FloatArray | None = None
    latent: FloatArray | None = None


@dataclass(eq=False)
class ChainResult:
    """Retained draws of one chain.

    Continuous schemes store ``(alpha, Sigma)``; probit schemes store the
    restricted-scale ``(alpha_ring, R)`` and cutoffs, together with the latent
    matrix of any draw listed in ``keep``.
    """

    scheme: str
    alpha: FloatArray
    sigma: FloatArray
    gamma: FloatArray
    cutoffs: FloatArray | None = None
    latent: dict[int, FloatArray] = field(default_factory=dict)
    acceptance: dict[str, float] | None = None
    iterations: int = 0

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    @property
    def is_restricted(self) -> bool:
        return self.cutoffs is not None

    def draw(self, index: int) -> ParameterDraw:
        if self.is_restricted and index not in self.latent:
            raise IndexError(f"Latent values of draw {index} were not kept")
        return ParameterDraw(
            alpha=self.alpha[index],
            sigma=self.sigma[index],
            cutoffs=None if self.cutoffs is None else self.cutoffs[index],
            latent=self.latent.get(index),
        )

    def parameter_table(self) -> tuple[list[str], FloatArray]:
        """Column names and one row per retained draw.

        Indices are 1-based: ``alpha[j][k]`` is covariate ``k`` at visit ``j``.
        """
        draws, q, p = self.alpha.shape
        names: list[str] = []
        columns: list[FloatArray] = []
        for j in range(p):
            for k in range(q):
                names.append(f"alpha[{j + 1}][{k + 1}]")
                columns.append(self.alpha[:, k, j])
        for j in range(p):
            names.append(f"gamma[{j + 1}]")
            columns.append(self.gamma[:, j])
        if self.is_restricted:
            for j in range(p):
                for k in range(j):
                    names.append(f"R[{j + 1}][{k + 1}]")
                    columns.append(self.sigma[:, j, k])
            for j in range(p):
                for k in range(1, self.cutoffs.shape[2]):
                    names.append(f"c[{j + 1}][{k + 1}]")
                    columns.append(self.cutoffs[:, j, k])
        else:
            for j in range(p):
                for k in range(j + 1):
                    names.append(f"Sigma[{j + 1}][{k + 1}]")
                    columns.append(self.sigma[:, j, k])
        matrix = np.column_stack(columns) if columns else np.zeros((draws, 0))
        return names, matrix


class DrawRecorder:
    """Collects retained draws into preallocated arrays."""

    def __init__(self, settings: ChainSettings, q: int, p: int, cutoff_count: int | None = None) -> None:
        self.keep_at = retained_iterations(settings.iterations, settings.burn_in, settings.thin)
        size = self.keep_at.shape[0]
        self.slot = {int(t): k for k, t in enumerate(self.keep_at)}
        self.alpha = np.zeros((size, q, p))
        self.sigma = np.zeros((size, p, p))
        self.gamma = np.zeros((size, p))
        self.cutoffs = None if cutoff_count is None else np.zeros((size, p, cutoff_count))

    def record(self, t: int, alpha: FloatArray, sigma: FloatArray, gamma: FloatArray,
               cutoffs: FloatArray | None = None) -> int | None:
        k = self.slot.get(t)
        if k is None:
            return None
        self.alpha[k] = alpha
        self.sigma[k] = sigma
        self.gamma[k] = gamma
        if self.cutoffs is not None and cutoffs is not None:
            self.cutoffs[k] = cutoffs
        return k


def mmrm_mda_chain(
    data: LongitudinalDataset,
    prior: MniwPrior,
    settings: ChainSettings,
    rng: np.random.Generator,
    mode: SamplingMode = "joint",
    ridge: bool = False,
) -> ChainResult:
    """Run the MDA chain for continuous outcomes.

    Each iteration draws ``(theta_j, gamma_j)`` from the per-visit posteriors
    given the current monotone data, then redraws the intermittent cells.
    Dropout cells are never imputed inside the chain.
    """
    if data.is_categorical:
        raise ConfigError("The MDA regression chain needs continuous outcomes")
    arrangement = arrange_monotone(data)
    decomposition = decompose_prior(prior, data.p, data.q)
    filled = initial_fill(data, arrangement)

    moving = arrangement.intermittent_subjects()
    static_rows = np.setdiff1d(np.arange(data.n), moving)
    static_gram = pattern_gram(data.X, filled, arrangement.patterns, rows=static_rows)
    gram = static_gram

    recorder = DrawRecorder(settings, data.q, data.p)
    logger.info(
        f"MDA chain: {settings.iterations} iterations, {len(arrangement.intermittent_cells)} "
        f"intermittent cells, {recorder.keep_at.shape[0]} retained draws"
    )
    for t in range(settings.iterations):
        if moving:
            gram = static_gram + pattern_gram(data.X, filled, arrangement.patterns, rows=moving)
        posterior = mda_posterior(decomposition, arrangement, data.X, filled, ridge=ridge, gram=gram)
        state = sample_seq_reg(posterior, rng, mode=mode)
        filled = impute_intermittent(state, data.X, data.Y, arrangement, rng)
        if t in recorder.slot:
            recorder.record(t, state.alpha(), state.sigma(), state.gamma)

    return ChainResult(
        scheme="mda",
        alpha=recorder.alpha,
        sigma=recorder.sigma,
        gamma=recorder.gamma,
        iterations=settings.iterations,
    )


def fda_chain(
    data: LongitudinalDataset,
    prior: MniwPrior,
    settings: ChainSettings,
    rng: np.random.Generator,
) -> ChainResult:
    """Run the full data augmentation chain.

    Every iteration imputes all missing cells, dropout included, from their
    conditional normal given the observed cells, then draws ``(Sigma, alpha)``
    from the full-data posterior.
    """
    if data.is_categorical:
        raise ConfigError("The full data augmentation chain needs continuous outcomes")
    arrangement = arrange_monotone(data)
    filled = initial_fill(data, arrangement, complete=True)
    observed = data.observed
    has_missing = np.flatnonzero(~observed.all(axis=1))

    recorder = DrawRecorder(settings, data.q, data.p)
    logger.info(f"FDA chain: {settings.iterations} iterations, {int((~observed).sum())} missing cells")
    for t in range(settings.iterations):
        sigma, alpha = fda_posterior_sample(prior, data.X, filled, rng)
        if has_missing.size:
            rows = has_missing
            filled[rows] = conditional_normal_draws(
                data.X[rows] @ alpha, sigma, data.Y[rows], observed[rows], rng
            )
        if t in recorder.slot:
            factors = ldl_decompose(sigma)
            recorder.record(t, alpha, sigma, factors.gamma)

    return ChainResult(
        scheme="fda",
        alpha=recorder.alpha,
        sigma=recorder.sigma,
        gamma=recorder.gamma,
        iterations=settings.iterations,
    )


def mniw_log_density(prior: MniwPrior, alpha: ArrayLike, sigma: ArrayLike) -> float:
    """Unnormalized log density of the MNIW prior at ``(alpha, Sigma)``."""
    alpha = np.asarray(alpha, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    chol = cholesky_lower(sigma)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    resid = alpha - prior.B0
    scatter = prior.A + resid.T @ prior.M @ resid
    trace = float(np.trace(linalg.cho_solve((chol, True), scatter)))
    return -0.5 * (prior.nu0 + prior.p + 1 + prior.r) * log_det - 0.5 * trace


def normal_gamma_log_kernel(params: NormalGammaParams, theta: ArrayLike, gamma: float) -> float:
    """Unnormalized NG(f, D) log density ``((f + m - 1)/2 - 1) log g - g w'Dw / 2``."""
    w = np.concatenate([-np.asarray(theta, dtype=float), [1.0]])
    quad = float(w @ params.D @ w)
    return ((params.f + params.m - 1) / 2.0 - 1.0) * np.log(gamma) - 0.5 * gamma * quad


def seq_reg_log_jacobian(gamma: ArrayLike) -> float:
    """Log Jacobian relating the MNIW density to the product of NG densities.

    ``sum_j log NG_j = log MNIW - sum_j (p - j + 2) log gamma_j`` with 1-based ``j``.
    """
    gamma = np.asarray(gamma, dtype=float)
    p = gamma.shape[0]
    weights = p - np.arange(1, p + 1) + 2
    return float(-np.sum(weights * np.log(gamma)))
