"""Core samplers and decompositions.

Normal-gamma draws, LDL factorization of covariance matrices, and truncated
(multivariate) normal sampling. Every sampler takes an explicit
``numpy.random.Generator`` so results are reproducible stream by stream.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg
from scipy.special import ndtr, ndtri

from mda_impute.config import Config
from mda_impute.errors import (
    EmptyBox,
    EmptyInterval,
    InfeasibleStart,
    NonpositiveDf,
    NotPositiveDefinite,
    NumericalError,
    SingularCholesky,
)

FloatArray = NDArray[np.float64]
SamplingForm = Literal["cholesky", "partitioned"]


def cholesky_lower(
    matrix: ArrayLike,
    tol: float | None = None,
    error: type[NumericalError] = NotPositiveDefinite,
) -> FloatArray:
    """Lower Cholesky factor with a relative pivot check.

    Args:
        matrix: Symmetric matrix to factor.
        tol: Pivot tolerance relative to the largest diagonal entry.
        error: Exception raised when a squared pivot falls below tolerance.

    Returns:
        Lower-triangular ``C`` with ``C @ C.T == matrix``.
    """
    matrix = np.asarray(matrix, dtype=float)
    tol = Config.CHOLESKY_TOLERANCE if tol is None else tol
    try:
        chol = linalg.cholesky(matrix, lower=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise error(f"Matrix of shape {matrix.shape} is not positive definite") from exc

    scale = float(np.max(np.diag(matrix))) if matrix.size else 0.0
    pivots = np.diag(chol) ** 2
    if matrix.size and np.any(pivots <= tol * scale):
        worst = int(np.argmin(pivots))
        raise error(f"Cholesky pivot {worst + 1} is below tolerance ({pivots[worst]:.3g})")
    return chol


def _check_symmetric(matrix: FloatArray, what: str) -> None:
    scale = max(float(np.max(np.abs(matrix))), 1.0) if matrix.size else 1.0
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=Config.SYMMETRY_TOLERANCE * scale):
        raise NotPositiveDefinite(f"{what} is not symmetric")


@dataclass(frozen=True)
class LdlFactors:
    """LDL factorization ``sigma = L @ Lambda @ L.T`` with ``U = inv(L)``.

    Row ``j`` of ``U`` holds ``-beta[j, k]`` below the diagonal, so ``beta`` are
    the coefficients of visit ``j`` regressed on visits ``0..j-1`` and
    ``gamma[j] = 1 / Lambda[j, j]`` is that regression's residual precision.
    """

    L: FloatArray
    Lambda: FloatArray
    U: FloatArray

    @property
    def gamma(self) -> FloatArray:
        return 1.0 / np.diag(self.Lambda)

    @property
    def beta(self) -> FloatArray:
        return -np.tril(self.U, -1)

    def sigma(self) -> FloatArray:
        """Recompose the covariance matrix."""
        return (self.L * np.diag(self.Lambda)) @ self.L.T

    @classmethod
    def from_regression(cls, beta: ArrayLike, gamma: ArrayLike) -> "LdlFactors":
        """Build factors from sequential-regression coefficients and precisions."""
        beta = np.tril(np.asarray(beta, dtype=float), -1)
        gamma = np.asarray(gamma, dtype=float)
        p = gamma.shape[0]
        U = np.eye(p) - beta
        L = linalg.solve_triangular(U, np.eye(p), lower=True, unit_diagonal=True)
        return cls(L=L, Lambda=np.diag(1.0 / gamma), U=U)


def ldl_decompose(sigma: ArrayLike) -> LdlFactors:
    """Factor a symmetric positive-definite matrix as ``L Lambda L'``.

    Raises:
        NotPositiveDefinite: If ``sigma`` is not symmetric or a pivot is below
            ``Config.CHOLESKY_TOLERANCE`` relative to the largest diagonal entry.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise NotPositiveDefinite(f"Expected a square matrix, got shape {sigma.shape}")
    _check_symmetric(sigma, "Covariance matrix")

    chol = cholesky_lower(sigma)
    pivots = np.diag(chol)
    L = chol / pivots
    np.fill_diagonal(L, 1.0)
    U = linalg.solve_triangular(L, np.eye(sigma.shape[0]), lower=True, unit_diagonal=True)
    return LdlFactors(L=L, Lambda=np.diag(pivots**2), U=U)


@dataclass(eq=False)
class NormalGammaParams:
    """Normal-gamma law NG(f, D) for a regression ``(theta, gamma)``.

    ``D`` is the Gram matrix of ``[Z, y]``: with the lower Cholesky factor
    ``D = B B'`` the precision is ``gamma ~ chi2_f / B[-1, -1]**2`` and
    ``theta | gamma ~ N(beta, (gamma * Omega)^-1)``, where ``Omega`` is the
    leading block of ``D`` and ``beta`` its least-squares coefficient.
    """

    f: float
    D: FloatArray
    flat_dims: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        self.D = np.asarray(self.D, dtype=float)
        if self.D.ndim != 2 or self.D.shape[0] != self.D.shape[1] or self.D.shape[0] < 1:
            raise NotPositiveDefinite(f"Normal-gamma scale must be square, got {self.D.shape}")
        _check_symmetric(self.D, "Normal-gamma scale matrix")
        eigenvalues = np.linalg.eigvalsh(self.D)
        if eigenvalues[0] < -Config.SYMMETRY_TOLERANCE * max(abs(eigenvalues[-1]), 1.0):
            raise NotPositiveDefinite("Normal-gamma scale matrix is not positive semidefinite")

    @property
    def m(self) -> int:
        return self.D.shape[0]

    @cached_property
    def B(self) -> FloatArray:
        """Lower Cholesky factor of ``D``."""
        return cholesky_lower(self.D, error=SingularCholesky)

    @property
    def full_rank(self) -> bool:
        try:
            self.B  # noqa: B018
        except SingularCholesky:
            return False
        return True

    @property
    def is_proper(self) -> bool:
        return self.f > 0 and self.full_rank

    @property
    def residual_scale(self) -> float:
        """The ``a = B_gg^2`` entry of the partition."""
        return float(self.B[-1, -1] ** 2)

    def coefficient_mean(self) -> FloatArray:
        """Least-squares coefficient ``beta = Omega^-1 (Omega beta)``."""
        B = self.B
        return linalg.solve_triangular(B[:-1, :-1], B[-1, :-1], trans="T", lower=True)

    def mean_precision(self) -> float:
        """Posterior mean of ``gamma``, ``f / a``."""
        return self.f / self.residual_scale

    def require_proper(self) -> FloatArray:
        """Return ``B`` after checking the law can be sampled."""
        if self.f <= 0:
            raise NonpositiveDf(f"Normal-gamma degrees of freedom must be positive, got {self.f}")
        return self.B


def normal_gamma_from_noise(
    params: NormalGammaParams,
    e_theta: ArrayLike,
    e_m: ArrayLike,
    form: SamplingForm = "cholesky",
) -> tuple[FloatArray, FloatArray]:
    """Map standard noise to a normal-gamma draw.

    Args:
        params: Normal-gamma parameters (must be proper).
        e_theta: Standard normal noise, shape ``(n, m - 1)``.
        e_m: Square roots of chi-square(f) variates, shape ``(n,)``.
        form: ``"cholesky"`` solves ``h = (B')^-1 e`` and sets
            ``gamma = h_m^2``, ``theta = -h_{1..m-1} / h_m``; ``"partitioned"``
            uses ``gamma = e_m^2 / B_gg^2`` and
            ``theta = (B'_tt)^-1 [B'_gt - e_theta / sqrt(gamma)]``. Both are
            pathwise identical.

    Returns:
        ``theta`` of shape ``(n, m - 1)`` and ``gamma`` of shape ``(n,)``.
    """
    B = params.require_proper()
    e_theta = np.atleast_2d(np.asarray(e_theta, dtype=float))
    e_m = np.atleast_1d(np.asarray(e_m, dtype=float))

    if form == "cholesky":
        stacked = np.vstack([e_theta.T, e_m[None, :]])
        h = linalg.solve_triangular(B, stacked, trans="T", lower=True)
        gamma = h[-1] ** 2
        theta = -(h[:-1] / h[-1]).T
        return theta, gamma

    if form == "partitioned":
        b_gg = B[-1, -1]
        root_gamma = e_m / b_gg
        rhs = B[-1, :-1][:, None] - e_theta.T / root_gamma
        theta = linalg.solve_triangular(B[:-1, :-1], rhs, trans="T", lower=True).T
        return theta, root_gamma**2

    raise ValueError(f"Unknown normal-gamma sampling form: {form}")


def normal_gamma_sample(
    params: NormalGammaParams,
    rng: np.random.Generator,
    size: int | None = None,
    form: SamplingForm = "cholesky",
) -> tuple[FloatArray, FloatArray | float]:
    """Draw ``(theta, gamma)`` from NG(f, D).

    Returns a vector and a float when ``size`` is None, otherwise arrays with a
    leading dimension of ``size``.

    Raises:
        NonpositiveDf: If ``f <= 0``.
        SingularCholesky: If ``D`` is rank deficient.
    """
    B = params.require_proper()
    n = 1 if size is None else size
    e_m = np.sqrt(rng.chisquare(params.f, size=n))
    e_theta = rng.standard_normal((n, B.shape[0] - 1))
    theta, gamma = normal_gamma_from_noise(params, e_theta, e_m, form=form)
    if size is None:
        return theta[0], float(gamma[0])
    return theta, gamma


def sample_beta_gamma_marginal(
    params: NormalGammaParams,
    q: int,
    rng: np.random.Generator,
    size: int | None = None,
) -> tuple[FloatArray, FloatArray | float]:
    """Draw the lag coefficients and precision with the covariate block integrated out."""
    B = params.require_proper()
    m = B.shape[0]
    if not 1 <= q < m:
        raise ValueError(f"Covariate block size {q} incompatible with dimension {m}")
    n = 1 if size is None else size
    e_m = np.sqrt(rng.chisquare(params.f, size=n))
    e_beta = rng.standard_normal((n, m - 1 - q))

    root_gamma = e_m / B[-1, -1]
    rhs = B[-1, q:-1][:, None] - e_beta.T / root_gamma
    beta = linalg.solve_triangular(B[q:-1, q:-1], rhs, trans="T", lower=True).T
    gamma = root_gamma**2
    if size is None:
        return beta[0], float(gamma[0])
    return beta, gamma


def sample_alpha_conditional(
    params: NormalGammaParams,
    q: int,
    beta: ArrayLike,
    gamma: ArrayLike,
    rng: np.random.Generator,
) -> FloatArray:
    """Draw the covariate block given lag coefficients and precision.

    ``alpha = (B'_aa)^-1 [B'_ga - B'_ba beta - e_alpha / sqrt(gamma)]``.
    """
    B = params.require_proper()
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    single = beta.ndim == 1
    beta2 = np.atleast_2d(beta)
    gamma1 = np.atleast_1d(gamma)
    e_alpha = rng.standard_normal((beta2.shape[0], q))

    rhs = (
        B[-1, :q][:, None]
        - B[q:-1, :q].T @ beta2.T
        - e_alpha.T / np.sqrt(gamma1)
    )
    alpha = linalg.solve_triangular(B[:q, :q], rhs, trans="T", lower=True).T
    return alpha[0] if single else alpha


def normal_gamma_sample_marginal(
    params: NormalGammaParams,
    q: int,
    rng: np.random.Generator,
    size: int | None = None,
) -> tuple[FloatArray, FloatArray | float, FloatArray]:
    """Draw ``(beta, gamma)`` marginally, then the covariate block conditionally.

    The joint law equals :func:`normal_gamma_sample` with
    ``theta = (alpha, beta)``.

    Returns:
        ``(beta_part, gamma, alpha_part)``.
    """
    beta, gamma = sample_beta_gamma_marginal(params, q, rng, size=size)
    alpha = sample_alpha_conditional(params, q, beta, gamma, rng)
    return beta, gamma, alpha


@dataclass(frozen=True)
class TruncationBox:
    """Axis-aligned box with open lower and closed upper faces."""

    lower: FloatArray
    upper: FloatArray

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape:
            raise EmptyBox(f"Box bounds differ in shape: {lower.shape} vs {upper.shape}")
        bad = ~(lower < upper)
        if np.any(bad):
            raise EmptyBox(f"Box is empty in dimension(s) {np.flatnonzero(bad).tolist()}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unbounded(cls, k: int) -> "TruncationBox":
        return cls(np.full(k, -np.inf), np.full(k, np.inf))

    def contains(self, x: ArrayLike) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((self.lower <= x) & (x <= self.upper)))


def _positive_tail_draw(lo: float, hi: float, rng: np.random.Generator) -> float:
    """Rejection draw from N(0, 1) restricted to ``[lo, hi]`` with ``lo >= 0``."""
    rate = 0.5 * (lo + np.sqrt(lo * lo + 4.0))
    if rate * (hi - lo) >= 1.0:
        while True:
            z = lo + rng.standard_exponential() / rate
            if z < hi and rng.uniform() <= np.exp(-0.5 * (z - rate) ** 2):
                return z
    while True:
        z = rng.uniform(lo, hi)
        if rng.uniform() <= np.exp(0.5 * (lo * lo - z * z)):
            return z


def _narrow_draw(lo: float, hi: float, rng: np.random.Generator) -> float:
    """Uniform-proposal rejection on an interval straddling zero."""
    while True:
        z = rng.uniform(lo, hi)
        if rng.uniform() <= np.exp(-0.5 * z * z):
            return z


def truncated_standard_normal(
    lower: ArrayLike,
    upper: ArrayLike,
    rng: np.random.Generator,
) -> FloatArray:
    """Vectorized draws from N(0, 1) restricted to ``(lower, upper)``.

    Inverse-CDF sampling when the interval mass is at least
    ``Config.TAIL_MASS_THRESHOLD``, rejection sampling otherwise. Draws are
    strictly inside their intervals.
    """
    lower, upper = np.broadcast_arrays(
        np.atleast_1d(np.asarray(lower, dtype=float)),
        np.atleast_1d(np.asarray(upper, dtype=float)),
    )
    if np.any(~(lower < upper)):
        raise EmptyInterval("Truncation interval is empty")

    # Reflect intervals on the positive side so the CDF is evaluated in its accurate tail
    sign = np.where(lower > 0, -1.0, 1.0)
    a = np.where(sign < 0, -upper, lower)
    b = np.where(sign < 0, -lower, upper)

    p_a = ndtr(a)
    mass = ndtr(b) - p_a
    u = rng.uniform(size=a.shape)
    z = np.empty(a.shape)

    easy = mass >= Config.TAIL_MASS_THRESHOLD
    z[easy] = ndtri(p_a[easy] + u[easy] * mass[easy])
    for idx in np.flatnonzero(~easy):
        lo, hi = float(a.flat[idx]), float(b.flat[idx])
        if hi <= 0:
            z.flat[idx] = -_positive_tail_draw(-hi, -lo, rng)
        else:
            z.flat[idx] = _narrow_draw(lo, hi, rng)

    z = np.clip(z, np.nextafter(a, np.inf), np.nextafter(b, -np.inf))
    return sign * z


def truncated_normal(
    mean: ArrayLike,
    sd: ArrayLike,
    lower: ArrayLike,
    upper: ArrayLike,
    rng: np.random.Generator,
) -> FloatArray:
    """Vectorized draws from N(mean, sd^2) restricted to ``(lower, upper)``."""
    mean, sd, lower, upper = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (mean, sd, lower, upper))
    )
    if np.any(sd <= 0):
        raise EmptyInterval("Truncated normal needs a positive scale")
    if np.any(~(lower < upper)):
        raise EmptyInterval("Truncation interval is empty")
    z = truncated_standard_normal((lower - mean) / sd, (upper - mean) / sd, rng)
    x = mean + sd * z
    return np.clip(x, np.nextafter(lower, np.inf), np.nextafter(upper, -np.inf))


def univariate_truncated_normal(
    mean: float,
    var: float,
    lo: float,
    hi: float,
    rng: np.random.Generator,
) -> float:
    """Draw from N(mean, var) restricted to ``(lo, hi)``.

    Raises:
        EmptyInterval: If ``lo >= hi`` or ``var <= 0``.
    """
    if not lo < hi:
        raise EmptyInterval(f"Empty truncation interval ({lo}, {hi})")
    if not var > 0:
        raise EmptyInterval(f"Variance must be positive, got {var}")
    return float(truncated_normal(mean, np.sqrt(var), lo, hi, rng)[0])


def truncated_mvn_sample_batch(
    mean: ArrayLike,
    chol: ArrayLike,
    lower: ArrayLike,
    upper: ArrayLike,
    current: ArrayLike,
    rng: np.random.Generator,
    cycles: int = 1,
) -> FloatArray:
    """Whitened Gibbs sweeps for rows sharing one covariance factor.

    Each row ``x = mean + C z`` targets N(mean, C C') restricted to its own box.
    A sweep updates every whitened coordinate ``z_k`` from the univariate
    truncated normal induced by the box constraints of rows ``i >= k``.

    Args:
        mean: Row means, shape ``(n, k)``.
        chol: Lower Cholesky factor of the shared covariance, ``(k, k)``.
        lower: Lower box faces, ``(n, k)``; ``-inf`` allowed.
        upper: Upper box faces, ``(n, k)``; ``+inf`` allowed.
        current: Warm start inside the boxes, ``(n, k)``.
        rng: Random stream.
        cycles: Number of full sweeps.

    Returns:
        Updated rows, strictly inside their boxes.
    """
    mean = np.atleast_2d(np.asarray(mean, dtype=float))
    C = np.asarray(chol, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), mean.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), mean.shape)
    x = np.array(np.broadcast_to(np.asarray(current, dtype=float), mean.shape))

    if cycles < 1:
        raise ValueError(f"cycles must be at least 1, got {cycles}")
    if np.any(~(lower < upper)):
        raise EmptyBox("Truncation box is empty in at least one dimension")
    if np.any(~((lower <= x) & (x <= upper))):
        raise InfeasibleStart("Warm start lies outside its truncation box")

    n, k = mean.shape
    if n == 0 or k == 0:
        return x

    z = linalg.solve_triangular(C, (x - mean).T, lower=True).T
    tiny = Config.CHOLESKY_TOLERANCE * float(np.max(np.abs(np.diag(C))))

    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(cycles):
            for j in range(k):
                coef = C[j:, j]
                partial = x[:, j:] - mean[:, j:] - np.outer(z[:, j], coef)
                room_lo = lower[:, j:] - mean[:, j:] - partial
                room_hi = upper[:, j:] - mean[:, j:] - partial

                lo_z = np.full(n, -np.inf)
                hi_z = np.full(n, np.inf)
                pos = coef > tiny
                neg = coef < -tiny
                if pos.any():
                    lo_z = np.maximum(lo_z, np.max(room_lo[:, pos] / coef[pos], axis=1))
                    hi_z = np.minimum(hi_z, np.min(room_hi[:, pos] / coef[pos], axis=1))
                if neg.any():
                    lo_z = np.maximum(lo_z, np.max(room_hi[:, neg] / coef[neg], axis=1))
                    hi_z = np.minimum(hi_z, np.min(room_lo[:, neg] / coef[neg], axis=1))

                # Rounding can collapse an interval that contains the current value
                movable = lo_z < hi_z
                if movable.any():
                    new = truncated_standard_normal(lo_z[movable], hi_z[movable], rng)
                    delta = np.zeros(n)
                    delta[movable] = new - z[movable, j]
                    z[movable, j] = new
                    x[:, j:] += np.outer(delta, coef)
            x = mean + z @ C.T

    return np.clip(x, np.nextafter(lower, np.inf), np.nextafter(upper, -np.inf))


def truncated_mvn_sample(
    mean: ArrayLike,
    cov: ArrayLike,
    box: TruncationBox,
    current: ArrayLike,
    rng: np.random.Generator,
    cycles: int = 1,
) -> FloatArray:
    """One or more decorrelating Gibbs sweeps for N(mean, cov) restricted to ``box``.

    Raises:
        InfeasibleStart: If ``current`` violates the box.
        NotPositiveDefinite: If ``cov`` is not positive definite.
    """
    mean = np.asarray(mean, dtype=float)
    if not box.contains(current):
        raise InfeasibleStart("Warm start lies outside its truncation box")
    chol = cholesky_lower(cov)
    return truncated_mvn_sample_batch(
        mean[None, :], chol, box.lower[None, :], box.upper[None, :],
        np.asarray(current, dtype=float)[None, :], rng, cycles=cycles,
    )[0]


def conditional_normal(
    mean: ArrayLike,
    cov: ArrayLike,
    given: ArrayLike,
    values: ArrayLike,
) -> tuple[FloatArray, FloatArray]:
    """Mean and covariance of the components not in ``given``.

    Args:
        mean: Joint mean, length ``k``.
        cov: Joint covariance, ``(k, k)``.
        given: Boolean mask of conditioned components.
        values: Values of the conditioned components (in mask order).

    Returns:
        Conditional mean and covariance of the free components.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    given = np.asarray(given, dtype=bool)
    free = ~given
    if not given.any():
        return mean[free], cov[np.ix_(free, free)]

    chol = cholesky_lower(cov[np.ix_(given, given)])
    cross = cov[np.ix_(given, free)]
    coef = linalg.cho_solve((chol, True), cross).T
    cond_mean = mean[free] + coef @ (np.asarray(values, dtype=float) - mean[given])
    cond_cov = cov[np.ix_(free, free)] - coef @ cross
    return cond_mean, 0.5 * (cond_cov + cond_cov.T)


def sample_mvn(mean: ArrayLike, cov: ArrayLike, rng: np.random.Generator) -> FloatArray:
    """Draw one multivariate normal vector through a checked Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    if mean.size == 0:
        return mean.copy()
    chol = cholesky_lower(cov)
    return mean + chol @ rng.standard_normal(mean.shape[0])


def conditional_normal_draws(
    means: ArrayLike,
    cov: ArrayLike,
    values: ArrayLike,
    given: ArrayLike,
    rng: np.random.Generator,
) -> FloatArray:
    """Fill the free cells of each row from its conditional normal law.

    Rows share ``cov`` but carry their own means. Rows with the same mask are
    drawn together, in sorted mask order.

    Args:
        means: Row means, ``(n, k)``.
        cov: Shared covariance, ``(k, k)``.
        values: Row values, ``(n, k)``; free cells are ignored.
        given: Boolean mask of conditioned cells, ``(n, k)``.
        rng: Random stream.

    Returns:
        Copy of ``values`` with every free cell drawn.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    cov = np.asarray(cov, dtype=float)
    given = np.atleast_2d(np.asarray(given, dtype=bool))
    out = np.array(np.atleast_2d(np.asarray(values, dtype=float)))
    if out.size == 0 or given.all():
        return out

    masks, group = np.unique(given, axis=0, return_inverse=True)
    group = np.asarray(group).ravel()
    for g, mask in enumerate(masks):
        if mask.all():
            continue
        rows = np.flatnonzero(group == g)
        free = ~mask
        if mask.any():
            chol_given = cholesky_lower(cov[np.ix_(mask, mask)])
            cross = cov[np.ix_(mask, free)]
            coef = linalg.cho_solve((chol_given, True), cross).T
            centered = out[np.ix_(rows, np.flatnonzero(mask))] - means[np.ix_(rows, np.flatnonzero(mask))]
            cond_mean = means[np.ix_(rows, np.flatnonzero(free))] + centered @ coef.T
            cond_cov = cov[np.ix_(free, free)] - coef @ cross
        else:
            cond_mean = means[np.ix_(rows, np.flatnonzero(free))]
            cond_cov = cov[np.ix_(free, free)]
        chol = cholesky_lower(0.5 * (cond_cov + cond_cov.T))
        noise = rng.standard_normal((rows.shape[0], int(free.sum())))
        out[np.ix_(rows, np.flatnonzero(free))] = cond_mean + noise @ chol.T
    return out
