"""Independence Metropolis-Hastings for general priors on the probit model.

The target prior on the restricted scale is
``g(R, alpha_ring) * MNIW-kernel(R, alpha_ring; nu0, M, alpha_ring_0)``. The
proposal for the sequential regressions is the conjugate Gibbs posterior under
``MNIW(nu0, I, alpha*_0, M)``, and a candidate is accepted with probability
``min(1, phi(candidate) / phi(current))`` where

    log phi = log g(R, alpha_ring) + Delta * sum_j log d_j
              + [Q(alpha*_0) - Q(alpha_ring_0 D^1/2)] / 2,

``Q(center) = tr[M (alpha - center) Sigma^-1 (alpha - center)']`` and
``Delta`` is ``(K - 2 + q - r) / 2`` under flat cutoff priors, ``(q - r) / 2``
under normal ones. With ``g = 1``, matching means and ``Delta = 0`` every
candidate is accepted.
"""

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from mda_impute.config import Config
from mda_impute.data.dataset import LongitudinalDataset
from mda_impute.errors import ConfigError, NonfiniteLogPhi, PreconditionViolated
from mda_impute.logging_config import get_logger
from mda_impute.sampling.distributions import (
    FloatArray,
    normal_gamma_sample,
    sample_alpha_conditional,
    sample_beta_gamma_marginal,
)
from mda_impute.sampling.mmrm import SeqRegState, decompose_prior, relative_rank
from mda_impute.sampling.probit import (
    CutoffMode,
    LatentInit,
    MvpPrior,
    MvpSampler,
    MvpState,
    RestrictedParams,
    to_restricted,
)

logger = get_logger(__name__)

ImhMode = Literal["joint", "sequential", "marginal"]
MarginalFlavour = Literal["simultaneous", "sequential"]


class CorrelationWeight:
    """Weight ``g(R, alpha_ring)`` of a general prior, in log form."""

    name = "identity"
    uses_coefficients = False

    def __init__(self, log_offset: float = 0.0) -> None:
        self.log_offset = log_offset

    def log_weight(self, restricted: RestrictedParams) -> float:
        return self.log_offset


class DeterminantPowerWeight(CorrelationWeight):
    """``g(R) = |R|^delta``, using ``log|R| = -sum_j log(gamma_j d_j)``."""

    name = "det_power"

    def __init__(self, delta: float, log_offset: float = 0.0) -> None:
        super().__init__(log_offset)
        self.delta = delta

    def log_weight(self, restricted: RestrictedParams) -> float:
        return self.log_offset - self.delta * float(np.sum(np.log(restricted.gamma)))


class BetaCorrelationWeight(CorrelationWeight):
    """Independent ``Beta(a, b)`` densities on ``(1 + r_jk) / 2``."""

    name = "beta_correlation"

    def __init__(self, a: float, b: float, log_offset: float = 0.0) -> None:
        super().__init__(log_offset)
        self.a = a
        self.b = b

    def log_weight(self, restricted: RestrictedParams) -> float:
        rows, cols = np.tril_indices(restricted.R.shape[0], -1)
        r = restricted.R[rows, cols]
        with np.errstate(divide="ignore"):
            total = (self.a - 1.0) * np.log1p(r) + (self.b - 1.0) * np.log1p(-r)
        return self.log_offset + float(np.sum(total)) - r.size * (self.a + self.b - 2.0) * np.log(2.0)


class CoefficientShrinkageWeight(CorrelationWeight):
    """``g(alpha_ring) = exp(-shrinkage * ||alpha_ring||^2 / 2)``."""

    name = "coef_shrinkage"
    uses_coefficients = True

    def __init__(self, shrinkage: float, log_offset: float = 0.0) -> None:
        super().__init__(log_offset)
        self.shrinkage = shrinkage

    def log_weight(self, restricted: RestrictedParams) -> float:
        return self.log_offset - 0.5 * self.shrinkage * float(np.sum(restricted.alpha**2))


def make_weight(
    name: str,
    delta: float = 0.0,
    beta_a: float = 1.0,
    beta_b: float = 1.0,
    shrinkage: float = 0.0,
    log_offset: float = 0.0,
) -> CorrelationWeight:
    """Build one of the named weight functions."""
    if name == "identity":
        return CorrelationWeight(log_offset)
    if name == "det_power":
        return DeterminantPowerWeight(delta, log_offset)
    if name == "beta_correlation":
        return BetaCorrelationWeight(beta_a, beta_b, log_offset)
    if name == "coef_shrinkage":
        return CoefficientShrinkageWeight(shrinkage, log_offset)
    raise ConfigError(f"Unknown prior weight: {name}")


@dataclass(eq=False)
class GeneralPrior:
    """General prior on ``(R, alpha_ring, c)`` handled by independence MH.

    Args:
        weight: ``g(R, alpha_ring)``.
        nu0: Degrees of freedom of the MNIW kernel.
        M: Column precision, possibly rank deficient.
        coef_mean: Restricted-scale prior mean ``alpha_ring_0``, ``(q, p)``.
        proposal_mean: Expanded-scale proposal mean ``alpha*_0``, ``(q, p)``.
        cutoff_mode: ``flat`` or ``normal`` cutoff prior.
        recenter_at: Iteration at which ``alpha*_0`` is moved to the running
            mean of ``alpha_ring``; never when None.
    """

    weight: CorrelationWeight
    nu0: float
    M: FloatArray
    coef_mean: FloatArray | float = 0.0
    proposal_mean: FloatArray | float = 0.0
    cutoff_mode: CutoffMode = "normal"
    cutoff_mean: FloatArray | float = 0.0
    cutoff_variance: FloatArray | float = Config.DEFAULT_CUTOFF_VARIANCE
    recenter_at: int | None = None
    r: int = field(init=False)

    def __post_init__(self) -> None:
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.r = relative_rank(self.M)

    @property
    def q(self) -> int:
        return self.M.shape[0]

    def delta(self, K: int) -> float:
        if self.cutoff_mode == "flat":
            return (K - 2 + self.q - self.r) / 2.0
        return (self.q - self.r) / 2.0

    def coef_mean_matrix(self, p: int) -> FloatArray:
        return np.array(np.broadcast_to(np.asarray(self.coef_mean, dtype=float), (self.q, p)))

    def proposal_mean_matrix(self, p: int) -> FloatArray:
        return np.array(np.broadcast_to(np.asarray(self.proposal_mean, dtype=float), (self.q, p)))

    def proposal_prior(self, p: int, proposal_mean: FloatArray | None = None) -> MvpPrior:
        center = self.proposal_mean_matrix(p) if proposal_mean is None else proposal_mean
        return MvpPrior(
            nu0=self.nu0,
            M=self.M,
            cutoff_mean=self.cutoff_mean,
            cutoff_variance=self.cutoff_variance,
            proposal_mean=center,
        )


def log_phi(
    seq: SeqRegState,
    cutoffs: ArrayLike,
    prior: GeneralPrior,
    proposal_mean: FloatArray | None = None,
) -> float:
    """Log acceptance weight of an expanded-scale state.

    Raises:
        NonfiniteLogPhi: The weight overflowed or is undefined at this state.
    """
    p = seq.p
    K = np.atleast_2d(np.asarray(cutoffs)).shape[1] + 1
    restricted = to_restricted(seq, cutoffs)
    center = prior.proposal_mean_matrix(p) if proposal_mean is None else proposal_mean
    target_center = prior.coef_mean_matrix(p) * np.sqrt(restricted.d)[None, :]
    quad = seq.prior_quadratic(center, prior.M) - seq.prior_quadratic(target_center, prior.M)
    value = (
        prior.weight.log_weight(restricted)
        + prior.delta(K) * float(np.sum(np.log(restricted.d)))
        + 0.5 * quad
    )
    if not np.isfinite(value):
        raise NonfiniteLogPhi(f"log phi is {value} at this state")
    return float(value)


def phi(state: MvpState, prior: GeneralPrior) -> float:
    """Acceptance weight of a chain state at the configured proposal mean."""
    return float(np.exp(log_phi(state.seq, state.cutoffs, prior)))


class ImhSampler(MvpSampler):
    """Probit chain whose regression step is an independence MH update.

    ``joint`` proposes every ``(theta_j, gamma_j)`` at once, ``sequential``
    one visit at a time and ``marginal`` proposes ``(beta_j, gamma_j)`` with the
    covariate block integrated out, then draws ``alpha_tilde`` exactly.
    """

    allows_flat_covariates = True

    def __init__(
        self,
        data: LongitudinalDataset,
        prior: GeneralPrior,
        rng: np.random.Generator,
        mode: ImhMode = "joint",
        marginal_flavour: MarginalFlavour = "simultaneous",
        latent_init: LatentInit = "quantile",
    ) -> None:
        self.general = prior
        self.mode = mode
        self.marginal_flavour = marginal_flavour
        self.center = prior.proposal_mean_matrix(data.p)
        if mode == "marginal":
            if np.any(self.center != 0) or np.any(prior.coef_mean_matrix(data.p) != 0):
                raise PreconditionViolated("Marginal iMH needs zero prior and proposal means")
            if prior.weight.uses_coefficients:
                raise PreconditionViolated(
                    f"Marginal iMH needs a weight of R only, got {prior.weight.name}"
                )
            if prior.recenter_at is not None:
                raise PreconditionViolated("Marginal iMH cannot re-center the proposal")
        super().__init__(
            data,
            prior.proposal_prior(data.p),
            rng,
            latent_init=latent_init,
            cutoff_mode=prior.cutoff_mode,
        )
        self.scheme = f"imh-{mode}"
        blocks = ["all"] if mode == "joint" or (
            mode == "marginal" and marginal_flavour == "simultaneous"
        ) else [f"visit_{j + 1}" for j in range(data.p)]
        self._proposed = dict.fromkeys(blocks, 0)
        self._accepted = dict.fromkeys(blocks, 0)
        self._alpha_ring_sum = np.zeros((data.q, data.p))
        self._root_d_sum = np.zeros(data.p)
        self._alpha_ring_count = 0

    def log_phi(self, seq: SeqRegState, cutoffs: FloatArray) -> float:
        try:
            return log_phi(seq, cutoffs, self.general, proposal_mean=self.center)
        except NonfiniteLogPhi as exc:
            logger.debug(str(exc))
            return float("nan")

    def _accept(self, block: str, candidate: float, current: float) -> bool:
        """MH decision; the uniform is drawn after the proposal."""
        u = self.rng.uniform()
        self._proposed[block] += 1
        if not np.isfinite(candidate):
            logger.warning(f"Non-finite log phi for block {block}; candidate rejected")
            return False
        accepted = (not np.isfinite(current)) or np.log(u) < candidate - current
        self._accepted[block] += int(accepted)
        return accepted

    def update_regression(self, state: MvpState, iteration: int) -> SeqRegState:
        posterior = self.posterior(state.latent)
        q = self.data.q
        current = state.seq
        current_phi = self.log_phi(current, state.cutoffs)

        if self.mode == "joint":
            candidate = self._draw_all(posterior.params, q)
            if self._accept("all", self.log_phi(candidate, state.cutoffs), current_phi):
                return candidate
            return current

        if self.mode == "sequential":
            for j, params in enumerate(posterior.params):
                theta, gamma = normal_gamma_sample(params, self.rng)
                candidate = current.with_visit(j, theta[:q], theta[q:], gamma)
                candidate_phi = self.log_phi(candidate, state.cutoffs)
                if self._accept(f"visit_{j + 1}", candidate_phi, current_phi):
                    current, current_phi = candidate, candidate_phi
            return current

        beta = current.beta.copy()
        gamma = current.gamma.copy()
        if self.marginal_flavour == "simultaneous":
            proposed_beta = beta.copy()
            proposed_gamma = gamma.copy()
            for j, params in enumerate(posterior.params):
                proposed_beta[j, :j], proposed_gamma[j] = sample_beta_gamma_marginal(params, q, self.rng)
            candidate = SeqRegState(current.alpha_tilde, proposed_beta, proposed_gamma)
            if self._accept("all", self.log_phi(candidate, state.cutoffs), current_phi):
                beta, gamma = proposed_beta, proposed_gamma
        else:
            for j, params in enumerate(posterior.params):
                b_j, g_j = sample_beta_gamma_marginal(params, q, self.rng)
                candidate = current.with_visit(j, current.alpha_tilde[:, j], b_j, g_j)
                candidate_phi = self.log_phi(candidate, state.cutoffs)
                if self._accept(f"visit_{j + 1}", candidate_phi, current_phi):
                    current, current_phi = candidate, candidate_phi
            beta, gamma = current.beta.copy(), current.gamma.copy()

        alpha_tilde = np.zeros_like(current.alpha_tilde)
        for j, params in enumerate(posterior.params):
            alpha_tilde[:, j] = sample_alpha_conditional(params, q, beta[j, :j], gamma[j], self.rng)
        return SeqRegState(alpha_tilde=alpha_tilde, beta=beta, gamma=gamma)

    def _draw_all(self, params_list, q: int) -> SeqRegState:
        p = len(params_list)
        alpha_tilde = np.zeros((q, p))
        beta = np.zeros((p, p))
        gamma = np.zeros(p)
        for j, params in enumerate(params_list):
            theta, gamma[j] = normal_gamma_sample(params, self.rng)
            alpha_tilde[:, j], beta[j, :j] = theta[:q], theta[q:]
        return SeqRegState(alpha_tilde=alpha_tilde, beta=beta, gamma=gamma)

    def observe(self, state: MvpState, iteration: int) -> None:
        """Track running means of ``alpha_ring`` and ``D^1/2``; re-center once if asked."""
        restricted = to_restricted(state.seq, state.cutoffs)
        self._alpha_ring_sum += restricted.alpha
        self._root_d_sum += np.sqrt(restricted.d)
        self._alpha_ring_count += 1
        if self.general.recenter_at is not None and iteration + 1 == self.general.recenter_at:
            # alpha*_0 lives on the expanded scale
            root_d = self._root_d_sum / self._alpha_ring_count
            self.center = (self._alpha_ring_sum / self._alpha_ring_count) * root_d[None, :]
            self.prior = replace(self.prior, proposal_mean=self.center)
            self.decomposition = decompose_prior(self.prior.mniw(self.data.p), self.data.p, self.data.q)
            logger.info(f"Proposal mean re-centered after {iteration + 1} iterations")

    def acceptance(self) -> dict[str, float]:
        return {
            block: (self._accepted[block] / count if count else float("nan"))
            for block, count in self._proposed.items()
        }


def imh_update_joint(
    state: MvpState,
    prior: GeneralPrior,
    data: LongitudinalDataset,
    rng: np.random.Generator,
) -> MvpState:
    """One all-visits independence MH update of the sequential regressions."""
    sampler = ImhSampler(data, prior, rng, mode="joint")
    return replace(state, seq=sampler.update_regression(state, 0))


def imh_update_sequential(
    state: MvpState,
    prior: GeneralPrior,
    data: LongitudinalDataset,
    rng: np.random.Generator,
) -> MvpState:
    """Visit-by-visit independence MH updates."""
    sampler = ImhSampler(data, prior, rng, mode="sequential")
    return replace(state, seq=sampler.update_regression(state, 0))


def imh_update_marginal(
    state: MvpState,
    prior: GeneralPrior,
    data: LongitudinalDataset,
    rng: np.random.Generator,
    flavour: MarginalFlavour = "simultaneous",
) -> MvpState:
    """Independence MH on ``(beta, gamma)`` followed by an exact ``alpha_tilde`` draw."""
    sampler = ImhSampler(data, prior, rng, mode="marginal", marginal_flavour=flavour)
    return replace(state, seq=sampler.update_regression(state, 0))
