"""Tests for dropout imputation and the endpoint analysis."""

import numpy as np
import pytest

from mda_impute.data.dataset import LongitudinalDataset
from mda_impute.errors import ConfigError, MissingHistory, PreconditionViolated, UnknownArm
from mda_impute.imputation.engine import (
    ImputationSpec,
    analyze_endpoint,
    dropout_conditional,
    emit_completed_datasets,
    imputation_means,
    impute_dataset,
    impute_dropout,
    select_draws,
)
from mda_impute.imputation.rubin import rubin_combine
from mda_impute.run_config import ChainSettings
from mda_impute.sampling.mmrm import MniwPrior, ParameterDraw, mmrm_mda_chain
from mda_impute.sampling.probit import MvpPrior, mvp_chain

ALPHA = np.array([[0.0, 0.0], [1.0, 2.0]])
SIGMA = np.array([[1.0, 0.5], [0.5, 1.0]])


@pytest.fixture
def two_subjects() -> LongitudinalDataset:
    """A completer on placebo and an active subject who dropped out after visit 1."""
    return LongitudinalDataset(
        ids=["p1", "a1"],
        arm=["placebo", "active"],
        X=[[1.0, 0.0], [1.0, 1.0]],
        Y=[[0.2, 0.1], [1.5, np.nan]],
        reference_arm="placebo",
        treatment_columns=(1,),
    )


@pytest.fixture
def draw() -> ParameterDraw:
    return ParameterDraw(alpha=ALPHA, sigma=SIGMA)


class TestSelection:
    """Which draws feed which completed dataset."""

    def test_stride(self):
        assert select_draws(1000, 5) == [(0, 0), (0, 200), (0, 400), (0, 600), (0, 800)]

    def test_stride_across_chains(self):
        assert select_draws(500, 5, chains=2) == [(0, 0), (0, 200), (0, 400), (1, 100), (1, 300)]

    def test_per_chain_takes_last_draw(self):
        assert select_draws(50, 3, "per-chain", chains=4) == [(0, 49), (1, 49), (2, 49)]

    def test_too_few_draws(self):
        with pytest.raises(PreconditionViolated):
            select_draws(3, 5)
        with pytest.raises(PreconditionViolated):
            select_draws(50, 3, "per-chain", chains=2)


class TestMeans:
    """Mean trajectories under each mechanism."""

    def test_mechanisms(self, two_subjects):
        mar = imputation_means(two_subjects, ALPHA, [1], "MAR")[0]
        j2r = imputation_means(two_subjects, ALPHA, [1], "J2R")[0]
        cr = imputation_means(two_subjects, ALPHA, [1], "CR")[0]
        np.testing.assert_allclose(mar, [1.0, 2.0])
        np.testing.assert_allclose(j2r, [1.0, 0.0])
        np.testing.assert_allclose(cr, [0.0, 0.0])

    def test_reference_subjects_unaffected(self, rng, make_continuous):
        data = make_continuous(rng, n=40, dropout=0.3)
        alpha = rng.standard_normal((2, 3))
        placebo = np.flatnonzero(data.arm == "placebo")
        mar = imputation_means(data, alpha, placebo, "MAR")
        for mechanism in ("J2R", "CR"):
            np.testing.assert_allclose(imputation_means(data, alpha, placebo, mechanism), mar)

    def test_unknown_mechanism(self, two_subjects):
        with pytest.raises(ConfigError):
            imputation_means(two_subjects, ALPHA, [1], "BOCF")


class TestDropoutConditional:
    """Conditional law of the post-dropout visits."""

    @pytest.mark.parametrize(
        ("mechanism", "expected"), [("MAR", 2.25), ("J2R", 0.25), ("CR", 0.75)]
    )
    def test_hand_computed(self, two_subjects, draw, mechanism, expected):
        mean, cov = dropout_conditional(two_subjects, draw, 1, mechanism)
        assert mean[0] == pytest.approx(expected)
        assert cov[0, 0] == pytest.approx(0.75)

    def test_completer_rejected(self, two_subjects, draw):
        with pytest.raises(PreconditionViolated):
            dropout_conditional(two_subjects, draw, 0, "MAR")

    def test_single_trajectory_keeps_history(self, rng, two_subjects, draw):
        trajectory = impute_dropout(two_subjects, draw, 1, "J2R", rng)
        assert trajectory[0] == 1.5
        assert np.isfinite(trajectory[1])

    def test_probit_draw_needs_latents(self, rng, make_categorical):
        data = make_categorical(rng, n=20, p=2, K=2, dropout=0.5)
        draw = ParameterDraw(alpha=np.zeros((2, 2)), sigma=np.eye(2), cutoffs=np.zeros((2, 1)))
        with pytest.raises(MissingHistory):
            impute_dataset(data, draw, ImputationSpec(), rng)


class TestImputeDataset:
    """Completed outcome matrices."""

    def test_complete_data_copied(self, rng, make_continuous):
        data = make_continuous(rng, n=20)
        draw = ParameterDraw(alpha=ALPHA[:, :1].repeat(3, axis=1), sigma=np.eye(3))
        np.testing.assert_array_equal(impute_dataset(data, draw, ImputationSpec(), rng), data.Y)

    @pytest.mark.parametrize("mechanism", ["MAR", "J2R", "CR"])
    def test_fills_every_cell_and_keeps_observed(self, rng, make_continuous, true_sigma, mechanism):
        data = make_continuous(rng, n=60, dropout=0.3, intermittent=0.2)
        draw = ParameterDraw(alpha=rng.standard_normal((2, 3)), sigma=true_sigma)
        spec = ImputationSpec(mechanism=mechanism).validate(data)
        completed = impute_dataset(data, draw, spec, rng)
        assert not np.any(np.isnan(completed))
        np.testing.assert_array_equal(completed[data.observed], data.Y[data.observed])

    def test_reference_arm_same_under_every_mechanism(self, make_continuous, true_sigma):
        data = make_continuous(np.random.default_rng(1), n=60, dropout=0.3)
        draw = ParameterDraw(alpha=np.random.default_rng(2).standard_normal((2, 3)), sigma=true_sigma)
        placebo = data.arm == "placebo"
        completed = {
            mechanism: impute_dataset(
                data,
                draw,
                ImputationSpec(mechanism=mechanism).validate(data),
                np.random.default_rng(3),
            )
            for mechanism in ("MAR", "J2R", "CR")
        }
        np.testing.assert_allclose(completed["J2R"][placebo], completed["MAR"][placebo])
        np.testing.assert_allclose(completed["CR"][placebo], completed["MAR"][placebo])

    def test_categorical_chain(self, rng, make_categorical, short_chain):
        data = make_categorical(rng, n=60, p=2, K=3, dropout=0.3)
        keep = {index for _, index in select_draws(short_chain.retained, 5)}
        result = mvp_chain(data, MvpPrior.default(2, 2), short_chain, rng, keep=keep)
        completed = emit_completed_datasets([result], ImputationSpec(m=5), data, rng)
        assert len(completed) == 5
        for values in completed:
            assert set(np.unique(values)) <= {1.0, 2.0, 3.0}
            np.testing.assert_array_equal(values[data.observed], data.Y[data.observed])

    def test_continuous_chain_streams_are_independent(self, rng, make_continuous, short_chain):
        data = make_continuous(rng, n=60, dropout=0.3)
        result = mmrm_mda_chain(data, MniwPrior.weakly_informative(3, 2), short_chain, rng)
        completed = emit_completed_datasets([result], ImputationSpec(m=4), data, rng)
        missing = ~data.observed
        assert not np.allclose(completed[0][missing], completed[1][missing])


def _replicated_dropouts(n: int) -> LongitudinalDataset:
    """``n`` copies of the active dropout beside one placebo completer."""
    return LongitudinalDataset(
        ids=["p1"] + [f"a{i}" for i in range(n)],
        arm=["placebo"] + ["active"] * n,
        X=np.vstack([[1.0, 0.0], np.tile([1.0, 1.0], (n, 1))]),
        Y=np.vstack([[0.2, 0.1], np.tile([1.5, np.nan], (n, 1))]),
        reference_arm="placebo",
        treatment_columns=(1,),
    )


class TestImputedDraws:
    """Sampled post-dropout cells against their conditional law."""

    N = 100_000

    @pytest.mark.parametrize(("mechanism", "expected"), [("MAR", 2.25), ("J2R", 0.25)])
    def test_cell_mean_and_variance(self, draw, mechanism, expected):
        data = _replicated_dropouts(self.N)
        spec = ImputationSpec(mechanism=mechanism).validate(data)
        cells = impute_dataset(data, draw, spec, np.random.default_rng(41))[1:, 1]
        se = np.sqrt(0.75 / self.N)
        assert abs(cells.mean() - expected) < 4 * se
        assert cells.var() == pytest.approx(0.75, rel=0.02)

    def test_jump_to_reference_shift(self, draw):
        data = _replicated_dropouts(self.N)
        cells = {
            mechanism: impute_dataset(
                data,
                draw,
                ImputationSpec(mechanism=mechanism).validate(data),
                np.random.default_rng(seed),
            )[1:, 1]
            for mechanism, seed in (("MAR", 42), ("J2R", 43))
        }
        # treatment coefficient at the dropout visit
        delta = ALPHA[1, 1]
        shift = cells["MAR"].mean() - cells["J2R"].mean()
        assert abs(shift - delta) < 4 * np.sqrt(2 * 0.75 / self.N)


class TestSpecValidation:
    """Checks of the imputation settings against the data."""

    def test_needs_two_imputations(self, two_subjects):
        with pytest.raises(PreconditionViolated):
            ImputationSpec(m=1).validate(two_subjects)

    def test_reference_filled_from_data(self, two_subjects):
        assert ImputationSpec(mechanism="J2R").validate(two_subjects).reference_arm == "placebo"

    def test_reference_required_for_j2r(self):
        data = LongitudinalDataset(ids=["1", "2"], arm=["a", "b"], X=np.ones((2, 1)), Y=np.ones((2, 1)))
        with pytest.raises(UnknownArm):
            ImputationSpec(mechanism="J2R").validate(data)
        assert ImputationSpec().validate(data).reference_arm is None

    def test_unknown_active_arm(self, two_subjects):
        with pytest.raises(UnknownArm):
            ImputationSpec(active_arm="high dose").validate(two_subjects)

    def test_treatment_columns_required(self):
        data = LongitudinalDataset(
            ids=["1", "2"], arm=["a", "b"], X=np.ones((2, 1)), Y=np.ones((2, 1)), reference_arm="a"
        )
        with pytest.raises(ConfigError, match="treatment columns"):
            ImputationSpec(mechanism="CR").validate(data)


class TestEndpoint:
    """Per-imputation analysis of the last visit."""

    def _data(self, last, **kwargs) -> LongitudinalDataset:
        n = len(last)
        active = np.arange(n) % 2
        return LongitudinalDataset(
            ids=[str(i) for i in range(n)],
            arm=np.where(active == 1, "active", "placebo"),
            X=np.column_stack([np.ones(n), active]),
            Y=np.asarray(last, dtype=float)[:, None],
            reference_arm="placebo",
            treatment_columns=(1,),
            **kwargs,
        )

    def test_mean_difference(self):
        data = self._data([0.0, 3.0, 2.0, 5.0])
        estimate, variance = analyze_endpoint(data, data.Y, ImputationSpec())
        assert estimate == pytest.approx(3.0)
        assert variance == pytest.approx(2.0)

    def test_responder_difference(self):
        data = self._data([1, 3, 3, 3, 2, 3], kind="categorical", K=3)
        estimate, variance = analyze_endpoint(data, data.Y, ImputationSpec())
        assert estimate == pytest.approx(2.0 / 3.0)
        assert variance == pytest.approx(2.0 / 27.0)
        estimate, _ = analyze_endpoint(data, data.Y, ImputationSpec(responder_category=2))
        assert estimate == pytest.approx(1.0 / 3.0)

    def test_active_arm_must_be_named(self):
        data = LongitudinalDataset(
            ids=["1", "2", "3"], arm=["a", "b", "c"], X=np.ones((3, 1)), Y=np.ones((3, 1)),
            reference_arm="a",
        )
        with pytest.raises(ConfigError, match="active arm"):
            analyze_endpoint(data, data.Y, ImputationSpec())


@pytest.mark.slow
def test_mar_imputation_recovers_treatment_effect(make_continuous):
    """Under MAR dropout the combined estimate covers the true last-visit contrast."""
    data = make_continuous(np.random.default_rng(17), n=1000, dropout=0.2)
    settings = ChainSettings(iterations=1200, burn_in=200, seed=1)
    result = mmrm_mda_chain(
        data, MniwPrior.weakly_informative(3, 2), settings, np.random.default_rng(23)
    )
    spec = ImputationSpec(m=20)
    completed = emit_completed_datasets([result], spec, data, np.random.default_rng(29))
    combined = rubin_combine([analyze_endpoint(data, values, spec) for values in completed])
    assert abs(combined.point - 0.8) < 4 * combined.se
