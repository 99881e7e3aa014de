"""Tests for dataset loading, dropout patterns and monotone arrangement."""

import numpy as np
import pandas as pd
import pytest

from mda_impute.data.dataset import (
    LongitudinalDataset,
    arrange_monotone,
    design_matrix,
    design_row,
    load_dataset,
)
from mda_impute.errors import DataError, MissingHistory, UnknownArm


def _dataset(Y, X=None, arm=None, **kwargs) -> LongitudinalDataset:
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    X = np.ones((n, 1)) if X is None else np.asarray(X, dtype=float)
    arm = ["a"] * n if arm is None else arm
    return LongitudinalDataset(ids=[str(i) for i in range(n)], arm=arm, X=X, Y=Y, **kwargs)


class TestPatterns:
    """Dropout patterns and monotone ordering."""

    def test_complete_data(self):
        data = _dataset(np.ones((4, 3)))
        arrangement = arrange_monotone(data)
        np.testing.assert_array_equal(arrangement.order, [0, 1, 2, 3])
        np.testing.assert_array_equal(arrangement.counts, [4, 4, 4])
        assert arrangement.intermittent_cells == []

    def test_order_and_counts(self):
        data = _dataset([[1.0, 2.0], [np.nan, np.nan], [1.0, np.nan]])
        arrangement = arrange_monotone(data)
        np.testing.assert_array_equal(data.patterns, [2, 0, 1])
        np.testing.assert_array_equal(arrangement.order, [0, 2, 1])
        np.testing.assert_array_equal(arrangement.counts, [2, 1])
        np.testing.assert_array_equal(arrangement.pattern_histogram(), [1, 1, 1])

    def test_intermittent_cell(self):
        data = _dataset([[1.0, np.nan, 3.0], [1.0, 2.0, 3.0]])
        arrangement = arrange_monotone(data)
        assert data.patterns[0] == 3
        assert arrangement.intermittent_cells == [(0, 1)]
        assert arrangement.intermittent_subjects() == [0]

    def test_leading_gap_is_intermittent(self):
        data = _dataset([[np.nan, 2.0, np.nan]])
        assert arrange_monotone(data).intermittent_cells == [(0, 0)]
        assert data.patterns[0] == 2


class TestDesign:
    """Sequential-regression design rows."""

    def test_first_visit_is_covariates_only(self):
        data = _dataset([[1.2, -0.3, 0.4]], X=[[1.0, 0.5]])
        row = design_row(data, 0, 0, data.Y)
        np.testing.assert_allclose(row, [1.0, 0.5])

    def test_lagged_outcomes_appended(self):
        data = _dataset([[1.2, -0.3, 0.4]], X=[[1.0, 0.5]])
        row = design_row(data, 0, 2, data.Y)
        np.testing.assert_allclose(row, [1.0, 0.5, 1.2, -0.3])

    def test_missing_history(self):
        data = _dataset([[np.nan, -0.3, 0.4]])
        with pytest.raises(MissingHistory):
            design_row(data, 0, 2, data.Y)

    def test_gram_matches_dense_construction(self, rng):
        Y = rng.standard_normal((6, 3))
        Y[4:, 2] = np.nan
        X = np.column_stack([np.ones(6), rng.standard_normal(6)])
        data = _dataset(Y, X=X)
        block = design_matrix(data, 2, data.Y)
        assert block.shape == (4, 5)
        gram = block.T @ block
        dense = np.vstack([design_row(data, i, 2, data.Y, include_response=True) for i in range(4)])
        np.testing.assert_allclose(gram, dense.T @ dense)
        assert np.all(np.linalg.eigvalsh(gram) > -1e-10)


class TestValidation:
    """Input checks of the dataset constructor."""

    def test_intercept_required(self):
        with pytest.raises(DataError, match="intercept"):
            _dataset([[1.0]], X=[[2.0]])

    def test_duplicate_ids(self):
        with pytest.raises(DataError, match="unique"):
            LongitudinalDataset(ids=["a", "a"], arm=["x", "x"], X=np.ones((2, 1)), Y=np.ones((2, 1)))

    def test_category_range(self):
        with pytest.raises(DataError, match="Categories"):
            _dataset([[1.0, 4.0]], kind="categorical", K=3)

    def test_unknown_reference_arm(self):
        with pytest.raises(UnknownArm):
            _dataset([[1.0]], reference_arm="placebo")

    def test_treatment_coding_constant_within_arm(self):
        X = [[1.0, 0.0], [1.0, 1.0]]
        with pytest.raises(DataError, match="varies"):
            _dataset([[1.0], [2.0]], X=X, arm=["a", "a"], treatment_columns=(1,))

    def test_reference_design_flips_treatment(self):
        X = [[1.0, 0.0, 0.3], [1.0, 1.0, 0.7]]
        data = _dataset(
            [[1.0], [2.0]], X=X, arm=["placebo", "active"],
            reference_arm="placebo", treatment_columns=(1,),
        )
        np.testing.assert_allclose(data.reference_design(1), [1.0, 0.0, 0.7])
        np.testing.assert_allclose(data.reference_design(0), X[0])


class TestLoading:
    """Reading one-row-per-subject CSV files."""

    def test_load_with_na_tokens(self, tmp_path):
        path = tmp_path / "trial.csv"
        path.write_text(
            "id,arm,x1,x2,y1,y2,y3\n"
            "1,placebo,1,0,0.5,NA,\n"
            "2,active,1,1,0.2,na,1.4\n"
            "3,active,1,1,-0.1,0.3,0.9\n"
        )
        data = load_dataset(path, reference_arm="placebo", treatment_columns=("x2",))
        assert (data.n, data.p, data.q) == (3, 3, 2)
        np.testing.assert_array_equal(data.patterns, [1, 3, 3])
        assert data.treatment_columns == (1,)
        assert data.arms == ("placebo", "active")

    def test_categorical_columns(self, tmp_path):
        path = tmp_path / "trial.csv"
        path.write_text("id,arm,x1,w1,w2\n1,a,1,1,2\n2,a,1,3,\n")
        data = load_dataset(path, outcome_kind="ordinal", categories=3)
        assert data.is_categorical
        np.testing.assert_array_equal(data.W, [[1, 2], [3, 0]])

    def test_wrong_outcome_kind_hint(self, tmp_path):
        path = tmp_path / "trial.csv"
        path.write_text("id,arm,x1,w1\n1,a,1,1\n")
        with pytest.raises(DataError, match="outcome kind"):
            load_dataset(path)

    def test_nonconsecutive_columns(self):
        frame = pd.DataFrame({"id": ["1"], "arm": ["a"], "x1": [1.0], "y1": [0.1], "y3": [0.2]})
        with pytest.raises(DataError, match="consecutive"):
            LongitudinalDataset.from_frame(frame)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="Cannot read"):
            load_dataset(tmp_path / "absent.csv")

    def test_to_frame_keeps_schema(self, tmp_path):
        path = tmp_path / "trial.csv"
        path.write_text("id,arm,x1,w1,w2\n1,a,1,1,2\n2,a,1,2,\n")
        data = load_dataset(path, outcome_kind="binary")
        frame = data.to_frame()
        assert list(frame.columns) == ["id", "arm", "x1", "w1", "w2"]
        assert frame["w2"].isna().tolist() == [False, True]
