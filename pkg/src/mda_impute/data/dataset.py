"""Longitudinal dataset, dropout patterns and monotone arrangement."""

import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from mda_impute.errors import DataError, MissingHistory, UnknownArm
from mda_impute.logging_config import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]
OutcomeKind = Literal["continuous", "binary", "ordinal"]

NA_TOKENS = ["", "NA", "Na", "nA", "na"]
_COVARIATE = re.compile(r"^x(\d+)$")
_CONTINUOUS = re.compile(r"^y(\d+)$")
_CATEGORICAL = re.compile(r"^w(\d+)$")


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    """Subjects by visits outcome matrix with covariates and arm labels.

    Outcomes are stored as floats with ``nan`` for missing cells. For
    categorical data the observed values are the category codes ``1..K``.
    """

    ids: NDArray[np.object_]
    arm: NDArray[np.object_]
    X: FloatArray
    Y: FloatArray
    kind: Literal["continuous", "categorical"] = "continuous"
    K: int | None = None
    reference_arm: str | None = None
    covariate_names: tuple[str, ...] = ()
    outcome_names: tuple[str, ...] = ()
    treatment_columns: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=object))
        object.__setattr__(self, "arm", np.asarray(self.arm, dtype=object))
        if not self.covariate_names:
            object.__setattr__(
                self, "covariate_names", tuple(f"x{k + 1}" for k in range(X.shape[1]))
            )
        if not self.outcome_names:
            prefix = "y" if self.kind == "continuous" else "w"
            object.__setattr__(
                self, "outcome_names", tuple(f"{prefix}{j + 1}" for j in range(Y.shape[1]))
            )
        self._validate()

    def _validate(self) -> None:
        n = self.ids.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != n or self.X.shape[1] < 1:
            raise DataError(f"Covariate matrix must be {n} x q with q >= 1, got {self.X.shape}")
        if self.Y.ndim != 2 or self.Y.shape[0] != n or self.Y.shape[1] < 1:
            raise DataError(f"Outcome matrix must be {n} x p with p >= 1, got {self.Y.shape}")
        if self.arm.shape[0] != n:
            raise DataError("Arm labels must have one entry per subject")
        if not np.all(np.isfinite(self.X)):
            raise DataError("Covariates must be complete and finite")
        if not np.all(self.X[:, 0] == 1.0):
            raise DataError("First covariate column must be the intercept (all ones)")
        if len(set(self.ids.tolist())) != n:
            raise DataError("Subject ids must be unique")

        if self.kind == "categorical":
            if self.K is None or self.K < 2:
                raise DataError("Categorical outcomes need K >= 2 categories")
            observed = self.Y[self.observed]
            valid = (observed == np.round(observed)) & (observed >= 1) & (observed <= self.K)
            if not np.all(valid):
                bad = np.unique(observed[~valid])[:5].tolist()
                raise DataError(f"Categories must be integers in 1..{self.K}; found {bad}")
        elif self.kind != "continuous":
            raise DataError(f"Unknown outcome kind: {self.kind}")

        if self.reference_arm is not None and self.reference_arm not in self.arms:
            raise UnknownArm(f"Reference arm '{self.reference_arm}' not present in data")

        for col in self.treatment_columns:
            if not 0 < col < self.q:
                raise DataError(f"Treatment column index {col} is not a non-intercept covariate")
        for label in self.arms:
            rows = self.X[self.arm == label][:, list(self.treatment_columns)]
            if rows.size and not np.all(rows == rows[0]):
                raise DataError(f"Treatment coding varies within arm '{label}'")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.Y.shape[1]

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    @cached_property
    def observed(self) -> NDArray[np.bool_]:
        return ~np.isnan(self.Y)

    @cached_property
    def patterns(self) -> NDArray[np.int_]:
        """Index (1-based) of each subject's last observed visit, 0 if none."""
        observed = self.observed
        last = self.p - np.argmax(observed[:, ::-1], axis=1)
        return np.where(observed.any(axis=1), last, 0)

    @cached_property
    def arms(self) -> tuple[str, ...]:
        return tuple(str(a) for a in pd.unique(self.arm))

    @property
    def W(self) -> NDArray[np.int_]:
        """Category codes with 0 for missing cells."""
        return np.where(self.observed, np.nan_to_num(self.Y), 0).astype(int)

    def arm_coding(self, label: str) -> FloatArray:
        """Treatment-column values shared by every subject of an arm."""
        if label not in self.arms:
            raise UnknownArm(f"Arm '{label}' not present in data")
        first = int(np.flatnonzero(self.arm == label)[0])
        return self.X[first, list(self.treatment_columns)]

    def reference_design(self, i: int, reference_arm: str | None = None) -> FloatArray:
        """Subject ``i``'s covariates with the treatment coding of the reference arm."""
        label = reference_arm or self.reference_arm
        if label is None:
            raise UnknownArm("No reference arm designated")
        if str(self.arm[i]) not in self.arms:
            raise UnknownArm(f"Arm '{self.arm[i]}' of subject {self.ids[i]} is unknown")
        x = self.X[i].copy()
        x[list(self.treatment_columns)] = self.arm_coding(label)
        return x

    def take(self, order: ArrayLike) -> "LongitudinalDataset":
        """Dataset with subjects reordered by ``order``."""
        order = np.asarray(order, dtype=int)
        return LongitudinalDataset(
            ids=self.ids[order],
            arm=self.arm[order],
            X=self.X[order],
            Y=self.Y[order],
            kind=self.kind,
            K=self.K,
            reference_arm=self.reference_arm,
            covariate_names=self.covariate_names,
            outcome_names=self.outcome_names,
            treatment_columns=self.treatment_columns,
        )

    def to_frame(self, outcomes: ArrayLike | None = None) -> pd.DataFrame:
        """Input-schema frame, optionally with replaced outcome values."""
        values = self.Y if outcomes is None else np.asarray(outcomes, dtype=float)
        frame = pd.DataFrame({"id": self.ids, "arm": self.arm})
        for k, name in enumerate(self.covariate_names):
            frame[name] = self.X[:, k]
        for j, name in enumerate(self.outcome_names):
            column = values[:, j]
            if self.is_categorical:
                frame[name] = pd.array(
                    np.where(np.isnan(column), pd.NA, np.nan_to_num(column)), dtype="Int64"
                )
            else:
                frame[name] = column
        return frame

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        outcome_kind: OutcomeKind = "continuous",
        categories: int | None = None,
        reference_arm: str | None = None,
        treatment_columns: tuple[str, ...] = (),
    ) -> "LongitudinalDataset":
        """Build a dataset from a wide frame with ``id, arm, x1..xq, y1..yp | w1..wp``."""
        for required in ("id", "arm"):
            if required not in frame.columns:
                raise DataError(f"Missing required column '{required}'")

        covariates = _numbered_columns(frame.columns, _COVARIATE, "x")
        pattern = _CONTINUOUS if outcome_kind == "continuous" else _CATEGORICAL
        prefix = "y" if outcome_kind == "continuous" else "w"
        outcomes = _numbered_columns(frame.columns, pattern, prefix)
        if not covariates:
            raise DataError("No covariate columns x1..xq found")
        if not outcomes:
            other = "w" if prefix == "y" else "y"
            hint = (
                f" (found {other}-columns: check the outcome kind)"
                if _numbered_columns(frame.columns, _CATEGORICAL if prefix == "y" else _CONTINUOUS, other)
                else ""
            )
            raise DataError(f"No outcome columns {prefix}1..{prefix}p found{hint}")

        try:
            X = frame[covariates].apply(pd.to_numeric).to_numpy(dtype=float)
            Y = frame[outcomes].apply(pd.to_numeric).to_numpy(dtype=float)
        except (ValueError, TypeError) as exc:
            raise DataError(f"Non-numeric covariate or outcome value: {exc}") from exc

        if outcome_kind == "continuous":
            kind, K = "continuous", None
        elif outcome_kind == "binary":
            kind, K = "categorical", 2
        else:
            if categories is None or categories < 3:
                raise DataError("Ordinal outcomes need categories >= 3")
            kind, K = "categorical", categories

        treatment_idx = []
        for name in treatment_columns:
            if name not in covariates:
                raise DataError(f"Treatment column '{name}' is not a covariate")
            treatment_idx.append(covariates.index(name))

        return cls(
            ids=frame["id"].astype(str).to_numpy(dtype=object),
            arm=frame["arm"].astype(str).to_numpy(dtype=object),
            X=X,
            Y=Y,
            kind=kind,
            K=K,
            reference_arm=reference_arm,
            covariate_names=tuple(covariates),
            outcome_names=tuple(outcomes),
            treatment_columns=tuple(treatment_idx),
        )


def _numbered_columns(columns: pd.Index, pattern: re.Pattern[str], prefix: str) -> list[str]:
    found = sorted(
        (int(match.group(1)), name)
        for name in columns
        if (match := pattern.match(str(name)))
    )
    numbers = [number for number, _ in found]
    if numbers and numbers != list(range(1, len(numbers) + 1)):
        raise DataError(f"Columns {prefix}1..{prefix}{len(numbers)} must be consecutive")
    return [name for _, name in found]


def load_dataset(
    path: str | Path,
    outcome_kind: OutcomeKind = "continuous",
    categories: int | None = None,
    reference_arm: str | None = None,
    treatment_columns: tuple[str, ...] = (),
) -> LongitudinalDataset:
    """Read a one-row-per-subject CSV file.

    Missing values are empty fields or ``NA`` in any letter case.
    """
    try:
        frame = pd.read_csv(
            path,
            dtype={"id": str, "arm": str},
            keep_default_na=False,
            na_values=NA_TOKENS,
            encoding="utf-8",
        )
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"Cannot read input '{path}': {exc}") from exc

    dataset = LongitudinalDataset.from_frame(
        frame,
        outcome_kind=outcome_kind,
        categories=categories,
        reference_arm=reference_arm,
        treatment_columns=treatment_columns,
    )
    logger.info(
        f"Loaded {dataset.n} subjects, {dataset.p} visits, {dataset.q} covariates from {path}"
    )
    return dataset


@dataclass(frozen=True, eq=False)
class MonotoneArrangement:
    """Subjects sorted by descending dropout pattern.

    Attributes:
        order: Stable permutation of subject indices.
        counts: ``counts[j]`` subjects have visit ``j`` (0-based) within their
            pattern, i.e. ``#{i : s_i >= j + 1}``.
        intermittent_cells: ``(subject, visit)`` pairs, both 0-based, missing
            before the subject's last observed visit.
        patterns: ``s_i`` per subject in original order.
    """

    order: NDArray[np.int_]
    counts: NDArray[np.int_]
    intermittent_cells: list[tuple[int, int]]
    patterns: NDArray[np.int_]

    def pattern_histogram(self) -> NDArray[np.int_]:
        """Number of subjects in pattern ``s`` for ``s = 0..p``."""
        return np.bincount(self.patterns, minlength=self.counts.shape[0] + 1)

    def intermittent_subjects(self) -> list[int]:
        return sorted({i for i, _ in self.intermittent_cells})


def arrange_monotone(data: LongitudinalDataset) -> MonotoneArrangement:
    """Order subjects by pattern and enumerate intermittent missing cells."""
    s = data.patterns
    order = np.argsort(-s, kind="stable")
    counts = np.array([(s >= j + 1).sum() for j in range(data.p)], dtype=int)
    visit = np.arange(data.p)[None, :]
    gaps = (~data.observed) & (visit < s[:, None] - 1)
    cells = [(int(i), int(j)) for i, j in zip(*np.nonzero(gaps), strict=True)]
    return MonotoneArrangement(order=order, counts=counts, intermittent_cells=cells, patterns=s)


def design_row(
    data: LongitudinalDataset,
    i: int,
    j: int,
    filled: ArrayLike,
    include_response: bool = False,
) -> FloatArray:
    """Row of the visit-``j`` regression design (0-based visit).

    Returns ``(x_i, y_i0..y_i,j-1)``, with ``y_ij`` appended when
    ``include_response`` is set.

    Raises:
        MissingHistory: If a required outcome is missing from ``filled``.
    """
    filled = np.asarray(filled, dtype=float)
    stop = j + 1 if include_response else j
    lags = filled[i, :stop]
    if np.any(np.isnan(lags)):
        missing = int(np.flatnonzero(np.isnan(lags))[0])
        raise MissingHistory(f"Subject {data.ids[i]} lacks outcome at visit {missing + 1}")
    return np.concatenate([data.X[i], lags])


def design_matrix(data: LongitudinalDataset, j: int, filled: ArrayLike) -> FloatArray:
    """Stack ``[x, y_0..y_j]`` over subjects whose pattern reaches visit ``j``."""
    filled = np.asarray(filled, dtype=float)
    rows = np.flatnonzero(data.patterns >= j + 1)
    block = np.hstack([data.X[rows], filled[rows, : j + 1]])
    if np.any(np.isnan(block)):
        raise MissingHistory(f"Design for visit {j + 1} has unfilled outcomes")
    return block
