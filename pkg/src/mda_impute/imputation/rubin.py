"""Rubin's rules for combining multiply imputed estimates."""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from mda_impute.errors import PreconditionViolated


@dataclass(frozen=True)
class MiResult:
    """Combined estimate ``Q_bar`` with total variance ``T = W + (1 + 1/m) B``."""

    point: float
    se: float
    df: float
    m: int
    within: float
    between: float
    total: float
    per_imputation: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self, **extra) -> dict:
        """JSON-ready mapping; infinite degrees of freedom become None."""
        return {
            "point": self.point,
            "se": self.se,
            "df": self.df if np.isfinite(self.df) else None,
            "m": self.m,
            "within": self.within,
            "between": self.between,
            "total": self.total,
            **extra,
            "per_imputation": [{"estimate": q, "variance": u} for q, u in self.per_imputation],
        }


def rubin_combine(estimates: Sequence[tuple[float, float]]) -> MiResult:
    """Combine ``(estimate, variance)`` pairs from ``m >= 2`` imputations."""
    m = len(estimates)
    if m < 2:
        raise PreconditionViolated(f"Rubin's rules need at least 2 imputations, got {m}")
    points = np.array([float(q) for q, _ in estimates])
    variances = np.array([float(u) for _, u in estimates])
    if not (np.all(np.isfinite(points)) and np.all(np.isfinite(variances))):
        raise PreconditionViolated("Imputation estimates must be finite")
    if np.any(variances < 0):
        raise PreconditionViolated("Imputation variances must be nonnegative")

    point = float(points.mean())
    within = float(variances.mean())
    between = float(points.var(ddof=1))
    inflated = (1.0 + 1.0 / m) * between
    total = within + inflated
    df = float("inf") if inflated == 0 else (m - 1) * (1.0 + within / inflated) ** 2
    return MiResult(
        point=point,
        se=float(np.sqrt(total)),
        df=df,
        m=m,
        within=within,
        between=between,
        total=total,
        per_imputation=[(float(q), float(u)) for q, u in zip(points, variances, strict=True)],
    )
