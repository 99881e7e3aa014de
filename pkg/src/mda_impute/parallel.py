"""Deterministic fan-out of independent chains."""

from collections.abc import Callable
from typing import Any, TypeVar

import numpy as np
from joblib import Parallel, delayed

from mda_impute.logging_config import get_logger

logger = get_logger(__name__)

T = TypeVar("T")


def spawn_streams(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Child seed sequences of ``seed``; stream ``k`` never depends on ``count``."""
    return np.random.SeedSequence(seed).spawn(count)


def _run_one(task: Callable[..., T], seed: np.random.SeedSequence, kwargs: dict[str, Any]) -> T:
    return task(rng=np.random.default_rng(seed), **kwargs)


def run_chains(
    task: Callable[..., T],
    seeds: list[np.random.SeedSequence],
    workers: int = 1,
    per_chain: list[dict[str, Any]] | None = None,
    **shared: Any,
) -> list[T]:
    """Call ``task(rng=..., **shared, **per_chain[k])`` once per seed, in seed order.

    With ``workers > 1`` the calls run in separate processes; each call owns
    its stream, so the results do not depend on the worker count.
    """
    per_chain = per_chain or [{} for _ in seeds]
    calls = [(seed, {**shared, **extra}) for seed, extra in zip(seeds, per_chain, strict=True)]
    if workers <= 1 or len(calls) <= 1:
        return [_run_one(task, seed, kwargs) for seed, kwargs in calls]
    jobs = min(workers, len(calls))
    logger.info(f"Running {len(calls)} chains on {jobs} workers")
    return Parallel(n_jobs=jobs)(delayed(_run_one)(task, seed, kwargs) for seed, kwargs in calls)
