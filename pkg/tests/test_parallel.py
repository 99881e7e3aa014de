"""Tests for seeded chain fan-out."""

import numpy as np

from mda_impute.parallel import run_chains, spawn_streams


def _draws(rng, size, offset=0.0):
    return rng.standard_normal(size) + offset


def test_streams_do_not_depend_on_count():
    few = spawn_streams(5, 2)
    many = spawn_streams(5, 6)
    first = np.random.default_rng(few[1]).standard_normal(3)
    second = np.random.default_rng(many[1]).standard_normal(3)
    np.testing.assert_array_equal(first, second)


def test_results_follow_seed_order():
    seeds = spawn_streams(8, 3)
    results = run_chains(_draws, seeds, size=4)
    assert len(results) == 3
    for seed, values in zip(seeds, results, strict=True):
        np.testing.assert_array_equal(values, np.random.default_rng(seed).standard_normal(4))


def test_worker_count_does_not_change_results():
    seeds = spawn_streams(8, 4)
    per_chain = [{"offset": float(k)} for k in range(4)]
    serial = run_chains(_draws, seeds, workers=1, per_chain=per_chain, size=5)
    pooled = run_chains(_draws, spawn_streams(8, 4), workers=2, per_chain=per_chain, size=5)
    for a, b in zip(serial, pooled, strict=True):
        np.testing.assert_array_equal(a, b)
