import logging
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from btree.models import CompositionVector, FRINGE
from btree.rules import check_tenable
from urn.models import UrnState, Trajectory
from utils.errors import InvalidInputError, InvalidParameterError, InvariantViolation

CHUNK_STEPS = 1 << 16
BATCH_CELLS = 1 << 22


def trajectory_rng(seed, index=0):
    """Independent stream of trajectory ``index`` under the master ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def gap_ranks(rng, k0, start, count):
    """
    Uniform gap indices for steps start..start+count-1.

    Step t draws rank_t = floor(U_t * K_t) with K_t = k0 + t gaps; the tree
    and urn engines consume this same stream.
    """
    totals = k0 + start + np.arange(count, dtype=np.int64)
    ranks = np.floor(rng.random(count) * totals).astype(np.int64)
    return np.minimum(ranks, totals - 1)


def record_points(n_steps, stride=1, geometric=False, per_decade=50):
    """
    Steps at which a trajectory is recorded; 0 and n_steps are always included.

    Args:
        stride: spacing of the arithmetic schedule
        geometric: log-spaced schedule with ``per_decade`` points per decade
    """
    if n_steps < 0:
        raise InvalidParameterError(f"Number of steps must be >= 0, got {n_steps}")
    if stride < 1:
        raise InvalidParameterError(f"Stride must be >= 1, got {stride}")
    if geometric and n_steps >= 1:
        count = int(per_decade * math.log10(n_steps)) + 1
        points = np.floor(np.logspace(0, math.log10(n_steps), count)).astype(np.int64)
    else:
        points = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    return np.unique(np.concatenate([[0], points, [n_steps]]).astype(np.int64))


def _color(cumulative, rank):
    """First type whose cumulative gap count exceeds the rank."""
    return int(np.searchsorted(cumulative, rank, side="right"))


def step(state, rng):
    """
    One draw of the gap urn: type k with probability G^(k)/K_n, then G += row k.
    """
    if state.gap_total < 1:
        raise InvalidInputError("Urn is empty")
    rank = int(gap_ranks(rng, state.gap_total, 0, 1)[0])
    counts = np.array(state.counts, dtype=np.int64)
    k = _color(np.cumsum(counts), rank)

    counts += state.rule.matrix()[k]
    if counts[k] < 0:
        raise InvariantViolation(f"Type {k + 1} count went negative at step {state.n + 1}")
    return UrnState(
        rule=state.rule,
        composition=CompositionVector(tuple(counts)),
        n=state.n + 1,
        gap_total=state.gap_total + 1,
    )


def _checked_start(rule, initial):
    if initial.kind == FRINGE:
        initial = initial.to_gaps(rule)
    if not check_tenable(rule, initial):
        raise InvalidInputError(
            f"Initial composition {initial.counts} is not tenable for m={rule.m} {rule.algorithm}")
    return initial


def run_trajectory(rule, initial, n_steps, seed, stride=1, index=0, geometric=False):
    """
    Run the gap urn for ``n_steps`` draws from ``initial``.

    Args:
        rule: ReplacementRule
        initial: tenable CompositionVector (fringe or gap coordinates)
        n_steps: number of draws
        seed: master seed; the stream is (seed, index)
        stride: record every ``stride`` steps (plus the final one)
        geometric: record on a log-spaced schedule instead

    Returns:
        Trajectory in gap coordinates
    """
    initial = _checked_start(rule, initial)
    points = record_points(n_steps, stride, geometric)
    rng = trajectory_rng(seed, index)
    rows = rule.matrix()
    cumulative_rows = np.cumsum(rows, axis=1)

    counts = initial.as_array()
    cumulative = np.cumsum(counts)
    records = [counts.copy()]
    next_point = 1
    t = 0
    while t < n_steps:
        size = min(CHUNK_STEPS, n_steps - t)
        for rank in gap_ranks(rng, initial.total, t, size).tolist():
            k = _color(cumulative, rank)
            counts += rows[k]
            cumulative += cumulative_rows[k]
            if counts[k] < 0:
                raise InvariantViolation(f"Type {k + 1} count went negative at step {t + 1}")
            t += 1
            if next_point < len(points) and points[next_point] == t:
                records.append(counts.copy())
                next_point += 1
        logging.debug(f"Urn m={rule.m}: {t}/{n_steps} steps")

    return Trajectory(rule, initial, seed, index, stride, points, np.array(records, dtype=np.int64))


def run_batch(rule, initial, n_steps, seed, count, stride=1, geometric=False, start_index=0):
    """
    Run ``count`` trajectories side by side, vectorized over runs.

    Trajectory i uses stream (seed, start_index + i), so it equals
    ``run_trajectory(rule, initial, n_steps, seed, stride, index=start_index + i)``.
    """
    if count < 1:
        raise InvalidParameterError(f"Batch needs at least one run, got {count}")
    initial = _checked_start(rule, initial)
    points = record_points(n_steps, stride, geometric)
    rngs = [trajectory_rng(seed, start_index + i) for i in range(count)]
    rows = rule.matrix()
    cumulative_rows = np.cumsum(rows, axis=1)
    runs = np.arange(count)

    counts = np.tile(initial.as_array(), (count, 1))
    cumulative = np.cumsum(counts, axis=1)
    records = [counts.copy()]
    next_point = 1
    chunk = max(1, min(CHUNK_STEPS, BATCH_CELLS // max(count, 1)))
    t = 0
    while t < n_steps:
        size = min(chunk, n_steps - t)
        ranks = np.stack([gap_ranks(rng, initial.total, t, size) for rng in rngs])
        for j in range(size):
            colors = (cumulative <= ranks[:, j, None]).sum(axis=1)
            counts += rows[colors]
            cumulative += cumulative_rows[colors]
            if (counts[runs, colors] < 0).any():
                raise InvariantViolation(f"Negative count in batch at step {t + 1}")
            t += 1
            if next_point < len(points) and points[next_point] == t:
                records.append(counts.copy())
                next_point += 1
        logging.debug(f"Urn batch m={rule.m}: {t}/{n_steps} steps x {count} runs")

    stacked = np.stack(records, axis=1)
    return [
        Trajectory(rule, initial, seed, start_index + i, stride, points, stacked[i])
        for i in range(count)
    ]


def run_parallel(rule, initial, n_steps, seed, count, stride=1, geometric=False, workers=1):
    """``run_batch`` split into blocks over a process pool; the result does not depend on ``workers``."""
    if workers <= 1 or count < 2:
        return run_batch(rule, initial, n_steps, seed, count, stride, geometric)

    bounds = np.linspace(0, count, min(workers, count) + 1).astype(int)
    trajectories = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [
            ex.submit(run_batch, rule, initial, n_steps, seed, int(hi - lo), stride, geometric, int(lo))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        for future in futures:
            trajectories.extend(future.result())
    logging.info(f"Ran {count} trajectories of {n_steps} steps on {workers} workers")
    return trajectories
