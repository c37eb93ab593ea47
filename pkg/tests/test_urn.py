import numpy as np
import pytest
from scipy import stats

from btree.models import CompositionVector
from btree.rules import make_rule, btree_start
from spectral.roots import compute_spectrum
from urn.csv_handler import write_frame, load_frame, trajectories_frame
from urn.embedding import embed_continuous, estimate_xi, sample_xi, embed_batch
from urn.models import UrnState, Trajectory
from urn.simulator import (
    step, run_trajectory, run_batch, run_parallel, record_points, trajectory_rng,
)
from utils.errors import InvalidInputError


def test_first_step_is_forced():
    rule = make_rule(2)
    state = step(UrnState(rule, CompositionVector((2, 0))), trajectory_rng(1))
    assert state.counts == (0, 3)
    assert state.n == 1
    assert state.gap_total == 3


def test_step_law_from_2_3():
    rule = make_rule(2)
    rng = trajectory_rng(5)
    start = UrnState(rule, CompositionVector((2, 3)))
    draws = 10_000
    hits = sum(step(start, rng).counts == (0, 6) for _ in range(draws))
    sd = np.sqrt(draws * 0.4 * 0.6)
    assert abs(hits - 0.4 * draws) < 3 * sd


def test_deterministic_prefix():
    rule = make_rule(2)
    trajectory = run_trajectory(rule, CompositionVector((2, 0)), 3, seed=7)
    assert trajectory.compositions.tolist() == [[2, 0], [0, 3], [4, 0], [2, 3]]
    assert trajectory.final.counts == (2, 3)


def test_zero_steps():
    rule = make_rule(4)
    trajectory = run_trajectory(rule, btree_start(rule), 0, seed=1)
    assert trajectory.records() == [(0, btree_start(rule))]


def test_non_tenable_start():
    with pytest.raises(InvalidInputError):
        run_trajectory(make_rule(2), CompositionVector((1, 0)), 10, seed=1)


def test_gap_total_grows_by_one():
    rule = make_rule(6, "prudent")
    trajectory = run_trajectory(rule, btree_start(rule), 500, seed=3)
    totals = trajectory.compositions.sum(axis=1)
    np.testing.assert_array_equal(totals, trajectory.k0 + trajectory.steps)


def test_four_step_law():
    rule = make_rule(2)
    runs = run_batch(rule, CompositionVector((2, 0)), 4, seed=17, count=4000)
    hits = sum(t.compositions[-1].tolist() == [0, 6] for t in runs)
    others = sum(t.compositions[-1].tolist() == [6, 0] for t in runs)
    assert hits + others == 4000
    sd = np.sqrt(4000 * 0.4 * 0.6)
    assert abs(hits - 1600) < 3 * sd


def test_batch_matches_single_runs():
    rule = make_rule(4)
    batch = run_batch(rule, btree_start(rule), 300, seed=9, count=4, stride=7)
    for i, trajectory in enumerate(batch):
        single = run_trajectory(rule, btree_start(rule), 300, seed=9, stride=7, index=i)
        np.testing.assert_array_equal(trajectory.compositions, single.compositions)
        assert trajectory.index == i


def test_parallel_does_not_depend_on_workers():
    rule = make_rule(3)
    serial = run_parallel(rule, btree_start(rule), 200, 4, count=3, workers=1)
    pooled = run_parallel(rule, btree_start(rule), 200, 4, count=3, workers=2)
    for a, b in zip(serial, pooled):
        np.testing.assert_array_equal(a.compositions, b.compositions)


def test_record_points():
    assert record_points(10, stride=4).tolist() == [0, 4, 8, 10]
    points = record_points(100_000, geometric=True)
    assert points[0] == 0 and points[-1] == 100_000
    assert np.all(np.diff(points) > 0)
    assert 100 < len(points) < 300


def test_drift_towards_v1():
    rule = make_rule(10)
    v1 = compute_spectrum(10).v1
    runs = run_batch(rule, btree_start(rule), 20_000, seed=2, count=5, stride=10_000)
    errors = [np.max(np.abs(t.compositions[-1] / 20_000 - v1)) for t in runs]
    assert np.median(errors) < 0.05


@pytest.mark.slow
def test_drift_shrinks_with_n():
    rule = make_rule(10)
    v1 = compute_spectrum(10).v1
    runs = run_batch(rule, btree_start(rule), 100_000, seed=2, count=20, stride=10_000)
    at_1e4 = [np.max(np.abs(t.compositions[1] / 10_000 - v1)) for t in runs]
    at_1e5 = [np.max(np.abs(t.compositions[-1] / 100_000 - v1)) for t in runs]
    assert np.median(at_1e5) < 0.03
    assert np.median(at_1e5) < np.median(at_1e4)


def test_frames_and_csv(tmp_path):
    rule = make_rule(2)
    trajectory = run_trajectory(rule, btree_start(rule), 3, seed=7)
    df = trajectory.to_frame()
    assert list(df.columns) == ["n", "g1", "g2"]
    assert trajectory.to_frame("fringe").iloc[-1].tolist() == [3, 1, 1]

    path = write_frame(df, str(tmp_path / "run.csv"), {"seed": 7})
    loaded, config = load_frame(path)
    assert config == {"seed": 7}
    assert loaded.values.tolist() == df.values.tolist()
    with pytest.raises(ValueError):
        load_frame(str(tmp_path / "run.xlsx"))

    stacked = trajectories_frame([trajectory, trajectory])
    assert list(stacked.columns[:2]) == ["run", "n"]
    assert len(stacked) == 8


def test_xi_estimate_with_log_clock():
    rule = make_rule(2)
    trajectory = Trajectory(rule, btree_start(rule), 0, 0, 1, np.array([0, 5000]),
                            np.array([[2, 0], [2, 0]]))
    with pytest.raises(InvalidInputError):
        estimate_xi(trajectory)
    timed = trajectory.with_jump_times([0.0, np.log(5000)])
    assert estimate_xi(timed) == pytest.approx(1.0, abs=1e-12)


def test_embedding_is_seeded_and_increasing():
    rule = make_rule(3)
    trajectory = run_trajectory(rule, btree_start(rule), 1000, seed=8, stride=100)
    first = embed_continuous(trajectory, seed=8)
    again = embed_batch([trajectory], seed=8)[0]
    np.testing.assert_array_equal(first.jump_times, again.jump_times)
    assert first.jump_times[0] == 0.0
    assert np.all(np.diff(first.jump_times) > 0)
    assert "tau" in first.to_frame().columns


def test_xi_is_gamma_distributed():
    samples = sample_xi(2, 2000, seed=3, count=2000)
    se = np.sqrt(2 / samples.size)
    assert abs(samples.mean() - 2) < 4 * se
    assert samples.var() == pytest.approx(2, rel=0.15)
    assert stats.kstest(samples, "gamma", args=(2,)).pvalue > 0.01


def _assert_divisible(rule, n_steps, seed):
    moduli = np.array(rule.divisibility_moduli())
    trajectory = run_trajectory(rule, btree_start(rule), n_steps, seed=seed)
    assert trajectory.steps.size == n_steps + 1
    assert not (trajectory.compositions % moduli).any()


@pytest.mark.parametrize("m", range(2, 21))
def test_gap_counts_stay_divisible(m):
    rule = make_rule(m)
    assert rule.divisibility_moduli() == tuple(m + k - 1 for k in range(1, m + 1))
    _assert_divisible(rule, 2000, seed=m)


@pytest.mark.slow
@pytest.mark.parametrize("m", range(2, 21))
def test_gap_counts_stay_divisible_long(m):
    _assert_divisible(make_rule(m), 100_000, seed=m)


@pytest.mark.slow
def test_xi_at_desk_scale():
    k0 = btree_start(make_rule(2)).total
    runs = sample_xi(k0, 100_000, seed=31, count=500)
    assert abs(runs.mean() - k0) < 3 * runs.std() / np.sqrt(runs.size)
    samples = sample_xi(k0, 100_000, seed=32, count=2000)
    assert stats.kstest(samples, "gamma", args=(k0,)).pvalue > 0.01
