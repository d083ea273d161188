"""Exact pass@k and training-curve extraction."""

import itertools

import numpy as np
import pytest

from heal.analysis import PassAtKInput, curve_rows, curve_table, pass_at_k, pass_at_k_per_prompt
from heal.errors import ValidationError
from heal.rollouts import Trajectory
from heal.trace_io import MetricsRow, write_metrics


def test_pass_at_k_hand_values():
    assert pass_at_k(PassAtKInput(n=1, c=1, k=1)) == 1.0
    assert pass_at_k(PassAtKInput(n=2, c=1, k=1)) == 0.5
    assert pass_at_k(PassAtKInput(n=4, c=2, k=2)) == 5 / 6
    assert pass_at_k(PassAtKInput(n=10, c=0, k=3)) == 0.0
    assert pass_at_k(PassAtKInput(n=10, c=10, k=1)) == 1.0
    # Any subset of size > n - c must contain a correct sample.
    assert pass_at_k(PassAtKInput(n=6, c=2, k=5)) == 1.0


def test_pass_at_k_matches_subset_enumeration():
    for n in range(1, 9):
        for c in range(n + 1):
            for k in range(1, n + 1):
                hits = 0
                total = 0
                for subset in itertools.combinations(range(n), k):
                    total += 1
                    hits += any(i < c for i in subset)
                assert pass_at_k(PassAtKInput(n=n, c=c, k=k)) == hits / total


def test_pass_at_k_monotone():
    for c in range(0, 13):
        values = [pass_at_k(PassAtKInput(n=12, c=c, k=k)) for k in range(1, 13)]
        assert all(b >= a for a, b in zip(values, values[1:]))
    for k in (1, 4, 12):
        values = [pass_at_k(PassAtKInput(n=12, c=c, k=k)) for c in range(13)]
        assert all(b >= a for a, b in zip(values, values[1:]))


def test_pass_at_k_input_validation():
    with pytest.raises(ValidationError):
        PassAtKInput(n=0, c=0, k=1)
    with pytest.raises(ValidationError):
        PassAtKInput(n=4, c=5, k=1)
    with pytest.raises(ValidationError):
        PassAtKInput(n=4, c=2, k=0)
    with pytest.raises(ValidationError):
        PassAtKInput(n=4, c=2, k=5)
    with pytest.raises(ValidationError):
        PassAtKInput(n=4.0, c=2, k=1)
    with pytest.raises(ValidationError):
        PassAtKInput(n=4, c=True, k=1)


def _traj(prompt_id, index, correct):
    return Trajectory(
        prompt_id=prompt_id, domain="target", step_entropies=np.array([1.0]),
        trajectory_index=index, correct=correct,
    )


def test_per_prompt_grouping_and_order():
    trajectories = [
        _traj("b", 0, 1), _traj("a", 0, 0), _traj("b", 1, 0),
        _traj("a", 1, 1), _traj("b", 2, 1),
    ]
    rows = pass_at_k_per_prompt(trajectories, [1, 2])
    assert [r[0] for r in rows] == ["b", "a"]
    b = rows[0]
    assert (b[1], b[2]) == (3, 2)
    assert b[3] == [pass_at_k(PassAtKInput(3, 2, 1)), pass_at_k(PassAtKInput(3, 2, 2))]
    a = rows[1]
    assert (a[1], a[2]) == (2, 1)


def test_per_prompt_validation():
    with pytest.raises(ValidationError):
        pass_at_k_per_prompt([], [1])
    with pytest.raises(ValidationError):
        pass_at_k_per_prompt([_traj("a", 0, 1)], [])
    with pytest.raises(ValidationError, match="verdict"):
        pass_at_k_per_prompt([_traj("a", 0, None)], [1])
    with pytest.raises(ValidationError):
        pass_at_k_per_prompt([_traj("a", 0, 1)], [2])


def _write_run(tmp_path, name, rows):
    run = tmp_path / name
    run.mkdir()
    write_metrics(rows, run / "metrics.jsonl")
    return run


def test_curve_rows_round_trip(tmp_path):
    rows = [
        MetricsRow(step=0, reward_rate=0.0, eda_rate=0.0, mean_entropy_target=2.0),
        MetricsRow(step=5, reward_rate=0.5, eda_rate=0.25, mean_entropy_target=1.0),
    ]
    run = _write_run(tmp_path, "run-a", rows)
    assert curve_rows(run) == rows
    with pytest.raises(FileNotFoundError):
        curve_rows(tmp_path / "missing")


def test_curve_table_single_run(tmp_path):
    rows = [MetricsRow(step=0, reward_rate=0.5, eda_rate=0.0, mean_entropy_target=2.0)]
    run = _write_run(tmp_path, "run-a", rows)
    header, table = curve_table([run])
    assert header == ["step", "mean_entropy_target", "mean_entropy_general",
                      "reward_rate", "eda_rate"]
    assert table == [[0, 2.0, None, 0.5, 0.0]]


def test_curve_table_multi_run_labels(tmp_path):
    a = _write_run(tmp_path, "run-a",
                   [MetricsRow(step=0, reward_rate=0.1, eda_rate=0.0)])
    b = _write_run(tmp_path, "run-b",
                   [MetricsRow(step=0, reward_rate=0.9, eda_rate=0.5)])
    header, table = curve_table([a, b])
    assert header[0] == "run"
    assert [row[0] for row in table] == ["run-a", "run-b"]
    header2, table2 = curve_table([a, b], ["base", "ours"])
    assert [row[0] for row in table2] == ["base", "ours"]
    with pytest.raises(ValidationError):
        curve_table([a, b], ["only-one"])
    with pytest.raises(ValidationError):
        curve_table([])
