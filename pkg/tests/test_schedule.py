"""
Tests du planning de bruit
"""
import numpy as np
import pytest

from core.errors import InvalidRangeError, TimestepOutOfRangeError
from engine.schedule import NoiseSchedule, ScheduleKind, build_schedule


def test_single_step_schedule():
    schedule = build_schedule("linear", T=1, beta_start=0.5, beta_end=0.5)
    assert schedule.beta.tolist() == [0.5]
    assert schedule.alpha.tolist() == [0.5]
    assert schedule.alpha_bar.tolist() == [0.5]
    assert schedule.b.tolist() == [0.25]


def test_two_step_recursion_matches_hand_values():
    schedule = build_schedule("linear", T=2, beta_start=0.2, beta_end=0.4)
    np.testing.assert_allclose(schedule.alpha_bar, [0.8, 0.48])
    np.testing.assert_allclose(schedule.b, [0.1, 0.26])
    assert schedule.flip_probability(2) == pytest.approx(0.26)


@pytest.mark.parametrize("kind", ["linear", "cosine"])
def test_recursion_agrees_with_closed_form(kind):
    schedule = build_schedule(kind, T=1000)
    closed = (1.0 - np.cumprod(1.0 - schedule.beta)) / 2.0
    tolerance = 8 * np.finfo(np.float64).eps * schedule.T
    assert np.max(np.abs(schedule.b - closed)) <= tolerance
    assert schedule.closed_form_gap() <= tolerance


def test_alpha_bar_is_non_increasing_and_bounded():
    schedule = build_schedule("linear", T=1000)
    assert np.all(np.diff(schedule.alpha_bar) <= 0.0)
    assert np.all((schedule.alpha_bar >= 0.0) & (schedule.alpha_bar <= 1.0))


def test_flip_probability_approaches_one_half():
    schedule = build_schedule("linear", T=1000)
    last = schedule.flip_probability(1000)
    assert 0.49 < last < 0.5
    assert schedule.flip_probability(1) == pytest.approx(schedule.beta[0] / 2.0)


def test_noiseless_schedule_has_zero_flip_probability():
    schedule = NoiseSchedule.from_betas(np.zeros(3))
    assert schedule.flip_probability(3) == 0.0
    assert schedule.alpha_bar_at(0) == 1.0


def test_cosine_schedule_is_clamped():
    schedule = build_schedule(ScheduleKind.COSINE, T=100)
    assert schedule.beta.max() <= 0.999
    assert schedule.kind == ScheduleKind.COSINE


def test_tables_are_read_only():
    schedule = build_schedule("linear", T=10)
    with pytest.raises(ValueError):
        schedule.beta[0] = 0.5


@pytest.mark.parametrize("t", [0, 11, -1])
def test_timestep_out_of_range(t):
    schedule = build_schedule("linear", T=10)
    with pytest.raises(TimestepOutOfRangeError):
        schedule.flip_probability(t)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"T": 0},
        {"T": 10, "beta_start": 0.0},
        {"T": 10, "beta_start": 0.5, "beta_end": 1.5},
        {"T": 10, "beta_start": 0.3, "beta_end": 0.1},
    ],
)
def test_invalid_linear_parameters(kwargs):
    with pytest.raises(InvalidRangeError):
        build_schedule("linear", **kwargs)


def test_unknown_kind_is_rejected():
    with pytest.raises(ValueError):
        build_schedule("quadratic", T=10)


def test_rows_follow_csv_column_order():
    schedule = build_schedule("linear", T=2, beta_start=0.2, beta_end=0.4)
    rows = list(schedule.rows())
    assert rows[0] == pytest.approx((1, 0.2, 0.8, 0.8, 0.1))
    assert rows[1][0] == 2
