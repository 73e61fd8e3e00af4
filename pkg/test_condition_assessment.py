"""
Test flashover-test statistics, %U50 conversions, state classification and the
rolling worst-case rule
"""
from dataclasses import replace
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from condition_assessment import (
    State,
    StateAssessment,
    assess_prediction,
    classify_state,
    flashover_statistics,
    percent_from_u50,
    sigma_m_from_percent,
    u50_from_percent,
    worst_case_over_window,
)
from errors import InsufficientDataError, InvalidArgumentError

NOW = datetime(2026, 6, 1, 12, 0, tzinfo=timezone.utc)


# Flashover statistics

def test_statistics_of_identical_tests():
    result = flashover_statistics([100, 100, 100])
    assert result.u_avg == 100.0
    assert result.sigma == 0.0
    assert result.u_avg_low == 100.0
    assert result.sigma_rel == 0.0
    assert result.u50 == 100.0


def test_statistics_worked_example():
    result = flashover_statistics([90, 100, 110])
    assert result.u_avg == pytest.approx(100.0)
    assert result.sigma == pytest.approx(10.0)
    assert result.u_avg_low == pytest.approx(94.28)
    assert result.sigma_rel == pytest.approx(0.164)
    assert result.u50 == pytest.approx(74.179, abs=1e-3)


def test_statistics_with_fleet_average_scatter():
    a = 14.0 / np.sqrt(2.0)  # two tests with sample std 14 kV
    result = flashover_statistics([100 - a, 100 + a])
    assert result.sigma == pytest.approx(14.0)
    assert result.u_avg_low == pytest.approx(91.992)
    assert result.sigma_rel == pytest.approx(0.2296)


def test_statistics_absolute_sigma_as_written():
    result = flashover_statistics([90, 100, 110], sigma_mode='absolute_as_written')
    assert result.sigma_used == pytest.approx(10.0)
    assert result.u50 == pytest.approx(94.28 * (1 - 1.3 * 10.0))
    assert flashover_statistics([100, 100], sigma_mode='absolute_as_written').u50 == 100.0
    with pytest.raises(InvalidArgumentError):
        flashover_statistics([90, 100], sigma_mode='bogus')


def test_statistics_properties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        voltages = rng.uniform(80, 120, size=int(rng.integers(2, 12)))
        result = flashover_statistics(voltages)
        assert result.u_avg_low <= result.u_avg
        assert result.u50 <= result.u_avg
        shuffled = flashover_statistics(rng.permutation(voltages))
        assert shuffled.u50 == pytest.approx(result.u50, rel=1e-12)


def test_statistics_preconditions():
    with pytest.raises(InsufficientDataError):
        flashover_statistics([100])
    with pytest.raises(InvalidArgumentError):
        flashover_statistics([100, 0, 90])


# Conversions

def test_u50_from_percent_examples():
    assert u50_from_percent(63.5, 100) == 63.5
    assert u50_from_percent(63.5, 50) == pytest.approx(127.0)
    assert u50_from_percent(63.5, 95) == pytest.approx(66.842, abs=1e-3)
    with pytest.raises(InvalidArgumentError):
        u50_from_percent(63.5, 0)


def test_percent_round_trip():
    for p in (0.5, 25.0, 63.1, 98.0, 150.0):
        assert percent_from_u50(63.5, u50_from_percent(63.5, p)) == pytest.approx(p, rel=1e-12)


def test_sigma_m_from_percent_examples():
    assert sigma_m_from_percent(0, 127) == 0.0
    assert sigma_m_from_percent(0.97, 127) == pytest.approx(1.232, abs=1e-3)
    assert sigma_m_from_percent(1.22, 100) == pytest.approx(1.22)
    with pytest.raises(InvalidArgumentError):
        sigma_m_from_percent(-0.1, 100)


# Three-state classification

def test_classify_examples():
    operational = classify_state(200, 15, 5, 63.5, 1.6)
    assert operational.sigma_total == 20
    assert operational.state is State.OPERATIONAL
    assert operational.lower_3sigma == pytest.approx(140.0)

    hazardous = classify_state(160, 15, 5, 63.5, 1.6)
    assert hazardous.state is State.HAZARDOUS
    assert hazardous.thresholds == pytest.approx({'lower_3sigma': 100.0, 'lower_1p28sigma': 134.4})

    extreme = classify_state(120, 15, 5, 63.5, 1.6)
    assert extreme.state is State.EXTREMELY_HAZARDOUS
    assert extreme.lower_1p28sigma == pytest.approx(94.4)


def test_classify_boundaries():
    # level exactly on U50 - 3 sigma_t is no longer operational
    assert classify_state(175.0, 20.0, 5.0, 100.0, 1.0).state is State.HAZARDOUS
    # level exactly on U50 - 1.28 sigma_t is extremely hazardous
    assert classify_state(132.0, 20.0, 5.0, 100.0, 1.0).state is State.EXTREMELY_HAZARDOUS


def check_state_rules(draws, seed):
    """Random draws over the valid input space: exactly one state, monotone in U50 and sigma_t"""
    rng = np.random.default_rng(seed)
    for _ in range(draws):
        u50 = rng.uniform(60, 300)
        sigma, sigma_m = rng.uniform(0, 30), rng.uniform(0, 10)
        u_ph, r = rng.uniform(20, 100), rng.uniform(1.0, 2.0)
        a = classify_state(u50, sigma, sigma_m, u_ph, r)
        level = r * u_ph
        conditions = [
            level < a.lower_3sigma,
            a.lower_3sigma <= level < a.lower_1p28sigma,
            level >= a.lower_1p28sigma,
        ]
        assert sum(conditions) == 1
        assert a.rederive() is a.state

        higher_u50 = classify_state(u50 * 1.2, sigma, sigma_m, u_ph, r)
        assert higher_u50.state.severity <= a.state.severity
        wider = classify_state(u50, sigma + 5, sigma_m, u_ph, r)
        assert wider.state.severity >= a.state.severity


def test_classify_is_total_and_monotone():
    check_state_rules(200, seed=1)


@pytest.mark.slow
def test_classify_is_total_and_monotone_over_100k_draws():
    check_state_rules(100_000, seed=2)


def test_classify_preconditions():
    with pytest.raises(InvalidArgumentError):
        classify_state(0, 10, 1, 63.5)
    with pytest.raises(InvalidArgumentError):
        classify_state(100, -1, 1, 63.5)
    with pytest.raises(InvalidArgumentError):
        classify_state(100, 10, 1, 63.5, r=0)


def test_assess_prediction_carries_provenance():
    a = assess_prediction(50.0, 1.0, 63.5, r=1.6, sigma=14.0, timestamp=NOW, string_id='L1-T42-A')
    assert a.u50_hat == pytest.approx(127.0)
    assert a.sigma_m_hat == pytest.approx(1.27)
    assert a.sigma_total == pytest.approx(15.27)
    assert a.state is State.HAZARDOUS
    assert (a.string_id, a.timestamp, a.pct_u50, a.pct_sigma_m) == ('L1-T42-A', NOW, 50.0, 1.0)


def test_assess_prediction_clamps_tiny_percent():
    a = assess_prediction(0.0, 1.0, 63.5)
    assert a.pct_u50 == 0.1
    assert a.u50_hat == pytest.approx(63500.0)
    assert a.state is State.OPERATIONAL


def test_assessment_record_round_trip():
    a = assess_prediction(80.0, 1.2, 63.5, timestamp=NOW, string_id='s1')
    record = a.to_record()
    assert record['state'] == a.state.value
    assert record['sigma_t_kv'] == record['sigma_kv'] + record['sigma_m_kv']
    assert StateAssessment.from_record(record) == a


# Worst case over the trailing window

def stamped(u50, days_ago, string_id='s'):
    return replace(classify_state(u50, 15, 5, 63.5, 1.6), timestamp=NOW - timedelta(days=days_ago),
                   string_id=string_id)


def test_worst_case_all_operational():
    items = [stamped(200, d) for d in (1, 10, 50)]
    assert worst_case_over_window(items, 90).state is State.OPERATIONAL


def test_worst_case_picks_most_severe_in_window():
    items = [stamped(200, 1), stamped(120, 30), stamped(200, 60)]
    worst = worst_case_over_window(items, 90)
    assert worst.state is State.EXTREMELY_HAZARDOUS
    assert worst.timestamp == NOW - timedelta(days=30)


def test_worst_case_drops_old_records():
    items = [stamped(120, 100), stamped(160, 5), stamped(160, 40)]
    worst = worst_case_over_window(items, 90, now=NOW)
    assert worst.state is State.HAZARDOUS
    assert worst.timestamp == NOW - timedelta(days=5)  # ties go to the most recent


def test_worst_case_window_is_inclusive_and_order_free():
    items = [stamped(200, 0), stamped(120, 90), stamped(160, 20)]
    assert worst_case_over_window(items, 90).state is State.EXTREMELY_HAZARDOUS
    assert worst_case_over_window(list(reversed(items)), 90) == worst_case_over_window(items, 90)
    once = worst_case_over_window(items, 90)
    assert worst_case_over_window([once], 90, now=NOW) == once


def test_worst_case_treats_naive_timestamps_as_utc():
    naive = replace(stamped(120, 3), timestamp=(NOW - timedelta(days=3)).replace(tzinfo=None))
    worst = worst_case_over_window([naive, stamped(200, 1)], 90)
    assert worst.state is State.EXTREMELY_HAZARDOUS
    assert worst.timestamp.tzinfo is not None


def test_worst_case_errors():
    with pytest.raises(InsufficientDataError):
        worst_case_over_window([], 90)
    with pytest.raises(InvalidArgumentError):
        worst_case_over_window([classify_state(200, 15, 5, 63.5)], 90)
    with pytest.raises(InvalidArgumentError):
        worst_case_over_window([stamped(200, 1)], 0)
    with pytest.raises(InsufficientDataError):
        worst_case_over_window([stamped(200, 200)], 90, now=NOW)
