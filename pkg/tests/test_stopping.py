from __future__ import annotations

import pytest

from gemquad.errors import ConfigError
from gemquad.qametrics import MetricValue
from gemquad.stopping import (
    STOP_MAX_ROUNDS,
    STOP_PATIENCE,
    STOP_VOLUME,
    RoundState,
    StoppingCriteria,
    select_best,
    should_stop,
)


def _history(f1_values, new_batches=None):
    states = []
    for i, f1 in enumerate(f1_values, start=1):
        batch = new_batches[i - 1] if new_batches else {"hi": 500}
        states.append(RoundState(round=i, model=f"m{i}", new_batch=batch,
                                 validation=MetricValue(f1=f1, em=max(0.0, f1 - 0.05))))
    return states


RECORDED_F1_HISTORY = [0.8423, 0.8436, 0.8507, 0.8496, 0.8472]


def test_recorded_history_stops_after_round_5_best_round_3():
    crit = StoppingCriteria(k=2, e=0.005, v=0.01, max_rounds=10)
    history = _history(RECORDED_F1_HISTORY)
    total = 19558 + 15452
    for upto in range(1, 5):
        assert should_stop(history[:upto], total, crit).stop is False
    decision = should_stop(history, total, crit)
    assert decision.stop is True
    assert decision.reason == STOP_PATIENCE
    assert select_best(history) == 3


def test_recorded_round5_batch_does_not_trigger_volume():
    # Hindi round-5 batch: 7395-7069 = 326 of 19558 generated = 1.67% >= 1%
    crit = StoppingCriteria(k=2, e=0.005, v=0.01)
    batch = 7395 - 7069
    assert batch == 326
    history = _history([0.85], new_batches=[{"hi": batch}])
    decision = should_stop(history, 19558, crit)
    assert decision.stop is False


def test_volume_rule_strictly_below_threshold():
    crit = StoppingCriteria(k=2, e=0.005, v=0.01)
    history = _history([0.9], new_batches=[{"hi": 80}])
    decision = should_stop(history, 10_000, crit)
    assert decision.stop is True
    assert decision.reason == STOP_VOLUME
    at_threshold = _history([0.9], new_batches=[{"hi": 100}])
    assert should_stop(at_threshold, 10_000, crit).stop is False


def test_volume_rule_sums_languages():
    crit = StoppingCriteria(k=2, e=0.005, v=0.01)
    history = _history([0.9], new_batches=[{"hi": 60, "es": 60}])
    assert should_stop(history, 10_000, crit).stop is False


def test_patience_requires_consecutive_rounds():
    crit = StoppingCriteria(k=2, e=0.005)
    # non-improving, improving, non-improving: streak resets in the middle
    history = _history([0.80, 0.801, 0.81, 0.808])
    assert should_stop(history, 10_000, crit).stop is False
    history = _history([0.80, 0.801, 0.81, 0.808, 0.809])
    decision = should_stop(history, 10_000, crit)
    assert decision.stop and decision.reason == STOP_PATIENCE


def test_previous_round_baseline_option():
    crit = StoppingCriteria(k=2, e=0.005, improvement_baseline="previous")
    # each round beats the previous by > e even though it never beats the best
    history = _history([0.90, 0.80, 0.81, 0.82, 0.83])
    assert should_stop(history, 10_000, crit).stop is False
    best_crit = StoppingCriteria(k=2, e=0.005, improvement_baseline="best")
    decision = should_stop(history[:3], 10_000, best_crit)
    assert decision.stop and decision.reason == STOP_PATIENCE


def test_max_rounds_cap():
    crit = StoppingCriteria(k=5, e=0.0, v=0.0, max_rounds=3)
    history = _history([0.1, 0.2, 0.3])
    decision = should_stop(history, 10_000, crit)
    assert decision.stop and decision.reason == STOP_MAX_ROUNDS


def test_select_best_tie_breaks_earliest():
    history = _history([0.8, 0.9, 0.9, 0.7])
    assert select_best(history) == 2
    assert select_best(_history([0.5])) == 1


def test_select_best_ignores_round_zero():
    round0 = RoundState(round=0, model="m0", validation=MetricValue(f1=0.99, em=0.9))
    history = [round0] + _history([0.5, 0.6])
    assert select_best(history) == 2


def test_criteria_validation():
    with pytest.raises(ConfigError):
        StoppingCriteria(k=0)
    with pytest.raises(ConfigError):
        StoppingCriteria(e=1.0)
    with pytest.raises(ConfigError):
        StoppingCriteria(v=-0.1)
    with pytest.raises(ConfigError):
        StoppingCriteria(improvement_baseline="median")


def test_round_state_json_roundtrip():
    state = _history([0.8423])[0]
    assert RoundState.from_json(state.to_json()) == state


def test_volume_per_language_variant():
    crit = StoppingCriteria(k=5, e=0.005, v=0.01, volume_per_language=True)
    totals = {"hi": 10_000, "es": 10_000}
    # hi dried up but es still produces: keep going
    history = _history([0.9], new_batches=[{"hi": 2, "es": 400}])
    assert should_stop(history, 20_000, crit, totals_by_lang=totals).stop is False
    # both below their own thresholds: stop
    history = _history([0.9], new_batches=[{"hi": 2, "es": 50}])
    decision = should_stop(history, 20_000, crit, totals_by_lang=totals)
    assert decision.stop and decision.reason == STOP_VOLUME
    # the pooled rule would have stopped the first case too
    pooled = StoppingCriteria(k=5, e=0.005, v=0.05)
    assert should_stop(_history([0.9], new_batches=[{"hi": 2, "es": 400}]),
                       20_000, pooled).stop is True
