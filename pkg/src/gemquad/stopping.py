"""Round bookkeeping and the k/e/v stopping rule.

A round counts as improving when its validation F1 exceeds the comparison
baseline (best-so-far by default, previous round behind config) by more than
e. The loop stops after k consecutive non-improving rounds, when a round's
total new batch falls below the fraction v of all generated synthetic data,
or at the hard round cap. All F1 values live on the [0,1] scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ConfigError
from .qametrics import MetricReport, MetricValue

BASELINE_BEST = "best"
BASELINE_PREVIOUS = "previous"

STOP_PATIENCE = "patience"
STOP_VOLUME = "volume"
STOP_MAX_ROUNDS = "max_rounds"


@dataclass(frozen=True)
class StoppingCriteria:
    k: int = 2
    e: float = 0.005
    v: float = 0.01
    max_rounds: int = 10
    improvement_baseline: str = BASELINE_BEST
    volume_per_language: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("patience k must be >= 1")
        if not 0.0 <= self.e < 1.0:
            raise ConfigError("improvement threshold e must be in [0, 1)")
        if not 0.0 <= self.v < 1.0:
            raise ConfigError("volume threshold v must be in [0, 1)")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if self.improvement_baseline not in (BASELINE_BEST, BASELINE_PREVIOUS):
            raise ConfigError(f"unknown improvement baseline {self.improvement_baseline!r}")

    def to_json(self) -> dict:
        return {"k": self.k, "e": self.e, "v": self.v, "max_rounds": self.max_rounds,
                "improvement_baseline": self.improvement_baseline,
                "volume_per_language": self.volume_per_language}


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str | None = None


@dataclass(frozen=True)
class RoundState:
    """Journal entry for one round. Round 0 is the gold-only baseline that
    bootstraps the weak labeler; filter rounds start at 1."""

    round: int
    model: str
    validation: MetricValue
    silver_counts: dict[str, int] = field(default_factory=dict)
    new_batch: dict[str, int] = field(default_factory=dict)
    steps_run: int = 0
    eval_reports: dict[str, MetricReport] = field(default_factory=dict)
    stop: bool = False
    stop_reason: str | None = None
    best: bool = False

    def new_total(self) -> int:
        return sum(self.new_batch.values())

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "model": self.model,
            "validation": self.validation.to_json(),
            "silver_counts": {k: self.silver_counts[k] for k in sorted(self.silver_counts)},
            "new_batch": {k: self.new_batch[k] for k in sorted(self.new_batch)},
            "steps_run": self.steps_run,
            "eval_reports": {k: self.eval_reports[k].to_json()
                             for k in sorted(self.eval_reports)},
            "stop": self.stop,
            "stop_reason": self.stop_reason,
            "best": self.best,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "RoundState":
        return cls(
            round=int(obj["round"]),
            model=obj["model"],
            validation=MetricValue.from_json(obj["validation"]),
            silver_counts={k: int(v) for k, v in obj.get("silver_counts", {}).items()},
            new_batch={k: int(v) for k, v in obj.get("new_batch", {}).items()},
            steps_run=int(obj.get("steps_run", 0)),
            eval_reports={k: MetricReport.from_json(v)
                          for k, v in obj.get("eval_reports", {}).items()},
            stop=bool(obj.get("stop", False)),
            stop_reason=obj.get("stop_reason"),
            best=bool(obj.get("best", False)),
        )


def _patience_streak(f1_history: Sequence[float], crit: StoppingCriteria) -> int:
    """Consecutive non-improving rounds ending at the last entry."""
    best: float | None = None
    previous: float | None = None
    streak = 0
    for f1 in f1_history:
        baseline = best if crit.improvement_baseline == BASELINE_BEST else previous
        improving = baseline is None or f1 > baseline + crit.e
        streak = 0 if improving else streak + 1
        best = f1 if best is None else max(best, f1)
        previous = f1
    return streak


def _volume_triggered(last: RoundState, total_synthetic: int, crit: StoppingCriteria,
                      totals_by_lang: Mapping[str, int] | None) -> bool:
    if crit.volume_per_language and totals_by_lang:
        # stop only when every producing language has dried up
        return all(last.new_batch.get(lang, 0) < crit.v * total
                   for lang, total in totals_by_lang.items() if total > 0)
    return total_synthetic > 0 and last.new_total() < crit.v * total_synthetic


def should_stop(history: Sequence[RoundState], total_synthetic: int,
                crit: StoppingCriteria,
                totals_by_lang: Mapping[str, int] | None = None) -> StopDecision:
    """Decide after a completed filter round. `history` holds filter rounds
    1..r in order; `total_synthetic` is the count of all generated synthetic
    records (pre-validation), the denominator of the volume rule (per-language
    denominators come from `totals_by_lang` when that variant is enabled)."""
    if not history:
        raise ValueError("should_stop needs at least one completed round")
    if _patience_streak([st.validation.f1 for st in history], crit) >= crit.k:
        return StopDecision(stop=True, reason=STOP_PATIENCE)
    last = history[-1]
    if _volume_triggered(last, total_synthetic, crit, totals_by_lang):
        return StopDecision(stop=True, reason=STOP_VOLUME)
    if last.round >= crit.max_rounds:
        return StopDecision(stop=True, reason=STOP_MAX_ROUNDS)
    return StopDecision(stop=False)


def select_best(history: Sequence[RoundState]) -> int:
    """Filter round with the highest validation F1, earliest on ties. Round 0
    is the labeler bootstrap and not eligible."""
    candidates = [st for st in history if st.round >= 1]
    if not candidates:
        raise ValueError("select_best needs at least one filter round")
    best = candidates[0]
    for st in candidates[1:]:
        if st.validation.f1 > best.validation.f1:
            best = st
    return best.round
