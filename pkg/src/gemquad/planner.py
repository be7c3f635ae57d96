"""Sequential train-plan construction under a global update-step budget.

Silver stages come first in the configured language order, gold last, all with
one uniform epoch count E = max(1, round(S * batch / total records)) so the
realized optimizer steps land near the budget S. The budget keeps training
comparable across modes and rounds regardless of how much silver data a round
holds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import PlanError

logger = logging.getLogger(__name__)

GOLD_STAGE = "gold"
BUDGET_TOLERANCE = 0.10


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 2e-5
    batch_size: int = 8
    optimizer: str = "adamw"
    scheduler: str = "linear"

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "scheduler": self.scheduler,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Hyperparams":
        return cls(
            learning_rate=float(obj.get("learning_rate", 2e-5)),
            batch_size=int(obj.get("batch_size", 8)),
            optimizer=obj.get("optimizer", "adamw"),
            scheduler=obj.get("scheduler", "linear"),
        )


@dataclass(frozen=True)
class TrainStage:
    name: str
    records_uri: str
    size: int
    epochs: int

    def steps(self, batch_size: int) -> int:
        return self.epochs * math.ceil(self.size / batch_size)

    def to_wire(self) -> dict:
        return {"name": self.name, "records_uri": self.records_uri, "epochs": self.epochs}


@dataclass(frozen=True)
class TrainPlan:
    stages: tuple[TrainStage, ...]
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    step_budget: int = 0

    def __post_init__(self):
        if not self.stages:
            raise PlanError("a train plan needs at least one stage")
        names = [s.name for s in self.stages]
        if GOLD_STAGE in names and names.index(GOLD_STAGE) != len(names) - 1:
            raise PlanError(f"the gold stage must come last, got order {names}")

    @property
    def realized_steps(self) -> int:
        return sum(s.steps(self.hyperparams.batch_size) for s in self.stages)

    def to_json(self) -> dict:
        return {
            "stages": [{"name": s.name, "records_uri": s.records_uri,
                        "size": s.size, "epochs": s.epochs} for s in self.stages],
            "hyperparams": self.hyperparams.to_json(),
            "step_budget": self.step_budget,
            "realized_steps": self.realized_steps,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainPlan":
        return cls(
            stages=tuple(TrainStage(name=s["name"], records_uri=s["records_uri"],
                                    size=int(s["size"]), epochs=int(s["epochs"]))
                         for s in obj["stages"]),
            hyperparams=Hyperparams.from_json(obj.get("hyperparams", {})),
            step_budget=int(obj.get("step_budget", 0)),
        )


def default_step_budget(total_records: int, batch_size: int, epochs: int = 3) -> int:
    """Budget equal to an `epochs`-pass over the full pool in one stage."""
    return epochs * math.ceil(total_records / batch_size)


def uniform_epochs(step_budget: int, total_records: int, batch_size: int) -> int:
    """E = max(1, round(S * batch / total)), round half up; clamping to 1 is
    logged because it can push realized steps past the budget tolerance."""
    if total_records <= 0:
        raise PlanError("cannot plan training over zero records")
    if step_budget <= 0:
        raise PlanError(f"step budget {step_budget} yields zero steps")
    exact = step_budget * batch_size / total_records
    epochs = int(math.floor(exact + 0.5))
    if epochs < 1:
        logger.warning("step budget %d too small for %d records; clamping epochs to 1",
                       step_budget, total_records)
        return 1
    return epochs


def plan_training(stage_sizes: list[tuple[str, str, int]], step_budget: int,
                  hyperparams: Hyperparams | None = None) -> TrainPlan:
    """Build the plan from ordered (name, records_uri, size) stages.

    Callers put silver stages in the configured language order and the gold
    stage last; empty stages should already be dropped.
    """
    hp = hyperparams or Hyperparams()
    total = sum(size for _, _, size in stage_sizes)
    epochs = uniform_epochs(step_budget, total, hp.batch_size)
    plan = TrainPlan(
        stages=tuple(TrainStage(name=name, records_uri=uri, size=size, epochs=epochs)
                     for name, uri, size in stage_sizes),
        hyperparams=hp,
        step_budget=step_budget,
    )
    drift = abs(plan.realized_steps - step_budget) / step_budget
    if drift > BUDGET_TOLERANCE:
        logger.warning("realized steps %d drift %.1f%% from budget %d",
                       plan.realized_steps, 100 * drift, step_budget)
    return plan
