"""Scripted mock backend: a pure function of (script, request, referenced files).

Models the improving weak labeler: each record carries a difficulty d, each
trained round r a skill s_r (non-decreasing), and predict() answers a record
with its scripted teacher answer iff d <= s_r, otherwise with a deterministic
wrong span (the context's first three tokens). train() names its checkpoints
mock-r<round>, inferring the round from the round_<n>/ component of the stage
record URIs so that re-running a round reproduces the identical result.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backend import PredictAnswer, PredictItem, TrainResult, verify_predict_contract
from .errors import BackendError, ConfigError, PlanError
from .promptgen import PromptTemplate, SamplingConfig

_ROUND_RE = re.compile(r"round_(\d+)")


@dataclass(frozen=True)
class MockScript:
    generation: dict[str, str] = field(default_factory=dict)   # context_id -> continuation
    contexts: dict[str, str] = field(default_factory=dict)     # context_id -> context text
    skills: tuple[float, ...] = (0.5,)                         # round -> labeler skill
    difficulty: dict[str, float] = field(default_factory=dict)  # record id -> d in [0,1]
    answers: dict[str, str] = field(default_factory=dict)      # record id -> teacher answer
    validation: dict[int, tuple[float, float]] = field(default_factory=dict)  # round -> (f1, em)
    default_difficulty: float = 1.0

    def __post_init__(self):
        if any(b < a for a, b in zip(self.skills, self.skills[1:])):
            raise ConfigError("mock skill schedule must be non-decreasing")
        bad = {k: v for k, v in self.difficulty.items() if not 0.0 <= v <= 1.0}
        if bad:
            raise ConfigError(f"mock difficulties outside [0,1]: {list(bad)[:5]}")

    def skill(self, round_no: int) -> float:
        return self.skills[min(round_no, len(self.skills) - 1)]

    def to_json(self) -> dict:
        return {
            "generation": self.generation,
            "contexts": self.contexts,
            "skills": list(self.skills),
            "difficulty": self.difficulty,
            "answers": self.answers,
            "validation": {str(r): list(v) for r, v in self.validation.items()},
            "default_difficulty": self.default_difficulty,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MockScript":
        return cls(
            generation=dict(obj.get("generation", {})),
            contexts=dict(obj.get("contexts", {})),
            skills=tuple(obj.get("skills", [0.5])),
            difficulty={k: float(v) for k, v in obj.get("difficulty", {}).items()},
            answers=dict(obj.get("answers", {})),
            validation={int(r): (float(v[0]), float(v[1]))
                        for r, v in obj.get("validation", {}).items()},
            default_difficulty=float(obj.get("default_difficulty", 1.0)),
        )

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False,
                                         indent=1), encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _first_tokens_span(context: str, n_tokens: int = 3) -> tuple[str, int]:
    """Literal substring covering the first n whitespace tokens, so the
    predict contract (answer == context[start:start+len]) holds."""
    start = None
    end = 0
    tokens_seen = 0
    in_token = False
    for i, ch in enumerate(context):
        if ch.isspace():
            if in_token:
                tokens_seen += 1
                in_token = False
                if tokens_seen >= n_tokens:
                    break
        else:
            if start is None:
                start = i
            in_token = True
            end = i + 1
    if start is None:
        return context, 0
    return context[start:end], start


class MockBackend:
    """Reentrant, deterministic; implements the Backend protocol in-process."""

    def __init__(self, script: MockScript, template: PromptTemplate | None = None):
        self.script = script
        self.template = template or PromptTemplate()
        self._by_context_text = {text: cid for cid, text in script.contexts.items()}

    # -- generate --------------------------------------------------------

    def _test_context(self, prompt: str) -> str:
        tmpl = self.template
        c_pos = prompt.rfind(tmpl.label_context)
        if c_pos < 0:
            raise BackendError(BackendError.PROTOCOL, "prompt has no context label")
        tail = prompt[c_pos + len(tmpl.label_context):]
        q_pos = tail.rfind(tmpl.label_question)
        if q_pos >= 0:
            tail = tail[:q_pos]
        return tail.strip()

    def generate(self, prompt: str, sampling: SamplingConfig) -> str:
        text = self._test_context(prompt)
        cid = self._by_context_text.get(text)
        if cid is None or cid not in self.script.generation:
            raise BackendError(BackendError.PROTOCOL,
                               f"no scripted continuation for context {text[:40]!r}")
        continuation = self.script.generation[cid]
        tokens = continuation.split(" ")
        if len(tokens) > sampling.max_length:
            continuation = " ".join(tokens[:sampling.max_length])
        return continuation

    # -- predict ---------------------------------------------------------

    def _round_of_model(self, model: str) -> int:
        match = re.fullmatch(r"mock-r(\d+)", model)
        if not match:
            raise BackendError(BackendError.PROTOCOL, f"unknown mock model {model!r}")
        return int(match.group(1))

    def predict(self, model: str, items: Sequence[PredictItem]) -> list[PredictAnswer]:
        if not items:
            raise ValueError("predict requires at least one item")
        skill = self.script.skill(self._round_of_model(model))
        answers = []
        for rid, context, _question in items:
            d = self.script.difficulty.get(rid, self.script.default_difficulty)
            scripted = self.script.answers.get(rid)
            if d <= skill and scripted is not None and scripted in context:
                answers.append(PredictAnswer(id=rid, text=scripted, start=context.find(scripted)))
            else:
                text, start = _first_tokens_span(context)
                answers.append(PredictAnswer(id=rid, text=text, start=start))
        return verify_predict_contract(items, answers)

    # -- train -----------------------------------------------------------

    def train(self, base: str, stages: Sequence[dict], hyperparams: dict,
              validation_uri: str) -> TrainResult:
        if not stages:
            raise PlanError("train called with an empty stage list")
        rounds = []
        for stage in stages:
            rounds.extend(int(m) for m in _ROUND_RE.findall(str(stage.get("records_uri", ""))))
        round_no = max(rounds) if rounds else 0
        batch = int(hyperparams.get("batch_size", 8))
        steps = 0
        for stage in stages:
            uri = stage["records_uri"]
            try:
                with open(uri, encoding="utf-8") as fh:
                    count = sum(1 for line in fh if line.strip())
            except OSError as exc:
                raise BackendError(BackendError.PROTOCOL,
                                   f"records_uri not readable: {uri}: {exc}") from exc
            steps += int(stage["epochs"]) * math.ceil(count / batch)
        if round_no in self.script.validation:
            val_f1, val_em = self.script.validation[round_no]
        else:
            skill = self.script.skill(round_no)
            val_f1, val_em = skill, max(0.0, skill - 0.05)
        return TrainResult(model=f"mock-r{round_no}", steps=steps, f1=val_f1, em=val_em)
