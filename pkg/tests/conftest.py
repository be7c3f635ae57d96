from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from gemquad.corpus import write_jsonl  # noqa: E402
from gemquad.mock import MockBackend, MockScript  # noqa: E402
from gemquad.promptgen import PromptTemplate, SamplingConfig, build_prompt  # noqa: E402

import fixtures  # noqa: E402
from wire_stub import start_stub  # noqa: E402


@dataclass
class WireEnv:
    base_url: str
    prompt: str
    sampling: SamplingConfig
    model: str
    predict_items: list
    train_base: str
    train_stages: list
    train_hyperparams: dict
    train_validation_uri: str
    timeout: float = 10.0
    train_timeout: float = 10.0
    extras: dict = field(default_factory=dict)


@pytest.fixture
def wire_env(tmp_path):
    """Contract-suite environment backed by the in-process wire stub."""
    pairs, script = fixtures.generation_script(n=3)
    records, difficulty, answers = fixtures.e2e_candidates()
    records = records[:6]
    script = MockScript(
        generation=script.generation,
        contexts=script.contexts,
        skills=(0.5,),
        difficulty={r.id: 0.1 for r in records},
        answers={r.id: answers[r.id] for r in records},
    )
    backend = MockBackend(script)
    server = start_stub(backend)

    tmpl = PromptTemplate()
    exemplar = fixtures.gold_record(300, lang="es")
    prompt = build_prompt(tmpl, exemplar, pairs[0][1])
    stage_file = tmp_path / "round_1" / "stage_hi.jsonl"
    stage_file.parent.mkdir(parents=True)
    write_jsonl(stage_file, records)
    validation_file = tmp_path / "validation.jsonl"
    write_jsonl(validation_file, [fixtures.gold_record(i + 700) for i in range(4)])

    env = WireEnv(
        base_url=server.base_url,
        prompt=prompt,
        sampling=SamplingConfig(top_k=60, top_p=0.9, seed=7),
        model="mock-r0",
        predict_items=[(r.id, r.context, r.question) for r in records],
        train_base="student-base",
        train_stages=[{"name": "hi", "records_uri": str(stage_file), "epochs": 2}],
        train_hyperparams={"learning_rate": 2e-5, "batch_size": 8,
                           "optimizer": "adamw", "scheduler": "linear"},
        train_validation_uri=str(validation_file),
        extras={"server": server},
    )
    yield env
    server.shutdown()
