from __future__ import annotations

import json
import socket
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import pytest
import requests
import uvicorn

ADAPTER_TESTS = Path(__file__).resolve().parent
PRIMARY_TESTS = ADAPTER_TESTS.parent.parent / "tests"
sys.path.insert(0, str(ADAPTER_TESTS))
sys.path.insert(0, str(PRIMARY_TESTS))

from gemquad_adapter.config import AdapterConfig  # noqa: E402
from gemquad_adapter.service import build_app  # noqa: E402

import tinymodels  # noqa: E402

TOWNS = ["Aveiro", "Bilbao", "Cusco", "Denia", "Evora", "Faro", "Gijon", "Huesca"]
RIVERS = ["Duero", "Ebro", "Genil", "Jucar", "Mino", "Segura", "Tajo", "Turia"]


def qa_row(i: int, lang: str = "en", source: str = "gold") -> dict:
    town = TOWNS[i % len(TOWNS)]
    river = RIVERS[i % len(RIVERS)]
    context = (f"Article {i} begins here. The town of {town} number {i} grew along "
               f"the {river} river and is known for its market.")
    answer = f"{town} number {i}"
    start = None if source == "synthetic" else context.index(answer)
    return {
        "id": f"{lang}-{source}-{i}",
        "lang": lang,
        "context": context,
        "question": f"Which town number {i} grew along the {river}?",
        "answers": [{"text": answer, "start": start}],
        "source": source,
        "gen_meta": None,
    }


def write_rows(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    return path


class LiveServer:
    def __init__(self, cfg: AdapterConfig):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            self.port = probe.getsockname()[1]
        self.app = build_app(cfg)
        self._server = uvicorn.Server(uvicorn.Config(self.app, host="127.0.0.1",
                                                     port=self.port, log_level="warning"))
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self, timeout: float = 30.0) -> "LiveServer":
        self._thread.start()
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            try:
                if requests.get(self.base_url + "/v1/health", timeout=2).ok:
                    return self
            except requests.RequestException:
                time.sleep(0.1)
        raise RuntimeError("adapter server did not come up")

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture(scope="session")
def checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_checkpoints")
    student_dir, generator_dir = tinymodels.build_checkpoints(root)
    return {"student": str(student_dir), "generator": str(generator_dir)}


@pytest.fixture(scope="session")
def adapter_cfg(checkpoints, tmp_path_factory):
    return AdapterConfig(
        generator_model=checkpoints["generator"],
        student_model=checkpoints["student"],
        device="cpu",
        checkpoint_dir=str(tmp_path_factory.mktemp("adapter_ckpt")),
        max_train_examples=200,
        max_eval_examples=50,
        max_epochs=4,
        max_seq_len=128,
        max_answer_tokens=12,
        train_timeout_seconds=300.0,
    )


@pytest.fixture(scope="session")
def live_adapter(adapter_cfg):
    server = LiveServer(adapter_cfg).start()
    yield server
    server.stop()


@dataclass
class WireEnv:
    base_url: str
    prompt: str
    sampling: object
    model: str
    predict_items: list
    train_base: str
    train_stages: list
    train_hyperparams: dict
    train_validation_uri: str
    timeout: float = 30.0
    train_timeout: float = 240.0
    extras: dict = field(default_factory=dict)


@pytest.fixture
def wire_env(live_adapter, tmp_path):
    """Contract-suite environment backed by the live adapter service."""
    from gemquad.promptgen import SamplingConfig

    stage_file = write_rows(tmp_path / "round_1" / "stage_en.jsonl",
                            [qa_row(i) for i in range(12)])
    validation_file = write_rows(tmp_path / "validation.jsonl",
                                 [qa_row(i + 100) for i in range(4)])
    rows = [qa_row(i + 40) for i in range(3)]
    return WireEnv(
        base_url=live_adapter.base_url,
        prompt="Context: The town of Aveiro number 1 grew along the Duero river.\nQuestion:",
        sampling=SamplingConfig(top_k=60, top_p=0.9, seed=11),
        model="base",
        predict_items=[(r["id"], r["context"], r["question"]) for r in rows],
        train_base="base",
        train_stages=[{"name": "en", "records_uri": str(stage_file), "epochs": 1}],
        train_hyperparams={"learning_rate": 2e-5, "batch_size": 8,
                           "optimizer": "adamw", "scheduler": "linear"},
        train_validation_uri=str(validation_file),
    )
