"""Wire protocol client for the generation / span-prediction / fine-tuning
services.

POST /v1/generate  {prompt, sampling:{do_sample, temperature, top_k, top_p,
                    max_length}, seed} -> {text}
POST /v1/predict   {model, items:[{id, context, question}]} -> {answers:[{id, text, start}]}
POST /v1/train     {base_model, stages:[{name, records_uri, epochs}],
                    hyperparams:{learning_rate, batch_size, optimizer, scheduler},
                    validation_uri} -> {model, steps, val:{f1, em}}

Retries apply to transport-level failures only (connection errors, timeouts,
5xx); well-formed model errors are never retried so runs stay reproducible.
Every predict response is checked client-side: ids must match the request and
each answer must equal the context substring at its offset.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests

from .errors import BackendError, ConfigError, ContractError, PlanError
from .promptgen import SamplingConfig

logger = logging.getLogger(__name__)

PREDICT_BATCH_SIZE = 32

PredictItem = tuple[str, str, str]  # (id, context, question)


@dataclass(frozen=True)
class PredictAnswer:
    id: str
    text: str
    start: int


@dataclass(frozen=True)
class TrainResult:
    model: str
    steps: int
    f1: float
    em: float


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ConfigError("retry max_attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(attempt - 1, len(self.backoff) - 1)]


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    timeout: float = 60.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    auth_token: str | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError("endpoint timeout must be positive")


class Backend(Protocol):
    """Operation surface shared by the HTTP client and the scripted mock."""

    def generate(self, prompt: str, sampling: SamplingConfig) -> str: ...

    def predict(self, model: str, items: Sequence[PredictItem]) -> list[PredictAnswer]: ...

    def train(self, base: str, stages: Sequence[dict], hyperparams: dict,
              validation_uri: str) -> TrainResult: ...


def default_hyperparams() -> dict:
    return {"learning_rate": 2e-5, "batch_size": 8, "optimizer": "adamw", "scheduler": "linear"}


def verify_predict_contract(items: Sequence[PredictItem],
                            answers: Sequence[PredictAnswer]) -> list[PredictAnswer]:
    """Reorder answers to request order; raise ContractError on missing or
    unknown ids, or when an answer is not the context substring at its offset."""
    by_id = {a.id: a for a in answers}
    if len(by_id) != len(answers):
        raise ContractError("duplicate ids in predict response")
    requested = [item[0] for item in items]
    missing = [i for i in requested if i not in by_id]
    extra = [i for i in by_id if i not in set(requested)]
    if missing or extra:
        raise ContractError(f"predict id mismatch: missing={missing[:5]} unexpected={extra[:5]}")
    contexts = {item[0]: item[1] for item in items}
    ordered = []
    for rid in requested:
        ans = by_id[rid]
        ctx = contexts[rid]
        if ctx[ans.start:ans.start + len(ans.text)] != ans.text:
            raise ContractError(
                f"predict answer for {rid} is not the context substring at offset {ans.start}")
        ordered.append(ans)
    return ordered


class HttpBackend:
    """requests-based client for one endpoint, safe for concurrent calls."""

    def __init__(self, endpoint: BackendEndpoint, session=None,
                 predict_batch_size: int = PREDICT_BATCH_SIZE, sleep=time.sleep):
        self.endpoint = endpoint
        self.session = session if session is not None else requests.Session()
        self.predict_batch_size = predict_batch_size
        self._sleep = sleep

    def _headers(self) -> dict:
        if self.endpoint.auth_token:
            return {"Authorization": f"Bearer {self.endpoint.auth_token}"}
        return {}

    def _post(self, path: str, payload: dict) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        policy = self.endpoint.retry
        last: str = "no attempt made"
        all_timeouts = True
        for attempt in range(1, policy.max_attempts + 1):
            try:
                resp = self.session.post(url, json=payload, timeout=self.endpoint.timeout,
                                         headers=self._headers())
            except requests.Timeout as exc:
                last = f"timeout: {exc}"
            except requests.RequestException as exc:
                last = f"connection: {exc}"
                all_timeouts = False
            else:
                if resp.status_code >= 500:
                    last = f"server error {resp.status_code}"
                    all_timeouts = False
                elif resp.status_code >= 400:
                    detail = _error_detail(resp)
                    raise BackendError(BackendError.PROTOCOL,
                                       f"{url} returned {resp.status_code}: {detail}",
                                       attempts=attempt, status=resp.status_code)
                else:
                    try:
                        body = resp.json()
                    except ValueError as exc:
                        raise BackendError(BackendError.PROTOCOL,
                                           f"{url} returned non-JSON body: {exc}",
                                           attempts=attempt) from exc
                    if attempt > 1:
                        logger.info("%s succeeded on attempt %d", url, attempt)
                    return body
            if attempt < policy.max_attempts:
                logger.warning("%s attempt %d/%d failed (%s), retrying",
                               url, attempt, policy.max_attempts, last)
                self._sleep(policy.delay(attempt))
        kind = BackendError.TIMEOUT if all_timeouts else BackendError.EXHAUSTED
        raise BackendError(kind, f"{url} failed after {policy.max_attempts} attempts: {last}",
                           attempts=policy.max_attempts)

    def generate(self, prompt: str, sampling: SamplingConfig) -> str:
        body = self._post("/v1/generate", {
            "prompt": prompt,
            "sampling": sampling.to_wire(),
            "seed": sampling.seed,
        })
        try:
            return str(body["text"])
        except (KeyError, TypeError) as exc:
            raise BackendError(BackendError.PROTOCOL,
                               f"generate response missing 'text': {body!r}") from exc

    def predict(self, model: str, items: Sequence[PredictItem]) -> list[PredictAnswer]:
        if not items:
            raise ValueError("predict requires at least one item")
        answers: list[PredictAnswer] = []
        for lo in range(0, len(items), self.predict_batch_size):
            batch = items[lo:lo + self.predict_batch_size]
            body = self._post("/v1/predict", {
                "model": model,
                "items": [{"id": i, "context": c, "question": q} for i, c, q in batch],
            })
            try:
                got = [PredictAnswer(id=str(a["id"]), text=str(a["text"]), start=int(a["start"]))
                       for a in body["answers"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise BackendError(BackendError.PROTOCOL,
                                   f"malformed predict response: {body!r}") from exc
            answers.extend(verify_predict_contract(batch, got))
        return answers

    def train(self, base: str, stages: Sequence[dict], hyperparams: dict,
              validation_uri: str) -> TrainResult:
        if not stages:
            raise PlanError("train called with an empty stage list")
        try:
            body = self._post("/v1/train", {
                "base_model": base,
                "stages": list(stages),
                "hyperparams": dict(hyperparams),
                "validation_uri": validation_uri,
            })
        except BackendError as exc:
            if exc.status is not None and 400 <= exc.status < 500:
                raise PlanError(f"backend rejected the training plan: {exc}") from exc
            raise
        try:
            return TrainResult(model=str(body["model"]), steps=int(body["steps"]),
                               f1=float(body["val"]["f1"]), em=float(body["val"]["em"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(BackendError.PROTOCOL,
                               f"malformed train response: {body!r}") from exc


def _error_detail(resp) -> str:
    try:
        return str(resp.json().get("error", resp.text[:200]))
    except ValueError:
        return resp.text[:200]


def make_backend(url: str, endpoint_kwargs: dict | None = None):
    """Build a backend from a base_url. `mock:<script.json>` loads the
    deterministic scripted backend; anything else is treated as HTTP."""
    if url.startswith("mock:"):
        from .mock import MockBackend, MockScript

        return MockBackend(MockScript.from_file(url[len("mock:"):]))
    return HttpBackend(BackendEndpoint(base_url=url, **(endpoint_kwargs or {})))
