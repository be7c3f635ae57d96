"""1-shot prompt construction, per-request sampling draws, and parsing of raw
continuations into question/answer pairs.

Per-request randomness is derived by hashing (master seed, context id), so a
generation pass is reproducible no matter how requests are scheduled.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import yaml

from .corpus import Answer, ExemplarPool, GenerationMeta, QARecord, SYNTHETIC
from .errors import ConfigError, TemplateError

logger = logging.getLogger(__name__)

TOP_K_RANGE = (50, 100)
TOP_P_RANGE = (0.5, 0.95)
DEFAULT_TEMPERATURE = 0.9
DEFAULT_MAX_LENGTH = 50

NO_QUESTION_MARKER = "no_question_marker"
NO_ANSWER_MARKER = "no_answer_marker"
EMPTY_FIELD = "empty_field"
TRUNCATED = "truncated"


@dataclass(frozen=True)
class SamplingConfig:
    top_k: int
    top_p: float
    do_sample: bool = True
    temperature: float = DEFAULT_TEMPERATURE
    max_length: int = DEFAULT_MAX_LENGTH
    seed: int = 0

    def __post_init__(self):
        if not TOP_K_RANGE[0] <= self.top_k <= TOP_K_RANGE[1]:
            raise ConfigError(f"top_k {self.top_k} outside {TOP_K_RANGE}")
        if not TOP_P_RANGE[0] <= self.top_p <= TOP_P_RANGE[1]:
            raise ConfigError(f"top_p {self.top_p} outside {TOP_P_RANGE}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.max_length < 1:
            raise ConfigError("max_length must be at least 1")

    def to_wire(self) -> dict:
        """Sampling block of the /v1/generate body (seed travels top-level)."""
        return {
            "do_sample": self.do_sample,
            "temperature": self.temperature,
            "top_k": self.top_k,
            "top_p": self.top_p,
            "max_length": self.max_length,
        }

    def to_json(self) -> dict:
        return {**self.to_wire(), "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "SamplingConfig":
        return cls(
            top_k=int(obj["top_k"]),
            top_p=float(obj["top_p"]),
            do_sample=bool(obj.get("do_sample", True)),
            temperature=float(obj.get("temperature", DEFAULT_TEMPERATURE)),
            max_length=int(obj.get("max_length", DEFAULT_MAX_LENGTH)),
            seed=int(obj.get("seed", 0)),
        )


def draw_sampling_config(rng: random.Random) -> SamplingConfig:
    """Draw one request's knobs: top_k uniform on [50,100], top_p uniform on
    [0.5,0.95], fixed temperature/length, seed derived from the rng."""
    return SamplingConfig(
        top_k=rng.randint(*TOP_K_RANGE),
        top_p=rng.uniform(*TOP_P_RANGE),
        seed=rng.getrandbits(31),
    )


DEFAULT_INSTRUCTION = (
    "Read the context, then write one question about it and the answer. "
    "Both the question and the answer must come from the context."
)


@dataclass(frozen=True)
class PromptTemplate:
    cl_token: str = "[CLM]"
    instruction: str = DEFAULT_INSTRUCTION
    label_context: str = "Context:"
    label_question: str = "Question:"
    label_answer: str = "Answer:"
    joiner: str = "\n"
    terminator: str = ""

    def labels(self) -> tuple[str, str, str]:
        return self.label_context, self.label_question, self.label_answer


def load_template(path: str | Path) -> PromptTemplate:
    """Template file: YAML/JSON mapping with keys cl_token, instruction,
    label_context, label_question, label_answer (joiner/terminator optional)."""
    obj = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise ConfigError(f"template file {path} must hold a mapping")
    known = {f for f in PromptTemplate.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"template file {path}: unknown keys {sorted(unknown)}")
    return PromptTemplate(**obj)


def build_prompt(tmpl: PromptTemplate, exemplar: QARecord, test_context: str) -> str:
    """Render the 1-shot prompt: special token, instruction, the demonstrated
    (context, question, answer) triple, the test context, and a trailing
    question cue for the model to continue from."""
    for label in (tmpl.cl_token, *tmpl.labels()):
        if not label:
            raise TemplateError("template labels and cl_token must be non-empty")
    if not exemplar.answers:
        raise TemplateError(f"exemplar {exemplar.id} has no answer to demonstrate")
    parts = [
        f"{tmpl.cl_token} {tmpl.instruction}".rstrip(),
        f"{tmpl.label_context} {exemplar.context}",
        f"{tmpl.label_question} {exemplar.question}",
        f"{tmpl.label_answer} {exemplar.answers[0].text}",
        f"{tmpl.label_context} {test_context}",
        tmpl.label_question,
    ]
    return tmpl.joiner.join(parts) + tmpl.terminator


@dataclass(frozen=True)
class GenerationOutcome:
    context_id: str
    raw_text: str
    parsed: tuple[str, str] | None = None
    failure: str | None = None

    def __post_init__(self):
        if (self.parsed is None) == (self.failure is None):
            raise ValueError("exactly one of parsed/failure must be set")

    def to_json(self) -> dict:
        return {
            "context_id": self.context_id,
            "raw_text": self.raw_text,
            "parsed": list(self.parsed) if self.parsed else None,
            "failure": self.failure,
        }


def _is_truncated_label(text: str, label: str) -> bool:
    return any(text.endswith(label[:k]) for k in range(1, len(label)))


def parse_generation(raw: str, tmpl: PromptTemplate, context_id: str = "") -> GenerationOutcome:
    """Split a continuation on the template labels.

    The prompt already ends with the question cue, so the question label may
    be absent from the continuation; a context label appearing before any
    question label means the model restarted the pattern instead of answering
    (no_question_marker). A trailing proper prefix of the answer label means
    the length cap cut it off (truncated).
    """
    def fail(reason: str) -> GenerationOutcome:
        return GenerationOutcome(context_id=context_id, raw_text=raw, failure=reason)

    a_idx = raw.find(tmpl.label_answer)
    if a_idx < 0:
        if _is_truncated_label(raw.rstrip(), tmpl.label_answer):
            return fail(TRUNCATED)
        return fail(NO_ANSWER_MARKER)

    q_region = raw[:a_idx]
    c_idx = q_region.find(tmpl.label_context)
    q_idx = q_region.find(tmpl.label_question)
    if c_idx >= 0 and (q_idx < 0 or c_idx < q_idx):
        return fail(NO_QUESTION_MARKER)
    question = (q_region[q_idx + len(tmpl.label_question):] if q_idx >= 0 else q_region).strip()
    if not question:
        return fail(EMPTY_FIELD)

    a_region = raw[a_idx + len(tmpl.label_answer):]
    cut = len(a_region)
    for marker in (tmpl.label_context, tmpl.label_question, tmpl.cl_token):
        pos = a_region.find(marker)
        if pos >= 0:
            cut = min(cut, pos)
    answer = a_region[:cut].strip()
    if not answer:
        return fail(EMPTY_FIELD)
    return GenerationOutcome(context_id=context_id, raw_text=raw, parsed=(question, answer))


def request_seed(master_seed: int, context_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{context_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class GenerationResult:
    records: list[QARecord] = field(default_factory=list)
    failures: list[GenerationOutcome] = field(default_factory=list)


def generate_pairs(contexts: Sequence[tuple[str, str]], pool: ExemplarPool, backend,
                   tmpl: PromptTemplate = PromptTemplate(), master_seed: int = 0,
                   concurrency: int = 1, pairs_per_context: int = 1,
                   on_record: Callable[[QARecord], None] | None = None) -> GenerationResult:
    """Generate synthetic Q&A records, one per (context_id, context) pair by
    default (pairs_per_context > 1 issues extra independently-seeded calls).

    Exemplar choice and the SamplingConfig are pre-drawn per request from
    request_seed(master_seed, request_id) before dispatch, so results are
    reproducible regardless of request completion order; output order matches
    input order. Parse failures are returned (and logged), not raised; backend
    errors propagate after any completed prefix has been handed to on_record.
    """
    plans = []
    for context_id, text in contexts:
        for k in range(max(1, pairs_per_context)):
            request_id = context_id if k == 0 else f"{context_id}#{k}"
            rng = random.Random(request_seed(master_seed, request_id))
            exemplar = pool.exemplars[rng.randrange(len(pool.exemplars))]
            sampling = draw_sampling_config(rng)
            plans.append((request_id, text, exemplar, sampling,
                          build_prompt(tmpl, exemplar, text)))

    def call(plan):
        _, _, _, sampling, prompt = plan
        return backend.generate(prompt, sampling)

    result = GenerationResult()

    def consume(plan, raw: str) -> None:
        context_id, text, exemplar, sampling, _ = plan
        outcome = parse_generation(raw, tmpl, context_id=context_id)
        if outcome.failure is not None:
            logger.warning("generation failed for %s: %s", context_id, outcome.failure)
            result.failures.append(outcome)
            return
        question, answer = outcome.parsed
        record = QARecord(
            id=f"syn-{context_id}",
            lang=pool.lang,
            context=text,
            question=question,
            answers=(Answer(text=answer, start=None),),
            source=SYNTHETIC,
            gen_meta=GenerationMeta(exemplar_id=exemplar.id, sampling=sampling, raw_text=raw),
        )
        result.records.append(record)
        if on_record is not None:
            on_record(record)

    if concurrency > 1 and len(plans) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool_exec:
            futures = [pool_exec.submit(call, plan) for plan in plans]
            # Consume in input order so a failure aborts the batch with the
            # completed prefix already handed to on_record.
            for plan, future in zip(plans, futures):
                consume(plan, future.result())
    else:
        for plan in plans:
            consume(plan, call(plan))
    return result


def write_exclusions(path: str | Path, failures: Sequence[GenerationOutcome],
                     append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for outcome in failures:
            fh.write(json.dumps(outcome.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
