"""Record model and corpus I/O.

QARecord/Dataset are immutable once built; every record with an answer offset
satisfies context[start:start+len(text)] == text by construction. SQuAD-v1.1
documents are the interchange format; the line-delimited jsonl store is the
canonical on-disk form for synthetic and silver batches.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import CountError, LineError, SchemaError, SpanError

GOLD = "gold"
SYNTHETIC = "synthetic"
SILVER = "silver"
SOURCES = (GOLD, SYNTHETIC, SILVER)

JSONL_FIELDS = ("id", "lang", "context", "question", "answers", "source", "gen_meta")


@dataclass(frozen=True)
class Answer:
    text: str
    start: int | None = None


@dataclass(frozen=True)
class GenerationMeta:
    """Provenance of one synthetic record. Generation is a one-time step, so
    round_generated stays 0."""

    exemplar_id: str
    sampling: "SamplingConfig"  # noqa: F821 - promptgen type, kept untangled at runtime
    raw_text: str
    round_generated: int = 0

    def to_json(self) -> dict:
        return {
            "exemplar_id": self.exemplar_id,
            "sampling": self.sampling.to_json(),
            "raw_text": self.raw_text,
            "round_generated": self.round_generated,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GenerationMeta":
        from .promptgen import SamplingConfig

        return cls(
            exemplar_id=obj["exemplar_id"],
            sampling=SamplingConfig.from_json(obj["sampling"]),
            raw_text=obj["raw_text"],
            round_generated=int(obj.get("round_generated", 0)),
        )


@dataclass(frozen=True)
class QARecord:
    id: str
    lang: str
    context: str
    question: str
    answers: tuple[Answer, ...]
    source: str = GOLD
    gen_meta: GenerationMeta | None = None

    def __post_init__(self):
        if not self.id:
            raise SchemaError("record id must be non-empty")
        if not self.context or not self.question:
            raise SchemaError(f"{self.id}: context and question must be non-empty")
        if self.source not in SOURCES:
            raise SchemaError(f"{self.id}: unknown source {self.source!r}")
        if self.source in (GOLD, SILVER) and not self.answers:
            raise SchemaError(f"{self.id}: {self.source} records need at least one answer")
        for ans in self.answers:
            if ans.start is not None:
                end = ans.start + len(ans.text)
                if ans.start < 0 or self.context[ans.start:end] != ans.text:
                    raise SpanError(self.id, f"answer {ans.text!r} not at offset {ans.start}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "lang": self.lang,
            "context": self.context,
            "question": self.question,
            "answers": [{"text": a.text, "start": a.start} for a in self.answers],
            "source": self.source,
            "gen_meta": self.gen_meta.to_json() if self.gen_meta else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QARecord":
        try:
            answers = tuple(
                Answer(text=a["text"], start=a.get("start")) for a in obj["answers"]
            )
            meta = obj.get("gen_meta")
            return cls(
                id=obj["id"],
                lang=obj["lang"],
                context=obj["context"],
                question=obj["question"],
                answers=answers,
                source=obj.get("source", GOLD),
                gen_meta=GenerationMeta.from_json(meta) if meta else None,
            )
        except KeyError as exc:
            raise SchemaError(f"record missing key {exc}") from exc


def _canonical(rec: QARecord) -> str:
    return json.dumps(rec.to_json(), sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def content_checksum(records: Sequence[QARecord]) -> str:
    """Order-independent sha256 over the sorted canonical record serializations."""
    payload = "\n".join(sorted(_canonical(r) for r in records))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Manifest:
    source: str
    languages: dict[str, int]
    checksum: str


@dataclass(frozen=True)
class Dataset:
    name: str
    records: tuple[QARecord, ...]
    manifest: Manifest = field(init=False)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = [i for i, n in Counter(ids).items() if n > 1]
            raise SchemaError(f"duplicate record ids in dataset {self.name}: {dupes[:5]}")
        object.__setattr__(
            self,
            "manifest",
            Manifest(
                source=self.name,
                languages=dict(Counter(r.lang for r in self.records)),
                checksum=content_checksum(self.records),
            ),
        )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[QARecord]:
        return iter(self.records)

    @property
    def checksum(self) -> str:
        return self.manifest.checksum


@dataclass(frozen=True)
class ExemplarPool:
    """Demonstration records for one language; each carries an aligned gold answer."""

    lang: str
    exemplars: tuple[QARecord, ...]

    def __post_init__(self):
        if not self.exemplars:
            raise SchemaError(f"exemplar pool for {self.lang} is empty")
        for rec in self.exemplars:
            if rec.lang != self.lang:
                raise SchemaError(f"exemplar {rec.id} has lang {rec.lang}, pool is {self.lang}")
            if not rec.answers or rec.answers[0].start is None:
                raise SchemaError(f"exemplar {rec.id} needs an answer with a valid offset")


# --- SQuAD v1.1 interchange -------------------------------------------------

def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"missing key {key!r} in {where}")
    return obj[key]


def _resolve_answer(qa_id: str, context: str, text: str, start: int | None) -> Answer:
    """Validate an offset, relocating to the first occurrence when it drifted.
    Rejects the record only if the text does not occur in the context at all."""
    if start is not None and context[start:start + len(text)] == text:
        return Answer(text=text, start=start)
    found = context.find(text)
    if found < 0:
        raise SpanError(qa_id, f"answer {text!r} not found in context")
    return Answer(text=text, start=found)


def parse_squad(raw: bytes | str, lang: str = "en", name: str = "squad") -> Dataset:
    """Parse a SQuAD-v1.1-shaped document into a Dataset, order-preserving.

    Per-qa `lang`, `source` and `gen_meta` keys are honored when present
    (written by serialize_squad); plain SQuAD files fall back to the `lang`
    argument and gold provenance.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not a JSON document: {exc}") from exc
    records = []
    data = _require(doc, "data", "document root")
    for ai, article in enumerate(data):
        paragraphs = _require(article, "paragraphs", f"data[{ai}]")
        for pi, para in enumerate(paragraphs):
            context = _require(para, "context", f"data[{ai}].paragraphs[{pi}]")
            for qa in _require(para, "qas", f"data[{ai}].paragraphs[{pi}]"):
                qa_id = str(_require(qa, "id", "qa entry"))
                question = _require(qa, "question", f"qa {qa_id}")
                source = qa.get("source", GOLD)
                answers = []
                for ans in _require(qa, "answers", f"qa {qa_id}"):
                    text = _require(ans, "text", f"qa {qa_id} answer")
                    if "answer_start" in ans:
                        answers.append(_resolve_answer(qa_id, context, text, ans["answer_start"]))
                    elif source == GOLD:
                        raise SchemaError(f"missing key 'answer_start' in qa {qa_id} answer")
                    else:
                        answers.append(Answer(text=text, start=None))
                meta = qa.get("gen_meta")
                records.append(
                    QARecord(
                        id=qa_id,
                        lang=qa.get("lang", lang),
                        context=context,
                        question=question,
                        answers=tuple(answers),
                        source=source,
                        gen_meta=GenerationMeta.from_json(meta) if meta else None,
                    )
                )
    return Dataset(name=name, records=tuple(records))


def serialize_squad(ds: Dataset) -> bytes:
    """Render a Dataset back to SQuAD v1.1. Runs of records sharing a context
    become one paragraph; lang/source/gen_meta ride along as extra qa keys so
    the round trip reproduces the record model exactly."""
    paragraphs: list[dict] = []
    for rec in ds.records:
        qa: dict = {"id": rec.id, "question": rec.question, "lang": rec.lang}
        if rec.source != GOLD:
            qa["source"] = rec.source
        if rec.gen_meta is not None:
            qa["gen_meta"] = rec.gen_meta.to_json()
        qa["answers"] = [
            {"text": a.text, "answer_start": a.start} if a.start is not None else {"text": a.text}
            for a in rec.answers
        ]
        if paragraphs and paragraphs[-1]["context"] == rec.context:
            paragraphs[-1]["qas"].append(qa)
        else:
            paragraphs.append({"context": rec.context, "qas": [qa]})
    doc = {"version": "1.1", "data": [{"title": ds.name, "paragraphs": paragraphs}]}
    return json.dumps(doc, ensure_ascii=False, sort_keys=True).encode("utf-8")


# --- subsetting / dedup ------------------------------------------------------

def sample_subset(ds: Dataset, n: int, seed: int,
                  manifest_path: str | Path | None = None) -> Dataset:
    """Uniform sample without replacement, deterministic in (content checksum, n, seed).
    Selected records keep their original relative order."""
    if n > len(ds):
        raise CountError(f"requested {n} records from a dataset of {len(ds)}")
    rng = random.Random(f"{ds.checksum}:{n}:{seed}")
    picked = sorted(rng.sample(range(len(ds)), n))
    subset = Dataset(name=f"{ds.name}[n={n}]", records=tuple(ds.records[i] for i in picked))
    if manifest_path is not None:
        write_subset_manifest(manifest_path, subset, seed=seed, n=n, source_checksum=ds.checksum)
    return subset


def write_subset_manifest(path: str | Path, subset: Dataset, seed: int, n: int,
                          source_checksum: str) -> None:
    lines = [f"# seed={seed} n={n} source={source_checksum}"]
    lines.extend(r.id for r in subset.records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_subset_manifest(path: str | Path) -> tuple[dict, list[str]]:
    """Return (header fields, ordered record ids)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# "):
        raise SchemaError(f"{path}: manifest missing header line")
    header = {}
    for part in lines[0][2:].split():
        key, _, value = part.partition("=")
        header[key] = value
    return header, [ln for ln in lines[1:] if ln]


def apply_subset_manifest(ds: Dataset, path: str | Path) -> Dataset:
    header, ids = read_subset_manifest(path)
    if header.get("source") and header["source"] != ds.checksum:
        raise SchemaError(f"{path}: manifest was built from a different dataset")
    by_id = {r.id: r for r in ds.records}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise SchemaError(f"{path}: manifest ids not in dataset: {missing[:5]}")
    return Dataset(name=f"{ds.name}[manifest]", records=tuple(by_id[i] for i in ids))


def _dedup_key(rec: QARecord) -> tuple[str, str, str]:
    def norm(s: str) -> str:
        return " ".join(s.split()).casefold()

    first = rec.answers[0].text if rec.answers else ""
    return norm(rec.context), norm(rec.question), norm(first)


def dedup(ds: Dataset) -> tuple[Dataset, int]:
    """Drop later records whose (context, question, first answer) key repeats
    after whitespace normalization and case folding. Keeps the earliest."""
    seen: set[tuple[str, str, str]] = set()
    kept = []
    for rec in ds.records:
        key = _dedup_key(rec)
        if key in seen:
            continue
        seen.add(key)
        kept.append(rec)
    return Dataset(name=ds.name, records=tuple(kept)), len(ds) - len(kept)


# --- line-delimited store -----------------------------------------------------

def write_jsonl(path: str | Path, records: Iterable[QARecord], append: bool = False) -> int:
    """One canonically-serialized record per line. Returns the count written."""
    mode = "a" if append else "w"
    n = 0
    with open(path, mode, encoding="utf-8") as fh:
        for rec in records:
            fh.write(_canonical(rec) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[QARecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(QARecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, SchemaError, SpanError) as exc:
                raise LineError(line_no, f"{path}: {exc}") from exc
    return records


def load_dataset(path: str | Path, lang: str = "en", name: str | None = None) -> Dataset:
    """Load either a SQuAD document or a jsonl record file, sniffing the format."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{") and '"data"' in stripped[:2000]:
        return parse_squad(text, lang=lang, name=name or path.stem)
    return Dataset(name=name or path.stem, records=tuple(read_jsonl(path)))


def promote(rec: QARecord, source: str) -> QARecord:
    return replace(rec, source=source)
