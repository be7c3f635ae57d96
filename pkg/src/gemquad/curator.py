"""Post-processing validation of synthetic records and the round filter that
promotes weak-labeler-confirmed records into the monotone silver store.

A record is accepted when the labeler's predicted answer, normalized, equals
the teacher's answer token-for-token (an optional F1 threshold below 1.0
relaxes this for ablations). Accepted ids are stamped with their round and
never removed or re-audited; rejected candidates stay eligible in later
rounds.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Answer, QARecord, SILVER, SYNTHETIC, read_jsonl
from .errors import SchemaError
from .qametrics import DEFAULT_PROFILE, NormalizationProfile, f1 as token_f1, normalize

logger = logging.getLogger(__name__)

ANSWER_NOT_IN_CONTEXT = "answer_not_in_context"
EMPTY_ANSWER = "empty_answer"
NO_ANSWER = "no_answer"


@dataclass(frozen=True)
class ValidationResult:
    record: QARecord | None = None
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.record is not None


def validate_record(rec: QARecord) -> ValidationResult:
    """Structural check for a synthetic record: the answer must be non-empty
    and occur in the context; its offset is set to the first occurrence."""
    if rec.source != SYNTHETIC:
        raise ValueError(f"validate_record expects synthetic records, got {rec.source}")
    if not rec.answers:
        return ValidationResult(reason=NO_ANSWER)
    text = rec.answers[0].text.strip()
    if not text:
        return ValidationResult(reason=EMPTY_ANSWER)
    start = rec.context.find(text)
    if start < 0:
        return ValidationResult(reason=ANSWER_NOT_IN_CONTEXT)
    return ValidationResult(record=replace(rec, answers=(Answer(text=text, start=start),)))


def answers_match(pred: str, gold: str, lang: str,
                  profile: NormalizationProfile = DEFAULT_PROFILE,
                  f1_threshold: float = 1.0) -> bool:
    """True iff both strings normalize to the same token sequence; with a
    threshold below 1.0, true when their token F1 reaches it."""
    if f1_threshold >= 1.0:
        return normalize(pred, lang, profile) == normalize(gold, lang, profile)
    return token_f1(pred, [gold], lang, profile) >= f1_threshold


@dataclass(frozen=True)
class FilterDecision:
    record_id: str
    labeler_answer: str
    matched: bool
    match_score: float

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "labeler_answer": self.labeler_answer,
            "matched": self.matched,
            "match_score": self.match_score,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FilterDecision":
        return cls(record_id=obj["record_id"], labeler_answer=obj["labeler_answer"],
                   matched=bool(obj["matched"]), match_score=float(obj["match_score"]))


class SilverStore:
    """Monotone, round-stamped set of accepted record ids per language.

    Ids are never removed or re-stamped; rounds are non-decreasing over
    insertion order. Persistence lives in the per-round accepted.jsonl files;
    load_rounds() rebuilds the map from them.
    """

    def __init__(self):
        self._rounds: dict[str, dict[str, int]] = {}
        self._last_round = 0

    def ids(self, lang: str | None = None) -> frozenset[str]:
        if lang is not None:
            return frozenset(self._rounds.get(lang, ()))
        return frozenset(i for by_lang in self._rounds.values() for i in by_lang)

    def count(self, lang: str) -> int:
        return len(self._rounds.get(lang, ()))

    def counts(self) -> dict[str, int]:
        return {lang: len(ids) for lang, ids in self._rounds.items()}

    def total(self) -> int:
        return sum(len(ids) for ids in self._rounds.values())

    def round_of(self, record_id: str) -> int | None:
        for by_lang in self._rounds.values():
            if record_id in by_lang:
                return by_lang[record_id]
        return None

    def add_batch(self, lang: str, record_ids: Iterable[str], round_no: int) -> None:
        if round_no < self._last_round:
            raise SchemaError(
                f"silver store rounds must be non-decreasing ({round_no} after {self._last_round})")
        by_lang = self._rounds.setdefault(lang, {})
        for rid in record_ids:
            if rid in by_lang:
                raise SchemaError(f"silver id {rid} already accepted in round {by_lang[rid]}")
            by_lang[rid] = round_no
        self._last_round = round_no

    def load_rounds(self, accepted_files: Sequence[tuple[int, str | Path]]) -> None:
        """Rebuild from (round number, accepted.jsonl path) pairs, in order."""
        for round_no, path in sorted(accepted_files):
            for rec in read_jsonl(path):
                self.add_batch(rec.lang, [rec.id], round_no)


@dataclass(frozen=True)
class FilterRoundResult:
    accepted: tuple[QARecord, ...]
    decisions: tuple[FilterDecision, ...]

    def accepted_by_lang(self) -> dict[str, list[QARecord]]:
        out: dict[str, list[QARecord]] = {}
        for rec in self.accepted:
            out.setdefault(rec.lang, []).append(rec)
        return out


def filter_round(candidates: Sequence[QARecord], labeler: str, backend, store: SilverStore,
                 round_no: int, profile: NormalizationProfile = DEFAULT_PROFILE,
                 f1_threshold: float = 1.0) -> FilterRoundResult:
    """Re-answer every candidate with the current labeler and accept the ones
    whose answer agrees with the teacher's. Accepted records are promoted to
    silver and stamped into the store; the store is untouched if predict fails.
    """
    overlap = [r.id for r in candidates if store.round_of(r.id) is not None]
    if overlap:
        raise ValueError(f"candidates already in the silver store: {overlap[:5]}")
    if not candidates:
        return FilterRoundResult(accepted=(), decisions=())

    items = [(r.id, r.context, r.question) for r in candidates]
    predictions = {a.id: a for a in backend.predict(labeler, items)}

    accepted: list[QARecord] = []
    decisions: list[FilterDecision] = []
    for rec in candidates:
        pred = predictions[rec.id]
        teacher = rec.answers[0].text
        matched = answers_match(pred.text, teacher, rec.lang, profile, f1_threshold)
        score = token_f1(pred.text, [teacher], rec.lang, profile)
        decisions.append(FilterDecision(record_id=rec.id, labeler_answer=pred.text,
                                        matched=matched, match_score=score))
        if matched:
            accepted.append(replace(rec, source=SILVER))

    by_lang: dict[str, list[str]] = {}
    for rec in accepted:
        by_lang.setdefault(rec.lang, []).append(rec.id)
    for lang, ids in by_lang.items():
        store.add_batch(lang, ids, round_no)
    logger.info("round %d: accepted %d of %d candidates", round_no, len(accepted), len(candidates))
    return FilterRoundResult(accepted=tuple(accepted), decisions=tuple(decisions))


def write_decisions(path: str | Path, decisions: Sequence[FilterDecision]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps(d.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def read_decisions(path: str | Path) -> list[FilterDecision]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(FilterDecision.from_json(json.loads(line)))
    return out


def validate_candidates(records: Sequence[QARecord]) -> tuple[list[QARecord], list[dict]]:
    """Validate a synthetic pool; returns (validated records, exclusion rows)."""
    validated: list[QARecord] = []
    exclusions: list[dict] = []
    for rec in records:
        result = validate_record(rec)
        if result.ok:
            validated.append(result.record)
        else:
            exclusions.append({"id": rec.id, "lang": rec.lang, "reason": result.reason})
    return validated, exclusions
