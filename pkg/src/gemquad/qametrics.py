"""Extractive-QA scoring: per-example EM and token F1 with language-aware
normalization, plus dataset-level aggregation.

Normalization follows the SQuAD/MLQA convention: case fold, strip Unicode
punctuation, tokenize (whitespace, or one token per character for languages
written without spaces), drop article tokens, collapse whitespace. Profiles
are data so uncovered languages can be corrected without code changes.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError

WHITESPACE = "whitespace"
PER_CHARACTER = "per_character"


@dataclass(frozen=True)
class LanguageRules:
    """Normalization knobs for one language."""

    articles: tuple[str, ...] = ()
    tokenization: str = WHITESPACE
    strip_punctuation: bool = True
    fold_case: bool = True

    def __post_init__(self):
        if self.tokenization not in (WHITESPACE, PER_CHARACTER):
            raise ConfigError(f"unknown tokenization mode {self.tokenization!r}")


@dataclass(frozen=True)
class NormalizationProfile:
    """Per-language rule map with a fallback for uncovered languages."""

    rules: Mapping[str, LanguageRules] = field(default_factory=dict)
    fallback: LanguageRules = LanguageRules()

    def for_lang(self, lang: str) -> LanguageRules:
        return self.rules.get(lang, self.fallback)


DEFAULT_PROFILE = NormalizationProfile(
    rules={
        "en": LanguageRules(articles=("a", "an", "the")),
        "es": LanguageRules(articles=("el", "la", "los", "las", "un", "una", "unos", "unas")),
        "hi": LanguageRules(),
        "zh": LanguageRules(tokenization=PER_CHARACTER),
    }
)


def load_profile(path: str | Path) -> NormalizationProfile:
    """Read a profile from JSON: {"<lang>": {"articles": [...], "tokenization": ...,
    "strip_punctuation": bool, "fold_case": bool}, ...}. A "*" entry overrides the fallback."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigError(f"profile file {path} must hold a JSON object")
    rules = {}
    fallback = LanguageRules()
    for lang, spec in raw.items():
        rule = LanguageRules(
            articles=tuple(spec.get("articles", ())),
            tokenization=spec.get("tokenization", WHITESPACE),
            strip_punctuation=bool(spec.get("strip_punctuation", True)),
            fold_case=bool(spec.get("fold_case", True)),
        )
        if lang == "*":
            fallback = rule
        else:
            rules[lang] = rule
    return NormalizationProfile(rules=rules, fallback=fallback)


def _strip_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def normalize(text: str, lang: str, profile: NormalizationProfile = DEFAULT_PROFILE) -> list[str]:
    """Normalize to a token sequence under the language's rules."""
    rule = profile.for_lang(lang)
    if rule.fold_case:
        text = text.casefold()
    if rule.strip_punctuation:
        text = _strip_punctuation(text)
    if rule.tokenization == PER_CHARACTER:
        return [ch for ch in text if not ch.isspace()]
    articles = set(rule.articles)
    return [tok for tok in text.split() if tok not in articles]


def em(pred: str, golds: Sequence[str], lang: str,
       profile: NormalizationProfile = DEFAULT_PROFILE) -> int:
    """1 iff the normalized prediction equals any normalized reference."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pred_tokens = normalize(pred, lang, profile)
    return int(any(pred_tokens == normalize(g, lang, profile) for g in golds))


def _f1_tokens(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(pred: str, golds: Sequence[str], lang: str,
       profile: NormalizationProfile = DEFAULT_PROFILE) -> float:
    """Token-multiset F1, max over references."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pred_tokens = normalize(pred, lang, profile)
    return max(_f1_tokens(pred_tokens, normalize(g, lang, profile)) for g in golds)


@dataclass(frozen=True)
class MetricValue:
    f1: float
    em: float

    def __post_init__(self):
        if not (0.0 <= self.f1 <= 1.0 and 0.0 <= self.em <= 1.0):
            raise ValueError(f"metrics out of range: f1={self.f1} em={self.em}")

    def as_percent(self) -> str:
        return f"{100 * self.f1:.2f} / {100 * self.em:.2f}"

    def to_json(self) -> dict:
        return {"f1": self.f1, "em": self.em}

    @classmethod
    def from_json(cls, obj: Mapping) -> "MetricValue":
        return cls(f1=float(obj["f1"]), em=float(obj["em"]))


@dataclass(frozen=True)
class MetricReport:
    """Per-language scores plus an unweighted macro average over `languages`."""

    per_language: Mapping[str, MetricValue]
    counts: Mapping[str, int]
    macro: MetricValue
    languages: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "per_language": {l: self.per_language[l].to_json() for l in sorted(self.per_language)},
            "counts": {l: self.counts[l] for l in sorted(self.counts)},
            "macro": self.macro.to_json(),
            "languages": list(self.languages),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MetricReport":
        return cls(
            per_language={l: MetricValue.from_json(v) for l, v in obj["per_language"].items()},
            counts={l: int(n) for l, n in obj["counts"].items()},
            macro=MetricValue.from_json(obj["macro"]),
            languages=tuple(obj["languages"]),
        )


def evaluate(predictions: Mapping[str, str], gold: Iterable,
             profile: NormalizationProfile = DEFAULT_PROFILE,
             languages: Sequence[str] | None = None,
             weighted: bool = False) -> MetricReport:
    """Score a prediction map against gold records.

    `gold` yields objects with .id, .lang and .answers (each answer has .text).
    Missing predictions score 0/0 and stay in the counts, so partial runs still
    report. The macro row averages (unweighted by default) over `languages`,
    restricted to languages actually present.
    """
    sums: dict[str, list[float]] = {}
    counts: dict[str, int] = {}
    for rec in gold:
        refs = [a.text for a in rec.answers]
        pred = predictions.get(rec.id)
        if pred is None or not refs:
            ex_f1, ex_em = 0.0, 0.0
        else:
            ex_f1 = f1(pred, refs, rec.lang, profile)
            ex_em = float(em(pred, refs, rec.lang, profile))
        bucket = sums.setdefault(rec.lang, [0.0, 0.0])
        bucket[0] += ex_f1
        bucket[1] += ex_em
        counts[rec.lang] = counts.get(rec.lang, 0) + 1

    per_language = {
        lang: MetricValue(f1=s[0] / counts[lang], em=s[1] / counts[lang])
        for lang, s in sums.items()
    }
    listed = [l for l in (languages if languages is not None else sorted(per_language))
              if l in per_language]
    if listed:
        if weighted:
            total = sum(counts[l] for l in listed)
            macro = MetricValue(
                f1=sum(per_language[l].f1 * counts[l] for l in listed) / total,
                em=sum(per_language[l].em * counts[l] for l in listed) / total,
            )
        else:
            macro = MetricValue(
                f1=sum(per_language[l].f1 for l in listed) / len(listed),
                em=sum(per_language[l].em for l in listed) / len(listed),
            )
    else:
        macro = MetricValue(f1=0.0, em=0.0)
    return MetricReport(per_language=per_language, counts=counts, macro=macro,
                        languages=tuple(listed))
