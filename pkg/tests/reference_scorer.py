"""Independent brute-force EM/F1 reference.

Deliberately written with naive character loops and counting dicts, sharing no
code with gemquad.qametrics, so the two can check each other. Rules applied
literally: case fold, drop Unicode punctuation, split (whitespace or one token
per character), drop article tokens, exact-sequence EM, token-multiset F1 with
max over references.
"""

from __future__ import annotations

import unicodedata

ARTICLES = {
    "en": ["a", "an", "the"],
    "es": ["el", "la", "los", "las", "un", "una", "unos", "unas"],
}
PER_CHARACTER = {"zh"}


def ref_tokens(text: str, lang: str) -> list[str]:
    folded = ""
    for ch in text:
        folded += ch.casefold()
    kept = ""
    for ch in folded:
        if unicodedata.category(ch).startswith("P"):
            continue
        kept += ch
    if lang in PER_CHARACTER:
        out = []
        for ch in kept:
            if not ch.isspace():
                out.append(ch)
        return out
    words = []
    current = ""
    for ch in kept + " ":
        if ch.isspace():
            if current:
                words.append(current)
            current = ""
        else:
            current += ch
    articles = ARTICLES.get(lang, [])
    return [w for w in words if w not in articles]


def ref_em(pred: str, golds: list[str], lang: str) -> int:
    for gold in golds:
        if ref_tokens(pred, lang) == ref_tokens(gold, lang):
            return 1
    return 0


def _multiset(tokens: list[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for tok in tokens:
        counts[tok] = counts.get(tok, 0) + 1
    return counts


def _f1_single(pred: str, gold: str, lang: str) -> float:
    p = ref_tokens(pred, lang)
    g = ref_tokens(gold, lang)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    pc = _multiset(p)
    gc = _multiset(g)
    overlap = 0
    for tok, n in pc.items():
        if tok in gc:
            overlap += min(n, gc[tok])
    if overlap == 0:
        return 0.0
    precision = overlap / len(p)
    recall = overlap / len(g)
    return 2 * precision * recall / (precision + recall)


def ref_f1(pred: str, golds: list[str], lang: str) -> float:
    return max(_f1_single(pred, gold, lang) for gold in golds)
