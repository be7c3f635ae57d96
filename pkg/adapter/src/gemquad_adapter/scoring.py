"""SQuAD-style EM/F1 used for best-epoch selection during training.

Internal to the adapter (the curation engine has its own scorer on the other
side of the wire); case fold, strip punctuation, whitespace tokens, max over
references.
"""

from __future__ import annotations

import unicodedata
from collections import Counter


def _tokens(text: str) -> list[str]:
    folded = text.casefold()
    kept = "".join(ch for ch in folded if not unicodedata.category(ch).startswith("P"))
    return kept.split()


def exact_match(pred: str, refs: list[str]) -> float:
    pred_tokens = _tokens(pred)
    return float(any(pred_tokens == _tokens(r) for r in refs))


def token_f1(pred: str, refs: list[str]) -> float:
    best = 0.0
    pred_tokens = _tokens(pred)
    for ref in refs:
        ref_tokens = _tokens(ref)
        if not pred_tokens and not ref_tokens:
            best = max(best, 1.0)
            continue
        if not pred_tokens or not ref_tokens:
            continue
        overlap = sum((Counter(pred_tokens) & Counter(ref_tokens)).values())
        if overlap == 0:
            continue
        precision = overlap / len(pred_tokens)
        recall = overlap / len(ref_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best
