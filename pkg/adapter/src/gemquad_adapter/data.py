"""Record loading for training/validation URIs.

Accepts either the line-delimited record format (one JSON object per line with
id/context/question/answers) or a SQuAD-v1.1-shaped document; answers may carry
a `start`/`answer_start` char offset, recomputed by first occurrence when
missing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Example:
    id: str
    context: str
    question: str
    answers: tuple[tuple[str, int], ...]  # (text, char start); empty for unlabeled

    @property
    def first_answer(self) -> tuple[str, int] | None:
        return self.answers[0] if self.answers else None


def _answer(context: str, text: str, start) -> tuple[str, int] | None:
    if start is not None and context[start:start + len(text)] == text:
        return text, int(start)
    found = context.find(text)
    if found < 0:
        return None
    return text, found


def _from_row(row: dict) -> Example:
    answers = []
    for ans in row.get("answers", []):
        resolved = _answer(row["context"], ans["text"], ans.get("start", ans.get("answer_start")))
        if resolved:
            answers.append(resolved)
    return Example(id=str(row["id"]), context=row["context"], question=row["question"],
                   answers=tuple(answers))


def load_examples(uri: str | Path, limit: int | None = None) -> list[Example]:
    path = Path(uri)
    text = path.read_text(encoding="utf-8")
    out: list[Example] = []
    if text.lstrip().startswith("{") and '"data"' in text[:2000]:
        doc = json.loads(text)
        for article in doc["data"]:
            for para in article["paragraphs"]:
                for qa in para["qas"]:
                    out.append(_from_row({
                        "id": qa["id"], "context": para["context"],
                        "question": qa["question"], "answers": qa.get("answers", []),
                    }))
                    if limit and len(out) >= limit:
                        return out
    else:
        for line in text.splitlines():
            if not line.strip():
                continue
            out.append(_from_row(json.loads(line)))
            if limit and len(out) >= limit:
                return out
    return out
