"""Deterministic fixture builders shared across the test suite.

Everything here is a pure function of its arguments (shuffles use fixed
seeds), so tests that compare two runs byte-for-byte can rebuild identical
inputs. Contexts are constructed so that their first three tokens never
normalize to the record's answer, keeping the mock labeler's wrong span
genuinely wrong.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import yaml

from gemquad.corpus import Answer, Dataset, QARecord, SYNTHETIC, serialize_squad, write_jsonl
from gemquad.mock import MockScript

CITIES = ["Aveiro", "Bilbao", "Cusco", "Denia", "Evora", "Faro", "Gijon", "Huesca",
          "Irun", "Jaen", "Leon", "Merida", "Nerja", "Oviedo", "Palencia", "Quart",
          "Ronda", "Soria", "Teruel", "Ubeda"]
RIVERS = ["Duero", "Ebro", "Genil", "Jucar", "Mino", "Segura", "Tajo", "Turia"]


def gold_record(i: int, lang: str = "en") -> QARecord:
    city = CITIES[i % len(CITIES)]
    river = RIVERS[i % len(RIVERS)]
    context = (f"Article {i} begins here. The town of {city} number {i} grew along "
               f"the {river} river and is known for its market.")
    answer = f"{city} number {i}"
    return QARecord(
        id=f"{lang}-gold-{i}",
        lang=lang,
        context=context,
        question=f"Which town number {i} grew along the {river}?",
        answers=(Answer(text=answer, start=context.index(answer)),),
    )


def gold_dataset(n: int = 40, lang: str = "en", name: str = "gold") -> Dataset:
    return Dataset(name=name, records=tuple(gold_record(i, lang) for i in range(n)))


def squad50_with_duplicates() -> tuple[bytes, Dataset]:
    """50 records: 45 distinct plus 5 whitespace/case variants of the first 5.
    The variants keep valid offsets (answer text is cased consistently with
    its own context), so the file parses clean and dedup must remove exactly 5.
    """
    records = [gold_record(i) for i in range(45)]
    for j in range(5):
        base = records[j]
        context = base.context.upper()
        answer = base.answers[0].text.upper()
        dup = QARecord(
            id=f"en-dup-{j}",
            lang=base.lang,
            context=context,
            question="  " + base.question + "  ",
            answers=(Answer(text=answer, start=context.index(answer)),),
        )
        records.append(dup)
    ds = Dataset(name="squad50", records=tuple(records))
    return serialize_squad(ds), ds


def synthetic_record(i: int, lang: str = "hi", bad: bool = False) -> QARecord:
    city = CITIES[(i * 7) % len(CITIES)]
    river = RIVERS[(i * 3) % len(RIVERS)]
    context = (f"Sample passage {i} follows. Travelers reach {city} station {i} by the "
               f"old {river} bridge after the harvest festival.")
    answer = f"Lisbon dockyard {i}" if bad else f"{city} station {i}"
    return QARecord(
        id=f"{lang}-syn-{i}",
        lang=lang,
        context=context,
        question=f"Which station {i} do travelers reach by the {river} bridge?",
        answers=(Answer(text=answer, start=None),),
        source=SYNTHETIC,
    )


def candidates_with_bad_answers(n: int = 40, bad_at: tuple[int, ...] = (7, 19, 31),
                                lang: str = "hi") -> list[QARecord]:
    return [synthetic_record(i, lang=lang, bad=i in bad_at) for i in range(n)]


# -- deterministic end-to-end fixture ----------------------------------------

DIFFICULTY_BINS = ((0.10, 60), (0.40, 30), (0.50, 20), (0.57, 6), (0.585, 4), (0.90, 80))
SKILLS = (0.30, 0.45, 0.55, 0.58, 0.59)
EXPECTED_BATCHES = (60, 30, 20, 6, 4)


def e2e_candidates(lang: str = "hi") -> tuple[list[QARecord], dict[str, float], dict[str, str]]:
    """200 valid candidates with the difficulty histogram that makes skills
    SKILLS accept EXPECTED_BATCHES round by round."""
    total = sum(count for _, count in DIFFICULTY_BINS)
    records = [synthetic_record(i, lang=lang) for i in range(total)]
    values: list[float] = []
    for value, count in DIFFICULTY_BINS:
        values.extend([value] * count)
    random.Random(99).shuffle(values)
    difficulty = {rec.id: values[i] for i, rec in enumerate(records)}
    answers = {rec.id: rec.answers[0].text for rec in records}
    return records, difficulty, answers


def e2e_mock_script(lang: str = "hi") -> tuple[list[QARecord], MockScript]:
    records, difficulty, answers = e2e_candidates(lang)
    script = MockScript(skills=SKILLS, difficulty=difficulty, answers=answers)
    return records, script


def write_e2e_run_inputs(root: Path, lang: str = "hi",
                         master_seed: int = 13) -> tuple[Path, list[QARecord]]:
    """Materialize config + input files for a full mock `gemquad run`.
    Returns (config path, candidate records)."""
    root.mkdir(parents=True, exist_ok=True)
    records, script = e2e_mock_script(lang)
    script_path = root / "mock_script.json"
    script.to_file(script_path)

    synth_path = root / f"synthetic_{lang}.jsonl"
    write_jsonl(synth_path, records)

    gold = gold_dataset(40)
    gold_path = root / "gold.json"
    gold_path.write_bytes(serialize_squad(gold))

    validation_path = root / "validation.jsonl"
    write_jsonl(validation_path, [gold_record(i + 500) for i in range(8)])

    config = {
        "mode": "gemquad",
        "languages": [lang],
        "stage_order": [lang],
        "run_dir": "run",
        "datasets": {
            "gold": gold_path.name,
            "synthetic": {lang: synth_path.name},
            "validation": validation_path.name,
        },
        "backend": {
            "generate": {"base_url": f"mock:{script_path.name}"},
            "student": {"base_url": f"mock:{script_path.name}"},
        },
        "criteria": {"k": 2, "e": 0.005, "v": 0.01, "max_rounds": 5},
        "train": {"learning_rate": 2.0e-5, "batch_size": 8},
        "seeds": {"master": master_seed},
        "gold_subset_size": 24,
    }
    config_path = root / "config.yaml"
    config_path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    return config_path, records


def generation_script(lang: str = "es", n: int = 10,
                      malformed_at: tuple[int, ...] = ()) -> tuple[list[tuple[str, str]], MockScript]:
    """Scripted continuations for generate_pairs tests: well-formed
    "<question> Answer: <answer>" continuations, optionally malformed ones."""
    contexts = {}
    generation = {}
    pairs = []
    for i in range(n):
        rec = synthetic_record(i, lang=lang)
        cid = f"{lang}-ctx-{i}"
        contexts[cid] = rec.context
        if i in malformed_at:
            generation[cid] = "this continuation never names the fields"
        else:
            generation[cid] = f" {rec.question}\nAnswer: {rec.answers[0].text}"
        pairs.append((cid, rec.context))
    script = MockScript(generation=generation, contexts=contexts)
    return pairs, script


def write_squad(path: Path, ds: Dataset) -> Path:
    path.write_bytes(serialize_squad(ds))
    return path


def exemplar_pool_file(path: Path, lang: str = "es", n: int = 4) -> Path:
    records = []
    for i in range(n):
        rec = gold_record(i + 300, lang=lang)
        records.append(rec)
    write_jsonl(path, records)
    return path
