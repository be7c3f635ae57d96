from __future__ import annotations

import random

import pytest

from gemquad.errors import BackendError, ConfigError, TemplateError
from gemquad.mock import MockBackend
from gemquad.promptgen import (
    EMPTY_FIELD,
    NO_ANSWER_MARKER,
    NO_QUESTION_MARKER,
    TRUNCATED,
    PromptTemplate,
    SamplingConfig,
    build_prompt,
    draw_sampling_config,
    generate_pairs,
    load_template,
    parse_generation,
    request_seed,
)
from gemquad.corpus import Answer, ExemplarPool, QARecord

import fixtures

TMPL = PromptTemplate()


def _exemplar(lang="es"):
    return fixtures.gold_record(300, lang=lang)


def test_prompt_structure_and_order():
    exemplar = _exemplar()
    prompt = build_prompt(TMPL, exemplar, "Nuevo contexto de prueba.")
    assert prompt.count("[CLM]") == 1
    assert prompt.index("[CLM]") < prompt.index(exemplar.context)
    assert prompt.index(exemplar.context) < prompt.index("Nuevo contexto de prueba.")
    q_pos = prompt.index(TMPL.label_question)
    a_pos = prompt.index(TMPL.label_answer)
    assert q_pos < a_pos
    assert prompt.index(exemplar.question, q_pos) < a_pos
    assert prompt.index(exemplar.answers[0].text, a_pos) > a_pos
    assert prompt.rstrip().endswith(TMPL.label_question)


def test_prompt_deterministic():
    exemplar = _exemplar()
    assert build_prompt(TMPL, exemplar, "ctx") == build_prompt(TMPL, exemplar, "ctx")


def test_prompt_requires_answer_and_labels():
    no_answer = QARecord(id="x", lang="es", context="c", question="q?",
                         answers=(), source="synthetic")
    with pytest.raises(TemplateError):
        build_prompt(TMPL, no_answer, "ctx")
    with pytest.raises(TemplateError):
        build_prompt(PromptTemplate(label_answer=""), _exemplar(), "ctx")


def test_template_file_roundtrip(tmp_path):
    path = tmp_path / "template.yaml"
    path.write_text(
        "cl_token: '[CLM]'\ninstruction: Responde.\nlabel_context: 'Contexto:'\n"
        "label_question: 'Pregunta:'\nlabel_answer: 'Respuesta:'\n",
        encoding="utf-8")
    tmpl = load_template(path)
    assert tmpl.label_question == "Pregunta:"
    prompt = build_prompt(tmpl, _exemplar(), "ctx")
    assert "Pregunta:" in prompt


def test_sampling_ranges_enforced():
    with pytest.raises(ConfigError):
        SamplingConfig(top_k=49, top_p=0.9)
    with pytest.raises(ConfigError):
        SamplingConfig(top_k=50, top_p=0.96)
    cfg = SamplingConfig(top_k=100, top_p=0.5)
    assert cfg.do_sample is True
    assert cfg.temperature == 0.9
    assert cfg.max_length == 50


def test_draw_sampling_config_ranges_and_mean():
    rng = random.Random(4)
    draws = [draw_sampling_config(rng) for _ in range(10_000)]
    assert all(50 <= d.top_k <= 100 for d in draws)
    assert all(0.5 <= d.top_p <= 0.95 for d in draws)
    mean_top_k = sum(d.top_k for d in draws) / len(draws)
    assert 73 <= mean_top_k <= 77
    mean_top_p = sum(d.top_p for d in draws) / len(draws)
    assert 0.71 <= mean_top_p <= 0.74


def test_draw_sampling_config_deterministic():
    a = [draw_sampling_config(random.Random(9)) for _ in range(20)]
    b = [draw_sampling_config(random.Random(9)) for _ in range(20)]
    assert a == b


def test_parse_well_formed_with_labels():
    out = parse_generation("Question: ¿Dónde está X? Answer: en Madrid", TMPL)
    assert out.parsed == ("¿Dónde está X?", "en Madrid")


def test_parse_bare_continuation_after_cue():
    out = parse_generation(" ¿Dónde está X?\nAnswer: en Madrid\n", TMPL)
    assert out.parsed == ("¿Dónde está X?", "en Madrid")


def test_parse_missing_answer_label():
    out = parse_generation("Question: ¿Dónde está X? en Madrid", TMPL)
    assert out.failure == NO_ANSWER_MARKER


def test_parse_empty_answer():
    out = parse_generation("Question: ¿Dónde? Answer:   ", TMPL)
    assert out.failure == EMPTY_FIELD


def test_parse_empty_question():
    out = parse_generation("Question:  Answer: algo", TMPL)
    assert out.failure == EMPTY_FIELD


def test_parse_pattern_restart_is_no_question_marker():
    out = parse_generation("Context: otro párrafo inventado Answer: algo", TMPL)
    assert out.failure == NO_QUESTION_MARKER


def test_parse_truncated_answer_label():
    out = parse_generation("¿Dónde está X? Answ", TMPL)
    assert out.failure == TRUNCATED


def test_parse_cuts_answer_at_next_block():
    raw = "¿Dónde está X? Answer: en Madrid\nContext: y sigue generando"
    out = parse_generation(raw, TMPL)
    assert out.parsed == ("¿Dónde está X?", "en Madrid")


def test_generate_pairs_against_mock():
    pairs, script = fixtures.generation_script(n=10)
    pool = ExemplarPool(lang="es", exemplars=tuple(fixtures.gold_record(i + 300, lang="es")
                                                   for i in range(4)))
    result = generate_pairs(pairs, pool, MockBackend(script), TMPL, master_seed=13)
    assert len(result.records) == 10
    assert not result.failures
    pool_ids = {e.id for e in pool.exemplars}
    for rec, (cid, text) in zip(result.records, pairs):
        assert rec.id == f"syn-{cid}"
        assert rec.context == text
        assert rec.gen_meta is not None
        assert rec.gen_meta.exemplar_id in pool_ids
        assert rec.answers[0].start is None
        assert rec.source == "synthetic"


def test_generate_pairs_logs_malformed_continuations():
    pairs, script = fixtures.generation_script(n=10, malformed_at=(4,))
    pool = ExemplarPool(lang="es", exemplars=(fixtures.gold_record(300, lang="es"),))
    result = generate_pairs(pairs, pool, MockBackend(script), TMPL, master_seed=13)
    assert len(result.records) == 9
    assert len(result.failures) == 1
    assert result.failures[0].context_id == "es-ctx-4"
    assert result.failures[0].failure == NO_ANSWER_MARKER


def test_generate_pairs_empty_input():
    pool = ExemplarPool(lang="es", exemplars=(fixtures.gold_record(300, lang="es"),))
    result = generate_pairs([], pool, MockBackend(fixtures.generation_script(1)[1]), TMPL)
    assert result.records == []
    assert result.failures == []


def test_generate_pairs_reproducible_and_order_stable():
    pairs, script = fixtures.generation_script(n=8)
    pool = ExemplarPool(lang="es", exemplars=tuple(fixtures.gold_record(i + 300, lang="es")
                                                   for i in range(4)))
    a = generate_pairs(pairs, pool, MockBackend(script), TMPL, master_seed=21)
    b = generate_pairs(pairs, pool, MockBackend(script), TMPL, master_seed=21, concurrency=4)
    assert a.records == b.records
    c = generate_pairs(pairs, pool, MockBackend(script), TMPL, master_seed=22)
    assert [r.gen_meta.sampling for r in a.records] != [r.gen_meta.sampling for r in c.records]


def test_request_seed_is_stable():
    assert request_seed(13, "ctx-1") == request_seed(13, "ctx-1")
    assert request_seed(13, "ctx-1") != request_seed(13, "ctx-2")
    assert request_seed(13, "ctx-1") != request_seed(14, "ctx-1")


def test_generate_pairs_persists_prefix_on_backend_error():
    pairs, script = fixtures.generation_script(n=5)
    broken = dict(script.generation)
    del broken[pairs[3][0]]
    script = type(script)(generation=broken, contexts=script.contexts)
    pool = ExemplarPool(lang="es", exemplars=(fixtures.gold_record(300, lang="es"),))
    flushed = []
    with pytest.raises(BackendError):
        generate_pairs(pairs, pool, MockBackend(script), TMPL, master_seed=13,
                       on_record=flushed.append)
    assert [r.id for r in flushed] == [f"syn-{pairs[i][0]}" for i in range(3)]


def test_pairs_per_context_extension():
    pairs, script = fixtures.generation_script(n=4)
    pool = ExemplarPool(lang="es", exemplars=tuple(fixtures.gold_record(i + 300, lang="es")
                                                   for i in range(4)))
    result = generate_pairs(pairs, pool, MockBackend(script), TMPL, master_seed=3,
                            pairs_per_context=2)
    assert len(result.records) == 8
    ids = [r.id for r in result.records]
    assert ids[0] == "syn-es-ctx-0"
    assert ids[1] == "syn-es-ctx-0#1"
    assert len(set(ids)) == 8
    # extra pairs draw their own sampling configs
    assert (result.records[0].gen_meta.sampling != result.records[1].gen_meta.sampling)
