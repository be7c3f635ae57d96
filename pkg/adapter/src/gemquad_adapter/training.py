"""Sequential fine-tuning for the /v1/train endpoint.

Stages train strictly in request order from a fresh copy of the base
checkpoint, sharing one AdamW optimizer and one linear schedule over the total
planned steps. After every epoch the model is scored on the validation slice;
the best epoch's weights become the returned checkpoint.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import time

import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR
from transformers import AutoModelForQuestionAnswering, AutoTokenizer

from .config import AdapterConfig
from .data import Example, load_examples
from .models import ModelRegistry, SpanPredictor
from .scoring import exact_match, token_f1

logger = logging.getLogger(__name__)


class TrainRequestError(ValueError):
    """Maps to HTTP 400: the request cannot be honored."""


def _request_digest(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:10]


def _encode_example(tokenizer, example: Example, max_seq_len: int):
    answer = example.first_answer
    enc = tokenizer(example.question, example.context, truncation="only_second",
                    max_length=max_seq_len, padding="max_length",
                    return_offsets_mapping=True, return_tensors="pt")
    offsets = enc.pop("offset_mapping")[0].tolist()
    sequence_ids = enc.sequence_ids(0)
    start_pos = end_pos = 0
    if answer is not None:
        text, char_start = answer
        char_end = char_start + len(text)
        for i, (sid, (o_start, o_end)) in enumerate(zip(sequence_ids, offsets)):
            if sid != 1 or o_end <= o_start:
                continue
            if o_start <= char_start < o_end:
                start_pos = i
            if o_start < char_end <= o_end:
                end_pos = i
        if end_pos < start_pos:
            start_pos = end_pos = 0
    enc = {k: v[0] for k, v in enc.items()}
    enc["start_positions"] = torch.tensor(start_pos)
    enc["end_positions"] = torch.tensor(end_pos)
    return enc


def _batches(features: list[dict], batch_size: int):
    for lo in range(0, len(features), batch_size):
        chunk = features[lo:lo + batch_size]
        yield {k: torch.stack([f[k] for f in chunk]) for k in chunk[0]}


def _evaluate(predictor: SpanPredictor, examples: list[Example]) -> tuple[float, float]:
    if not examples:
        return 0.0, 0.0
    f1_total = em_total = 0.0
    for ex in examples:
        refs = [t for t, _ in ex.answers] or [""]
        pred, _ = predictor.predict(ex.context, ex.question)
        f1_total += token_f1(pred, refs)
        em_total += exact_match(pred, refs)
    return f1_total / len(examples), em_total / len(examples)


def run_training(cfg: AdapterConfig, registry: ModelRegistry, base_model: str,
                 stages: list[dict], hyperparams: dict, validation_uri: str) -> dict:
    if not stages:
        raise TrainRequestError("stages must be non-empty")
    optimizer_name = str(hyperparams.get("optimizer", "adamw")).lower()
    scheduler_name = str(hyperparams.get("scheduler", "linear")).lower()
    if optimizer_name != "adamw":
        raise TrainRequestError(f"unsupported optimizer {optimizer_name!r}; this service trains with adamw")
    if scheduler_name != "linear":
        raise TrainRequestError(f"unsupported scheduler {scheduler_name!r}; this service uses a linear schedule")
    learning_rate = float(hyperparams.get("learning_rate", 2e-5))
    batch_size = int(hyperparams.get("batch_size", 8))
    if learning_rate <= 0 or batch_size < 1:
        raise TrainRequestError("learning_rate must be positive and batch_size >= 1")

    started = time.monotonic()
    stage_data: list[tuple[str, list[Example], int]] = []
    for stage in stages:
        try:
            name = stage["name"]
            uri = stage["records_uri"]
            epochs = min(int(stage["epochs"]), cfg.max_epochs)
        except (KeyError, TypeError) as exc:
            raise TrainRequestError(f"stage missing field: {exc}") from exc
        if epochs < 1:
            raise TrainRequestError(f"stage {name}: epochs must be >= 1")
        try:
            examples = load_examples(uri, limit=cfg.max_train_examples)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise TrainRequestError(f"stage {name}: cannot read {uri}: {exc}") from exc
        if not examples:
            raise TrainRequestError(f"stage {name}: {uri} holds no records")
        stage_data.append((name, examples, epochs))
    try:
        validation = load_examples(validation_uri, limit=cfg.max_eval_examples)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise TrainRequestError(f"cannot read validation_uri {validation_uri}: {exc}") from exc

    base_path = registry.checkpoint_path_for_base(base_model)
    tokenizer = AutoTokenizer.from_pretrained(base_path)
    model = AutoModelForQuestionAnswering.from_pretrained(base_path)
    model.to(cfg.device)

    total_steps = sum(epochs * math.ceil(len(examples) / batch_size)
                      for _, examples, epochs in stage_data)
    optimizer = AdamW(model.parameters(), lr=learning_rate)
    scheduler = LambdaLR(optimizer, lambda step: max(0.0, 1.0 - step / max(1, total_steps)))

    predictor = SpanPredictor(model, tokenizer, cfg)
    best = {"f1": -1.0, "em": 0.0, "state": None}

    def checkpoint_if_best():
        model.eval()
        f1, em = _evaluate(predictor, validation)
        if f1 > best["f1"]:
            best.update(f1=f1, em=em,
                        state=copy.deepcopy({k: v.cpu() for k, v in model.state_dict().items()}))
        return f1, em

    steps_run = 0
    for name, examples, epochs in stage_data:
        features = [_encode_example(tokenizer, ex, cfg.max_seq_len) for ex in examples]
        for epoch in range(epochs):
            model.train()
            for batch in _batches(features, batch_size):
                if time.monotonic() - started > cfg.train_timeout_seconds:
                    raise TrainRequestError("training exceeded the server-side time cap")
                batch = {k: v.to(cfg.device) for k, v in batch.items()}
                loss = model(**batch).loss
                loss.backward()
                optimizer.step()
                scheduler.step()
                optimizer.zero_grad()
                steps_run += 1
            f1, em = checkpoint_if_best()
            logger.info("stage %s epoch %d/%d: val f1=%.4f em=%.4f",
                        name, epoch + 1, epochs, f1, em)

    if best["state"] is not None:
        model.load_state_dict(best["state"])
    model.eval()

    model_id = "ft-" + _request_digest({
        "base_model": base_model, "stages": stages, "hyperparams": hyperparams,
        "validation_uri": validation_uri,
    })
    out_dir = cfg.checkpoint_path(model_id)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    registry.register(model_id, SpanPredictor(model, tokenizer, cfg))
    logger.info("trained %s: %d steps, best val f1=%.4f em=%.4f",
                model_id, steps_run, best["f1"], best["em"])
    return {"model": model_id, "steps": steps_run,
            "val": {"f1": max(best["f1"], 0.0), "em": best["em"]}}
