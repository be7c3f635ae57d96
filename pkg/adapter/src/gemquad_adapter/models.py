"""Model wrappers: a seq2seq generator and an extractive-QA student.

Span prediction works on token offsets from a fast tokenizer, so every
returned answer is, by construction, the exact context substring at the
returned char offset. No document striding: contexts are truncated at
max_seq_len, which is fine at demo scale.
"""

from __future__ import annotations

import logging
import threading

import torch
from transformers import (
    AutoModelForQuestionAnswering,
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
)

from .config import AdapterConfig

logger = logging.getLogger(__name__)


class Generator:
    def __init__(self, cfg: AdapterConfig):
        self.cfg = cfg
        self.tokenizer = AutoTokenizer.from_pretrained(cfg.generator_model)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(cfg.generator_model)
        self.model.to(cfg.device)
        self.model.eval()
        self._lock = threading.Lock()  # guards the global torch RNG during sampling

    def generate(self, prompt: str, sampling: dict, seed: int) -> str:
        inputs = self.tokenizer(prompt, return_tensors="pt", truncation=True,
                                max_length=self.cfg.max_prompt_tokens).to(self.cfg.device)
        max_new = int(sampling.get("max_length", 50))
        kwargs = dict(
            do_sample=bool(sampling.get("do_sample", True)),
            max_new_tokens=max_new,
            pad_token_id=self.tokenizer.pad_token_id or self.tokenizer.eos_token_id,
        )
        if kwargs["do_sample"]:
            kwargs.update(
                temperature=float(sampling.get("temperature", 0.9)),
                top_k=int(sampling.get("top_k", 50)),
                top_p=float(sampling.get("top_p", 0.95)),
            )
        with self._lock, torch.no_grad():
            torch.manual_seed(seed)
            output = self.model.generate(**inputs, **kwargs)
        return self.tokenizer.decode(output[0], skip_special_tokens=True)


class SpanPredictor:
    """Extractive-QA inference for one loaded checkpoint."""

    def __init__(self, model, tokenizer, cfg: AdapterConfig):
        self.model = model
        self.tokenizer = tokenizer
        self.cfg = cfg
        self.model.to(cfg.device)
        self.model.eval()

    @classmethod
    def from_pretrained(cls, path: str, cfg: AdapterConfig) -> "SpanPredictor":
        return cls(AutoModelForQuestionAnswering.from_pretrained(path),
                   AutoTokenizer.from_pretrained(path), cfg)

    def predict(self, context: str, question: str) -> tuple[str, int]:
        enc = self.tokenizer(question, context, return_tensors="pt", truncation="only_second",
                             max_length=self.cfg.max_seq_len,
                             return_offsets_mapping=True)
        offsets = enc.pop("offset_mapping")[0].tolist()
        sequence_ids = enc.sequence_ids(0)
        enc = {k: v.to(self.cfg.device) for k, v in enc.items()}
        with torch.no_grad():
            out = self.model(**enc)
        start_logits = out.start_logits[0]
        end_logits = out.end_logits[0]

        valid = [i for i, sid in enumerate(sequence_ids)
                 if sid == 1 and offsets[i][1] > offsets[i][0]]
        if not valid:
            return context[:1] or context, 0
        valid_set = set(valid)
        best = None
        for s in valid:
            for e in range(s, min(s + self.cfg.max_answer_tokens, len(offsets))):
                if e not in valid_set:
                    continue
                score = float(start_logits[s] + end_logits[e])
                if best is None or score > best[0]:
                    best = (score, s, e)
        _, s, e = best
        char_start, char_end = offsets[s][0], offsets[e][1]
        text = context[char_start:char_end]
        if not text.strip():
            char_start, char_end = offsets[valid[0]]
            text = context[char_start:char_end]
        return text, char_start


class ModelRegistry:
    """Maps model ids to loaded predictors. `base` (and any unrecognized base
    id sent by a client) resolves to the configured student checkpoint;
    trained ids are registered by the trainer and reloadable from disk."""

    BASE_ID = "base"

    def __init__(self, cfg: AdapterConfig):
        self.cfg = cfg
        self._lock = threading.Lock()
        self._predictors: dict[str, SpanPredictor] = {}

    def base(self) -> SpanPredictor:
        return self._load(self.BASE_ID, self.cfg.student_model)

    def _load(self, model_id: str, path: str) -> SpanPredictor:
        with self._lock:
            if model_id not in self._predictors:
                logger.info("loading student checkpoint %s from %s", model_id, path)
                self._predictors[model_id] = SpanPredictor.from_pretrained(path, self.cfg)
            return self._predictors[model_id]

    def register(self, model_id: str, predictor: SpanPredictor) -> None:
        with self._lock:
            self._predictors[model_id] = predictor

    def resolve(self, model_id: str) -> SpanPredictor | None:
        with self._lock:
            if model_id in self._predictors:
                return self._predictors[model_id]
        checkpoint = self.cfg.checkpoint_path(model_id)
        if checkpoint.is_dir():
            return self._load(model_id, str(checkpoint))
        if model_id == self.BASE_ID:
            return self.base()
        return None

    def checkpoint_path_for_base(self, model_id: str) -> str:
        """Path a trainer should load a fresh copy from. Unknown base ids fall
        back to the configured student so curation clients can name their base
        freely; registered predictors are never fine-tuned in place."""
        checkpoint = self.cfg.checkpoint_path(model_id)
        if checkpoint.is_dir():
            return str(checkpoint)
        if model_id not in (self.BASE_ID, self.cfg.student_model):
            logger.info("base model %r unknown; using the configured student base", model_id)
        return self.cfg.student_model

    def known_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._predictors)
