from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class AdapterConfig:
    """Service configuration. The caps keep a demo training call in the
    minutes range on a laptop CPU."""

    generator_model: str = "google/mt5-small"
    student_model: str = "xlm-roberta-base"
    device: str = "cpu"
    checkpoint_dir: str = "adapter_checkpoints"
    max_train_examples: int = 2000      # per stage
    max_eval_examples: int = 300        # validation slice used for best-epoch selection
    max_epochs: int = 8                 # hard cap regardless of requested epochs
    max_seq_len: int = 384
    max_answer_tokens: int = 30
    max_prompt_tokens: int = 640
    train_timeout_seconds: float = 1800.0

    def checkpoint_path(self, model_id: str) -> Path:
        return Path(self.checkpoint_dir) / model_id
