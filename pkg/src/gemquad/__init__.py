"""gemquad: semi-supervised curation of synthetic extractive-QA data.

Generate Q&A pairs with 1-shot in-context prompts against a teacher backend,
filter them round by round with an improving weak labeler, and drive
sequential student fine-tuning under a global step budget with explicit
stopping criteria.
"""

__version__ = "0.1.0"

from .corpus import Answer, Dataset, ExemplarPool, GenerationMeta, QARecord  # noqa: F401
from .errors import GemquadError  # noqa: F401
