"""Reference backend for the gemquad wire protocol, wrapping small
transformers checkpoints for desk-scale live demos."""

__version__ = "0.1.0"
