"""Checkpoint adapters emitting sqaeval interchange files."""

from .qa import QaSample, emit_qa_logits, read_samples, read_squad_samples
from .spec import ModelRunnerError, ModelSpec
from .translate import DEFAULT_CHECKPOINTS, MarianTranslator, serve

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
