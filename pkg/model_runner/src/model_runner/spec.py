"""Run configuration for checkpoint inference."""

from __future__ import annotations

from dataclasses import dataclass, field


class ModelRunnerError(Exception):
    """Any configuration, checkpoint, or data problem this package detects."""


@dataclass(frozen=True)
class ModelSpec:
    """Which checkpoint to run and how.

    A checkpoint containing "{seed}" is templated per seed so independently
    trained checkpoints can form an ensemble; otherwise the single checkpoint
    is replicated across all requested seed ids.
    """

    checkpoint: str
    device: str = "cpu"
    batch_size: int = 8
    seeds: tuple[str, ...] = ("0",)
    max_seq_length: int = 384
    doc_stride: int = 128

    def __post_init__(self) -> None:
        if not self.checkpoint:
            raise ModelRunnerError("checkpoint is empty")
        if not self.seeds:
            raise ModelRunnerError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ModelRunnerError("seed list has duplicates")
        if any(not s for s in self.seeds):
            raise ModelRunnerError("seed ids must be non-empty")
        if self.batch_size < 1:
            raise ModelRunnerError(f"batch_size must be positive, got {self.batch_size}")
        if self.max_seq_length < 32:
            raise ModelRunnerError(
                f"max_seq_length must be at least 32, got {self.max_seq_length}"
            )
        if not 0 <= self.doc_stride < self.max_seq_length:
            raise ModelRunnerError(
                f"doc_stride must be in [0, max_seq_length), got {self.doc_stride}"
            )

    def checkpoint_for(self, seed: str) -> str:
        return self.checkpoint.replace("{seed}", seed)

    @property
    def is_templated(self) -> bool:
        return "{seed}" in self.checkpoint
