"""Extractive-QA inference writing the logits interchange format.

One interchange record per (sample, seed): a no-answer sentinel at position 0
followed by the passage tokens with character offsets into the passage.
Passages longer than the sequence budget are run as overlapping windows and
merged by per-position maximum score.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .spec import ModelRunnerError, ModelSpec

logger = logging.getLogger(__name__)

LOGITS_VERSION = 1
SENTINEL_TEXT = "[CLS]"


@dataclass(frozen=True)
class QaSample:
    id: str
    question: str
    passage: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ModelRunnerError("sample id is empty")


def read_samples(path: str | Path) -> list[QaSample]:
    """Load {"id", "question", "passage"} JSONL."""
    samples = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ModelRunnerError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            if not isinstance(payload, dict) or set(payload) != {"id", "question", "passage"}:
                raise ModelRunnerError(
                    f"{path}:{lineno}: expected exactly id, question, passage fields"
                )
            samples.append(QaSample(payload["id"], payload["question"], payload["passage"]))
    _require_unique_ids(samples)
    return samples


def read_squad_samples(path: str | Path) -> list[QaSample]:
    """Flatten a SQuAD 2.0 style JSON file into (id, question, passage) samples."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    try:
        articles = payload["data"]
    except (TypeError, KeyError) as exc:
        raise ModelRunnerError(f"{path}: not a SQuAD file: missing data") from exc
    samples = []
    for article in articles:
        for paragraph in article["paragraphs"]:
            context = paragraph["context"]
            for qa in paragraph["qas"]:
                samples.append(QaSample(qa["id"], qa["question"], context))
    _require_unique_ids(samples)
    return samples


def _require_unique_ids(samples: Sequence[QaSample]) -> None:
    seen = set()
    for sample in samples:
        if sample.id in seen:
            raise ModelRunnerError(f"duplicate sample id {sample.id!r}")
        seen.add(sample.id)


def _load_model(checkpoint: str, device: str):
    import torch
    from transformers import AutoModelForQuestionAnswering, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        model = AutoModelForQuestionAnswering.from_pretrained(checkpoint)
    except Exception as exc:
        raise ModelRunnerError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
    if not getattr(tokenizer, "is_fast", False):
        raise ModelRunnerError(
            f"checkpoint {checkpoint!r} has no fast tokenizer; character offsets require one"
        )
    model.to(torch.device(device))
    model.eval()
    return tokenizer, model


def _encode_windows(tokenizer, sample: QaSample, spec: ModelSpec):
    """Tokenize one question/passage pair into overlapping windows."""
    question_len = len(tokenizer(sample.question, add_special_tokens=False)["input_ids"])
    # room left for passage tokens after question plus [CLS] and two [SEP]
    budget = spec.max_seq_length - question_len - 3
    if budget < 1:
        raise ModelRunnerError(
            f"sample {sample.id}: question occupies the whole sequence budget"
        )
    stride = min(spec.doc_stride, budget - 1)
    return tokenizer(
        sample.question,
        sample.passage,
        truncation="only_second",
        max_length=spec.max_seq_length,
        stride=stride,
        return_overflowing_tokens=True,
        return_offsets_mapping=True,
    )


def _window_logits(model, device: str, encoding, batch_size: int, pad_id: int):
    """Start/end logits per window, batched, padded manually."""
    import torch

    all_start: list[list[float]] = []
    all_end: list[list[float]] = []
    windows = encoding["input_ids"]
    for lo in range(0, len(windows), batch_size):
        chunk = windows[lo : lo + batch_size]
        masks = encoding["attention_mask"][lo : lo + batch_size]
        width = max(len(ids) for ids in chunk)
        ids = torch.tensor(
            [list(w) + [pad_id] * (width - len(w)) for w in chunk], device=device
        )
        mask = torch.tensor(
            [list(m) + [0] * (width - len(m)) for m in masks], device=device
        )
        with torch.no_grad():
            out = model(input_ids=ids, attention_mask=mask)
        for row in range(len(chunk)):
            n = len(chunk[row])
            all_start.append([float(v) for v in out.start_logits[row][:n]])
            all_end.append([float(v) for v in out.end_logits[row][:n]])
    return all_start, all_end


def _merge_windows(sample: QaSample, encoding, start_rows, end_rows) -> dict:
    """Per-position max over windows, keyed by passage character offsets."""
    sentinel_start = max(row[0] for row in start_rows)
    sentinel_end = max(row[0] for row in end_rows)
    merged: dict[tuple[int, int], list[float]] = {}
    for w in range(len(start_rows)):
        sequence_ids = encoding.sequence_ids(w)
        offsets = encoding["offset_mapping"][w]
        for pos, seq in enumerate(sequence_ids):
            if seq != 1:
                continue
            key = (offsets[pos][0], offsets[pos][1])
            scores = merged.setdefault(key, [float("-inf"), float("-inf")])
            scores[0] = max(scores[0], start_rows[w][pos])
            scores[1] = max(scores[1], end_rows[w][pos])

    tokens = [{"text": SENTINEL_TEXT, "start": None, "end": None}]
    start_scores = [sentinel_start]
    end_scores = [sentinel_end]
    for (char_start, char_end) in sorted(merged):
        tokens.append(
            {
                "text": sample.passage[char_start:char_end],
                "start": char_start,
                "end": char_end,
            }
        )
        start_scores.append(merged[(char_start, char_end)][0])
        end_scores.append(merged[(char_start, char_end)][1])
    return {
        "version": LOGITS_VERSION,
        "sample_id": sample.id,
        "tokens": tokens,
        "start_scores": start_scores,
        "end_scores": end_scores,
    }


def emit_qa_logits(spec: ModelSpec, samples: Sequence[QaSample], path: str | Path) -> int:
    """Run every sample under every seed and write interchange JSONL.

    Returns the number of records written. Output order is input sample order,
    seeds in spec order within each sample, so a fixed checkpoint and seed list
    always produce byte-identical files.
    """
    _require_unique_ids(samples)
    by_key: dict[tuple[str, str], dict] = {}
    for seed in spec.seeds:
        tokenizer, model = _load_model(spec.checkpoint_for(seed), spec.device)
        for sample in samples:
            encoding = _encode_windows(tokenizer, sample, spec)
            n_windows = len(encoding["input_ids"])
            if n_windows > 1:
                logger.warning(
                    "sample %s exceeds the sequence budget, ran as %d windows",
                    sample.id,
                    n_windows,
                )
            start_rows, end_rows = _window_logits(
                model, spec.device, encoding, spec.batch_size,
                tokenizer.pad_token_id or 0,
            )
            record = _merge_windows(sample, encoding, start_rows, end_rows)
            record["seed_id"] = seed
            by_key[(sample.id, seed)] = record

    lines = []
    for sample in samples:
        for seed in spec.seeds:
            record = by_key[(sample.id, seed)]
            ordered = {
                "version": record["version"],
                "sample_id": record["sample_id"],
                "seed_id": record["seed_id"],
                "tokens": record["tokens"],
                "start_scores": record["start_scores"],
                "end_scores": record["end_scores"],
            }
            lines.append(json.dumps(ordered, ensure_ascii=False, separators=(",", ":")))
    with open(path, "w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line)
            handle.write("\n")
    return len(lines)
