"""Span decoding over per-token scores, seed ensembling, and the score file format.

Score files are line-delimited JSON. Position 0 of every score row is a
sentinel with no character offsets; its start+end score is the no-answer
score. All other tokens carry half-open character offsets into the passage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import ValidationError

LOGITS_FORMAT_VERSION = 1
PREDICTIONS_FORMAT_VERSION = 1

DEFAULT_MAX_ANSWER_TOKENS = 30
DEFAULT_NULL_THRESHOLD = 0.0

ENSEMBLE_SEED_ID = "ensemble"


@dataclass(frozen=True)
class Token:
    """A scored token; offsets are half-open into the passage, None marks the sentinel."""

    text: str
    char_start: int | None
    char_end: int | None


@dataclass(frozen=True)
class TokenLogits:
    """Start and end scores for every token of one sample under one seed."""

    sample_id: str
    seed_id: str
    tokens: tuple[Token, ...]
    start_scores: tuple[float, ...]
    end_scores: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise ValidationError(f"sample {self.sample_id}: no tokens")
        if len(self.start_scores) != n or len(self.end_scores) != n:
            raise ValidationError(
                f"sample {self.sample_id}: token and score lengths disagree"
            )
        sentinel = self.tokens[0]
        if sentinel.char_start is not None or sentinel.char_end is not None:
            raise ValidationError(
                f"sample {self.sample_id}: token 0 must be the offsetless sentinel"
            )
        previous_end = 0
        for k, token in enumerate(self.tokens[1:], start=1):
            if token.char_start is None or token.char_end is None:
                raise ValidationError(
                    f"sample {self.sample_id}: tokens[{k}] is missing offsets"
                )
            if token.char_end <= token.char_start:
                raise ValidationError(
                    f"sample {self.sample_id}: tokens[{k}] has an empty char range"
                )
            if token.char_start < previous_end:
                raise ValidationError(
                    f"sample {self.sample_id}: tokens[{k}] overlaps its predecessor"
                )
            previous_end = token.char_end
        for name, scores in (("start", self.start_scores), ("end", self.end_scores)):
            for k, value in enumerate(scores):
                if not math.isfinite(value):
                    raise ValidationError(
                        f"sample {self.sample_id}: {name}_scores[{k}] is not finite"
                    )


@dataclass(frozen=True)
class SpanPrediction:
    """A decoded answer; word_span and char_span are None for no-answer.

    score is always the best span score seen (the spans lost to the no-answer
    decision are still informative); degenerate marks samples whose score rows
    held only the sentinel.
    """

    sample_id: str
    word_span: tuple[int, int] | None
    char_span: tuple[int, int] | None
    score: float
    null_score: float
    degenerate: bool = False


def softmax(scores: Sequence[float]) -> list[float]:
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = math.fsum(exps)
    return [e / total for e in exps]


def ensemble(runs: Sequence[TokenLogits]) -> TokenLogits:
    """Average the per-seed score distributions into one probability row.

    Each seed's start and end scores are normalized with softmax first, so
    seeds contribute equally regardless of their score scale.
    """
    if not runs:
        raise ValidationError("cannot ensemble zero runs")
    head = runs[0]
    seen_seeds: set[str] = set()
    for run in runs:
        if run.sample_id != head.sample_id:
            raise ValidationError(
                f"cannot ensemble across samples {head.sample_id} and {run.sample_id}"
            )
        if run.tokens != head.tokens:
            raise ValidationError(
                f"sample {head.sample_id}: seed {run.seed_id} tokenized differently"
            )
        if run.seed_id in seen_seeds:
            raise ValidationError(
                f"sample {head.sample_id}: duplicate seed {run.seed_id}"
            )
        seen_seeds.add(run.seed_id)

    n = len(head.tokens)
    start_probs = [softmax(run.start_scores) for run in runs]
    end_probs = [softmax(run.end_scores) for run in runs]
    start_mean = tuple(math.fsum(p[k] for p in start_probs) / len(runs) for k in range(n))
    end_mean = tuple(math.fsum(p[k] for p in end_probs) / len(runs) for k in range(n))
    return TokenLogits(head.sample_id, ENSEMBLE_SEED_ID, head.tokens, start_mean, end_mean)


def decode_span(
    logits: TokenLogits,
    max_answer_tokens: int = DEFAULT_MAX_ANSWER_TOKENS,
    null_threshold: float = DEFAULT_NULL_THRESHOLD,
) -> SpanPrediction:
    """Best start/end pair by summed score, against the no-answer sentinel.

    Ties keep the earliest start, then the earliest end. The prediction is
    no-answer when null_score + null_threshold >= the best span score.
    """
    if max_answer_tokens < 1:
        raise ValidationError(f"max_answer_tokens must be positive, got {max_answer_tokens}")
    start, end = logits.start_scores, logits.end_scores
    null_score = start[0] + end[0]
    n = len(logits.tokens)
    if n == 1:
        return SpanPrediction(
            logits.sample_id, None, None, null_score, null_score, degenerate=True
        )

    best_score = -math.inf
    best_pair: tuple[int, int] | None = None
    for s in range(1, n):
        limit = min(n - 1, s + max_answer_tokens - 1)
        for e in range(s, limit + 1):
            candidate = start[s] + end[e]
            if candidate > best_score:
                best_score = candidate
                best_pair = (s, e)

    assert best_pair is not None
    if null_score + null_threshold >= best_score:
        return SpanPrediction(logits.sample_id, None, None, best_score, null_score)
    s, e = best_pair
    char_span = (logits.tokens[s].char_start, logits.tokens[e].char_end)
    return SpanPrediction(logits.sample_id, None, char_span, best_score, null_score)


def word_char_offsets(words: Sequence[str]) -> list[tuple[int, int]]:
    """Half-open character ranges of each word in the single-space joined passage."""
    offsets = []
    cursor = 0
    for word in words:
        offsets.append((cursor, cursor + len(word)))
        cursor += len(word) + 1
    return offsets


def tokens_to_words(char_span: tuple[int, int], words: Sequence[str]) -> tuple[int, int]:
    """Smallest word-index span covering every word the char span touches."""
    cs, ce = char_span
    touched = [
        index
        for index, (ws, we) in enumerate(word_char_offsets(words))
        if ws < ce and cs < we
    ]
    if not touched:
        raise ValidationError(f"char span [{cs}, {ce}) touches no words")
    return touched[0], touched[-1]


def resolve_word_span(pred: SpanPrediction, words: Sequence[str]) -> SpanPrediction:
    if pred.char_span is None:
        return pred
    return replace(pred, word_span=tokens_to_words(pred.char_span, words))


def prediction_text(pred: SpanPrediction, passage: str) -> str:
    if pred.char_span is None:
        return ""
    cs, ce = pred.char_span
    if not 0 <= cs <= ce <= len(passage):
        raise ValidationError(f"char span [{cs}, {ce}) exceeds passage length {len(passage)}")
    return passage[cs:ce]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_LOGITS_FIELDS = {"version", "sample_id", "seed_id", "tokens", "start_scores", "end_scores"}
_TOKEN_FIELDS = {"text", "start", "end"}


def read_logits(path: str | Path) -> list[TokenLogits]:
    runs: list[TokenLogits] = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {line_no}: invalid JSON: {exc}") from exc
            runs.append(_parse_logits(payload, line_no))
            key = (runs[-1].sample_id, runs[-1].seed_id)
            if key in seen:
                raise ValidationError(
                    f"line {line_no}: duplicate sample/seed pair {key!r}"
                )
            seen.add(key)
    return runs


def _parse_logits(payload: object, line_no: int) -> TokenLogits:
    where = f"line {line_no}"
    if not isinstance(payload, dict):
        raise ValidationError(f"{where}: record must be a JSON object")
    unknown = set(payload) - _LOGITS_FIELDS
    if unknown:
        raise ValidationError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    if payload.get("version") != LOGITS_FORMAT_VERSION:
        raise ValidationError(f"{where}: missing or unsupported version")
    for field_name in ("sample_id", "seed_id", "tokens", "start_scores", "end_scores"):
        if field_name not in payload:
            raise ValidationError(f"{where}: field {field_name!r} is missing")
    tokens: list[Token] = []
    for k, raw in enumerate(payload["tokens"]):
        if not isinstance(raw, dict) or set(raw) != _TOKEN_FIELDS:
            raise ValidationError(f"{where}: tokens[{k}] must have fields text/start/end")
        start = raw["start"]
        end = raw["end"]
        tokens.append(
            Token(
                str(raw["text"]),
                None if start is None else int(start),
                None if end is None else int(end),
            )
        )
    try:
        return TokenLogits(
            sample_id=str(payload["sample_id"]),
            seed_id=str(payload["seed_id"]),
            tokens=tuple(tokens),
            start_scores=tuple(float(v) for v in payload["start_scores"]),
            end_scores=tuple(float(v) for v in payload["end_scores"]),
        )
    except (ValidationError, ValueError, TypeError) as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def serialize_logits(run: TokenLogits) -> str:
    payload = {
        "version": LOGITS_FORMAT_VERSION,
        "sample_id": run.sample_id,
        "seed_id": run.seed_id,
        "tokens": [
            {"text": t.text, "start": t.char_start, "end": t.char_end} for t in run.tokens
        ],
        "start_scores": list(run.start_scores),
        "end_scores": list(run.end_scores),
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def write_logits(runs: Iterable[TokenLogits], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for run in runs:
            handle.write(serialize_logits(run))
            handle.write("\n")


def group_runs(runs: Iterable[TokenLogits]) -> dict[str, list[TokenLogits]]:
    """Runs keyed by sample id, each list ordered by seed id."""
    grouped: dict[str, list[TokenLogits]] = {}
    for run in runs:
        grouped.setdefault(run.sample_id, []).append(run)
    for sample_runs in grouped.values():
        sample_runs.sort(key=lambda r: r.seed_id)
    return grouped


_WORD_PREDICTION_FIELDS = {"version", "sample_id", "first", "last", "score", "null_score"}
_TEXT_PREDICTION_FIELDS = {"version", "sample_id", "text", "score", "null_score"}


def serialize_word_prediction(pred: SpanPrediction) -> str:
    first, last = pred.word_span if pred.word_span is not None else (None, None)
    payload = {
        "version": PREDICTIONS_FORMAT_VERSION,
        "sample_id": pred.sample_id,
        "first": first,
        "last": last,
        "score": pred.score,
        "null_score": pred.null_score,
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def write_word_predictions(preds: Iterable[SpanPrediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pred in preds:
            handle.write(serialize_word_prediction(pred))
            handle.write("\n")


def read_word_predictions(path: str | Path) -> dict[str, tuple[int, int] | None]:
    """Word-span predictions keyed by sample id; None records a no-answer."""
    predictions: dict[str, tuple[int, int] | None] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"line {line_no}"
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(payload, dict):
                raise ValidationError(f"{where}: record must be a JSON object")
            unknown = set(payload) - _WORD_PREDICTION_FIELDS
            if unknown:
                raise ValidationError(f"{where}: unknown field {sorted(unknown)[0]!r}")
            if payload.get("version") != PREDICTIONS_FORMAT_VERSION:
                raise ValidationError(f"{where}: missing or unsupported version")
            for field_name in ("sample_id", "first", "last", "score", "null_score"):
                if field_name not in payload:
                    raise ValidationError(f"{where}: field {field_name!r} is missing")
            sample_id = str(payload["sample_id"])
            if sample_id in predictions:
                raise ValidationError(f"{where}: duplicate sample id {sample_id!r}")
            first, last = payload["first"], payload["last"]
            if (first is None) != (last is None):
                raise ValidationError(f"{where}: first and last must be null together")
            if first is None:
                predictions[sample_id] = None
            else:
                first, last = int(first), int(last)
                if first < 0 or last < first:
                    raise ValidationError(f"{where}: bad span [{first}, {last}]")
                predictions[sample_id] = (first, last)
    return predictions


def serialize_text_prediction(pred: SpanPrediction, passage: str) -> str:
    payload = {
        "version": PREDICTIONS_FORMAT_VERSION,
        "sample_id": pred.sample_id,
        "text": prediction_text(pred, passage),
        "score": pred.score,
        "null_score": pred.null_score,
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def write_text_predictions(
    preds: Iterable[tuple[SpanPrediction, str]], path: str | Path
) -> None:
    """Write (prediction, passage) pairs as text predictions."""
    with open(path, "w", encoding="utf-8") as handle:
        for pred, passage in preds:
            handle.write(serialize_text_prediction(pred, passage))
            handle.write("\n")


def read_text_predictions(path: str | Path) -> dict[str, str]:
    """Answer texts keyed by sample id; empty text records a no-answer."""
    predictions: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"line {line_no}"
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(payload, dict):
                raise ValidationError(f"{where}: record must be a JSON object")
            unknown = set(payload) - _TEXT_PREDICTION_FIELDS
            if unknown:
                raise ValidationError(f"{where}: unknown field {sorted(unknown)[0]!r}")
            if payload.get("version") != PREDICTIONS_FORMAT_VERSION:
                raise ValidationError(f"{where}: missing or unsupported version")
            for field_name in ("sample_id", "text", "score", "null_score"):
                if field_name not in payload:
                    raise ValidationError(f"{where}: field {field_name!r} is missing")
            sample_id = str(payload["sample_id"])
            if sample_id in predictions:
                raise ValidationError(f"{where}: duplicate sample id {sample_id!r}")
            predictions[sample_id] = str(payload["text"])
    return predictions


def decode_all(
    runs: Iterable[TokenLogits],
    max_answer_tokens: int = DEFAULT_MAX_ANSWER_TOKENS,
    null_threshold: float = DEFAULT_NULL_THRESHOLD,
    seed_ids: Sequence[str] | None = None,
    map_fn: Callable[..., Iterable[SpanPrediction]] = map,
) -> list[SpanPrediction]:
    """Ensemble every sample's runs and decode, ordered by sample id.

    seed_ids, when given, selects that subset of seeds and requires each to be
    present for every sample. map_fn may be an order-preserving parallel map.
    """
    grouped = group_runs(runs)

    def decode_one(sample_id: str) -> SpanPrediction:
        sample_runs = grouped[sample_id]
        if seed_ids is not None:
            by_seed = {run.seed_id: run for run in sample_runs}
            missing = [seed for seed in seed_ids if seed not in by_seed]
            if missing:
                raise ValidationError(
                    f"sample {sample_id}: missing seeds: {', '.join(missing)}"
                )
            sample_runs = [by_seed[seed] for seed in sorted(seed_ids)]
        combined = ensemble(sample_runs)
        return decode_span(combined, max_answer_tokens, null_threshold)

    return list(map_fn(decode_one, sorted(grouped)))
