"""Training-set augmentation: round-trip translation, transcript substitution,
and relocation of gold answers inside rewritten passages."""

from __future__ import annotations

import json
import logging
import re
import subprocess
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal, Mapping, Sequence

from .corpus import SquadAnswer, SquadSample, normalize_word
from .errors import TranslationError, ValidationError

logger = logging.getLogger(__name__)

MAX_CHUNK_CHARS = 400
DEFAULT_PIVOTS = ("fr", "de")
DEFAULT_FUZZY_THRESHOLD = 0.8
DEFAULT_WINDOW_SLACK = 2

_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


class TranslationClient(ABC):
    """Batch translator between two language codes."""

    @abstractmethod
    def translate(self, texts: Sequence[str], source: str, target: str) -> list[str]:
        """Translate texts from source to target, one output per input."""

    def close(self) -> None:
        pass

    def __enter__(self) -> "TranslationClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class StubTranslationClient(TranslationClient):
    """Applies a plain function per text; intended for tests and dry runs."""

    def __init__(self, fn: Callable[[str, str, str], str]):
        self._fn = fn

    def translate(self, texts: Sequence[str], source: str, target: str) -> list[str]:
        return [self._fn(text, source, target) for text in texts]


class SubprocessTranslationClient(TranslationClient):
    """Talks to a persistent child process over a line-delimited JSON pipe.

    Each request is one line {"texts": [...], "source": ..., "target": ...};
    the reply is one line {"texts": [...]} or {"error": "..."}.
    """

    def __init__(self, command: Sequence[str]):
        self._command = list(command)
        self._process: subprocess.Popen[str] | None = None

    def _ensure_process(self) -> subprocess.Popen[str]:
        if self._process is None or self._process.poll() is not None:
            self._process = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        return self._process

    def translate(self, texts: Sequence[str], source: str, target: str) -> list[str]:
        process = self._ensure_process()
        assert process.stdin is not None and process.stdout is not None
        request = json.dumps(
            {"texts": list(texts), "source": source, "target": target},
            ensure_ascii=False,
            separators=(",", ":"),
        )
        try:
            process.stdin.write(request + "\n")
            process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TranslationError(f"translator process is gone: {exc}") from exc
        line = process.stdout.readline()
        if not line:
            raise TranslationError("translator process closed its output")
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TranslationError(f"translator sent invalid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise TranslationError("translator reply must be a JSON object")
        if "error" in payload:
            raise TranslationError(f"translator failed: {payload['error']}")
        replies = payload.get("texts")
        if not isinstance(replies, list) or len(replies) != len(texts):
            raise TranslationError(
                f"translator returned {len(replies) if isinstance(replies, list) else 'no'} "
                f"texts for {len(texts)} inputs"
            )
        return [str(text) for text in replies]

    def close(self) -> None:
        if self._process is not None:
            if self._process.stdin is not None:
                self._process.stdin.close()
            self._process.wait(timeout=10)
            self._process = None


def split_into_chunks(passage: str, max_chars: int = MAX_CHUNK_CHARS) -> list[str]:
    """Sentence-bounded chunks of at most max_chars; an oversized sentence
    stays whole rather than being cut mid-sentence."""
    sentences = [s for s in _SENTENCE_BREAK.split(passage.strip()) if s]
    chunks: list[str] = []
    current = ""
    for sentence in sentences:
        if not current:
            current = sentence
        elif len(current) + 1 + len(sentence) <= max_chars:
            current = f"{current} {sentence}"
        else:
            chunks.append(current)
            current = sentence
    if current:
        chunks.append(current)
    return chunks


def back_translate_passage(
    passage: str,
    pivot: str,
    client: TranslationClient,
    source: str = "en",
    max_chars: int = MAX_CHUNK_CHARS,
) -> str:
    """Round-trip the passage through the pivot language, one batched call per
    direction, and return it with whitespace collapsed."""
    chunks = split_into_chunks(passage, max_chars)
    if not chunks:
        return ""
    pivoted = client.translate(chunks, source, pivot)
    if len(pivoted) != len(chunks):
        raise TranslationError(
            f"translator returned {len(pivoted)} texts for {len(chunks)} inputs"
        )
    restored = client.translate(pivoted, pivot, source)
    if len(restored) != len(pivoted):
        raise TranslationError(
            f"translator returned {len(restored)} texts for {len(pivoted)} inputs"
        )
    return " ".join(" ".join(restored).split())


# ---------------------------------------------------------------------------
# Answer relocation
# ---------------------------------------------------------------------------

RelocationOutcome = Literal["exact", "fuzzy", "dropped"]


@dataclass(frozen=True)
class RelocationResult:
    outcome: RelocationOutcome
    char_span: tuple[int, int] | None
    match_score: float


def _passage_tokens(passage: str) -> list[tuple[str, int, int]]:
    """(normalized token, char_start, char_end) for tokens that survive normalization."""
    tokens = []
    for match in re.finditer(r"\S+", passage):
        normalized = normalize_word(match.group())
        if normalized:
            tokens.append((normalized, match.start(), match.end()))
    return tokens


def _window_f1(window: Sequence[str], answer: Counter[str], answer_len: int) -> float:
    same = sum((Counter(window) & answer).values())
    if same == 0:
        return 0.0
    precision = same / len(window)
    recall = same / answer_len
    return 2 * precision * recall / (precision + recall)


def relocate_answer(
    answer_text: str,
    new_passage: str,
    fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD,
    window_slack: int = DEFAULT_WINDOW_SLACK,
) -> RelocationResult:
    """Find the answer inside a rewritten passage.

    First a case-insensitive exact search anchored at word boundaries; failing
    that, the token window (within window_slack of the answer length) with the
    highest token F1, kept only at or above fuzzy_threshold. Earlier and
    shorter windows win ties.
    """
    answer_norm = [normalize_word(t) for t in answer_text.split()]
    answer_norm = [t for t in answer_norm if t]
    if not answer_norm:
        return RelocationResult("dropped", None, 0.0)

    pattern = re.compile(rf"(?<!\w){re.escape(answer_text)}(?!\w)", re.IGNORECASE)
    found = pattern.search(new_passage)
    if found is not None:
        return RelocationResult("exact", (found.start(), found.end()), 1.0)

    tokens = _passage_tokens(new_passage)
    answer_counts = Counter(answer_norm)
    n = len(answer_norm)
    best_score = 0.0
    best_span: tuple[int, int] | None = None
    for win_len in range(max(1, n - window_slack), n + window_slack + 1):
        if win_len > len(tokens):
            break
        for start in range(len(tokens) - win_len + 1):
            window = [tok for tok, _, _ in tokens[start : start + win_len]]
            score = _window_f1(window, answer_counts, n)
            if score > best_score:
                best_score = score
                best_span = (tokens[start][1], tokens[start + win_len - 1][2])

    if best_span is not None and best_score >= fuzzy_threshold:
        return RelocationResult("fuzzy", best_span, best_score)
    return RelocationResult("dropped", None, best_score)


# ---------------------------------------------------------------------------
# Augmented corpus construction
# ---------------------------------------------------------------------------

PROVENANCE_ORIGINAL = "original"
PROVENANCE_TTS = "tts_asr"


def provenance_back_translation(pivot: str) -> str:
    return f"back_translation:{pivot}"


@dataclass(frozen=True)
class AugmentedSample:
    """A corpus member together with where it came from."""

    sample: SquadSample
    provenance: str
    source_id: str


@dataclass(frozen=True)
class ProvenanceEntry:
    """Sidecar row: one per emitted sample plus one per dropped or failed
    candidate. Outcomes: original, exact, fuzzy, no_answer, dropped, error."""

    id: str
    source_id: str
    provenance: str
    outcome: str
    match_score: float | None


@dataclass(frozen=True)
class RetentionStats:
    attempted: int
    kept: int

    @property
    def rate(self) -> float:
        return self.kept / self.attempted if self.attempted else 0.0


@dataclass(frozen=True)
class AugmentationResult:
    samples: tuple[AugmentedSample, ...]
    sidecar: tuple[ProvenanceEntry, ...]
    retention: Mapping[str, RetentionStats]

    @property
    def squad_samples(self) -> list[SquadSample]:
        return [member.sample for member in self.samples]


def _rebuild_sample(
    sample: SquadSample,
    new_id: str,
    new_passage: str,
    fuzzy_threshold: float,
    window_slack: int,
) -> tuple[SquadSample | None, str, float | None]:
    """Relocate every gold answer; returns (sample or None, outcome, score)."""
    if sample.is_impossible:
        rebuilt = SquadSample(
            id=new_id,
            question=sample.question,
            passage=new_passage,
            gold_answers=(),
            is_impossible=True,
        )
        return rebuilt, "no_answer", None

    kept: list[SquadAnswer] = []
    best_kept = 0.0
    best_dropped = 0.0
    any_exact = False
    for gold in sample.gold_answers:
        result = relocate_answer(gold.text, new_passage, fuzzy_threshold, window_slack)
        if result.outcome == "dropped":
            best_dropped = max(best_dropped, result.match_score)
            continue
        cs, ce = result.char_span
        kept.append(SquadAnswer(new_passage[cs:ce], cs, ce))
        best_kept = max(best_kept, result.match_score)
        any_exact = any_exact or result.outcome == "exact"

    if not kept:
        return None, "dropped", best_dropped
    rebuilt = SquadSample(
        id=new_id,
        question=sample.question,
        passage=new_passage,
        gold_answers=tuple(kept),
        is_impossible=False,
    )
    return rebuilt, "exact" if any_exact else "fuzzy", best_kept


def _generate_tts(
    base: Sequence[SquadSample],
    tts_map: Mapping[str, str],
    fuzzy_threshold: float,
    window_slack: int,
) -> tuple[list[AugmentedSample], list[ProvenanceEntry], RetentionStats]:
    """Transcript-substitution variants for every base sample with a transcript."""
    known = {s.id for s in base}
    orphans = sorted(set(tts_map) - known)
    if orphans:
        logger.warning("transcript ids not in the corpus, skipped: %s", ", ".join(orphans))

    members: list[AugmentedSample] = []
    sidecar: list[ProvenanceEntry] = []
    attempted = kept_count = 0
    for sample in base:
        if sample.id not in tts_map:
            continue
        # retention tracks answer relocation, so only answerable samples count
        if not sample.is_impossible:
            attempted += 1
        new_id = f"{sample.id}::tts"
        rebuilt, outcome, score = _rebuild_sample(
            sample, new_id, tts_map[sample.id], fuzzy_threshold, window_slack
        )
        sidecar.append(ProvenanceEntry(new_id, sample.id, PROVENANCE_TTS, outcome, score))
        if rebuilt is not None:
            members.append(AugmentedSample(rebuilt, PROVENANCE_TTS, sample.id))
            if not sample.is_impossible:
                kept_count += 1
    return members, sidecar, RetentionStats(attempted, kept_count)


def build_augmented_set(
    base: Sequence[SquadSample],
    client: TranslationClient,
    pivots: Sequence[str] = DEFAULT_PIVOTS,
    tts_map: Mapping[str, str] | None = None,
    fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD,
    window_slack: int = DEFAULT_WINDOW_SLACK,
    source_lang: str = "en",
) -> AugmentationResult:
    """Original samples followed by one generated variant per sample per
    generator: a back-translation round trip per pivot, then transcript
    substitution for ids present in tts_map. Answerable samples whose gold
    answers all fail relocation are left out and recorded in the sidecar."""
    samples: list[AugmentedSample] = [
        AugmentedSample(s, PROVENANCE_ORIGINAL, s.id) for s in base
    ]
    sidecar: list[ProvenanceEntry] = [
        ProvenanceEntry(s.id, s.id, PROVENANCE_ORIGINAL, "original", None) for s in base
    ]
    retention: dict[str, RetentionStats] = {}

    for pivot in pivots:
        name = f"bt:{pivot}"
        provenance = provenance_back_translation(pivot)
        attempted = kept_count = 0
        cache: dict[str, str] = {}
        for sample in base:
            # retention tracks answer relocation, so only answerable samples count
            if not sample.is_impossible:
                attempted += 1
            new_id = f"{sample.id}::bt-{pivot}"
            try:
                if sample.passage not in cache:
                    cache[sample.passage] = back_translate_passage(
                        sample.passage, pivot, client, source_lang
                    )
                new_passage = cache[sample.passage]
            except TranslationError as exc:
                logger.warning("skipping %s (%s): %s", sample.id, name, exc)
                sidecar.append(ProvenanceEntry(new_id, sample.id, provenance, "error", None))
                continue
            rebuilt, outcome, score = _rebuild_sample(
                sample, new_id, new_passage, fuzzy_threshold, window_slack
            )
            sidecar.append(ProvenanceEntry(new_id, sample.id, provenance, outcome, score))
            if rebuilt is not None:
                samples.append(AugmentedSample(rebuilt, provenance, sample.id))
                if not sample.is_impossible:
                    kept_count += 1
        retention[name] = RetentionStats(attempted, kept_count)

    if tts_map is not None:
        members, tts_sidecar, stats = _generate_tts(
            base, tts_map, fuzzy_threshold, window_slack
        )
        samples.extend(members)
        sidecar.extend(tts_sidecar)
        retention[PROVENANCE_TTS] = stats

    return AugmentationResult(
        samples=tuple(samples), sidecar=tuple(sidecar), retention=dict(retention)
    )


# ---------------------------------------------------------------------------
# Transcript map and sidecar serialization
# ---------------------------------------------------------------------------

_TTS_FIELDS = {"id", "transcript"}


def read_tts_map(path: str | Path) -> dict[str, str]:
    """Load and validate the id-to-transcript mapping file."""
    transcripts: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"line {line_no}"
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(payload, dict) or set(payload) != _TTS_FIELDS:
                raise ValidationError(f"{where}: record must be {{id, transcript}}")
            sample_id = str(payload["id"])
            if sample_id in transcripts:
                raise ValidationError(f"{where}: duplicate id {sample_id!r}")
            transcripts[sample_id] = str(payload["transcript"])
    return transcripts


def import_tts_asr_passages(
    path: str | Path,
    base: Sequence[SquadSample],
    fuzzy_threshold: float = DEFAULT_FUZZY_THRESHOLD,
    window_slack: int = DEFAULT_WINDOW_SLACK,
) -> AugmentationResult:
    """Transcript-substitution samples from a mapping file; transcript ids with
    no base sample are skipped with a warning."""
    tts_map = read_tts_map(path)
    members, sidecar, stats = _generate_tts(base, tts_map, fuzzy_threshold, window_slack)
    return AugmentationResult(
        samples=tuple(members),
        sidecar=tuple(sidecar),
        retention={PROVENANCE_TTS: stats},
    )


def serialize_provenance_entry(entry: ProvenanceEntry) -> str:
    payload = {
        "id": entry.id,
        "source_id": entry.source_id,
        "provenance": entry.provenance,
        "outcome": entry.outcome,
        "match_score": entry.match_score,
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def write_sidecar(entries: Iterable[ProvenanceEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(serialize_provenance_entry(entry))
            handle.write("\n")
