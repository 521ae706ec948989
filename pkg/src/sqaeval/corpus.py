"""Data model and ingestion for spoken-response corpora and SQuAD-style text corpora.

The on-disk formats (field names, version handling, CSV headers) are documented
in docs/formats.md; loaders here are the single source of truth for validation.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError

SQA_FORMAT_VERSION = 1
NO_ANSWER = "no-answer"
SECTIONS = ("C", "D", "E")

GRADE_SCALE = {"A1": 1, "A2": 2, "B1": 3, "B2": 4, "C1": 5, "C2": 6}
# Markers for candidates below the lowest CEFR band, mapped to the floor of the scale.
BELOW_LEVEL_MARKERS = frozenset({"A0", "BELOW-A1", "BELOW A1", "PRE-A1"})

_EDGE_PUNCT = string.punctuation


def normalize_word(text: str) -> str:
    """Canonical surface form: lowercase, collapse whitespace, strip edge punctuation."""
    collapsed = " ".join(text.lower().split())
    return collapsed.strip(_EDGE_PUNCT)


def tokenize(text: str) -> list[str]:
    """Split free text into normalized words, dropping tokens that normalize to nothing."""
    words = (normalize_word(part) for part in text.split())
    return [w for w in words if w]


@dataclass(frozen=True)
class TimedWord:
    """One transcript word with its audio interval in seconds."""

    text: str
    start_time: float
    end_time: float

    def __post_init__(self) -> None:
        if not self.text:
            raise ValidationError("word text is empty after normalization")
        if self.start_time < 0:
            raise ValidationError(f"start_time {self.start_time} is negative")
        if self.end_time < self.start_time:
            raise ValidationError(
                f"end_time {self.end_time} precedes start_time {self.start_time}"
            )

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class AnswerAnnotation:
    """Inclusive word-index span marking an answer region, or an explicit no-answer."""

    first: int | None = None
    last: int | None = None

    def __post_init__(self) -> None:
        if (self.first is None) != (self.last is None):
            raise ValidationError("span must set both first and last, or neither")
        if self.first is not None and self.last is not None:
            if self.first < 0:
                raise ValidationError(f"span first index {self.first} is negative")
            if self.last < self.first:
                raise ValidationError(f"span last {self.last} precedes first {self.first}")

    @classmethod
    def span(cls, first: int, last: int) -> "AnswerAnnotation":
        return cls(first=first, last=last)

    @classmethod
    def no_answer(cls) -> "AnswerAnnotation":
        return cls()

    @property
    def is_no_answer(self) -> bool:
        return self.first is None

    @property
    def word_count(self) -> int:
        if self.first is None or self.last is None:
            return 0
        return self.last - self.first + 1


@dataclass(frozen=True)
class ResponseRecord:
    """A spoken response: prompt, timed words, answer annotations, and metadata."""

    id: str
    section: str
    prompt: str
    words: tuple[TimedWord, ...]
    answers: tuple[AnswerAnnotation, ...]
    grade: float | None = None
    transcript_source: str = "manual"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("record id is empty")
        if self.section not in SECTIONS:
            raise ValidationError(f"unknown section {self.section!r}")
        previous = None
        for index, word in enumerate(self.words):
            if previous is not None and word.start_time < previous:
                raise ValidationError(
                    f"words[{index}]: start_time {word.start_time} decreases "
                    f"below previous start {previous}"
                )
            previous = word.start_time
        for index, answer in enumerate(self.answers):
            if not answer.is_no_answer and answer.last >= len(self.words):
                raise ValidationError(
                    f"answers[{index}]: span [{answer.first}, {answer.last}] exceeds "
                    f"response length {len(self.words)}"
                )
        if self.grade is not None and not 0 <= self.grade <= 6:
            raise ValidationError(f"grade {self.grade} outside the 0-6 scale")
        if not _valid_source(self.transcript_source):
            raise ValidationError(f"unknown transcript_source {self.transcript_source!r}")

    @property
    def word_texts(self) -> list[str]:
        return [w.text for w in self.words]

    @property
    def duration(self) -> float:
        """Envelope duration from the first word start to the latest word end."""
        if not self.words:
            return 0.0
        return max(w.end_time for w in self.words) - self.words[0].start_time

    @property
    def answer_word_count(self) -> int:
        return sum(a.word_count for a in self.answers)

    @property
    def answer_duration(self) -> float:
        total = 0.0
        for a in self.answers:
            if not a.is_no_answer:
                total += self.words[a.last].end_time - self.words[a.first].start_time
        return total


def _valid_source(source: str) -> bool:
    if source in ("manual", "gec"):
        return True
    return source.startswith("asr:") and len(source) > 4


@dataclass(frozen=True)
class SqaSample:
    """The evaluation unit: a prompt, the response it was asked of, and gold answers."""

    prompt: str
    response: ResponseRecord
    gold_answers: tuple[AnswerAnnotation, ...]

    def __post_init__(self) -> None:
        for gold in self.gold_answers:
            if gold not in self.response.answers:
                raise ValidationError("gold answer is not among the response annotations")


def samples_from_records(records: Iterable[ResponseRecord]) -> list[SqaSample]:
    """Treat every annotation on every record as gold."""
    return [
        SqaSample(prompt=r.prompt, response=r, gold_answers=r.answers) for r in records
    ]


@dataclass(frozen=True)
class SquadAnswer:
    """A gold answer as a character span [char_start, char_end) plus its text."""

    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class SquadSample:
    """One flattened question/passage pair from a SQuAD 2.0 style corpus."""

    id: str
    question: str
    passage: str
    gold_answers: tuple[SquadAnswer, ...]
    is_impossible: bool

    def __post_init__(self) -> None:
        if self.is_impossible != (len(self.gold_answers) == 0):
            raise ValidationError(
                f"sample {self.id}: is_impossible must match an empty gold answer list"
            )
        for gold in self.gold_answers:
            actual = self.passage[gold.char_start : gold.char_end]
            if actual != gold.text:
                raise ValidationError(
                    f"sample {self.id}: span [{gold.char_start}, {gold.char_end}) reads "
                    f"{actual!r}, recorded text is {gold.text!r}"
                )


# ---------------------------------------------------------------------------
# SQA corpus serialization (line-delimited JSON, UTF-8)
# ---------------------------------------------------------------------------


def load_sqa_corpus(path: str | Path) -> list[ResponseRecord]:
    """Load and validate a line-delimited SQA corpus file."""
    records: list[ResponseRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {line_no}: invalid JSON: {exc}") from exc
            record = _parse_record(payload, line_no)
            if record.id in seen_ids:
                raise ValidationError(f"line {line_no}: duplicate record id {record.id!r}")
            seen_ids.add(record.id)
            records.append(record)
    return records


_RECORD_FIELDS = {"version", "id", "section", "prompt", "words", "answers", "grade", "transcript_source"}
_WORD_FIELDS = {"text", "start", "end"}
_SPAN_FIELDS = {"first", "last"}


def _parse_record(payload: object, line_no: int) -> ResponseRecord:
    where = f"line {line_no}"
    if not isinstance(payload, dict):
        raise ValidationError(f"{where}: record must be a JSON object")
    unknown = set(payload) - _RECORD_FIELDS
    if unknown:
        raise ValidationError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    version = payload.get("version")
    if version is None:
        raise ValidationError(f"{where}: field 'version' is missing")
    if version != SQA_FORMAT_VERSION:
        raise ValidationError(f"{where}: unsupported version {version!r}")
    for field_name in ("id", "section", "prompt", "words", "answers", "transcript_source"):
        if field_name not in payload:
            raise ValidationError(f"{where}: field {field_name!r} is missing")

    words: list[TimedWord] = []
    for index, raw in enumerate(payload["words"]):
        if not isinstance(raw, dict) or set(raw) != _WORD_FIELDS:
            raise ValidationError(f"{where}: words[{index}] must have fields text/start/end")
        text = normalize_word(str(raw["text"]))
        try:
            words.append(TimedWord(text, float(raw["start"]), float(raw["end"])))
        except (ValidationError, ValueError, TypeError) as exc:
            raise ValidationError(f"{where}: words[{index}]: {exc}") from exc

    answers: list[AnswerAnnotation] = []
    for index, raw in enumerate(payload["answers"]):
        if raw == NO_ANSWER:
            answers.append(AnswerAnnotation.no_answer())
            continue
        if not isinstance(raw, dict) or set(raw) != _SPAN_FIELDS:
            raise ValidationError(
                f"{where}: answers[{index}] must be {{first, last}} or {NO_ANSWER!r}"
            )
        try:
            answers.append(AnswerAnnotation.span(int(raw["first"]), int(raw["last"])))
        except (ValidationError, ValueError, TypeError) as exc:
            raise ValidationError(f"{where}: answers[{index}]: {exc}") from exc

    grade = payload.get("grade")
    if grade is not None:
        try:
            grade = float(grade)
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"{where}: grade {grade!r} is not numeric") from exc

    try:
        return ResponseRecord(
            id=str(payload["id"]),
            section=str(payload["section"]),
            prompt=str(payload["prompt"]),
            words=tuple(words),
            answers=tuple(answers),
            grade=grade,
            transcript_source=str(payload["transcript_source"]),
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def serialize_record(record: ResponseRecord) -> str:
    """Canonical one-line JSON form of a record; load then serialize round-trips."""
    payload: dict[str, object] = {
        "version": SQA_FORMAT_VERSION,
        "id": record.id,
        "section": record.section,
        "prompt": record.prompt,
        "words": [
            {"text": w.text, "start": w.start_time, "end": w.end_time} for w in record.words
        ],
        "answers": [
            NO_ANSWER if a.is_no_answer else {"first": a.first, "last": a.last}
            for a in record.answers
        ],
    }
    if record.grade is not None:
        payload["grade"] = record.grade
    payload["transcript_source"] = record.transcript_source
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def dump_sqa_corpus(records: Iterable[ResponseRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(serialize_record(record))
            handle.write("\n")


def response_passage(record: ResponseRecord) -> str:
    """The canonical passage string: normalized words joined by single spaces."""
    return " ".join(record.word_texts)


# ---------------------------------------------------------------------------
# Filtering and grades
# ---------------------------------------------------------------------------


def filter_unclear(
    records: Sequence[ResponseRecord], marker: str = "unclear"
) -> list[ResponseRecord]:
    """Drop every record containing a word equal to the marker; order is preserved."""
    if not marker:
        raise ValueError("marker must be non-empty")
    return [r for r in records if marker not in r.word_texts]


def map_grade(cefr: str) -> int:
    """Map a CEFR grade label onto the 0-6 numeric scale."""
    label = cefr.strip().upper()
    if label in BELOW_LEVEL_MARKERS:
        return 0
    if label in GRADE_SCALE:
        return GRADE_SCALE[label]
    raise ValidationError(f"unknown CEFR grade {cefr!r}")


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SectionStats:
    """Means and sample standard deviations for one section."""

    section: str
    n: int
    prompt_words_mean: float
    prompt_words_std: float
    response_words_mean: float
    response_words_std: float
    answer_words_mean: float
    answer_words_std: float
    response_time_mean: float
    response_time_std: float
    answer_time_mean: float
    answer_time_std: float
    single_sample: bool


@dataclass(frozen=True)
class CorpusStats:
    sections: tuple[SectionStats, ...]


STATS_CSV_HEADER = (
    "section,n,prompt_words_mean,prompt_words_std,response_words_mean,response_words_std,"
    "answer_words_mean,answer_words_std,response_time_mean,response_time_std,"
    "answer_time_mean,answer_time_std,single_sample"
)


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Exact two-pass mean and sample (n-1) standard deviation."""
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(variance)


def corpus_stats(records: Sequence[ResponseRecord]) -> CorpusStats:
    """Per-section count, word-count, and duration statistics."""
    if not records:
        raise ValidationError("cannot summarize an empty corpus")
    groups: dict[str, list[ResponseRecord]] = {}
    for record in records:
        groups.setdefault(record.section, []).append(record)

    sections = []
    for section in sorted(groups):
        group = groups[section]
        prompt_counts = [float(len(tokenize(r.prompt))) for r in group]
        response_counts = [float(len(r.words)) for r in group]
        answer_counts = [float(r.answer_word_count) for r in group]
        response_times = [r.duration for r in group]
        answer_times = [r.answer_duration for r in group]
        stat_pairs = [
            _mean_std(prompt_counts),
            _mean_std(response_counts),
            _mean_std(answer_counts),
            _mean_std(response_times),
            _mean_std(answer_times),
        ]
        flat = [v for pair in stat_pairs for v in pair]
        sections.append(SectionStats(section, len(group), *flat, single_sample=len(group) == 1))
    return CorpusStats(sections=tuple(sections))


def stats_to_csv(stats: CorpusStats) -> str:
    lines = [STATS_CSV_HEADER]
    for s in stats.sections:
        lines.append(
            f"{s.section},{s.n},{s.prompt_words_mean!r},{s.prompt_words_std!r},"
            f"{s.response_words_mean!r},{s.response_words_std!r},"
            f"{s.answer_words_mean!r},{s.answer_words_std!r},"
            f"{s.response_time_mean!r},{s.response_time_std!r},"
            f"{s.answer_time_mean!r},{s.answer_time_std!r},"
            f"{1 if s.single_sample else 0}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SQuAD 2.0 ingestion and emission
# ---------------------------------------------------------------------------


def load_squad(path: str | Path) -> list[SquadSample]:
    """Flatten a SQuAD 2.0 JSON file into validated samples."""
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid SQuAD JSON: {exc}") from exc
    if not isinstance(payload, dict) or "data" not in payload:
        raise ValidationError("SQuAD file must be an object with a 'data' array")

    samples: list[SquadSample] = []
    for article in payload["data"]:
        for paragraph in article.get("paragraphs", []):
            context = paragraph["context"]
            for qa in paragraph.get("qas", []):
                qa_id = str(qa["id"])
                impossible = bool(qa.get("is_impossible", False))
                golds: list[SquadAnswer] = []
                if not impossible:
                    for answer in qa.get("answers", []):
                        start = int(answer["answer_start"])
                        text = str(answer["text"])
                        golds.append(SquadAnswer(text, start, start + len(text)))
                try:
                    samples.append(
                        SquadSample(
                            id=qa_id,
                            question=str(qa["question"]),
                            passage=context,
                            gold_answers=tuple(golds),
                            is_impossible=impossible,
                        )
                    )
                except ValidationError as exc:
                    raise ValidationError(str(exc)) from exc
    return samples


def squad_to_json(samples: Sequence[SquadSample], title: str = "corpus") -> str:
    """The standard SQuAD 2.0 layout as one canonical JSON string, grouping
    samples that share a passage."""
    paragraphs: dict[str, list[SquadSample]] = {}
    for sample in samples:
        paragraphs.setdefault(sample.passage, []).append(sample)
    data = {
        "version": "v2.0",
        "data": [
            {
                "title": title,
                "paragraphs": [
                    {
                        "context": passage,
                        "qas": [
                            {
                                "id": s.id,
                                "question": s.question,
                                "answers": [
                                    {"text": g.text, "answer_start": g.char_start}
                                    for g in s.gold_answers
                                ],
                                "is_impossible": s.is_impossible,
                            }
                            for s in group
                        ],
                    }
                    for passage, group in paragraphs.items()
                ],
            }
        ],
    }
    return json.dumps(data, ensure_ascii=False, separators=(",", ":")) + "\n"


def write_squad(samples: Sequence[SquadSample], path: str | Path, title: str = "corpus") -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(squad_to_json(samples, title))
