"""Scoring: text/audio overlap, word error rate, and SQuAD-style EM and F1."""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Literal, Mapping, Sequence

from .align import UNIT_COSTS, TimeInterval, project_span_to_time, word_edit_alignment
from .corpus import SqaSample, SquadSample
from .errors import ValidationError

TosMode = Literal["set", "multiset"]


def tos(
    pred_words: Sequence[str], gold_words: Sequence[str], mode: TosMode = "set"
) -> float:
    """Text overlap score: Jaccard overlap of the two word collections.

    Two empty collections score 1.0 (agreement that there is nothing), a single
    empty one scores 0.0. Set mode ignores repetition; multiset mode counts it.
    """
    if not pred_words and not gold_words:
        return 1.0
    if not pred_words or not gold_words:
        return 0.0
    if mode == "set":
        pred, gold = set(pred_words), set(gold_words)
        return len(pred & gold) / len(pred | gold)
    if mode == "multiset":
        pred_counts, gold_counts = Counter(pred_words), Counter(gold_words)
        inter = sum((pred_counts & gold_counts).values())
        union = sum((pred_counts | gold_counts).values())
        return inter / union
    raise ValueError(f"unknown tos mode {mode!r}")


def merge_intervals(intervals: Iterable[TimeInterval]) -> list[TimeInterval]:
    """Sorted union of intervals, coalescing overlaps and shared endpoints."""
    ordered = sorted(intervals, key=lambda iv: (iv.start, iv.end))
    merged: list[TimeInterval] = []
    for interval in ordered:
        if merged and interval.start <= merged[-1].end:
            if interval.end > merged[-1].end:
                merged[-1] = TimeInterval(merged[-1].start, interval.end)
        else:
            merged.append(interval)
    return merged


def aos(
    pred_intervals: Iterable[TimeInterval], gold_intervals: Iterable[TimeInterval]
) -> float:
    """Audio overlap score: intersection duration over union duration.

    When both unions have zero duration the score is 1.0 exactly when the
    merged interval sets coincide, 0.0 otherwise.
    """
    pred = merge_intervals(pred_intervals)
    gold = merge_intervals(gold_intervals)
    pred_total = math.fsum(iv.duration for iv in pred)
    gold_total = math.fsum(iv.duration for iv in gold)

    inter = 0.0
    i = j = 0
    while i < len(pred) and j < len(gold):
        lo = max(pred[i].start, gold[j].start)
        hi = min(pred[i].end, gold[j].end)
        if hi > lo:
            inter += hi - lo
        if pred[i].end <= gold[j].end:
            i += 1
        else:
            j += 1

    union = pred_total + gold_total - inter
    if union <= 0.0:
        return 1.0 if pred == gold else 0.0
    return inter / union


# ---------------------------------------------------------------------------
# Word error rate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int
    wer: float

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def _breakdown(substitutions: int, deletions: int, insertions: int, ref_length: int) -> WerBreakdown:
    errors = substitutions + deletions + insertions
    rate = errors / ref_length if ref_length else 0.0
    return WerBreakdown(substitutions, deletions, insertions, ref_length, rate)


def wer(ref_words: Sequence[str], hyp_words: Sequence[str]) -> WerBreakdown:
    """Word error rate with the standard unit-cost, no-transposition model."""
    if not ref_words and hyp_words:
        raise ValidationError("word error rate is undefined for an empty reference")
    alignment = word_edit_alignment(ref_words, hyp_words, UNIT_COSTS)
    return _breakdown(
        alignment.count("substitute"),
        alignment.count("delete"),
        alignment.count("insert"),
        len(ref_words),
    )


def combine_wer(parts: Iterable[WerBreakdown]) -> WerBreakdown:
    """Corpus-level rate: summed error counts over summed reference lengths."""
    subs = dels = ins = ref_len = 0
    for part in parts:
        subs += part.substitutions
        dels += part.deletions
        ins += part.insertions
        ref_len += part.ref_length
    return _breakdown(subs, dels, ins, ref_len)


# ---------------------------------------------------------------------------
# SQuAD 2.0 scoring
# ---------------------------------------------------------------------------

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = {ord(ch): None for ch in string.punctuation}


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation, drop articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def squad_em(prediction: str, gold_answers: Sequence[str]) -> float:
    golds = list(gold_answers) or [""]
    pred_norm = normalize_answer(prediction)
    return max(float(pred_norm == normalize_answer(gold)) for gold in golds)


def _token_f1(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    same = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if same == 0:
        return 0.0
    precision = same / len(pred_tokens)
    recall = same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def squad_f1(prediction: str, gold_answers: Sequence[str]) -> float:
    golds = list(gold_answers) or [""]
    return max(_token_f1(prediction, gold) for gold in golds)


@dataclass(frozen=True)
class SquadSubsetScores:
    subset: str
    n: int
    em: float
    f1: float


@dataclass(frozen=True)
class SquadScores:
    """EM and F1 percentages for all samples and the two answerability subsets."""

    subsets: tuple[SquadSubsetScores, ...]

    def _subset(self, name: str) -> SquadSubsetScores:
        return next(s for s in self.subsets if s.subset == name)

    @property
    def all(self) -> SquadSubsetScores:
        return self._subset("all")

    @property
    def has_answer(self) -> SquadSubsetScores:
        return self._subset("has_answer")

    @property
    def no_answer(self) -> SquadSubsetScores:
        return self._subset("no_answer")


def evaluate_squad(
    samples: Sequence[SquadSample], predictions: Mapping[str, str]
) -> SquadScores:
    missing = sorted(s.id for s in samples if s.id not in predictions)
    if missing:
        raise ValidationError(f"missing predictions for ids: {', '.join(missing)}")

    buckets: dict[str, tuple[list[float], list[float]]] = {
        "all": ([], []),
        "has_answer": ([], []),
        "no_answer": ([], []),
    }
    for sample in samples:
        pred = predictions[sample.id]
        golds = [g.text for g in sample.gold_answers]
        em = squad_em(pred, golds)
        f1 = squad_f1(pred, golds)
        subset = "no_answer" if sample.is_impossible else "has_answer"
        for name in ("all", subset):
            buckets[name][0].append(em)
            buckets[name][1].append(f1)

    subsets = []
    for name in ("all", "has_answer", "no_answer"):
        ems, f1s = buckets[name]
        n = len(ems)
        em_pct = 100.0 * math.fsum(ems) / n if n else 0.0
        f1_pct = 100.0 * math.fsum(f1s) / n if n else 0.0
        subsets.append(SquadSubsetScores(name, n, em_pct, f1_pct))
    return SquadScores(subsets=tuple(subsets))


SQUAD_CSV_HEADER = "subset,n,em,f1"


def squad_scores_to_csv(scores: SquadScores) -> str:
    lines = [SQUAD_CSV_HEADER]
    for row in scores.subsets:
        lines.append(f"{row.subset},{row.n},{row.em!r},{row.f1!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Corpus evaluation with TOS and AOS
# ---------------------------------------------------------------------------

WordSpan = tuple[int, int]


@dataclass(frozen=True)
class SampleScore:
    id: str
    section: str
    tos: float
    aos: float
    excluded: bool


@dataclass(frozen=True)
class EvalRow:
    section: str
    n: int
    mean_tos: float
    mean_aos: float
    excluded: int


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    samples: tuple[SampleScore, ...]


def _gold_word_indices(sample: SqaSample) -> list[int]:
    covered: set[int] = set()
    for gold in sample.gold_answers:
        if not gold.is_no_answer:
            covered.update(range(gold.first, gold.last + 1))
    return sorted(covered)


def score_sample(
    sample: SqaSample, prediction: WordSpan | None, tos_mode: TosMode = "set"
) -> SampleScore:
    """TOS and AOS for one prediction against the union of gold annotations."""
    record = sample.response
    if prediction is not None:
        first, last = prediction
        if not 0 <= first <= last < len(record.words):
            return SampleScore(record.id, record.section, 0.0, 0.0, excluded=True)

    gold_indices = _gold_word_indices(sample)
    gold_words = [record.words[k].text for k in gold_indices]
    gold_ivs = [
        project_span_to_time((g.first, g.last), record.words)
        for g in sample.gold_answers
        if not g.is_no_answer
    ]

    if prediction is None:
        pred_words: list[str] = []
        pred_ivs: list[TimeInterval] = []
    else:
        first, last = prediction
        pred_words = [w.text for w in record.words[first : last + 1]]
        pred_ivs = [project_span_to_time(prediction, record.words)]

    text_score = tos(pred_words, gold_words, tos_mode)
    if not pred_ivs and not gold_ivs:
        audio_score = 1.0
    elif not pred_ivs or not gold_ivs:
        audio_score = 0.0
    else:
        audio_score = aos(pred_ivs, gold_ivs)
    return SampleScore(record.id, record.section, text_score, audio_score, excluded=False)


def evaluate_corpus(
    pairs: Sequence[tuple[SqaSample, WordSpan | None]],
    tos_mode: TosMode = "set",
    map_fn: Callable[..., Iterable[SampleScore]] = map,
) -> EvalReport:
    """Section-level and overall mean TOS/AOS; out-of-range predictions are
    excluded from the means but reported in the excluded column.

    map_fn may be an order-preserving parallel map; results are identical."""
    scores = list(map_fn(lambda pair: score_sample(pair[0], pair[1], tos_mode), pairs))

    def summarize(section: str, group: Sequence[SampleScore]) -> EvalRow:
        kept = [s for s in group if not s.excluded]
        n = len(kept)
        mean_tos = math.fsum(s.tos for s in kept) / n if n else 0.0
        mean_aos = math.fsum(s.aos for s in kept) / n if n else 0.0
        return EvalRow(section, n, mean_tos, mean_aos, len(group) - n)

    by_section: dict[str, list[SampleScore]] = {}
    for score in scores:
        by_section.setdefault(score.section, []).append(score)
    rows = [summarize(section, by_section[section]) for section in sorted(by_section)]
    rows.append(summarize("ALL", scores))
    return EvalReport(rows=tuple(rows), samples=tuple(scores))


EVAL_CSV_HEADER = "section,n,mean_tos,mean_aos,excluded"


def eval_report_to_csv(report: EvalReport) -> str:
    lines = [EVAL_CSV_HEADER]
    for row in report.rows:
        lines.append(f"{row.section},{row.n},{row.mean_tos!r},{row.mean_aos!r},{row.excluded}")
    return "\n".join(lines) + "\n"


SAMPLE_CSV_HEADER = "id,section,tos,aos,excluded"


def sample_scores_to_csv(scores: Iterable[SampleScore]) -> str:
    lines = [SAMPLE_CSV_HEADER]
    for s in scores:
        lines.append(f"{s.id},{s.section},{s.tos!r},{s.aos!r},{1 if s.excluded else 0}")
    return "\n".join(lines) + "\n"
