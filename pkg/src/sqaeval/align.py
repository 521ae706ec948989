"""Word-level alignment between transcripts, and timestamp transfer across it.

The aligner is an edit-distance dynamic program over words supporting adjacent
transpositions and a substitution cost weighted by character-level similarity.
With unit costs and transpositions disabled the same machinery yields the
classic word error rate decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

from .corpus import TimedWord
from .errors import ValidationError

OpKind = Literal["match", "substitute", "insert", "delete", "transpose"]


@dataclass(frozen=True)
class AlignmentOp:
    """One alignment step.

    For transpose the indices name the first word of each swapped adjacent
    pair, so the op covers ref positions (ref_index, ref_index + 1) and hyp
    positions (hyp_index, hyp_index + 1).
    """

    kind: OpKind
    ref_index: int | None
    hyp_index: int | None
    cost: float


@dataclass(frozen=True)
class WordAlignment:
    ops: tuple[AlignmentOp, ...]
    total_cost: float

    def count(self, kind: OpKind) -> int:
        return sum(1 for op in self.ops if op.kind == kind)


@dataclass(frozen=True)
class AlignmentCosts:
    """Cost model for word_edit_alignment.

    substitution "weighted" scales with character-level dissimilarity but never
    below weighted_floor, so near-identical words stay cheaper than an
    insert+delete pair; "unit" charges 1 for any mismatch. transpose_cost None
    disables adjacent transpositions entirely.
    """

    insert_cost: float = 1.0
    delete_cost: float = 1.0
    transpose_cost: float | None = 1.0
    substitution: Literal["weighted", "unit"] = "weighted"
    weighted_floor: float = 0.1


WEIGHTED_COSTS = AlignmentCosts()
UNIT_COSTS = AlignmentCosts(substitution="unit", transpose_cost=None)


def char_distance(a: str, b: str) -> int:
    """Plain character-level Levenshtein distance."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ch_a != ch_b),
                )
            )
        previous = current
    return previous[-1]


def substitution_cost(a: str, b: str, costs: AlignmentCosts = WEIGHTED_COSTS) -> float:
    if a == b:
        return 0.0
    if costs.substitution == "unit":
        return 1.0
    longest = max(len(a), len(b), 1)
    return max(costs.weighted_floor, char_distance(a, b) / longest)


# Backpointer codes, in tie-break preference order.
_DIAG, _TRANSPOSE, _DELETE, _INSERT = 0, 1, 2, 3


def word_edit_alignment(
    ref: Sequence[str],
    hyp: Sequence[str],
    costs: AlignmentCosts = WEIGHTED_COSTS,
) -> WordAlignment:
    """Minimum-cost alignment of hyp onto ref; ties prefer substitution, then
    transposition, then deletion, then insertion."""
    m, n = len(ref), len(hyp)
    dist = [[0.0] * (n + 1) for _ in range(m + 1)]
    back = [[_DIAG] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        dist[i][0] = i * costs.delete_cost
        back[i][0] = _DELETE
    for j in range(1, n + 1):
        dist[0][j] = j * costs.insert_cost
        back[0][j] = _INSERT

    for i in range(1, m + 1):
        for j in range(1, n + 1):
            best = dist[i - 1][j - 1] + substitution_cost(ref[i - 1], hyp[j - 1], costs)
            choice = _DIAG
            if (
                costs.transpose_cost is not None
                and i >= 2
                and j >= 2
                and ref[i - 2] == hyp[j - 1]
                and ref[i - 1] == hyp[j - 2]
            ):
                candidate = dist[i - 2][j - 2] + costs.transpose_cost
                if candidate < best:
                    best, choice = candidate, _TRANSPOSE
            candidate = dist[i - 1][j] + costs.delete_cost
            if candidate < best:
                best, choice = candidate, _DELETE
            candidate = dist[i][j - 1] + costs.insert_cost
            if candidate < best:
                best, choice = candidate, _INSERT
            dist[i][j] = best
            back[i][j] = choice

    ops: list[AlignmentOp] = []
    i, j = m, n
    while i > 0 or j > 0:
        choice = back[i][j]
        if choice == _DIAG:
            cost = substitution_cost(ref[i - 1], hyp[j - 1], costs)
            kind: OpKind = "match" if ref[i - 1] == hyp[j - 1] else "substitute"
            ops.append(AlignmentOp(kind, i - 1, j - 1, cost))
            i, j = i - 1, j - 1
        elif choice == _TRANSPOSE:
            assert costs.transpose_cost is not None
            ops.append(AlignmentOp("transpose", i - 2, j - 2, costs.transpose_cost))
            i, j = i - 2, j - 2
        elif choice == _DELETE:
            ops.append(AlignmentOp("delete", i - 1, None, costs.delete_cost))
            i -= 1
        else:
            ops.append(AlignmentOp("insert", None, j - 1, costs.insert_cost))
            j -= 1
    ops.reverse()
    return WordAlignment(ops=tuple(ops), total_cost=dist[m][n])


# ---------------------------------------------------------------------------
# Timestamp transfer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeInterval:
    """A closed audio interval in seconds."""

    start: float
    end: float

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValidationError(f"interval end {self.end} precedes start {self.start}")

    @property
    def duration(self) -> float:
        return self.end - self.start


def word_intervals(words: Sequence[TimedWord]) -> list[TimeInterval]:
    return [TimeInterval(w.start_time, w.end_time) for w in words]


def transfer_times(
    ref_words: Sequence[TimedWord],
    hyp_texts: Sequence[str],
    costs: AlignmentCosts = WEIGHTED_COSTS,
) -> list[TimedWord]:
    """Give every hyp word a time interval inherited through its alignment to ref.

    Matched, substituted, and transposed words take the interval of their
    positional ref counterpart. Runs of inserted words share the gap between
    their anchored neighbours evenly; the envelope edges of ref bound leading
    and trailing runs. Output start times are non-decreasing whenever the ref
    start times are.
    """
    if not hyp_texts:
        return []
    if not ref_words:
        raise ValidationError("cannot transfer times from an empty reference")

    alignment = word_edit_alignment([w.text for w in ref_words], list(hyp_texts), costs)
    assigned: list[TimeInterval | None] = [None] * len(hyp_texts)
    for op in alignment.ops:
        if op.kind in ("match", "substitute"):
            word = ref_words[op.ref_index]
            assigned[op.hyp_index] = TimeInterval(word.start_time, word.end_time)
        elif op.kind == "transpose":
            for offset in (0, 1):
                word = ref_words[op.ref_index + offset]
                assigned[op.hyp_index + offset] = TimeInterval(word.start_time, word.end_time)

    envelope_start = ref_words[0].start_time
    envelope_end = max(w.end_time for w in ref_words)

    index = 0
    while index < len(assigned):
        if assigned[index] is not None:
            index += 1
            continue
        run_start = index
        while index < len(assigned) and assigned[index] is None:
            index += 1
        run_end = index  # exclusive
        left = assigned[run_start - 1] if run_start > 0 else None
        right = assigned[run_end] if run_end < len(assigned) else None
        if left is None and right is None:
            # Unreachable for nonempty ref and hyp: any all-gap path costs more
            # than one routed through a substitution.
            raise ValidationError("alignment produced no anchors")
        if right is not None:
            hi = right.start
            lo = min(left.end, hi) if left is not None else min(envelope_start, hi)
        else:
            lo = left.end
            hi = max(envelope_end, lo)
        width = (hi - lo) / (run_end - run_start)
        for k in range(run_start, run_end):
            step = k - run_start
            assigned[k] = TimeInterval(lo + step * width, lo + (step + 1) * width)

    return [
        TimedWord(text, interval.start, interval.end)
        for text, interval in zip(hyp_texts, assigned)
    ]


def project_span_to_time(span: tuple[int, int], words: Sequence[TimedWord]) -> TimeInterval:
    """Time extent of the inclusive word-index span (first, last)."""
    first, last = span
    if not 0 <= first <= last < len(words):
        raise ValidationError(
            f"span [{first}, {last}] out of bounds for {len(words)} words"
        )
    return TimeInterval(words[first].start_time, words[last].end_time)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_GAP = "*"
_SYMBOLS = {"match": "", "substitute": "S", "insert": "I", "delete": "D", "transpose": "T"}


def format_alignment(
    ref: Sequence[str], hyp: Sequence[str], alignment: WordAlignment
) -> str:
    """Three-row rendering: reference words, operation codes, hypothesis words."""
    ref_cells: list[str] = []
    op_cells: list[str] = []
    hyp_cells: list[str] = []
    for op in alignment.ops:
        if op.kind == "transpose":
            for offset in (0, 1):
                ref_cells.append(ref[op.ref_index + offset])
                op_cells.append(_SYMBOLS["transpose"])
                hyp_cells.append(hyp[op.hyp_index + offset])
            continue
        ref_cells.append(_GAP if op.ref_index is None else ref[op.ref_index])
        op_cells.append(_SYMBOLS[op.kind])
        hyp_cells.append(_GAP if op.hyp_index is None else hyp[op.hyp_index])

    widths = [
        max(len(r), len(o), len(h)) for r, o, h in zip(ref_cells, op_cells, hyp_cells)
    ]
    def row(label: str, cells: list[str]) -> str:
        padded = " ".join(cell.ljust(width) for cell, width in zip(cells, widths))
        return f"{label} {padded}".rstrip()

    return "\n".join([row("REF:", ref_cells), row("OPS:", op_cells), row("HYP:", hyp_cells)])
