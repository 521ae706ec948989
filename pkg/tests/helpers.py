"""Compact builders shared across test modules."""

from __future__ import annotations

from sqaeval import AnswerAnnotation, ResponseRecord, TimedWord


def make_record(
    record_id: str = "r1",
    section: str = "C",
    words: list[tuple[str, float, float]] | None = None,
    answers: list[tuple[int, int] | None] | None = None,
    prompt: str = "what happened",
    grade: float | None = None,
    transcript_source: str = "manual",
) -> ResponseRecord:
    if words is None:
        words = [("the", 0.0, 0.4), ("cat", 0.5, 0.9), ("sat", 1.0, 1.6)]
    if answers is None:
        answers = [(1, 2)]
    annotations = tuple(
        AnswerAnnotation.no_answer() if span is None else AnswerAnnotation.span(*span)
        for span in answers
    )
    return ResponseRecord(
        id=record_id,
        section=section,
        prompt=prompt,
        words=tuple(TimedWord(t, s, e) for t, s, e in words),
        answers=annotations,
        grade=grade,
        transcript_source=transcript_source,
    )
