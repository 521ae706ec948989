"""Shared fixtures plus the acceptance-criteria summary hook."""

from __future__ import annotations

import json

import pytest

from sqaeval import dump_sqa_corpus
from sqaeval.decode import Token, TokenLogits, serialize_logits

from helpers import make_record

ACCEPTANCE_TITLES = {
    1: "wer, aos, and tos agree with independent oracles",
    2: "degradation slopes match the published table",
    3: "decode_span matches exhaustive span search",
    4: "alignment is optimal and timestamp transfer recovers intervals",
    5: "scores degrade monotonically and text degrades faster than audio",
    6: "corpus statistics are exact and the table header is documented",
    7: "augmentation doubles answerable data and never emits invalid spans",
    8: "every CLI subcommand is byte-for-byte deterministic",
}

_RESULTS: dict[int, bool] = {}


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line(
        "markers", "acceptance(n): test verifies numbered acceptance criterion n"
    )


def pytest_runtest_logreport(report: pytest.TestReport) -> None:
    if report.when != "call":
        return
    marker = getattr(report, "_acceptance_criterion", None)
    if marker is None:
        return
    passed = report.outcome == "passed"
    _RESULTS[marker] = _RESULTS.get(marker, True) and passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item: pytest.Item, call: pytest.CallInfo):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        report._acceptance_criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter, exitstatus: int, config: pytest.Config) -> None:
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_RESULTS):
        verdict = "PASS" if _RESULTS[criterion] else "FAIL"
        title = ACCEPTANCE_TITLES.get(criterion, "")
        terminalreporter.write_line(f"criterion {criterion}: {verdict} - {title}")


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture
def workspace(tmp_path):
    """Write a miniature end-to-end data set for CLI tests."""
    ref = [
        make_record("r1", words=[("the", 0.0, 0.3), ("cat", 0.3, 0.6), ("sat", 0.7, 1.1)]),
        make_record(
            "r2",
            section="D",
            words=[("a", 0.0, 0.4), ("dog", 0.5, 0.9)],
            answers=[None],
        ),
    ]
    dump_sqa_corpus(ref, tmp_path / "ref.jsonl")

    hyp = [
        make_record(
            "r1",
            words=[("the", 0.0, 0.0), ("hat", 0.0, 0.0), ("sat", 0.0, 0.0)],
            answers=[],
            transcript_source="asr:test",
        ),
        make_record(
            "r2",
            section="D",
            words=[("a", 0.0, 0.0), ("dog", 0.0, 0.0)],
            answers=[],
            transcript_source="asr:test",
        ),
    ]
    dump_sqa_corpus(hyp, tmp_path / "hyp.jsonl")

    preds = [
        {"version": 1, "sample_id": "r1", "first": 1, "last": 2, "score": 3.0, "null_score": 0.1},
        {"version": 1, "sample_id": "r2", "first": None, "last": None, "score": 0.0, "null_score": 2.0},
    ]
    with open(tmp_path / "preds.jsonl", "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps(p) + "\n")

    def run(tokens, start, end, sample_id, seed_id):
        toks = [Token("[CLS]", None, None)]
        cursor = 0
        for t in tokens:
            toks.append(Token(t, cursor, cursor + len(t)))
            cursor += len(t) + 1
        return TokenLogits(sample_id, seed_id, tuple(toks), tuple(start), tuple(end))

    runs = [
        run(["the", "cat", "sat"], [0.0, 0.1, 3.0, 0.2], [0.0, 0.1, 0.2, 3.0], "r1", "s0"),
        run(["the", "cat", "sat"], [0.0, 0.2, 2.8, 0.1], [0.0, 0.1, 0.3, 2.9], "r1", "s1"),
        run(["a", "dog"], [5.0, 0.1, 0.2], [5.0, 0.1, 0.2], "r2", "s0"),
        run(["a", "dog"], [4.8, 0.2, 0.1], [4.9, 0.2, 0.2], "r2", "s1"),
    ]
    with open(tmp_path / "logits.jsonl", "w", encoding="utf-8") as fh:
        for r in runs:
            fh.write(serialize_logits(r) + "\n")

    squad = {
        "version": "v2.0",
        "data": [
            {
                "title": "t",
                "paragraphs": [
                    {
                        "context": "the cat sat",
                        "qas": [
                            {
                                "id": "r1",
                                "question": "what did the cat do",
                                "is_impossible": False,
                                "answers": [{"text": "cat sat", "answer_start": 4}],
                            }
                        ],
                    },
                    {
                        "context": "a dog",
                        "qas": [
                            {
                                "id": "r2",
                                "question": "what",
                                "is_impossible": True,
                                "answers": [],
                            }
                        ],
                    },
                ],
            }
        ],
    }
    (tmp_path / "squad.json").write_text(json.dumps(squad), encoding="utf-8")

    with open(tmp_path / "tts.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"id": "r1", "transcript": "well the cat sat down"}) + "\n")

    analysis_cfg = {
        "reference": "ref.jsonl",
        "systems": {
            "manual": {"corpus": "ref.jsonl", "predictions": "preds.jsonl"},
            "noisy": {"corpus": "hyp.jsonl", "predictions": "preds.jsonl"},
        },
    }
    (tmp_path / "analysis.json").write_text(json.dumps(analysis_cfg), encoding="utf-8")
    return tmp_path
