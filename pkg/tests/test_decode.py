"""Span decoding from per-token scores."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqaeval import (
    Token,
    TokenLogits,
    ValidationError,
    decode_all,
    decode_span,
    ensemble,
    prediction_text,
    resolve_word_span,
    softmax,
    tokens_to_words,
    word_char_offsets,
)
from sqaeval.decode import (
    group_runs,
    read_logits,
    read_word_predictions,
    serialize_logits,
    write_logits,
    write_word_predictions,
)

import oracles


def _tokens(*texts: str) -> tuple[Token, ...]:
    out = [Token("[CLS]", None, None)]
    cursor = 0
    for text in texts:
        out.append(Token(text, cursor, cursor + len(text)))
        cursor += len(text) + 1
    return tuple(out)


def _logits(start, end, sample_id="s1", seed_id="seed0", n_words=None) -> TokenLogits:
    count = len(start) - 1
    words = [f"w{k}" for k in range(count)] if n_words is None else n_words
    return TokenLogits(sample_id, seed_id, _tokens(*words), tuple(start), tuple(end))


# ---------------------------------------------------------------------------
# Token and logits validation
# ---------------------------------------------------------------------------


def test_logits_require_sentinel_without_offsets():
    with pytest.raises(ValidationError):
        TokenLogits("s", "x", (Token("a", 0, 1),), (0.0,), (0.0,))


def test_logits_reject_score_length_mismatch():
    with pytest.raises(ValidationError):
        _logits([0.0, 1.0], [0.0])


def test_logits_reject_non_finite_scores():
    with pytest.raises(ValidationError):
        _logits([0.0, math.nan], [0.0, 1.0])


def test_logits_reject_overlapping_offsets():
    tokens = (Token("[CLS]", None, None), Token("ab", 0, 2), Token("bc", 1, 3))
    with pytest.raises(ValidationError):
        TokenLogits("s", "x", tokens, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


def test_logits_reject_empty_passage_token():
    tokens = (Token("[CLS]", None, None), Token("", 0, 0))
    with pytest.raises(ValidationError):
        TokenLogits("s", "x", tokens, (0.0, 0.0), (0.0, 0.0))


# ---------------------------------------------------------------------------
# Softmax and ensembling
# ---------------------------------------------------------------------------


def test_softmax_sums_to_one_and_orders():
    probs = softmax([1.0, 2.0, 3.0])
    assert math.fsum(probs) == pytest.approx(1.0)
    assert probs[2] > probs[1] > probs[0]


def test_softmax_is_shift_invariant():
    assert softmax([1.0, 2.0]) == pytest.approx(softmax([101.0, 102.0]))


def test_ensemble_averages_distributions():
    run_a = _logits([math.log(0.2), math.log(0.8)], [math.log(0.5), math.log(0.5)])
    run_b = _logits(
        [math.log(0.6), math.log(0.4)], [math.log(0.5), math.log(0.5)], seed_id="seed1"
    )
    combined = ensemble([run_a, run_b])
    assert combined.seed_id == "ensemble"
    assert combined.start_scores[0] == pytest.approx(0.4, abs=1e-12)
    assert combined.start_scores[1] == pytest.approx(0.6, abs=1e-12)


def test_ensemble_is_permutation_invariant():
    run_a = _logits([0.0, 1.0, 2.0], [2.0, 1.0, 0.0])
    run_b = _logits([5.0, 1.0, 0.0], [0.0, 1.0, 5.0], seed_id="seed1")
    forward = ensemble([run_a, run_b])
    backward = ensemble([run_b, run_a])
    assert forward.start_scores == pytest.approx(backward.start_scores)


def test_ensemble_rejects_mixed_samples():
    run_a = _logits([0.0, 1.0], [0.0, 1.0])
    run_b = _logits([0.0, 1.0], [0.0, 1.0], sample_id="other", seed_id="seed1")
    with pytest.raises(ValidationError):
        ensemble([run_a, run_b])


def test_ensemble_rejects_duplicate_seeds():
    run_a = _logits([0.0, 1.0], [0.0, 1.0])
    run_b = _logits([0.0, 2.0], [0.0, 2.0])
    with pytest.raises(ValidationError):
        ensemble([run_a, run_b])


def test_ensemble_rejects_token_mismatch():
    run_a = _logits([0.0, 1.0], [0.0, 1.0])
    run_b = TokenLogits(
        "s1", "seed1", (Token("[CLS]", None, None), Token("zz", 0, 2)), (0.0, 1.0), (0.0, 1.0)
    )
    with pytest.raises(ValidationError):
        ensemble([run_a, run_b])


# ---------------------------------------------------------------------------
# Span decoding
# ---------------------------------------------------------------------------


def test_decode_span_picks_best_pair():
    pred = decode_span(_logits([0.1, 0.7, 0.2], [0.1, 0.2, 0.7]))
    assert pred.char_span is not None
    assert pred.score == pytest.approx(1.4)
    assert pred.null_score == pytest.approx(0.2)


def test_decode_span_no_answer_when_null_wins():
    pred = decode_span(_logits([5.0, 0.1, 0.1], [5.0, 0.1, 0.1]))
    assert pred.char_span is None
    assert pred.null_score == pytest.approx(10.0)


def test_decode_span_threshold_shifts_the_boundary():
    logits = _logits([0.0, 0.6], [0.0, 0.6])
    assert decode_span(logits).char_span is not None
    assert decode_span(logits, null_threshold=1.5).char_span is None


def test_decode_span_tie_prefers_null():
    logits = _logits([1.0, 1.0], [1.0, 1.0])
    assert decode_span(logits).char_span is None


def test_decode_span_tie_prefers_earliest_span():
    logits = _logits([-9.0, 1.0, 1.0], [-9.0, 1.0, 1.0])
    pred = decode_span(logits)
    assert pred.char_span == (0, 2)


def test_decode_span_respects_max_answer_tokens():
    logits = _logits([-9.0, 2.0, 0.0, 0.0], [-9.0, 0.0, 0.0, 2.0])
    free = decode_span(logits)
    assert free.char_span == (0, 8)
    capped = decode_span(logits, max_answer_tokens=1)
    assert capped.char_span in ((0, 2), (3, 5), (6, 8))


def test_decode_span_single_token_is_degenerate_no_answer():
    logits = TokenLogits("s1", "seed0", (Token("[CLS]", None, None),), (1.0,), (1.0,))
    pred = decode_span(logits)
    assert pred.char_span is None
    assert pred.degenerate


def test_decode_matches_exhaustive_search_on_random_vectors():
    rng = random.Random(3)
    for _ in range(200):
        n = rng.randint(2, 12)
        start = [rng.uniform(-4, 4) for _ in range(n)]
        end = [rng.uniform(-4, 4) for _ in range(n)]
        max_tokens = rng.randint(1, 6)
        threshold = rng.uniform(-1, 1)
        logits = _logits(start, end)
        pred = decode_span(logits, max_tokens, threshold)
        span, _, null_score = oracles.best_span(start, end, max_tokens, threshold)
        assert pred.null_score == pytest.approx(null_score)
        if span is None:
            assert pred.char_span is None
        else:
            s, e = span
            assert pred.char_span == (logits.tokens[s].char_start, logits.tokens[e].char_end)


# ---------------------------------------------------------------------------
# Character spans to word spans
# ---------------------------------------------------------------------------


def test_word_char_offsets_single_space_join():
    assert word_char_offsets(["the", "cat"]) == [(0, 3), (4, 7)]


def test_tokens_to_words_covers_touched_words():
    words = ["the", "cat", "sat"]
    assert tokens_to_words((4, 11), words) == (1, 2)
    assert tokens_to_words((0, 3), words) == (0, 0)
    assert tokens_to_words((2, 5), words) == (0, 1)


def test_tokens_to_words_rejects_spans_outside_text():
    with pytest.raises(ValidationError):
        tokens_to_words((50, 60), ["the", "cat"])


def test_resolve_word_span_and_text():
    pred = decode_span(_logits([0.1, 0.7, 0.2], [0.1, 0.2, 0.7], n_words=["big", "cat"]))
    resolved = resolve_word_span(pred, ["big", "cat"])
    assert resolved.word_span == (0, 1)
    assert prediction_text(pred, "big cat") == "big cat"


def test_resolve_word_span_keeps_no_answer():
    pred = decode_span(_logits([5.0, 0.0], [5.0, 0.0]))
    resolved = resolve_word_span(pred, ["w0"])
    assert resolved.word_span is None
    assert prediction_text(resolved, "w0") == ""


# ---------------------------------------------------------------------------
# Serialization and batch decoding
# ---------------------------------------------------------------------------


def test_logits_round_trip(tmp_path):
    runs = [
        _logits([0.0, 1.0], [0.0, 1.0], sample_id="a", seed_id="s0"),
        _logits([0.0, 2.0], [0.0, 2.0], sample_id="a", seed_id="s1"),
        _logits([1.0, 0.0], [1.0, 0.0], sample_id="b", seed_id="s0"),
    ]
    path = tmp_path / "logits.jsonl"
    write_logits(runs, path)
    loaded = read_logits(path)
    assert loaded == runs
    assert serialize_logits(loaded[0]) == serialize_logits(runs[0])


def test_read_logits_rejects_duplicate_run(tmp_path):
    run = _logits([0.0, 1.0], [0.0, 1.0])
    path = tmp_path / "logits.jsonl"
    path.write_text(serialize_logits(run) + "\n" + serialize_logits(run) + "\n")
    with pytest.raises(ValidationError, match="line 2"):
        read_logits(path)


def test_group_runs_sorts_by_seed():
    runs = [
        _logits([0.0, 1.0], [0.0, 1.0], seed_id="s1"),
        _logits([0.0, 1.0], [0.0, 1.0], seed_id="s0"),
    ]
    grouped = group_runs(runs)
    assert [r.seed_id for r in grouped["s1"]] == ["s0", "s1"]


def test_decode_all_orders_by_sample_and_selects_seeds():
    runs = [
        _logits([0.0, 1.0], [0.0, 1.0], sample_id="b", seed_id="s0"),
        _logits([0.0, 1.0], [0.0, 1.0], sample_id="a", seed_id="s0"),
        _logits([0.0, 1.0], [0.0, 1.0], sample_id="a", seed_id="s1"),
    ]
    preds = decode_all(runs, seed_ids=["s0"])
    assert [p.sample_id for p in preds] == ["a", "b"]
    with pytest.raises(ValidationError, match="missing seeds"):
        decode_all(runs, seed_ids=["s0", "s1"])


def test_word_predictions_round_trip(tmp_path):
    pred_a = resolve_word_span(decode_span(_logits([0.0, 9.0], [0.0, 9.0])), ["w0"])
    pred_b = decode_span(_logits([9.0, 0.0], [9.0, 0.0], sample_id="s2"))
    path = tmp_path / "preds.jsonl"
    write_word_predictions([pred_a, pred_b], path)
    loaded = read_word_predictions(path)
    assert loaded == {"s1": (0, 0), "s2": None}


GRID = st.integers(min_value=-320, max_value=320).map(lambda k: k / 64.0)


@settings(max_examples=100)
@given(st.lists(GRID, min_size=2, max_size=8), GRID)
def test_decode_span_score_is_shift_invariant_in_choice(scores, shift):
    # Dyadic grid values add exactly, so every score comparison is preserved.
    start = scores
    end = list(reversed(scores))
    base = decode_span(_logits(start, end))
    moved = decode_span(_logits([s + shift for s in start], [e + shift for e in end]))
    assert base.char_span == moved.char_span
