"""Back-translation, answer relocation, and corpus augmentation."""

from __future__ import annotations

import json
import sys

import pytest

from sqaeval import (
    SquadAnswer,
    SquadSample,
    StubTranslationClient,
    SubprocessTranslationClient,
    TranslationError,
    ValidationError,
    back_translate_passage,
    build_augmented_set,
    import_tts_asr_passages,
    read_tts_map,
    relocate_answer,
    split_into_chunks,
)
from sqaeval.augment import serialize_provenance_entry, write_sidecar


def _answerable(sample_id="q1", passage="the central bank is busy", answer="central bank"):
    start = passage.index(answer)
    return SquadSample(
        sample_id, "who is busy", passage, (SquadAnswer(answer, start, start + len(answer)),), False
    )


def _unanswerable(sample_id="q2", passage="nothing to see here"):
    return SquadSample(sample_id, "what color", passage, (), True)


# ---------------------------------------------------------------------------
# Chunking
# ---------------------------------------------------------------------------


def test_split_short_passage_is_one_chunk():
    assert split_into_chunks("Just one sentence.") == ["Just one sentence."]


def test_split_groups_sentences_under_the_limit():
    passage = "One. Two. Three."
    assert split_into_chunks(passage, max_chars=12) == ["One. Two.", "Three."]


def test_split_keeps_oversized_sentence_whole():
    long_sentence = "word " * 200
    chunks = split_into_chunks(long_sentence.strip() + ".")
    assert len(chunks) == 1


def test_split_preserves_all_text():
    passage = "Alpha beta. Gamma delta! Epsilon zeta? Eta theta."
    chunks = split_into_chunks(passage, max_chars=15)
    assert " ".join(chunks) == passage


# ---------------------------------------------------------------------------
# Round-trip translation
# ---------------------------------------------------------------------------


def test_back_translate_passage_round_trips_through_pivot():
    log = []

    def fake(text, source, target):
        log.append((source, target))
        return text.upper() if target == "fr" else text.lower()

    client = StubTranslationClient(fake)
    result = back_translate_passage("Hello There. Nice Day.", "fr", client)
    assert result == "hello there. nice day."
    assert ("en", "fr") in log
    assert ("fr", "en") in log


def test_back_translate_batches_one_call_per_direction():
    calls = []

    class CountingClient(StubTranslationClient):
        def translate(self, texts, source, target):
            calls.append((source, target, len(texts)))
            return list(texts)

    client = CountingClient(lambda t, s, d: t)
    passage = "One sentence here. " * 60
    back_translate_passage(passage.strip(), "de", client)
    assert len(calls) == 2
    assert calls[0][0] == "en" and calls[0][1] == "de"
    assert calls[1][0] == "de" and calls[1][1] == "en"
    assert calls[0][2] > 1


def test_back_translate_collapses_whitespace():
    client = StubTranslationClient(lambda t, s, d: t + "  ")
    assert back_translate_passage("A. B.", "fr", client) == "A. B."


# ---------------------------------------------------------------------------
# Answer relocation
# ---------------------------------------------------------------------------


def test_relocate_exact_match():
    result = relocate_answer("central bank", "the central bank is busy")
    assert result.outcome == "exact"
    assert result.char_span == (4, 16)
    assert result.match_score == 1.0


def test_relocate_exact_is_case_insensitive():
    result = relocate_answer("Central Bank", "THE CENTRAL BANK IS BUSY")
    assert result.outcome == "exact"
    assert result.char_span == (4, 16)


def test_relocate_rejects_embedded_word_match():
    result = relocate_answer("central bank", "the central banks are busy")
    assert result.outcome == "dropped"
    assert result.char_span is None
    assert result.match_score < 0.8


def test_relocate_fuzzy_window():
    result = relocate_answer("the red cat", "a red cat sat down")
    assert result.outcome == "fuzzy"
    assert result.match_score == pytest.approx(0.8)
    passage = "a red cat sat down"
    assert passage[result.char_span[0] : result.char_span[1]] == "red cat"


def test_relocate_fuzzy_below_threshold_drops():
    result = relocate_answer("one two three four five", "one here and nothing else at all")
    assert result.outcome == "dropped"


def test_relocate_first_occurrence_wins():
    result = relocate_answer("bank", "bank near the bank")
    assert result.char_span == (0, 4)


def test_relocate_ignores_punctuation_around_words():
    result = relocate_answer("central bank", 'they said "central bank!" loudly')
    assert result.outcome in ("exact", "fuzzy")
    assert result.match_score == 1.0


def test_relocate_empty_answer_drops():
    assert relocate_answer("", "some passage").outcome == "dropped"


# ---------------------------------------------------------------------------
# Corpus building
# ---------------------------------------------------------------------------


def test_identity_translation_doubles_answerable_samples():
    base = [_answerable(), _unanswerable()]
    client = StubTranslationClient(lambda t, s, d: t)
    result = build_augmented_set(base, client, pivots=("fr",))
    answerable = [m for m in result.samples if m.sample.gold_answers]
    assert len(answerable) == 2
    assert {m.provenance for m in result.samples} == {"original", "back_translation:fr"}
    # only the answerable sample is a relocation attempt
    assert result.retention["bt:fr"].attempted == 1
    assert result.retention["bt:fr"].kept == 1
    assert result.retention["bt:fr"].rate == 1.0
    bt_entries = [e for e in result.sidecar if e.provenance == "back_translation:fr"]
    assert {e.outcome for e in bt_entries} == {"exact", "no_answer"}


def test_generated_ids_are_namespaced():
    base = [_answerable("q1")]
    client = StubTranslationClient(lambda t, s, d: t)
    result = build_augmented_set(base, client, pivots=("fr", "de"))
    assert [m.sample.id for m in result.samples] == ["q1", "q1::bt-fr", "q1::bt-de"]
    assert [m.source_id for m in result.samples] == ["q1", "q1", "q1"]


def test_answer_deleting_translation_keeps_nothing():
    base = [_answerable()]

    def delete_answer(text, source, target):
        return text.replace("central", "").replace("bank", "")

    client = StubTranslationClient(delete_answer)
    result = build_augmented_set(base, client, pivots=("fr",))
    assert result.retention["bt:fr"].kept == 0
    assert result.retention["bt:fr"].rate == 0.0
    assert [m.provenance for m in result.samples] == ["original"]
    dropped = [e for e in result.sidecar if e.outcome == "dropped"]
    assert len(dropped) == 1


def test_translation_failure_is_recorded_and_skipped(caplog):
    base = [_answerable()]

    def boom(text, source, target):
        raise TranslationError("backend offline")

    client = StubTranslationClient(boom)
    result = build_augmented_set(base, client, pivots=("fr",))
    assert [m.provenance for m in result.samples] == ["original"]
    errors = [e for e in result.sidecar if e.outcome == "error"]
    assert len(errors) == 1
    assert errors[0].provenance == "back_translation:fr"


def test_unanswerable_samples_pass_through_translation():
    base = [_unanswerable()]
    client = StubTranslationClient(lambda t, s, d: t.upper())
    result = build_augmented_set(base, client, pivots=("fr",))
    generated = [m for m in result.samples if m.provenance != "original"]
    assert len(generated) == 1
    assert generated[0].sample.is_impossible
    assert generated[0].sample.passage == "NOTHING TO SEE HERE"


def test_squad_samples_property_strips_wrappers():
    base = [_answerable()]
    client = StubTranslationClient(lambda t, s, d: t)
    result = build_augmented_set(base, client, pivots=())
    assert [s.id for s in result.squad_samples] == ["q1"]


def test_relocated_spans_are_valid_by_construction():
    base = [_answerable(passage="Bank counters were busy. The central bank raised rates.")]

    def shuffle(text, source, target):
        return "After review the central bank has raised rates."

    client = StubTranslationClient(shuffle)
    result = build_augmented_set(base, client, pivots=("fr",))
    for member in result.samples:
        for gold in member.sample.gold_answers:
            assert member.sample.passage[gold.char_start : gold.char_end] == gold.text


# ---------------------------------------------------------------------------
# Transcript substitution imports
# ---------------------------------------------------------------------------


def test_read_tts_map(tmp_path):
    path = tmp_path / "tts.jsonl"
    path.write_text(
        json.dumps({"id": "q1", "transcript": "hello"})
        + "\n"
        + json.dumps({"id": "q2", "transcript": "bye"})
        + "\n",
        encoding="utf-8",
    )
    assert read_tts_map(path) == {"q1": "hello", "q2": "bye"}


def test_read_tts_map_rejects_duplicates(tmp_path):
    path = tmp_path / "tts.jsonl"
    line = json.dumps({"id": "q1", "transcript": "hello"})
    path.write_text(line + "\n" + line + "\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 2"):
        read_tts_map(path)


def test_read_tts_map_rejects_unknown_fields(tmp_path):
    path = tmp_path / "tts.jsonl"
    path.write_text(json.dumps({"id": "q1", "text": "x"}) + "\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        read_tts_map(path)


def test_import_tts_passages_relocates_answers(tmp_path):
    path = tmp_path / "tts.jsonl"
    path.write_text(
        json.dumps({"id": "q1", "transcript": "so the central bank is very busy"}) + "\n",
        encoding="utf-8",
    )
    result = import_tts_asr_passages(path, [_answerable()])
    (member,) = result.samples
    assert member.sample.id == "q1::tts"
    assert member.provenance == "tts_asr"
    gold = member.sample.gold_answers[0]
    assert member.sample.passage[gold.char_start : gold.char_end] == "central bank"


def test_import_tts_passages_skips_orphans_with_warning(tmp_path, caplog):
    path = tmp_path / "tts.jsonl"
    path.write_text(
        json.dumps({"id": "ghost", "transcript": "who am i"}) + "\n", encoding="utf-8"
    )
    import logging

    with caplog.at_level(logging.WARNING, logger="sqaeval.augment"):
        result = import_tts_asr_passages(path, [_answerable()])
    assert result.samples == ()
    assert any("ghost" in message for message in caplog.messages)


def test_import_tts_passages_drops_lost_answers(tmp_path):
    path = tmp_path / "tts.jsonl"
    path.write_text(
        json.dumps({"id": "q1", "transcript": "totally unrelated words"}) + "\n",
        encoding="utf-8",
    )
    result = import_tts_asr_passages(path, [_answerable()])
    assert result.samples == ()
    assert result.retention["tts_asr"].kept == 0


# ---------------------------------------------------------------------------
# Sidecar serialization
# ---------------------------------------------------------------------------


def test_sidecar_round_trip(tmp_path):
    base = [_answerable()]
    client = StubTranslationClient(lambda t, s, d: t)
    result = build_augmented_set(base, client, pivots=("fr",))
    path = tmp_path / "sidecar.jsonl"
    write_sidecar(result.sidecar, path)
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    assert len(lines) == len(result.sidecar)
    first = json.loads(lines[0])
    assert set(first) == {"id", "source_id", "provenance", "outcome", "match_score"}
    assert serialize_provenance_entry(result.sidecar[0]) == lines[0]


# ---------------------------------------------------------------------------
# Subprocess translation client
# ---------------------------------------------------------------------------

_ECHO_SERVER = """
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if req["target"] == "boom":
        print(json.dumps({"error": "no such language"}), flush=True)
        continue
    out = [t.upper() if req["target"] != "en" else t.lower() for t in req["texts"]]
    print(json.dumps({"texts": out}), flush=True)
"""


def test_subprocess_client_round_trip():
    with SubprocessTranslationClient([sys.executable, "-c", _ECHO_SERVER]) as client:
        assert client.translate(["Hello", "World"], "en", "fr") == ["HELLO", "WORLD"]
        assert client.translate(["BACK"], "fr", "en") == ["back"]


def test_subprocess_client_error_reply_raises():
    with SubprocessTranslationClient([sys.executable, "-c", _ECHO_SERVER]) as client:
        with pytest.raises(TranslationError, match="no such language"):
            client.translate(["x"], "en", "boom")


def test_subprocess_client_dead_process_raises():
    client = SubprocessTranslationClient([sys.executable, "-c", "import sys; sys.exit(0)"])
    with pytest.raises(TranslationError):
        client.translate(["x"], "en", "fr")
    client.close()


def test_subprocess_client_length_mismatch_raises():
    server = """
import json, sys
for line in sys.stdin:
    print(json.dumps({"texts": []}), flush=True)
"""
    with SubprocessTranslationClient([sys.executable, "-c", server]) as client:
        with pytest.raises(TranslationError):
            client.translate(["a", "b"], "en", "fr")
