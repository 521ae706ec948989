"""Evaluation toolkit for extractive question answering over spoken responses.

The corpus module defines the data model and file formats; align transfers
word timing between transcripts; metrics scores predictions by text and audio
overlap, word error rate, and EM/F1; decode turns per-token scores into
answer spans; augment builds enlarged training corpora; analysis relates
answer quality to transcript quality; cli exposes it all as subcommands.
"""

from .align import (
    AlignmentCosts,
    AlignmentOp,
    TimeInterval,
    UNIT_COSTS,
    WEIGHTED_COSTS,
    WordAlignment,
    char_distance,
    format_alignment,
    project_span_to_time,
    substitution_cost,
    transfer_times,
    word_edit_alignment,
    word_intervals,
)
from .analysis import (
    DegradationFit,
    SystemInputs,
    SystemPoint,
    build_system_points,
    fit_all,
    fit_degradation,
    render_report,
    score_system,
)
from .augment import (
    AugmentationResult,
    AugmentedSample,
    ProvenanceEntry,
    RelocationResult,
    RetentionStats,
    StubTranslationClient,
    SubprocessTranslationClient,
    TranslationClient,
    back_translate_passage,
    build_augmented_set,
    import_tts_asr_passages,
    read_tts_map,
    relocate_answer,
    serialize_provenance_entry,
    split_into_chunks,
    write_sidecar,
)
from .corpus import (
    AnswerAnnotation,
    CorpusStats,
    ResponseRecord,
    SectionStats,
    SqaSample,
    SquadAnswer,
    SquadSample,
    TimedWord,
    corpus_stats,
    dump_sqa_corpus,
    filter_unclear,
    load_sqa_corpus,
    load_squad,
    map_grade,
    normalize_word,
    response_passage,
    samples_from_records,
    serialize_record,
    squad_to_json,
    stats_to_csv,
    tokenize,
    write_squad,
)
from .decode import (
    SpanPrediction,
    Token,
    TokenLogits,
    decode_all,
    decode_span,
    ensemble,
    prediction_text,
    read_logits,
    read_text_predictions,
    read_word_predictions,
    resolve_word_span,
    softmax,
    tokens_to_words,
    word_char_offsets,
    write_logits,
    write_text_predictions,
    write_word_predictions,
)
from .errors import SqaEvalError, TranslationError, ValidationError
from .metrics import (
    EvalReport,
    EvalRow,
    SampleScore,
    SquadScores,
    WerBreakdown,
    aos,
    combine_wer,
    evaluate_corpus,
    evaluate_squad,
    merge_intervals,
    normalize_answer,
    score_sample,
    squad_em,
    squad_f1,
    tos,
    wer,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
