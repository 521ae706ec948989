"""Command line entry point.

Every subcommand reads files named by flags, stages its outputs, and commits
them all at once, so a failed run never leaves a partial file behind. Options
may also come from a JSON config file (--config or the SQAEVAL_CONFIG
environment variable); explicit flags win over the file, the file wins over
built-in defaults. Exit codes: 0 success, 1 data or I/O error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from . import align as align_mod
from . import analysis, augment, corpus, decode, metrics
from .errors import SqaEvalError, ValidationError

CONFIG_ENV_VAR = "SQAEVAL_CONFIG"

_CONFIG_KEYS = {
    "jobs",
    "max_answer_tokens",
    "null_threshold",
    "tos_mode",
    "pivots",
    "marker",
    "translator",
    "fuzzy_threshold",
    "window_slack",
    "include_reference",
    "seeds",
    "format",
}

VALIDATE_FORMATS = ("sqa", "squad", "logits", "predictions", "squad-predictions", "ttsmap")

WER_CSV_HEADER = "id,ref_words,substitutions,deletions,insertions,wer"


# ---------------------------------------------------------------------------
# Option plumbing
# ---------------------------------------------------------------------------


def _load_config(args: argparse.Namespace) -> dict:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"config {path}: must be a JSON object")
    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise ValidationError(f"config {path}: unknown key {sorted(unknown)[0]!r}")
    return payload


def _opt(args: argparse.Namespace, config: Mapping, key: str, default: object) -> object:
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _as_int(value: object, key: str, minimum: int | None = None) -> int:
    try:
        result = int(value)  # type: ignore[arg-type]
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{key} must be an integer, got {value!r}") from exc
    if minimum is not None and result < minimum:
        raise ValidationError(f"{key} must be at least {minimum}, got {result}")
    return result


def _as_float(value: object, key: str) -> float:
    try:
        return float(value)  # type: ignore[arg-type]
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{key} must be a number, got {value!r}") from exc


def _as_choice(value: object, key: str, choices: Sequence[str]) -> str:
    if value not in choices:
        raise ValidationError(f"{key} must be one of {', '.join(choices)}, got {value!r}")
    return str(value)


def _as_names(value: object, key: str) -> list[str]:
    """Comma-separated flag value or config list, as a list of names."""
    if isinstance(value, str):
        names = [part.strip() for part in value.split(",")]
    elif isinstance(value, (list, tuple)):
        names = [str(part).strip() for part in value]
    else:
        raise ValidationError(f"{key} must be a comma-separated string or a list")
    names = [name for name in names if name]
    if not names:
        raise ValidationError(f"{key} must name at least one item")
    return names


def _pmap(jobs: int) -> Callable:
    """An order-preserving map, parallel when jobs exceeds one."""
    if jobs == 1:
        return map

    def mapper(fn: Callable, items: Iterable) -> list:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, list(items)))

    return mapper


class _OutputSet:
    """Staged output files, committed together or not at all."""

    def __init__(self) -> None:
        self._files: list[tuple[Path, str]] = []

    def add(self, path: str | Path, content: str) -> None:
        self._files.append((Path(path), content))

    def commit(self) -> None:
        staged: list[tuple[Path, Path]] = []
        try:
            for path, content in self._files:
                tmp = path.with_name(f"{path.name}.{os.getpid()}.tmp")
                tmp.write_text(content, encoding="utf-8")
                staged.append((tmp, path))
            for tmp, path in staged:
                os.replace(tmp, path)
        except BaseException:
            for tmp, _ in staged:
                tmp.unlink(missing_ok=True)
            raise


def _emit(outputs: _OutputSet, path: str | None, content: str) -> str | None:
    """Stage content to path, or return it for stdout after the commit."""
    if path is None:
        return content
    outputs.add(path, content)
    return None


def _jsonl(lines: Sequence[str]) -> str:
    return "".join(line + "\n" for line in lines)


def _check_id_sets(expected: set[str], actual: set[str], what: str) -> None:
    missing = sorted(expected - actual)
    extra = sorted(actual - expected)
    problems = []
    if missing:
        problems.append(f"missing {', '.join(missing)}")
    if extra:
        problems.append(f"unexpected {', '.join(extra)}")
    if problems:
        raise ValidationError(f"{what} ids {'; '.join(problems)}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_validate(args: argparse.Namespace, config: Mapping) -> int:
    loaders = {
        "sqa": lambda p: len(corpus.load_sqa_corpus(p)),
        "squad": lambda p: len(corpus.load_squad(p)),
        "logits": lambda p: len(decode.read_logits(p)),
        "predictions": lambda p: len(decode.read_word_predictions(p)),
        "squad-predictions": lambda p: len(decode.read_text_predictions(p)),
        "ttsmap": lambda p: len(augment.read_tts_map(p)),
    }
    fmt = _as_choice(_opt(args, config, "format", None), "format", VALIDATE_FORMATS)
    count = loaders[fmt](args.input)
    print(f"OK: {count} records")
    return 0


def _cmd_stats(args: argparse.Namespace, config: Mapping) -> int:
    records = corpus.load_sqa_corpus(args.input)
    marker = _opt(args, config, "marker", None)
    if marker is not None:
        records = corpus.filter_unclear(records, str(marker))
    content = corpus.stats_to_csv(corpus.corpus_stats(records))
    outputs = _OutputSet()
    to_stdout = _emit(outputs, args.output, content)
    outputs.commit()
    if to_stdout is not None:
        sys.stdout.write(to_stdout)
    return 0


def _cmd_decode(args: argparse.Namespace, config: Mapping) -> int:
    runs = decode.read_logits(args.input)
    jobs = _as_int(_opt(args, config, "jobs", 1), "jobs", minimum=1)
    max_tokens = _as_int(
        _opt(args, config, "max_answer_tokens", decode.DEFAULT_MAX_ANSWER_TOKENS),
        "max_answer_tokens",
        minimum=1,
    )
    threshold = _as_float(
        _opt(args, config, "null_threshold", decode.DEFAULT_NULL_THRESHOLD),
        "null_threshold",
    )
    seeds_opt = _opt(args, config, "seeds", None)
    seed_ids = _as_names(seeds_opt, "seeds") if seeds_opt is not None else None

    predictions = decode.decode_all(runs, max_tokens, threshold, seed_ids, _pmap(jobs))

    if args.corpus:
        records = {r.id: r for r in corpus.load_sqa_corpus(args.corpus)}
        unknown = sorted({p.sample_id for p in predictions} - set(records))
        if unknown:
            raise ValidationError(f"score rows for unknown ids: {', '.join(unknown)}")
        lines = [
            decode.serialize_word_prediction(
                decode.resolve_word_span(p, records[p.sample_id].word_texts)
            )
            for p in predictions
        ]
    else:
        samples = {s.id: s for s in corpus.load_squad(args.squad)}
        unknown = sorted({p.sample_id for p in predictions} - set(samples))
        if unknown:
            raise ValidationError(f"score rows for unknown ids: {', '.join(unknown)}")
        lines = [
            decode.serialize_text_prediction(p, samples[p.sample_id].passage)
            for p in predictions
        ]

    outputs = _OutputSet()
    to_stdout = _emit(outputs, args.output, _jsonl(lines))
    outputs.commit()
    if to_stdout is not None:
        sys.stdout.write(to_stdout)
    return 0


def _cmd_eval(args: argparse.Namespace, config: Mapping) -> int:
    jobs = _as_int(_opt(args, config, "jobs", 1), "jobs", minimum=1)
    outputs = _OutputSet()

    if args.corpus:
        records = corpus.load_sqa_corpus(args.corpus)
        predictions = decode.read_word_predictions(args.input)
        _check_id_sets({r.id for r in records}, set(predictions), "prediction")
        tos_mode = _as_choice(
            _opt(args, config, "tos_mode", "set"), "tos_mode", ("set", "multiset")
        )
        pairs = [
            (sample, predictions[sample.response.id])
            for sample in corpus.samples_from_records(records)
        ]
        report = metrics.evaluate_corpus(pairs, tos_mode, _pmap(jobs))
        to_stdout = _emit(outputs, args.output, metrics.eval_report_to_csv(report))
        if args.rows:
            outputs.add(args.rows, metrics.sample_scores_to_csv(report.samples))
    else:
        if args.rows:
            raise ValidationError("--rows applies only to corpus evaluation")
        samples = corpus.load_squad(args.squad)
        texts = decode.read_text_predictions(args.input)
        _check_id_sets({s.id for s in samples}, set(texts), "prediction")
        scores = metrics.evaluate_squad(samples, texts)
        to_stdout = _emit(outputs, args.output, metrics.squad_scores_to_csv(scores))

    outputs.commit()
    if to_stdout is not None:
        sys.stdout.write(to_stdout)
    return 0


def _cmd_wer(args: argparse.Namespace, config: Mapping) -> int:
    ref_by_id = {r.id: r for r in corpus.load_sqa_corpus(args.ref)}
    hyp_by_id = {r.id: r for r in corpus.load_sqa_corpus(args.input)}
    _check_id_sets(set(ref_by_id), set(hyp_by_id), "transcript")
    jobs = _as_int(_opt(args, config, "jobs", 1), "jobs", minimum=1)

    def one(sample_id: str) -> tuple[str, metrics.WerBreakdown]:
        breakdown = metrics.wer(
            ref_by_id[sample_id].word_texts, hyp_by_id[sample_id].word_texts
        )
        return sample_id, breakdown

    results = list(_pmap(jobs)(one, sorted(ref_by_id)))
    lines = [WER_CSV_HEADER]
    for sample_id, b in results:
        lines.append(
            f"{sample_id},{b.ref_length},{b.substitutions},{b.deletions},"
            f"{b.insertions},{b.wer!r}"
        )
    total = metrics.combine_wer(b for _, b in results)
    lines.append(
        f"ALL,{total.ref_length},{total.substitutions},{total.deletions},"
        f"{total.insertions},{total.wer!r}"
    )

    outputs = _OutputSet()
    to_stdout = _emit(outputs, args.output, "\n".join(lines) + "\n")
    outputs.commit()
    if to_stdout is not None:
        sys.stdout.write(to_stdout)
    return 0


def _cmd_align(args: argparse.Namespace, config: Mapping) -> int:
    ref_by_id = {r.id: r for r in corpus.load_sqa_corpus(args.ref)}
    hyp_by_id = {r.id: r for r in corpus.load_sqa_corpus(args.input)}
    _check_id_sets(set(ref_by_id), set(hyp_by_id), "transcript")
    jobs = _as_int(_opt(args, config, "jobs", 1), "jobs", minimum=1)
    want_dump = args.dump is not None

    def one(sample_id: str) -> tuple[str, str]:
        ref = ref_by_id[sample_id]
        hyp = hyp_by_id[sample_id]
        timed = tuple(align_mod.transfer_times(ref.words, hyp.word_texts))
        line = corpus.serialize_record(dataclasses.replace(hyp, words=timed))
        rendering = ""
        if want_dump:
            alignment = align_mod.word_edit_alignment(ref.word_texts, hyp.word_texts)
            rendering = f"# {sample_id}\n" + align_mod.format_alignment(
                ref.word_texts, hyp.word_texts, alignment
            )
        return line, rendering

    results = list(_pmap(jobs)(one, sorted(ref_by_id)))
    outputs = _OutputSet()
    to_stdout = _emit(outputs, args.output, _jsonl([line for line, _ in results]))
    if want_dump:
        outputs.add(args.dump, "\n\n".join(r for _, r in results) + "\n")
    outputs.commit()
    if to_stdout is not None:
        sys.stdout.write(to_stdout)
    return 0


def _make_translation_client(spec: str) -> augment.TranslationClient:
    if spec == "identity":
        return augment.StubTranslationClient(lambda text, source, target: text)
    if spec.startswith("cmd:"):
        command = shlex.split(spec[len("cmd:") :])
        if not command:
            raise ValidationError("translator command is empty")
        return augment.SubprocessTranslationClient(command)
    raise ValidationError(f"translator must be 'identity' or 'cmd:<command>', got {spec!r}")


def _cmd_augment(args: argparse.Namespace, config: Mapping) -> int:
    samples = corpus.load_squad(args.input)
    pivots = _as_names(_opt(args, config, "pivots", list(augment.DEFAULT_PIVOTS)), "pivots")
    threshold = _as_float(
        _opt(args, config, "fuzzy_threshold", augment.DEFAULT_FUZZY_THRESHOLD),
        "fuzzy_threshold",
    )
    slack = _as_int(
        _opt(args, config, "window_slack", augment.DEFAULT_WINDOW_SLACK),
        "window_slack",
        minimum=0,
    )
    spec = str(_opt(args, config, "translator", "identity"))
    tts_map = None
    if args.tts_map:
        tts_map = augment.read_tts_map(args.tts_map)

    with _make_translation_client(spec) as client:
        result = augment.build_augmented_set(
            samples, client, pivots, tts_map, threshold, slack
        )

    outputs = _OutputSet()
    outputs.add(args.output, corpus.squad_to_json(result.squad_samples))
    outputs.add(
        args.sidecar,
        _jsonl([augment.serialize_provenance_entry(e) for e in result.sidecar]),
    )
    outputs.commit()
    for name, stats in result.retention.items():
        print(f"{name}: kept {stats.kept}/{stats.attempted}")
    return 0


def _cmd_analyze(args: argparse.Namespace, config: Mapping) -> int:
    config_path = Path(args.input)
    with open(config_path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{config_path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or set(payload) != {"reference", "systems"}:
        raise ValidationError(f"{config_path}: must be {{reference, systems}}")
    if not isinstance(payload["systems"], dict) or not payload["systems"]:
        raise ValidationError(f"{config_path}: systems must be a non-empty object")

    base = config_path.parent
    reference = corpus.load_sqa_corpus(base / payload["reference"])
    marker = _opt(args, config, "marker", None)
    if marker is not None:
        reference = corpus.filter_unclear(reference, str(marker))
    keep_ids = {r.id for r in reference}

    systems: dict[str, analysis.SystemInputs] = {}
    for name in sorted(payload["systems"]):
        entry = payload["systems"][name]
        if not isinstance(entry, dict) or set(entry) != {"corpus", "predictions"}:
            raise ValidationError(
                f"{config_path}: system {name!r} must be {{corpus, predictions}}"
            )
        records = corpus.load_sqa_corpus(base / entry["corpus"])
        predictions = decode.read_word_predictions(base / entry["predictions"])
        if marker is not None:
            records = [r for r in records if r.id in keep_ids]
            predictions = {k: v for k, v in predictions.items() if k in keep_ids}
        systems[name] = analysis.SystemInputs(records, predictions)

    tos_mode = _as_choice(
        _opt(args, config, "tos_mode", "set"), "tos_mode", ("set", "multiset")
    )
    include_reference = bool(_opt(args, config, "include_reference", False))
    points = analysis.build_system_points(reference, systems, tos_mode)
    fits = analysis.fit_all(points, include_reference)

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _OutputSet()
    for file_name, content in analysis.render_report(points, fits).items():
        outputs.add(out_dir / file_name, content)
    outputs.commit()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqaeval",
        description="Evaluation toolkit for extractive question answering over "
        "spoken responses.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("validate", parents=[common], help="check a data file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=VALIDATE_FORMATS)
    p.set_defaults(handler=_cmd_validate)

    p = subparsers.add_parser("stats", parents=[common], help="corpus statistics table")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--marker", help="drop responses containing this word")
    p.set_defaults(handler=_cmd_stats)

    p = subparsers.add_parser("decode", parents=[common], help="decode spans from scores")
    p.add_argument("--input", required=True, help="score file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--corpus", help="spoken corpus the scores refer to")
    group.add_argument("--squad", help="text corpus the scores refer to")
    p.add_argument("--output")
    p.add_argument("--seeds", help="comma-separated seed ids to ensemble")
    p.add_argument("--max-answer-tokens", type=int, dest="max_answer_tokens")
    p.add_argument("--null-threshold", type=float, dest="null_threshold")
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=_cmd_decode)

    p = subparsers.add_parser("eval", parents=[common], help="score predictions")
    p.add_argument("--input", required=True, help="prediction file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--corpus", help="spoken corpus with gold annotations")
    group.add_argument("--squad", help="text corpus with gold answers")
    p.add_argument("--output")
    p.add_argument("--rows", help="also write per-sample scores to this file")
    p.add_argument("--tos-mode", choices=("set", "multiset"), dest="tos_mode")
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=_cmd_eval)

    p = subparsers.add_parser("wer", parents=[common], help="word error rate table")
    p.add_argument("--ref", required=True, help="reference corpus")
    p.add_argument("--input", required=True, help="hypothesis corpus")
    p.add_argument("--output")
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=_cmd_wer)

    p = subparsers.add_parser(
        "align", parents=[common], help="transfer word timing onto a hypothesis"
    )
    p.add_argument("--ref", required=True, help="reference corpus with timing")
    p.add_argument("--input", required=True, help="hypothesis corpus")
    p.add_argument("--output")
    p.add_argument("--dump", help="also write a readable alignment listing")
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=_cmd_align)

    p = subparsers.add_parser("augment", parents=[common], help="build an augmented corpus")
    p.add_argument("--input", required=True, help="text corpus to augment")
    p.add_argument("--output", required=True, help="augmented corpus file")
    p.add_argument("--sidecar", required=True, help="provenance file")
    p.add_argument("--pivots", help="comma-separated pivot languages")
    p.add_argument(
        "--translator", help="translation backend: identity or cmd:<command>"
    )
    p.add_argument("--tts-map", dest="tts_map", help="id-to-transcript file")
    p.add_argument("--fuzzy-threshold", type=float, dest="fuzzy_threshold")
    p.add_argument("--window-slack", type=int, dest="window_slack")
    p.set_defaults(handler=_cmd_augment)

    p = subparsers.add_parser(
        "analyze", parents=[common], help="degradation analysis across systems"
    )
    p.add_argument("--input", required=True, help="systems config file")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument(
        "--include-reference",
        action=argparse.BooleanOptionalAction,
        dest="include_reference",
        help="keep zero-error points in the fits",
    )
    p.add_argument("--tos-mode", choices=("set", "multiset"), dest="tos_mode")
    p.add_argument("--marker", help="drop responses containing this word")
    p.set_defaults(handler=_cmd_analyze)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        return args.handler(args, config)
    except SqaEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
