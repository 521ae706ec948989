"""Command line entry points: qa-logits and translate-serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from . import qa, translate
from .spec import ModelRunnerError, ModelSpec


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="model-runner",
        description="Runs QA checkpoints into logits interchange files and "
        "serves translation over the line-delimited JSON wire contract.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_qa = sub.add_parser("qa-logits", help="emit start/end logits for QA samples")
    p_qa.add_argument("--checkpoint", required=True,
                      help="model path or hub id; {seed} is templated per seed")
    group = p_qa.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="samples JSONL with id, question, passage")
    group.add_argument("--squad", help="SQuAD 2.0 style JSON file")
    p_qa.add_argument("--output", required=True, help="logits JSONL to write")
    p_qa.add_argument("--seeds", default="0", help="comma-separated seed ids")
    p_qa.add_argument("--batch-size", type=int, default=8)
    p_qa.add_argument("--max-seq-length", type=int, default=384)
    p_qa.add_argument("--doc-stride", type=int, default=128)
    p_qa.add_argument("--device", default="cpu")

    p_tr = sub.add_parser("translate-serve",
                          help="serve translation requests on stdin/stdout")
    p_tr.add_argument("--device", default="cpu")
    p_tr.add_argument("--batch-size", type=int, default=16)
    p_tr.add_argument("--checkpoint-map",
                      help='JSON file mapping "src-tgt" to a checkpoint path')
    return parser


def _cmd_qa_logits(args: argparse.Namespace) -> int:
    seeds = tuple(s.strip() for s in args.seeds.split(",") if s.strip())
    spec = ModelSpec(
        checkpoint=args.checkpoint,
        device=args.device,
        batch_size=args.batch_size,
        seeds=seeds,
        max_seq_length=args.max_seq_length,
        doc_stride=args.doc_stride,
    )
    if args.input is not None:
        samples = qa.read_samples(args.input)
    else:
        samples = qa.read_squad_samples(args.squad)
    written = qa.emit_qa_logits(spec, samples, args.output)
    print(f"wrote {written} records for {len(samples)} samples to {args.output}")
    return 0


def _cmd_translate_serve(args: argparse.Namespace) -> int:
    checkpoints = None
    if args.checkpoint_map is not None:
        with open(args.checkpoint_map, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
        checkpoints = {}
        for key, value in raw.items():
            source, sep, target = key.partition("-")
            if not sep or not source or not target:
                raise ModelRunnerError(
                    f'checkpoint map keys must look like "en-fr", got {key!r}'
                )
            checkpoints[(source, target)] = value
    translator = translate.MarianTranslator(
        device=args.device, batch_size=args.batch_size, checkpoints=checkpoints
    )
    translate.serve(sys.stdin, sys.stdout, translator.translate)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "qa-logits":
            return _cmd_qa_logits(args)
        return _cmd_translate_serve(args)
    except (ModelRunnerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
