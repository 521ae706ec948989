"""Translation serving over the line-delimited JSON wire contract.

Each request line is {"texts": [...], "source": ..., "target": ...}; the reply
is {"texts": [...]} with one output per input in order, or {"error": "..."}.
The loop answers errors instead of dying so one bad batch cannot take down the
consumer's run.
"""

from __future__ import annotations

import json
import logging
from typing import Callable, Mapping, Sequence, TextIO

from .spec import ModelRunnerError

logger = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = {
    ("en", "fr"): "Helsinki-NLP/opus-mt-en-fr",
    ("fr", "en"): "Helsinki-NLP/opus-mt-fr-en",
    ("en", "de"): "Helsinki-NLP/opus-mt-en-de",
    ("de", "en"): "Helsinki-NLP/opus-mt-de-en",
}

TranslateFn = Callable[[Sequence[str], str, str], list[str]]


class MarianTranslator:
    """Best-hypothesis translation with one lazily loaded model per direction."""

    def __init__(
        self,
        device: str = "cpu",
        batch_size: int = 16,
        checkpoints: Mapping[tuple[str, str], str] | None = None,
    ):
        self._device = device
        self._batch_size = batch_size
        self._checkpoints = dict(checkpoints or DEFAULT_CHECKPOINTS)
        self._loaded: dict[tuple[str, str], tuple] = {}

    def _load(self, source: str, target: str):
        key = (source, target)
        if key not in self._checkpoints:
            supported = ", ".join(f"{s}->{t}" for s, t in sorted(self._checkpoints))
            raise ModelRunnerError(
                f"unsupported direction {source}->{target}; supported: {supported}"
            )
        if key not in self._loaded:
            import torch
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

            checkpoint = self._checkpoints[key]
            try:
                tokenizer = AutoTokenizer.from_pretrained(checkpoint)
                model = AutoModelForSeq2SeqLM.from_pretrained(checkpoint)
            except Exception as exc:
                raise ModelRunnerError(
                    f"cannot load checkpoint {checkpoint!r}: {exc}"
                ) from exc
            model.to(torch.device(self._device))
            model.eval()
            self._loaded[key] = (tokenizer, model)
        return self._loaded[key]

    def translate(self, texts: Sequence[str], source: str, target: str) -> list[str]:
        if (source, target) not in self._checkpoints:
            supported = ", ".join(f"{s}->{t}" for s, t in sorted(self._checkpoints))
            raise ModelRunnerError(
                f"unsupported direction {source}->{target}; supported: {supported}"
            )
        if not texts:
            return []
        import torch

        tokenizer, model = self._load(source, target)
        out: list[str] = []
        for lo in range(0, len(texts), self._batch_size):
            chunk = list(texts[lo : lo + self._batch_size])
            encoding = tokenizer(
                chunk, return_tensors="pt", padding=True, truncation=True
            ).to(self._device)
            with torch.no_grad():
                generated = model.generate(
                    **encoding, num_beams=1, do_sample=False
                )
            out.extend(tokenizer.batch_decode(generated, skip_special_tokens=True))
        return out


def serve(stdin: TextIO, stdout: TextIO, translate_fn: TranslateFn) -> None:
    """Answer wire requests until end of input; every reply is a single line."""
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        reply = _handle(line, translate_fn)
        stdout.write(json.dumps(reply, ensure_ascii=False, separators=(",", ":")))
        stdout.write("\n")
        stdout.flush()


def _handle(line: str, translate_fn: TranslateFn) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"error": f"bad JSON request: {exc}"}
    if not isinstance(request, dict) or not {"texts", "source", "target"} <= set(request):
        return {"error": "request must have texts, source, and target"}
    texts = request["texts"]
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        return {"error": "texts must be a list of strings"}
    try:
        outputs = translate_fn(texts, request["source"], request["target"])
    except Exception as exc:
        logger.warning("translation failed: %s", exc)
        return {"error": str(exc)}
    if len(outputs) != len(texts):
        return {"error": f"translator returned {len(outputs)} texts for {len(texts)} inputs"}
    return {"texts": list(outputs)}
