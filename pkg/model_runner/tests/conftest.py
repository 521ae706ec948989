"""Session fixtures: tiny randomly initialized QA checkpoints, no downloads."""

from __future__ import annotations

import pytest

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "cat", "sat", "on", "mat", "a", "big", "red", "dog", "ran",
    "what", "did", "do", "go", "to", "bank", "river", "money", "down",
    "well", "he", "went", "over", "and", "then",
]


def _build_checkpoint(root, seed: int) -> str:
    import torch
    from tokenizers import BertWordPieceTokenizer
    from transformers import BertConfig, BertForQuestionAnswering, PreTrainedTokenizerFast

    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    word_piece = BertWordPieceTokenizer(vocab=str(vocab_file), lowercase=True)
    tokenizer_file = root / "tokenizer.json"
    word_piece.save(str(tokenizer_file))
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_file=str(tokenizer_file),
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
        model_max_length=64,
    )
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(seed)
    model = BertForQuestionAnswering(config)
    target = root / f"s{seed}"
    model.save_pretrained(target)
    tokenizer.save_pretrained(target)
    return str(target)


@pytest.fixture(scope="session")
def checkpoint_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("checkpoints")
    _build_checkpoint(root, 1)
    _build_checkpoint(root, 2)
    return root


@pytest.fixture(scope="session")
def checkpoint(checkpoint_root) -> str:
    return str(checkpoint_root / "s1")


@pytest.fixture(scope="session")
def checkpoint_template(checkpoint_root) -> str:
    return str(checkpoint_root / "s{seed}")
