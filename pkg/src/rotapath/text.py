"""Question and path-text encoding: rule tokenizer plus trainable token
embeddings with average pooling, behind a small interface so a contextual
encoder can be swapped in later.
"""

from __future__ import annotations

import re

import numpy as np

from rotapath import autodiff as ad

UNK = "<unk>"
SEP = "<sep>"
R_OPEN = "<r>"
R_CLOSE = "</r>"
SPECIAL_TOKENS = (UNK, SEP, R_OPEN, R_CLOSE)

# specials are matched before the generic rules so they never split
_TOKEN_RE = re.compile(r"</r>|<r>|<sep>|<unk>|[a-z0-9_']+|[^\sa-z0-9_']")


def split_text(text: str) -> list[str]:
    """Lowercase, split on whitespace and punctuation; special tokens atomic."""
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Token string <-> dense id; id 0 is the unknown token."""

    def __init__(self, tokens=()):
        self.tokens: list[str] = []
        self.index: dict[str, int] = {}
        for tok in SPECIAL_TOKENS:
            self._add(tok)
        for tok in tokens:
            self._add(tok)

    def _add(self, token):
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __len__(self):
        return len(self.tokens)

    @property
    def unknown_token_id(self):
        return self.index[UNK]

    def id_of(self, token):
        return self.index.get(token, self.unknown_token_id)

    @classmethod
    def build(cls, texts, relation_names):
        """Vocabulary from training question texts plus relation names
        (frequency floor 1: keep everything, in first-appearance order)."""
        vocab = cls()
        for text in texts:
            for tok in split_text(text):
                vocab._add(tok)
        for name in relation_names:
            for tok in split_text(name.replace("_", " ")):
                vocab._add(tok)
        return vocab

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        if tokens[: len(SPECIAL_TOKENS)] != list(SPECIAL_TOKENS):
            raise ValueError(f"{path}: vocabulary file must start with the special tokens")
        vocab = cls()
        for tok in tokens[len(SPECIAL_TOKENS):]:
            vocab._add(tok)
        return vocab


class Tokenizer:
    """Deterministic, total tokenization into vocabulary ids."""

    def __init__(self, vocab: Vocab):
        self.vocab = vocab

    def tokenize(self, text: str) -> list[int]:
        return [self.vocab.id_of(tok) for tok in split_text(text)]


def relation_name_tokens(tokenizer: Tokenizer, relation_text: str) -> list[int]:
    """<r> name words </r> with underscores already split by the caller."""
    return (
        [tokenizer.vocab.id_of(R_OPEN)]
        + tokenizer.tokenize(relation_text)
        + [tokenizer.vocab.id_of(R_CLOSE)]
    )


def path_token_ids(tokenizer: Tokenizer, question_tokens, path_relation_texts) -> list[int]:
    """Question first, then a separator, then each relation wrapped in
    <r> ... </r>, in path order."""
    if not path_relation_texts:
        raise ValueError("path must be non-empty")
    ids = list(question_tokens) + [tokenizer.vocab.id_of(SEP)]
    for name in path_relation_texts:
        ids.extend(relation_name_tokens(tokenizer, name))
    return ids


class TextEncoder:
    """Trainable token embeddings with average pooling. Output has a fixed
    width d_text regardless of input length; an empty token list is rejected.
    """

    def __init__(self, vocab_size: int, d_text: int, rng, trainable=True):
        emb = rng.normal(0.0, 0.1, size=(vocab_size, d_text))
        self.token_emb = ad.Tensor(emb, requires_grad=trainable)
        self.d_text = d_text

    def encode(self, token_ids) -> ad.Tensor:
        """Arithmetic mean of the token embeddings; differentiable."""
        if len(token_ids) == 0:
            raise ValueError("cannot encode an empty token list")
        rows = ad.gather_rows(self.token_emb, np.asarray(token_ids, dtype=np.int64))
        return ad.mean(rows, axis=0)

    def encode_many(self, flat_ids, offsets) -> ad.Tensor:
        """Mean-pool many variable-length sequences at once.

        flat_ids: concatenated token ids; offsets: (S+1,) boundaries. Segment
        lengths must be positive.
        """
        lengths = np.diff(offsets)
        if (lengths <= 0).any():
            raise ValueError("cannot encode an empty token list")
        rows = ad.gather_rows(self.token_emb, np.asarray(flat_ids, dtype=np.int64))
        inv_len = np.repeat(1.0 / lengths, lengths)
        return ad.segment_weighted_sum(rows, ad.Tensor(inv_len), np.asarray(offsets))

    def params(self, prefix="encoder"):
        return {prefix + ".token_emb": self.token_emb}
