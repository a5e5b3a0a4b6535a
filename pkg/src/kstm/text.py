"""Character-level tokenization and vocabulary handling."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

UNK, PAD, CLS = 0, 1, 2
RESERVED = ("[UNK]", "[PAD]", "[CLS]")
DEFAULT_MAX_LEN = 64


def _is_ascii_alnum(ch: str) -> bool:
    return ch.isascii() and ch.isalnum()


def tokenize(text: str) -> list[str]:
    """Split into single characters, keeping runs of ASCII letters/digits together.

    Latin text is lowercased and whitespace is dropped.

    >>> tokenize("iPhone 手机")
    ['iphone', '手', '机']
    """
    tokens: list[str] = []
    run: list[str] = []
    for ch in text:
        if _is_ascii_alnum(ch):
            run.append(ch.lower())
            continue
        if run:
            tokens.append("".join(run))
            run = []
        if not ch.isspace():
            tokens.append(ch)
    if run:
        tokens.append("".join(run))
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens, inserting a space only between adjacent ASCII words."""
    out: list[str] = []
    prev_word = False
    for tok in tokens:
        word = _is_ascii_alnum(tok[0])
        if out and word and prev_word:
            out.append(" ")
        out.append(tok)
        prev_word = word
    return "".join(out)


class Vocabulary:
    """Immutable token -> id map with reserved ids 0=[UNK], 1=[PAD], 2=[CLS]."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos = list(RESERVED)
        self._stoi = {t: i for i, t in enumerate(self._itos)}
        for tok in tokens:
            if tok in self._stoi:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self._stoi[tok] = len(self._itos)
            self._itos.append(tok)

    def __len__(self) -> int:
        return len(self._itos)

    @property
    def size(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    @property
    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self._itos[len(RESERVED) :]

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self._itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:3]) != RESERVED:
            raise ValueError(f"{path}: vocabulary must start with {', '.join(RESERVED)}")
        return cls(lines[3:])

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Tokens seen at least ``min_count`` times, most frequent first.

    Ties keep first-occurrence order (``Counter`` preserves insertion order
    and ``sorted`` is stable).
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for sentence in corpus:
        counts.update(tokenize(sentence))
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: -counts[t])
    return Vocabulary(kept)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    tokens: tuple[str, ...]
    text: str

    def __len__(self) -> int:
        return len(self.ids)


def encode_ids(vocab: Vocabulary, text: str, max_len: int | None = DEFAULT_MAX_LEN) -> TokenSequence:
    """[CLS] followed by token ids, unknown tokens mapped to [UNK].

    ``max_len`` caps the total length including [CLS]; ``None`` disables it.
    """
    tokens = tokenize(text)
    if max_len is not None:
        tokens = tokens[: max(max_len - 1, 0)]
    ids = (CLS,) + tuple(vocab.id(t) for t in tokens)
    return TokenSequence(ids, tuple(tokens), text)
