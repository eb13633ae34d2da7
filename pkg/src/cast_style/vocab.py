"""Shared word vocabulary with frequency thresholding."""
from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)


class Vocabulary:
    """Immutable token <-> id bijection. Specials hold ids 0-3."""

    def __init__(self, tokens: Sequence[str], min_frequency: int = 1):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIALS:
            raise ValueError(f"vocabulary must start with the specials {SPECIALS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self._itos = tuple(tokens)
        self._stoi = {t: i for i, t in enumerate(tokens)}
        self.min_frequency = min_frequency

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._itos

    @property
    def num_words(self) -> int:
        """Size without the special tokens."""
        return len(self._itos) - len(SPECIALS)

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str], add_bos_eos: bool = False) -> list[int]:
        ids = [self._stoi.get(t, UNK_ID) for t in tokens]
        if add_bos_eos:
            ids = [BOS_ID, *ids, EOS_ID]
        return ids

    def decode(self, ids: Iterable[int], display: bool = False) -> list[str]:
        """Map ids back to tokens. ``display`` drops PAD/BOS/EOS and stops at
        the first EOS."""
        out = []
        n = len(self._itos)
        for i in ids:
            i = int(i)
            if not 0 <= i < n:
                raise IndexError(f"token id {i} out of range for vocabulary of size {n}")
            if display:
                if i == EOS_ID:
                    break
                if i in (PAD_ID, BOS_ID):
                    continue
            out.append(self._itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self._itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls(text.split("\n")[:-1] if text.endswith("\n") else text.split("\n"))


def build_vocab(corpora: Iterable[Sequence[str]], min_frequency: int = 1) -> Vocabulary:
    """Keep tokens seen at least ``min_frequency`` times.

    Ids follow descending count, ties broken lexicographically.
    """
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")
    counts = Counter()
    n_sentences = 0
    for sent in corpora:
        counts.update(sent)
        n_sentences += 1
    if n_sentences == 0 or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    for special in SPECIALS:
        counts.pop(special, None)
    kept = sorted((t for t, c in counts.items() if c >= min_frequency), key=lambda t: (-counts[t], t))
    return Vocabulary([*SPECIALS, *kept], min_frequency)
