"""Sample types, JSONL ingestion, coherence pairs and context truncation."""
from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

Tokens = tuple[str, ...]


class DatasetError(ValueError):
    """A dataset file is missing or holds a malformed record."""


class StyleLabel(enum.IntEnum):
    STYLE_A = 0
    STYLE_B = 1

    @property
    def other(self) -> "StyleLabel":
        return StyleLabel(1 - int(self))

    def display(self, names: Sequence[str] | None = None) -> str:
        if names is None:
            return self.name
        return names[int(self)]

    @classmethod
    def parse(cls, value, names: Sequence[str] | None = None) -> "StyleLabel":
        """Accept a canonical name, a task display name, or 0/1."""
        if isinstance(value, StyleLabel):
            return value
        if isinstance(value, int) and not isinstance(value, bool) and value in (0, 1):
            return cls(value)
        if isinstance(value, str):
            if value in cls.__members__:
                return cls[value]
            if names is not None and value in names:
                return cls(list(names).index(value))
        raise ValueError(f"unknown style {value!r}")


def _tokens(seq, what: str) -> Tokens:
    if not isinstance(seq, (list, tuple)) or not all(isinstance(t, str) for t in seq):
        raise ValueError(f"{what} must be a list of string tokens")
    return tuple(seq)


def _sentences(seqs, what: str) -> tuple[Tokens, ...]:
    if not isinstance(seqs, (list, tuple)):
        raise ValueError(f"{what} must be a list of sentences")
    out = tuple(_tokens(s, what) for s in seqs)
    if any(len(s) == 0 for s in out):
        raise ValueError(f"{what} contains an empty sentence")
    return out


@dataclass(frozen=True)
class Context:
    """A paragraph with one sentence removed; the hole sits between
    ``before`` and ``after``."""

    before: tuple[Tokens, ...] = ()
    after: tuple[Tokens, ...] = ()

    @property
    def hole_index(self) -> int:
        return len(self.before)

    @property
    def sentences(self) -> tuple[Tokens, ...]:
        return self.before + self.after

    def num_words(self) -> int:
        return sum(len(s) for s in self.sentences)

    def is_empty(self) -> bool:
        return self.num_words() == 0

    def flat(self) -> list[str]:
        return [t for s in self.sentences for t in s]

    def flat_before(self) -> list[str]:
        return [t for s in self.before for t in s]

    def flat_after(self) -> list[str]:
        return [t for s in self.after for t in s]

    def insert(self, sentence: Sequence[str]) -> list[Tokens]:
        """Paragraph reconstructed by placing ``sentence`` at the hole."""
        return [*self.before, tuple(sentence), *self.after]


@dataclass(frozen=True)
class Paragraph:
    sentences: tuple[Tokens, ...]
    target_index: int

    def __post_init__(self):
        if len(self.sentences) < 2:
            raise ValueError("a paragraph needs at least one context sentence")
        if any(len(s) == 0 for s in self.sentences):
            raise ValueError("paragraph contains an empty sentence")
        if not 0 <= self.target_index < len(self.sentences):
            raise ValueError(
                f"target_index {self.target_index} outside 0..{len(self.sentences) - 1}"
            )

    @property
    def target(self) -> Tokens:
        return self.sentences[self.target_index]

    def context(self) -> Context:
        t = self.target_index
        return Context(self.sentences[:t], self.sentences[t + 1:])


@dataclass(frozen=True)
class ParallelSample:
    source: Tokens
    reference: Tokens
    context: Context
    source_style: StyleLabel
    target_style: StyleLabel

    def __post_init__(self):
        if not self.source:
            raise ValueError("source is empty")
        if not self.reference:
            raise ValueError("reference is empty")
        if self.context.is_empty():
            raise ValueError("context is empty")
        if self.source_style == self.target_style:
            raise ValueError("source_style equals target_style")


@dataclass(frozen=True)
class NonParallelSample:
    sentence: Tokens
    style: StyleLabel

    def __post_init__(self):
        if not self.sentence:
            raise ValueError("sentence is empty")


@dataclass(frozen=True)
class CoherencePair:
    context: Context
    candidate: Tokens
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


# --- JSONL interchange -----------------------------------------------------

KINDS = ("parallel", "nonparallel", "paragraphs")


def to_record(sample, style_names: Sequence[str] | None = None) -> dict:
    if isinstance(sample, ParallelSample):
        return {
            "source": list(sample.source),
            "reference": list(sample.reference),
            "context_before": [list(s) for s in sample.context.before],
            "context_after": [list(s) for s in sample.context.after],
            "source_style": sample.source_style.display(style_names),
            "target_style": sample.target_style.display(style_names),
        }
    if isinstance(sample, NonParallelSample):
        return {"sentence": list(sample.sentence), "style": sample.style.display(style_names)}
    if isinstance(sample, Paragraph):
        return {"sentences": [list(s) for s in sample.sentences], "target_index": sample.target_index}
    raise TypeError(f"cannot serialize {type(sample).__name__}")


def _require(record: dict, field: str):
    if field not in record:
        raise KeyError(field)
    return record[field]


def parse_context(record: dict) -> Context:
    return Context(
        _sentences(record.get("context_before", []), "context_before"),
        _sentences(record.get("context_after", []), "context_after"),
    )


def from_record(record: dict, kind: str, style_names: Sequence[str] | None = None):
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    if kind == "parallel":
        return ParallelSample(
            source=_tokens(_require(record, "source"), "source"),
            reference=_tokens(_require(record, "reference"), "reference"),
            context=parse_context(record),
            source_style=StyleLabel.parse(_require(record, "source_style"), style_names),
            target_style=StyleLabel.parse(_require(record, "target_style"), style_names),
        )
    if kind == "nonparallel":
        return NonParallelSample(
            sentence=_tokens(_require(record, "sentence"), "sentence"),
            style=StyleLabel.parse(_require(record, "style"), style_names),
        )
    if kind == "paragraphs":
        index = _require(record, "target_index")
        if not isinstance(index, int) or isinstance(index, bool):
            raise ValueError("target_index must be an integer")
        return Paragraph(_sentences(_require(record, "sentences"), "sentences"), index)
    raise ValueError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")


def load_dataset(path, kind: str, style_names: Sequence[str] | None = None) -> list:
    """Read a JSONL file of ``kind`` records into validated samples.

    Raises DatasetError naming the file and line of the first bad record.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: no such dataset file")
    samples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(from_record(json.loads(line), kind, style_names))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            except KeyError as exc:
                raise DatasetError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return samples


def write_dataset(path, samples: Iterable, style_names: Sequence[str] | None = None) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(to_record(sample, style_names), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


# --- coherence pairs and context handling ----------------------------------

def make_coherence_pairs(
    paragraphs: Sequence[Paragraph], negatives_per_positive: int = 1, seed: int = 0
) -> list[CoherencePair]:
    """One positive and ``negatives_per_positive`` negatives per paragraph.

    A negative swaps the sentence at the hole for a sentence drawn uniformly
    from a different paragraph.
    """
    if len(paragraphs) < 2:
        raise ValueError("need at least 2 paragraphs to draw negative replacements")
    if negatives_per_positive < 1:
        raise ValueError("negatives_per_positive must be >= 1")
    rng = random.Random(seed)
    pairs = []
    for i, para in enumerate(paragraphs):
        ctx = para.context()
        removed = para.target
        pairs.append(CoherencePair(ctx, removed, 1))
        for _ in range(negatives_per_positive):
            for _attempt in range(1000):
                j = rng.randrange(len(paragraphs) - 1)
                if j >= i:
                    j += 1
                other = paragraphs[j].sentences
                candidate = other[rng.randrange(len(other))]
                if candidate != removed:
                    break
            else:
                raise ValueError(f"paragraph {i}: no replacement sentence differs from the original")
            pairs.append(CoherencePair(ctx, candidate, 0))
    return pairs


def truncate_context(context: Context, max_words: int) -> Context:
    """Keep at most ``max_words`` tokens, alternating outward from the hole
    (before side first). Sentence order and in-sentence order are kept."""
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    n_before = sum(len(s) for s in context.before)
    n_after = sum(len(s) for s in context.after)
    if n_before + n_after <= max_words:
        return context
    keep_before = min(n_before, max(math.ceil(max_words / 2), max_words - n_after))
    keep_after = min(n_after, max_words - keep_before)

    before: list[Tokens] = []
    budget = keep_before
    for sent in reversed(context.before):
        if budget <= 0:
            break
        before.append(sent[-budget:] if budget < len(sent) else sent)
        budget -= len(sent)
    after: list[Tokens] = []
    budget = keep_after
    for sent in context.after:
        if budget <= 0:
            break
        after.append(sent[:budget])
        budget -= len(sent)
    return Context(tuple(reversed(before)), tuple(after))
