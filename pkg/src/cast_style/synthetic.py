"""Rule-based stand-in for the crowdsourced contextual style transfer corpora.

Every sentence is built from a content tuple (subject, verb, topic word,
modifiers, marker indices) and rendered in one of two styles:

    style A:  <a-open> subj verb topic mods... <a-close>
    style B:  <b-open> subj <b-aux> verb mods... topic <b-close>

Marker lexicons of the two styles are disjoint and aligned by index, so the
restyle is a deterministic bijection. Paragraph sentences all draw their topic
word from one topic, and every topic word occurs at least twice in its
paragraph, so whether a sentence belongs at a hole is decidable by topic
overlap.
"""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .corpus import (
    Context,
    NonParallelSample,
    Paragraph,
    ParallelSample,
    StyleLabel,
    Tokens,
)


@dataclass
class SyntheticConfig:
    style_names: tuple[str, str] = ("informal", "formal")
    a_open: tuple[str, ...] = ("hey", "yo", "so", "well")
    a_close: tuple[str, ...] = ("lol", "haha", "!!", "...")
    b_open: tuple[str, ...] = ("regarding", "concerning", "furthermore", "additionally")
    b_aux: tuple[str, ...] = ("shall", "will", "may", "must")
    b_close: tuple[str, ...] = ("respectfully", "sincerely", "regards", "cordially")
    num_topics: int = 30
    words_per_topic: int = 3
    num_subjects: int = 6
    num_verbs: int = 8
    num_modifiers: int = 8
    max_modifiers: int = 2
    min_sentences: int = 4
    max_sentences: int = 5
    parallel_direction: str = "a_to_b"
    # split sizes at desk scale
    parallel_train: int = 500
    parallel_dev: int = 50
    parallel_test: int = 100
    coherence_paragraphs: int = 2000
    nonparallel_train: int = 3000
    nonparallel_style: int = 1000

    def __post_init__(self):
        for name in ("style_names", "a_open", "a_close", "b_open", "b_aux", "b_close"):
            setattr(self, name, tuple(getattr(self, name)))

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic data keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class Content:
    subject: str
    verb: str
    topic: str
    modifiers: Tokens
    open_idx: int
    close_idx: int


class StyleOracle:
    """Ground-truth restyle: parses a rendered sentence and re-renders it in
    the other style."""

    def __init__(self, config: SyntheticConfig):
        self.config = config
        self.a_lexicon = frozenset(config.a_open) | frozenset(config.a_close)
        self.b_lexicon = frozenset(config.b_open) | frozenset(config.b_aux) | frozenset(config.b_close)

    def lexicon(self, style: StyleLabel) -> frozenset[str]:
        return self.a_lexicon if style == StyleLabel.STYLE_A else self.b_lexicon

    def markers(self, tokens: Sequence[str]) -> list[str]:
        return [t for t in tokens if t in self.a_lexicon or t in self.b_lexicon]

    def render(self, content: Content, style: StyleLabel) -> Tokens:
        c = self.config
        if style == StyleLabel.STYLE_A:
            return (c.a_open[content.open_idx], content.subject, content.verb,
                    content.topic, *content.modifiers, c.a_close[content.close_idx])
        return (c.b_open[content.open_idx], content.subject, c.b_aux[content.open_idx],
                content.verb, *content.modifiers, content.topic, c.b_close[content.close_idx])

    def parse(self, tokens: Sequence[str]) -> tuple[Content, StyleLabel]:
        c = self.config
        tokens = tuple(tokens)
        if len(tokens) >= 5 and tokens[0] in c.a_open and tokens[-1] in c.a_close:
            content = Content(tokens[1], tokens[2], tokens[3], tokens[4:-1],
                              c.a_open.index(tokens[0]), c.a_close.index(tokens[-1]))
            return content, StyleLabel.STYLE_A
        if len(tokens) >= 6 and tokens[0] in c.b_open and tokens[-1] in c.b_close:
            open_idx = c.b_open.index(tokens[0])
            if tokens[2] != c.b_aux[open_idx]:
                raise ValueError(f"not a style-B sentence: {' '.join(tokens)}")
            content = Content(tokens[1], tokens[3], tokens[-2], tokens[4:-2],
                              open_idx, c.b_close.index(tokens[-1]))
            return content, StyleLabel.STYLE_B
        raise ValueError(f"sentence does not follow either style template: {' '.join(tokens)}")

    def style_of(self, tokens: Sequence[str]) -> StyleLabel:
        return self.parse(tokens)[1]

    def __call__(self, tokens: Sequence[str]) -> Tokens:
        content, style = self.parse(tokens)
        return self.render(content, style.other)

    def describe(self) -> dict:
        return {
            "templates": {
                "STYLE_A": "<a_open[i]> subj verb topic mods... <a_close[j]>",
                "STYLE_B": "<b_open[i]> subj <b_aux[i]> verb mods... topic <b_close[j]>",
            },
            "rule": "parse with the source template, re-render with the other; markers map by index",
            "lexicons": {
                "a_open": list(self.config.a_open), "a_close": list(self.config.a_close),
                "b_open": list(self.config.b_open), "b_aux": list(self.config.b_aux),
                "b_close": list(self.config.b_close),
            },
        }


@dataclass
class SyntheticBenchmark:
    config: SyntheticConfig
    parallel: dict[str, list[ParallelSample]]
    nonparallel: dict[str, list[NonParallelSample]]
    paragraphs: list[Paragraph]
    oracle: StyleOracle
    topics: list[tuple[str, ...]] = field(default_factory=list)

    def topic_of(self, word: str) -> int | None:
        for k, words in enumerate(self.topics):
            if word in words:
                return k
        return None

    def topic_words(self, tokens: Sequence[str]) -> set[str]:
        vocab = {w for words in self.topics for w in words}
        return {t for t in tokens if t in vocab}


def topic_overlap(context: Context, candidate: Sequence[str], topic_words: set[str]) -> int:
    """1 when the candidate shares a topic word with the context, else 0."""
    ctx = {t for t in context.flat() if t in topic_words}
    return int(any(t in ctx for t in candidate))


def _validate(config: SyntheticConfig):
    lexicons = {
        "a_open": config.a_open, "a_close": config.a_close,
        "b_open": config.b_open, "b_aux": config.b_aux, "b_close": config.b_close,
    }
    for name, lex in lexicons.items():
        if not lex:
            raise ValueError(f"style-marker lexicon {name} is empty")
        if len(set(lex)) != len(lex):
            raise ValueError(f"style-marker lexicon {name} has duplicates")
    if len(config.b_open) != len(config.a_open) or len(config.b_aux) != len(config.a_open):
        raise ValueError("a_open, b_open and b_aux must align by index")
    if len(config.b_close) != len(config.a_close):
        raise ValueError("a_close and b_close must align by index")
    a = set(config.a_open) | set(config.a_close)
    b = set(config.b_open) | set(config.b_aux) | set(config.b_close)
    if a & b:
        raise ValueError(f"style-marker lexicons overlap: {sorted(a & b)}")
    if config.parallel_direction not in ("a_to_b", "b_to_a", "both"):
        raise ValueError("parallel_direction must be a_to_b, b_to_a or both")
    if config.num_topics < 2 or config.words_per_topic < 1:
        raise ValueError("need at least 2 topics with at least one word each")
    if not 2 <= config.min_sentences <= config.max_sentences:
        raise ValueError("paragraphs need 2 <= min_sentences <= max_sentences")
    for name in ("parallel_train", "parallel_dev", "parallel_test", "nonparallel_train",
                 "nonparallel_style"):
        if getattr(config, name) < 0:
            raise ValueError(f"{name} must be >= 0")
    if config.coherence_paragraphs < 2:
        raise ValueError("coherence_paragraphs must be >= 2")


class _Generator:
    def __init__(self, config: SyntheticConfig, seed: int):
        self.c = config
        self.rng = random.Random(seed)
        self.oracle = StyleOracle(config)
        self.topics = [
            tuple(f"topic{k:02d}{chr(ord('a') + j)}" for j in range(config.words_per_topic))
            for k in range(config.num_topics)
        ]
        self.subjects = [f"subj{i}" for i in range(config.num_subjects)]
        self.verbs = [f"verb{i}" for i in range(config.num_verbs)]
        self.modifiers = [f"mod{i}" for i in range(config.num_modifiers)]

    def content(self, topic_word: str) -> Content:
        r = self.rng
        n_mods = r.randint(1, self.c.max_modifiers)
        return Content(
            subject=r.choice(self.subjects),
            verb=r.choice(self.verbs),
            topic=topic_word,
            modifiers=tuple(r.choice(self.modifiers) for _ in range(n_mods)),
            open_idx=r.randrange(len(self.c.a_open)),
            close_idx=r.randrange(len(self.c.a_close)),
        )

    def random_style(self) -> StyleLabel:
        return StyleLabel(self.rng.randrange(2))

    def paragraph_contents(self) -> list[Content]:
        r = self.rng
        topic = r.choice(self.topics)
        n = r.randint(self.c.min_sentences, self.c.max_sentences)
        words = [r.choice(topic) for _ in range(n)]
        # every topic word must recur so each sentence overlaps its context
        counts = {w: words.count(w) for w in words}
        anchor = max(words, key=lambda w: (counts[w], -words.index(w)))
        words = [w if counts[w] > 1 else anchor for w in words]
        return [self.content(w) for w in words]

    def paragraph(self) -> Paragraph:
        contents = self.paragraph_contents()
        sentences = tuple(self.oracle.render(c, self.random_style()) for c in contents)
        return Paragraph(sentences, self.rng.randrange(len(sentences)))

    def parallel_sample(self) -> ParallelSample:
        contents = self.paragraph_contents()
        t = self.rng.randrange(len(contents))
        direction = self.c.parallel_direction
        if direction == "both":
            src_style = self.random_style()
        else:
            src_style = StyleLabel.STYLE_A if direction == "a_to_b" else StyleLabel.STYLE_B
        source = self.oracle.render(contents[t], src_style)
        reference = self.oracle(source)
        rendered = [self.oracle.render(c, self.random_style()) for c in contents]
        context = Context(tuple(rendered[:t]), tuple(rendered[t + 1:]))
        return ParallelSample(source, reference, context, src_style, src_style.other)

    def nonparallel_sample(self, style: StyleLabel) -> NonParallelSample:
        topic = self.rng.choice(self.topics)
        content = self.content(self.rng.choice(topic))
        return NonParallelSample(self.oracle.render(content, style), style)

    def nonparallel_pool(self, n: int) -> list[NonParallelSample]:
        # balanced styles, shuffled
        styles = [StyleLabel(i % 2) for i in range(n)]
        self.rng.shuffle(styles)
        return [self.nonparallel_sample(s) for s in styles]


def generate_synthetic_benchmark(config: SyntheticConfig, seed: int) -> SyntheticBenchmark:
    _validate(config)
    gen = _Generator(config, seed)
    parallel = {
        split: [gen.parallel_sample() for _ in range(getattr(config, f"parallel_{split}"))]
        for split in ("train", "dev", "test")
    }
    nonparallel = {
        "train": gen.nonparallel_pool(config.nonparallel_train),
        "style_classifier": gen.nonparallel_pool(config.nonparallel_style),
    }
    paragraphs = [gen.paragraph() for _ in range(config.coherence_paragraphs)]
    return SyntheticBenchmark(config, parallel, nonparallel, paragraphs, gen.oracle, gen.topics)

