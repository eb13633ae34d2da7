"""Frozen regularizers: a CNN style classifier and a transformer coherence
classifier, with their pre-training loops.

Both accept either token ids [B, L] or relaxed one-hot weights [B, L, V] for
the sentence being judged, so gradients can reach a generator upstream.
"""
from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .corpus import CoherencePair, NonParallelSample, truncate_context
from .model import embed, masked_mean, padding_mask, sinusoidal_positions
from .vocab import PAD_ID, Vocabulary

log = logging.getLogger(__name__)


@dataclass
class ClassifierConfig:
    embed_dim: int = 64
    # CNN style classifier
    filter_widths: tuple[int, ...] = (2, 3, 4)
    num_filters: int = 32
    # coherence classifier encoder
    num_heads: int = 4
    ffn_dim: int = 128
    num_layers: int = 1
    max_context_words: int = 50
    max_sentence_len: int = 32
    # pre-training
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    heldout_fraction: float = 0.1

    def __post_init__(self):
        self.filter_widths = tuple(self.filter_widths)

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown classifier keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_widths"] = list(self.filter_widths)
        return d


@dataclass
class PretrainReport:
    curve: list[float] = field(default_factory=list)  # mean train loss per epoch
    train_accuracy: float = 0.0
    heldout_accuracy: float = 0.0
    heldout_size: int = 0
    heldout_index: list[int] = field(default_factory=list)  # positions in the input data

    def to_dict(self) -> dict:
        return asdict(self)


def freeze(module: nn.Module) -> nn.Module:
    module.requires_grad_(False)
    module.eval()
    return module


def is_frozen(module: nn.Module) -> bool:
    return not any(p.requires_grad for p in module.parameters())


def parameter_checksum(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def require_frozen(module: nn.Module, what: str):
    if not is_frozen(module):
        raise RuntimeError(f"{what} must be frozen before it is used as a regularizer")


class StyleClassifier(nn.Module):
    """Kim-style CNN: parallel filter banks, max-over-time pooling, softmax."""

    def __init__(self, vocab_size: int, config: ClassifierConfig, num_styles: int = 2):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(vocab_size, config.embed_dim)
        self.convs = nn.ModuleList(
            nn.Conv1d(config.embed_dim, config.num_filters, w) for w in config.filter_widths
        )
        self.head = nn.Linear(config.num_filters * len(config.filter_widths), num_styles)

    def forward(self, x: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        """Log-probabilities over styles, [B, num_styles]."""
        B, L = x.shape[:2]
        if L == 0:
            raise ValueError("style classifier input is empty")
        if lengths is None:
            lengths = torch.full((B,), L, dtype=torch.long)
        e = embed(self.embedding, x) * (~padding_mask(lengths, L)).unsqueeze(-1).to(self.embedding.weight.dtype)
        widest = max(self.config.filter_widths)
        if L < widest:
            e = F.pad(e, (0, 0, 0, widest - L))
        h = e.transpose(1, 2)
        pooled = []
        for width, conv in zip(self.config.filter_widths, self.convs):
            c = F.relu(conv(h))
            last_start = lengths.clamp(min=width) - width
            valid = torch.arange(c.size(-1))[None, :] <= last_start[:, None]
            pooled.append(c.masked_fill(~valid.unsqueeze(1), 0.0).max(-1).values)
        return F.log_softmax(self.head(torch.cat(pooled, -1)), dim=-1)

    def predict(self, x, lengths=None) -> torch.Tensor:
        return self(x, lengths).argmax(-1)


def style_log_prob(clf: StyleClassifier, x: torch.Tensor, lengths: torch.Tensor | None,
                   label: torch.Tensor | int) -> torch.Tensor:
    """log p_C(label | x) per row."""
    logp = clf(x, lengths)
    if isinstance(label, int):
        label = torch.full((logp.size(0),), label, dtype=torch.long)
    return logp.gather(-1, label.unsqueeze(-1)).squeeze(-1)


@dataclass
class CoherenceInput:
    """Context halves as id lists per row; the candidate is supplied
    separately so it can be discrete or relaxed."""

    before: list[list[int]]
    after: list[list[int]]


def coherence_input(contexts, vocab: Vocabulary, max_context_words: int) -> CoherenceInput:
    before, after = [], []
    for ctx in contexts:
        ctx = truncate_context(ctx, max_context_words)
        before.append(vocab.encode(ctx.flat_before()))
        after.append(vocab.encode(ctx.flat_after()))
    return CoherenceInput(before, after)


class CoherenceClassifier(nn.Module):
    """Encodes the paragraph rebuilt by inserting the candidate at the hole,
    mean-pools the candidate's positions to a vector u, and scores
    softmax(tanh(W u + b)).

    Every position attends over the whole paragraph, so the pooled candidate
    states carry the context evidence. Query and key projections start out
    equal, which biases attention towards repeated tokens from the first
    step; without that the model sits on the chance plateau for a long time.
    """

    def __init__(self, vocab_size: int, config: ClassifierConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.embedding = nn.Embedding(vocab_size, d)
        self.segment = nn.Embedding(2, d)
        n_pos = config.max_context_words + config.max_sentence_len
        self.register_buffer("positions", sinusoidal_positions(n_pos, d), persistent=False)
        layer = nn.TransformerEncoderLayer(d, config.num_heads, config.ffn_dim, 0.0, batch_first=True, norm_first=True)
        self.encoder = nn.TransformerEncoder(layer, config.num_layers, enable_nested_tensor=False)
        self.head = nn.Linear(d, 2)
        with torch.no_grad():
            for lay in self.encoder.layers:
                w = lay.self_attn.in_proj_weight
                w[d:2 * d] = w[:d]

    def assemble(self, ctx: CoherenceInput, candidate: torch.Tensor, cand_lengths: torch.Tensor):
        B = candidate.size(0)
        cand = embed(self.embedding, candidate)
        rows, segs = [], []
        for i in range(B):
            before = self.embedding(torch.tensor(ctx.before[i], dtype=torch.long))
            after = self.embedding(torch.tensor(ctx.after[i], dtype=torch.long))
            n = int(cand_lengths[i])
            rows.append(torch.cat([before, cand[i, :n], after], 0))
            segs.append(torch.tensor([0] * len(ctx.before[i]) + [1] * n + [0] * len(ctx.after[i])))
        lengths = torch.tensor([r.size(0) for r in rows])
        if int(lengths.max()) > self.positions.size(0):
            raise ValueError("paragraph longer than the coherence classifier's position table")
        h = nn.utils.rnn.pad_sequence(rows, batch_first=True)
        seg = nn.utils.rnn.pad_sequence(segs, batch_first=True)
        return h, seg, lengths

    def forward(self, ctx: CoherenceInput, candidate: torch.Tensor,
                cand_lengths: torch.Tensor | None = None) -> torch.Tensor:
        """Log-probabilities [B, 2]; column 1 is "context fits"."""
        if cand_lengths is None:
            cand_lengths = torch.full((candidate.size(0),), candidate.size(1), dtype=torch.long)
        h, seg, lengths = self.assemble(ctx, candidate, cand_lengths)
        if (lengths == 0).any():
            raise ValueError("coherence classifier received an empty paragraph")
        L = h.size(1)
        h = h + self.segment(seg) + self.positions[:L].to(h.dtype)
        pad = padding_mask(lengths, L)
        states = self.encoder(h, src_key_padding_mask=pad)
        u = masked_mean(states, pad | (seg == 0))
        return F.log_softmax(torch.tanh(self.head(u)), dim=-1)

    def predict(self, ctx, candidate, cand_lengths=None) -> torch.Tensor:
        return self(ctx, candidate, cand_lengths).argmax(-1)


def coherence_log_prob(clf: CoherenceClassifier, ctx: CoherenceInput, candidate: torch.Tensor,
                       cand_lengths: torch.Tensor | None = None) -> torch.Tensor:
    """log p_LM(s=1 | context, candidate) per row."""
    return clf(ctx, candidate, cand_lengths)[:, 1]


# --- pre-training ----------------------------------------------------------

def pad_ids(seqs: Sequence[Sequence[int]], min_len: int = 1):
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
    width = max(int(lengths.max()) if len(seqs) else 0, min_len)
    out = torch.full((len(seqs), width), PAD_ID, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(list(s), dtype=torch.long)
    return out, lengths


def _split(n: int, fraction: float, rng: random.Random):
    order = list(range(n))
    rng.shuffle(order)
    n_held = int(round(n * fraction))
    if fraction > 0:
        n_held = max(1, min(n_held, n - 1))
    return order[n_held:], order[:n_held]


def _fit(model: nn.Module, n_train: int, batch_loss, config: ClassifierConfig, seed: int,
         report: PretrainReport, what: str):
    rng = random.Random(seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    model.train()
    for epoch in range(config.epochs):
        order = list(range(n_train))
        rng.shuffle(order)
        total, count = 0.0, 0
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = batch_loss(idx)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        report.curve.append(total / max(count, 1))
        log.info("%s epoch %d loss %.4f", what, epoch + 1, report.curve[-1])


def _require_both(labels: Sequence[int], what: str):
    if len(set(labels)) < 2:
        raise ValueError(f"{what} pre-training needs examples of both classes")


def _batched_predictions(predict, n: int, batch_size: int) -> list[int]:
    out = []
    with torch.no_grad():
        for start in range(0, n, batch_size):
            out.extend(predict(list(range(start, min(n, start + batch_size)))).tolist())
    return out


def _accuracy(pred: Sequence[int], gold: Sequence[int]) -> float:
    return 100.0 * sum(int(p == g) for p, g in zip(pred, gold)) / max(len(gold), 1)


def pretrain_style_classifier(data: Sequence[NonParallelSample], vocab: Vocabulary,
                              config: ClassifierConfig, seed: int = 0):
    """Train the CNN style classifier on labelled sentences, then freeze it.

    Returns (classifier, PretrainReport).
    """
    labels = [int(s.style) for s in data]
    _require_both(labels, "style classifier")
    torch.manual_seed(seed)
    rng = random.Random(seed)
    train_idx, held_idx = _split(len(data), config.heldout_fraction, rng)
    ids = [vocab.encode(s.sentence[: config.max_sentence_len]) for s in data]
    clf = StyleClassifier(len(vocab), config)

    def rows(idx):
        x, lengths = pad_ids([ids[i] for i in idx])
        return x, lengths, torch.tensor([labels[i] for i in idx])

    def batch_loss(batch):
        x, lengths, y = rows([train_idx[i] for i in batch])
        return F.nll_loss(clf(x, lengths), y)

    report = PretrainReport()
    _fit(clf, len(train_idx), batch_loss, config, seed, report, "style classifier")
    freeze(clf)

    def predict_on(subset):
        return lambda batch: clf.predict(*rows([subset[i] for i in batch])[:2])

    report.train_accuracy = _accuracy(
        _batched_predictions(predict_on(train_idx), len(train_idx), config.batch_size),
        [labels[i] for i in train_idx])
    report.heldout_accuracy = _accuracy(
        _batched_predictions(predict_on(held_idx), len(held_idx), config.batch_size),
        [labels[i] for i in held_idx])
    report.heldout_size = len(held_idx)
    report.heldout_index = sorted(held_idx)
    return clf, report


def pretrain_coherence_classifier(pairs: Sequence[CoherencePair], vocab: Vocabulary,
                                  config: ClassifierConfig, seed: int = 0):
    """Binary cross-entropy training on (context, candidate, label) pairs,
    then freeze. Returns (classifier, PretrainReport)."""
    labels = [p.label for p in pairs]
    _require_both(labels, "coherence classifier")
    torch.manual_seed(seed)
    rng = random.Random(seed)
    # hold out whole paragraphs so a positive and its negatives stay together
    groups: dict = {}
    for i, p in enumerate(pairs):
        groups.setdefault(p.context, []).append(i)
    keys = list(groups)
    g_train, g_held = _split(len(keys), config.heldout_fraction, rng)
    train_idx = [i for g in g_train for i in groups[keys[g]]]
    held_idx = [i for g in g_held for i in groups[keys[g]]]

    ctx = coherence_input([p.context for p in pairs], vocab, config.max_context_words)
    cands = [vocab.encode(p.candidate[: config.max_sentence_len]) for p in pairs]
    clf = CoherenceClassifier(len(vocab), config)

    def rows(idx):
        sub = CoherenceInput([ctx.before[i] for i in idx], [ctx.after[i] for i in idx])
        x, lengths = pad_ids([cands[i] for i in idx])
        return sub, x, lengths, torch.tensor([labels[i] for i in idx])

    def batch_loss(batch):
        sub, x, lengths, y = rows([train_idx[i] for i in batch])
        return F.nll_loss(clf(sub, x, lengths), y)

    report = PretrainReport()
    _fit(clf, len(train_idx), batch_loss, config, seed, report, "coherence classifier")
    freeze(clf)

    def predict_on(subset):
        return lambda batch: clf.predict(*rows([subset[i] for i in batch])[:3])

    report.train_accuracy = _accuracy(
        _batched_predictions(predict_on(train_idx), len(train_idx), config.batch_size),
        [labels[i] for i in train_idx])
    report.heldout_accuracy = _accuracy(
        _batched_predictions(predict_on(held_idx), len(held_idx), config.batch_size),
        [labels[i] for i in held_idx])
    report.heldout_size = len(held_idx)
    report.heldout_index = sorted(held_idx)
    return clf, report
