"""Dual-encoder transformer for context-aware style transfer.

A sentence encoder and a context encoder run independently; their outputs are
concatenated along the sequence axis and pushed position-wise through one
linear layer, giving the cross-attention memory of a style-conditioned
decoder. Sentences without context (non-parallel data) use a single learned
null-context vector in place of the context encoder output.

Generated tokens carry a relaxed one-hot ``weights`` tensor over the
vocabulary. Any consumer (this model's encoder, the style classifier, the
coherence classifier) embeds it with its own table, so the relaxation is the
differentiable surrogate of the discrete output.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .vocab import BOS_ID, EOS_ID, PAD_ID

GEN_MODES = ("greedy", "hard_sample", "soft")


@dataclass
class ModelConfig:
    vocab_size: int
    num_layers: int = 1
    num_heads: int = 4
    head_dim: int = 64
    ffn_dim: int = 1024
    max_context_words: int = 50
    max_sentence_len: int = 32
    num_styles: int = 2
    dropout: float = 0.0

    def __post_init__(self):
        for name in ("vocab_size", "num_layers", "num_heads", "head_dim", "ffn_dim",
                     "max_context_words", "max_sentence_len", "num_styles"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def d_model(self) -> int:
        return self.num_heads * self.head_dim

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal_positions(n: int, d: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    i = torch.arange(0, d, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / d)
    table = torch.zeros(n, d, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angle)
    table[:, 1::2] = torch.cos(angle[:, : d // 2])
    return table.float()


def embed(table: nn.Embedding, x: torch.Tensor) -> torch.Tensor:
    """Look up ids, or mix embedding rows for a [B, L, V] weight tensor."""
    if x.is_floating_point():
        return x @ table.weight
    return table(x)


def padding_mask(lengths: torch.Tensor, max_len: int) -> torch.Tensor:
    """True at padded positions."""
    return torch.arange(max_len, device=lengths.device)[None, :] >= lengths[:, None]


def masked_mean(states: torch.Tensor, pad: torch.Tensor) -> torch.Tensor:
    keep = (~pad).to(states.dtype).unsqueeze(-1)
    return (states * keep).sum(1) / keep.sum(1).clamp(min=1.0)


def _encoder(config: ModelConfig) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        config.d_model, config.num_heads, config.ffn_dim, config.dropout, batch_first=True
    )
    return nn.TransformerEncoder(layer, config.num_layers, enable_nested_tensor=False)


@dataclass
class Memory:
    states: torch.Tensor  # [B, M, d]
    pad: torch.Tensor  # [B, M], True = padding


@dataclass
class GeneratedSequence:
    token_ids: list[int]
    continuous_features: torch.Tensor  # [steps, d]
    step_log_probs: torch.Tensor  # [steps]


@dataclass
class Generated:
    """Batched decoder output.

    ``lengths`` counts tokens before EOS; position ``lengths[b]`` holds EOS
    when ``finished[b]``. Later positions are PAD with zero weights.
    """

    token_ids: torch.Tensor  # [B, L]
    weights: torch.Tensor  # [B, L, V]
    step_log_probs: torch.Tensor  # [B, L]
    lengths: torch.Tensor  # [B]
    finished: torch.Tensor  # [B]

    def features(self, table: nn.Embedding) -> torch.Tensor:
        return self.weights @ table.weight

    def content(self, min_length: int = 1):
        """Weights and lengths of the sentence without EOS, clamped to
        ``min_length`` so downstream encoders never see an empty row."""
        lengths = self.lengths.clamp(min=min_length)
        width = max(int(lengths.max()), 1)
        weights = self.weights[:, :width]
        if weights.size(1) < width:
            weights = F.pad(weights, (0, 0, 0, width - weights.size(1)))
        return weights, lengths

    def steps(self, i: int) -> int:
        return int(self.lengths[i]) + int(self.finished[i])

    def tokens(self, i: int) -> list[int]:
        return self.token_ids[i, : int(self.lengths[i])].tolist()

    def sequence(self, i: int, table: nn.Embedding) -> GeneratedSequence:
        n = self.steps(i)
        return GeneratedSequence(
            self.token_ids[i, :n].tolist(),
            (self.weights[i, :n] @ table.weight),
            self.step_log_probs[i, :n],
        )


class CastModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.scale = math.sqrt(d)
        self.embedding = nn.Embedding(config.vocab_size, d)
        nn.init.normal_(self.embedding.weight, std=d ** -0.5)
        n_pos = max(config.max_context_words, config.max_sentence_len + 2)
        self.register_buffer("positions", sinusoidal_positions(n_pos, d), persistent=False)
        self.sentence_encoder = _encoder(config)
        self.context_encoder = _encoder(config)
        self.null_context = nn.Parameter(torch.randn(1, d))
        self.fusion = nn.Linear(d, d)
        self.style_embedding = nn.Embedding(config.num_styles, d)
        layer = nn.TransformerDecoderLayer(
            d, config.num_heads, config.ffn_dim, config.dropout, batch_first=True
        )
        self.decoder = nn.TransformerDecoder(layer, config.num_layers)
        self.output = nn.Linear(d, config.vocab_size)

    # -- encoders ---------------------------------------------------------

    def _encode(self, encoder, x, lengths):
        L = x.size(1)
        h = embed(self.embedding, x) * self.scale + self.positions[:L].to(self.embedding.weight.dtype)
        pad = padding_mask(lengths, L)
        return encoder(h, src_key_padding_mask=pad), pad

    def encode_sentence(self, x: torch.Tensor, lengths: torch.Tensor | None = None):
        """x: ids [B, L] or relaxed one-hot weights [B, L, V]."""
        if x.size(1) > self.config.max_sentence_len:
            raise ValueError(
                f"sentence length {x.size(1)} exceeds max_sentence_len {self.config.max_sentence_len}"
            )
        if lengths is None:
            lengths = torch.full((x.size(0),), x.size(1), dtype=torch.long)
        if (lengths < 1).any():
            raise ValueError("cannot encode an empty sentence")
        return self._encode(self.sentence_encoder, x, lengths)

    def null_memory(self, batch_size: int):
        states = self.null_context.expand(batch_size, 1, -1)
        return states, torch.zeros(batch_size, 1, dtype=torch.bool)

    def encode_context(self, c: torch.Tensor | None, lengths: torch.Tensor | None = None):
        """Empty rows (length 0) get the learned null-context vector."""
        if c is None:
            raise ValueError("use null_memory for a batch without context")
        B, L = c.shape[:2]
        if L > self.config.max_context_words:
            raise ValueError(
                f"context length {L} exceeds max_context_words {self.config.max_context_words}"
            )
        if lengths is None:
            lengths = torch.full((B,), L, dtype=torch.long)
        if L == 0 or bool((lengths == 0).all()):
            return self.null_memory(B)
        empty = lengths == 0
        states, pad = self._encode(self.context_encoder, c, lengths.clamp(min=1))
        if empty.any():
            first = torch.zeros_like(pad)
            first[:, 0] = True
            swap = (empty[:, None] & first).unsqueeze(-1)
            states = torch.where(swap, self.null_context.to(states.dtype).expand_as(states), states)
        return states, pad

    def fuse(self, sent_feats, sent_pad, ctx_feats, ctx_pad) -> Memory:
        if sent_feats.size(-1) != ctx_feats.size(-1):
            raise ValueError("sentence and context feature widths differ")
        if sent_feats.size(0) != ctx_feats.size(0):
            raise ValueError("sentence and context batch sizes differ")
        states = self.fusion(torch.cat([sent_feats, ctx_feats], dim=1))
        return Memory(states, torch.cat([sent_pad, ctx_pad], dim=1))

    def memory(self, src, src_lengths=None, ctx=None, ctx_lengths=None) -> Memory:
        sent, sent_pad = self.encode_sentence(src, src_lengths)
        if ctx is None:
            ctx_states, ctx_pad = self.null_memory(src.size(0))
            ctx_states = ctx_states.to(sent.dtype)
        else:
            ctx_states, ctx_pad = self.encode_context(ctx, ctx_lengths)
        return self.fuse(sent, sent_pad, ctx_states, ctx_pad)

    # -- decoder ----------------------------------------------------------

    def _start(self, memory: Memory, style: torch.Tensor) -> torch.Tensor:
        return (self.style_embedding(style) + masked_mean(memory.states, memory.pad)).unsqueeze(1)

    def _decode(self, inputs: torch.Tensor, memory: Memory) -> torch.Tensor:
        T = inputs.size(1)
        h = inputs + self.positions[:T].to(inputs.dtype)
        causal = torch.triu(torch.ones(T, T, dtype=torch.bool), diagonal=1)
        out = self.decoder(h, memory.states, tgt_mask=causal,
                           memory_key_padding_mask=memory.pad)
        return self.output(out)

    def logits(self, memory: Memory, style: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        """Teacher-forced logits for target[:, 1:] given the BOS-framed target."""
        if target.size(1) < 2:
            raise ValueError("target must hold at least BOS and EOS")
        inputs = torch.cat([self._start(memory, style),
                            self.embedding(target[:, :-1]) * self.scale], dim=1)
        return self._decode(inputs, memory)[:, 1:]

    def token_log_probs(self, memory: Memory, style: torch.Tensor, target: torch.Tensor):
        """Per-step log p(gold token), zero at padding. Shape [B, T-1]."""
        logp = F.log_softmax(self.logits(memory, style, target), dim=-1)
        gold = target[:, 1:]
        picked = logp.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
        return picked.masked_fill(gold == PAD_ID, 0.0)

    def sequence_log_prob(self, memory: Memory, style: torch.Tensor, target: torch.Tensor):
        """log p(target | memory, style) per row, teacher-forced."""
        return self.token_log_probs(memory, style, target).sum(-1)

    def generate(self, memory: Memory, style: torch.Tensor, mode: str = "greedy",
                 max_len: int | None = None, temperature: float = 1.0,
                 generator: torch.Generator | None = None) -> Generated:
        """Autoregressive decoding.

        greedy: argmax token (lowest id on ties), straight-through weights.
        hard_sample: token drawn from the softmax, straight-through weights
            (forward value is the one-hot, backward goes through the softmax).
        soft: weights are the softmax itself; token ids record the argmax.
        """
        if mode not in GEN_MODES:
            raise ValueError(f"unknown generation mode {mode!r}")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        max_len = max_len or self.config.max_sentence_len
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        B = memory.states.size(0)
        V = self.config.vocab_size
        table = self.embedding.weight
        bos = (table[BOS_ID] * self.scale).expand(B, 1, -1)
        inputs = torch.cat([self._start(memory, style), bos], dim=1)

        finished = torch.zeros(B, dtype=torch.bool)
        lengths = torch.zeros(B, dtype=torch.long)
        ids, weights, logps = [], [], []
        for t in range(max_len):
            logits = self._decode(inputs, memory)[:, -1] / temperature
            probs = F.softmax(logits, dim=-1)
            logp = F.log_softmax(logits, dim=-1)
            if mode == "hard_sample":
                tok = torch.multinomial(probs.detach(), 1, generator=generator).squeeze(1)
            else:
                tok = logits.argmax(-1)
            if mode == "soft":
                w = probs
            else:
                w = F.one_hot(tok, V).to(probs.dtype) + (probs - probs.detach())
            alive = ~finished
            tok = torch.where(alive, tok, torch.full_like(tok, PAD_ID))
            w = w * alive.unsqueeze(-1).to(w.dtype)
            step_logp = logp.gather(-1, tok.unsqueeze(-1)).squeeze(-1) * alive.to(logp.dtype)
            ids.append(tok)
            weights.append(w)
            logps.append(step_logp)

            lengths = lengths + (alive & (tok != EOS_ID)).long()
            finished = finished | (alive & (tok == EOS_ID))
            if bool(finished.all()) or t == max_len - 1:
                break
            inputs = torch.cat([inputs, (w @ table * self.scale).unsqueeze(1)], dim=1)

        return Generated(torch.stack(ids, 1), torch.stack(weights, 1), torch.stack(logps, 1),
                         lengths, finished)

    def transfer(self, src, src_lengths, ctx, ctx_lengths, target_style: torch.Tensor,
                 mode: str = "greedy", max_len: int | None = None, temperature: float = 1.0,
                 generator: torch.Generator | None = None) -> Generated:
        """Restyle ``src`` into ``target_style``; ``ctx=None`` takes the
        null-context path."""
        memory = self.memory(src, src_lengths, ctx, ctx_lengths)
        return self.generate(memory, target_style, mode, max_len, temperature, generator)
