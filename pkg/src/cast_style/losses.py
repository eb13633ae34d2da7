"""Training objectives of the hybrid parallel / non-parallel model.

Every loss is a mean over the batch of a per-sequence negative log-likelihood
(summed over tokens). Losses that route generated text through a frozen
classifier generate with relaxed one-hot weights so gradients reach the
encoders and decoder but never the classifier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch

from .batch import NonParallelBatch, ParallelBatch
from .classifiers import (
    CoherenceClassifier,
    StyleClassifier,
    coherence_log_prob,
    require_frozen,
    style_log_prob,
)
from .model import CastModel, Generated

FIRST_HOP = ("sample", "greedy")


@dataclass
class LossWeights:
    lambda1: float = 1.0  # coherence
    lambda2: float = 1.0  # reconstruction
    lambda3: float = 1.0  # back-translation
    lambda4: float = 1.0  # style

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be finite and >= 0, got {v}")


@dataclass
class LossBreakdown:
    c_s2s: torch.Tensor
    cohere: torch.Tensor
    recon: torch.Tensor
    btrans: torch.Tensor
    style: torch.Tensor
    final: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


@dataclass
class Regularizers:
    style: StyleClassifier | None = None
    coherence: CoherenceClassifier | None = None


def contextual_s2s_loss(model: CastModel, batch: ParallelBatch, use_context: bool = True):
    """-log p(y | E_s(x), E_c(c), target style); ``use_context=False`` drops the
    context encoder, which is the plain sentence-only seq2seq loss."""
    ctx = batch.ctx if use_context else None
    memory = model.memory(batch.src, batch.src_lengths, ctx, batch.ctx_lengths)
    return -model.sequence_log_prob(memory, batch.target_style, batch.target).mean()


def s2s_loss(model: CastModel, batch: ParallelBatch):
    return contextual_s2s_loss(model, batch, use_context=False)


def _transfer_parallel(model, batch: ParallelBatch, gen_mode, use_context, temperature, generator):
    ctx = batch.ctx if use_context else None
    return model.transfer(batch.src, batch.src_lengths, ctx, batch.ctx_lengths, batch.target_style,
                          mode=gen_mode, temperature=temperature, generator=generator)


def _transfer_nonparallel(model, batch: NonParallelBatch, style, gen_mode, temperature, generator):
    return model.transfer(batch.sent, batch.sent_lengths, None, None, style,
                          mode=gen_mode, temperature=temperature, generator=generator)


def coherence_loss(model: CastModel, clf: CoherenceClassifier, batch: ParallelBatch,
                   gen_mode: str = "hard_sample", use_context: bool = True,
                   temperature: float = 1.0, generator: torch.Generator | None = None):
    require_frozen(clf, "coherence classifier")
    generated = _transfer_parallel(model, batch, gen_mode, use_context, temperature, generator)
    weights, lengths = generated.content()
    return -coherence_log_prob(clf, batch.coherence, weights, lengths).mean()


def reconstruction_loss(model: CastModel, batch: NonParallelBatch):
    memory = model.memory(batch.sent, batch.sent_lengths)
    return -model.sequence_log_prob(memory, batch.style, batch.target).mean()


def first_hop(model: CastModel, batch: NonParallelBatch, gen_mode: str = "hard_sample",
              mode: str = "sample", temperature: float = 1.0,
              generator: torch.Generator | None = None) -> Generated:
    """x~ = D(E_s(x), other style); ``mode="greedy"`` takes the argmax path."""
    if mode not in FIRST_HOP:
        raise ValueError(f"first-hop mode must be one of {FIRST_HOP}")
    gen_mode = gen_mode if mode == "sample" else "greedy"
    return _transfer_nonparallel(model, batch, 1 - batch.style, gen_mode, temperature, generator)


def back_translation_loss(model: CastModel, batch: NonParallelBatch, gen_mode: str = "hard_sample",
                          first_hop_mode: str = "sample", straight_through: bool = True,
                          temperature: float = 1.0, generator: torch.Generator | None = None,
                          x_tilde: Generated | None = None):
    """-log p(x | E_s(x~), original style) with x~ transferred to the other
    style. With ``straight_through=False`` the first hop is a constant."""
    if x_tilde is None:
        x_tilde = first_hop(model, batch, gen_mode, first_hop_mode, temperature, generator)
    weights, lengths = x_tilde.content()
    if not straight_through:
        weights = weights.detach()
    memory = model.memory(weights, lengths)
    return -model.sequence_log_prob(memory, batch.style, batch.target).mean()


def style_loss(model: CastModel, clf: StyleClassifier, batch: NonParallelBatch,
               gen_mode: str = "hard_sample", temperature: float = 1.0,
               generator: torch.Generator | None = None, x_tilde: Generated | None = None):
    """-[log p_C(l | x^) + log p_C(l~ | x~)], one generated sample each."""
    require_frozen(clf, "style classifier")
    x_hat = _transfer_nonparallel(model, batch, batch.style, gen_mode, temperature, generator)
    if x_tilde is None:
        x_tilde = _transfer_nonparallel(model, batch, 1 - batch.style, gen_mode, temperature,
                                        generator)
    keep = style_log_prob(clf, *x_hat.content(), batch.style)
    flip = style_log_prob(clf, *x_tilde.content(), 1 - batch.style)
    return -(keep + flip).mean()


def combine(c_s2s, cohere, recon, btrans, style, weights: LossWeights) -> LossBreakdown:
    final = (c_s2s + weights.lambda1 * cohere + weights.lambda2 * recon
             + weights.lambda3 * btrans + weights.lambda4 * style)
    return LossBreakdown(c_s2s, cohere, recon, btrans, style, final)


def final_loss(model: CastModel, clfs: Regularizers, parallel: ParallelBatch,
               nonparallel: NonParallelBatch | None, weights: LossWeights,
               gen_mode: str = "hard_sample", *, use_context_encoder: bool = True,
               use_coherence_loss: bool = True, use_nonparallel: bool = True,
               bt_first_hop: str = "sample", bt_straight_through: bool = True,
               temperature: float = 1.0, generator: torch.Generator | None = None
               ) -> LossBreakdown:
    """All five objectives and their weighted sum. Components switched off
    contribute an exact zero and receive no gradient."""
    if len(parallel) == 0:
        raise ValueError("empty parallel batch")
    if use_nonparallel and (nonparallel is None or len(nonparallel) == 0):
        raise ValueError("empty non-parallel batch")
    c_s2s = contextual_s2s_loss(model, parallel, use_context_encoder)
    zero = c_s2s.new_zeros(())
    cohere = recon = btrans = style = zero
    if use_coherence_loss:
        if clfs.coherence is None:
            raise ValueError("coherence loss needs a coherence classifier")
        cohere = coherence_loss(model, clfs.coherence, parallel, gen_mode, use_context_encoder,
                                temperature, generator)
    if use_nonparallel:
        recon = reconstruction_loss(model, nonparallel)
        x_tilde = first_hop(model, nonparallel, gen_mode, bt_first_hop, temperature, generator)
        btrans = back_translation_loss(model, nonparallel, straight_through=bt_straight_through,
                                       x_tilde=x_tilde)
        if clfs.style is None:
            raise ValueError("style loss needs a style classifier")
        # the sampled x~ doubles as the transfer sample of the style term
        shared = x_tilde if bt_first_hop == "sample" else None
        style = style_loss(model, clfs.style, nonparallel, gen_mode, temperature, generator,
                           x_tilde=shared)
    return combine(c_s2s, cohere, recon, btrans, style, weights)
