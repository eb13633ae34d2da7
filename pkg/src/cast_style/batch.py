"""Tensorization of parallel and non-parallel samples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .classifiers import CoherenceInput, coherence_input, pad_ids
from .corpus import NonParallelSample, ParallelSample, truncate_context
from .vocab import Vocabulary


@dataclass
class ParallelBatch:
    src: torch.Tensor
    src_lengths: torch.Tensor
    target: torch.Tensor  # reference framed with BOS/EOS, PAD-padded
    ctx: torch.Tensor
    ctx_lengths: torch.Tensor
    coherence: CoherenceInput
    source_style: torch.Tensor
    target_style: torch.Tensor

    def __len__(self) -> int:
        return self.src.size(0)


@dataclass
class NonParallelBatch:
    sent: torch.Tensor
    sent_lengths: torch.Tensor
    target: torch.Tensor  # the sentence itself framed with BOS/EOS
    style: torch.Tensor

    def __len__(self) -> int:
        return self.sent.size(0)


def collate_parallel(samples: Sequence[ParallelSample], vocab: Vocabulary,
                     max_sentence_len: int, max_context_words: int) -> ParallelBatch:
    if not samples:
        raise ValueError("empty parallel batch")
    src, src_len = pad_ids([vocab.encode(s.source[:max_sentence_len]) for s in samples])
    target, _ = pad_ids([vocab.encode(s.reference[:max_sentence_len], add_bos_eos=True)
                         for s in samples], min_len=2)
    contexts = [truncate_context(s.context, max_context_words) for s in samples]
    ctx, ctx_len = pad_ids([vocab.encode(c.flat()) for c in contexts], min_len=0)
    return ParallelBatch(
        src, src_len, target, ctx, ctx_len,
        coherence_input(contexts, vocab, max_context_words),
        torch.tensor([int(s.source_style) for s in samples]),
        torch.tensor([int(s.target_style) for s in samples]),
    )


def collate_nonparallel(samples: Sequence[NonParallelSample], vocab: Vocabulary,
                        max_sentence_len: int) -> NonParallelBatch:
    if not samples:
        raise ValueError("empty non-parallel batch")
    sents = [s.sentence[:max_sentence_len] for s in samples]
    sent, sent_len = pad_ids([vocab.encode(s) for s in sents])
    target, _ = pad_ids([vocab.encode(s, add_bos_eos=True) for s in sents], min_len=2)
    return NonParallelBatch(sent, sent_len, target, torch.tensor([int(s.style) for s in samples]))
