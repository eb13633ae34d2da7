"""Word-level LSTM language model used only to score fluency (perplexity)."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .classifiers import freeze, pad_ids
from .vocab import BOS_ID, EOS_ID, PAD_ID, Vocabulary

log = logging.getLogger(__name__)


@dataclass
class LMConfig:
    embed_dim: int = 64
    hidden_dim: int = 128
    epochs: int = 3
    batch_size: int = 32
    learning_rate: float = 2e-3
    max_sentence_len: int = 32

    @classmethod
    def from_dict(cls, d: dict) -> "LMConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown language model keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class PplLanguageModel(nn.Module):
    def __init__(self, vocab_size: int, config: LMConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(vocab_size, config.embed_dim)
        self.lstm = nn.LSTM(config.embed_dim, config.hidden_dim, num_layers=1, batch_first=True)
        self.output = nn.Linear(config.hidden_dim, vocab_size)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        h, _ = self.lstm(self.embedding(inputs))
        return self.output(h)

    def token_nll(self, sentences: Sequence[Sequence[int]]) -> tuple[float, int]:
        """Summed NLL (nats, float64) of every token plus the closing EOS."""
        framed = [[BOS_ID, *s[: self.config.max_sentence_len], EOS_ID] for s in sentences]
        ids, _ = pad_ids(framed, min_len=2)
        gold = ids[:, 1:]
        logits = self(ids[:, :-1]).double()
        logp = F.log_softmax(logits, dim=-1).gather(-1, gold.unsqueeze(-1)).squeeze(-1)
        mask = gold != PAD_ID
        return float(-(logp * mask).sum()), int(mask.sum())


@dataclass
class LMReport:
    curve: list[float] = field(default_factory=list)
    train_perplexity: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def train_language_model(sentences: Sequence[Sequence[str]], vocab: Vocabulary, config: LMConfig,
                         seed: int = 0):
    """Fit the LSTM LM on tokenized sentences and freeze it."""
    if not sentences:
        raise ValueError("language model needs at least one sentence")
    torch.manual_seed(seed)
    rng = random.Random(seed)
    data = [vocab.encode(s[: config.max_sentence_len], add_bos_eos=True) for s in sentences]
    lm = PplLanguageModel(len(vocab), config)
    opt = torch.optim.Adam(lm.parameters(), lr=config.learning_rate)
    report = LMReport()
    lm.train()
    for epoch in range(config.epochs):
        order = list(range(len(data)))
        rng.shuffle(order)
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            ids, _ = pad_ids([data[i] for i in order[start:start + config.batch_size]], min_len=2)
            logits = lm(ids[:, :-1])
            loss = F.cross_entropy(logits.reshape(-1, logits.size(-1)), ids[:, 1:].reshape(-1),
                                   ignore_index=PAD_ID, reduction="sum")
            n = int((ids[:, 1:] != PAD_ID).sum())
            opt.zero_grad()
            (loss / n).backward()
            opt.step()
            total += loss.item()
            count += n
        report.curve.append(math.exp(total / count))
        log.info("language model epoch %d train ppl %.2f", epoch + 1, report.curve[-1])
    freeze(lm)
    with torch.no_grad():
        nll, n = lm.token_nll([vocab.encode(s) for s in sentences])
    report.train_perplexity = math.exp(nll / n)
    return lm, report
