"""Greedy transfer of a test split and the full metric report."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .batch import collate_parallel
from .classifiers import CoherenceInput, coherence_input, pad_ids
from .corpus import ParallelSample
from .losses import Regularizers
from .metrics import bleu, classifier_accuracy, gleu, perplexity
from .model import CastModel
from .vocab import Vocabulary

TABLE_COLUMNS = ("Model", "Acc.", "Coherence", "BLEU", "GLEU", "PPL")


@dataclass
class EvalReport:
    style_accuracy: float
    coherence_accuracy: float
    bleu: float
    gleu: float
    perplexity: float | None
    size: int
    records: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for name in ("style_accuracy", "coherence_accuracy", "bleu", "gleu"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name}={v} outside [0, 100]")

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("records")
        return d

    def to_dict(self) -> dict:
        return asdict(self)

    def row(self, name: str) -> str:
        ppl = "-" if self.perplexity is None else f"{self.perplexity:.2f}"
        return (f"{name:<24}{self.style_accuracy:>8.2f}{self.coherence_accuracy:>11.2f}"
                f"{self.bleu:>8.2f}{self.gleu:>8.2f}{ppl:>9}")


def table_header() -> str:
    return f"{'Model':<24}{'Acc.':>8}{'Coherence':>11}{'BLEU':>8}{'GLEU':>8}{'PPL':>9}"


def format_table(rows: Sequence[tuple[str, EvalReport]]) -> str:
    lines = [table_header(), "-" * 68]
    lines += [report.row(name) for name, report in rows]
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, out_dir, name: str = "CAST", meta: dict | None = None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {"meta": meta or {}, **report.to_dict()}
    (out_dir / "eval.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    (out_dir / "eval.txt").write_text(format_table([(name, report)]))


def _style_predictions(clf, hyp_ids: Sequence[Sequence[int]], batch_size: int) -> list[int]:
    preds = []
    for start in range(0, len(hyp_ids), batch_size):
        x, lengths = pad_ids(hyp_ids[start:start + batch_size])
        preds += clf.predict(x, lengths.clamp(min=1)).tolist()
    return preds


def _coherence_predictions(clf, ctx: CoherenceInput, hyp_ids, batch_size: int) -> list[int]:
    preds = []
    for start in range(0, len(hyp_ids), batch_size):
        stop = start + batch_size
        sub = CoherenceInput(ctx.before[start:stop], ctx.after[start:stop])
        x, lengths = pad_ids(hyp_ids[start:stop])
        preds += clf.predict(sub, x, lengths).tolist()
    return preds


def score_hypotheses(hypotheses: Sequence[Sequence[str]], samples: Sequence[ParallelSample],
                     clfs: Regularizers, vocab: Vocabulary, lm=None,
                     batch_size: int = 64) -> EvalReport:
    """Score restyled sentences against the split's references, target
    styles and contexts."""
    if len(hypotheses) != len(samples):
        raise ValueError("one hypothesis per sample required")
    hyp_ids = [vocab.encode(h) for h in hypotheses]
    with torch.no_grad():
        style_pred = _style_predictions(clfs.style, hyp_ids, batch_size)
        ctx = coherence_input([s.context for s in samples], vocab,
                              clfs.coherence.config.max_context_words)
        coh_pred = _coherence_predictions(clfs.coherence, ctx, hyp_ids, batch_size)
        ppl = perplexity(lm, hyp_ids) if lm is not None else None
    targets = [int(s.target_style) for s in samples]
    refs = [list(s.reference) for s in samples]
    srcs = [list(s.source) for s in samples]
    hyps = [list(h) for h in hypotheses]
    records = [
        {"source": src, "hypothesis": hyp, "reference": ref, "target_style": tgt,
         "predicted_style": sp, "coherent": cp}
        for src, hyp, ref, tgt, sp, cp in zip(srcs, hyps, refs, targets, style_pred, coh_pred)
    ]
    return EvalReport(
        style_accuracy=classifier_accuracy(style_pred, targets),
        coherence_accuracy=classifier_accuracy(coh_pred, [1] * len(samples)),
        bleu=bleu(hyps, refs),
        gleu=gleu(srcs, hyps, refs),
        perplexity=ppl,
        size=len(samples),
        records=records,
    )


def transfer_samples(model: CastModel, samples: Sequence[ParallelSample], vocab: Vocabulary,
                     use_context: bool = True, batch_size: int = 64) -> list[list[str]]:
    """Greedy restyle of every sample, in order."""
    cfg = model.config
    was_training = model.training
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            b = collate_parallel(samples[start:start + batch_size], vocab, cfg.max_sentence_len,
                                 cfg.max_context_words)
            ctx = b.ctx if use_context else None
            gen = model.transfer(b.src, b.src_lengths, ctx, b.ctx_lengths, b.target_style)
            out += [vocab.decode(gen.tokens(i), display=True) for i in range(len(b))]
    model.train(was_training)
    return out


def evaluate_model(model: CastModel, clfs: Regularizers, lm, samples: Sequence[ParallelSample],
                   vocab: Vocabulary, use_context: bool = True, batch_size: int = 64) -> EvalReport:
    if not samples:
        raise ValueError("empty evaluation split")
    hyps = transfer_samples(model, samples, vocab, use_context, batch_size)
    return score_hypotheses(hyps, samples, clfs, vocab, lm, batch_size)
