"""Hybrid-batch training loop, dev-set model selection and ablations."""
from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import torch

from .batch import collate_nonparallel, collate_parallel
from .classifiers import parameter_checksum, require_frozen
from .corpus import NonParallelSample, ParallelSample
from .evaluation import EvalReport, evaluate_model
from .losses import FIRST_HOP, LossBreakdown, LossWeights, Regularizers, final_loss
from .model import GEN_MODES, CastModel, ModelConfig
from .vocab import Vocabulary

log = logging.getLogger(__name__)

SELECTION_METRICS = ("bleu+coherence", "bleu", "coherence")


@dataclass
class TrainingConfig:
    batch_size: int = 64
    learning_rate: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    max_steps: int = 1000
    eval_every: int = 100
    weights: LossWeights = field(default_factory=LossWeights)
    use_context_encoder: bool = True
    use_coherence_loss: bool = True
    use_nonparallel: bool = True
    gen_mode: str = "hard_sample"
    temperature: float = 1.0
    bt_first_hop: str = "sample"
    bt_straight_through: bool = True
    grad_clip: float = 0.0  # 0 disables clipping
    selection_metric: str = "bleu+coherence"
    eval_batch_size: int = 64

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.betas = tuple(self.betas)
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be even (half parallel, half non-parallel)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_steps < 0 or self.eval_every < 1:
            raise ValueError("max_steps must be >= 0 and eval_every >= 1")
        if self.gen_mode not in GEN_MODES:
            raise ValueError(f"gen_mode must be one of {GEN_MODES}")
        if self.bt_first_hop not in FIRST_HOP:
            raise ValueError(f"bt_first_hop must be one of {FIRST_HOP}")
        if self.selection_metric not in SELECTION_METRICS:
            raise ValueError(f"selection_metric must be one of {SELECTION_METRICS}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


ABLATIONS = {
    "CAST": {},
    "w/o context encoder": {"use_context_encoder": False},
    "w/o cohere. classifier": {"use_coherence_loss": False},
    "w/o both": {"use_context_encoder": False, "use_coherence_loss": False},
    "w/o non-parallel data": {"use_nonparallel": False},
}


@dataclass
class TrainData:
    parallel_train: list[ParallelSample]
    parallel_dev: list[ParallelSample]
    nonparallel_train: list[NonParallelSample]


# --- batching --------------------------------------------------------------

@dataclass(frozen=True)
class HybridBatch:
    epoch: int
    index: int
    parallel: tuple[int, ...]
    nonparallel: tuple[int, ...]

    def to_record(self) -> dict:
        return {"epoch": self.epoch, "index": self.index,
                "parallel": list(self.parallel), "nonparallel": list(self.nonparallel)}


def make_hybrid_batches(num_parallel: int, num_nonparallel: int, batch_size: int, seed: int,
                        epochs: int | None = None) -> Iterator[HybridBatch]:
    """Index batches with batch_size/2 parallel and batch_size/2 non-parallel
    samples.

    Each epoch walks a fresh permutation of the parallel pool once; a short
    final chunk is topped up from the start of the same permutation. The
    non-parallel pool is down-sampled without replacement to the same number
    of slots (cycling permutations if it is smaller).
    """
    if num_parallel < 1 or num_nonparallel < 1:
        raise ValueError("both pools must be non-empty")
    if batch_size < 2 or batch_size % 2:
        raise ValueError("batch_size must be even")
    half = batch_size // 2
    rng = random.Random(seed)
    epoch = 0
    while epochs is None or epoch < epochs:
        perm = list(range(num_parallel))
        rng.shuffle(perm)
        n_batches = math.ceil(num_parallel / half)
        slots = n_batches * half
        par = [perm[i % num_parallel] for i in range(slots)]
        non: list[int] = []
        while len(non) < slots:
            u = list(range(num_nonparallel))
            rng.shuffle(u)
            non += u
        for b in range(n_batches):
            yield HybridBatch(epoch, b, tuple(par[b * half:(b + 1) * half]),
                              tuple(non[b * half:(b + 1) * half]))
        epoch += 1


# --- optimization ----------------------------------------------------------

@dataclass
class TrainState:
    model: CastModel
    optimizer: torch.optim.Optimizer
    step: int = 0
    best_state: dict | None = None
    best_metric: float = -math.inf
    best_step: int = 0


def init_state(model: CastModel, config: TrainingConfig) -> TrainState:
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=config.betas)
    return TrainState(model, opt)


def train_step(state: TrainState, parallel, nonparallel, clfs: Regularizers,
               config: TrainingConfig, generator: torch.Generator | None = None) -> LossBreakdown:
    """One Adam update on the weighted objective; classifiers stay frozen."""
    if config.use_coherence_loss:
        require_frozen(clfs.coherence, "coherence classifier")
    if config.use_nonparallel:
        require_frozen(clfs.style, "style classifier")
    model = state.model
    model.train()
    state.optimizer.zero_grad(set_to_none=True)
    breakdown = final_loss(
        model, clfs, parallel, nonparallel if config.use_nonparallel else None, config.weights,
        config.gen_mode,
        use_context_encoder=config.use_context_encoder,
        use_coherence_loss=config.use_coherence_loss,
        use_nonparallel=config.use_nonparallel,
        bt_first_hop=config.bt_first_hop,
        bt_straight_through=config.bt_straight_through,
        temperature=config.temperature,
        generator=generator,
    )
    values = breakdown.as_floats()
    if not all(math.isfinite(v) for v in values.values()):
        raise FloatingPointError(f"non-finite loss at step {state.step + 1}: {values}")
    breakdown.final.backward()
    if config.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
    state.optimizer.step()
    state.step += 1
    return breakdown


def selection_score(report: EvalReport, metric: str) -> float:
    if metric == "bleu":
        return report.bleu
    if metric == "coherence":
        return report.coherence_accuracy
    return (report.bleu + report.coherence_accuracy) / 2.0


@dataclass
class TrainResult:
    model: CastModel
    best_metric: float
    best_step: int
    history: list[dict]
    steps: int
    classifier_checksums: dict[str, str]


def _write_line(fh, record: dict):
    if fh is not None:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()


def train(config: TrainingConfig, data: TrainData, clfs: Regularizers, vocab: Vocabulary,
          model_config: ModelConfig, seed: int, out_dir=None,
          on_eval: Callable[[dict], None] | None = None) -> TrainResult:
    """Run ``max_steps`` hybrid updates, evaluating on dev every
    ``eval_every`` steps and keeping the best-scoring parameters.

    With ``out_dir`` set, writes history.jsonl (one line per dev evaluation),
    steps.jsonl (loss breakdown per step) and batches.jsonl (sample indices
    of every batch).
    """
    if not data.parallel_train or not data.parallel_dev:
        raise ValueError("training needs non-empty parallel train and dev splits")
    if not data.nonparallel_train:
        raise ValueError("training needs a non-empty non-parallel pool")
    torch.manual_seed(seed)
    model = CastModel(model_config)
    state = init_state(model, config)
    generator = torch.Generator().manual_seed(seed)
    batches = make_hybrid_batches(len(data.parallel_train), len(data.nonparallel_train),
                                  config.batch_size, seed)
    checksums = {name: parameter_checksum(m) for name, m in
                 (("style", clfs.style), ("coherence", clfs.coherence)) if m is not None}

    files = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = {k: (out_dir / f"{k}.jsonl").open("w") for k in ("history", "steps", "batches")}
    history: list[dict] = []
    interval: list[dict[str, float]] = []
    cfg = model_config
    try:
        while state.step < config.max_steps:
            hb = next(batches)
            pb = collate_parallel([data.parallel_train[i] for i in hb.parallel], vocab,
                                  cfg.max_sentence_len, cfg.max_context_words)
            nb = collate_nonparallel([data.nonparallel_train[i] for i in hb.nonparallel], vocab,
                                     cfg.max_sentence_len)
            losses = train_step(state, pb, nb, clfs, config, generator).as_floats()
            interval.append(losses)
            _write_line(files.get("batches"), {"step": state.step, **hb.to_record()})
            _write_line(files.get("steps"), {"step": state.step, **losses})

            if state.step % config.eval_every == 0:
                report = evaluate_model(model, clfs, None, data.parallel_dev, vocab,
                                        config.use_context_encoder, config.eval_batch_size)
                score = selection_score(report, config.selection_metric)
                mean_losses = {k: sum(d[k] for d in interval) / len(interval) for k in interval[0]}
                interval = []
                record = {
                    "step": state.step,
                    "epoch": hb.epoch,
                    "train": mean_losses,
                    "dev": {"bleu": report.bleu, "gleu": report.gleu,
                            "style_accuracy": report.style_accuracy,
                            "coherence_accuracy": report.coherence_accuracy},
                    "selection": score,
                }
                history.append(record)
                _write_line(files.get("history"), record)
                if score > state.best_metric:
                    state.best_metric = score
                    state.best_step = state.step
                    state.best_state = copy.deepcopy(model.state_dict())
                log.info("step %d dev bleu %.2f coherence %.2f style %.2f (selection %.2f)",
                         state.step, report.bleu, report.coherence_accuracy,
                         report.style_accuracy, score)
                if on_eval is not None:
                    on_eval(record)
    finally:
        for fh in files.values():
            fh.close()

    if state.best_state is not None:
        model.load_state_dict(state.best_state)
    model.eval()
    for name, m in (("style", clfs.style), ("coherence", clfs.coherence)):
        if m is not None and parameter_checksum(m) != checksums[name]:
            raise RuntimeError(f"{name} classifier parameters changed during training")
    return TrainResult(model, state.best_metric, state.best_step, history, state.step, checksums)


def run_ablations(config: TrainingConfig, data: TrainData, clfs: Regularizers, vocab: Vocabulary,
                  model_config: ModelConfig, seed: int, test: Sequence[ParallelSample], lm=None,
                  variants: Sequence[str] | None = None, out_dir=None
                  ) -> list[tuple[str, EvalReport]]:
    """Train each ablation variant with the same seed and data and score it
    on ``test``. Rows come back in the fixed variant order."""
    rows = []
    for name in variants or list(ABLATIONS):
        if name not in ABLATIONS:
            raise ValueError(f"unknown ablation variant {name!r}")
        variant = replace(config, **ABLATIONS[name])
        log.info("ablation variant: %s", name)
        sub = None if out_dir is None else Path(out_dir) / _slug(name)
        result = train(variant, data, clfs, vocab, model_config, seed, out_dir=sub)
        report = evaluate_model(result.model, clfs, lm, test, vocab, variant.use_context_encoder,
                                config.eval_batch_size)
        rows.append((name, report))
    return rows


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name).strip("_").lower()
