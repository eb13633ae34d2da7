"""Pipeline stages over a run directory.

Layout of ``out``::

    data/         JSONL splits, oracle.json, manifest.json
    vocab.txt     one token per line, line number = id
    style_classifier.npz, coherence_classifier.npz, language_model.npz, cast.npz
    train/        history.jsonl, steps.jsonl, batches.jsonl, run.json
    eval.json, eval.txt, ablation.json, ablation.txt
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import torch

from .checkpoint import read_checkpoint, save_checkpoint
from .classifiers import (
    ClassifierConfig,
    CoherenceClassifier,
    StyleClassifier,
    freeze,
    pretrain_coherence_classifier,
    pretrain_style_classifier,
)
from .config import RunConfig
from .corpus import (
    DatasetError,
    StyleLabel,
    load_dataset,
    make_coherence_pairs,
    parse_context,
    truncate_context,
    write_dataset,
)
from .evaluation import EvalReport, evaluate_model, format_table, write_report
from .lm import LMConfig, PplLanguageModel, train_language_model
from .losses import Regularizers
from .model import CastModel, ModelConfig
from .synthetic import generate_synthetic_benchmark
from .training import TrainData, run_ablations, train
from .vocab import Vocabulary, build_vocab

log = logging.getLogger(__name__)

SPLITS = {
    "parallel_train": "parallel",
    "parallel_dev": "parallel",
    "parallel_test": "parallel",
    "nonparallel_train": "nonparallel",
    "nonparallel_style": "nonparallel",
    "paragraphs_coherence": "paragraphs",
}


def _meta(cfg: RunConfig, **extra) -> dict:
    return {"seed": cfg.seed, "config": cfg.to_dict(), **extra}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_split(cfg: RunConfig, out, name: str) -> list:
    return load_dataset(Path(out) / "data" / f"{name}.jsonl", SPLITS[name], cfg.data.style_names)


def gen_data(cfg: RunConfig, out) -> dict:
    bench = generate_synthetic_benchmark(cfg.data, cfg.seed)
    data_dir = Path(out) / "data"
    names = cfg.data.style_names
    splits = {
        "parallel_train": bench.parallel["train"],
        "parallel_dev": bench.parallel["dev"],
        "parallel_test": bench.parallel["test"],
        "nonparallel_train": bench.nonparallel["train"],
        "nonparallel_style": bench.nonparallel["style_classifier"],
        "paragraphs_coherence": bench.paragraphs,
    }
    counts = {name: write_dataset(data_dir / f"{name}.jsonl", samples, names)
              for name, samples in splits.items()}
    _write_json(data_dir / "oracle.json", {**bench.oracle.describe(),
                                          "topics": [list(t) for t in bench.topics]})
    _write_json(data_dir / "manifest.json", _meta(cfg, counts=counts))
    return counts


def build_vocab_stage(cfg: RunConfig, out) -> Vocabulary:
    sentences = []
    for s in load_split(cfg, out, "parallel_train"):
        sentences += [s.source, s.reference, *s.context.sentences]
    for name in ("nonparallel_train", "nonparallel_style"):
        sentences += [s.sentence for s in load_split(cfg, out, name)]
    for p in load_split(cfg, out, "paragraphs_coherence"):
        sentences += list(p.sentences)
    vocab = build_vocab(sentences, cfg.min_frequency)
    vocab.save(Path(out) / "vocab.txt")
    _write_json(Path(out) / "vocab.json", _meta(
        cfg, size_with_specials=len(vocab), size_without_specials=vocab.num_words,
        min_frequency=cfg.min_frequency))
    return vocab


def load_vocab(out) -> Vocabulary:
    path = Path(out) / "vocab.txt"
    if not path.is_file():
        raise DatasetError(f"missing vocabulary {path}; run build-vocab first")
    return Vocabulary.load(path)


def pretrain_style_stage(cfg: RunConfig, out):
    vocab = load_vocab(out)
    data = load_split(cfg, out, "nonparallel_style")
    clf, report = pretrain_style_classifier(data, vocab, cfg.style_classifier, cfg.seed)
    save_checkpoint(Path(out) / "style_classifier.npz", "style_classifier", clf,
                    cfg.style_classifier.to_dict(), _meta(cfg, report=report.to_dict()))
    return clf, report


def pretrain_coherence_stage(cfg: RunConfig, out):
    vocab = load_vocab(out)
    paragraphs = load_split(cfg, out, "paragraphs_coherence")
    pairs = make_coherence_pairs(paragraphs, cfg.negatives_per_positive, cfg.seed)
    clf, report = pretrain_coherence_classifier(pairs, vocab, cfg.coherence_classifier, cfg.seed)
    save_checkpoint(Path(out) / "coherence_classifier.npz", "coherence_classifier", clf,
                    cfg.coherence_classifier.to_dict(), _meta(cfg, report=report.to_dict()))
    return clf, report


def lm_target_style(cfg: RunConfig) -> StyleLabel:
    return StyleLabel.STYLE_A if cfg.data.parallel_direction == "b_to_a" else StyleLabel.STYLE_B


def train_lm_stage(cfg: RunConfig, out):
    vocab = load_vocab(out)
    target = lm_target_style(cfg)
    sentences = [s.sentence for s in load_split(cfg, out, "nonparallel_train") if s.style == target]
    lm, report = train_language_model(sentences, vocab, cfg.language_model, cfg.seed)
    save_checkpoint(Path(out) / "language_model.npz", "language_model", lm,
                    cfg.language_model.to_dict(),
                    _meta(cfg, report=report.to_dict(), style=target.name))
    return lm, report


def _load_module(module, state):
    module.load_state_dict(state)
    return freeze(module)


def load_style_classifier(out) -> StyleClassifier:
    header, state = read_checkpoint(Path(out) / "style_classifier.npz", "style_classifier")
    vocab_size = state["embedding.weight"].shape[0]
    return _load_module(StyleClassifier(vocab_size, ClassifierConfig.from_dict(header["config"])),
                        state)


def load_coherence_classifier(out) -> CoherenceClassifier:
    header, state = read_checkpoint(Path(out) / "coherence_classifier.npz", "coherence_classifier")
    vocab_size = state["embedding.weight"].shape[0]
    return _load_module(
        CoherenceClassifier(vocab_size, ClassifierConfig.from_dict(header["config"])), state)


def load_language_model(out) -> PplLanguageModel:
    header, state = read_checkpoint(Path(out) / "language_model.npz", "language_model")
    vocab_size = state["embedding.weight"].shape[0]
    return _load_module(PplLanguageModel(vocab_size, LMConfig.from_dict(header["config"])), state)


def load_cast(out, name: str = "cast.npz") -> tuple[CastModel, dict]:
    header, state = read_checkpoint(Path(out) / name, "cast")
    model = CastModel(ModelConfig(**header["config"]))
    model.load_state_dict(state)
    model.eval()
    return model, header


def load_regularizers(out) -> Regularizers:
    return Regularizers(style=load_style_classifier(out), coherence=load_coherence_classifier(out))


def train_data(cfg: RunConfig, out) -> TrainData:
    return TrainData(load_split(cfg, out, "parallel_train"), load_split(cfg, out, "parallel_dev"),
                     load_split(cfg, out, "nonparallel_train"))


def train_stage(cfg: RunConfig, out):
    out = Path(out)
    vocab = load_vocab(out)
    clfs = load_regularizers(out)
    model_cfg = cfg.model_config(len(vocab))
    result = train(cfg.training, train_data(cfg, out), clfs, vocab, model_cfg, cfg.seed,
                   out_dir=out / "train")
    meta = _meta(cfg, best_step=result.best_step, best_dev_metric=result.best_metric,
                 steps=result.steps, selection_metric=cfg.training.selection_metric,
                 use_context_encoder=cfg.training.use_context_encoder)
    save_checkpoint(out / "cast.npz", "cast", result.model, model_cfg.to_dict(), meta)
    _write_json(out / "train" / "run.json", meta)
    return result


def eval_stage(cfg: RunConfig, out) -> EvalReport:
    out = Path(out)
    model, header = load_cast(out)
    vocab = load_vocab(out)
    clfs = load_regularizers(out)
    lm = load_language_model(out) if (out / "language_model.npz").is_file() else None
    test = load_split(cfg, out, "parallel_test")
    use_context = header["meta"].get("use_context_encoder", True)
    report = evaluate_model(model, clfs, lm, test, vocab, use_context,
                            cfg.training.eval_batch_size)
    write_report(report, out, meta=_meta(cfg, checkpoint_step=header["meta"].get("best_step")))
    return report


def ablate_stage(cfg: RunConfig, out) -> list[tuple[str, EvalReport]]:
    out = Path(out)
    vocab = load_vocab(out)
    clfs = load_regularizers(out)
    lm = load_language_model(out) if (out / "language_model.npz").is_file() else None
    rows = run_ablations(cfg.training, train_data(cfg, out), clfs, vocab,
                         cfg.model_config(len(vocab)), cfg.seed,
                         load_split(cfg, out, "parallel_test"), lm, out_dir=out / "ablation")
    _write_json(out / "ablation.json", _meta(cfg, rows=[{"variant": n, **r.summary()}
                                                         for n, r in rows]))
    (out / "ablation.txt").write_text(format_table(rows))
    return rows


def transfer_stage(cfg: RunConfig, out, record: dict) -> list[str]:
    """Restyle one JSONL-style record: source, optional context_before /
    context_after, optional target_style (defaults to the other style of
    source_style, else style B)."""
    out = Path(out)
    model, _ = load_cast(out)
    vocab = load_vocab(out)
    names = cfg.data.style_names
    try:
        source = record["source"]
        if not isinstance(source, list) or not source:
            raise ValueError("source must be a non-empty token list")
        context = truncate_context(parse_context(record), model.config.max_context_words)
        if "target_style" in record:
            target = StyleLabel.parse(record["target_style"], names)
        elif "source_style" in record:
            target = StyleLabel.parse(record["source_style"], names).other
        else:
            target = StyleLabel.STYLE_B
    except (KeyError, ValueError, TypeError) as exc:
        raise DatasetError(f"bad transfer record: {exc}") from None
    src = torch.tensor([vocab.encode(source[: model.config.max_sentence_len])])
    ctx = None if context.is_empty() else torch.tensor([vocab.encode(context.flat())])
    with torch.no_grad():
        gen = model.transfer(src, None, ctx, None, torch.tensor([int(target)]))
    return vocab.decode(gen.tokens(0), display=True)
