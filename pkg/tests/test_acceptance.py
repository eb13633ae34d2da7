"""Acceptance gate: nine numbered criteria, one PASS/FAIL line each.

The pipeline-backed criteria (5-9) share one session-scoped run of every
stage on configs/synthetic.yaml.
"""
import json
import math
import random
import time
from pathlib import Path

import pytest
import torch

from cast_style.batch import collate_nonparallel, collate_parallel
from cast_style.checkpoint import read_checkpoint
from cast_style.classifiers import (
    ClassifierConfig,
    CoherenceClassifier,
    CoherenceInput,
    StyleClassifier,
    coherence_input,
    freeze,
    pad_ids,
    parameter_checksum,
)
from cast_style.config import load_config
from cast_style.corpus import Context, NonParallelSample, ParallelSample, StyleLabel
from cast_style.corpus import make_coherence_pairs
from cast_style.lm import LMConfig, PplLanguageModel
from cast_style.losses import (
    LossWeights,
    Regularizers,
    back_translation_loss,
    coherence_loss,
    contextual_s2s_loss,
    final_loss,
    reconstruction_loss,
    style_loss,
)
from cast_style.metrics import bleu, gleu, perplexity
from cast_style.model import CastModel, ModelConfig
from cast_style.pipeline import load_split
from cast_style.training import (
    TrainingConfig,
    init_state,
    make_hybrid_batches,
    run_ablations,
    train_step,
)
from cast_style import pipeline
from cast_style.vocab import build_vocab

from conftest import ACCEPTANCE_LINES, run_cli, tiny_clf_config, tiny_model_config
from test_metrics import hand_gleu

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "synthetic.yaml"
PIPELINE = ("gen-data", "build-vocab", "pretrain-style", "pretrain-coherence", "train-lm",
            "train", "eval")


def report(number: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --- 1. gradient suite --------------------------------------------------------

def _grad_setup():
    words = [f"w{i}" for i in range(16)]
    vocab = build_vocab([words])
    rng = random.Random(0)

    def sent():
        return tuple(rng.choice(words) for _ in range(rng.randint(2, 4)))

    a, b = StyleLabel.STYLE_A, StyleLabel.STYLE_B
    par = [ParallelSample(sent(), sent(), Context((sent(),), (sent(),)), a, b) for _ in range(2)]
    non = [NonParallelSample(sent(), a), NonParallelSample(sent(), b)]
    torch.manual_seed(0)
    model = CastModel(ModelConfig(vocab_size=len(vocab), num_heads=2, head_dim=4, ffn_dim=16,
                                  max_context_words=20, max_sentence_len=4)).double()
    cc = ClassifierConfig(embed_dim=8, num_filters=4, num_heads=2, ffn_dim=16, max_sentence_len=8)
    clfs = Regularizers(freeze(StyleClassifier(len(vocab), cc).double()),
                        freeze(CoherenceClassifier(len(vocab), cc).double()))
    return model, clfs, collate_parallel(par, vocab, 4, 20), collate_nonparallel(non, vocab, 4)


def _max_fd_error(model, loss_fn, per_group=3, eps=1e-4, floor=1e-6):
    model.zero_grad()
    loss_fn().backward()
    worst, checked = 0.0, 0
    pick = torch.Generator().manual_seed(1)
    for p in model.parameters():
        grad = torch.zeros_like(p) if p.grad is None else p.grad
        flat, gflat = p.data.view(-1), grad.view(-1)
        for i in torch.randperm(flat.numel(), generator=pick)[:per_group].tolist():
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
            num, ana = (up - down) / (2 * eps), gflat[i].item()
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
            checked += 1
    return worst, checked


def test_criterion_1_gradient_suite():
    start = time.perf_counter()
    model, clfs, pb, nb = _grad_setup()
    model.train()
    losses = {
        "contextual s2s": lambda: contextual_s2s_loss(model, pb),
        "coherence": lambda: coherence_loss(model, clfs.coherence, pb, "soft"),
        "reconstruction": lambda: reconstruction_loss(model, nb),
        "back-translation": lambda: back_translation_loss(model, nb, "soft"),
        "style": lambda: style_loss(model, clfs.style, nb, "soft"),
    }
    errors = {name: _max_fd_error(model, fn) for name, fn in losses.items()}
    elapsed = time.perf_counter() - start
    worst = max(e for e, _ in errors.values())
    detail = ", ".join(f"{n} {e:.1e} ({k} coords)" for n, (e, k) in errors.items())
    report(1, worst <= 1e-3 and elapsed <= 60,
           f"max rel error {worst:.2e} <= 1e-3 in {elapsed:.1f}s <= 60s; {detail}")


# --- 2. objective composition -------------------------------------------------

def test_criterion_2_objective_composition(bench, vocab):
    torch.manual_seed(0)
    model = CastModel(tiny_model_config(len(vocab)))
    cfg = tiny_clf_config()
    clfs = Regularizers(freeze(StyleClassifier(len(vocab), cfg)),
                        freeze(CoherenceClassifier(len(vocab), cfg)))
    rng = random.Random(7)
    par, non = bench.parallel["train"], bench.nonparallel["train"]
    worst, exact_zero = 0.0, True
    for k in range(100):
        pb = collate_parallel(rng.sample(par, 4), vocab, 16, 50)
        nb = collate_nonparallel(rng.sample(non, 4), vocab, 16)
        w = LossWeights(*(rng.uniform(0, 3) for _ in range(4)))
        out = final_loss(model, clfs, pb, nb, w, generator=torch.Generator().manual_seed(k))
        parts = [out.c_s2s, out.cohere, out.recon, out.btrans, out.style]
        total = sum(float(lam) * v.item() for lam, v in
                    zip([1.0, w.lambda1, w.lambda2, w.lambda3, w.lambda4], parts))
        worst = max(worst, abs(out.final.item() - total) / abs(total))
        zero = final_loss(model, clfs, pb, nb, LossWeights(0, 0, 0, 0),
                          generator=torch.Generator().manual_seed(k))
        exact_zero &= torch.equal(zero.final, zero.c_s2s)
    report(2, worst <= 1e-6 and exact_zero,
           f"weighted-sum identity max rel error {worst:.1e} <= 1e-6 over 100 batches; "
           f"lambda=0 gives c_s2s exactly: {exact_zero}")


# --- 3. frozen regularizers ---------------------------------------------------

def test_criterion_3_frozen_regularizers(bench, vocab):
    torch.manual_seed(0)
    model = CastModel(tiny_model_config(len(vocab)))
    cfg = tiny_clf_config()
    clfs = Regularizers(freeze(StyleClassifier(len(vocab), cfg)),
                        freeze(CoherenceClassifier(len(vocab), cfg)))
    before = parameter_checksum(clfs.style), parameter_checksum(clfs.coherence)
    config = TrainingConfig(batch_size=8, learning_rate=1e-2)
    state = init_state(model, config)
    gen = torch.Generator().manual_seed(0)
    par, non = bench.parallel["train"], bench.nonparallel["train"]
    for hb in make_hybrid_batches(len(par), len(non), 8, seed=0):
        if state.step == 100:
            break
        out = train_step(state, collate_parallel([par[i] for i in hb.parallel], vocab, 16, 50),
                         collate_nonparallel([non[i] for i in hb.nonparallel], vocab, 16),
                         clfs, config, gen)
        assert out.cohere.item() > 0 and out.style.item() > 0
    after = parameter_checksum(clfs.style), parameter_checksum(clfs.coherence)
    report(3, before == after and state.step == 100,
           f"classifier checksums unchanged after {state.step} steps using cohere+style losses")


# --- 4. metric oracles --------------------------------------------------------

def test_criterion_4_metric_oracles():
    ident = [["a", "b", "c", "d", "e"], ["f", "g", "h", "i"]]
    b_id = bleu(ident, ident)
    want = 100.0 * (1 / 3 * 0.05 * 0.1) ** (1 / 3)
    b_fx = bleu([["the", "the", "the"]], [["the", "cat"]])
    fx = json.loads((ROOT / "tests" / "fixtures" / "gleu_three.json").read_text())
    g = gleu(fx["sources"], fx["hypotheses"], fx["references"])
    g_hand = hand_gleu(fx["sources"], fx["hypotheses"], fx["references"])
    lm = PplLanguageModel(25, LMConfig(embed_dim=4, hidden_dim=4))
    with torch.no_grad():
        lm.output.weight.zero_()
        lm.output.bias.zero_()
    ppl = perplexity(lm, [[4, 5, 6], [7], [8, 9]])
    ok = (b_id == 100.0 and abs(b_fx - want) <= 1e-6 and abs(g - g_hand) <= 1e-6
          and abs(ppl - 25.0) <= 1e-9)
    report(4, ok, f"BLEU identity {b_id}, fixture {b_fx:.6f} vs {want:.6f}; "
                  f"GLEU {g:.6f} vs hand {g_hand:.6f}; uniform PPL {ppl:.9f} vs 25")


# --- pipeline-backed criteria -------------------------------------------------

@pytest.fixture(scope="session")
def synthetic_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic_run")
    start = time.perf_counter()
    for stage in PIPELINE:
        assert run_cli(stage, "--config", str(CONFIG), "--out", str(out)) == 0, stage
    return out, time.perf_counter() - start


def test_criterion_5_classifier_pretraining(synthetic_run):
    out, _ = synthetic_run
    cfg = load_config(CONFIG)
    style = read_checkpoint(out / "style_classifier.npz")[0]["meta"]["report"]
    coh = read_checkpoint(out / "coherence_classifier.npz")[0]["meta"]["report"]

    # paired comparison on held-out paragraphs: positive vs its negative
    pairs = make_coherence_pairs(load_split(cfg, out, "paragraphs_coherence"),
                                 cfg.negatives_per_positive, cfg.seed)
    clf = pipeline.load_coherence_classifier(out)
    held = [pairs[i] for i in coh["heldout_index"]]
    ids = pipeline.load_vocab(out)
    ctx = coherence_input([p.context for p in held], ids, clf.config.max_context_words)
    x, lengths = pad_ids([ids.encode(p.candidate[:clf.config.max_sentence_len]) for p in held])
    with torch.no_grad():
        p1 = clf(CoherenceInput(ctx.before, ctx.after), x, lengths)[:, 1].exp().tolist()
    by_context: dict = {}
    for p, score in zip(held, p1):
        by_context.setdefault(p.context, {}).setdefault(p.label, []).append(score)
    wins = [pos > neg for d in by_context.values() for pos in d[1] for neg in d[0]]
    paired = 100.0 * sum(wins) / len(wins)

    ok = style["heldout_accuracy"] >= 95 and coh["heldout_accuracy"] >= 80 and paired >= 80
    report(5, ok, f"style held-out {style['heldout_accuracy']:.2f} >= 95, coherence held-out "
                  f"{coh['heldout_accuracy']:.2f} >= 80, paired positive>negative "
                  f"{paired:.2f}% >= 80 over {len(wins)} held-out paragraphs")


def test_criterion_6_end_to_end(synthetic_run):
    out, seconds = synthetic_run
    ev = json.loads((out / "eval.json").read_text())
    ok = (ev["style_accuracy"] >= 90 and ev["coherence_accuracy"] >= 75 and ev["bleu"] >= 60
          and seconds <= 15 * 60)
    report(6, ok, f"test split style {ev['style_accuracy']:.2f} >= 90, coherence "
                  f"{ev['coherence_accuracy']:.2f} >= 75, BLEU {ev['bleu']:.2f} >= 60, "
                  f"pipeline {seconds / 60:.1f} min <= 15")


def test_criterion_7_ablation_direction(synthetic_run):
    out, _ = synthetic_run
    cfg = load_config(CONFIG)
    vocab = pipeline.load_vocab(out)
    # full CAST is the run already trained by the pipeline with the same seed and data
    full = json.loads((out / "eval.json").read_text())
    rows = dict(run_ablations(cfg.training, pipeline.train_data(cfg, out),
                              pipeline.load_regularizers(out), vocab,
                              cfg.model_config(len(vocab)), cfg.seed,
                              load_split(cfg, out, "parallel_test"),
                              variants=["w/o context encoder", "w/o non-parallel data"]))
    no_ctx, no_np = rows["w/o context encoder"], rows["w/o non-parallel data"]
    coh_ok = full["coherence_accuracy"] >= no_ctx.coherence_accuracy
    bleu_ok = no_np.bleu <= full["bleu"]
    report(7, coh_ok and bleu_ok,
           f"coherence CAST {full['coherence_accuracy']:.2f} >= w/o context encoder "
           f"{no_ctx.coherence_accuracy:.2f}: {coh_ok}; BLEU w/o non-parallel {no_np.bleu:.2f} "
           f"<= CAST {full['bleu']:.2f}: {bleu_ok}")


def test_criterion_8_hybrid_batching(synthetic_run):
    out, _ = synthetic_run
    cfg = load_config(CONFIG)
    log = [json.loads(l) for l in (out / "train" / "batches.jsonl").read_text().splitlines()]
    half = cfg.training.batch_size // 2
    n_par = len(load_split(cfg, out, "parallel_train"))
    n_non = len(load_split(cfg, out, "nonparallel_train"))
    replay = make_hybrid_batches(n_par, n_non, cfg.training.batch_size, cfg.seed)
    matches = all(next(replay).to_record() == {k: r[k] for k in
                                               ("epoch", "index", "parallel", "nonparallel")}
                  for r in log)
    sizes = all(len(r["parallel"]) == half and len(r["nonparallel"]) == half for r in log)
    full_epochs = {r["epoch"] for r in log} - {log[-1]["epoch"]}
    covered = all({i for r in log if r["epoch"] == e for i in r["parallel"]} == set(range(n_par))
                  for e in full_epochs)
    ok = sizes and matches and covered and len(log) == cfg.training.max_steps
    report(8, ok, f"{len(log)} logged batches, each {half} parallel + {half} non-parallel: "
                  f"{sizes}; log equals batch replay: {matches}; "
                  f"{len(full_epochs)} complete epochs cover every parallel sample: {covered}")


def test_criterion_9_determinism(synthetic_run, tmp_path_factory):
    first, _ = synthetic_run
    second = tmp_path_factory.mktemp("synthetic_rerun")
    for stage in PIPELINE:
        assert run_cli(stage, "--config", str(CONFIG), "--out", str(second)) == 0, stage
    same = {name: (first / name).read_bytes() == (second / name).read_bytes()
            for name in ("train/history.jsonl", "train/steps.jsonl", "eval.json")}
    report(9, all(same.values()),
           "second full pipeline run byte-identical: "
           + ", ".join(f"{k} {v}" for k, v in same.items()))
