from pathlib import Path

import pytest
import torch

from cast_style.batch import collate_nonparallel, collate_parallel
from cast_style.classifiers import ClassifierConfig, CoherenceClassifier, StyleClassifier, freeze
from cast_style.losses import Regularizers
from cast_style.model import CastModel, ModelConfig
from cast_style.synthetic import SyntheticConfig, generate_synthetic_benchmark
from cast_style.vocab import build_vocab

torch.set_num_threads(1)

SMALL = SyntheticConfig(parallel_train=40, parallel_dev=10, parallel_test=12,
                        coherence_paragraphs=20, nonparallel_train=60, nonparallel_style=40)


@pytest.fixture(scope="session")
def bench():
    return generate_synthetic_benchmark(SMALL, seed=3)


@pytest.fixture(scope="session")
def vocab(bench):
    sents = [s.sentence for s in bench.nonparallel["train"]]
    sents += [s for p in bench.paragraphs for s in p.sentences]
    for s in bench.parallel["train"] + bench.parallel["dev"] + bench.parallel["test"]:
        sents += [s.source, s.reference, *s.context.sentences]
    return build_vocab(sents)


def tiny_model_config(vocab_size, **kw):
    base = dict(num_heads=2, head_dim=4, ffn_dim=16, max_context_words=50, max_sentence_len=16)
    base.update(kw)
    return ModelConfig(vocab_size=vocab_size, **base)


def tiny_clf_config(**kw):
    base = dict(embed_dim=8, num_filters=4, num_heads=2, ffn_dim=16, max_sentence_len=16)
    base.update(kw)
    return ClassifierConfig(**base)


@pytest.fixture
def model(vocab):
    torch.manual_seed(0)
    return CastModel(tiny_model_config(len(vocab)))


@pytest.fixture
def clfs(vocab):
    torch.manual_seed(1)
    cfg = tiny_clf_config()
    return Regularizers(freeze(StyleClassifier(len(vocab), cfg)),
                        freeze(CoherenceClassifier(len(vocab), cfg)))


@pytest.fixture
def pbatch(bench, vocab):
    return collate_parallel(bench.parallel["train"][:4], vocab, 16, 50)


@pytest.fixture
def nbatch(bench, vocab):
    return collate_nonparallel(bench.nonparallel["train"][:4], vocab, 16)


TINY_CONFIG = Path(__file__).parent / "fixtures" / "tiny.yaml"
STAGES = ("gen-data", "build-vocab", "pretrain-style", "pretrain-coherence", "train-lm", "train",
          "eval")


def run_cli(*args):
    from cast_style.cli import main
    return main(list(args))


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """Run directory after every pipeline stage on the tiny config."""
    out = tmp_path_factory.mktemp("tiny_run")
    for stage in STAGES:
        assert run_cli(stage, "--config", str(TINY_CONFIG), "--out", str(out)) == 0, stage
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
