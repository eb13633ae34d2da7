import json

import pytest
from hypothesis import given, strategies as st

from cast_style.corpus import (
    Context,
    DatasetError,
    NonParallelSample,
    Paragraph,
    ParallelSample,
    StyleLabel,
    load_dataset,
    make_coherence_pairs,
    truncate_context,
    write_dataset,
)

A, B = StyleLabel.STYLE_A, StyleLabel.STYLE_B


def _record(i, src="informal", tgt="formal"):
    return {"source": ["hey", f"w{i}"], "reference": ["dear", f"w{i}"],
            "context_before": [["x", "y"]], "context_after": [],
            "source_style": src, "target_style": tgt}


def _write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def test_load_three_parallel_records(tmp_path):
    f = tmp_path / "p.jsonl"
    _write_lines(f, [_record(i) for i in range(3)])
    samples = load_dataset(f, "parallel", ("informal", "formal"))
    assert len(samples) == 3
    assert samples[1].source == ("hey", "w1")
    assert samples[0].source_style == A and samples[0].target_style == B


def test_same_style_record_names_line(tmp_path):
    f = tmp_path / "p.jsonl"
    _write_lines(f, [_record(0), _record(1, "formal", "formal")])
    with pytest.raises(DatasetError, match=r"p.jsonl:2:.*source_style"):
        load_dataset(f, "parallel", ("informal", "formal"))


def test_missing_field_and_missing_file(tmp_path):
    f = tmp_path / "n.jsonl"
    _write_lines(f, [{"style": "STYLE_A"}])
    with pytest.raises(DatasetError, match=r":1: missing field 'sentence'"):
        load_dataset(f, "nonparallel")
    with pytest.raises(DatasetError, match="no such dataset file"):
        load_dataset(tmp_path / "absent.jsonl", "nonparallel")


def test_bad_json_line(tmp_path):
    f = tmp_path / "n.jsonl"
    f.write_text('{"sentence": ["a"], "style": "STYLE_A"}\n{oops\n')
    with pytest.raises(DatasetError, match=r":2: invalid JSON"):
        load_dataset(f, "nonparallel")


def test_generated_splits_roundtrip(tmp_path, bench):
    names = bench.config.style_names
    for kind, samples in (("parallel", bench.parallel["train"]),
                          ("nonparallel", bench.nonparallel["train"]),
                          ("paragraphs", bench.paragraphs)):
        path = tmp_path / f"{kind}.jsonl"
        assert write_dataset(path, samples, names) == len(samples)
        assert load_dataset(path, kind, names) == samples


def test_invariants_rejected():
    ctx = Context((("a",),))
    with pytest.raises(ValueError):
        ParallelSample(("x",), ("y",), ctx, A, A)
    with pytest.raises(ValueError):
        ParallelSample(("x",), ("y",), Context(), A, B)
    with pytest.raises(ValueError):
        NonParallelSample((), A)
    with pytest.raises(ValueError):
        Paragraph((("a",),), 0)
    with pytest.raises(ValueError):
        Paragraph((("a",), ("b",)), 2)


def _paragraphs(n, size=3):
    return [Paragraph(tuple((f"p{i}s{j}",) for j in range(size)), i % size) for i in range(n)]


def test_coherence_pair_counts():
    pairs = make_coherence_pairs(_paragraphs(2), 1, seed=0)
    assert len(pairs) == 4
    assert [p.label for p in pairs].count(1) == 2


@pytest.mark.parametrize("k", [1, 3])
def test_coherence_ratio_and_negatives(k):
    paras = _paragraphs(7)
    pairs = make_coherence_pairs(paras, k, seed=5)
    assert len(pairs) == 7 * (1 + k)
    assert sum(p.label for p in pairs) == 7
    for i, para in enumerate(paras):
        group = pairs[i * (1 + k):(i + 1) * (1 + k)]
        assert group[0].candidate == para.target and group[0].label == 1
        for neg in group[1:]:
            assert neg.candidate != para.target
            assert neg.candidate not in para.sentences
            assert neg.context == para.context()
    assert make_coherence_pairs(paras, k, seed=5) == pairs


def test_coherence_pairs_need_two_paragraphs():
    with pytest.raises(ValueError):
        make_coherence_pairs(_paragraphs(1), 1)


def _ctx(nb, na, width=5):
    words = iter(range(10_000))
    before = tuple(tuple(f"b{next(words)}" for _ in range(width)) for _ in range(nb))
    after = tuple(tuple(f"a{next(words)}" for _ in range(width)) for _ in range(na))
    return Context(before, after)


def test_truncate_under_cap_unchanged():
    c = _ctx(3, 3)
    assert truncate_context(c, 50) == c


def test_truncate_to_nearest_fifty():
    c = _ctx(8, 8)
    t = truncate_context(c, 50)
    assert t.num_words() == 50
    assert t.flat_before() == c.flat_before()[-25:]
    assert t.flat_after() == c.flat_after()[:25]


def test_truncate_cap_one():
    c = _ctx(2, 2)
    assert truncate_context(c, 1).flat() == [c.flat_before()[-1]]
    only_after = _ctx(0, 2)
    assert truncate_context(only_after, 1).flat() == [only_after.flat_after()[0]]


def _distance_rank_oracle(context, cap):
    # rank every token by distance to the hole, alternating before-first
    before, after = context.flat_before(), context.flat_after()
    order = []
    for d in range(max(len(before), len(after))):
        if d < len(before):
            order.append(("b", len(before) - 1 - d))
        if d < len(after):
            order.append(("a", d))
    keep = set(order[:cap])
    return ([t for i, t in enumerate(before) if ("b", i) in keep],
            [t for i, t in enumerate(after) if ("a", i) in keep])


@given(st.integers(0, 6), st.integers(0, 6), st.integers(1, 7), st.integers(1, 60))
def test_truncate_matches_distance_oracle(nb, na, width, cap):
    c = _ctx(nb, na, width)
    t = truncate_context(c, cap)
    assert t.num_words() == min(cap, c.num_words())
    want_before, want_after = _distance_rank_oracle(c, cap)
    assert t.flat_before() == want_before
    assert t.flat_after() == want_after
    assert all(len(s) > 0 for s in t.sentences)
