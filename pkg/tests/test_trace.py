import io
import json

import numpy as np
import pytest

from amsrn.attention import amsrn_forward
from amsrn.corpus import build_vocab, encode
from amsrn.trace import highlighted, read_traces, render, slot_labels, trace_record, write_traces

from conftest import random_pair


@pytest.fixture
def vocab():
    return build_vocab(["a b c d e f g"])


def _record(vocab, line, verbose=False, seed=0):
    lstm, att = random_pair(seed, "tied", vocab_size=len(vocab))
    s = encode(vocab, line)
    _, trace = amsrn_forward(lstm, att, s.inputs)
    return trace_record(vocab, trace, s.targets, index=3, verbose=verbose), trace


def test_record_layout(vocab):
    rec, trace = _record(vocab, "a b c")
    assert rec["schema"] == "amsrn-trace" and rec["version"] == 1 and rec["sentence"] == 3
    assert rec["tokens"] == ["<s>", "a", "b", "c", "</s>"]
    assert rec["slots"] == ["<s>", "<s>", "a", "b"]
    assert [s["position"] for s in rec["steps"]] == [1, 2, 3, 4]
    assert [s["target"] for s in rec["steps"]] == ["a", "b", "c", "</s>"]
    for st, a in zip(rec["steps"], trace.alpha):
        assert st["alpha"] == a.tolist()
        assert set(st) == {"position", "target", "alpha", "entropy", "w1_mean", "w2_mean"}
    assert slot_labels(vocab, trace) == rec["slots"]


def test_verbose_record_has_vectors(vocab):
    rec, trace = _record(vocab, "a b", verbose=True)
    assert rec["steps"][1]["w1"] == trace.w1[1].tolist()
    assert len(rec["steps"][0]["w2"]) == 4


def test_jsonl_roundtrip(vocab):
    recs = [_record(vocab, line)[0] for line in ("a", "b c d")]
    buf = io.StringIO()
    assert write_traces(buf, recs) == 2
    buf.seek(0)
    assert read_traces(buf) == json.loads(json.dumps(recs))
    with pytest.raises(ValueError):
        read_traces(io.StringIO('{"schema": "other"}\n'))


def test_single_slot_always_highlighted(vocab):
    rec, _ = _record(vocab, "e")
    assert highlighted(rec)[0] == [0]
    assert "[<s>]" in render(rec).splitlines()[1]


def test_impossible_threshold_highlights_nothing(vocab):
    rec, _ = _record(vocab, "a b c d e f g")
    assert all(h == [] for h in highlighted(rec, 1.1))
    assert "[" not in "".join(render(rec, 1.1).splitlines()[1:])


def test_default_threshold_is_twice_uniform(vocab):
    rec = {"sentence": 0, "tokens": ["<s>", "a", "b", "</s>"], "slots": ["<s>", "<s>", "a"],
           "steps": [{"position": 3, "target": "</s>", "alpha": [0.1, 0.2, 0.7]}]}
    assert highlighted(rec) == [[2]]          # 0.7 > 2/3
    assert highlighted(rec, 0.15) == [[1, 2]]
    assert render(rec).splitlines()[1] == "   3  <s> <s> [a]  -> </s>"
