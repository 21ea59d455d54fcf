"""Attention-trace export (JSON lines) and plain-text highlight rendering.

One record per sentence::

    {"schema": "amsrn-trace", "version": 1, "sentence": 0,
     "tokens": ["<s>", "a", "b", "</s>"],
     "slots": ["<s>", "<s>", "a"],
     "steps": [{"position": 1, "target": "a", "alpha": [1.0], "entropy": 0.0,
                "w1_mean": 0.5, "w2_mean": 0.5}, ...]}

``tokens`` is the encoded sentence.  ``slots[i]`` labels memory slot ``h_i``:
slot 0 is the initial state (shown as ``<s>``) and slot ``i >= 1`` is the
state produced by reading ``tokens[i - 1]``.  Step ``t`` predicts
``tokens[t]`` from slots ``0 .. t-1``.  Verbose traces also carry the full
``w1``/``w2`` vectors.
"""

from __future__ import annotations

import json
from typing import Iterable, TextIO

from .attention import AttentionTrace
from .corpus import BOS, Vocabulary

TRACE_SCHEMA = "amsrn-trace"
TRACE_VERSION = 1


def slot_labels(vocab: Vocabulary, trace: AttentionTrace) -> list[str]:
    return [BOS] + [vocab.token(int(i)) for i in trace.ids[:len(trace) - 1]]


def trace_record(vocab: Vocabulary, trace: AttentionTrace, target_ids, index: int = 0,
                 verbose: bool = False) -> dict:
    tokens = [vocab.token(int(i)) for i in trace.ids] + [vocab.token(int(target_ids[-1]))]
    steps = []
    for st in trace.steps:
        step = {"position": st.position, "target": vocab.token(int(target_ids[st.position - 1])),
                "alpha": st.alpha.tolist(), "entropy": st.entropy,
                "w1_mean": float(st.w1.mean()), "w2_mean": float(st.w2.mean())}
        if verbose:
            step["w1"] = st.w1.tolist()
            step["w2"] = st.w2.tolist()
        steps.append(step)
    return {"schema": TRACE_SCHEMA, "version": TRACE_VERSION, "sentence": index, "tokens": tokens,
            "slots": slot_labels(vocab, trace), "steps": steps}


def write_traces(fh: TextIO, records: Iterable[dict]) -> int:
    n = 0
    for rec in records:
        fh.write(json.dumps(rec) + "\n")
        n += 1
    return n


def read_traces(fh: TextIO) -> list[dict]:
    out = []
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("schema") != TRACE_SCHEMA or rec.get("version") != TRACE_VERSION:
            raise ValueError(f"not an {TRACE_SCHEMA} v{TRACE_VERSION} record")
        out.append(rec)
    return out


def highlighted(record: dict, threshold: float | None = None) -> list[list[int]]:
    """Slots per step whose weight exceeds ``threshold``.

    The default is twice the uniform weight, ``2 / t``.  At ``t = 1`` that
    bound is unreachable, so under the default the lone slot (which holds all
    the weight) is always marked.
    """
    out = []
    for st in record["steps"]:
        t, alpha = st["position"], st["alpha"]
        if threshold is None and t == 1:
            out.append([0])
            continue
        thr = 2.0 / t if threshold is None else threshold
        out.append([i for i, a in enumerate(alpha) if a > thr])
    return out


def render(record: dict, threshold: float | None = None) -> str:
    """One line per prediction: the memory read so far with highlighted slots in brackets."""
    lines = [f"# sentence {record['sentence']}: {' '.join(record['tokens'][1:-1])}"]
    for st, hi in zip(record["steps"], highlighted(record, threshold)):
        hi = set(hi)
        words = [f"[{lab}]" if i in hi else lab for i, lab in enumerate(record["slots"][:st["position"]])]
        lines.append(f"{st['position']:>4}  {' '.join(words)}  -> {st['target']}")
    return "\n".join(lines) + "\n"
