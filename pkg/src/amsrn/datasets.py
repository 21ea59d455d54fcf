"""Synthetic corpora for experiments that fit on a desk."""

from __future__ import annotations

from dataclasses import dataclass

from .mathops import make_rng


@dataclass
class TriggerCorpus:
    train: list[str]
    valid: list[str]
    test: list[str]
    triggers: tuple[str, ...]
    marker: str
    link: str | None = None


def make_trigger_corpus(n_train: int = 2000, n_valid: int = 200, n_test: int = 200,
                        n_triggers: int = 100, n_fillers: int = 96, seed: int = 0,
                        gap: tuple[int, int] = (2, 6), lead: tuple[int, int] = (0, 3),
                        tail: tuple[int, int] = (0, 2), marker: str = "again",
                        link: str | None = "is") -> TriggerCorpus:
    """Sentences in which a trigger word recurs after a marker word.

    Layout: ``filler*lead  T  link  filler*gap  marker  T  filler*tail`` with
    ``T`` drawn uniformly from ``n_triggers`` words and fillers uniformly from
    ``n_fillers`` words.  The second ``T`` is only predictable by remembering
    the first one, which a small LSTM does poorly and attention does well.
    The fixed ``link`` word after the first ``T`` (omitted when ``None``)
    gives the LSTM a reason to mark "a trigger was just read" in its state.
    The vocabulary has ``n_triggers + n_fillers + 2`` words (one fewer without a link).
    """
    rng = make_rng(seed, 7)
    triggers = tuple(f"t{i}" for i in range(n_triggers))
    fillers = tuple(f"w{i}" for i in range(n_fillers))

    def run(lo_hi):
        return [fillers[j] for j in rng.integers(0, n_fillers, int(rng.integers(lo_hi[0], lo_hi[1] + 1)))]

    def sentence() -> str:
        trig = triggers[int(rng.integers(0, n_triggers))]
        words = run(lead) + [trig] + ([link] if link else []) + run(gap) + [marker, trig] + run(tail)
        return " ".join(words)

    lines = [sentence() for _ in range(n_train + n_valid + n_test)]
    return TriggerCorpus(train=lines[:n_train], valid=lines[n_train:n_train + n_valid],
                         test=lines[n_train + n_valid:], triggers=triggers, marker=marker, link=link)
