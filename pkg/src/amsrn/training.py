"""Two-phase training (LSTM pretraining, then attention fine-tuning), evaluation and checkpoints."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mathops as mo
from .attention import (AmsrnParams, AttentionTrace, SelectionMode, _forward, _trace,
                        amsrn_backward)
from .corpus import EncodedSentence, Vocabulary, perplexity
from .exceptions import ConfigurationError, ShapeError, TrainingError
from .lstm import LstmParams, lstm_backward, lstm_loss

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "amsrn-checkpoint"
CHECKPOINT_VERSION = 1

HISTORY_FIELDS = ("epoch", "lr", "train_nll", "train_reg", "train_objective", "valid_ppl",
                  "valid_reg", "valid_mean_entropy", "best_valid_ppl")


@dataclass
class TrainConfig:
    d: int = 50
    lr: float = 0.1
    optimizer: str = "sgd"
    epochs: int = 10
    clip: float = 5.0
    lam: float = 0.0
    mode: str = "tied"
    seed: int = 0
    shuffle: bool = True
    patience: int | None = None
    lr_decay: float = 0.5
    init_scale: float = 0.08
    forget_bias: float = 1.0
    zero_output_init: bool = False
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        try:
            self.mode = SelectionMode(self.mode).value
        except ValueError:
            raise ConfigurationError(f"unknown selection mode {self.mode!r}") from None
        self.adam_betas = tuple(self.adam_betas)
        if self.d < 1:
            raise ConfigurationError("d must be >= 1")
        if not self.lr > 0:
            raise ConfigurationError("lr must be > 0")
        if self.lam < 0:
            raise ConfigurationError("lambda must be >= 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if not self.clip > 0:
            raise ConfigurationError("clip must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError("lr_decay must be in (0, 1]")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["adam_betas"] = list(self.adam_betas)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# ---------------------------------------------------------------------------
# optimization primitives

def clip_gradients(grads: Sequence[mo.ParamSet], max_norm: float) -> float:
    """Scale all gradients in place by ``min(1, max_norm / ||g||_2)``; return the pre-clip norm."""
    norm = math.sqrt(sum(float(np.sum(a * a)) for g in grads for a in g.named_arrays().values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            for a in g.named_arrays().values():
                a *= scale
    return norm


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: Sequence[mo.ParamSet], grads: Sequence[mo.ParamSet]) -> None:
        for p, g in zip(params, grads):
            gs = g.named_arrays()
            for name, a in p.named_arrays().items():
                a -= self.lr * gs[name]


class Adam:
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: Sequence[mo.ParamSet], grads: Sequence[mo.ParamSet]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, (p, g) in enumerate(zip(params, grads)):
            gs = g.named_arrays()
            for name, a in p.named_arrays().items():
                key = (k, name)
                gr = gs[name]
                m = self.m.setdefault(key, np.zeros_like(a))
                v = self.v.setdefault(key, np.zeros_like(a))
                m *= self.b1
                m += (1.0 - self.b1) * gr
                v *= self.b2
                v += (1.0 - self.b2) * gr * gr
                a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(config.lr, config.adam_betas, config.adam_eps)
    return SGD(config.lr)


# ---------------------------------------------------------------------------
# checkpoints

def _array_to_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.tolist()}


def _array_from_json(d: dict) -> np.ndarray:
    a = np.asarray(d["data"], dtype=mo.DTYPE).reshape(d["shape"])
    return a


@dataclass(eq=False)
class Checkpoint:
    config: TrainConfig
    vocab_hash: str
    lstm: LstmParams
    amsrn: AmsrnParams | None = None
    vocab_path: str | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "lstm" if self.amsrn is None else "amsrn"

    @property
    def n_params(self) -> int:
        """Trainable parameters of the model the checkpoint scores with."""
        if self.amsrn is None:
            return self.lstm.n_params
        # the LSTM output head is replaced by W_ph/b_p
        return self.lstm.n_params - self.lstm.W_out.size - self.lstm.b_out.size + self.amsrn.n_params

    @property
    def history(self) -> list[dict]:
        return self.metadata.get("history", [])

    def to_dict(self) -> dict:
        out = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "config": self.config.to_dict(),
            "vocab": {"hash": self.vocab_hash, "path": self.vocab_path, "size": self.lstm.vocab_size},
            "lstm": {k: _array_to_json(v) for k, v in self.lstm.named_arrays().items()},
            "amsrn": None,
            "metadata": self.metadata,
        }
        if self.amsrn is not None:
            out["amsrn"] = {"mode": self.amsrn.mode.value,
                            "params": {k: _array_to_json(v) for k, v in self.amsrn.named_arrays().items()}}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint format {d.get('format')!r} "
                                     f"version {d.get('version')!r}")
        lstm = LstmParams(**{k: _array_from_json(v) for k, v in d["lstm"].items()})
        amsrn = None
        if d.get("amsrn") is not None:
            amsrn = AmsrnParams(mode=d["amsrn"]["mode"],
                                **{k: _array_from_json(v) for k, v in d["amsrn"]["params"].items()})
        return cls(config=TrainConfig.from_dict(d["config"]), vocab_hash=d["vocab"]["hash"],
                   lstm=lstm, amsrn=amsrn, vocab_path=d["vocab"].get("path"),
                   metadata=d.get("metadata", {}))

    def dumps(self) -> str:
        # json writes floats with repr(), which round-trips float64 exactly
        return json.dumps(self.to_dict(), allow_nan=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: not a checkpoint ({e})") from None
        return cls.from_dict(d)

    def check_vocab(self, vocab: Vocabulary | None) -> None:
        if vocab is not None and vocab.hash != self.vocab_hash:
            raise ConfigurationError("vocabulary hash does not match the checkpoint")


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalResult:
    ppl: float
    nll: float
    sentence_nll: list[float]
    token_counts: list[int]
    reg: float
    traces: list[AttentionTrace] | None = None

    @property
    def n_tokens(self) -> int:
        return sum(self.token_counts)

    @property
    def mean_entropy(self) -> float:
        """Mean attention entropy per prediction step (0 for plain LSTMs)."""
        return self.reg / self.n_tokens


def _evaluate_params(lstm: LstmParams, att: AmsrnParams | None, corpus: Sequence[EncodedSentence],
                     traces: bool = False) -> EvalResult:
    sent_nll, counts, regs, out = [], [], [], []
    for s in corpus:
        if att is None:
            nll = lstm_loss(lstm, s.inputs, s.targets)
            reg = 0.0
        else:
            hc = _forward(lstm, att, s.inputs)
            logp = mo.log_softmax(hc.logits)
            nll = -float(np.sum(logp[np.arange(s.n_targets), s.targets]))
            reg = float(np.sum(hc.ent))
            if traces:
                out.append(_trace(hc))
        sent_nll.append(nll)
        counts.append(s.n_targets)
        regs.append(reg)
    if not counts:
        raise ShapeError("cannot evaluate an empty corpus")
    total = math.fsum(sent_nll)
    return EvalResult(ppl=perplexity(total, sum(counts)), nll=total, sentence_nll=sent_nll,
                      token_counts=counts, reg=math.fsum(regs),
                      traces=out if (traces and att is not None) else None)


def evaluate(checkpoint: Checkpoint, corpus: Sequence[EncodedSentence], vocab: Vocabulary | None = None,
             traces: bool = False) -> EvalResult:
    """Corpus perplexity, per-sentence NLL and (for attention models) optional traces."""
    checkpoint.check_vocab(vocab)
    return _evaluate_params(checkpoint.lstm, checkpoint.amsrn, corpus, traces=traces)


def sentence_ranking(baseline_nll: Sequence[float], model_nll: Sequence[float]) -> list[tuple[int, float]]:
    """``(index, baseline - model)`` sorted by improvement, largest first; ties keep corpus order."""
    if len(baseline_nll) != len(model_nll):
        raise ShapeError(f"{len(baseline_nll)} baseline scores vs {len(model_nll)} model scores")
    gains = [(i, float(b) - float(m)) for i, (b, m) in enumerate(zip(baseline_nll, model_nll))]
    return sorted(gains, key=lambda x: (-x[1], x[0]))


# ---------------------------------------------------------------------------
# training loop

class MetricsLog:
    """Append-only tab-separated per-epoch log."""

    def __init__(self, path):
        self.path = Path(path)

    def write(self, row: dict) -> None:
        new = not self.path.exists() or self.path.stat().st_size == 0
        with self.path.open("a", encoding="utf-8") as fh:
            if new:
                fh.write("\t".join(HISTORY_FIELDS) + "\n")
            fh.write("\t".join(_fmt(row.get(k)) for k in HISTORY_FIELDS) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _fit(config: TrainConfig, lstm: LstmParams, att: AmsrnParams | None,
         train: Sequence[EncodedSentence], valid: Sequence[EncodedSentence], metrics: MetricsLog | None):
    lam = config.lam if att is not None else 0.0
    params = [lstm] if att is None else [lstm, att]
    opt = make_optimizer(config)
    order_rng = mo.make_rng(config.seed, 1)

    def validate(epoch, lr, train_stats):
        ev = _evaluate_params(lstm, att, valid)
        row = {"epoch": epoch, "lr": lr, "train_nll": None, "train_reg": None, "train_objective": None,
               "valid_ppl": ev.ppl, "valid_reg": ev.reg, "valid_mean_entropy": ev.mean_entropy}
        if train_stats is not None:
            row["train_nll"], row["train_reg"] = train_stats
            row["train_objective"] = train_stats[0] + lam * train_stats[1]
        return row

    row = validate(0, opt.lr, None)
    best_ppl = row["valid_ppl"]
    row["best_valid_ppl"] = best_ppl
    history = [row]
    if metrics:
        metrics.write(row)
    best = (0, [p.copy() for p in params])
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(len(train)) if config.shuffle else np.arange(len(train))
        nll_sum, reg_sum = [], []
        for idx in order:
            s = train[int(idx)]
            if att is None:
                nll, g = lstm_backward(lstm, s.inputs, s.targets)
                reg, grads = 0.0, [g]
            else:
                r = amsrn_backward(lstm, att, s.inputs, s.targets, lam)
                nll, reg, grads = r.nll, r.reg, [r.lstm, r.att]
            if not (math.isfinite(nll) and math.isfinite(reg)):
                raise TrainingError(f"non-finite loss on training sentence {int(idx)} in epoch {epoch}")
            clip_gradients(grads, config.clip)
            opt.step(params, grads)
            nll_sum.append(nll)
            reg_sum.append(reg)
        row = validate(epoch, opt.lr, (math.fsum(nll_sum), math.fsum(reg_sum)))
        if not math.isfinite(row["valid_ppl"]):
            raise TrainingError(f"non-finite validation perplexity after epoch {epoch}")
        if row["valid_ppl"] < best_ppl:
            best_ppl = row["valid_ppl"]
            best = (epoch, [p.copy() for p in params])
            stale = 0
        else:
            stale += 1
            opt.lr *= config.lr_decay
        row["best_valid_ppl"] = best_ppl
        history.append(row)
        if metrics:
            metrics.write(row)
        log.info("epoch %d: train C=%.4f Lreg=%.4f valid PPL=%.4f (best %.4f)", epoch,
                 row["train_nll"], row["train_reg"], row["valid_ppl"], best_ppl)
        if config.patience is not None and stale >= config.patience:
            break
    return best, history


def _vocab_info(vocab: Vocabulary | None, vocab_path, lstm: LstmParams) -> tuple[str, str | None]:
    if vocab is None:
        return "", None
    if len(vocab) != lstm.vocab_size:
        raise ConfigurationError(f"vocabulary has {len(vocab)} entries, model expects {lstm.vocab_size}")
    return vocab.hash, None if vocab_path is None else str(vocab_path)


def train_lstm(config: TrainConfig, train: Sequence[EncodedSentence], valid: Sequence[EncodedSentence],
               vocab: Vocabulary | int, init: Checkpoint | None = None, metrics_path=None,
               vocab_path=None) -> Checkpoint:
    """Train the plain LSTM LM on cross-entropy; return the best-validation checkpoint.

    ``vocab`` may be a bare vocabulary size when no :class:`Vocabulary` exists
    (the checkpoint then carries an empty vocabulary hash).  ``init`` continues
    training from an existing LSTM checkpoint.
    """
    V = vocab if isinstance(vocab, int) else len(vocab)
    vocab = None if isinstance(vocab, int) else vocab
    if init is not None:
        if init.lstm.d != config.d or init.lstm.vocab_size != V:
            raise ConfigurationError("initial checkpoint does not match config/vocabulary")
        init.check_vocab(vocab)
        lstm = init.lstm.copy()
    else:
        lstm = LstmParams.initialize(V, config.d, mo.make_rng(config.seed, 0), scale=config.init_scale,
                                     forget_bias=config.forget_bias, zero_output=config.zero_output_init)
    vhash, vpath = _vocab_info(vocab, vocab_path, lstm)
    metrics = MetricsLog(metrics_path) if metrics_path else None
    (epoch, (best_lstm,)), history = _fit(config, lstm, None, train, valid, metrics)
    meta = {"epoch": epoch, "best_valid_ppl": history[epoch]["valid_ppl"], "history": history}
    return Checkpoint(config=config, vocab_hash=vhash, vocab_path=vpath, lstm=best_lstm, metadata=meta)


def init_amsrn(config: TrainConfig, lstm_checkpoint: Checkpoint) -> AmsrnParams:
    return AmsrnParams.initialize(lstm_checkpoint.lstm, config.mode, mo.make_rng(config.seed, 2),
                                  scale=config.init_scale)


def train_amsrn(config: TrainConfig, lstm_checkpoint: Checkpoint, train: Sequence[EncodedSentence],
                valid: Sequence[EncodedSentence], vocab: Vocabulary | None = None, metrics_path=None,
                vocab_path=None) -> Checkpoint:
    """Fine-tune LSTM + attention head on ``C + lam * L_reg`` starting from a pretrained LSTM.

    The head starts with ``W_pr = 0`` and the LSTM's output layer, so epoch 0
    reproduces the pretrained model exactly and the returned best-validation
    checkpoint can never be worse than it on the validation set.
    """
    if lstm_checkpoint.kind != "lstm":
        raise ConfigurationError("train_amsrn needs an LSTM checkpoint")
    if lstm_checkpoint.lstm.d != config.d:
        raise ConfigurationError(f"checkpoint has d={lstm_checkpoint.lstm.d}, config has d={config.d}")
    lstm_checkpoint.check_vocab(vocab)
    V = lstm_checkpoint.lstm.vocab_size
    if any(int(np.max(s.ids)) >= V for s in [*train, *valid]):
        raise ConfigurationError("corpus ids exceed the checkpoint vocabulary")
    lstm = lstm_checkpoint.lstm.copy()
    att = init_amsrn(config, lstm_checkpoint)
    metrics = MetricsLog(metrics_path) if metrics_path else None
    (epoch, (best_lstm, best_att)), history = _fit(config, lstm, att, train, valid, metrics)
    meta = {"epoch": epoch, "best_valid_ppl": history[epoch]["valid_ppl"], "history": history}
    vpath = str(vocab_path) if vocab_path is not None else lstm_checkpoint.vocab_path
    return Checkpoint(config=config, vocab_hash=lstm_checkpoint.vocab_hash, vocab_path=vpath,
                      lstm=best_lstm, amsrn=best_att, metadata=meta)
