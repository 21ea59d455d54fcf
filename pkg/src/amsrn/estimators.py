"""scikit-learn style estimators over the functional training API.

``X`` is always a corpus: a sequence of sentences, each either a
whitespace-separated string or a sequence of word strings.

>>> lm = LSTMLanguageModel(d=16, epochs=2).fit(train_lines)        # doctest: +SKIP
>>> att = AMSRNLanguageModel(base=lm, mode="tied").fit(train_lines)  # doctest: +SKIP
>>> att.perplexity(test_lines) < lm.perplexity(test_lines)          # doctest: +SKIP
"""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .attention import AttentionTrace, amsrn_forward
from .corpus import EncodedSentence, Vocabulary, build_vocab, encode_corpus
from .exceptions import IngestionError
from .lstm import lstm_lm_forward
from .training import Checkpoint, TrainConfig, evaluate, train_amsrn, train_lstm


def check_sentences(X, name: str = "X") -> list[str]:
    """Normalize a corpus to a list of non-empty whitespace-joined lines."""
    if isinstance(X, str):
        raise IngestionError(f"{name} must be a sequence of sentences, not a single string")
    try:
        items = list(X)
    except TypeError:
        raise IngestionError(f"{name} must be an iterable of sentences") from None
    lines = []
    for k, s in enumerate(items):
        if isinstance(s, str):
            line = " ".join(s.split())
        elif isinstance(s, (list, tuple)) and all(isinstance(w, str) for w in s):
            line = " ".join(s)
        else:
            raise IngestionError(f"{name}[{k}] is neither a string nor a sequence of words")
        if line:
            lines.append(line)
    if not lines:
        raise IngestionError(f"{name} contains no non-empty sentence")
    return lines


class _LanguageModelMixin:
    """Shared scoring methods; subclasses set ``vocab_`` and ``checkpoint_``."""

    def _encode(self, X) -> list[EncodedSentence]:
        check_is_fitted(self, "checkpoint_")
        return encode_corpus(self.vocab_, check_sentences(X)).sentences

    def _evaluate(self, X, traces=False):
        sentences = self._encode(X)
        return evaluate(self.checkpoint_, sentences, self.vocab_, traces=traces)

    def perplexity(self, X) -> float:
        return self._evaluate(X).ppl

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per predicted token (higher is better)."""
        ev = self._evaluate(X)
        return -ev.nll / ev.n_tokens

    def sentence_nll(self, X) -> np.ndarray:
        return np.asarray(self._evaluate(X).sentence_nll)

    def predict_proba(self, X) -> list[np.ndarray]:
        """Per sentence, the (n_targets, |v|) next-token distributions."""
        return [self._distributions(s.inputs) for s in self._encode(X)]


class LSTMLanguageModel(_LanguageModelMixin, BaseEstimator):
    """Word-level LSTM language model (the pretraining stage)."""

    def __init__(self, d=50, lr=0.1, optimizer="sgd", epochs=10, clip=5.0, seed=0, patience=None,
                 max_vocab=None, min_count=1, zero_output_init=False, vocab=None):
        self.d = d
        self.lr = lr
        self.optimizer = optimizer
        self.epochs = epochs
        self.clip = clip
        self.seed = seed
        self.patience = patience
        self.max_vocab = max_vocab
        self.min_count = min_count
        self.zero_output_init = zero_output_init
        self.vocab = vocab

    def _config(self) -> TrainConfig:
        return TrainConfig(d=self.d, lr=self.lr, optimizer=self.optimizer, epochs=self.epochs,
                           clip=self.clip, seed=self.seed, patience=self.patience,
                           zero_output_init=self.zero_output_init)

    def fit(self, X, y=None, X_valid=None):
        """Train on corpus ``X``; ``X_valid`` (default: ``X``) selects the best epoch."""
        lines = check_sentences(X)
        vocab = self.vocab if self.vocab is not None else build_vocab(lines, self.max_vocab, self.min_count)
        train = encode_corpus(vocab, lines).sentences
        valid = train if X_valid is None else encode_corpus(vocab, check_sentences(X_valid, "X_valid")).sentences
        self.vocab_ = vocab
        self.checkpoint_ = train_lstm(self._config(), train, valid, vocab)
        self.history_ = self.checkpoint_.history
        return self

    def _distributions(self, inputs) -> np.ndarray:
        return lstm_lm_forward(self.checkpoint_.lstm, inputs)[0]


class AMSRNLanguageModel(_LanguageModelMixin, BaseEstimator):
    """LSTM LM with attention-based memory selection.

    ``base`` is an :class:`LSTMLanguageModel`; if it is not fitted yet, ``fit``
    pretrains a copy of it on the same corpus first.  ``entropy_weight`` is the
    coefficient of the attention-entropy regularizer.
    """

    def __init__(self, base=None, mode="tied", entropy_weight=0.0, lr=0.1, optimizer="sgd", epochs=10,
                 clip=5.0, seed=0, patience=None):
        self.base = base
        self.mode = mode
        self.entropy_weight = entropy_weight
        self.lr = lr
        self.optimizer = optimizer
        self.epochs = epochs
        self.clip = clip
        self.seed = seed
        self.patience = patience

    def _pretrained(self, X, X_valid):
        base = self.base if self.base is not None else LSTMLanguageModel()
        if not hasattr(base, "checkpoint_"):
            base = copy.deepcopy(base).fit(X, X_valid=X_valid)
        return base

    def fit(self, X, y=None, X_valid=None):
        base = self._pretrained(X, X_valid)
        vocab = base.vocab_
        train = encode_corpus(vocab, check_sentences(X)).sentences
        valid = train if X_valid is None else encode_corpus(vocab, check_sentences(X_valid, "X_valid")).sentences
        config = TrainConfig(d=base.checkpoint_.lstm.d, lr=self.lr, optimizer=self.optimizer,
                             epochs=self.epochs, clip=self.clip, lam=self.entropy_weight,
                             mode=self.mode, seed=self.seed, patience=self.patience)
        self.base_ = base
        self.vocab_ = vocab
        self.checkpoint_ = train_amsrn(config, base.checkpoint_, train, valid, vocab)
        self.history_ = self.checkpoint_.history
        return self

    def _distributions(self, inputs) -> np.ndarray:
        return amsrn_forward(self.checkpoint_.lstm, self.checkpoint_.amsrn, inputs)[0]

    def transform(self, X) -> list[AttentionTrace]:
        """Attention traces, one per sentence."""
        return self._evaluate(X, traces=True).traces


def from_checkpoint(checkpoint: Checkpoint, vocab: Vocabulary):
    """Wrap a saved checkpoint in the matching fitted estimator."""
    checkpoint.check_vocab(vocab)
    cfg = checkpoint.config
    if checkpoint.kind == "lstm":
        est = LSTMLanguageModel(d=cfg.d, lr=cfg.lr, optimizer=cfg.optimizer, epochs=cfg.epochs,
                                clip=cfg.clip, seed=cfg.seed, patience=cfg.patience, vocab=vocab)
    else:
        est = AMSRNLanguageModel(mode=cfg.mode, entropy_weight=cfg.lam, lr=cfg.lr, optimizer=cfg.optimizer,
                                 epochs=cfg.epochs, clip=cfg.clip, seed=cfg.seed, patience=cfg.patience)
    est.vocab_ = vocab
    est.checkpoint_ = checkpoint
    est.history_ = checkpoint.history
    return est
