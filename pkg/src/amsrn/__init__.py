"""LSTM language models with attention-based memory selection, in NumPy."""

from .attention import (AmsrnParams, AttentionTrace, SelectionMode, amsrn_backward, amsrn_forward,
                        attention_entropy)
from .corpus import EncodedSentence, Vocabulary, build_vocab, encode, encode_corpus, perplexity
from .datasets import TriggerCorpus, make_trigger_corpus
from .estimators import AMSRNLanguageModel, LSTMLanguageModel
from .lstm import LstmParams, LstmState, MemoryBank, lstm_backward, lstm_lm_forward, run_sentence
from .training import Checkpoint, TrainConfig, evaluate, sentence_ranking, train_amsrn, train_lstm

__version__ = "0.1.0"

__all__ = [
    "AMSRNLanguageModel", "AmsrnParams", "AttentionTrace", "Checkpoint", "EncodedSentence",
    "LSTMLanguageModel", "LstmParams", "LstmState", "MemoryBank", "SelectionMode", "TrainConfig",
    "TriggerCorpus", "Vocabulary", "amsrn_backward", "amsrn_forward", "attention_entropy", "build_vocab", "encode",
    "encode_corpus", "evaluate", "lstm_backward", "lstm_lm_forward", "make_trigger_corpus", "perplexity", "run_sentence",
    "sentence_ranking", "train_amsrn", "train_lstm",
]
