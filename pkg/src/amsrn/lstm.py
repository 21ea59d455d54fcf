"""Single-layer LSTM language model and the per-sentence hidden-state memory bank.

Gate pre-activations are stacked in four blocks of ``d`` rows in the order
``[input | forget | output | candidate]``::

    z = W_x @ x + W_h @ h_prev + b
    i, f, o = sigmoid(z[0:d]), sigmoid(z[d:2d]), sigmoid(z[2d:3d])
    g = tanh(z[3d:4d])
    c = f * c_prev + i * g
    h = o * tanh(c)

The initial state ``(h_0, c_0)`` is all zeros and ``h_0`` is the first entry
of every memory bank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mathops as mo
from .exceptions import ShapeError, VocabularyError

GATES = ("input", "forget", "output", "candidate")


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.c.shape or self.h.ndim != 1:
            raise ShapeError(f"h {self.h.shape} and c {self.c.shape} must be equal-length vectors")


@dataclass(eq=False)
class LstmParams(mo.ParamSet):
    embedding: np.ndarray  # (V, d)
    W_x: np.ndarray        # (4d, d)
    W_h: np.ndarray        # (4d, d)
    b: np.ndarray          # (4d,)
    W_out: np.ndarray      # (V, d)
    b_out: np.ndarray      # (V,)

    def __post_init__(self):
        V, d = self.embedding.shape
        expected = {"W_x": (4 * d, d), "W_h": (4 * d, d), "b": (4 * d,),
                    "W_out": (V, d), "b_out": (V,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def d(self) -> int:
        return self.embedding.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @classmethod
    def initialize(cls, vocab_size: int, d: int = 50, rng: np.random.Generator | None = None,
                   scale: float = 0.08, forget_bias: float = 1.0,
                   zero_output: bool = False) -> "LstmParams":
        """Uniform(-scale, scale) weights, zero biases except the forget block."""
        if rng is None:
            rng = mo.make_rng(0)
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)
        b = np.zeros(4 * d)
        b[d:2 * d] = forget_bias
        W_out = np.zeros((vocab_size, d)) if zero_output else u(vocab_size, d)
        return cls(embedding=u(vocab_size, d), W_x=u(4 * d, d), W_h=u(4 * d, d), b=b,
                   W_out=W_out, b_out=np.zeros(vocab_size))

    @classmethod
    def zeros(cls, vocab_size: int, d: int) -> "LstmParams":
        return cls(embedding=np.zeros((vocab_size, d)), W_x=np.zeros((4 * d, d)),
                   W_h=np.zeros((4 * d, d)), b=np.zeros(4 * d),
                   W_out=np.zeros((vocab_size, d)), b_out=np.zeros(vocab_size))


class MemoryBank:
    """Read-only stack of hidden states ``h_0 .. h_T`` of one sentence.

    ``prefix(t)`` is the bank consulted when predicting the ``t``-th target:
    ``[h_0, ..., h_{t-1}]``.
    """

    def __init__(self, states: np.ndarray):
        states = np.array(states, dtype=mo.DTYPE)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ShapeError(f"memory bank needs shape (n, d) with n >= 1, got {states.shape}")
        states.setflags(write=False)
        self._states = states

    def __len__(self) -> int:
        return self._states.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self._states[i]

    @property
    def matrix(self) -> np.ndarray:
        return self._states

    @property
    def states(self) -> list[np.ndarray]:
        return list(self._states)

    def prefix(self, t: int) -> "MemoryBank":
        if not 1 <= t <= len(self):
            raise ShapeError(f"prefix length {t} outside [1, {len(self)}]")
        return MemoryBank(self._states[:t])


def check_tokens(tokens, vocab_size: int) -> np.ndarray:
    ids = np.asarray(tokens)
    if ids.ndim != 1 or ids.shape[0] == 0:
        raise ShapeError("token sequence must be a non-empty 1-D sequence")
    if not np.issubdtype(ids.dtype, np.integer):
        raise VocabularyError(f"token ids must be integers, got dtype {ids.dtype}")
    bad = np.flatnonzero((ids < 0) | (ids >= vocab_size))
    if bad.size:
        pos = int(bad[0])
        raise VocabularyError(f"token id {int(ids[pos])} at position {pos} outside vocabulary of size {vocab_size}")
    return ids.astype(np.intp)


def _check_targets(ids: np.ndarray, targets, vocab_size: int) -> np.ndarray:
    tg = np.asarray(targets)
    if tg.shape != ids.shape:
        raise ShapeError(f"targets shape {tg.shape} does not align with inputs shape {ids.shape}")
    return check_tokens(tg, vocab_size)


def _step(params: LstmParams, xproj: np.ndarray, h: np.ndarray, c: np.ndarray):
    d = params.d
    z = xproj + params.W_h @ h + params.b
    gates = np.empty_like(z)
    gates[:3 * d] = mo.sigmoid(z[:3 * d])
    gates[3 * d:] = np.tanh(z[3 * d:])
    i, f, o, g = gates[:d], gates[d:2 * d], gates[2 * d:3 * d], gates[3 * d:]
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, gates, tc


def lstm_cell(params: LstmParams, x_embed, prev: LstmState) -> LstmState:
    """One recurrence step from an embedded input vector."""
    x = mo.as_vector(x_embed, "x_embed")
    if x.shape[0] != params.d or prev.h.shape[0] != params.d:
        raise ShapeError(f"cell of size {params.d} got input {x.shape} and state {prev.h.shape}")
    h, c, _, _ = _step(params, params.W_x @ x, prev.h, prev.c)
    return LstmState(h=h, c=c)


@dataclass
class SentenceCache:
    """Everything the backward pass needs from one forward run."""
    ids: np.ndarray
    X: np.ndarray       # (T, d) embedded inputs
    H: np.ndarray       # (T+1, d) hidden states, H[0] = h_0
    C: np.ndarray       # (T+1, d) cell states
    gates: np.ndarray   # (T, 4d) activated gates
    tanh_c: np.ndarray  # (T, d)


def forward_states(params: LstmParams, tokens) -> SentenceCache:
    ids = check_tokens(tokens, params.vocab_size)
    T, d = ids.shape[0], params.d
    X = params.embedding[ids]
    Xproj = X @ params.W_x.T
    H = np.zeros((T + 1, d))
    C = np.zeros((T + 1, d))
    gates = np.empty((T, 4 * d))
    tanh_c = np.empty((T, d))
    for t in range(T):
        H[t + 1], C[t + 1], gates[t], tanh_c[t] = _step(params, Xproj[t], H[t], C[t])
    return SentenceCache(ids=ids, X=X, H=H, C=C, gates=gates, tanh_c=tanh_c)


def run_sentence(params: LstmParams, tokens) -> tuple[list[LstmState], MemoryBank]:
    """Run the LSTM over ``tokens``.

    Returns the ``T + 1`` states (initial state first) and the bank
    ``[h_0, ..., h_T]``; ``bank.prefix(t)`` is the memory for the ``t``-th prediction.
    """
    cache = forward_states(params, tokens)
    states = [LstmState(h=cache.H[t].copy(), c=cache.C[t].copy()) for t in range(cache.H.shape[0])]
    return states, MemoryBank(cache.H)


def lstm_lm_forward(params: LstmParams, tokens) -> tuple[np.ndarray, MemoryBank]:
    """Next-token distributions ``softmax(W_out h_t + b_out)`` for t = 1..T, shape (T, V)."""
    cache = forward_states(params, tokens)
    logits = cache.H[1:] @ params.W_out.T + params.b_out
    return mo.softmax(logits), MemoryBank(cache.H)


def bptt(params: LstmParams, cache: SentenceCache, dH: np.ndarray) -> LstmParams:
    """Backpropagate external gradients ``dH`` (shape (T+1, d)) on every hidden state.

    The returned gradient has ``W_out``/``b_out`` set to zero; callers add the
    head gradients themselves.  ``dH[0]`` is ignored because ``h_0`` is fixed.
    """
    T, d = cache.X.shape
    dZ = np.empty((T, 4 * d))
    dh_next = np.zeros(d)
    dc_next = np.zeros(d)
    W_h = params.W_h
    for t in range(T - 1, -1, -1):
        g = cache.gates[t]
        i, f, o, cand = g[:d], g[d:2 * d], g[2 * d:3 * d], g[3 * d:]
        tc = cache.tanh_c[t]
        dh = dH[t + 1] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:d] = dc * cand * i * (1.0 - i)
        dz[d:2 * d] = dc * cache.C[t] * f * (1.0 - f)
        dz[2 * d:3 * d] = dh * tc * o * (1.0 - o)
        dz[3 * d:] = dc * i * (1.0 - cand * cand)
        dc_next = dc * f
        dh_next = dz @ W_h
    grads = params.zeros_like()
    grads.W_x = dZ.T @ cache.X
    grads.W_h = dZ.T @ cache.H[:T]
    grads.b = dZ.sum(axis=0)
    np.add.at(grads.embedding, cache.ids, dZ @ params.W_x)
    return grads


def lstm_backward(params: LstmParams, tokens, targets) -> tuple[float, LstmParams]:
    """Summed next-token NLL of the plain LSTM LM and its gradient for every parameter."""
    cache = forward_states(params, tokens)
    targets = _check_targets(cache.ids, targets, params.vocab_size)
    Hc = cache.H[1:]
    nll, dlogits = mo.softmax_cross_entropy(Hc @ params.W_out.T + params.b_out, targets)
    dH = np.zeros_like(cache.H)
    dH[1:] = dlogits @ params.W_out
    grads = bptt(params, cache, dH)
    grads.W_out = dlogits.T @ Hc
    grads.b_out = dlogits.sum(axis=0)
    return nll, grads


def lstm_loss(params: LstmParams, tokens, targets) -> float:
    cache = forward_states(params, tokens)
    targets = _check_targets(cache.ids, targets, params.vocab_size)
    logp = mo.log_softmax(cache.H[1:] @ params.W_out.T + params.b_out)
    return -float(np.sum(logp[np.arange(targets.shape[0]), targets]))
