"""Attention head with dimension-wise memory selection on top of an LSTM LM.

For the ``t``-th prediction the head reads the current hidden state ``h_t``
and the memory ``[h_0, ..., h_{t-1}]``::

    w1, w2  = selection vectors in (0, 1)^d      (depend on h_t and the mode)
    k_t     = W_kh h_t + b_k
    e_ti    = (h_i * w1) . k_t
    alpha_t = softmax(e_t)
    r_t     = sum_i alpha_ti (h_i * w2)
    P       = softmax(W_ph h_t + W_pr r_t + b_p)

Selection modes:

* ``independent``: ``w1 = sigmoid(W_hh1 h + b_h1)``, ``w2 = sigmoid(W_hh2 h + b_h2)``
* ``tied``: one map, ``w2 = w1``
* ``complement``: one map producing ``w2``, and ``w1 = 1 - w2``
* ``none``: ``w1 = w2 = 1`` (plain dot-product attention, no selection weights)

The training objective for one sentence is ``NLL + lam * sum_t H(alpha_t)``
where ``H`` is the entropy in nats.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import mathops as mo
from .exceptions import DomainError, ShapeError
from .lstm import LstmParams, MemoryBank, SentenceCache, _check_targets, bptt, forward_states


class SelectionMode(str, enum.Enum):
    NONE = "none"
    INDEPENDENT = "independent"
    TIED = "tied"
    COMPLEMENT = "complement"

    @property
    def n_maps(self) -> int:
        """Number of learned sigmoid selection maps."""
        return {"none": 0, "independent": 2, "tied": 1, "complement": 1}[self.value]


@dataclass(eq=False)
class AmsrnParams(mo.ParamSet):
    W_kh: np.ndarray  # (d, d)
    b_k: np.ndarray   # (d,)
    W_ph: np.ndarray  # (V, d)
    W_pr: np.ndarray  # (V, d)
    b_p: np.ndarray   # (V,)
    mode: SelectionMode = SelectionMode.TIED
    W_hh1: np.ndarray | None = None
    b_h1: np.ndarray | None = None
    W_hh2: np.ndarray | None = None
    b_h2: np.ndarray | None = None

    def __post_init__(self):
        self.mode = SelectionMode(self.mode)
        d = self.W_kh.shape[0]
        V = self.W_ph.shape[0]
        expected = {"W_kh": (d, d), "b_k": (d,), "W_ph": (V, d), "W_pr": (V, d), "b_p": (V,)}
        n = self.mode.n_maps
        for k in (1, 2):
            present = getattr(self, f"W_hh{k}") is not None or getattr(self, f"b_h{k}") is not None
            if k <= n:
                expected[f"W_hh{k}"] = (d, d)
                expected[f"b_h{k}"] = (d,)
            elif present:
                raise ShapeError(f"mode {self.mode.value!r} has no W_hh{k}/b_h{k}")
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is None or arr.shape != shape:
                got = None if arr is None else arr.shape
                raise ShapeError(f"{name} has shape {got}, expected {shape}")

    @property
    def d(self) -> int:
        return self.W_kh.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.W_ph.shape[0]

    @classmethod
    def initialize(cls, lstm: LstmParams, mode=SelectionMode.TIED,
                   rng: np.random.Generator | None = None, scale: float = 0.08) -> "AmsrnParams":
        """Start from a pretrained LSTM: copy its output head into ``W_ph``/``b_p`` and zero ``W_pr``.

        With ``W_pr = 0`` the model's predictions equal the LSTM's exactly.
        """
        mode = SelectionMode(mode)
        if rng is None:
            rng = mo.make_rng(0)
        d = lstm.d
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)
        kw = {}
        for k in range(1, mode.n_maps + 1):
            kw[f"W_hh{k}"] = u(d, d)
            kw[f"b_h{k}"] = np.zeros(d)
        return cls(W_kh=u(d, d), b_k=np.zeros(d), W_ph=lstm.W_out.copy(),
                   W_pr=np.zeros((lstm.vocab_size, d)), b_p=lstm.b_out.copy(), mode=mode, **kw)


# ---------------------------------------------------------------------------
# single-step operations

def _bank_matrix(bank) -> np.ndarray:
    m = bank.matrix if isinstance(bank, MemoryBank) else np.asarray(bank, dtype=mo.DTYPE)
    if m.ndim != 2 or m.shape[0] == 0:
        raise DomainError("attention needs a non-empty memory bank")
    return m


def _check_h(params: AmsrnParams, h) -> np.ndarray:
    h = mo.as_vector(h, "h_t")
    if h.shape[0] != params.d:
        raise ShapeError(f"h_t has length {h.shape[0]}, head expects {params.d}")
    return h


def selection_vectors(params: AmsrnParams, h_t) -> tuple[np.ndarray, np.ndarray]:
    h = _check_h(params, h_t)
    mode = params.mode
    if mode is SelectionMode.NONE:
        ones = np.ones(params.d)
        return ones, ones
    s = mo.sigmoid(mo.matvec(params.W_hh1, h) + params.b_h1)
    if mode is SelectionMode.TIED:
        return s, s
    if mode is SelectionMode.COMPLEMENT:
        return 1.0 - s, s
    return s, mo.sigmoid(mo.matvec(params.W_hh2, h) + params.b_h2)


def attention_key(params: AmsrnParams, h_t) -> np.ndarray:
    return mo.matvec(params.W_kh, _check_h(params, h_t)) + params.b_k


def attention_scores(bank, w_h1, k_t) -> np.ndarray:
    """``e_i = (h_i * w_h1) . k_t`` for every stored state, in bank order."""
    m = _bank_matrix(bank)
    w_h1, k_t = mo.as_vector(w_h1, "w_h1"), mo.as_vector(k_t, "k_t")
    return np.array([mo.dot(mo.hadamard(h_i, w_h1), k_t) for h_i in m])


def attention_weights(e) -> np.ndarray:
    return mo.softmax(mo.as_vector(e, "scores"))


def relevant_vector(bank, alpha, w_h2) -> np.ndarray:
    m = _bank_matrix(bank)
    alpha = mo.as_vector(alpha, "alpha")
    if alpha.shape[0] != m.shape[0]:
        raise ShapeError(f"alpha has {alpha.shape[0]} weights for a bank of {m.shape[0]} states")
    r = np.zeros(m.shape[1])
    for a_i, h_i in zip(alpha, m):
        r = mo.axpy(a_i, mo.hadamard(h_i, w_h2), r)
    return r


def output_distribution(params: AmsrnParams, h_t, r_t) -> np.ndarray:
    h = _check_h(params, h_t)
    r = _check_h(params, r_t)
    return mo.softmax(mo.matvec(params.W_ph, h) + mo.matvec(params.W_pr, r) + params.b_p)


def attention_entropy(alpha) -> float:
    """Entropy (nats) of an attention distribution, ``0 log 0 = 0``."""
    alpha = mo.as_vector(alpha, "alpha")
    if abs(float(np.sum(alpha)) - 1.0) > 1e-9 or np.any(alpha < 0):
        raise DomainError(f"attention weights must form a distribution (sum={float(np.sum(alpha))!r})")
    return mo.entropy(alpha)


# ---------------------------------------------------------------------------
# whole-sentence forward / backward, batched over time

@dataclass
class AttentionStep:
    position: int
    alpha: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    key: np.ndarray
    relevant: np.ndarray
    entropy: float


@dataclass
class AttentionTrace:
    """Per-prediction attention internals for one sentence.

    Row ``t - 1`` of each array belongs to the ``t``-th prediction, whose
    ``alpha`` covers memory slots ``0 .. t-1``.
    """
    ids: np.ndarray
    alpha: list[np.ndarray]
    w1: np.ndarray
    w2: np.ndarray
    key: np.ndarray
    relevant: np.ndarray
    entropy: np.ndarray

    def __len__(self) -> int:
        return len(self.alpha)

    @property
    def total_entropy(self) -> float:
        return float(np.sum(self.entropy))

    @property
    def steps(self) -> list[AttentionStep]:
        return [AttentionStep(position=t + 1, alpha=self.alpha[t], w1=self.w1[t], w2=self.w2[t],
                              key=self.key[t], relevant=self.relevant[t], entropy=float(self.entropy[t]))
                for t in range(len(self.alpha))]


@dataclass
class _HeadCache:
    lstm: SentenceCache
    Hc: np.ndarray    # (T, d) current states h_1..h_T
    Hb: np.ndarray    # (T, d) memory slots h_0..h_{T-1}
    S1: np.ndarray | None
    S2: np.ndarray | None
    W1: np.ndarray
    W2: np.ndarray
    K: np.ndarray
    Q: np.ndarray
    A: np.ndarray     # (T, T) lower-triangular attention weights
    G: np.ndarray     # (T, d) attention-weighted raw memory
    R: np.ndarray     # (T, d) relevant vectors
    logits: np.ndarray
    ent: np.ndarray


def _selection(att: AmsrnParams, Hc: np.ndarray):
    mode = att.mode
    T, d = Hc.shape
    if mode is SelectionMode.NONE:
        ones = np.ones((T, d))
        return None, None, ones, ones
    S1 = mo.sigmoid(Hc @ att.W_hh1.T + att.b_h1)
    if mode is SelectionMode.TIED:
        return S1, None, S1, S1
    if mode is SelectionMode.COMPLEMENT:
        return S1, None, 1.0 - S1, S1
    S2 = mo.sigmoid(Hc @ att.W_hh2.T + att.b_h2)
    return S1, S2, S1, S2


def _check_pair(lstm: LstmParams, att: AmsrnParams) -> None:
    if lstm.d != att.d or lstm.vocab_size != att.vocab_size:
        raise ShapeError(f"LSTM (d={lstm.d}, V={lstm.vocab_size}) and head "
                         f"(d={att.d}, V={att.vocab_size}) disagree")


def _forward(lstm: LstmParams, att: AmsrnParams, tokens) -> _HeadCache:
    _check_pair(lstm, att)
    cache = forward_states(lstm, tokens)
    H = cache.H
    T = H.shape[0] - 1
    Hc, Hb = H[1:], H[:T]
    S1, S2, W1, W2 = _selection(att, Hc)
    K = Hc @ att.W_kh.T + att.b_k
    Q = K * W1
    E = Q @ Hb.T
    # prediction t (row t-1) may only read slots 0..t-1
    E[np.triu_indices(T, k=1)] = -np.inf
    A = mo.softmax(E)
    G = A @ Hb
    R = G * W2
    logits = Hc @ att.W_ph.T + R @ att.W_pr.T + att.b_p
    return _HeadCache(lstm=cache, Hc=Hc, Hb=Hb, S1=S1, S2=S2, W1=W1, W2=W2, K=K, Q=Q, A=A,
                      G=G, R=R, logits=logits, ent=mo.entropy(A))


def _trace(hc: _HeadCache) -> AttentionTrace:
    T = hc.A.shape[0]
    return AttentionTrace(ids=hc.lstm.ids.copy(), alpha=[hc.A[t, :t + 1].copy() for t in range(T)],
                          w1=hc.W1.copy(), w2=hc.W2.copy(), key=hc.K.copy(), relevant=hc.R.copy(),
                          entropy=hc.ent.copy())


def amsrn_forward(lstm: LstmParams, att: AmsrnParams, tokens) -> tuple[np.ndarray, AttentionTrace]:
    """Next-token distributions (T, V) and the attention trace for one input sequence."""
    hc = _forward(lstm, att, tokens)
    return mo.softmax(hc.logits), _trace(hc)


def amsrn_loss(lstm: LstmParams, att: AmsrnParams, tokens, targets) -> tuple[float, float]:
    """``(nll, entropy_sum)`` for one sentence; the objective is ``nll + lam * entropy_sum``."""
    hc = _forward(lstm, att, tokens)
    targets = _check_targets(hc.lstm.ids, targets, lstm.vocab_size)
    logp = mo.log_softmax(hc.logits)
    nll = -float(np.sum(logp[np.arange(targets.shape[0]), targets]))
    return nll, float(np.sum(hc.ent))


@dataclass
class AmsrnGradients:
    nll: float
    reg: float
    lstm: LstmParams
    att: AmsrnParams
    trace: AttentionTrace | None = field(default=None, repr=False)

    def objective(self, lam: float) -> float:
        return self.nll + lam * self.reg


def amsrn_backward(lstm: LstmParams, att: AmsrnParams, tokens, targets, lam: float = 0.0,
                   keep_trace: bool = False) -> AmsrnGradients:
    """Gradients of ``nll + lam * entropy_sum`` for every LSTM and head parameter.

    The LSTM output head (``W_out``/``b_out``) is not used by the model and gets
    a zero gradient.
    """
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    hc = _forward(lstm, att, tokens)
    targets = _check_targets(hc.lstm.ids, targets, lstm.vocab_size)
    nll, dZ = mo.softmax_cross_entropy(hc.logits, targets)
    g = att.zeros_like()

    g.W_ph = dZ.T @ hc.Hc
    g.W_pr = dZ.T @ hc.R
    g.b_p = dZ.sum(axis=0)
    dHc = dZ @ att.W_ph
    dR = dZ @ att.W_pr

    dG = dR * hc.W2
    dW2 = dR * hc.G
    dA = dG @ hc.Hb.T
    dHb = hc.A.T @ dG
    if lam:
        dA = dA + lam * mo.entropy_backward(hc.A)
    dE = mo.softmax_backward(hc.A, dA)
    dQ = dE @ hc.Hb
    dHb += dE.T @ hc.Q
    dK = dQ * hc.W1
    dW1 = dQ * hc.K
    g.W_kh = dK.T @ hc.Hc
    g.b_k = dK.sum(axis=0)
    dHc += dK @ att.W_kh

    mode = att.mode
    if mode is not SelectionMode.NONE:
        if mode is SelectionMode.INDEPENDENT:
            dS1 = mo.sigmoid_backward(hc.S1, dW1)
            dS2 = mo.sigmoid_backward(hc.S2, dW2)
            g.W_hh2 = dS2.T @ hc.Hc
            g.b_h2 = dS2.sum(axis=0)
            dHc += dS2 @ att.W_hh2
        elif mode is SelectionMode.TIED:
            dS1 = mo.sigmoid_backward(hc.S1, dW1 + dW2)
        else:  # complement: S1 is w2, w1 = 1 - S1
            dS1 = mo.sigmoid_backward(hc.S1, dW2 - dW1)
        g.W_hh1 = dS1.T @ hc.Hc
        g.b_h1 = dS1.sum(axis=0)
        dHc += dS1 @ att.W_hh1

    dH = np.zeros_like(hc.lstm.H)
    dH[1:] += dHc
    dH[:-1] += dHb
    lg = bptt(lstm, hc.lstm, dH)
    return AmsrnGradients(nll=nll, reg=float(np.sum(hc.ent)), lstm=lg, att=g,
                          trace=_trace(hc) if keep_trace else None)
