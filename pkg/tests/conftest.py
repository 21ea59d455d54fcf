import numpy as np
import pytest

from amsrn.attention import AmsrnParams, SelectionMode
from amsrn.lstm import LstmParams
from amsrn.mathops import make_rng

# (criterion, passed, detail) rows collected by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


def random_pair(seed, mode="tied", vocab_size=10, d=4, scale=0.5):
    """LSTM + head with every parameter random (including W_pr and biases)."""
    rng = make_rng(seed)
    lstm = LstmParams.initialize(vocab_size, d, rng, scale=scale)
    lstm.b_out = rng.uniform(-scale, scale, vocab_size)
    lstm.b = rng.uniform(-scale, scale, 4 * d)
    att = AmsrnParams.initialize(lstm, mode, rng, scale=scale)
    for name, a in att.named_arrays().items():
        a[...] = rng.uniform(-scale, scale, a.shape)
    return lstm, att


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture(params=[m.value for m in SelectionMode])
def mode(request):
    return request.param


def sentence(rng, n, vocab_size=10):
    ids = rng.integers(0, vocab_size, n + 1)
    return ids[:-1], ids[1:]
