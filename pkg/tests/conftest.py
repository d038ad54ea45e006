import numpy as np
import pytest

from ldisc.freq_data import RationalTransferMatrix
from ldisc.loewner import DescriptorRealization


def tf_realization(num, den):
    """Descriptor realization of a SISO rational function (test helper)."""
    return DescriptorRealization.from_state_space(*RationalTransferMatrix.siso(num, den).to_state_space())


def random_stable_ss(rng, order, n_out, n_in, w_lo=0.1, w_hi=30.0):
    """Random real (A, B, C) with poles spread over [w_lo, w_hi] rad/s.

    Pole magnitudes are drawn in separate log-bands so that no two modes
    nearly coincide (which would make the draw numerically non-minimal).
    """
    blocks = []
    k = 0
    while k < order:
        size = 2 if order - k >= 2 and rng.random() < 0.5 else 1
        blocks.append(size)
        k += size
    edges = np.linspace(np.log10(w_lo), np.log10(w_hi), len(blocks) + 1)
    A = np.zeros((order, order))
    k = 0
    for band, size in enumerate(blocks):
        width = edges[1] - edges[0]
        mag = 10 ** rng.uniform(edges[band] + 0.15 * width, edges[band + 1] - 0.15 * width)
        if size == 2:
            zeta = rng.uniform(0.1, 0.9)
            re, im = -zeta * mag, mag * np.sqrt(1 - zeta**2)
            A[k:k + 2, k:k + 2] = [[re, im], [-im, re]]
        else:
            A[k, k] = -mag
        k += size
    return A, rng.standard_normal((order, n_in)), rng.standard_normal((n_out, order))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
