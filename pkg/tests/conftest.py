import numpy as np
import pytest

from rmt_select.core import CorrelationMatrix, ProblemDims


def random_correlation(n, seed, complex_=False, ridge=0.05):
    """Full-rank random correlation with trace n (Wishart plus a small ridge)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, 2 * n))
    if complex_:
        A = A + 1j * rng.standard_normal((n, 2 * n))
    C = A @ A.conj().T / (2 * n) + ridge * np.eye(n)
    C = 0.5 * (C + C.conj().T)
    C *= n / np.real(np.trace(C))
    return CorrelationMatrix(C)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dims():
    return ProblemDims(10, 3, 5)
