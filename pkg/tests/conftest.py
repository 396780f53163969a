import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_orthonormal(rng, n_rows, n_cols):
    q, _ = np.linalg.qr(rng.standard_normal((n_rows, n_cols)))
    return q
