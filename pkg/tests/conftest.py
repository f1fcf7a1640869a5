import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "numeric", max_examples=50, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("numeric")

from nearcrit.spectral import check_primitive  # noqa: E402

AVERAGING = 0.5 * np.ones((2, 2))
FIBONACCI = np.array([[0.0, 1.0], [1.0, 1.0]])


def make_corpus(n: int = 50, seed: int = 987654321) -> list[np.ndarray]:
    """Deterministic corpus of primitive matrices with d cycling 1..6.

    Mostly strictly positive entries; every fifth matrix gets one
    off-diagonal entry zeroed when that keeps it primitive.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        d = len(out) % 6 + 1
        M = rng.uniform(0.1, 2.0, size=(d, d))
        if len(out) % 5 == 4 and d >= 2:
            i, j = rng.integers(0, d, size=2)
            if i != j:
                M2 = M.copy()
                M2[i, j] = 0.0
                try:
                    check_primitive(M2)
                    M = M2
                except Exception:
                    pass
        out.append(M)
    return out


@pytest.fixture(scope="session")
def corpus():
    return make_corpus() + [AVERAGING.copy(), FIBONACCI.copy()]


@pytest.fixture(scope="session")
def sd5():
    from nearcrit.spectral import perron_decompose
    return perron_decompose(AVERAGING)


@pytest.fixture(scope="session")
def nb5(sd5):
    from nearcrit.geometry import build_contraction_norm
    return build_contraction_norm(sd5)


@pytest.fixture(scope="session")
def sd1():
    from nearcrit.spectral import perron_decompose
    return perron_decompose(np.array([[1.0]]))


@pytest.fixture(scope="session")
def nb1(sd1):
    from nearcrit.geometry import build_contraction_norm
    return build_contraction_norm(sd1)
