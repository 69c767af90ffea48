import numpy as np
import pytest

from pdfreq.network import NetworkModel


def random_connected_network(rng, n, extra_edges=None):
    """Random tree plus a few chords; parameter ranges keep the closed loop
    well damped and forward-Euler friendly at h = 0.01."""
    edges = []
    for j in range(1, n):
        edges.append((int(rng.integers(0, j)), j))
    have = {tuple(sorted(e)) for e in edges}
    extra = int(rng.integers(0, n // 3 + 1)) if extra_edges is None else extra_edges
    tries = 0
    while extra > 0 and tries < 30:
        i, j = (int(v) for v in rng.integers(0, n, 2))
        tries += 1
        key = (min(i, j), max(i, j))
        if i != j and key not in have:
            have.add(key)
            edges.append(key)
            extra -= 1
    m = len(edges)
    return NetworkModel(
        n=n,
        edges=tuple(edges),
        M=rng.uniform(0.4, 2.0, n),
        D=rng.uniform(0.5, 2.0, n),
        B=rng.uniform(0.5, 2.0, m),
    )


@pytest.fixture
def chain2():
    return NetworkModel(
        n=2, edges=((0, 1),), M=np.ones(2), D=np.ones(2), B=np.ones(1)
    )


@pytest.fixture
def chain3():
    return NetworkModel(
        n=3,
        edges=((0, 1), (1, 2)),
        M=np.array([1.0, 1.5, 0.8]),
        D=np.array([1.0, 0.9, 1.1]),
        B=np.array([1.2, 0.7]),
    )
