import numpy as np
import pytest

from pdfreq.costs import QuarticCost, random_quartic


def scalar_cost(c, b):
    return QuarticCost(c=np.array([c]), b=np.array([b]))


def test_value_examples():
    assert scalar_cost(1.0, 0.0).value(np.array([0.0]))[0] == 0.0
    assert scalar_cost(2.0, 0.5).value(np.array([1.0]))[0] == pytest.approx(1.0)
    # direct evaluation: 0.25 * 0.8 * 16 + 0.1
    assert scalar_cost(0.8, 0.1).value(np.array([2.0]))[0] == pytest.approx(3.3)


def test_grad_examples():
    assert scalar_cost(1.0, 0.0).grad(np.array([0.0]))[0] == 0.0
    assert scalar_cost(2.0, 0.0).grad(np.array([1.0]))[0] == pytest.approx(2.0)


def test_hess_examples():
    assert scalar_cost(1.0, 0.0).hess(np.array([2.0]))[0] == pytest.approx(12.0)
    assert scalar_cost(0.5, 0.0).hess(np.array([0.0]))[0] == 0.0


@pytest.mark.parametrize("u", [-1.0, 0.3, 2.0])
def test_grad_matches_central_difference(u):
    cost = random_quartic(4, seed=2)
    eps = 1e-4
    fd = (cost.value(np.full(4, u + eps)) - cost.value(np.full(4, u - eps))) / (2 * eps)
    assert np.abs(cost.grad(np.full(4, u)) - fd).max() < 1e-6


@pytest.mark.parametrize("u", [-1.0, 0.3, 2.0])
def test_hess_matches_central_difference(u):
    cost = random_quartic(4, seed=3)
    eps = 1e-4
    fd = (cost.grad(np.full(4, u + eps)) - cost.grad(np.full(4, u - eps))) / (2 * eps)
    assert np.abs(cost.hess(np.full(4, u)) - fd).max() < 1e-5


def test_gradient_strictly_increasing():
    cost = random_quartic(6, seed=5)
    rng = np.random.default_rng(0)
    for _ in range(200):
        u1 = rng.uniform(-3, 3, 6)
        u2 = u1 + rng.uniform(0.1, 1.0, 6)
        assert np.all(cost.grad(u2) > cost.grad(u1))


def test_grad_zero_at_origin():
    cost = random_quartic(8, seed=9)
    assert np.array_equal(cost.grad(np.zeros(8)), np.zeros(8))


def test_random_draw_clamps_small_c():
    for seed in range(20):
        cost = random_quartic(10, seed=seed)
        assert np.all(cost.c >= 0.05) and np.all(cost.c <= 1.0)
        assert np.all((cost.b >= 0.0) & (cost.b <= 1.0))


def test_random_draw_deterministic():
    a = random_quartic(5, seed=4)
    b = random_quartic(5, seed=4)
    assert np.array_equal(a.c, b.c) and np.array_equal(a.b, b.b)


def test_rejects_nonpositive_c():
    with pytest.raises(ValueError):
        QuarticCost(c=np.array([0.0]), b=np.array([0.0]))


def test_total():
    cost = QuarticCost(c=np.array([2.0, 1.0]), b=np.array([0.5, 0.0]))
    assert cost.total(np.array([1.0, 0.0])) == pytest.approx(1.0)
