import numpy as np
import pytest

from pdfreq.monotone import (
    MonotoneParams,
    f_forward,
    f_input_grad,
    f_param_grad,
    init_params,
    load_checkpoint,
    pwl_antiderivative,
    pwl_inverse,
    pwl_value,
    save_checkpoint,
)


def single_law(beta, slopes):
    """One-bus realized arrays from plain lists."""
    return np.array([beta], dtype=float), np.array([slopes], dtype=float)


def test_origin_always_zero():
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = int(rng.integers(0, 6))
        beta, slopes = single_law(
            np.sort(rng.uniform(-3, 3, d)), rng.uniform(0.1, 5.0, d + 1)
        )
        assert pwl_value(beta, slopes, np.array([0.0]))[0] == 0.0


def test_single_segment_is_linear():
    beta, slopes = single_law([], [1.5])
    assert pwl_value(beta, slopes, np.array([2.0]))[0] == pytest.approx(3.0)


def test_one_breakpoint_closed_form():
    # slope 1 until the breakpoint at 1, slope 3 after it
    beta, slopes = single_law([1.0], [1.0, 3.0])
    assert pwl_value(beta, slopes, np.array([2.0]))[0] == pytest.approx(4.0)
    from pdfreq.monotone import pwl_slope

    assert pwl_slope(beta, slopes, np.array([0.5]))[0] == 1.0
    assert pwl_slope(beta, slopes, np.array([1.5]))[0] == 3.0


def test_slope_matches_finite_difference_away_from_breakpoints():
    params = init_params(3, 5, seed=1)
    params = MonotoneParams(
        beta=params.beta, zeta=params.zeta + 0.3, eps_slope=params.eps_slope,
        l_max=params.l_max, s_max=params.s_max,
    )
    rng = np.random.default_rng(2)
    for _ in range(30):
        bus = int(rng.integers(0, 3))
        x = float(rng.uniform(-4, 4))
        if np.abs(params.beta[bus] - x).min(initial=np.inf) < 1e-3:
            continue
        eps = 1e-5
        fd = (f_forward(params, bus, x + eps) - f_forward(params, bus, x - eps)) / (2 * eps)
        assert f_input_grad(params, bus, x) == pytest.approx(fd, abs=1e-8)


def test_param_grad_inactive_segments_are_zero():
    # x sits in the first segment: increments above it cannot matter
    params = MonotoneParams(beta=np.array([[1.0, 2.0]]), zeta=np.zeros((1, 3)))
    dbeta, dzeta = f_param_grad(params, 0, 0.5)
    assert dbeta[0] == 0.0 and dbeta[1] == 0.0
    assert dzeta[1] == 0.0 and dzeta[2] == 0.0
    assert dzeta[0] != 0.0


def test_param_grad_one_breakpoint_chain_rule():
    params = MonotoneParams(beta=np.array([[1.0]]), zeta=np.array([[0.2, -0.4]]))
    dbeta, dzeta = f_param_grad(params, 0, 2.0)
    # d f / d m_1 = overlap of [0, 2] with the segment right of the breakpoint
    assert dzeta[1] == pytest.approx((2.0 - 1.0) * params.slope_jac()[0, 1])


def test_param_grad_matches_finite_difference():
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(100):
        d = int(rng.integers(1, 5))
        params = MonotoneParams(
            beta=np.sort(rng.uniform(-3, 3, (1, d)), axis=1),
            zeta=rng.uniform(-2, 2, (1, d + 1)),
        )
        x = float(rng.uniform(-4, 4))
        dbeta, dzeta = f_param_grad(params, 0, x)
        eps = 1e-6
        for k in range(d):
            if min(abs(x - params.beta[0, k]), abs(params.beta[0, k])) < 1e-4:
                continue  # finite differences straddle a kink
            up = params.beta.copy()
            up[0, k] += eps
            dn = params.beta.copy()
            dn[0, k] -= eps
            fd = (
                f_forward(MonotoneParams(up, params.zeta), 0, x)
                - f_forward(MonotoneParams(dn, params.zeta), 0, x)
            ) / (2 * eps)
            worst = max(worst, abs(fd - dbeta[k]) / max(abs(fd), abs(dbeta[k]), 1.0))
        for k in range(d + 1):
            up = params.zeta.copy()
            up[0, k] += eps
            dn = params.zeta.copy()
            dn[0, k] -= eps
            fd = (
                f_forward(MonotoneParams(params.beta, up), 0, x)
                - f_forward(MonotoneParams(params.beta, dn), 0, x)
            ) / (2 * eps)
            worst = max(worst, abs(fd - dzeta[k]) / max(abs(fd), abs(dzeta[k]), 1.0))
    assert worst <= 1e-5


def test_init_is_identity_warm_start():
    params = init_params(4, 10, seed=0)
    law_beta, law_slopes = params.beta, params.slopes()
    xs = np.linspace(-3, 3, 61)
    for x in xs:
        vals = pwl_value(law_beta, law_slopes, np.full(4, x))
        assert np.abs(vals - x).max() <= 0.05


def test_init_deterministic_and_monotone():
    a = init_params(3, 8, seed=5)
    b = init_params(3, 8, seed=5)
    assert np.array_equal(a.beta, b.beta) and np.array_equal(a.zeta, b.zeta)
    assert np.all(a.slopes() >= a.eps_slope)
    assert np.all(np.diff(a.beta, axis=1) >= 0)


def test_monotonicity_fuzz():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        d = int(rng.integers(0, 8))
        params = MonotoneParams(
            beta=np.sort(rng.uniform(-5, 5, (1, d)), axis=1),
            zeta=rng.uniform(-20, 20, (1, d + 1)),
        )
        slopes = params.slopes()
        assert np.all(slopes >= params.eps_slope)
        assert np.all(slopes <= params.l_max)
        x = np.sort(rng.uniform(-6, 6, 2))
        lo = pwl_value(params.beta, slopes, x[:1])
        hi = pwl_value(params.beta, slopes, x[1:])
        if x[1] - x[0] > 1e-12:
            assert hi[0] > lo[0]
        assert pwl_value(params.beta, slopes, np.array([0.0]))[0] == 0.0


def test_fits_monotone_target_with_20_breakpoints():
    """Least-squares slope fit to a saturating monotone curve over [-3, 3]."""
    d = 20
    beta = np.linspace(-3, 3, d + 2)[1:-1].reshape(1, -1)
    xs = np.linspace(-3, 3, 400)
    target = 2.0 * np.tanh(xs)
    # f is linear in the segment slopes; build the design matrix column by column
    cols = []
    for k in range(d + 1):
        slopes = np.zeros((1, d + 1))
        slopes[0, k] = 1.0
        cols.append([pwl_value(beta, slopes, np.array([x]))[0] for x in xs])
    A = np.array(cols).T
    m, *_ = np.linalg.lstsq(A, target, rcond=None)
    assert np.all(m > 0)  # fitted slopes stay in the monotone family
    fit = A @ m
    assert np.abs(fit - target).max() <= 0.02


def test_inverse_round_trip():
    rng = np.random.default_rng(6)
    params = init_params(5, 7, seed=6)
    params = MonotoneParams(beta=params.beta, zeta=params.zeta + rng.uniform(-1, 1, (5, 8)))
    slopes = params.slopes()
    for _ in range(20):
        x = rng.uniform(-6, 6, 5)
        u = pwl_value(params.beta, slopes, x)
        back = pwl_inverse(params.beta, slopes, u)
        assert np.abs(back - x).max() < 1e-9


def test_antiderivative_matches_quadrature():
    rng = np.random.default_rng(8)
    params = init_params(2, 4, seed=8)
    params = MonotoneParams(beta=params.beta, zeta=params.zeta + rng.uniform(-1, 1, (2, 5)))
    slopes = params.slopes()
    for x in (-2.5, -0.3, 0.0, 0.7, 3.1):
        grid = np.linspace(0.0, x, 20001)
        vals = np.array(
            [pwl_value(params.beta, slopes, np.full(2, g)) for g in grid]
        )
        quad = np.trapezoid(vals, dx=(grid[1] - grid[0] if len(grid) > 1 else 0.0), axis=0)
        exact = pwl_antiderivative(params.beta, slopes, np.full(2, x))
        assert np.abs(exact - quad).max() < 1e-6


def test_checkpoint_round_trip(tmp_path):
    params = init_params(4, 6, seed=2)
    path = tmp_path / "law.json"
    save_checkpoint(params, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.beta, params.beta)
    assert np.array_equal(back.zeta, params.zeta)
    assert back.eps_slope == params.eps_slope
    assert back.l_max == params.l_max


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "other.json"
    path.write_text("{}")
    with pytest.raises(ValueError):
        load_checkpoint(path)
