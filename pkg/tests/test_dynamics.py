import numpy as np
import pytest

from pdfreq.controller import ControllerGains, law_from_params, linear_law
from pdfreq.costs import QuarticCost, random_quartic
from pdfreq.dynamics import (
    SystemState,
    equilibrium_residuals,
    rhs,
    simulate,
    step,
    step_jacobian,
)
from pdfreq.errors import ConfigError, IntegrationBlowupError
from pdfreq.monotone import init_params
from pdfreq.network import NetworkModel
from pdfreq.oracle import equilibrium_from_oracle, solve_steady_state
from conftest import random_connected_network


def unit_cost(n):
    return QuarticCost(c=np.ones(n), b=np.zeros(n))


def test_origin_is_fixed_point_without_disturbance(chain3):
    cost = random_quartic(3, seed=0)
    law = law_from_params(init_params(3, 5, seed=0))
    gains = ControllerGains.for_model(chain3)
    state = SystemState.zero(chain3)
    out = step(chain3, law, gains, cost, state, np.zeros(3), 0.01)
    assert np.array_equal(out.as_vector(), np.zeros(13))
    traj = simulate(chain3, law, gains, cost, state, np.zeros(3), T=1.0, h=0.01)
    assert np.array_equal(traj.omega, np.zeros_like(traj.omega))


def test_euler_step_hand_example(chain2):
    # M = D = B = 1, identity law, omega = (0.1, -0.1), rest zero
    cost = unit_cost(2)
    law = linear_law(2, 1.0)
    gains = ControllerGains.for_model(chain2)
    state = SystemState(
        theta=np.zeros(1), omega=np.array([0.1, -0.1]),
        s=np.zeros(2), lam=np.zeros(2), phi=np.zeros(1),
    )
    out = step(chain2, law, gains, cost, state, np.zeros(2), h=0.01)
    assert out.theta[0] == pytest.approx(0.002)
    assert np.allclose(out.omega, [0.099, -0.099])


def test_step_jacobian_matches_finite_difference(chain3):
    cost = random_quartic(3, seed=5)
    law = law_from_params(init_params(3, 4, seed=1))
    gains = ControllerGains.for_model(chain3, 1.3, 0.7)
    rng = np.random.default_rng(2)
    state = SystemState.from_vector(rng.normal(0, 0.5, 13), chain3)
    p = rng.uniform(-1, 1, 3)
    h = 0.01
    J = step_jacobian(chain3, law, gains, cost, state, h)
    vec = state.as_vector()
    eps = 1e-7
    for k in range(13):
        up, dn = vec.copy(), vec.copy()
        up[k] += eps
        dn[k] -= eps
        fu = step(chain3, law, gains, cost, SystemState.from_vector(up, chain3), p, h)
        fd = step(chain3, law, gains, cost, SystemState.from_vector(dn, chain3), p, h)
        col = (fu.as_vector() - fd.as_vector()) / (2 * eps)
        assert np.abs(col - J[:, k]).max() < 1e-6


def test_euler_first_order_against_rk4(chain3):
    """Halving h roughly halves the one-step error against an RK4 reference."""
    cost = random_quartic(3, seed=8)
    law = linear_law(3, 1.0)
    gains = ControllerGains.for_model(chain3)
    p = np.array([1.0, -0.5, 0.2])
    x0 = SystemState.zero(chain3)
    # integrate to an interesting mid-transient point first
    warm = simulate(chain3, law, gains, cost, x0, p, T=1.0, h=0.001, method="rk4")
    start = warm.final_state()

    def one_step_error(h):
        ref = simulate(chain3, law, gains, cost, start.copy(), p, T=h, h=h / 50,
                       method="rk4").final_state()
        eul = step(chain3, law, gains, cost, start.copy(), p, h)
        return np.abs(eul.as_vector() - ref.as_vector()).max()

    ratio = one_step_error(0.02) / one_step_error(0.01)
    assert 1.7 <= ratio <= 2.3


def test_simulate_step_count_and_inputs(chain3):
    cost = random_quartic(3, seed=0)
    law = linear_law(3, 1.0)
    gains = ControllerGains.for_model(chain3)
    traj = simulate(chain3, law, gains, cost, SystemState.zero(chain3),
                    np.array([1.0, 0.0, -0.5]), T=2.0, h=0.01)
    assert traj.n_steps == 200
    assert traj.u.shape == (201, 3)
    assert np.allclose(traj.u[5], law.value(traj.s[5]))


def test_simulate_rejects_bad_dims(chain3):
    cost = random_quartic(3, seed=0)
    law = linear_law(3, 1.0)
    gains = ControllerGains.for_model(chain3)
    with pytest.raises(ConfigError):
        simulate(chain3, law, gains, cost, SystemState.zero(chain3),
                 np.zeros(4), T=1.0, h=0.01)
    with pytest.raises(ConfigError):
        simulate(chain3, linear_law(4, 1.0), gains, cost,
                 SystemState.zero(chain3), np.zeros(3), T=1.0, h=0.01)


def test_blowup_raises_with_step_index(chain2):
    cost = unit_cost(2)
    law = linear_law(2, 500.0)  # destabilizes Euler at this step size
    gains = ControllerGains.for_model(chain2, 50.0, 50.0)
    with pytest.raises(IntegrationBlowupError) as err:
        simulate(chain2, law, gains, cost, SystemState.zero(chain2),
                 np.array([3.0, -1.0]), T=20.0, h=0.05)
    assert err.value.step > 0


def test_equilibrium_residuals_at_oracle(chain3):
    cost = random_quartic(3, seed=6)
    gains = ControllerGains.for_model(chain3)
    p = np.array([1.2, -0.3, 0.4])
    for law in (linear_law(3, 1.0), law_from_params(init_params(3, 6, seed=3))):
        sol = solve_steady_state(chain3, cost, p)
        eq = equilibrium_from_oracle(chain3, law, cost, sol)
        res = equilibrium_residuals(chain3, law, gains, cost, eq, p)
        assert res.max() <= 1e-8


def test_equilibrium_residuals_at_origin_with_disturbance(chain3):
    cost = random_quartic(3, seed=6)
    gains = ControllerGains.for_model(chain3, gamma_lam=np.array([2.0, 1.0, 0.5]))
    p = np.array([1.0, -2.0, 0.5])
    res = equilibrium_residuals(chain3, linear_law(3, 1.0), gains, cost,
                                SystemState.zero(chain3), p)
    assert res.dlam == pytest.approx(np.abs(gains.gamma_lam * p).max())


def test_fixed_point_iff_zero_residuals(chain3):
    cost = random_quartic(3, seed=2)
    law = linear_law(3, 1.0)
    gains = ControllerGains.for_model(chain3)
    p = np.array([0.7, 0.1, -0.3])
    sol = solve_steady_state(chain3, cost, p)
    eq = equilibrium_from_oracle(chain3, law, cost, sol)
    for h in (0.01, 0.1, 1.0):
        out = step(chain3, law, gains, cost, eq, p, h)
        assert np.abs(out.as_vector() - eq.as_vector()).max() <= 1e-9
    # a perturbed state is neither a fixed point nor residual-free
    bad = eq.copy()
    bad.omega = bad.omega + 0.1
    res = equilibrium_residuals(chain3, law, gains, cost, bad, p)
    assert res.max() > 1e-3
    moved = step(chain3, law, gains, cost, bad, p, 0.01)
    assert np.abs(moved.as_vector() - bad.as_vector()).max() > 1e-6


def test_long_run_converges_and_balances(chain3):
    cost = random_quartic(3, seed=1)
    law = linear_law(3, 1.0)
    gains = ControllerGains.for_model(chain3)
    p = np.array([1.0, -0.3, 0.5])
    traj = simulate(chain3, law, gains, cost, SystemState.zero(chain3), p,
                    T=120.0, h=0.01)
    assert np.abs(traj.omega[-1]).max() <= 1e-3
    assert traj.u[-1].sum() == pytest.approx(p.sum(), abs=1e-2)
    # physical and virtual angle differences agree at equilibrium (tree graph)
    assert np.abs(traj.theta[-1] - traj.phi[-1]).max() <= 1e-4


def test_virtual_angles_match_flows_on_cyclic_graph():
    rng = np.random.default_rng(4)
    model = random_connected_network(rng, 5, extra_edges=2)
    assert model.m > model.n - 1  # has a cycle
    cost = random_quartic(5, seed=4)
    law = linear_law(5, 1.0)
    gains = ControllerGains.for_model(model)
    p = rng.uniform(-1.5, 1.5, 5)
    traj = simulate(model, law, gains, cost, SystemState.zero(model), p,
                    T=150.0, h=0.01)
    mismatch = model.C @ (model.B * (traj.theta[-1] - traj.phi[-1]))
    assert np.abs(mismatch).max() <= 1e-4


def test_rhs_matches_controller_and_plant_blocks(chain3):
    cost = random_quartic(3, seed=9)
    law = law_from_params(init_params(3, 4, seed=4))
    gains = ControllerGains.for_model(chain3, 0.8, 1.4)
    rng = np.random.default_rng(1)
    state = SystemState.from_vector(rng.normal(0, 1, 13), chain3)
    p = rng.uniform(-1, 1, 3)
    d = rhs(chain3, law, gains, cost, state, p)
    assert np.allclose(d.theta, chain3.C.T @ state.omega)
    u = law.value(state.s)
    assert np.allclose(
        d.omega,
        (u - p - chain3.D * state.omega - chain3.C @ (chain3.B * state.theta)) / chain3.M,
    )


def test_trajectory_csv(tmp_path, chain2):
    cost = unit_cost(2)
    law = linear_law(2, 1.0)
    gains = ControllerGains.for_model(chain2)
    traj = simulate(chain2, law, gains, cost, SystemState.zero(chain2),
                    np.array([0.5, 0.0]), T=0.05, h=0.01)
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,omega_1,omega_2,u_1,u_2,s_1,s_2,lam_1,lam_2"
    assert len(lines) == traj.n_steps + 2
    row = lines[2].split(",")
    assert float(row[0]) == pytest.approx(0.01)
    assert float(row[1]) == pytest.approx(traj.omega[1, 0])
