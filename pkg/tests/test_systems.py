import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpinode import systems
from mpinode.errors import ContractError, DomainError
from mpinode.solver import EVAL_SOLVER, integrate

positive = st.floats(0.05, 20.0, allow_nan=False)


def test_lv_rhs_hand_value(lv):
    np.testing.assert_array_equal(systems.rhs(lv, [1.0, 1.0]), [0.5, -2.0])


def test_lv_rhs_vanishes_at_equilibrium(lv):
    np.testing.assert_array_equal(systems.rhs(lv, [3.0, 1.5]), [0.0, 0.0])


def test_lorenz_rhs_hand_value():
    out = systems.rhs(systems.lorenz63(), [1.0, 1.0, 1.0])
    np.testing.assert_allclose(out, [0.0, 26.0, -5.0 / 3.0], rtol=1e-15)


def test_fitzhugh_nagumo_rhs_hand_value():
    p = systems.fitzhugh_nagumo()
    # v - v^3/3 - w + I and (v + a - b w)/tau at (1, 1)
    np.testing.assert_allclose(systems.rhs(p, [1.0, 1.0]), [1 - 1 / 3 - 1 + 0.5, (1 + 0.7 - 0.8) / 12.5])


def test_rhs_stack_matches_rows(lv, rng):
    z = rng.uniform(0.1, 10, size=(7, 2))
    stacked = systems.rhs(lv, z)
    for row, out in zip(z, stacked):
        np.testing.assert_array_equal(systems.rhs(lv, row), out)


def test_rhs_dimension_mismatch(lv):
    with pytest.raises(ContractError):
        systems.rhs(lv, [1.0, 2.0, 3.0])
    with pytest.raises(ContractError):
        systems.rhs(systems.lorenz63(), [1.0, 2.0])


def test_rhs_does_not_mutate(lv):
    z = np.array([2.0, 3.0])
    systems.rhs(lv, z)
    np.testing.assert_array_equal(z, [2.0, 3.0])


def test_hamiltonian_values(lv):
    assert systems.hamiltonian(lv, [1.0, 1.0]) == 2.0
    expected = 3.0 - 3.0 * math.log(3.0) + 1.5 - 1.5 * math.log(1.5)
    assert systems.hamiltonian(lv, [3.0, 1.5]) == pytest.approx(expected, rel=1e-14)
    assert systems.hamiltonian(lv, [3.0, 1.5]) == pytest.approx(0.595965, abs=5e-7)


@pytest.mark.parametrize("state", [[0.0, 1.0], [1.0, -2.0], [-1.0, -1.0]])
def test_hamiltonian_domain_error(lv, state):
    with pytest.raises(DomainError):
        systems.hamiltonian(lv, state)


def test_hamiltonian_rejects_other_systems():
    with pytest.raises(ContractError):
        systems.hamiltonian(systems.lorenz63(), [1.0, 1.0, 1.0])


def test_equilibrium_examples(lv):
    np.testing.assert_array_equal(systems.equilibrium(lv), [3.0, 1.5])
    np.testing.assert_array_equal(systems.equilibrium(systems.lotka_volterra(2, 2, 2, 2)), [1.0, 1.0])


def test_equilibrium_is_fixed_point_for_random_params(rng):
    for _ in range(10):
        p = systems.lotka_volterra(*rng.uniform(0.1, 5.0, size=4))
        np.testing.assert_allclose(systems.rhs(p, systems.equilibrium(p)), 0.0, atol=1e-12)


@given(st.tuples(positive, positive, positive, positive))
def test_equilibrium_property(coefs):
    p = systems.lotka_volterra(*coefs)
    assert np.max(np.abs(systems.rhs(p, systems.equilibrium(p)))) <= 1e-12 * (1 + max(coefs) ** 2)


@given(st.tuples(positive, positive, positive, positive), positive, positive)
def test_gradient_of_h_orthogonal_to_field(coefs, x, y):
    p = systems.lotka_volterra(*coefs)
    h = 1e-6
    grad = np.array([
        (systems.hamiltonian(p, [x + h * x, y]) - systems.hamiltonian(p, [x - h * x, y])) / (2 * h * x),
        (systems.hamiltonian(p, [x, y + h * y]) - systems.hamiltonian(p, [x, y - h * y])) / (2 * h * y),
    ])
    f = systems.rhs(p, [x, y])
    scale = np.linalg.norm(grad) * np.linalg.norm(f)
    # central-difference round-off: a few ulps of |H| divided by the absolute step
    eps = np.finfo(float).eps
    h0 = abs(systems.hamiltonian(p, [x, y])) + 1.0
    roundoff = 4 * eps * h0 / (2 * h * np.array([x, y]))
    assert abs(grad @ f) <= roundoff @ np.abs(f) + 1e-8 * scale + 1e-12


def test_hamiltonian_constant_on_orbit(lv):
    traj = integrate(systems.SystemField(lv), [1.0, 1.0], np.linspace(0, 10, 11), EVAL_SOLVER)
    h = systems.hamiltonian(lv, traj.states)
    assert np.max(np.abs(h - h[0])) / abs(h[0]) < 10 * 1e-8


@pytest.mark.parametrize("bad", [(1.0, 1.0, 1.0), (1.0, -1.0, 1.0, 1.0), (1.0, 0.0, 1.0, 1.0)])
def test_lv_param_invariants(bad):
    with pytest.raises(ContractError):
        systems.SystemParams(systems.LOTKA_VOLTERRA, bad)


def test_param_lengths_and_dims():
    assert systems.lorenz63().dim == 3
    assert len(systems.fitzhugh_nagumo().values) == 4
    with pytest.raises(ContractError):
        systems.SystemParams(systems.LORENZ63, (1.0, 2.0))
    with pytest.raises(ContractError):
        systems.SystemParams("Duffing", (1.0,))


def test_params_dict_round_trip(lv):
    assert systems.SystemParams.from_dict(systems.LOTKA_VOLTERRA, lv.as_dict()) == lv
    assert lv["gamma"] == 3.0
    with pytest.raises(ContractError):
        systems.SystemParams.from_dict(systems.LOTKA_VOLTERRA, {"alpha": 1.0})
