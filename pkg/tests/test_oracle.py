import math

import numpy as np
import pytest
from scipy.integrate import quad

from control_capacity.errors import ContractError
from control_capacity.oracle import discretize, oracle_capacity, parallel_water_fill
from control_capacity.solver import NO_HALF_FACTOR, capacity
from control_capacity.system import LtiSystem

from conftest import random_system


def test_integrator_hold():
    ch = discretize(LtiSystem(A=[[0.0]], B=[[1.0]]), 1.0, 2)
    np.testing.assert_allclose(ch.H, [[0.5, 0.5]], atol=1e-15)
    assert ch.dt == 0.5


def test_first_order_hold_against_quadrature():
    T, N = 2.0, 8
    ch = discretize(LtiSystem(A=[[-1.0]], B=[[1.0]]), T, N)
    dt = T / N
    for k in range(N):
        closed = math.exp(-(T - (k + 1) * dt)) * (1 - math.exp(-dt))
        numeric, _ = quad(lambda t: math.exp(-(T - t)), k * dt, (k + 1) * dt)
        assert ch.H[0, k] == pytest.approx(closed, rel=1e-12)
        assert ch.H[0, k] == pytest.approx(numeric, rel=1e-10)


def test_stacked_shape(rng):
    ch = discretize(random_system(rng, 3, 2, q=2), 1.0, 5)
    assert ch.H.shape == (2, 10)
    assert np.all(np.isfinite(ch.H))
    assert np.min(np.linalg.eigvalsh(ch.noise)) > 0


def test_preconditions(scalar):
    with pytest.raises(ContractError):
        discretize(scalar, 1.0, 0)
    with pytest.raises(ContractError):
        discretize(scalar, 0.0, 10)


def test_zero_power(scalar):
    assert oracle_capacity(discretize(scalar, 1.0, 10), 0.0).nats == 0.0


def test_scalar_benchmark(scalar):
    r = oracle_capacity(discretize(scalar, 1.0, 1000), 1.0, half_factor=False)
    assert abs(r.nats - math.log(2)) < 1e-3


def test_water_fill_closed_form():
    np.testing.assert_allclose(parallel_water_fill([1.0, 0.25], 1.0), [1.0, 0.0])
    np.testing.assert_allclose(parallel_water_fill([0.25, 1.0], 4.0), [0.5, 3.5])
    np.testing.assert_array_equal(parallel_water_fill([1.0, 0.0], 2.0), [2.0, 0.0])


@pytest.mark.parametrize("seed", range(3))
def test_matches_continuous_solver(seed):
    rng = np.random.default_rng(100 + seed)
    s = random_system(rng, 3, int(rng.integers(1, 3)), q=2)
    T, P = 2.0, 3.0
    cont = capacity(s, T, P).value_nats
    orc = oracle_capacity(discretize(s, T, 1000), P).nats
    assert abs(cont - orc) / cont < 1e-3


def test_refinement_monotone_and_convergent(rng):
    s = random_system(rng, 3, 1, q=2)
    T, P = 1.5, 2.0
    cont = capacity(s, T, P).value_nats
    vals = [oracle_capacity(discretize(s, T, N), P).nats for N in (50, 100, 200, 400)]
    assert all(b >= a - 1e-6 for a, b in zip(vals, vals[1:]))
    errs = [cont - v for v in vals]
    assert all(e > 0 for e in errs)
    # piecewise-constant controls lose O(dt^2) against the smooth optimum
    for a, b in zip(errs, errs[1:]):
        assert 3.5 < a / b < 4.5


def test_conventions_consistent(scalar):
    ch = discretize(scalar, 1.0, 200)
    half = oracle_capacity(ch, 2.0).nats
    full = oracle_capacity(ch, 2.0, half_factor=False).nats
    assert full == pytest.approx(2 * half)
    assert full == pytest.approx(capacity(scalar, 1.0, 2.0, NO_HALF_FACTOR).value_nats, rel=1e-4)
