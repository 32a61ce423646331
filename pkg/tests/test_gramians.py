import math
import warnings

import numpy as np
import pytest

from control_capacity.errors import ContractError, DegenerateNoiseError, StabilityClassError
from control_capacity.gramians import (
    RidgeWarning,
    decompose,
    extract_modes,
    gramians_at,
    gramians_at_infinity,
    regularized_noise,
    tilde_gramians_at,
)
from control_capacity.linalg import finite_gramian
from control_capacity.system import LtiSystem

from conftest import random_stable, random_system


def logdet_ratio(Sigma, W):
    return np.linalg.slogdet(np.eye(len(Sigma)) + np.linalg.solve(Sigma, W))[1]


class TestFiniteBundle:
    def test_scalar(self, scalar):
        b = gramians_at(scalar, 1.0)
        v = (1 - math.exp(-2)) / 2
        assert b.W[0][0, 0] == pytest.approx(v, rel=1e-14)
        assert b.Sigma_eta[0, 0] == pytest.approx(v, rel=1e-14)
        assert b.Sigma_n[0, 0] == pytest.approx(v, rel=1e-14)

    def test_zero_horizon(self, scalar):
        b = gramians_at(scalar, 0.0)
        assert b.W[0][0, 0] == b.Sigma_eta[0, 0] == b.Sigma_n[0, 0] == 0.0

    def test_integrator(self):
        b = gramians_at(LtiSystem(A=[[0.0]], B=[[1.0]], F=[[1.0]]), 2.0)
        assert b.W[0][0, 0] == pytest.approx(2.0)
        assert b.Sigma_nu[0, 0] == pytest.approx(2.0)

    def test_negative_horizon(self, scalar):
        with pytest.raises(ContractError):
            gramians_at(scalar, -1.0)

    def test_total_noise_identity(self, rng):
        s = random_system(rng, 4, 2, q=2)
        b = gramians_at(s, 1.7)
        expected = s.C @ b.Sigma_eta @ s.C.T + b.Sigma_nu
        assert np.max(np.abs(b.Sigma_n - expected)) < 1e-12 * np.max(np.abs(expected))

    def test_sensor_noise_uses_F(self):
        F = np.array([[1.0, 0.0], [1.0, 1.0]])
        s = LtiSystem(A=-np.eye(2), B=np.ones((2, 1)), F=F, sigma_nu=0.5)
        np.testing.assert_allclose(gramians_at(s, 3.0).Sigma_nu, 1.5 * F @ F.T)

    def test_total_noise_loewner_increasing(self, rng):
        s = random_system(rng, 3, 1, q=2)
        Ts = np.linspace(0.1, 5, 25)
        prev = gramians_at(s, Ts[0]).Sigma_n
        for T in Ts[1:]:
            cur = gramians_at(s, T).Sigma_n
            assert np.min(np.linalg.eigvalsh(cur - prev)) >= -1e-12
            prev = cur


class TestInfiniteBundle:
    def test_stable_scalar(self):
        b = gramians_at_infinity(LtiSystem(A=[[-1.0]], B=[[1.0]]))
        assert b.W[0][0, 0] == pytest.approx(0.5)
        assert math.isinf(b.T) and not b.tilde

    def test_anti_stable_scalar(self):
        b = gramians_at_infinity(LtiSystem(A=[[1.0]], B=[[1.0]]))
        assert b.W[0][0, 0] == pytest.approx(0.5)
        assert b.tilde

    def test_mixed_refused(self):
        with pytest.raises(StabilityClassError):
            gramians_at_infinity(LtiSystem(A=np.diag([1.0, -1.0]), B=np.ones((2, 1))))

    def test_model_sensor_with_noise_refused(self):
        with pytest.raises(ContractError):
            gramians_at_infinity(LtiSystem(A=[[-1.0]], B=[[1.0]]), perfect_sensor=False)

    def test_matches_long_horizon(self, rng):
        s = random_system(rng, 4, 1)
        tau = 1.0 / np.min(np.abs(np.linalg.eigvals(s.A).real))
        inf = gramians_at_infinity(s)
        fin = gramians_at(s, 20 * tau)
        for X, W in ((inf.W[0], fin.W[0]), (inf.Sigma_eta, fin.Sigma_eta)):
            assert np.linalg.norm(W - X) < 1e-8 * np.linalg.norm(X)

    def test_convergence_band(self, rng):
        s = random_system(rng, 3, 1)
        tau = 1.0 / np.min(np.abs(np.linalg.eigvals(s.A).real))
        X = gramians_at_infinity(s).W[0]
        for T in (20 * tau, 25 * tau, 40 * tau):
            assert np.linalg.norm(gramians_at(s, T).W[0] - X) <= 1e-6 * np.linalg.norm(X)


@pytest.mark.parametrize("seed", range(4))
def test_reversed_time_gramians_same_information(seed):
    rng = np.random.default_rng(seed)
    n = 3
    A = -random_stable(rng, n)
    s = LtiSystem(A=A, B=rng.normal(size=(n, 2)), G=rng.normal(size=(n, n)), sigma_eta=0.7, sigma_nu=0.0)
    T = 1.3
    fwd = gramians_at(s, T)
    rev = tilde_gramians_at(s, T)
    lhs = logdet_ratio(fwd.Sigma_eta, sum(fwd.W))
    rhs = logdet_ratio(rev.Sigma_eta, sum(rev.W))
    assert abs(lhs - rhs) < 1e-8


class TestRidge:
    def test_no_ridge_when_regular(self, rng):
        b = gramians_at(random_system(rng, 3, 1), 1.0)
        S, ridge = regularized_noise(b)
        assert ridge == 0.0 and S is b.Sigma_n

    def test_ridge_on_singular(self):
        s = LtiSystem(A=-np.eye(2), B=np.ones((2, 1)), G=np.array([[1.0], [0.0]]), sigma_nu=0.0)
        b = gramians_at(s, 1.0)
        with pytest.warns(RidgeWarning):
            S, ridge = regularized_noise(b)
        assert ridge == pytest.approx(1e-12 * np.trace(b.Sigma_n))
        assert np.min(np.linalg.eigvalsh(S)) > 0

    def test_silent(self):
        s = LtiSystem(A=-np.eye(2), B=np.ones((2, 1)), G=np.array([[1.0], [0.0]]), sigma_nu=0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            regularized_noise(gramians_at(s, 1.0), warn=False)

    def test_zero_noise(self):
        s = LtiSystem(A=[[-1.0]], B=[[1.0]], sigma_eta=0.0, sigma_nu=0.0)
        with pytest.raises(DegenerateNoiseError):
            regularized_noise(gramians_at(s, 1.0))


class TestModes:
    def test_single(self):
        Z, w = decompose(np.array([[0.5]]))
        assert Z[0, 0] == pytest.approx(math.sqrt(0.5))

    def test_diagonal(self):
        Z, w = decompose(np.diag([4.0, 1.0]))
        np.testing.assert_allclose(Z, [[2.0, 0.0], [0.0, 1.0]])

    @pytest.mark.parametrize("how", ["eigen", "whitened"])
    def test_reconstruction(self, rng, how):
        M = rng.normal(size=(4, 4))
        W = M @ M.T
        C = rng.normal(size=(3, 4))
        N = np.eye(3) + 0.2 * np.ones((3, 3))
        Z, _ = decompose(W, how, C, N)
        assert np.max(np.abs(Z @ Z.T - W)) < 1e-10 * np.max(np.abs(W))

    def test_whitened_images_orthogonal(self, rng):
        M = rng.normal(size=(3, 3))
        W = M @ M.T
        C = rng.normal(size=(3, 3))
        N = np.diag([1.0, 2.0, 0.5])
        Z, g = decompose(W, "whitened", C, N)
        D = C @ Z
        K = D.T @ np.linalg.solve(N, D)
        np.testing.assert_allclose(K, np.diag(g), atol=1e-10)

    def test_whitened_needs_noise(self):
        with pytest.raises(ContractError):
            decompose(np.eye(2), "whitened")

    def test_extract_per_channel(self, rng):
        s = random_system(rng, 3, 2)
        b = gramians_at(s, 2.0)
        m = extract_modes(b)
        assert len(m) == 6 and m.groups == ((0,), (1,))
        for g in range(2):
            idx = m.channel_slice(g)
            Z = m.Z[:, idx]
            assert np.max(np.abs(Z @ Z.T - b.W[g])) < 1e-10 * np.max(np.abs(b.W[g]))
            V = m.V[:, idx]
            np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-10)
            np.testing.assert_allclose(m.omega[idx], np.linalg.eigvalsh(b.W[g])[::-1], rtol=1e-9)

    def test_negligible_flag(self):
        s = LtiSystem(A=np.diag([-1.0, -2.0]), B=[[1.0], [0.0]])
        m = extract_modes(gramians_at(s, 1.0))
        assert m.negligible.tolist() == [False, True]
        assert len(m) == 2
