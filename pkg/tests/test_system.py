import json
import math

import numpy as np
import pytest

from control_capacity.errors import ContractError, StabilityClassError
from control_capacity.system import (
    ANTI_STABLE,
    MIXED,
    STABLE,
    LtiSystem,
    PoleZeroSpec,
    frequency_response,
    from_pole_zero,
    load_system,
    scale_damping,
    similarity_transform,
    stability_class,
    system_from_dict,
    time_constant,
    validate,
)


def test_defaults_are_identity_maps():
    s = LtiSystem(A=-np.eye(3), B=np.ones((3, 1)))
    np.testing.assert_array_equal(s.C, np.eye(3))
    np.testing.assert_array_equal(s.G, np.eye(3))
    np.testing.assert_array_equal(s.F, np.eye(3))
    assert (s.n, s.p, s.q) == (3, 1, 3)
    assert s.sigma_eta == s.sigma_nu == 1.0


def test_arrays_are_read_only():
    s = LtiSystem(A=[[-1.0]], B=[[1.0]])
    with pytest.raises(ValueError):
        s.A[0, 0] = 2.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(A=np.ones((2, 3)), B=np.ones((2, 1))),
        dict(A=-np.eye(2), B=np.ones((3, 1))),
        dict(A=-np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 3))),
        dict(A=-np.eye(2), B=np.ones((2, 1)), G=np.ones((3, 3))),
        dict(A=-np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), F=np.eye(2)),
        dict(A=-np.eye(2), B=np.ones((2, 1)), sigma_eta=-1.0),
        dict(A=[[np.nan]], B=[[1.0]]),
    ],
)
def test_invalid_systems(kwargs):
    with pytest.raises(ContractError):
        LtiSystem(**kwargs)


class TestValidate:
    def test_scalar(self):
        v = validate(LtiSystem(A=[[-1.0]], B=[[1.0]], C=[[1.0]], G=[[1.0]]))
        assert v.stability == STABLE
        assert v.controllable == (True,)
        assert v.tau == pytest.approx(1.0)

    def test_uncontrollable_flag(self):
        v = validate(LtiSystem(A=np.diag([-1.0, -2.0]), B=[[1.0], [0.0]]))
        assert v.controllable == (False,)
        assert not v.fully_controllable

    def test_mixed(self):
        assert validate(LtiSystem(A=np.diag([1.0, -1.0]), B=np.ones((2, 1)))).stability == MIXED

    def test_idempotent(self):
        v = validate(LtiSystem(A=[[-1.0]], B=[[1.0]]))
        assert validate(v) is v

    def test_rejects_other_types(self):
        with pytest.raises(ContractError):
            validate("not a system")


def test_stability_classes():
    assert stability_class(-np.eye(2)) == STABLE
    assert stability_class(np.eye(2)) == ANTI_STABLE
    assert stability_class(np.array([[0.0, 1.0], [-1.0, 0.0]])) == MIXED


class TestTimeConstant:
    def test_values(self):
        assert time_constant(LtiSystem(A=[[-1.0]], B=[[1.0]])) == pytest.approx(1.0)
        A = np.array([[-1 / 3, 1.0], [-1.0, -1 / 3]])
        assert time_constant(LtiSystem(A=A, B=np.ones((2, 1)))) == pytest.approx(3.0)
        assert time_constant(LtiSystem(A=np.diag([-0.5, -4.0]), B=np.ones((2, 1)))) == pytest.approx(2.0)

    def test_marginal(self):
        with pytest.raises(StabilityClassError):
            time_constant(LtiSystem(A=[[0.0]], B=[[1.0]]))


class TestScaleDamping:
    def test_scalar(self):
        s = LtiSystem(A=[[-1.0]], B=[[1.0]])
        assert scale_damping(s, 0.5).A[0, 0] == pytest.approx(-2.0)
        assert scale_damping(s, 2.0).A[0, 0] == pytest.approx(-0.5)

    def test_identity_at_current_tau(self, rng):
        s = LtiSystem(A=-np.eye(3) + 0.3 * rng.normal(size=(3, 3)), B=np.ones((3, 1)))
        np.testing.assert_allclose(scale_damping(s, time_constant(s)).A, s.A, rtol=1e-15)

    def test_other_matrices_unchanged(self, rng):
        s = LtiSystem(A=np.diag([-1.0, -3.0]), B=[[1.0], [2.0]], G=rng.normal(size=(2, 2)))
        t = scale_damping(s, 0.6)
        assert time_constant(t) == pytest.approx(0.6)
        np.testing.assert_array_equal(t.B, s.B)
        np.testing.assert_array_equal(t.G, s.G)

    def test_bad_target(self):
        with pytest.raises(ContractError):
            scale_damping(LtiSystem(A=[[-1.0]], B=[[1.0]]), 0.0)


class TestPoleZero:
    def test_first_order(self):
        s = from_pole_zero(PoleZeroSpec(poles=[-1]))
        np.testing.assert_array_equal(s.A, [[-1.0]])
        np.testing.assert_array_equal(s.B, [[1.0]])

    def test_transfer_function(self):
        spec = PoleZeroSpec(poles=[-1 + 1j, -1 - 1j], zeros=[0])
        s = from_pole_zero(spec, sensor="transfer")
        for x in (1j, 0.5 + 2j, -0.3):
            assert frequency_response(s, x)[0, 0] == pytest.approx(x / (x * x + 2 * x + 2), abs=1e-12)

    def test_gain(self):
        spec = PoleZeroSpec(poles=[-2, -3], zeros=[-1], gain=4.0)
        s = from_pole_zero(spec, sensor="transfer")
        x = 0.7j
        assert frequency_response(s, x)[0, 0] == pytest.approx(4 * (x + 1) / ((x + 2) * (x + 3)), abs=1e-12)

    def test_order_six_eigenvalues_and_tau(self):
        poles = [-1 / 3 + 1j, -1 / 3 - 1j, -1 + 2j, -1 - 2j, -2 + 0.5j, -2 - 0.5j]
        s = from_pole_zero(PoleZeroSpec(poles=poles, zeros=[0]))
        eig = np.sort_complex(np.linalg.eigvals(s.A))
        np.testing.assert_allclose(eig, np.sort_complex(np.array(poles)), atol=1e-9)
        assert time_constant(s) == pytest.approx(3.0)
        assert validate(s).controllable == (True,)

    def test_conjugation_violated(self):
        with pytest.raises(ContractError):
            from_pole_zero(PoleZeroSpec(poles=[-1 + 1j, -2]))

    def test_too_many_zeros(self):
        with pytest.raises(ContractError):
            from_pole_zero(PoleZeroSpec(poles=[-1], zeros=[-2]))

    def test_imaginary_axis_pole(self):
        with pytest.raises(ContractError):
            from_pole_zero(PoleZeroSpec(poles=[1j, -1j]))

    def test_overrides(self):
        s = from_pole_zero(PoleZeroSpec(poles=[-1, -2]), sigma_nu=0.0, G=np.diag([1.0, 2.0]))
        assert s.sigma_nu == 0.0
        np.testing.assert_array_equal(s.G, np.diag([1.0, 2.0]))


def test_similarity_transform_preserves_response(rng):
    s = LtiSystem(A=-np.eye(3) + 0.2 * rng.normal(size=(3, 3)), B=rng.normal(size=(3, 2)), C=rng.normal(size=(2, 3)))
    S = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    t = similarity_transform(s, S)
    np.testing.assert_allclose(frequency_response(t, 0.4j), frequency_response(s, 0.4j), atol=1e-12)


class TestConfig:
    def test_matrices(self):
        s = system_from_dict({"A": [[-1]], "B": [[1]], "sigma_nu": 0})
        assert s.sigma_nu == 0.0

    def test_poles(self):
        s = system_from_dict({"poles": [[-1, 1], [-1, -1]], "zeros": [[0, 0]], "sensor": "transfer"})
        assert frequency_response(s, 1j)[0, 0] == pytest.approx(1j / (1j * 1j + 2j + 2))

    def test_tau(self):
        s = system_from_dict({"poles": [[-1, 0], [-2, 0]], "tau": 0.5})
        assert time_constant(s) == pytest.approx(0.5)

    def test_missing_keys(self):
        with pytest.raises(ContractError):
            system_from_dict({"B": [[1]]})

    def test_load(self, tmp_path):
        path = tmp_path / "sys.json"
        path.write_text(json.dumps({"A": [[-2]], "B": [[1]], "sigma_eta": 0.5}))
        s = load_system(path)
        assert s.A[0, 0] == -2.0 and s.sigma_eta == 0.5

    def test_round_trip(self):
        s = LtiSystem(A=[[-1.0, 0.5], [0.0, -2.0]], B=[[1.0], [1.0]], sigma_eta=0.3)
        t = system_from_dict(s.to_dict())
        for name in "ABCGF":
            np.testing.assert_array_equal(getattr(t, name), getattr(s, name))
        assert math.isclose(t.sigma_eta, 0.3)
