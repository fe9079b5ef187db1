import numpy as np
import pytest

from platoon_dos.discretization import AugmentedModel, build_augmented, build_LG, discrete_step
from platoon_dos.errors import DomainError
from platoon_dos.model import ErrorState, PlatoonParams, continuous_matrices

from conftest import rk4


def ode_step(x, u_recent, u_old, y_prev, d, tau_bar, params, n=400):
    """Continuous oracle: RK4 over the two ZOH pieces of one sampling interval."""
    A0, B1, B2, B3, _ = continuous_matrices(params)

    def f(u):
        w = B1.ravel() * u + B2.ravel() * y_prev + B3 @ d
        return lambda s, z: A0 @ z + w

    x = rk4(f(u_old), x, 0.0, tau_bar, n) if tau_bar > 0 else np.array(x, dtype=float)
    return rk4(f(u_recent), x, tau_bar, params.h, n) if tau_bar < params.h else x


def test_discrete_step_matches_ode_random_cases():
    params = PlatoonParams()
    model = AugmentedModel(params, 1)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(size=3)
        u1, u0, y = rng.normal(size=3)
        d = rng.normal(size=2)
        tb = rng.uniform(0, params.h)
        got = discrete_step(x, u1, u0, y, d, tb, model)
        worst = max(worst, np.abs(got - ode_step(x, u1, u0, y, d, tb, params)).max())
    assert worst <= 1e-8


def test_discrete_step_accepts_error_state():
    params = PlatoonParams()
    out = discrete_step(ErrorState(0.1, 0.0, 0.0), 0.0, 0.0, 0.0, [0, 0], 0.2, params)
    assert isinstance(out, ErrorState)


def test_tau_bar_domain():
    with pytest.raises(DomainError):
        build_augmented(0.6, 2, PlatoonParams())
    with pytest.raises(DomainError):
        AugmentedModel(PlatoonParams(), 0)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_lifted_model_matches_delayed_recursion(p):
    """Iterating the lifted matrices equals applying the delayed inputs by hand."""
    params = PlatoonParams()
    model = AugmentedModel(params, p)
    tb = 0.17
    A, B = model.matrices(tb)
    rng = np.random.default_rng(p)
    u = rng.normal(size=30)
    x = rng.normal(size=3)
    X = np.concatenate([x, np.zeros(p)])
    for k in range(30):
        X = A @ X + B.ravel() * u[k]
        u_recent = u[k - p + 1] if k - p + 1 >= 0 else 0.0
        u_old = u[k - p] if k - p >= 0 else 0.0
        x = discrete_step(x, u_recent, u_old, 0.0, [0, 0], tb, model)
        assert np.allclose(X[:3], x, atol=1e-12)
        expected_hist = [u[k - j] if k - j >= 0 else 0.0 for j in range(p)]
        assert np.allclose(X[3:], expected_hist)


def test_lifted_shapes_and_coupling():
    params = PlatoonParams()
    A, B = build_augmented(0.0, 3, params)
    assert A.shape == (6, 6) and B.shape == (6, 1)
    L, G = build_LG(params, 3)
    assert L.shape == (6, 1) and G.shape == (6, 2)
    assert not L[3:].any() and not G[3:].any()


def test_delay_endpoints_shift_input_weight():
    model = AugmentedModel(PlatoonParams(), 1)
    Y1, Y0 = model.input_terms(0.0)
    assert np.allclose(Y0, 0.0)
    Y1, Y0 = model.input_terms(model.params.h)
    assert np.allclose(Y1, 0.0)
    assert np.allclose(Y0, model.Phi @ model.B1)
