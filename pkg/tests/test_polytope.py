import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoon_dos.discretization import AugmentedModel
from platoon_dos.errors import DomainError
from platoon_dos.linalg import expm_integral
from platoon_dos.model import PlatoonParams, continuous_matrices
from platoon_dos.polytope import coefficient_bounds, decompose_integral, enumerate_vertices


@pytest.fixture(scope="module")
def dec():
    return decompose_integral(PlatoonParams())


def test_reconstruction_on_dense_grid(dec):
    A0 = continuous_matrices(PlatoonParams())[0]
    worst = max(np.abs(dec.reconstruct(t) - expm_integral(A0, 0.5 - t)).max() for t in np.linspace(0, 0.5, 1000))
    assert worst <= 1e-10


def test_bounds_true_rate(dec):
    b = coefficient_bounds(dec, 0.0, 0.5)
    assert b[0] == (0.0, 0.5)
    assert b[1] == (0.0, 0.25)
    assert b[2][0] == pytest.approx(np.exp(-0.25))
    assert b[2][1] == 1.0


def test_bounds_with_rate_override_cover_both_rates(dec):
    b = coefficient_bounds(dec, 0.0, 0.5, rate=-2.0)
    assert b[2][0] == pytest.approx(np.exp(-1.0), abs=1e-12)
    assert b[2][1] == 1.0


def test_bounds_domain(dec):
    with pytest.raises(DomainError):
        coefficient_bounds(dec, 0.3, 0.2)
    with pytest.raises(DomainError):
        coefficient_bounds(dec, 0.0, 0.6)


@settings(max_examples=100, deadline=None)
@given(t=st.floats(0.0, 0.5))
def test_true_matrices_lie_in_vertex_hull(t):
    params = PlatoonParams()
    dec = decompose_integral(params)
    bounds = coefficient_bounds(dec, 0.0, 0.5)
    vs = enumerate_vertices(dec, bounds, 2, params)
    q = dec.coefficients(t)
    assert vs.contains(q)
    # multilinear (box) barycentric weights in the itertools.product order
    lam = [(q[n] - lo) / (hi - lo) for n, (lo, hi) in enumerate(bounds)]
    w = []
    for eta in vs.etas:
        wk = 1.0
        for n, (lo, hi) in enumerate(bounds):
            wk *= (1 - lam[n]) if eta[n] == lo else lam[n]
        w.append(wk)
    w = np.array(w)
    assert w.min() >= -1e-12 and w.sum() == pytest.approx(1.0)
    A, B = AugmentedModel(params, 2).matrices(t)
    assert np.allclose(np.tensordot(w, np.array(vs.S_M), 1), A, atol=1e-12)
    assert np.allclose(np.tensordot(w, np.array(vs.S_H), 1), B, atol=1e-12)


def test_vertex_count_and_degenerate_interval(dec):
    params = PlatoonParams()
    vs = enumerate_vertices(dec, coefficient_bounds(dec, 0.0, 0.5), 3, params)
    assert len(vs) == 8
    point = enumerate_vertices(dec, coefficient_bounds(dec, 0.2, 0.2), 3, params)
    A, _ = AugmentedModel(params, 3).matrices(0.2)
    for M in point.S_M:
        assert np.allclose(M, A, atol=1e-12)
