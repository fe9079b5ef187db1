"""Polytopic overapproximation of the delay-dependent input integral.

In Jordan coordinates the integral over [0, L], L = h - tau_bar, is

    Q [[L, L^2/2, 0], [0, L, 0], [0, 0, (exp(lam L) - 1)/lam]] Q^-1
      = F0 + q1 F1 + q2 F2 + q3 F3,   q = (L, L^2, exp(lam L)).

Bounding each q_n over the delay interval gives a box; its 8 corners are
the vertices. The box ignores that all q_n depend on one scalar, so it is
conservative.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .discretization import AugmentedModel
from .errors import DomainError
from .linalg import jordan_platoon
from .model import PlatoonParams, continuous_matrices

NU = 3


@dataclass(frozen=True)
class Decomposition:
    F0: np.ndarray
    F: tuple[np.ndarray, ...]
    rate: float
    h: float

    def coefficients(self, tau_bar: float) -> np.ndarray:
        L = self.h - tau_bar
        return np.array([L, L * L, np.exp(self.rate * L)])

    def evaluate(self, eta) -> np.ndarray:
        return self.F0 + sum(e * Fn for e, Fn in zip(eta, self.F))

    def reconstruct(self, tau_bar: float) -> np.ndarray:
        return self.evaluate(self.coefficients(tau_bar))


def decompose_integral(params: PlatoonParams) -> Decomposition:
    A0 = continuous_matrices(params)[0]
    jd = jordan_platoon(A0)
    lam = jd.rate

    def conj(core):
        return jd.Q @ np.asarray(core, dtype=float) @ jd.Qinv

    F0 = conj(np.diag([0.0, 0.0, -1.0 / lam]))
    F1 = conj(np.diag([1.0, 1.0, 0.0]))
    F2 = conj([[0.0, 0.5, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    F3 = conj(np.diag([0.0, 0.0, 1.0 / lam]))
    return Decomposition(F0=F0, F=(F1, F2, F3), rate=lam, h=params.h)


def coefficient_bounds(
    dec: Decomposition, tau_min: float, tau_max: float, rate: float | None = None
) -> list[tuple[float, float]]:
    """Exact interval image of each q_n over [tau_min, tau_max].

    Every q_n is monotone in tau_bar, so the extremes sit at the endpoints.
    ``rate`` widens the q3 interval to also cover exp(rate L); the hull
    with the true rate keeps the box sound.
    """
    if not 0 <= tau_min <= tau_max <= dec.h + 1e-15:
        raise DomainError(f"need 0 <= tau_min <= tau_max <= h, got [{tau_min}, {tau_max}]")
    q_lo = dec.coefficients(tau_max)
    q_hi = dec.coefficients(tau_min)
    bounds = []
    for n in range(NU):
        a, b = q_lo[n], q_hi[n]
        bounds.append((min(a, b), max(a, b)))
    if rate is not None:
        ends = [np.exp(r * (dec.h - t)) for r in (rate, dec.rate) for t in (tau_min, tau_max)]
        bounds[2] = (min(ends), max(ends))
    return bounds


@dataclass(frozen=True)
class VertexSet:
    bounds: tuple[tuple[float, float], ...]
    etas: np.ndarray
    vertices: tuple[np.ndarray, ...]
    S_M: tuple[np.ndarray, ...]
    S_H: tuple[np.ndarray, ...]
    p: int

    def __len__(self):
        return len(self.vertices)

    def contains(self, q, tol: float = 1e-12) -> bool:
        return all(lo - tol <= v <= hi + tol for v, (lo, hi) in zip(q, self.bounds))


def enumerate_vertices(dec: Decomposition, bounds, p: int, params: PlatoonParams) -> VertexSet:
    """All 2^3 corner matrices and their lifted (S_M, S_H) pairs.

    One corner assignment drives both S_M and S_H, as one delay value
    produces both matrices.
    """
    model = AugmentedModel(params, p)
    etas = np.array(list(itertools.product(*bounds)), dtype=float)
    verts, SM, SH = [], [], []
    for eta in etas:
        V = dec.evaluate(eta)
        A, B = model.lift(V)
        verts.append(V)
        SM.append(A)
        SH.append(B)
    return VertexSet(tuple(tuple(b) for b in bounds), etas, tuple(verts), tuple(SM), tuple(SH), p)
