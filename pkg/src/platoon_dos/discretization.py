"""Exact discretization of the delayed sampled-data loop and its lifting.

Over one sampling interval [s_k, s_k+1) the applied input is u_{k-p}
until s_k + tau_bar and u_{k-p+1} afterwards, so

    x_{k+1} = E x_k + Y1(tau_bar) u_{k-p+1} + Y0(tau_bar) u_{k-p}
              + Phi (B2 y_prev + B3 d)

with E = exp(A0 h), Phi = integral_0^h exp(A0 s) ds,
Y1 = integral_0^{h - tau_bar} exp(A0 s) ds B1 and Y0 = Phi B1 - Y1.

The augmented state is X = [x; u_{k-1}; ...; u_{k-p}] (dimension 3 + p).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .linalg import JordanData, jordan_platoon
from .model import ErrorState, PlatoonParams, continuous_matrices


def _check_tau_bar(tau_bar: float, h: float):
    if not -1e-15 <= tau_bar <= h + 1e-15:
        raise DomainError(f"tau_bar must lie in [0, h={h}], got {tau_bar}")


@dataclass
class AugmentedModel:
    """Delay-independent data of the lifted model for one delay multiplicity p."""

    params: PlatoonParams
    p: int
    jordan: JordanData = field(init=False)
    A0: np.ndarray = field(init=False)
    B1: np.ndarray = field(init=False)
    B2: np.ndarray = field(init=False)
    B3: np.ndarray = field(init=False)
    C: np.ndarray = field(init=False)
    E: np.ndarray = field(init=False)
    Phi: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.p < 1:
            raise DomainError(f"delay multiplicity p must be >= 1, got {self.p}")
        self.A0, self.B1, self.B2, self.B3, self.C = continuous_matrices(self.params)
        self.jordan = jordan_platoon(self.A0)
        h = self.params.h
        self.E = self.jordan.expm(h)
        self.Phi = self.jordan.expm_integral(h)

    @property
    def n(self) -> int:
        return 3 + self.p

    def integral(self, tau_bar: float) -> np.ndarray:
        """Integral of exp(A0 s) over [0, h - tau_bar]."""
        _check_tau_bar(tau_bar, self.params.h)
        return self.jordan.expm_integral(max(self.params.h - tau_bar, 0.0))

    def input_terms(self, tau_bar: float) -> tuple[np.ndarray, np.ndarray]:
        """(Y1, Y0): weights of u_{k-p+1} and u_{k-p}."""
        Y1 = self.integral(tau_bar) @ self.B1
        return Y1, self.Phi @ self.B1 - Y1

    def lift(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(A_bar, B_bar) with the delay-dependent integral replaced by F.

        Any F (the true integral or a polytope vertex) is placed in the same
        block layout, which keeps the lifting affine in F.
        """
        p, n = self.p, self.n
        Y1 = F @ self.B1
        Y0 = self.Phi @ self.B1 - Y1
        A = np.zeros((n, n))
        B = np.zeros((n, 1))
        A[:3, :3] = self.E
        A[:3, n - 1 : n] = Y0
        if p == 1:
            B[:3] = Y1
        else:
            A[:3, n - 2 : n - 1] = Y1
        B[3, 0] = 1.0
        for r in range(1, p):
            A[3 + r, 2 + r] = 1.0
        return A, B

    def matrices(self, tau_bar: float) -> tuple[np.ndarray, np.ndarray]:
        return self.lift(self.integral(tau_bar))

    def closed_loop(self, tau_bar: float, K) -> np.ndarray:
        """A_bar - B_bar [K 0]."""
        A, B = self.matrices(tau_bar)
        return A - B @ self.gain_row(K)

    def gain_row(self, K) -> np.ndarray:
        Kb = np.zeros((1, self.n))
        Kb[0, :3] = np.asarray(K, dtype=float).ravel()
        return Kb

    def output_row(self) -> np.ndarray:
        """C padded with zeros over the past-input coordinates."""
        Cb = np.zeros((1, self.n))
        Cb[0, :3] = self.C.ravel()
        return Cb

    def LG(self) -> tuple[np.ndarray, np.ndarray]:
        L = np.zeros((self.n, 1))
        G = np.zeros((self.n, 2))
        L[:3] = self.Phi @ self.B2
        G[:3] = self.Phi @ self.B3
        return L, G


def build_augmented(tau_bar: float, p: int, params: PlatoonParams) -> tuple[np.ndarray, np.ndarray]:
    return AugmentedModel(params, p).matrices(tau_bar)


def build_LG(params: PlatoonParams, p: int) -> tuple[np.ndarray, np.ndarray]:
    return AugmentedModel(params, p).LG()


def discrete_step(
    x: ErrorState | np.ndarray,
    u_recent: float,
    u_old: float,
    y_prev: float,
    d_bar,
    tau_bar: float,
    model: AugmentedModel | PlatoonParams,
):
    """One exact sampling step. ``u_recent`` is u_{k-p+1}, ``u_old`` is u_{k-p}."""
    if isinstance(model, PlatoonParams):
        model = AugmentedModel(model, 1)
    as_state = isinstance(x, ErrorState)
    xv = x.as_array() if as_state else np.asarray(x, dtype=float).ravel()
    Y1, Y0 = model.input_terms(tau_bar)
    d = np.asarray(d_bar, dtype=float).reshape(2)
    nxt = (
        model.E @ xv
        + Y1.ravel() * u_recent
        + Y0.ravel() * u_old
        + model.Phi @ (model.B2.ravel() * y_prev + model.B3 @ d)
    )
    return ErrorState.from_array(nxt) if as_state else nxt
