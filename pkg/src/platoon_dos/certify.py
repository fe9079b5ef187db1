"""A-posteriori verification of synthesized gains.

Everything here uses the exact delay-dependent matrices from
``discretization``, never the polytope vertices, so a pass is an
independent check on the solver and on the overapproximation. Checks on a
grid are sampled certification: they cannot prove the continuum claim.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .discretization import AugmentedModel
from .errors import DimensionError, UndefinedGainError
from .linalg import TOL, min_eig, spectral_radius
from .model import PlatoonParams
from .polytope import VertexSet

CHANNELS = ("predecessor", "disturbance")


@dataclass
class Certificate:
    """Quadratic Lyapunov certificate V(X) = X' P X with decay mu.

    P is rescaled to unit spectral norm on construction; the decrease
    inequality is homogeneous in P, and the normalization makes the
    absolute tolerances meaningful.
    """

    P: np.ndarray
    mu: float
    K: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionError(f"P must be square, got {P.shape}")
        P = 0.5 * (P + P.T)
        top = np.linalg.eigvalsh(P)
        if not top[0] > 0:
            raise ValueError(f"P must be positive definite (min eig {top[0]:.3g})")
        self.P = P / top[-1]
        self.K = np.asarray(self.K, dtype=float).reshape(1, 3)

    @property
    def p(self) -> int:
        return self.P.shape[0] - 3

    @classmethod
    def from_result(cls, result, mu: float, meta: dict | None = None) -> "Certificate":
        return cls(result.P, mu, result.K, dict(meta or {}))


def default_grid(h: float, n: int = 101, tau_min: float = 0.0, tau_max: float | None = None) -> np.ndarray:
    return np.linspace(tau_min, h if tau_max is None else tau_max, n)


def lyapunov_margin(P: np.ndarray, D: np.ndarray, mu: float) -> float:
    return min_eig((1 - mu) * P - D.T @ P @ D)


@dataclass
class LyapunovReport:
    grid: np.ndarray
    margins: np.ndarray
    tol: float
    mu: float

    @property
    def worst_index(self) -> int:
        return int(np.argmin(self.margins))

    @property
    def worst_tau(self) -> float:
        return float(self.grid[self.worst_index])

    @property
    def worst_margin(self) -> float:
        return float(self.margins[self.worst_index])

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margins >= -self.tol))

    def to_dict(self) -> dict:
        return {
            "kind": "sampled lyapunov certification",
            "verdict": "pass" if self.passed else "fail",
            "mu": self.mu,
            "tolerance": self.tol,
            "worst_tau_bar": self.worst_tau,
            "worst_margin": self.worst_margin,
            "points": [{"tau_bar": float(t), "margin": float(m)} for t, m in zip(self.grid, self.margins)],
        }


def check_lyapunov_grid(cert: Certificate, grid, p: int, params: PlatoonParams, tol: float = TOL.lyapunov) -> LyapunovReport:
    """Min eigenvalue of (1 - mu) P - D' P D at every grid delay."""
    if cert.P.shape[0] != 3 + p:
        raise DimensionError(f"certificate is for p={cert.p}, asked p={p}")
    model = AugmentedModel(params, p)
    grid = np.asarray(grid, dtype=float).ravel()
    margins = np.array([lyapunov_margin(cert.P, model.closed_loop(t, cert.K), cert.mu) for t in grid])
    return LyapunovReport(grid, margins, tol, cert.mu)


def refinement_check(cert: Certificate, p: int, params: PlatoonParams, n: int = 101, rel: float = 0.1) -> dict:
    """Compare the worst margin on a grid and on its doubled refinement."""
    coarse = check_lyapunov_grid(cert, default_grid(params.h, n), p, params)
    fine = check_lyapunov_grid(cert, default_grid(params.h, 2 * n - 1), p, params)
    a, b = coarse.worst_margin, fine.worst_margin
    change = abs(a - b) / max(abs(a), 1e-300)
    return {"coarse": a, "fine": b, "relative_change": change, "stable": change < rel}


@dataclass
class RadiusReport:
    grid: np.ndarray
    radii: np.ndarray

    @property
    def max_radius(self) -> float:
        return float(self.radii.max())

    @property
    def stable(self) -> bool:
        return bool(np.all(self.radii < 1.0))

    def to_dict(self) -> dict:
        return {
            "max_radius": self.max_radius,
            "stable": self.stable,
            "points": [{"tau_bar": float(t), "radius": float(r)} for t, r in zip(self.grid, self.radii)],
        }


def spectral_radius_scan(K, grid, p: int, params: PlatoonParams) -> RadiusReport:
    model = AugmentedModel(params, p)
    grid = np.asarray(grid, dtype=float).ravel()
    return RadiusReport(grid, np.array([spectral_radius(model.closed_loop(t, K)) for t in grid]))


def default_frequencies(n: int = 4000) -> np.ndarray:
    """Per-sample frequencies on [0, pi], log-dense towards DC."""
    return np.unique(np.concatenate([[0.0], np.logspace(-7, np.log10(np.pi), n), np.linspace(0, np.pi, n // 4)]))


@dataclass
class GainReport:
    channel: str
    peak: float
    omega_peak: float
    tau_bar: float
    level: float | None = None

    @property
    def passed(self) -> bool | None:
        return None if self.level is None else bool(self.peak <= self.level)

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "peak": self.peak,
            "omega_peak": self.omega_peak,
            "tau_bar": self.tau_bar,
            "level": self.level,
            "passed": self.passed,
        }


def frequency_response(D: np.ndarray, M: np.ndarray, C: np.ndarray, omegas) -> np.ndarray:
    """Largest singular value of C (zI - D)^-1 M at z = exp(j omega)."""
    n = D.shape[0]
    I = np.eye(n)
    out = np.empty(len(omegas))
    for k, w in enumerate(omegas):
        H = C @ np.linalg.solve(np.exp(1j * w) * I - D, M)
        out[k] = np.linalg.norm(H, 2)
    return out


def l2_gain_estimate(
    K,
    p: int,
    params: PlatoonParams,
    channel: str = "predecessor",
    omegas=None,
    tau_bar: float = 0.0,
    level: float | None = None,
    coupling: np.ndarray | None = None,
) -> GainReport:
    """Peak gain of one LTI delay slice from y_{i-1} (or d) to y_i.

    ``level`` sets the pass threshold (sigma for the predecessor channel).
    ``coupling`` overrides the input matrix, e.g. to zero it.
    """
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    model = AugmentedModel(params, p)
    D = model.closed_loop(tau_bar, K)
    rho = spectral_radius(D)
    if rho >= 1.0:
        raise UndefinedGainError(f"closed loop at tau_bar={tau_bar} has spectral radius {rho:.6g} >= 1")
    L, G = model.LG()
    M = coupling if coupling is not None else (L if channel == "predecessor" else G)
    omegas = default_frequencies() if omegas is None else np.asarray(omegas, dtype=float)
    mag = frequency_response(D, M, model.output_row(), omegas)
    k = int(np.argmax(mag))
    return GainReport(channel, float(mag[k]), float(omegas[k]), float(tau_bar), level)


# --------------------------------------------------------------------------
# properties of the LMI derivation, checked at a solution
# --------------------------------------------------------------------------


def congruence_gap(W: np.ndarray, Z: np.ndarray) -> float:
    """Min eigenvalue of Z' W^-1 Z - (Z' + Z - W), evaluated without factoring."""
    W = np.asarray(W, dtype=float)
    Z = np.asarray(Z, dtype=float)
    lhs = Z.T @ np.linalg.solve(W, Z)
    return min_eig(lhs - (Z.T + Z - W))


def convex_combination_margins(
    cert: Certificate, vertices: VertexSet, n_samples: int = 50, seed: int = 0
) -> np.ndarray:
    """Stability block inequality at random convex combinations of the vertices.

    For weights w on the simplex, with M = sum w_j S_M,j and H = sum w_j S_H,j,
    returns min eig of [[(1-mu) P, (M - H K)' P], [P (M - H K), P]] per sample.
    """
    rng = np.random.default_rng(seed)
    n = cert.P.shape[0]
    Kb = np.zeros((1, n))
    Kb[0, :3] = cert.K.ravel()
    SM = np.array(vertices.S_M)
    SH = np.array(vertices.S_H)
    P, mu = cert.P, cert.mu
    out = np.empty(n_samples)
    for k in range(n_samples):
        w = rng.dirichlet(np.ones(len(SM)))
        M = np.tensordot(w, SM, axes=1)
        H = np.tensordot(w, SH, axes=1)
        D = M - H @ Kb
        blk = np.block([[(1 - mu) * P, D.T @ P], [P @ D, P]])
        out[k] = min_eig(blk)
    return out


@dataclass
class CertificationReport:
    lyapunov: LyapunovReport
    radius: RadiusReport
    gains: list[GainReport] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok = self.lyapunov.passed and self.radius.stable
        return ok and all(g.passed is not False for g in self.gains)

    def to_dict(self) -> dict:
        return {
            "verdict": "pass" if self.passed else "fail",
            "settings": self.settings,
            "lyapunov": self.lyapunov.to_dict(),
            "spectral_radius": self.radius.to_dict(),
            "gains": [g.to_dict() for g in self.gains],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_certification(cert: Certificate, params: PlatoonParams, grid=None, sigma: float | None = None) -> CertificationReport:
    p = cert.p
    grid = default_grid(params.h) if grid is None else np.asarray(grid, dtype=float)
    lyap = check_lyapunov_grid(cert, grid, p, params)
    rad = spectral_radius_scan(cert.K, grid, p, params)
    gains = []
    if rad.stable:
        gains.append(l2_gain_estimate(cert.K, p, params, "predecessor", level=sigma))
        gains.append(l2_gain_estimate(cert.K, p, params, "disturbance"))
    settings = {"p": p, "mu": cert.mu, "grid_points": int(len(grid)), "K": cert.K.ravel().tolist(), **cert.meta}
    return CertificationReport(lyap, rad, gains, settings)
