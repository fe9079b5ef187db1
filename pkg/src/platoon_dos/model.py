"""Spatial-domain vehicle and platoon model in timing-error coordinates.

Vehicle i is described by the time t_i(s) at which it passes position s,
its velocity and acceleration. The controller works on the error state
x_i = [Gamma_i, E1_i, E2_i] (timing error w.r.t. the predecessor, weighted
time-gap error and its space derivative).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, ReconstructionError

OUTPUT_MAPS = ("consistent", "printed")


@dataclass(frozen=True)
class PlatoonParams:
    """Scalar model parameters. Defaults are the 8-vehicle study values."""

    N: int = 7
    dT: float = 1.0
    h: float = 0.5
    eps: float = 2.0
    eps0: float = 0.5
    zeta: float = 0.54
    v_min: float = 18.0
    v_max: float = 22.0
    # "consistent": y = (1 - eps0) Gamma - E1, which is what the output
    # definition -eps0 Gamma^0 - eps delta1 reduces to.
    # "printed": the alternative row [1 - eps, -1, 0].
    output_map: str = "consistent"

    def __post_init__(self):
        if self.N < 0:
            raise ConfigError("N must be >= 0")
        if not 0 <= self.eps0 < 1:
            raise ConfigError(f"eps0 must lie in [0, 1), got {self.eps0}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        for name in ("h", "dT", "zeta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0 < self.v_min <= self.v_max:
            raise ConfigError("need 0 < v_min <= v_max")
        if self.output_map not in OUTPUT_MAPS:
            raise ConfigError(f"output_map must be one of {OUTPUT_MAPS}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class VehiclePhysState:
    t: float
    v: float
    a: float = 0.0


@dataclass(frozen=True)
class ErrorState:
    gamma: float
    e1: float
    e2: float

    @classmethod
    def from_array(cls, x) -> "ErrorState":
        x = np.asarray(x, dtype=float).ravel()
        return cls(float(x[0]), float(x[1]), float(x[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma, self.e1, self.e2])


# --------------------------------------------------------------------------
# reference velocity profile
# --------------------------------------------------------------------------

SEGMENT_KINDS = ("constant", "cosine-ramp")


@dataclass(frozen=True)
class Segment:
    """One piece of the reference profile on [start, end).

    constant:     v = value
    cosine-ramp:  v = base + amplitude * (1 - cos(rate * (s - start)))
    """

    kind: str
    start: float
    end: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ConfigError(f"unknown segment kind {self.kind!r}")
        if not self.end > self.start:
            raise ConfigError("segment end must exceed start")
        need = ("value",) if self.kind == "constant" else ("base", "amplitude", "rate")
        missing = [k for k in need if k not in self.params]
        if missing:
            raise ConfigError(f"{self.kind} segment missing {missing}")

    def derivatives(self, s: float) -> tuple[float, float, float]:
        """(v, dv/ds, d2v/ds2)."""
        if self.kind == "constant":
            return float(self.params["value"]), 0.0, 0.0
        b, amp, w = (float(self.params[k]) for k in ("base", "amplitude", "rate"))
        arg = w * (s - self.start)
        return b + amp * (1.0 - math.cos(arg)), amp * w * math.sin(arg), amp * w * w * math.cos(arg)


class ReferenceVelocityProfile:
    """Piecewise C1 reference velocity with analytic derivatives of 1/v_ref."""

    def __init__(self, segments: Sequence[Segment]):
        segs = sorted(segments, key=lambda g: g.start)
        if not segs:
            raise ConfigError("profile needs at least one segment")
        for left, right in zip(segs, segs[1:]):
            if not math.isclose(left.end, right.start, abs_tol=1e-12):
                raise ConfigError(f"profile has a gap or overlap at s={left.end}")
        self.segments = tuple(segs)
        self._starts = np.array([g.start for g in segs])
        self._cum_time = None

    @property
    def start(self) -> float:
        return self.segments[0].start

    @property
    def end(self) -> float:
        return self.segments[-1].end

    def _segment(self, s: float) -> Segment:
        if s < self.start or s > self.end:
            raise DomainError(f"s={s} outside profile domain [{self.start}, {self.end}]")
        j = int(np.searchsorted(self._starts, s, side="right")) - 1
        return self.segments[min(j, len(self.segments) - 1)]

    def velocity(self, s: float) -> float:
        return self._segment(s).derivatives(s)[0]

    def inv(self, s: float) -> float:
        """1 / v_ref(s)."""
        return 1.0 / self.velocity(s)

    def inv_d1(self, s: float) -> float:
        """d/ds of 1 / v_ref."""
        v, dv, _ = self._segment(s).derivatives(s)
        return -dv / (v * v)

    def inv_d2(self, s: float) -> float:
        """d2/ds2 of 1 / v_ref."""
        v, dv, ddv = self._segment(s).derivatives(s)
        return -ddv / (v * v) + 2.0 * dv * dv / (v**3)

    def nominal_time(self, s: float) -> float:
        """Integral of 1 / v_ref from the profile start to s."""
        if self._cum_time is None:
            cum = [0.0]
            for g in self.segments:
                val, _ = integrate.quad(lambda r, g=g: 1.0 / g.derivatives(r)[0], g.start, g.end, epsabs=1e-13)
                cum.append(cum[-1] + val)
            self._cum_time = cum
        g = self._segment(s)
        j = self.segments.index(g)
        part, _ = integrate.quad(lambda r: 1.0 / g.derivatives(r)[0], g.start, s, epsabs=1e-13)
        return self._cum_time[j] + part

    def check_bounds(self, v_min: float, v_max: float, n: int = 2001) -> bool:
        grid = np.linspace(self.start, self.end, n)
        vals = np.array([self.velocity(s) for s in grid])
        return bool(vals.min() >= v_min - 1e-12 and vals.max() <= v_max + 1e-12)

    def to_records(self) -> list[dict]:
        return [{"kind": g.kind, "start": g.start, "end": g.end, **g.params} for g in self.segments]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "ReferenceVelocityProfile":
        segs = []
        for rec in records:
            rec = dict(rec)
            try:
                kind, start, end = rec.pop("kind"), float(rec.pop("start")), float(rec.pop("end"))
            except KeyError as exc:
                raise ConfigError(f"profile segment missing field {exc}") from None
            segs.append(Segment(kind, start, end, {k: float(v) for k, v in rec.items()}))
        return cls(segs)

    @classmethod
    def constant(cls, value: float, start: float = 0.0, end: float = 1000.0) -> "ReferenceVelocityProfile":
        return cls([Segment("constant", start, end, {"value": value})])

    def __eq__(self, other):
        return isinstance(other, ReferenceVelocityProfile) and self.to_records() == other.to_records()

    def __repr__(self):
        return f"ReferenceVelocityProfile({self.to_records()!r})"


def study_profile() -> ReferenceVelocityProfile:
    """Reference profile of the 8-vehicle study: two cosine bumps around 20 m/s."""
    w = 0.01 * math.pi
    return ReferenceVelocityProfile(
        [
            Segment("constant", 0.0, 100.0, {"value": 20.0}),
            Segment("cosine-ramp", 100.0, 300.0, {"base": 20.0, "amplitude": 0.5, "rate": w}),
            Segment("constant", 300.0, 400.0, {"value": 20.0}),
            Segment("cosine-ramp", 400.0, 600.0, {"base": 20.0, "amplitude": -0.6, "rate": w}),
            Segment("constant", 600.0, 1000.0, {"value": 20.0}),
        ]
    )


# --------------------------------------------------------------------------
# state-space model
# --------------------------------------------------------------------------


def output_row(params: PlatoonParams) -> np.ndarray:
    first = 1.0 - (params.eps0 if params.output_map == "consistent" else params.eps)
    return np.array([[first, -1.0, 0.0]])


def leader_output_row(params: PlatoonParams) -> np.ndarray:
    """The leader's timing error w.r.t. itself is zero, so y_0 = -eps delta1_0 = Gamma_0 - E1_0."""
    return np.array([[1.0, -1.0, 0.0]])


def continuous_matrices(params: PlatoonParams):
    """(A0, B1, B2, B3, C) of dx/ds = A0 x + B1 u + B2 y_prev + B3 d."""
    e = params.eps
    A0 = np.array([[-1.0 / e, 1.0 / e, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    B1 = np.array([[0.0], [0.0], [e]])
    B2 = np.array([[1.0 / e], [0.0], [0.0]])
    B3 = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return A0, B1, B2, B3, output_row(params)


def _check_velocity(*states: VehiclePhysState):
    for st in states:
        if not st.v > 0:
            raise DomainError(f"velocity must be positive, got {st.v}")


def velocity_error(phys: VehiclePhysState, refprof: ReferenceVelocityProfile, s: float) -> tuple[float, float]:
    """(delta1, delta2): error in inverse velocity and its space derivative."""
    _check_velocity(phys)
    d1 = 1.0 / phys.v - refprof.inv(s)
    # d/ds (1/v) = -v'/v^2 with v' = a / v along the spatial dynamics
    d2 = -phys.a / phys.v**3 - refprof.inv_d1(s)
    return d1, d2


def error_coordinates(
    phys_i: VehiclePhysState,
    phys_pred: VehiclePhysState | None,
    phys_lead: VehiclePhysState | None,
    refprof: ReferenceVelocityProfile,
    s: float,
    params: PlatoonParams,
    i: int,
) -> ErrorState:
    """Error state of vehicle i from physical states. ``i == 0`` is the leader."""
    d1_i, d2_i = velocity_error(phys_i, refprof, s)
    e, e0 = params.eps, params.eps0
    if i == 0:
        gamma = phys_i.t - refprof.nominal_time(s)
        return ErrorState(gamma, gamma + e * d1_i, d1_i + e * d2_i)
    if phys_pred is None or phys_lead is None:
        raise DomainError("followers need predecessor and leader states")
    d1_p, _ = velocity_error(phys_pred, refprof, s)
    d1_0, _ = velocity_error(phys_lead, refprof, s)
    gamma = phys_i.t - phys_pred.t - params.dT
    gamma0 = phys_i.t - phys_lead.t - i * params.dT
    e1 = (1 - e0) * gamma + e0 * gamma0 + e * d1_i
    e2 = (1 - e0) * (d1_i - d1_p) + e0 * (d1_i - d1_0) + e * d2_i
    return ErrorState(gamma, e1, e2)


def linearizing_input(
    phys: VehiclePhysState, refprof: ReferenceVelocityProfile, s: float, u_hat: float, params: PlatoonParams
) -> float:
    """Physical input that turns the spatial vehicle dynamics into a double integrator."""
    _check_velocity(phys)
    v, a, z = phys.v, phys.a, params.zeta
    return a + 3 * z * a * a / v - z * v**4 * (refprof.inv_d2(s) + u_hat)


def virtual_input_chain(x: ErrorState, d2_i: float, d2_pred: float, d2_lead: float, K, params: PlatoonParams):
    """(u_bar, u_hat): state feedback and the input it induces on vehicle i."""
    K = np.asarray(K, dtype=float).ravel()
    u_bar = -float(K @ x.as_array())
    e, e0 = params.eps, params.eps0
    u_hat = -(1 - e0) / e * (d2_i - d2_pred) - e0 / e * (d2_i - d2_lead) + u_bar
    return u_bar, u_hat


def _xi(phys: VehiclePhysState) -> tuple[float, float]:
    return -1.0 / phys.v**3, -3.0 * phys.a / phys.v**5


def disturbance_map(
    phys_i: VehiclePhysState | None,
    phys_pred: VehiclePhysState | None,
    phys_lead: VehiclePhysState,
    d_i: float,
    d_pred: float,
    d_lead: float,
    params: PlatoonParams,
) -> np.ndarray:
    """Map physical disturbances to the 2-vector entering (E1, E2).

    Pass ``phys_i=None`` for the leader; then only d_lead contributes.
    """
    e, e0 = params.eps, params.eps0
    _check_velocity(phys_lead)
    x1_0, _ = _xi(phys_lead)
    if phys_i is None:
        return np.array([[0.0], [-e0 * x1_0 * d_lead]])
    _check_velocity(phys_i, phys_pred)
    x1_i, x2_i = _xi(phys_i)
    x1_p, _ = _xi(phys_pred)
    first = e * x1_i * d_i
    second = (e * x2_i + x1_i) * d_i + (e0 - 1) * x1_p * d_pred - e0 * x1_0 * d_lead
    return np.array([[first], [second]])


def delta_chain(states: np.ndarray, params: PlatoonParams):
    """Recover (delta1, delta2, Gamma^0) for a whole platoon at one position.

    ``states`` has shape (N+1, 3), row 0 being the leader.
    """
    states = np.asarray(states, dtype=float)
    e, e0 = params.eps, params.eps0
    n = states.shape[0]
    d1 = np.empty(n)
    d2 = np.empty(n)
    g0 = np.empty(n)
    for i in range(n):
        gamma, e1, e2 = states[i]
        if i == 0:
            g0[0] = 0.0
            d1[0] = (e1 - gamma) / e
            d2[0] = (e2 - d1[0]) / e
        else:
            g0[i] = gamma + g0[i - 1]
            d1[i] = (e1 - (1 - e0) * gamma - e0 * g0[i]) / e
            d2[i] = (e2 - (1 - e0) * (d1[i] - d1[i - 1]) - e0 * (d1[i] - d1[0])) / e
    return d1, d2, g0


def reconstruct_physical(
    states: np.ndarray,
    delta1: np.ndarray,
    refprof: ReferenceVelocityProfile,
    s: float,
    params: PlatoonParams,
    delta2: np.ndarray | None = None,
    nominal_time: float | None = None,
) -> list[VehiclePhysState]:
    """Physical (t, v, a) per vehicle from error states and velocity errors.

    t_i = integral of 1/v_ref + i dT + Gamma^0_i, which is the accumulated
    form of dt_i/ds = delta1_i + 1/v_ref.
    """
    states = np.asarray(states, dtype=float).reshape(-1, 3)
    delta1 = np.asarray(delta1, dtype=float).ravel()
    inv_ref = refprof.inv(s)
    t_nom = refprof.nominal_time(s) if nominal_time is None else nominal_time
    g0 = np.cumsum(states[:, 0])
    out = []
    for i, d1 in enumerate(delta1):
        inv_v = d1 + inv_ref
        if not inv_v > 0:
            raise ReconstructionError(
                f"vehicle {i} at s={s}: 1/v = {inv_v:.6g} <= 0 (stopped or reversing)", s=s, vehicle=i
            )
        v = 1.0 / inv_v
        a = 0.0 if delta2 is None else -(v**3) * (float(delta2[i]) + refprof.inv_d1(s))
        out.append(VehiclePhysState(t=t_nom + i * params.dT + float(g0[i]), v=v, a=a))
    return out
