"""DoS attacks as bounded, space-varying transmission delays.

A delay tau (in metres of travel) is split into an integer number of
sampling intervals plus a remainder: tau = tau_bar + (p - 1) h with
tau_bar in [0, h]. Traces persist as CSV with columns
``vehicle, k, s_k, tau, tau_bar, p``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError

CSV_COLUMNS = ("vehicle", "k", "s_k", "tau", "tau_bar", "p")


@dataclass(frozen=True)
class DelaySample:
    k: int
    tau: float
    tau_bar: float
    p: int


def decompose(tau: float, h: float) -> tuple[float, int]:
    """Split tau into (tau_bar, p); tau_bar == h is kept rather than rolled into p + 1."""
    if not h > 0:
        raise DomainError(f"sampling interval must be > 0, got {h}")
    if tau < 0 or not math.isfinite(tau):
        raise DomainError(f"delay must be finite and >= 0, got {tau}")
    p = max(1, math.ceil(tau / h))
    tau_bar = tau - (p - 1) * h
    # ceil on a value that is a hair above an integer leaves tau_bar ~ 1e-16
    return min(max(tau_bar, 0.0), h), p


def recompose(tau_bar: float, p: int, h: float) -> float:
    return tau_bar + (p - 1) * h


def effective_delay(tau_pred: float, tau_lead: float) -> float:
    """One delay per vehicle: the worse of the two incoming links."""
    if tau_pred < 0 or tau_lead < 0:
        raise DomainError("delays must be >= 0")
    return max(tau_pred, tau_lead)


def link_delay(s_sampled: float, s_received: float) -> float:
    """Delay seen by the controller for a packet sampled at s_sampled.

    Information that arrives before the receiver reaches the sampling
    position costs nothing (zero delay); otherwise the delay is the extra
    distance travelled while waiting.
    """
    return max(0.0, s_received - s_sampled)


@dataclass(frozen=True)
class AttackSchedule:
    """How delays are produced: uniform sampling under a bound, or replay of a CSV trace."""

    seed: int = 0
    p_max: int = 8
    h: float = 0.5
    distribution: str = "uniform"
    replay: str | None = None

    def __post_init__(self):
        if self.p_max < 1:
            raise ConfigError("p_max must be >= 1")
        if not self.h > 0:
            raise ConfigError("h must be > 0")
        if self.distribution not in ("uniform", "none"):
            raise ConfigError(f"unknown delay distribution {self.distribution!r}")

    @property
    def bound(self) -> float:
        return self.p_max * self.h


@dataclass
class DelayTrace:
    """Delays per vehicle (rows, leader first) and sampling step (columns)."""

    tau: np.ndarray
    h: float

    @property
    def n_vehicles(self) -> int:
        return self.tau.shape[0]

    @property
    def steps(self) -> int:
        return self.tau.shape[1]

    def samples(self, vehicle: int) -> list[DelaySample]:
        out = []
        for k, tau in enumerate(self.tau[vehicle]):
            tb, p = decompose(float(tau), self.h)
            out.append(DelaySample(k, float(tau), tb, p))
        return out

    def max_delay(self) -> float:
        return float(self.tau.max()) if self.tau.size else 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for i in range(self.n_vehicles):
                for k in range(self.steps):
                    tau = float(self.tau[i, k])
                    tb, p = decompose(tau, self.h)
                    w.writerow([i, k, repr(k * self.h), repr(tau), repr(tb), p])

    @classmethod
    def read_csv(cls, path, h: float) -> "DelayTrace":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ConfigError(f"delay trace {path} lacks columns {sorted(missing)}")
            for row in reader:
                rows.append((int(row["vehicle"]), int(row["k"]), float(row["tau"])))
        if not rows:
            return cls(np.zeros((0, 0)), h)
        nv = max(r[0] for r in rows) + 1
        nk = max(r[1] for r in rows) + 1
        tau = np.zeros((nv, nk))
        for i, k, t in rows:
            tau[i, k] = t
        return cls(tau, h)


def _stream(seed: int, vehicle: int, link: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, vehicle, link]))


def generate_schedule(sched: AttackSchedule, N: int, steps: int) -> DelayTrace:
    """Delay trace for the leader (row 0, never delayed) and N followers.

    Each follower draws independent predecessor- and leader-link delays,
    uniform on [0, p_max h], and keeps the larger one. Vehicle 1's
    predecessor is the leader, so it has a single link.
    """
    if sched.replay is not None:
        trace = DelayTrace.read_csv(sched.replay, sched.h)
        if trace.n_vehicles < N + 1 or trace.steps < steps:
            raise ConfigError(
                f"replay trace has {trace.n_vehicles} vehicles x {trace.steps} steps, need {N + 1} x {steps}"
            )
        if trace.max_delay() > sched.bound + 1e-12:
            raise ConfigError("replay trace exceeds the attack bound p_max * h")
        return DelayTrace(trace.tau[: N + 1, :steps].copy(), sched.h)
    tau = np.zeros((N + 1, steps))
    if sched.distribution == "none" or steps == 0:
        return DelayTrace(tau, sched.h)
    bound = sched.bound
    for i in range(1, N + 1):
        pred = _stream(sched.seed, i, 0).uniform(0.0, bound, steps)
        if i == 1:
            tau[i] = pred
        else:
            lead = _stream(sched.seed, i, 1).uniform(0.0, bound, steps)
            tau[i] = np.maximum(pred, lead)
    return DelayTrace(tau, sched.h)
