"""Space-domain closed-loop simulation of the platoon under DoS delays.

Each vehicle's error state follows the linearized spatial dynamics
x' = A0 x + B1 u + B2 y_pred + B3 d. At every sampling position s_k a
vehicle computes u_k = -K x(s_k); the packet takes effect at s_k + tau_k
and stays active until a more recently sent packet arrives (latest-sent
wins). Between switching points the flow is evaluated in closed form, with
the predecessor output held at its sampled value and the disturbance held
at the midpoint of each sub-step. With a constant delay this reproduces the
lifted discrete model exactly.
"""
from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dos import AttackSchedule, DelayTrace, decompose, generate_schedule
from .errors import ConfigError, ReconstructionError
from .linalg import jordan_platoon
from .model import (
    PlatoonParams,
    ReferenceVelocityProfile,
    VehiclePhysState,
    continuous_matrices,
    delta_chain,
    leader_output_row,
    error_coordinates,
    reconstruct_physical,
    study_profile,
)

SCHEMA_VERSION = 1
TRACE_COLUMNS = (
    "vehicle", "k", "s", "gamma", "e1", "e2", "delta1", "y",
    "u_cmd", "u_applied", "tau", "tau_bar", "p", "v", "t",
)
FAILURE_MODES = ("abort", "flag")
BASELINE_GAIN = (0.0, 0.09, 0.0025)


@dataclass(frozen=True)
class Disturbance:
    """d(s) = amplitude * sin(rate * s + phase) * components, in error coordinates."""

    amplitude: float = 1.0
    rate: float = 0.01
    phase: float = 0.0
    components: tuple[float, float] = (1.0, 1.0)

    def __call__(self, s: float) -> np.ndarray:
        return self.amplitude * math.sin(self.rate * s + self.phase) * np.asarray(self.components, dtype=float)


@dataclass(frozen=True)
class SimConfig:
    params: PlatoonParams = field(default_factory=PlatoonParams)
    refprof: ReferenceVelocityProfile = field(default_factory=study_profile)
    K: tuple[float, float, float] | None = None
    synth_p: int = 7
    attack: AttackSchedule = field(default_factory=lambda: AttackSchedule(p_max=1, distribution="none"))
    disturbance: Disturbance | None = None
    horizon: float = 1000.0
    substeps: int = 4
    initial: tuple | None = None
    init_seed: int = 0
    gamma_range: float = 0.2
    speed_spread: float = 0.05
    baseline: bool = False
    on_failure: str = "abort"
    name: str = "custom"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError("horizon must be > 0")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if self.on_failure not in FAILURE_MODES:
            raise ConfigError(f"on_failure must be one of {FAILURE_MODES}")
        if self.K is not None and len(self.K) != 3:
            raise ConfigError("K needs three entries")
        if abs(self.attack.h - self.params.h) > 1e-15:
            raise ConfigError("attack schedule and model must share the sampling interval")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.params.h))

    def with_seed(self, seed: int) -> "SimConfig":
        """Route one top-level seed to the attack trace and the initial conditions."""
        sub = np.random.SeedSequence(seed).generate_state(2)
        return replace(self, attack=replace(self.attack, seed=int(sub[0])), init_seed=int(sub[1]))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params.to_dict(),
            "refprof": self.refprof.to_records(),
            "K": None if self.K is None else list(self.K),
            "synth_p": self.synth_p,
            "attack": {
                "seed": self.attack.seed,
                "p_max": self.attack.p_max,
                "h": self.attack.h,
                "distribution": self.attack.distribution,
                "replay": self.attack.replay,
            },
            "disturbance": None
            if self.disturbance is None
            else {
                "amplitude": self.disturbance.amplitude,
                "rate": self.disturbance.rate,
                "phase": self.disturbance.phase,
                "components": list(self.disturbance.components),
            },
            "horizon": self.horizon,
            "substeps": self.substeps,
            "initial": None if self.initial is None else [list(r) for r in self.initial],
            "init_seed": self.init_seed,
            "gamma_range": self.gamma_range,
            "speed_spread": self.speed_spread,
            "baseline": self.baseline,
            "on_failure": self.on_failure,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@functools.lru_cache(maxsize=16)
def _synthesized_gain(params: PlatoonParams, p: int) -> tuple[float, float, float]:
    from .synthesis import SynthesisOptions, synthesize

    res = synthesize(params, SynthesisOptions(p=p), theorem=2)
    if not res.feasible:
        raise ConfigError(f"no gain: synthesis at p={p} is {res.verdict}")
    return tuple(float(k) for k in res.K.ravel())


def resolve_gain(cfg: SimConfig) -> np.ndarray:
    K = cfg.K if cfg.K is not None else _synthesized_gain(cfg.params, cfg.synth_p)
    return np.asarray(K, dtype=float)


def initial_states(cfg: SimConfig) -> np.ndarray:
    """Error states at s = 0, built from random but physically valid vehicles.

    Timing errors are uniform in +-gamma_range, speeds uniform within
    +-speed_spread of the reference, accelerations zero.
    """
    n = cfg.params.N + 1
    if cfg.initial is not None:
        x0 = np.asarray(cfg.initial, dtype=float)
        if x0.shape != (n, 3):
            raise ConfigError(f"initial states must have shape {(n, 3)}")
        return x0
    rng = np.random.default_rng(cfg.init_seed)
    gam = rng.uniform(-cfg.gamma_range, cfg.gamma_range, n)
    s0 = cfg.refprof.start
    v_ref = cfg.refprof.velocity(s0)
    speeds = v_ref * (1.0 + rng.uniform(-cfg.speed_spread, cfg.speed_spread, n))
    t = np.empty(n)
    t[0] = cfg.refprof.nominal_time(s0) + gam[0]
    for i in range(1, n):
        t[i] = t[i - 1] + cfg.params.dT + gam[i]
    phys = [VehiclePhysState(t=float(t[i]), v=float(speeds[i]), a=0.0) for i in range(n)]
    x0 = np.empty((n, 3))
    for i in range(n):
        pred = phys[i - 1] if i > 0 else None
        x0[i] = error_coordinates(phys[i], pred, phys[0], cfg.refprof, s0, cfg.params, i).as_array()
    return x0


@dataclass
class SimTrace:
    s: np.ndarray
    gamma: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    delta1: np.ndarray
    y: np.ndarray
    u_cmd: np.ndarray
    u_applied: np.ndarray
    tau: np.ndarray
    tau_bar: np.ndarray
    p: np.ndarray
    v: np.ndarray
    t: np.ndarray
    K: np.ndarray
    flags: dict = field(default_factory=dict)
    config_digest: str = ""

    @property
    def n_vehicles(self) -> int:
        return self.gamma.shape[0]

    def states(self) -> np.ndarray:
        """Shape (vehicles, samples, 3)."""
        return np.stack([self.gamma, self.e1, self.e2], axis=-1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i in range(self.n_vehicles):
            for k in range(len(self.s)):
                w.writerow(
                    [i, k, repr(float(self.s[k]))]
                    + [repr(float(a[i, k])) for a in (self.gamma, self.e1, self.e2, self.delta1, self.y,
                                                      self.u_cmd, self.u_applied, self.tau, self.tau_bar)]
                    + [int(self.p[i, k]), repr(float(self.v[i, k])), repr(float(self.t[i, k]))]
                )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


class _Flow:
    """Closed-form flow of the error dynamics with constant forcing."""

    def __init__(self, A0):
        self.jd = jordan_platoon(A0)
        self._cache = {}

    def __call__(self, x, w, L):
        if L <= 0.0:
            return x
        mats = self._cache.get(L)
        if mats is None:
            mats = (self.jd.expm(L), self.jd.expm_integral(L))
            if len(self._cache) < 4096:
                self._cache[L] = mats
        return mats[0] @ x + mats[1] @ w


def run(cfg: SimConfig) -> SimTrace:
    """Simulate the whole platoon over the horizon."""
    prm = cfg.params
    h, n, steps = prm.h, prm.N + 1, cfg.steps
    K = resolve_gain(cfg)
    A0, B1, B2, B3, C = continuous_matrices(prm)
    b1, b2 = B1.ravel(), B2.ravel()
    # row 0 is the leader, whose output ignores the ego timing error weight
    Cmat = np.repeat(C.reshape(1, 3), n, axis=0)
    Cmat[0] = leader_output_row(prm).ravel()
    flow = _Flow(A0)
    delays = generate_schedule(cfg.attack, prm.N, steps + 1)
    tau = delays.tau
    s_grid = np.arange(steps + 1) * h
    max_lag = int(math.ceil(delays.max_delay() / h)) + 1

    shape = (n, steps + 1)
    out = {k: np.zeros(shape) for k in ("gamma", "e1", "e2", "y", "u_cmd", "u_applied", "tau_bar")}
    p_arr = np.zeros(shape, dtype=int)
    x = initial_states(cfg).copy()
    applied_idx = np.full(n, -1)

    sub_edges = np.linspace(0.0, h, cfg.substeps + 1)
    for k in range(steps + 1):
        s_k = s_grid[k]
        y_k = np.einsum("ij,ij->i", x, Cmat)
        u_k = -(x @ K)
        out["gamma"][:, k], out["e1"][:, k], out["e2"][:, k] = x[:, 0], x[:, 1], x[:, 2]
        out["y"][:, k] = y_k
        out["u_cmd"][:, k] = u_k
        for i in range(n):
            tb, pk = decompose(float(tau[i, k]), h)
            out["tau_bar"][i, k], p_arr[i, k] = tb, pk
        if k == steps:
            # record what is active at the final sample, no further flow
            for i in range(n):
                applied_idx[i] = _latest_arrived(applied_idx[i], k, s_k, s_grid, tau[i], max_lag)
                out["u_applied"][i, k] = out["u_cmd"][i, applied_idx[i]] if applied_idx[i] >= 0 else 0.0
            break
        s_next = s_grid[k + 1]
        x_new = np.empty_like(x)
        for i in range(n):
            y_prev = y_k[i - 1] if i > 0 else 0.0
            cur = _latest_arrived(applied_idx[i], k, s_k, s_grid, tau[i], max_lag)
            out["u_applied"][i, k] = out["u_cmd"][i, cur] if cur >= 0 else 0.0
            # switching points inside (s_k, s_next): arrivals of newer packets
            events = sorted(
                (s_grid[j] + tau[i, j], j)
                for j in range(max(cur + 1, k - max_lag), k + 1)
                if s_k < s_grid[j] + tau[i, j] < s_next
            )
            cuts = sorted(set([s_k + e for e in sub_edges[1:-1]] + [a for a, _ in events]))
            xi = x[i]
            pos = s_k
            for stop in cuts + [s_next]:
                for a, j in events:
                    if a <= pos and j > cur:
                        cur = j
                u = out["u_cmd"][i, cur] if cur >= 0 else 0.0
                mid = 0.5 * (pos + stop)
                d = cfg.disturbance(mid) if cfg.disturbance is not None else (0.0, 0.0)
                w = b1 * u + b2 * y_prev + B3 @ np.asarray(d, dtype=float)
                xi = flow(xi, w, stop - pos)
                pos = stop
            applied_idx[i] = cur
            x_new[i] = xi
        x = x_new

    trace = SimTrace(
        s=s_grid,
        gamma=out["gamma"],
        e1=out["e1"],
        e2=out["e2"],
        delta1=np.zeros(shape),
        y=out["y"],
        u_cmd=out["u_cmd"],
        u_applied=out["u_applied"],
        tau=tau[:, : steps + 1].copy(),
        tau_bar=out["tau_bar"],
        p=p_arr,
        v=np.zeros(shape),
        t=np.zeros(shape),
        K=K,
        config_digest=cfg.digest(),
    )
    _reconstruct(trace, cfg)
    return trace


def _latest_arrived(cur, k, s_k, s_grid, tau_row, max_lag) -> int:
    for j in range(max(cur + 1, k - max_lag), k + 1):
        if s_grid[j] + tau_row[j] <= s_k and j > cur:
            cur = j
    return cur


def _reconstruct(trace: SimTrace, cfg: SimConfig) -> None:
    prm, ref = cfg.params, cfg.refprof
    states = trace.states()
    trace.flags["reconstruction_failed"] = False
    for k, s in enumerate(trace.s):
        d1, d2, _ = delta_chain(states[:, k, :], prm)
        trace.delta1[:, k] = d1
        try:
            phys = reconstruct_physical(states[:, k, :], d1, ref, float(s), prm, delta2=d2)
        except ReconstructionError as exc:
            if cfg.on_failure == "abort":
                raise ReconstructionError(str(exc), s=exc.s, vehicle=exc.vehicle, trace=trace) from None
            trace.v[:, k:] = np.nan
            trace.t[:, k:] = np.nan
            trace.flags.update(reconstruction_failed=True, failure_s=float(s), failure_vehicle=exc.vehicle)
            # keep delta1 for the remaining samples
            for kk in range(k + 1, len(trace.s)):
                trace.delta1[:, kk] = delta_chain(states[:, kk, :], prm)[0]
            return
        trace.v[:, k] = [ph.v for ph in phys]
        trace.t[:, k] = [ph.t for ph in phys]


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


@dataclass
class L2Report:
    norms: np.ndarray
    ratios: np.ndarray  # ratios[i] = ||y_i|| / ||y_{i-1}||, ratios[0] is nan
    undefined: list[int]

    @property
    def string_stable(self) -> bool:
        r = self.ratios[1:]
        return bool(not self.undefined and np.all(r <= 1.0))

    def to_dict(self) -> dict:
        return {
            "norms": self.norms.tolist(),
            "ratios": [None if not np.isfinite(r) else float(r) for r in self.ratios],
            "undefined_ratios": self.undefined,
            "string_stable": self.string_stable,
        }


def l2_norms(trace: SimTrace) -> L2Report:
    """||y_i|| = sqrt(h sum_k y_ik^2) and successive ratios."""
    if trace.y.size == 0 or len(trace.s) == 0:
        raise ValueError("empty trace")
    h = float(trace.s[1] - trace.s[0]) if len(trace.s) > 1 else 1.0
    norms = np.sqrt(h * np.sum(trace.y**2, axis=1))
    ratios = np.full(len(norms), np.nan)
    undefined = []
    for i in range(1, len(norms)):
        if norms[i - 1] > 0:
            ratios[i] = norms[i] / norms[i - 1]
        else:
            undefined.append(i)
    return L2Report(norms, ratios, undefined)


def convergence(trace: SimTrace, window: float = 100.0, fraction: float = 0.01) -> dict:
    """Tail errors over the last ``window`` metres against the initial errors.

    The band is ``fraction`` of the largest initial |Gamma| (resp. |delta1|)
    across the platoon; every vehicle's tail must sit inside it.
    """
    tail = trace.s >= trace.s[-1] - window
    g_tail = np.abs(trace.gamma[:, tail]).max(axis=1)
    d_tail = np.abs(trace.delta1[:, tail]).max(axis=1)
    g0 = float(np.abs(trace.gamma[:, 0]).max())
    d0 = float(np.abs(trace.delta1[:, 0]).max())
    ok_g = bool(np.all(g_tail <= fraction * g0))
    ok_d = bool(np.all(d_tail <= fraction * d0))
    return {
        "window": window,
        "fraction": fraction,
        "gamma_initial": g0,
        "delta1_initial": d0,
        "gamma_tail": g_tail.tolist(),
        "delta1_tail": d_tail.tolist(),
        "converged": ok_g and ok_d and bool(np.all(np.isfinite(trace.gamma))),
    }


def summarize(trace: SimTrace, cfg: SimConfig | None = None) -> dict:
    l2 = l2_norms(trace)
    conv = convergence(trace)
    out = {
        "schema_version": SCHEMA_VERSION,
        "K": trace.K.tolist(),
        "config_digest": trace.config_digest,
        "l2": l2.to_dict(),
        "convergence": conv,
        "max_delay": float(trace.tau.max()),
        "flags": {
            **trace.flags,
            "string_stability_violated": not l2.string_stable,
            "not_converged": not conv["converged"],
        },
    }
    if cfg is not None:
        out["preset"] = cfg.name
    return out


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

PRESETS = ("nominal_no_attack", "attack_no_disturbance", "attack_with_disturbance", "baseline_besselink")


def scenario_library(params: PlatoonParams | None = None, seed: int = 0) -> dict[str, SimConfig]:
    params = params or PlatoonParams()
    base = SimConfig(params=params, refprof=study_profile(), synth_p=7)
    attack = AttackSchedule(p_max=8, h=params.h, distribution="uniform")
    quiet = AttackSchedule(p_max=1, h=params.h, distribution="none")
    dist = Disturbance(amplitude=1.0, rate=0.01)
    lib = {
        "nominal_no_attack": replace(base, attack=quiet, name="nominal_no_attack"),
        "attack_no_disturbance": replace(base, attack=attack, name="attack_no_disturbance"),
        "attack_with_disturbance": replace(
            base, attack=attack, disturbance=dist, on_failure="flag", name="attack_with_disturbance"
        ),
        "baseline_besselink": replace(
            base,
            attack=attack,
            disturbance=dist,
            K=BASELINE_GAIN,
            baseline=True,
            on_failure="flag",
            name="baseline_besselink",
        ),
    }
    return {k: v.with_seed(seed) for k, v in lib.items()}


def preset(name: str, params: PlatoonParams | None = None, seed: int = 0) -> SimConfig:
    lib = scenario_library(params, seed)
    if name not in lib:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(lib)}")
    return lib[name]
