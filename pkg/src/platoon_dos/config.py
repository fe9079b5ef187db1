"""INI run configuration: one file holds model, synthesis, attack and run settings."""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from importlib import resources

from .errors import ConfigError
from .model import PlatoonParams
from .synthesis import SynthesisOptions

PLATOON_KEYS = ("N", "dT", "h", "eps", "eps0", "zeta", "v_min", "v_max")
DEFAULT_CONFIG = "paper-table2.cfg"


@dataclass(frozen=True)
class RunConfig:
    params: PlatoonParams = field(default_factory=PlatoonParams)
    synthesis: SynthesisOptions = field(default_factory=SynthesisOptions)
    p_range: tuple[int, int] = (1, 9)
    gamma_range: tuple[float, float] = (1.0, 1e10)
    gamma_iters: int = 20
    attack_p_max: int = 8
    seed: int = 0
    horizon: float = 1000.0
    substeps: int = 4
    disturbance_amplitude: float = 1.0
    disturbance_rate: float = 0.01
    grid: int = 101

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        pr = self.params
        cp["platoon"] = {k: repr(getattr(pr, k)) for k in PLATOON_KEYS}
        cp["platoon"]["output_map"] = pr.output_map
        so = self.synthesis
        cp["synthesis"] = {
            "p": str(so.p),
            "mu": repr(so.mu),
            "a": repr(so.a),
            "b": repr(so.b),
            "sigma": repr(so.sigma),
            "gamma": "none" if so.gamma is None else repr(so.gamma),
            "mode": so.mode,
            "margin": repr(so.margin),
            "tau_min": repr(so.tau_min),
            "tau_max": "none" if so.tau_max is None else repr(so.tau_max),
            "jordan_rate": "none" if so.jordan_rate is None else repr(so.jordan_rate),
            "state_scale": ", ".join(repr(x) for x in so.state_scale),
            "input_scale": repr(so.input_scale),
            "solver": so.solver,
            "var_bound": repr(so.var_bound),
        }
        cp["sweep"] = {
            "p_min": str(self.p_range[0]),
            "p_max": str(self.p_range[1]),
            "gamma_lo": repr(self.gamma_range[0]),
            "gamma_hi": repr(self.gamma_range[1]),
            "gamma_iters": str(self.gamma_iters),
        }
        cp["attack"] = {"p_max": str(self.attack_p_max)}
        cp["simulation"] = {
            "horizon": repr(self.horizon),
            "substeps": str(self.substeps),
            "disturbance_amplitude": repr(self.disturbance_amplitude),
            "disturbance_rate": repr(self.disturbance_rate),
        }
        cp["certify"] = {"grid": str(self.grid)}
        cp["run"] = {"seed": str(self.seed)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("none", "") else float(text)


def _get(sec, key, conv, default, section_name):
    if key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{section_name}] {key}: cannot parse {sec[key]!r} ({exc})") from None


def parse_config(text: str) -> RunConfig:
    """Parse INI text. Every [platoon] key is required; other sections fall back to defaults."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if "platoon" not in cp:
        raise ConfigError("missing section [platoon]")
    pl = cp["platoon"]
    missing = [k for k in PLATOON_KEYS if k not in pl]
    if missing:
        raise ConfigError(f"[platoon] missing required field(s): {', '.join(missing)}")
    kw = {}
    for k in PLATOON_KEYS:
        conv = int if k == "N" else float
        kw[k] = _get(pl, k, conv, None, "platoon")
    kw["output_map"] = pl.get("output_map", "consistent")
    params = PlatoonParams(**kw)

    d = SynthesisOptions()
    sy = cp["synthesis"] if "synthesis" in cp else {}
    scale = _get(sy, "state_scale", lambda s: tuple(float(x) for x in s.split(",")), d.state_scale, "synthesis")
    if len(scale) != 3:
        raise ConfigError("[synthesis] state_scale needs three entries")
    synth = SynthesisOptions(
        p=_get(sy, "p", int, d.p, "synthesis"),
        mu=_get(sy, "mu", float, d.mu, "synthesis"),
        a=_get(sy, "a", float, d.a, "synthesis"),
        b=_get(sy, "b", float, d.b, "synthesis"),
        sigma=_get(sy, "sigma", float, d.sigma, "synthesis"),
        gamma=_get(sy, "gamma", _opt_float, d.gamma, "synthesis"),
        mode=sy.get("mode", d.mode),
        margin=_get(sy, "margin", float, d.margin, "synthesis"),
        tau_min=_get(sy, "tau_min", float, d.tau_min, "synthesis"),
        tau_max=_get(sy, "tau_max", _opt_float, d.tau_max, "synthesis"),
        jordan_rate=_get(sy, "jordan_rate", _opt_float, d.jordan_rate, "synthesis"),
        state_scale=scale,
        input_scale=_get(sy, "input_scale", float, d.input_scale, "synthesis"),
        solver=sy.get("solver", d.solver),
        var_bound=_get(sy, "var_bound", float, d.var_bound, "synthesis"),
    )
    r = RunConfig()
    sw = cp["sweep"] if "sweep" in cp else {}
    at = cp["attack"] if "attack" in cp else {}
    si = cp["simulation"] if "simulation" in cp else {}
    ce = cp["certify"] if "certify" in cp else {}
    ru = cp["run"] if "run" in cp else {}
    cfg = RunConfig(
        params=params,
        synthesis=synth,
        p_range=(_get(sw, "p_min", int, r.p_range[0], "sweep"), _get(sw, "p_max", int, r.p_range[1], "sweep")),
        gamma_range=(
            _get(sw, "gamma_lo", float, r.gamma_range[0], "sweep"),
            _get(sw, "gamma_hi", float, r.gamma_range[1], "sweep"),
        ),
        gamma_iters=_get(sw, "gamma_iters", int, r.gamma_iters, "sweep"),
        attack_p_max=_get(at, "p_max", int, r.attack_p_max, "attack"),
        seed=_get(ru, "seed", int, r.seed, "run"),
        horizon=_get(si, "horizon", float, r.horizon, "simulation"),
        substeps=_get(si, "substeps", int, r.substeps, "simulation"),
        disturbance_amplitude=_get(si, "disturbance_amplitude", float, r.disturbance_amplitude, "simulation"),
        disturbance_rate=_get(si, "disturbance_rate", float, r.disturbance_rate, "simulation"),
        grid=_get(ce, "grid", int, r.grid, "certify"),
    )
    if cfg.grid < 1:
        raise ConfigError("[certify] grid must be >= 1")
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config(default_config_text())
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def default_config_text() -> str:
    return resources.files("platoon_dos.data").joinpath(DEFAULT_CONFIG).read_text()
