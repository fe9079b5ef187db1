"""Command-line entry point.

Exit codes:
    0  success (feasible and certified, or run completed)
    1  bad configuration or usage
    2  no certified controller (infeasible, indeterminate or failed certification)
    3  simulation aborted (physical reconstruction failed)
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import certify as cert_mod
from . import simulator
from .config import RunConfig, load_config
from .errors import ConfigError, ExtractionError, ReconstructionError, UndefinedGainError
from .polytope import coefficient_bounds, decompose_integral
from .synthesis import bisect_gamma, certificate_decay, sweep_p, synthesize

EXIT_OK, EXIT_CONFIG, EXIT_NO_CONTROLLER, EXIT_ABORTED = 0, 1, 2, 3
log = logging.getLogger("platoon_dos")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seeds: dict
    outputs: list[str] = field(default_factory=list)
    version: str = field(default_factory=_version)
    started: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    finished: str | None = None

    def add(self, path: Path) -> Path:
        self.outputs.append(path.name)
        return path

    def write(self, out_dir: Path) -> None:
        self.finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
        body = {k: getattr(self, k) for k in ("command", "config_digest", "seeds", "outputs", "version", "started", "finished")}
        (out_dir / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    synth = cfg.synthesis
    if getattr(args, "p", None) is not None:
        synth = replace(synth, p=args.p)
    if getattr(args, "mode", None) is not None:
        synth = replace(synth, mode=args.mode)
    cfg = replace(cfg, synthesis=synth)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "grid", None) is not None:
        if args.grid < 1:
            raise ConfigError("--grid must be >= 1")
        cfg = replace(cfg, grid=args.grid)
    return cfg


def _grid(cfg: RunConfig) -> np.ndarray:
    if cfg.grid == 1:
        return np.array([0.0])
    tau_max = cfg.params.h if cfg.synthesis.tau_max is None else cfg.synthesis.tau_max
    return np.linspace(cfg.synthesis.tau_min, tau_max, cfg.grid)


def cmd_synthesize(cfg: RunConfig, args, out: Path, manifest: RunManifest) -> int:
    opts = cfg.synthesis
    try:
        res = synthesize(cfg.params, opts, theorem=args.theorem)
    except ExtractionError as exc:
        log.error("%s", exc)
        _write_json(out / "synthesis.json", {"verdict": "extraction_error", "message": str(exc)})
        manifest.add(out / "synthesis.json")
        return EXIT_NO_CONTROLLER
    manifest.add(_write_json(out / "synthesis.json", {"theorem": args.theorem, "options": opts.to_dict(), **res.to_dict()}))
    log.info("p=%d theorem %d: %s (min block eig %s)", opts.p, args.theorem, res.verdict, res.min_block_eig)
    if not res.feasible:
        return EXIT_NO_CONTROLLER
    cert = cert_mod.Certificate.from_result(res, certificate_decay(opts, args.theorem))
    sigma = opts.sigma if args.theorem == 2 else None
    report = cert_mod.run_certification(cert, cfg.params, grid=_grid(cfg), sigma=sigma)
    manifest.add(_write_json(out / "certification.json", report.to_dict()))
    print(f"p={opts.p} feasible K={res.K.ravel().tolist()} certified={report.passed}")
    return EXIT_OK if report.passed else EXIT_NO_CONTROLLER


def _parse_range(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            out.extend(range(lo, hi + 1))
        elif part.strip():
            out.append(int(part))
    return out


def cmd_sweep(cfg: RunConfig, args, out: Path, manifest: RunManifest) -> int:
    if args.p_range is not None:
        try:
            ps = _parse_range(args.p_range)
        except ValueError:
            raise ConfigError(f"bad --p-range {args.p_range!r}") from None
    elif args.p is not None:
        ps = [args.p]
    else:
        ps = list(range(cfg.p_range[0], cfg.p_range[1] + 1))
    rows = sweep_p(cfg.params, cfg.synthesis, ps, theorem=args.theorem, jobs=args.jobs).rows if ps else []
    path = out / "frontier.csv"
    with open(path, "w") as fh:
        fh.write("p,feasible,k1,k2,k3,verdict,min_block_eig\n")
        for r in rows:
            k = r.K if r.K is not None else ["", "", ""]
            fh.write(f"{r.p},{int(r.verdict == 'feasible')},{','.join(repr(x) if x != '' else '' for x in k)},"
                     f"{r.verdict},{'' if r.min_block_eig is None else repr(r.min_block_eig)}\n")
    manifest.add(path)
    feas = [r.p for r in rows if r.verdict == "feasible"]
    print(f"feasible p: {feas}; p_max = {max(feas) if feas else None}")
    if args.gamma:
        lo, hi = cfg.gamma_range
        br = bisect_gamma(cfg.params, cfg.synthesis, lo, hi, iters=cfg.gamma_iters)
        manifest.add(_write_json(out / "gamma.json", {
            "p": cfg.synthesis.p, "lo": br.lo, "hi": br.hi, "iterations": br.iterations,
            "solved": br.solved, "history": [[g, v] for g, v in br.history],
        }))
        print(f"gamma bracket: [{br.lo}, {br.hi}]")
    return EXIT_OK


def _sim_config(cfg: RunConfig, name: str, synth_p: int | None = None) -> simulator.SimConfig:
    sc = simulator.preset(name, cfg.params, seed=cfg.seed)
    sc = replace(sc, horizon=cfg.horizon, substeps=cfg.substeps)
    if sc.attack.distribution != "none":
        sc = replace(sc, attack=replace(sc.attack, p_max=cfg.attack_p_max))
    if sc.disturbance is not None:
        sc = replace(sc, disturbance=replace(sc.disturbance, amplitude=cfg.disturbance_amplitude,
                                             rate=cfg.disturbance_rate))
    if sc.K is None and synth_p is not None:
        sc = replace(sc, synth_p=synth_p)
    return sc


def cmd_simulate(cfg: RunConfig, args, out: Path, manifest: RunManifest) -> int:
    sc = _sim_config(cfg, args.preset, args.p)
    try:
        trace = simulator.run(sc)
    except ReconstructionError as exc:
        log.error("simulation aborted: %s", exc)
        _write_json(out / "summary.json", {"aborted": True, "message": str(exc), "s": exc.s, "vehicle": exc.vehicle})
        manifest.add(out / "summary.json")
        return EXIT_ABORTED
    trace.write_csv(manifest.add(out / "trace.csv"))
    from .dos import DelayTrace

    DelayTrace(trace.tau, sc.params.h).write_csv(manifest.add(out / "delays.csv"))
    summary = simulator.summarize(trace, sc)
    manifest.add(_write_json(out / "summary.json", summary))
    ratios = summary["l2"]["ratios"][1:]
    print(f"{sc.name}: ratios={[None if r is None else round(r, 4) for r in ratios]} flags={summary['flags']}")
    return EXIT_OK


def _load_gain(path: str):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read gain file {path}: {exc}") from None
    if isinstance(data, list):
        data = {"K": data}
    if "K" not in data or data["K"] is None:
        raise ConfigError(f"gain file {path} has no K")
    K = np.asarray(data["K"], dtype=float).ravel()
    if K.size != 3:
        raise ConfigError("K must have three entries")
    P = np.asarray(data["P"], dtype=float) if data.get("P") is not None else None
    return K, P, data


def cmd_certify(cfg: RunConfig, args, out: Path, manifest: RunManifest) -> int:
    if not args.gain:
        raise ConfigError("certify needs --gain")
    K, P, data = _load_gain(args.gain)
    p = args.p or data.get("p") or (P.shape[0] - 3 if P is not None else cfg.synthesis.p)
    grid = _grid(cfg)
    rad = cert_mod.spectral_radius_scan(K, grid, p, cfg.params)
    report = {"p": p, "K": K.tolist(), "grid_points": int(len(grid)), "spectral_radius": rad.to_dict()}
    passed = rad.stable
    if P is not None:
        theorem = data.get("theorem", 2)
        opts = cfg.synthesis
        cert = cert_mod.Certificate(P, certificate_decay(opts, theorem), K)
        lyap = cert_mod.check_lyapunov_grid(cert, grid, p, cfg.params)
        report["lyapunov"] = lyap.to_dict()
        passed = passed and lyap.passed
    else:
        report["lyapunov"] = None
    if rad.stable:
        try:
            report["gains"] = [
                cert_mod.l2_gain_estimate(K, p, cfg.params, "predecessor", level=cfg.synthesis.sigma).to_dict(),
                cert_mod.l2_gain_estimate(K, p, cfg.params, "disturbance").to_dict(),
            ]
        except UndefinedGainError as exc:
            report["gains"] = str(exc)
    report["verdict"] = "pass" if passed else "fail"
    manifest.add(_write_json(out / "certification.json", report))
    print(f"certification {report['verdict']}: max radius {rad.max_radius:.6g}")
    return EXIT_OK if passed else EXIT_NO_CONTROLLER


def cmd_bounds(cfg: RunConfig, args, out: Path, manifest: RunManifest) -> int:
    dec = decompose_integral(cfg.params)
    tau_max = cfg.params.h if cfg.synthesis.tau_max is None else cfg.synthesis.tau_max
    b = coefficient_bounds(dec, cfg.synthesis.tau_min, tau_max, rate=cfg.synthesis.jordan_rate)
    manifest.add(_write_json(out / "bounds.json", {"bounds": [list(x) for x in b], "rate": dec.rate}))
    print(json.dumps([list(x) for x in b]))
    return EXIT_OK


COMMANDS = {
    "synthesize": cmd_synthesize,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "certify": cmd_certify,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="platoon-dos", description="Delay-resilient platoon control toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration (default: shipped study config)")
    common.add_argument("--out-dir", default=".", help="directory for outputs")
    common.add_argument("--seed", type=int)
    common.add_argument("--p", type=int, help="delay multiplicity")
    common.add_argument("--theorem", type=int, choices=(1, 2), default=2)
    common.add_argument("--mode", choices=("string_only", "string_plus_attenuation"))
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--grid", type=int, help="number of delay grid points for certification")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("synthesize", parents=[common], help="solve the LMI program and certify the gain")
    sw = sub.add_parser("sweep", parents=[common], help="feasibility frontier over p")
    sw.add_argument("--p-range", help="e.g. 1-9 or 1,3,5")
    sw.add_argument("--gamma", action="store_true", help="also bisect the attenuation level at --p")
    sm = sub.add_parser("simulate", parents=[common], help="run a simulation preset")
    sm.add_argument("--preset", default="attack_no_disturbance")
    ce = sub.add_parser("certify", parents=[common], help="certify a stored gain")
    ce.add_argument("--gain", help="JSON file with K (and optionally P)")
    sub.add_parser("bounds", parents=[common], help="print the coefficient box")
    return ap


def _setup_logging():
    level = os.environ.get("PLATOON_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "simulate" and args.preset not in simulator.PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {list(simulator.PRESETS)}")
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(args.command, cfg.digest(), {"seed": cfg.seed})
        code = COMMANDS[args.command](cfg, args, out, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
