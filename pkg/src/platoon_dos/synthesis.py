"""LMI synthesis of the delay-robust state-feedback gain.

Programs are feasibility problems over W (symmetric), a block lower
triangular Z (upper-right 3 x p block fixed to zero) and a 1 x 3 Y; the
gain is K = Y Z1^-1. Strict inequalities are enforced as ``block >= margin I``.

The solver backend only has to honour one contract: maximize a common
slack t with every block >= t I, variables norm-bounded. The returned
point is then re-checked in numpy; the verdict never trusts the solver's
status alone.

The programs are assembled in diagonally scaled coordinates
X = T X' (T = diag(state_scale, input_scale I_p)). This is a congruence, so
feasibility is unchanged, but it balances the tiny past-input and E2
magnitudes against Gamma and E1 and lifts the attainable margin by one to
two orders of magnitude.
"""
from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import cvxpy as cp
import numpy as np

from .discretization import AugmentedModel
from .errors import ConfigError, ExtractionError
from .linalg import TOL, min_eig
from .model import PlatoonParams
from .polytope import VertexSet, coefficient_bounds, decompose_integral, enumerate_vertices

MODES = ("string_only", "string_plus_attenuation")


@dataclass(frozen=True)
class SynthesisOptions:
    p: int = 1
    mu: float = 0.01
    a: float = 0.99
    b: float = 10.0
    sigma: float = 0.8
    gamma: float | None = None
    mode: str = "string_only"
    margin: float = TOL.lmi_margin
    tau_min: float = 0.0
    tau_max: float | None = None
    jordan_rate: float | None = None
    state_scale: tuple[float, float, float] = (1.0, 1.0, 0.1)
    input_scale: float = 1e-3
    solver: str = "CLARABEL"
    var_bound: float = 1e4

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if not 0 < self.mu < 1:
            raise ConfigError("mu must lie in (0, 1)")
        if not (self.a > 0 and self.b > 0):
            raise ConfigError("a and b must be > 0")
        if not 0 < self.sigma <= 1:
            raise ConfigError("sigma must lie in (0, 1]")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be > 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode == "string_plus_attenuation" and self.gamma is None:
            raise ConfigError("string_plus_attenuation needs gamma")
        if not self.margin >= 0:
            raise ConfigError("margin must be >= 0")

    def scaling(self, p: int | None = None) -> np.ndarray:
        p = self.p if p is None else p
        return np.diag(list(self.state_scale) + [self.input_scale] * p)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state_scale"] = list(self.state_scale)
        return d


@dataclass
class LmiBlock:
    label: str
    expr: cp.Expression

    @property
    def size(self) -> int:
        return self.expr.shape[0]


@dataclass
class LmiProgram:
    """Symmetric affine matrix constraints over named variable blocks."""

    name: str
    variables: dict[str, cp.Variable]
    blocks: list[LmiBlock]
    p: int | None = None
    scale: np.ndarray | None = None
    Z: cp.Expression | None = None
    meta: dict = field(default_factory=dict)

    def count_unknowns(self) -> dict[str, int]:
        out = {}
        for name, var in self.variables.items():
            r, c = var.shape if len(var.shape) == 2 else (var.size, 1)
            out[name] = r * (r + 1) // 2 if var.is_symmetric() else r * c
        return out

    def describe(self) -> dict:
        return {
            "name": self.name,
            "p": self.p,
            "variables": {k: list(v.shape) for k, v in self.variables.items()},
            "unknowns": self.count_unknowns(),
            "blocks": [{"label": b.label, "size": b.size} for b in self.blocks],
            "meta": self.meta,
        }


@dataclass
class SynthesisResult:
    verdict: str  # feasible | infeasible | indeterminate
    margin: float
    min_block_eig: float | None
    slack: float | None
    status: str
    K: np.ndarray | None = None
    W: np.ndarray | None = None
    Z: np.ndarray | None = None
    Y: np.ndarray | None = None
    P: np.ndarray | None = None
    p: int | None = None
    iterations: int | None = None
    solve_time: float = 0.0
    block_min_eigs: dict = field(default_factory=dict)
    program: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.verdict == "feasible"

    def to_dict(self, include_blocks: bool = True) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()

        d = {
            "verdict": self.verdict,
            "margin": self.margin,
            "min_block_eig": self.min_block_eig,
            "slack": self.slack,
            "status": self.status,
            "p": self.p,
            "iterations": self.iterations,
            "solve_time": self.solve_time,
            "K": arr(self.K),
            "W": arr(self.W),
            "Z": arr(self.Z),
            "Y": arr(self.Y),
            "P": arr(self.P),
            "program": self.program,
        }
        if include_blocks:
            d["block_min_eigs"] = self.block_min_eigs
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2, sort_keys=True)


def _sym(expr):
    return 0.5 * (expr + expr.T)


def _z_structure(p: int):
    Z1 = cp.Variable((3, 3), name="Z1")
    Z2 = cp.Variable((p, 3), name="Z2")
    Z3 = cp.Variable((p, p), name="Z3")
    Z = cp.bmat([[Z1, np.zeros((3, p))], [Z2, Z3]])
    return Z, {"Z1": Z1, "Z2": Z2, "Z3": Z3}


def _scaled(vertices: VertexSet, T: np.ndarray):
    Ti = np.linalg.inv(T)
    return [Ti @ M @ T for M in vertices.S_M], [Ti @ H for H in vertices.S_H], Ti


def assemble_theorem1(vertices: VertexSet, mu: float, p: int, opts: SynthesisOptions | None = None) -> LmiProgram:
    """Internal-stability program: one 2x2-block LMI per vertex plus W > 0."""
    if not 0 < mu < 1:
        raise ConfigError("mu must lie in (0, 1)")
    opts = opts or SynthesisOptions(p=p, mu=mu)
    n = 3 + p
    T = opts.scaling(p)
    SM, SH, _ = _scaled(vertices, T)
    W = cp.Variable((n, n), symmetric=True, name="W")
    Y = cp.Variable((1, 3), name="Y")
    Z, zvars = _z_structure(p)
    Yb = cp.hstack([Y, np.zeros((1, p))])
    blocks = [LmiBlock("W", W)]
    for j, (M, H) in enumerate(zip(SM, SH)):
        off = Z.T @ M.T - Yb.T @ H.T
        blk = cp.bmat([[Z + Z.T - W, off], [off.T, (1 - mu) * W]])
        blocks.append(LmiBlock(f"stability[{j}]", blk))
    return LmiProgram(
        "theorem1",
        {"W": W, "Y": Y, **zvars},
        blocks,
        p=p,
        scale=T,
        Z=Z,
        meta={"mu": mu, "bounds": [list(b) for b in vertices.bounds]},
    )


def assemble_theorem2(
    vertices: VertexSet, opts: SynthesisOptions, L: np.ndarray, G: np.ndarray, C: np.ndarray, p: int
) -> LmiProgram:
    """String-stability (and optionally attenuation) program.

    ``C`` may be the 1x3 output row or already padded to 1 x (3+p).
    """
    n = 3 + p
    T = opts.scaling(p)
    SM, SH, Ti = _scaled(vertices, T)
    C = np.asarray(C, dtype=float).reshape(1, -1)
    if C.shape[1] == 3:
        C = np.hstack([C, np.zeros((1, p))])
    Cs = C @ T
    Ls = Ti @ np.asarray(L, dtype=float).reshape(n, 1)
    Gs = Ti @ np.asarray(G, dtype=float).reshape(n, 2)
    a, b = opts.a, opts.b
    W = cp.Variable((n, n), symmetric=True, name="W")
    Y = cp.Variable((1, 3), name="Y")
    Z, zvars = _z_structure(p)
    Yb = cp.hstack([Y, np.zeros((1, p))])
    couplings = [("string", Ls, b * opts.sigma)]
    if opts.mode == "string_plus_attenuation":
        # scaling the coupling by 1/sqrt(b gamma) is a congruence that turns
        # the level block into I; without it large gamma is ill conditioned
        couplings.append(("attenuation", Gs / np.sqrt(b * opts.gamma), 1.0))
    blocks = [LmiBlock("W", W)]
    for j, (M, H) in enumerate(zip(SM, SH)):
        omega_t = Z.T @ M.T - Yb.T @ H.T
        for label, Mx, level in couplings:
            m = Mx.shape[1]
            blk = cp.bmat(
                [
                    [a * (Z.T + Z - W), omega_t, np.zeros((n, m)), Z.T @ Cs.T],
                    [omega_t.T, W, Mx, np.zeros((n, 1))],
                    [np.zeros((m, n)), Mx.T, level * np.eye(m), np.zeros((m, 1))],
                    [Cs @ Z, np.zeros((1, n)), np.zeros((1, m)), np.eye(1) / b],
                ]
            )
            blocks.append(LmiBlock(f"{label}[{j}]", blk))
    return LmiProgram(
        "theorem2",
        {"W": W, "Y": Y, **zvars},
        blocks,
        p=p,
        scale=T,
        Z=Z,
        meta={
            "a": a,
            "b": b,
            "sigma": opts.sigma,
            "gamma": opts.gamma,
            "mode": opts.mode,
            "bounds": [list(bd) for bd in vertices.bounds],
        },
    )


def solve(prog: LmiProgram, margin: float = TOL.lmi_margin, solver: str = "CLARABEL", var_bound: float = 1e4):
    """Maximize the common slack, then verify the returned point in numpy."""
    t = cp.Variable(name="slack")
    cons = [t <= 1.0]
    for blk in prog.blocks:
        cons.append(_sym(blk.expr) >> t * np.eye(blk.size))
    for var in prog.variables.values():
        cons.append(cp.norm(var, "fro") <= var_bound)
    problem = cp.Problem(cp.Maximize(t), cons)
    t0 = time.perf_counter()
    status = "solver_error"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            problem.solve(solver=solver)
            status = problem.status
        except cp.error.SolverError:
            pass
    elapsed = time.perf_counter() - t0
    iters = getattr(problem.solver_stats, "num_iters", None) if problem.solver_stats else None
    res = SynthesisResult(
        verdict="indeterminate",
        margin=margin,
        min_block_eig=None,
        slack=None,
        status=status,
        p=prog.p,
        iterations=iters,
        solve_time=elapsed,
        program=prog.describe(),
    )
    if status in ("infeasible", "infeasible_inaccurate"):
        res.verdict = "infeasible"
        return res
    if t.value is None or any(v.value is None for v in prog.variables.values()):
        return res
    res.slack = float(t.value)
    eigs = {blk.label: min_eig(np.asarray(blk.expr.value, dtype=float)) for blk in prog.blocks}
    res.block_min_eigs = eigs
    res.min_block_eig = min(eigs.values())
    if res.min_block_eig >= margin:
        res.verdict = "feasible"
    elif status == "optimal" or res.slack < margin:
        # optimum of the slack sits below the margin
        res.verdict = "infeasible"
    if res.verdict == "feasible" and "Z1" in prog.variables:
        _extract(prog, res)
    return res


def _extract(prog: LmiProgram, res: SynthesisResult):
    v = prog.variables
    Z1 = np.asarray(v["Z1"].value)
    if np.linalg.cond(Z1) > 1e12:
        raise ExtractionError(f"Z1 is singular at the solution (cond={np.linalg.cond(Z1):.3g})")
    Y = np.asarray(v["Y"].value).reshape(1, 3)
    W = np.asarray(v["W"].value)
    Z = np.asarray(prog.Z.value)
    T = prog.scale if prog.scale is not None else np.eye(W.shape[0])
    Tx = T[:3, :3]
    K_scaled = Y @ np.linalg.inv(Z1)
    Ti = np.linalg.inv(T)
    res.K = K_scaled @ np.linalg.inv(Tx)
    res.W, res.Z, res.Y = W, Z, Y
    res.P = Ti.T @ np.linalg.inv(W) @ Ti
    res.P = 0.5 * (res.P + res.P.T)


# --------------------------------------------------------------------------
# pipeline helpers
# --------------------------------------------------------------------------


def vertex_set(params: PlatoonParams, opts: SynthesisOptions, p: int | None = None) -> VertexSet:
    p = opts.p if p is None else p
    dec = decompose_integral(params)
    tau_max = params.h if opts.tau_max is None else opts.tau_max
    bounds = coefficient_bounds(dec, opts.tau_min, tau_max, rate=opts.jordan_rate)
    return enumerate_vertices(dec, bounds, p, params)


def synthesize(params: PlatoonParams, opts: SynthesisOptions, theorem: int = 2) -> SynthesisResult:
    p = opts.p
    verts = vertex_set(params, opts, p)
    if theorem == 1:
        prog = assemble_theorem1(verts, opts.mu, p, opts)
    elif theorem == 2:
        model = AugmentedModel(params, p)
        L, G = model.LG()
        prog = assemble_theorem2(verts, opts, L, G, model.output_row(), p)
    else:
        raise ConfigError(f"theorem must be 1 or 2, got {theorem}")
    return solve(prog, margin=opts.margin, solver=opts.solver, var_bound=opts.var_bound)


def certificate_decay(opts: SynthesisOptions, theorem: int) -> float:
    """Decay mu certified by a solution: mu itself, or 1 - a for the string program."""
    return opts.mu if theorem == 1 else 1.0 - opts.a


@dataclass
class SweepRow:
    p: int
    verdict: str
    K: list | None
    min_block_eig: float | None
    solve_time: float


@dataclass
class SweepResult:
    rows: list[SweepRow]

    @property
    def p_max(self) -> int | None:
        feas = [r.p for r in self.rows if r.verdict == "feasible"]
        return max(feas) if feas else None

    def frontier(self) -> list[int]:
        return [r.p for r in self.rows if r.verdict == "feasible"]

    def monotone(self) -> bool:
        """True when no feasible p follows an infeasible one."""
        seen_bad = False
        for r in sorted(self.rows, key=lambda r: r.p):
            if r.verdict == "infeasible":
                seen_bad = True
            elif r.verdict == "feasible" and seen_bad:
                return False
        return True


def _sweep_one(args):
    params, opts, p, theorem = args
    res = synthesize(params, replace(opts, p=p), theorem=theorem)
    K = None if res.K is None else res.K.ravel().tolist()
    return SweepRow(p, res.verdict, K, res.min_block_eig, res.solve_time)


def sweep_p(params: PlatoonParams, opts: SynthesisOptions, p_range, theorem: int = 2, jobs: int = 1) -> SweepResult:
    ps = sorted(set(int(p) for p in p_range))
    work = [(params, opts, p, theorem) for p in ps]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_one, work))
    else:
        rows = [_sweep_one(w) for w in work]
    return SweepResult(rows)


@dataclass
class GammaBracket:
    lo: float | None
    hi: float | None
    iterations: int
    history: list[tuple[float, str]]

    @property
    def solved(self) -> bool:
        return self.hi is not None


def bisect_gamma(params: PlatoonParams, opts: SynthesisOptions, gamma_lo: float, gamma_hi: float, iters: int = 20,
                 log_space: bool = False) -> GammaBracket:
    """Smallest gamma for which the string + attenuation program is feasible.

    Returns a bracket [lo, hi] with hi feasible. ``log_space`` bisects on
    log(gamma), which suits brackets spanning several decades.
    """
    if not 0 < gamma_lo < gamma_hi:
        raise ConfigError("need 0 < gamma_lo < gamma_hi")
    history = []

    def feasible(g):
        o = replace(opts, gamma=g, mode="string_plus_attenuation")
        verdict = synthesize(params, o, theorem=2).verdict
        history.append((g, verdict))
        return verdict == "feasible"

    if not feasible(gamma_hi):
        return GammaBracket(None, None, 0, history)
    if feasible(gamma_lo):
        return GammaBracket(gamma_lo, gamma_lo, 0, history)
    lo, hi = gamma_lo, gamma_hi
    for _ in range(iters):
        mid = float(np.sqrt(lo * hi)) if log_space else 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return GammaBracket(lo, hi, iters, history)
