import json
from dataclasses import replace

import cvxpy as cp
import numpy as np
import pytest

from platoon_dos.certify import Certificate, check_lyapunov_grid, congruence_gap, spectral_radius_scan
from platoon_dos.discretization import AugmentedModel
from platoon_dos.errors import ConfigError
from platoon_dos.model import PlatoonParams
from platoon_dos.polytope import coefficient_bounds, decompose_integral, enumerate_vertices
from platoon_dos.synthesis import (
    LmiBlock,
    LmiProgram,
    SynthesisOptions,
    assemble_theorem1,
    assemble_theorem2,
    bisect_gamma,
    certificate_decay,
    solve,
    sweep_p,
    synthesize,
    vertex_set,
)


def test_options_validation():
    with pytest.raises(ConfigError):
        SynthesisOptions(mu=1.0)
    with pytest.raises(ConfigError):
        SynthesisOptions(sigma=1.5)
    with pytest.raises(ConfigError):
        SynthesisOptions(mode="string_plus_attenuation")
    with pytest.raises(ConfigError):
        SynthesisOptions(p=0)


def test_trivial_programs():
    W = cp.Variable((2, 2), symmetric=True)
    ok = solve(LmiProgram("w", {"W": W}, [LmiBlock("W", W)]))
    assert ok.verdict == "feasible"
    M = cp.Variable((2, 2), symmetric=True)
    bad = solve(LmiProgram("pm", {"M": M}, [LmiBlock("M", M), LmiBlock("-M", -M)]))
    assert bad.verdict == "infeasible"


@pytest.mark.parametrize("p", [1, 3])
def test_program_structure_and_counts(p):
    params = PlatoonParams()
    opts = SynthesisOptions(p=p)
    vs = vertex_set(params, opts)
    prog1 = assemble_theorem1(vs, 0.01, p)
    assert len(prog1.blocks) == 1 + 8
    model = AugmentedModel(params, p)
    L, G = model.LG()
    prog2 = assemble_theorem2(vs, replace(opts, gamma=1e8, mode="string_plus_attenuation"), L, G, model.C, p)
    assert len(prog2.blocks) == 1 + 16
    counts = prog1.count_unknowns()
    assert counts["W"] == (3 + p) * (4 + p) // 2
    assert counts["Y"] == 3
    assert counts["Z1"] + counts["Z2"] + counts["Z3"] == 9 + 3 * p + p * p
    # the upper-right block of Z is structurally zero
    for v in prog1.variables.values():
        v.value = np.ones(v.shape)
    assert not np.asarray(prog1.Z.value)[:3, 3:].any()


def test_theorem1_end_to_end_certified(params, synth):
    res = synth(1, 1)
    assert res.feasible
    assert np.all(np.isfinite(res.K))
    cert = Certificate.from_result(res, 0.01)
    grid = np.linspace(0, params.h, 100)
    assert check_lyapunov_grid(cert, grid, 1, params).passed
    assert spectral_radius_scan(res.K, grid, 1, params).stable


def test_extraction_identity(synth):
    res = synth(3)
    Z1 = res.Z[:3, :3]
    # Y lives in scaled coordinates; map K back before multiplying
    Tx = np.diag(SynthesisOptions().state_scale)
    assert np.allclose(res.K @ Tx @ Z1, res.Y, atol=1e-10)
    assert congruence_gap(res.W, res.Z) >= -1e-8


def test_result_json_round_trip(synth):
    res = synth(1)
    data = json.loads(res.to_json())
    assert data["verdict"] == "feasible"
    assert data["margin"] == 1e-7
    assert len(data["K"][0]) == 3
    assert data["program"]["unknowns"]["Y"] == 3
    assert set(data["block_min_eigs"]) >= {"W", "string[0]"}


def test_decay_demand_threshold(params):
    """The decay-only program becomes infeasible as the decay demand approaches one."""
    assert synthesize(params, SynthesisOptions(p=1, mu=0.01), theorem=1).feasible
    assert synthesize(params, SynthesisOptions(p=1, mu=0.9), theorem=1).verdict == "infeasible"


def test_zero_coupling_decouples(params):
    p = 1
    opts = SynthesisOptions(p=p)
    vs = vertex_set(params, opts)
    model = AugmentedModel(params, p)
    _, G = model.LG()
    res = solve(assemble_theorem2(vs, opts, np.zeros((4, 1)), G, model.C, p))
    assert res.feasible


def test_gamma_monotone_and_bisection(params):
    opts = SynthesisOptions(p=1)
    g = 1e6
    a = synthesize(params, replace(opts, gamma=g, mode="string_plus_attenuation")).feasible
    b = synthesize(params, replace(opts, gamma=2 * g, mode="string_plus_attenuation")).feasible
    assert (not a) or b
    br = bisect_gamma(params, opts, 1.0, 1e8, iters=6, log_space=True)
    assert br.solved
    assert br.lo < br.hi
    assert synthesize(params, replace(opts, gamma=2 * br.hi, mode="string_plus_attenuation")).feasible


def test_bisect_gamma_no_solution_report(params):
    br = bisect_gamma(params, SynthesisOptions(p=1), 1e-6, 1e-5, iters=3)
    assert not br.solved and br.lo is None


def test_sweep_small_range_and_monotone(params):
    sw = sweep_p(params, SynthesisOptions(), [1, 2, 3])
    assert sw.frontier() == [1, 2, 3]
    assert sw.p_max == 3
    assert sw.monotone()


def test_large_velocity_weight_has_empty_frontier():
    params = PlatoonParams(eps=50.0)
    sw = sweep_p(params, SynthesisOptions(), [1])
    assert sw.frontier() == []
    assert sw.p_max is None
    # the emptiness is conservatism of the box embedding: stable gains exist
    grid = np.linspace(0, params.h, 11)
    assert spectral_radius_scan([0.0, 1e-5, 1e-4], grid, 1, params).stable


def test_verdict_deterministic(params):
    a = synthesize(params, SynthesisOptions(p=2))
    b = synthesize(params, SynthesisOptions(p=2))
    assert a.verdict == b.verdict
    assert np.array_equal(a.K, b.K)


def test_certificate_decay():
    o = SynthesisOptions(mu=0.05, a=0.97)
    assert certificate_decay(o, 1) == 0.05
    assert certificate_decay(o, 2) == pytest.approx(0.03)
