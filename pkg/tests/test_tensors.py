import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semislant import catalog
from semislant.report import FAIL, NOT_APPLICABLE, PASS
from semislant.sampling import SamplePlan
from semislant.tensors import (
    IDENTITIES,
    Calculus,
    Workspace,
    decomposition_checks,
    fundamental_identities_check,
    integrability_checks,
    mean_curvature,
    nabla_phi_omega,
    oneill_tensors,
    second_fundamental_form,
    tension_and_harmonicity,
    totally_geodesic_check,
    umbilical_check,
)

E4 = np.eye(4)
E6 = np.eye(6)
POLAR_P = np.array([1.0, 0.0, 0.0, 0.0])
WARPED_P = np.array([0.2, 0.1, 0.0, -0.3, 0.4, 0.5])
PLAN = SamplePlan(samples=6, vectors=4)


@pytest.fixture(scope="module")
def polar():
    return catalog.builtin("polar4")


@pytest.fixture(scope="module")
def warped():
    return catalog.builtin("warped_slant")


# -- oracle values ----------------------------------------------------------------

def test_polar_T_and_sff(polar):
    v = E4[1]  # unit rotation direction at (1, 0)
    s = oneill_tensors(polar, POLAR_P, v, v)
    assert np.allclose(s.T, [-1, 0, 0, 0], atol=1e-5)
    assert np.allclose(s.T_vertical, 0, atol=1e-5)
    sff = second_fundamental_form(polar, POLAR_P, v, v)
    assert np.allclose(sff.sff, [1, 0], atol=1e-5)
    # omega v = -d1 here, and T_v(omega v) = B T_v v = -d2
    calc = Calculus(polar)
    loc = calc.at(POLAR_P)
    Tw = oneill_tensors(polar, POLAR_P, v, loc.omega @ v, calc).T
    assert np.allclose(loc.omega @ v, [-1, 0, 0, 0], atol=1e-12)
    assert np.allclose(Tw, loc.B @ s.T, atol=1e-5)
    assert np.allclose(Tw, [0, -1, 0, 0], atol=1e-5)
    flat = oneill_tensors(polar, POLAR_P, E4[3], E4[3])
    assert np.allclose(flat.T, 0, atol=1e-5)


def test_polar_tension(polar):
    rep = tension_and_harmonicity(polar, points=[POLAR_P])
    assert np.allclose(rep.details["tau"], [1, 0], atol=1e-5)
    assert rep.verdict == FAIL
    assert rep.details["harmonic"] is False
    assert rep.details["theorem_agreement"]


def test_warped_T_and_tension(warped):
    p = np.zeros(6)
    s = oneill_tensors(warped, p, E6[4], E6[4])
    assert np.allclose(s.T, -E6[2], atol=1e-5)
    rep = tension_and_harmonicity(warped, points=[p])
    # source is not Kahler: raw values kept, verdict gated
    assert rep.verdict == NOT_APPLICABLE
    assert np.allclose(rep.details["tau"], [2, 0], atol=1e-4)


@pytest.mark.parametrize("name", ["ex5_7", "ex5_9", "ex5_10", "ex5_11"])
def test_linear_maps_have_flat_fibers(name):
    spec = catalog.builtin(name)
    rng = np.random.default_rng(3)
    p = PLAN.points(spec)[0]
    for _ in range(3):
        E, F = rng.normal(size=(2, spec.dim_source))
        s = oneill_tensors(spec, p, E, F)
        assert np.allclose(s.T, 0, atol=1e-9) and np.allclose(s.A, 0, atol=1e-9)
        assert np.allclose(second_fundamental_form(spec, p, E, F).sff, 0, atol=1e-12)


def test_radial_mean_curvature():
    spec = catalog.builtin("radial2")
    calc = Calculus(spec)
    H = mean_curvature(calc, np.array([1.0, 0.0]), np.array([[0.0], [1.0]]))
    assert np.allclose(H, [-1, 0], atol=1e-6)


# -- algebraic properties ---------------------------------------------------------

CURVED = ["polar4", "radial2", "warped_slant"]


def _random_pair(spec, seed):
    rng = np.random.default_rng(seed)
    p = PLAN.points(spec)[seed % PLAN.samples]
    return p, rng.normal(size=spec.dim_source), rng.normal(size=spec.dim_source), rng.normal(size=(spec.dim_source,) * 2)


@pytest.mark.parametrize("name", CURVED)
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_tensoriality_in_the_second_slot(name, seed):
    # T_E F and A_E F depend only on F(p), not on how F is extended
    spec = catalog.builtin(name)
    p, E, F, M = _random_pair(spec, seed)
    calc = Calculus(spec)
    curved = lambda x: F + M @ (x - p) + 0.5 * np.sin(x - p)
    for fn in (calc.T, calc.A):
        a = fn(p, E, calc.const(F))
        b = fn(p, E, curved)
        assert np.max(np.abs(a - b)) <= 1e-5 * (1 + np.max(np.abs(a)))


@pytest.mark.parametrize("name", CURVED)
def test_T_symmetric_on_vertical_pairs(name):
    spec = catalog.builtin(name)
    ws = Workspace(spec, PLAN)
    calc = ws.calc
    for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
        K = dec.basis("ker")
        rng = np.random.default_rng(idx)
        U, V = K @ rng.normal(size=K.shape[1]), K @ rng.normal(size=K.shape[1])
        a = calc.T(p, U, calc.vert(V))
        b = calc.T(p, V, calc.vert(U))
        assert np.max(np.abs(a - b)) <= 1e-5


@pytest.mark.parametrize("name", catalog.names())
def test_sff_symmetric_and_matches_pullback(name):
    spec = catalog.builtin(name)
    calc = Calculus(spec)
    for seed in range(3):
        p, E, F, _ = _random_pair(spec, seed)
        s = calc.sff(p, E, F)
        assert np.allclose(s, calc.sff(p, F, E), atol=1e-12)
        # definition: nabla^F_E F_* F - F_*(nabla_E F) with F a constant field
        direct = calc.pullback_nabla(p, E, calc.const(F)) - calc.at(p).jac @ calc.nabla(p, E, calc.const(F))
        assert np.max(np.abs(direct - s)) <= 1e-5 * (1 + np.max(np.abs(s)))


@pytest.mark.parametrize("name", catalog.names())
def test_sff_of_horizontal_pairs_is_normal_to_range(name):
    spec = catalog.builtin(name)
    ws = Workspace(spec, PLAN)
    for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
        Hb = dec.basis("hor")
        rng = np.random.default_rng(idx)
        X, Y = Hb @ rng.normal(size=Hb.shape[1]), Hb @ rng.normal(size=Hb.shape[1])
        s = second_fundamental_form(spec, p, X, Y, ws.calc)
        assert np.max(np.abs(s.sff_range)) <= 1e-8


def test_nabla_phi_omega_needs_vertical_input(polar):
    with pytest.raises(ValueError):
        nabla_phi_omega(polar, POLAR_P, E4[0], E4[1])


def test_nabla_phi_omega_kahler_relations(polar):
    r = nabla_phi_omega(polar, POLAR_P, E4[1], E4[1] + E4[3], kahler=True)
    assert max(r.kahler_residuals.values()) <= 1e-5


# -- checks ---------------------------------------------------------------------

def test_identity_catalogue():
    assert len(IDENTITIES) == 8


def test_fundamental_identities_nontrivial_on_polar(polar):
    rep = fundamental_identities_check(polar, PLAN)
    assert rep.verdict == PASS
    assert rep.max_residual <= 1e-5
    assert max(rep.details["max_term_norm"].values()) > 0.5


def test_fundamental_identities_gated_on_non_kahler(warped):
    assert fundamental_identities_check(warped, PLAN).verdict == NOT_APPLICABLE


def test_polar_totally_geodesic_witness(polar):
    rep = totally_geodesic_check(polar, PLAN)
    assert rep.verdict == FAIL
    assert rep.details["oracle_agreement"]
    assert rep.details["direct_totally_geodesic"] is False
    w = rep.witnesses[0]
    assert np.linalg.norm(w["sff"]) > 1e-3


def test_polar_not_umbilical(polar):
    rep = umbilical_check(polar, points=[POLAR_P])
    assert rep.verdict == FAIL
    w = rep.witnesses[0]
    assert np.linalg.norm(w["T_X_Y"] - w["g_XY_H"]) > 1e-3


def test_radial_umbilical():
    rep = umbilical_check(catalog.builtin("radial2"), points=[np.array([1.0, 0.0])])
    assert rep.verdict == PASS
    assert np.allclose(rep.details["H"], [-1, 0], atol=1e-6)
    assert rep.details["H_in_omega_D2"]


def test_warped_fibers_not_umbilical(warped):
    # the D2 directions are flat while T_u u = -d3 on the warped factor
    rep = umbilical_check(warped, points=[WARPED_P])
    assert rep.verdict == FAIL


@pytest.mark.parametrize("name", catalog.names())
def test_checks_agree_with_their_oracles(name):
    ws = Workspace(catalog.builtin(name), PLAN)
    for fn in (integrability_checks, totally_geodesic_check, decomposition_checks):
        rep = fn(ws=ws)
        if "oracle_agreement" in rep.details:
            assert rep.details["oracle_agreement"], (fn.__name__, rep.details)


def test_polar_decomposition(polar):
    rep = decomposition_checks(polar, PLAN)
    assert rep.details["oracle_autoparallel"]["ker"] > rep.tolerance
    assert rep.details["product_M"] is False
    assert rep.details["oracle_agreement"]


def test_polar_integrable_distributions(polar):
    rep = integrability_checks(polar, PLAN)
    assert rep.verdict == PASS
    assert rep.details["D1_integrable"] and rep.details["D2_integrable"]


def test_tension_matches_flat_linear_map():
    rep = tension_and_harmonicity(catalog.builtin("ex5_7", {"alpha": math.pi / 5}), PLAN)
    assert rep.verdict == PASS and rep.details["harmonic"]


@pytest.mark.parametrize("name", ["ex5_7", "ex5_11"])
def test_constant_structure_shortcut_matches_finite_differences(name):
    fast = catalog.builtin(name)
    slow = catalog.builtin(name)
    slow.__dict__["constant_structure"] = False  # force the stencil path
    assert fast.constant_structure
    p = PLAN.points(fast)[0]
    rng = np.random.default_rng(7)
    cf, cs = Calculus(fast), Calculus(slow)
    for _ in range(3):
        E, F = rng.normal(size=(2, fast.dim_source))
        for chain in (("Pv",), ("phi", "Pv"), ("omega", "Q"), ("jac", "Ph")):
            lin = cf.const(F)
            for op in reversed(chain):
                lin = cf.op(op, lin)
            a = cf.directional(lin, p, E)
            b = cs.directional(lin, p, E)
            assert np.allclose(a, 0) and np.max(np.abs(b)) <= 1e-8


def test_curved_maps_take_the_stencil_path():
    assert not catalog.builtin("polar4").constant_structure
    assert not catalog.builtin("warped_slant").constant_structure
