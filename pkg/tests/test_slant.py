import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from semislant import catalog
from semislant.mapcore import MapSpec
from semislant.report import FAIL, NOT_APPLICABLE, PASS
from semislant.sampling import SamplePlan
from semislant.slant import (
    NotApplicable,
    adapted_frame,
    adapted_frame_check,
    decompose_samples,
    jhat,
    jhat_check,
    kernel_split,
    semi_slant_verify,
    slant_angle,
    slant_angle_pair,
    structural_residuals,
    structure_operators,
)

PLAN = SamplePlan(samples=10)
E = np.eye(10)


def _dec(name, params=None, idx=0):
    spec = catalog.builtin(name, params)
    return spec, structure_operators(spec, PLAN.points(spec)[idx])


def _span_equal(A, B):
    """Same column span: projecting each onto the other changes nothing."""
    def proj(M):
        return M @ np.linalg.pinv(M)
    return np.allclose(proj(A), proj(B), atol=1e-10)


def test_ex5_7_invariant_part():
    spec, dec = _dec("ex5_7")
    assert dec.dims == (2, 2)
    assert _span_equal(dec.basis("D1"), E[:8, 6:8])


def test_J_invariant_plane_has_no_slant_part():
    spec = MapSpec.build("plane", ["x3", "x4"], 4)
    D1, D2, *_ = kernel_split(spec, np.zeros(4))
    assert D1.shape[1] == 2 and D2.shape[1] == 0
    assert _span_equal(D1, np.eye(4)[:, :2])


def test_ex5_7_operators_on_coordinate_vectors():
    a = math.pi / 6
    spec, dec = _dec("ex5_7", {"alpha": a})
    X = E[:8, 2]
    u = dec.to_ortho(X)
    phiX = dec.from_ortho(dec.phi @ u)
    assert np.linalg.norm(phiX) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    direction = np.array([0, 0, 0, 1, -math.cos(a), -math.sin(a), 0, 0])
    assert abs(abs(phiX @ direction) / (np.linalg.norm(phiX) * np.linalg.norm(direction)) - 1) < 1e-12
    assert slant_angle(dec, X) == pytest.approx(math.pi / 4, abs=1e-12)
    assert np.allclose(dec.omega @ dec.to_ortho(E[:8, 6]), 0, atol=1e-12)


def test_ex5_9_right_angle():
    spec, dec = _dec("ex5_9")
    assert dec.dims == (4, 1)
    assert slant_angle(dec, E[:, 4] + E[:, 5]) == pytest.approx(math.pi / 2, abs=1e-12)


def test_ex5_11_angle_at_default_parameters():
    a = b = math.pi / 6
    spec, dec = _dec("ex5_11", {"alpha": a, "beta": b, "gamma": 0.0})
    X = math.sin(a) * E[:8, 2] + math.cos(a) * E[:8, 4]
    assert slant_angle(dec, X) == pytest.approx(math.pi / 6, abs=1e-12)
    direct, quad = slant_angle_pair(dec, X)
    assert abs(direct - quad) <= 1e-9


def test_slant_angle_rejects_bad_vectors():
    spec, dec = _dec("ex5_7")
    with pytest.raises(ValueError):
        slant_angle(dec, np.zeros(8))
    with pytest.raises(ValueError):
        slant_angle(dec, E[:8, 6])


def test_ex5_10_semi_slant():
    rep = semi_slant_verify(catalog.builtin("ex5_10"), PLAN)
    assert rep.verdict == PASS
    assert (rep.details["dim_D1"], rep.details["dim_D2"]) == (2, 4)
    assert rep.details["theta"] == pytest.approx(math.pi / 4, abs=1e-9)
    assert rep.details["theta_spread"] < 1e-9


def test_tilted_kernel_fails_constant_angle():
    rep = semi_slant_verify(catalog.builtin("tilt"), PLAN)
    assert rep.verdict == FAIL
    assert rep.details["theta_spread"] > 1e-2


def test_tilted_hyperplane_angle_is_constant():
    # the kernel of a single function always meets J(kernel) in codimension 2
    rep = semi_slant_verify(catalog.builtin("tilt_hyperplane"), PLAN)
    assert rep.details["theta"] == pytest.approx(math.pi / 2, abs=1e-9)
    assert rep.details["theta_spread"] <= 1e-9


def test_adapted_frame_ex5_7():
    spec, dec = _dec("ex5_7")
    frame = adapted_frame(dec)
    assert frame.multiplicities == (1, 1, 1)
    assert [len(frame.D1), len(frame.D2), len(frame.omegaD2), len(frame.mu)] == [2, 2, 2, 2]
    assert frame.gram_residual < 1e-9
    V = np.column_stack(frame.D2)
    assert _span_equal(V, dec.D2_o)
    assert _span_equal(np.column_stack(frame.omegaD2), dec.omegaD2_o)


def test_adapted_frame_and_jhat_not_applicable_at_right_angle():
    spec, dec = _dec("ex5_9")
    with pytest.raises(NotApplicable):
        adapted_frame(dec)
    assert adapted_frame_check([dec]).verdict == NOT_APPLICABLE
    assert jhat_check([dec]).verdict == NOT_APPLICABLE


@pytest.mark.parametrize("name", ["ex5_7", "ex5_10", "ex5_11", "warped_slant"])
def test_jhat_is_complex_structure_on_kernel(name):
    _, decs = decompose_samples(catalog.builtin(name), PLAN)
    rep = jhat_check(decs)
    assert rep.verdict == PASS
    Jh = jhat(decs[0])
    K = decs[0].ker_o
    assert np.allclose(Jh @ Jh @ K, -K, atol=1e-9)


# -- invariants ---------------------------------------------------------------

SLANT = ["ex5_7", "ex5_9", "ex5_10", "ex5_11", "polar4", "radial2", "warped_slant"]


@pytest.mark.parametrize("name", SLANT)
def test_structural_ledger_clean(name):
    _, decs = decompose_samples(catalog.builtin(name), PLAN)
    for dec in decs:
        r = structural_residuals(dec)
        assert max(r.values()) <= 1e-9, r


@pytest.mark.parametrize("name", SLANT)
def test_mu_complements_omega_D2(name):
    _, decs = decompose_samples(catalog.builtin(name), PLAN)
    for dec in decs:
        W = np.hstack([dec.omegaD2_o, dec.mu_o])
        assert W.shape[1] == dec.hor_o.shape[1]
        assert np.allclose(W.T @ W, np.eye(W.shape[1]), atol=1e-10)
        assert np.allclose(dec.D1_o.T @ dec.D2_o, 0, atol=1e-10)


@pytest.mark.parametrize("name", ["ex5_7", "ex5_10", "ex5_11", "warped_slant"])
def test_converse_path_agrees(name):
    rep = semi_slant_verify(catalog.builtin(name), PLAN)
    assert rep.verdict == PASS
    assert rep.details["eigen_residual"] <= 1e-8
    assert rep.details["converse_gap"] <= 1e-9
    assert abs(rep.details["converse_theta"] - rep.details["theta"]) <= 1e-9


def test_dimension_jump_is_reported():
    # kernel of x1*x2 jumps from 3 to 4 where the gradient vanishes
    spec = MapSpec.build("jump", ["x1*x2"], 4)
    pts = [np.array([0.5, 0.5, 0, 0]), np.array([0.0, 0.0, 0.1, 0.1])]
    rep = semi_slant_verify(spec, PLAN, points=pts)
    assert rep.verdict == FAIL
    assert not rep.details["dims_constant"]
    assert len(rep.witnesses) >= 2


angle = st.floats(0.05, math.pi / 2 - 0.05)


@settings(max_examples=25, deadline=None)
@given(angle, angle)
def test_ex5_11_formula_property(a, b):
    assume(abs(abs(math.sin(a + b)) - 1) > 1e-3)
    spec = catalog.builtin("ex5_11", {"alpha": a, "beta": b, "gamma": 0.0})
    rep = semi_slant_verify(spec, SamplePlan(samples=3, vectors=3))
    assert rep.details["theta"] == pytest.approx(math.acos(abs(math.sin(a + b))), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, math.pi / 2 - 0.05))
def test_warped_slant_angle_is_alpha(a):
    rep = semi_slant_verify(catalog.builtin("warped_slant", {"alpha": a}), SamplePlan(samples=3, vectors=3))
    assert rep.verdict == PASS
    assert rep.details["theta"] == pytest.approx(a, abs=1e-9)
