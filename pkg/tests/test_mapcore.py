import math

import numpy as np
import pytest

from semislant import catalog
from semislant.exprlang import ExpressionError
from semislant.mapcore import (
    MapSpec,
    SpecError,
    eikonal_check,
    jacobian,
    point_split,
    riemannian_map_check,
)
from semislant.report import FAIL, PASS
from semislant.sampling import SamplePlan

PLAN = SamplePlan(samples=12)


def test_ex5_7_jacobian_entry():
    a = 0.4
    spec = catalog.builtin("ex5_7", {"alpha": a})
    J = jacobian(spec, np.linspace(0.1, 0.8, 8))
    assert J[2, 4] == pytest.approx(math.cos(a) / math.sqrt(2), abs=1e-15)


def test_zero_map_has_rank_zero():
    spec = MapSpec.build("zero", ["0", "0"], 4)
    assert not jacobian(spec, np.ones(4)).any()
    assert point_split(spec, np.ones(4)).rank == 0
    rep = eikonal_check(spec, PLAN)
    assert rep.verdict == PASS and max(rep.details["norm_sq"]) == 0.0


def test_ex5_8_rank_two_everywhere():
    spec = catalog.builtin("ex5_8")
    rep = riemannian_map_check(spec, PLAN)
    assert rep.details["ranks"] == [2]


@pytest.mark.parametrize("name,dims", [
    ("ex5_7", (4, 4, 4, 1)),
    ("identity2", (0, 2, 2, 0)),
])
def test_split_dimensions(name, dims):
    spec = catalog.builtin(name)
    p = PLAN.points(spec)[0]
    assert point_split(spec, p).dims == dims


def test_ex5_9_kernel_dimension():
    spec = catalog.builtin("ex5_9")
    assert point_split(spec, PLAN.points(spec)[0]).dims[0] == 5


def test_scaled_map_fails_with_residual_three():
    rep = riemannian_map_check(catalog.builtin("scaled"), PLAN)
    assert rep.verdict == FAIL
    assert rep.max_residual == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("name", ["ex5_7", "polar4", "radial2", "warped_slant"])
def test_riemannian_maps_pass(name):
    rep = riemannian_map_check(catalog.builtin(name), PLAN)
    assert rep.verdict == PASS
    assert rep.details["rank_constant"]


@pytest.mark.parametrize("name,value", [("ex5_7", 4.0), ("ex5_10", 4.0), ("polar4", 2.0)])
def test_eikonal_values(name, value):
    rep = eikonal_check(catalog.builtin(name), PLAN)
    assert rep.verdict == PASS
    assert np.allclose(rep.details["norm_sq"], value, atol=1e-9)
    assert rep.details["two_energy_density"] == rep.details["norm_sq"]


def test_validation_errors():
    with pytest.raises(SpecError):
        MapSpec.build("bad", ["x1"], 2, dim_target=2)
    with pytest.raises(ExpressionError):
        MapSpec.build("bad", ["x3"], 2)


# -- invariants over the whole catalog -------------------------------------------

NAMES = catalog.names(include_controls=True)


@pytest.mark.parametrize("name", NAMES)
def test_split_orthonormal_and_kernel_annihilated(name):
    spec = catalog.builtin(name)
    for p in PLAN.points(spec):
        sp = point_split(spec, p)
        src = np.hstack([sp.kernel, sp.horizontal])
        tgt = np.hstack([sp.range, sp.range_perp])
        assert np.max(np.abs(src.T @ sp.G @ src - np.eye(spec.dim_source))) <= 1e-10
        assert np.max(np.abs(tgt.T @ sp.H @ tgt - np.eye(spec.dim_target))) <= 1e-10
        if sp.kernel.shape[1]:
            assert np.max(np.linalg.norm(sp.jac @ sp.kernel, axis=0)) <= 1e-8
        # F_* sends the horizontal span into the range span
        img = sp.jac @ sp.horizontal
        assert np.max(np.abs(sp.Qbar @ img)) <= 1e-10


@pytest.mark.parametrize("name", NAMES)
def test_rank_constant_over_box(name):
    rep = riemannian_map_check(catalog.builtin(name), PLAN)
    assert rep.details["rank_constant"]


@pytest.mark.parametrize("name", catalog.names())
def test_projectors_are_idempotent_and_complementary(name):
    spec = catalog.builtin(name)
    sp = point_split(spec, PLAN.points(spec)[1])
    m = spec.dim_source
    assert np.allclose(sp.Pv @ sp.Pv, sp.Pv, atol=1e-10)
    assert np.allclose(sp.Pv + sp.Ph, np.eye(m), atol=1e-10)
    assert np.allclose(sp.Pbar + sp.Qbar, np.eye(spec.dim_target), atol=1e-10)
