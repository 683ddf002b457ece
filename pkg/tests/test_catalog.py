import json
import math
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from semislant import analyze, catalog
from semislant.analysis import CHECK_ORDER, DISCREPANCY, MISMATCH
from semislant.catalog import CONVENTION, DERIVED, PUBLISHED, CatalogError
from semislant.exprlang import to_string
from semislant.report import PASS

GOLDEN = Path(__file__).parent / "golden"
ALL = catalog.names(include_controls=True)


@lru_cache(maxsize=None)
def report(name):
    e = catalog.entry(name)
    return analyze(e.spec(), expected=e.expected())


@pytest.mark.parametrize("name", ALL)
def test_matches_golden(name):
    gold = json.loads((GOLDEN / f"{name}.json").read_text())
    rep = report(name)
    s = rep.summary
    assert [c.name for c in rep.checks] == list(CHECK_ORDER)
    assert {c.name: c.verdict for c in rep.checks} == gold["verdicts"]
    assert (s["rank"], s["dim_D1"], s["dim_D2"]) == (gold["rank"], gold["dim_D1"], gold["dim_D2"])
    if gold["theta"] is None:
        assert s["theta"] is None
    else:
        assert s["theta"] == pytest.approx(gold["theta"], abs=1e-9)
    assert sorted(a["kind"] for a in rep.annotations) == gold["annotations"]


@pytest.mark.parametrize("name", ALL)
def test_no_expectation_mismatch(name):
    assert not [a for a in report(name).annotations if a["kind"] == MISMATCH]


@pytest.mark.parametrize("name", catalog.names())
def test_expectations_are_tagged(name):
    for key, exp in catalog.entry(name).expected().items():
        assert exp.source in (PUBLISHED, DERIVED, CONVENTION), key


def test_ex5_9_formula():
    spec = catalog.builtin("ex5_9")
    got = [to_string(c).replace(" ", "") for c in spec.components]
    assert got[0] == "x4" and got[2] == "x3"
    assert spec.dim_source == 10 and spec.dim_target == 7


def test_ex5_11_constant_component_does_not_matter():
    spec = catalog.builtin("ex5_11", {"gamma": 1.0})
    rep = analyze(spec)
    assert rep.summary["theta"] == pytest.approx(math.pi / 6, abs=1e-9)


def test_ex5_11_degenerate_cell_merges_slant_part():
    e = catalog.entry("ex5_11")
    params = {"alpha": math.pi / 4, "beta": math.pi / 4}
    rep = analyze(e.spec(params), expected=e.expected(params))
    assert (rep.summary["dim_D1"], rep.summary["dim_D2"]) == (4, 0)
    assert rep.summary["theta"] == 0.0
    assert e.expected(params)["theta"].source == CONVENTION


def test_warped_slant_parameter():
    rep = analyze(catalog.builtin("warped_slant", {"alpha": math.pi / 3}))
    s = rep.summary
    assert (s["dim_D1"], s["dim_D2"]) == (2, 2)
    assert s["theta"] == pytest.approx(math.pi / 3, abs=1e-9)
    assert s["kahler"] is False


def test_ex5_8_discrepancy_annotation():
    a = 0.3
    e = catalog.entry("ex5_8")
    rep = analyze(e.spec({"alpha": a}), expected=e.expected({"alpha": a}))
    assert rep.summary["theta"] == pytest.approx(math.pi / 2 - a, abs=1e-8)
    assert [x["kind"] for x in rep.annotations].count(DISCREPANCY) == 1


def test_ex5_8_no_discrepancy_where_values_coincide():
    e = catalog.entry("ex5_8")
    params = {"alpha": math.pi / 4}
    rep = analyze(e.spec(params), expected=e.expected(params))
    assert DISCREPANCY not in [x["kind"] for x in rep.annotations]


def test_unknown_name_and_parameters():
    with pytest.raises(CatalogError):
        catalog.builtin("ex9_9")
    with pytest.raises(CatalogError):
        catalog.builtin("ex5_7", {"beta": 1.0})
    with pytest.raises(CatalogError):
        catalog.builtin("ex5_7", {"alpha": float("nan")})


def test_controls_are_separate():
    assert not set(catalog.names()) & {"scaled", "tilt", "tilt_hyperplane", "identity2"}
    assert set(ALL) >= {"scaled", "tilt", "tilt_hyperplane", "identity2"}


def test_defaults():
    spec = catalog.builtin("ex5_7")
    assert spec.params["alpha"] == pytest.approx(math.pi / 6)
    assert catalog.entry("ex5_11").bind() == {"alpha": math.pi / 6, "beta": math.pi / 6, "gamma": 0.0}


def test_catalog_maps_pass_their_structure_checks():
    for name in catalog.names():
        rep = report(name)
        for check in ("riemannian_map", "eikonal", "semi_slant", "structural_identities"):
            assert rep.check(check).verdict == PASS, (name, check)


def test_polar_box_avoids_axis():
    spec = catalog.builtin("polar4")
    rep = report("polar4")
    lo = np.array(spec.box_lo)
    assert rep.check("riemannian_map").verdict == PASS
    assert lo[0] > 0
