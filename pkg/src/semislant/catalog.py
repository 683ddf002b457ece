"""Built-in maps: the published flat examples, curved desk instances and negative controls.

Each entry records expected results with a provenance tag:

* ``published``  value stated with the original example
* ``derived``    hand or oracle computation made independently of this code
* ``convention`` a value fixed by a convention of this tool (e.g. theta = 0 when D2 = 0)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .geometry import MetricField
from .mapcore import MapSpec

PUBLISHED = "published"
DERIVED = "derived"
CONVENTION = "convention"

DEFAULT_PARAMS = {"alpha": math.pi / 6, "beta": math.pi / 6, "gamma": 0.0, "c": 0.0}


class CatalogError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "catalog error"


@dataclass(frozen=True)
class Expectation:
    value: object
    source: str


@dataclass
class CatalogEntry:
    name: str
    summary: str
    params: tuple[str, ...]
    make: Callable[[dict], MapSpec]
    expect: Callable[[dict], dict[str, Expectation]]
    control: bool = False
    defaults: dict = field(default_factory=dict)

    def bind(self, params: Mapping[str, float] | None = None) -> dict:
        params = dict(params or {})
        unknown = set(params) - set(self.params)
        if unknown:
            raise CatalogError(f"{self.name}: unknown parameter(s) {sorted(unknown)}; accepts {list(self.params)}")
        bound = {k: float(params.get(k, self.defaults.get(k, DEFAULT_PARAMS.get(k)))) for k in self.params}
        missing = [k for k, v in bound.items() if v is None or math.isnan(v)]
        if missing:
            raise CatalogError(f"{self.name}: missing parameter(s) {missing}")
        return bound

    def spec(self, params: Mapping[str, float] | None = None) -> MapSpec:
        return self.make(self.bind(params))

    def expected(self, params: Mapping[str, float] | None = None) -> dict[str, Expectation]:
        return self.expect(self.bind(params))


def _box(lo, hi):
    return (list(map(float, lo)), list(map(float, hi)))


def _ex5_7(p):
    return MapSpec.build(
        "ex5_7",
        ["x2", "x1", "(x5*cos(alpha) + x6*sin(alpha) + x4)/sqrt(2)", "0", "x5*sin(alpha) - x6*cos(alpha)"],
        8, params=p, box=_box([-1] * 8, [1] * 8),
        description="R^8 -> R^5, linear; D1 and D2 both of dimension 2",
    )


def _ex5_8(p):
    return MapSpec.build(
        "ex5_8", ["x1*cos(alpha) - x3*sin(alpha)", "c", "x4"], 6, params=p, box=_box([-1] * 6, [1] * 6),
        description="R^6 -> R^3, linear with a constant component",
    )


def _ex5_9(p):
    return MapSpec.build(
        "ex5_9",
        ["x4", "0", "x3", "(x5 - x6)/sqrt(2)", "0", "(x7 + x9)/sqrt(2)", "(x8 + x10)/sqrt(2)"],
        10, params=p, box=_box([-1] * 10, [1] * 10),
        description="R^10 -> R^7, linear; slant part at a right angle",
    )


def _ex5_10(p):
    return MapSpec.build(
        "ex5_10", ["(x3 + x5)/sqrt(2)", "2012", "x6", "(x7 + x9)/sqrt(2)", "x8"], 10, params=p,
        box=_box([-1] * 10, [1] * 10), description="R^10 -> R^5, linear",
    )


def _ex5_11(p):
    return MapSpec.build(
        "ex5_11",
        ["x8", "x7", "gamma", "x3*cos(alpha) - x5*sin(alpha)", "x4*sin(beta) - x6*cos(beta)"],
        8, params=p, box=_box([-1] * 8, [1] * 8),
        description="R^8 -> R^5, two-parameter family with cos(theta) = |sin(alpha + beta)|",
    )


def _polar4(p):
    return MapSpec.build(
        "polar4", ["sqrt(x1^2 + x2^2)", "x3"], 4, params=p,
        box=_box([0.5, -0.5, -1, -1], [1.5, 0.5, 1, 1]), exclude="0.0625 - x1^2 - x2^2",
        description="R^4 minus the x3x4-plane -> R^2, radius and height; curved circular fibers",
    )


def _radial2(p):
    return MapSpec.build(
        "radial2", ["sqrt(x1^2 + x2^2)"], 2, params=p,
        box=_box([0.5, -0.5], [1.5, 0.5]), exclude="0.0625 - x1^2 - x2^2",
        description="R^2 minus the origin -> R, distance to the origin; circles as fibers",
    )


def _warped(p):
    return MapSpec.build(
        "warped_slant", ["x3", "sin(alpha)*x2 - cos(alpha)*x4"], 6,
        metric_source=MetricField.diagonal(["1", "1", "1", "1", "exp(2*x3)", "exp(2*x3)"]),
        params=p, box=_box([-1, -1, -0.5, -1, -1, -1], [1, 1, 0.5, 1, 1, 1]),
        description="R^4 x_f R^2 with warping f = exp(x3), map factoring through a slant map of R^4",
    )


def _scaled(p):
    return MapSpec.build("scaled", ["2*x1"], 2, params=p, description="non-isometric scaling (negative control)")


def _tilt(p):
    return MapSpec.build(
        "tilt", ["x3 + x1^2/2", "x4"], 4, params=p, box=_box([0.5, -1, -1, -1], [1.5, 1, 1, 1]),
        description="kernel tilting with x1: pointwise slant angle arctan(x1) (negative control)",
    )


def _tilt_hyperplane(p):
    return MapSpec.build(
        "tilt_hyperplane", ["x3 + x1^2/2"], 4, params=p, box=_box([0.5, -1, -1, -1], [1.5, 1, 1, 1]),
        description="single-component tilt: the slant part is one-dimensional, angle pi/2 everywhere",
    )


def _identity2(p):
    return MapSpec.build("identity2", ["x1", "x2"], 2, params=p, description="identity of R^2")


def _flat(rank, d1, d2, theta, theta_src, kahler=True, dims_src=PUBLISHED, **extra):
    base = {
        "riemannian_map": Expectation(True, DERIVED),
        "rank": Expectation(rank, dims_src),
        "dim_D1": Expectation(d1, dims_src),
        "dim_D2": Expectation(d2, dims_src),
        "theta": Expectation(theta, theta_src),
        "kahler": Expectation(kahler, DERIVED),
        "harmonic": Expectation(True, DERIVED),
        "totally_geodesic": Expectation(True, DERIVED),
        "umbilical": Expectation(True, DERIVED),
    }
    base.update(extra)
    return base


def _exp_ex5_11(p):
    s = abs(math.sin(p["alpha"] + p["beta"]))
    theta = math.acos(min(1.0, s))
    if abs(s - 1.0) < 1e-12:
        # slant part becomes J-invariant and merges into D1
        return _flat(4, 4, 0, 0.0, CONVENTION)
    return _flat(4, 2, 2, theta, PUBLISHED)


def _exp_ex5_8(p):
    e = _flat(2, 2, 2, math.pi / 2 - p["alpha"], DERIVED)
    e["published_theta"] = Expectation(p["alpha"], PUBLISHED)
    return e


CATALOG: dict[str, CatalogEntry] = {}
CONTROLS: dict[str, CatalogEntry] = {}


def _register(entry: CatalogEntry):
    (CONTROLS if entry.control else CATALOG)[entry.name] = entry


_register(CatalogEntry("ex5_7", "R^8 -> R^5 linear, theta = pi/4", ("alpha",), _ex5_7,
                       lambda p: _flat(4, 2, 2, math.pi / 4, PUBLISHED)))
_register(CatalogEntry("ex5_8", "R^6 -> R^3 linear, published theta = alpha", ("alpha", "c"), _ex5_8, _exp_ex5_8))
_register(CatalogEntry("ex5_9", "R^10 -> R^7 linear, theta = pi/2", (), _ex5_9,
                       lambda p: _flat(5, 4, 1, math.pi / 2, PUBLISHED)))
_register(CatalogEntry("ex5_10", "R^10 -> R^5 linear, theta = pi/4", (), _ex5_10,
                       lambda p: _flat(4, 2, 4, math.pi / 4, PUBLISHED)))
_register(CatalogEntry("ex5_11", "R^8 -> R^5 linear, cos(theta) = |sin(alpha + beta)|",
                       ("alpha", "beta", "gamma"), _ex5_11, _exp_ex5_11))
_register(CatalogEntry("polar4", "R^4 minus a plane -> R^2, curved circular fibers", (), _polar4,
                       lambda p: _flat(2, 0, 2, math.pi / 2, DERIVED,
                                       harmonic=Expectation(False, DERIVED),
                                       totally_geodesic=Expectation(False, DERIVED),
                                       umbilical=Expectation(False, DERIVED), dims_src=DERIVED)))
_register(CatalogEntry("radial2", "R^2 minus the origin -> R, circular fibers", (), _radial2,
                       lambda p: _flat(1, 0, 1, math.pi / 2, DERIVED,
                                       harmonic=Expectation(False, DERIVED),
                                       totally_geodesic=Expectation(False, DERIVED),
                                       umbilical=Expectation(True, DERIVED), dims_src=DERIVED)))
_register(CatalogEntry("warped_slant", "warped product R^4 x_f R^2 over a slant map, theta = alpha", ("alpha",),
                       _warped,
                       lambda p: {
                           "riemannian_map": Expectation(True, DERIVED),
                           "rank": Expectation(2, DERIVED),
                           "dim_D1": Expectation(2, DERIVED),
                           "dim_D2": Expectation(2, DERIVED),
                           "theta": Expectation(p["alpha"], DERIVED),
                           "kahler": Expectation(False, DERIVED),
                       }))
_register(CatalogEntry("scaled", "2 x1 on R^2, not a Riemannian map", (), _scaled,
                       lambda p: {"riemannian_map": Expectation(False, DERIVED)}, control=True))
_register(CatalogEntry("tilt", "(x3 + x1^2/2, x4) on R^4, non-constant slant angle", (), _tilt,
                       lambda p: {"semi_slant": Expectation(False, DERIVED)}, control=True))
_register(CatalogEntry("tilt_hyperplane", "x3 + x1^2/2 on R^4, angle pi/2 at every point", (), _tilt_hyperplane,
                       lambda p: {"theta": Expectation(math.pi / 2, DERIVED)}, control=True))
_register(CatalogEntry("identity2", "identity of R^2", (), _identity2,
                       lambda p: {"rank": Expectation(2, DERIVED), "totally_geodesic": Expectation(True, DERIVED)},
                       control=True))


def entry(name: str) -> CatalogEntry:
    if name in CATALOG:
        return CATALOG[name]
    if name in CONTROLS:
        return CONTROLS[name]
    raise CatalogError(f"unknown catalog map {name!r}; known: {', '.join(list(CATALOG) + list(CONTROLS))}")


def builtin(name: str, params: Mapping[str, float] | None = None) -> MapSpec:
    """The catalog map ``name`` with ``params`` over the defaults."""
    return entry(name).spec(params)


def names(include_controls: bool = False) -> list[str]:
    return list(CATALOG) + (list(CONTROLS) if include_controls else [])
