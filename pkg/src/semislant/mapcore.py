"""Candidate maps, their differentials, and the kernel/range splittings."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import exprlang as el
from .geometry import AlmostComplexField, BoundMatrix, GeometryError, MetricField, christoffel
from .report import FAIL, FLAGGED, PASS, CheckReport
from .sampling import SamplePlan

RANK_TOL = 1e-8
ISOMETRY_TOL = 1e-9


class SpecError(ValueError):
    pass


class RankAmbiguityError(ValueError):
    pass


@dataclass
class MapSpec:
    """A smooth map F between coordinate boxes with metrics and a source J."""

    name: str
    dim_source: int
    dim_target: int
    components: tuple
    metric_source: MetricField
    metric_target: MetricField
    J: AlmostComplexField
    params: dict = field(default_factory=dict)
    box_lo: tuple = ()
    box_hi: tuple = ()
    exclude: el.Expression | None = None
    description: str = ""

    def __post_init__(self):
        m, n = self.dim_source, self.dim_target
        self.components = tuple(el.parse(c, m) if isinstance(c, str) else c for c in self.components)
        if isinstance(self.exclude, str):
            self.exclude = el.parse(self.exclude, m)
        self.params = {k: float(v) for k, v in self.params.items()}
        self.box_lo = tuple(float(v) for v in (self.box_lo or [-1.0] * m))
        self.box_hi = tuple(float(v) for v in (self.box_hi or [1.0] * m))
        self.validate()

    @classmethod
    def build(cls, name, components, dim_source, dim_target=None, metric_source=None,
              metric_target=None, J=None, params=None, box=None, exclude=None, description=""):
        """Convenience constructor taking strings/tags for every field."""
        n = dim_target if dim_target is not None else len(components)
        lo, hi = box if box is not None else ([-1.0] * dim_source, [1.0] * dim_source)
        return cls(
            name=name,
            dim_source=dim_source,
            dim_target=n,
            components=tuple(components),
            metric_source=metric_source if isinstance(metric_source, MetricField)
            else MetricField.from_json(metric_source, dim_source),
            metric_target=metric_target if isinstance(metric_target, MetricField)
            else MetricField.from_json(metric_target, n),
            J=J if isinstance(J, AlmostComplexField) else AlmostComplexField.from_json(J, dim_source),
            params=dict(params or {}),
            box_lo=tuple(lo),
            box_hi=tuple(hi),
            exclude=exclude,
            description=description,
        )

    def validate(self):
        m, n = self.dim_source, self.dim_target
        if len(self.components) != n:
            raise SpecError(f"{self.name}: {len(self.components)} components for target dimension {n}")
        for c in self.components:
            bad = [i for i in el.free_variables(c) if i > m]
            if bad:
                raise SpecError(f"{self.name}: component uses x{bad[0]} beyond source dimension {m}")
        if self.J.dim != m or self.metric_source.dim != m:
            raise SpecError(f"{self.name}: source metric and J must have dimension {m}")
        if self.metric_target.dim != n:
            raise SpecError(f"{self.name}: target metric must have dimension {n}")
        try:
            self.metric_source.check_symmetric()
            self.metric_target.check_symmetric()
        except GeometryError as exc:
            raise SpecError(f"{self.name}: {exc}") from None
        if len(self.box_lo) != m or len(self.box_hi) != m:
            raise SpecError(f"{self.name}: box bounds must have {m} entries")
        if any(a > b for a, b in zip(self.box_lo, self.box_hi)):
            raise SpecError(f"{self.name}: box min exceeds max")
        unbound = self.free_parameters() - set(self.params)
        if unbound:
            raise SpecError(f"{self.name}: unbound parameters {sorted(unbound)}")

    def free_parameters(self) -> set[str]:
        names = set().union(*(el.parameters(c) for c in self.components)) if self.components else set()
        names |= self.metric_source.parameters() | self.metric_target.parameters() | self.J.parameters()
        if self.exclude is not None:
            names |= el.parameters(self.exclude)
        return names

    # -- compiled evaluators ------------------------------------------------

    @cached_property
    def _F(self):
        return el.compile_many(self.components, self.params)

    @cached_property
    def _jac_exprs(self):
        m = self.dim_source
        return [el.differentiate(c, i) for c in self.components for i in range(1, m + 1)]

    @cached_property
    def _jac(self):
        return el.compile_many(self._jac_exprs, self.params)

    @cached_property
    def constant_structure(self) -> bool:
        """Affine F with constant g_M, g_N and J: every pointwise operator is constant."""
        return (
            all(not el.free_variables(e) for e in self._jac_exprs)
            and self.gM.is_const and self.gN.is_const and self.Jb.is_const
        )

    @cached_property
    def _hess(self):
        m = self.dim_source
        first = [[el.differentiate(c, i) for i in range(1, m + 1)] for c in self.components]
        return el.compile_many(
            [el.differentiate(d, j) for row in first for d in row for j in range(1, m + 1)], self.params
        )

    @cached_property
    def _exclude(self):
        return None if self.exclude is None else el.compile_many([self.exclude], self.params)

    @cached_property
    def gM(self) -> BoundMatrix:
        return self.metric_source.bind(self.params)

    @cached_property
    def gN(self) -> BoundMatrix:
        return self.metric_target.bind(self.params)

    @cached_property
    def Jb(self) -> BoundMatrix:
        return self.J.bind(self.params)

    def value(self, x) -> np.ndarray:
        return np.array(self._F(x), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        return np.array(self._jac(x), dtype=float).reshape(self.dim_target, self.dim_source)

    def hessian(self, x) -> np.ndarray:
        """``h[a, i, j]`` = second partial of component a."""
        m = self.dim_source
        return np.array(self._hess(x), dtype=float).reshape(self.dim_target, m, m)

    def excluded(self, x) -> bool:
        """True inside the excluded region, where the exclude expression is >= 0."""
        if self._exclude is None:
            return False
        try:
            return self._exclude(x)[0] >= 0.0
        except el.EvaluationError:
            return True

    def source_christoffel(self, x) -> np.ndarray:
        return christoffel(self.gM, x)

    def target_christoffel(self, y) -> np.ndarray:
        return christoffel(self.gN, y)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "dim_source": self.dim_source,
            "dim_target": self.dim_target,
            "components": [el.to_string(c) for c in self.components],
            "metric_source": self.metric_source.to_json(),
            "metric_target": self.metric_target.to_json(),
            "J": self.J.to_json(),
            "params": dict(sorted(self.params.items())),
            "box": {"min": list(self.box_lo), "max": list(self.box_hi)},
            "exclude": None if self.exclude is None else el.to_string(self.exclude),
        }


def jacobian(spec: MapSpec, p) -> np.ndarray:
    """The differential of F at p as an n x m matrix (symbolic derivatives, then evaluation)."""
    return spec.jacobian(np.asarray(p, dtype=float))


def _chol(G):
    try:
        return np.linalg.cholesky(0.5 * (G + G.T))
    except np.linalg.LinAlgError:
        raise GeometryError("metric is not positive definite") from None


@dataclass(frozen=True)
class PointSplit:
    """Orthonormal bases at p of ker F_*, its complement, range F_* and its complement.

    Source bases are coordinate columns orthonormal for g_M; target bases are
    orthonormal for g_N at F(p).
    """

    point: np.ndarray
    kernel: np.ndarray
    horizontal: np.ndarray
    range: np.ndarray
    range_perp: np.ndarray
    rank: int
    singular_values: np.ndarray
    G: np.ndarray
    H: np.ndarray
    jac: np.ndarray
    ambiguous: bool = False

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.kernel.shape[1], self.horizontal.shape[1], self.range.shape[1], self.range_perp.shape[1])

    @cached_property
    def Pv(self) -> np.ndarray:
        """g_M-orthogonal projector onto ker F_* (acts on coordinate vectors)."""
        return self.kernel @ self.kernel.T @ self.G

    @cached_property
    def Ph(self) -> np.ndarray:
        return self.horizontal @ self.horizontal.T @ self.G

    @cached_property
    def Pbar(self) -> np.ndarray:
        return self.range @ self.range.T @ self.H

    @cached_property
    def Qbar(self) -> np.ndarray:
        return self.range_perp @ self.range_perp.T @ self.H


def point_split(spec: MapSpec, p, tol: float = RANK_TOL) -> PointSplit:
    """SVD of F_* in metric-orthonormal coordinates at p.

    Raises :class:`RankAmbiguityError` only via callers that demand a clean
    rank; here an ambiguous spectrum (a relative singular value within
    ``[tol/10, tol*10]``) sets ``ambiguous``.
    """
    p = np.asarray(p, dtype=float)
    m, n = spec.dim_source, spec.dim_target
    Jac = spec.jacobian(p)
    G = spec.gM.value(p)
    H = spec.gN.value(spec.value(p)) if not spec.gN.is_const else spec.gN.value(None)
    L, Mn = _chol(G), _chol(H)
    Linv_T = np.linalg.inv(L).T
    Mn_inv_T = np.linalg.inv(Mn).T
    A = Mn.T @ Jac @ Linv_T
    U, s, Wt = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        rank, ambiguous = 0, False
    else:
        rel = s / smax
        rank = int(np.sum(rel >= tol))
        ambiguous = bool(np.any((rel >= tol / 10) & (rel <= tol * 10)))
    W = Wt.T
    return PointSplit(
        point=p,
        kernel=Linv_T @ W[:, rank:],
        horizontal=Linv_T @ W[:, :rank],
        range=Mn_inv_T @ U[:, :rank],
        range_perp=Mn_inv_T @ U[:, rank:],
        rank=rank,
        singular_values=s,
        G=G,
        H=H,
        jac=Jac,
        ambiguous=ambiguous,
    )


def _points(spec, plan, points):
    if points is not None:
        return [np.asarray(p, dtype=float) for p in points]
    return plan.points(spec)


def riemannian_map_check(
    spec: MapSpec, plan: SamplePlan | None = None, points: Sequence | None = None, tol: float = ISOMETRY_TOL
) -> CheckReport:
    """Is F_* an isometry from the horizontal space onto its range at every sample?"""
    plan = plan or SamplePlan()
    pts = _points(spec, plan, points)
    residuals, ranks, witnesses, ambiguous = [], [], [], []
    for idx, p in enumerate(pts):
        sp = point_split(spec, p)
        img = sp.jac @ sp.horizontal
        gram = img.T @ sp.H @ img
        r = float(np.max(np.abs(gram - np.eye(sp.rank)))) if sp.rank else 0.0
        residuals.append(r)
        ranks.append(sp.rank)
        if sp.ambiguous:
            ambiguous.append(idx)
        if r > tol:
            witnesses.append({"sample": idx, "point": p, "gram": gram})
    constant = len(set(ranks)) <= 1
    verdict = PASS if max(residuals, default=0.0) <= tol else FAIL
    notes = []
    if ambiguous:
        verdict = FLAGGED if verdict == PASS else verdict
        notes.append(f"rank ambiguous at samples {ambiguous}")
    if not constant:
        # a rank jump on one box is reported, not failed
        notes.append(f"rank not constant over samples: {sorted(set(ranks))}")
    return CheckReport(
        "riemannian_map",
        verdict,
        tol,
        residuals=residuals,
        witnesses=witnesses[:3],
        details={"rank": ranks[0] if ranks else None, "ranks": sorted(set(ranks)), "rank_constant": constant},
        notes=notes,
    )


def hilbert_schmidt_sq(sp: PointSplit) -> float:
    """|F_*|^2 summed over a g_M-orthonormal basis, lengths measured with g_N."""
    L = _chol(sp.G)
    basis = np.linalg.inv(L).T  # columns g_M-orthonormal
    img = sp.jac @ basis
    return float(np.einsum("ai,ab,bi->", img, sp.H, img))


def eikonal_check(
    spec: MapSpec, plan: SamplePlan | None = None, points: Sequence | None = None, tol: float = ISOMETRY_TOL
) -> CheckReport:
    """Eikonal check: |F_*|^2 = rank F, where the energy density is e(F) = |F_*|^2 / 2."""
    plan = plan or SamplePlan()
    pts = _points(spec, plan, points)
    residuals, norms, ranks = [], [], []
    for p in pts:
        sp = point_split(spec, p)
        hs = hilbert_schmidt_sq(sp)
        norms.append(hs)
        ranks.append(sp.rank)
        residuals.append(abs(hs - sp.rank))
    return CheckReport(
        "eikonal",
        PASS if max(residuals, default=0.0) <= tol else FAIL,
        tol,
        residuals=residuals,
        details={
            "norm_sq": norms,
            "two_energy_density": norms,
            "rank": ranks,
        },
    )
