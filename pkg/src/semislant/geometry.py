"""Metrics, Christoffel symbols, covariant derivatives and almost complex structures."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import exprlang as el
from .report import CheckReport, FAIL, PASS

EUCLIDEAN = "euclidean"
CANONICAL = "canonical"

DEFAULT_STEP = 1e-5
PD_FLOOR = 1e-10


class GeometryError(ValueError):
    pass


def _as_expr(e, dim):
    if isinstance(e, str):
        return el.parse(e, dim)
    if isinstance(e, (int, float)):
        return el.Const(float(e))
    return e


def _parse_matrix(rows, dim):
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise GeometryError(f"expected a {dim}x{dim} matrix")
    return tuple(tuple(_as_expr(e, dim) for e in row) for row in rows)


class _MatrixField:
    """Square matrix of expressions; ``entries is None`` marks the tagged constant case."""

    tag = ""

    def __init__(self, dim: int, entries=None):
        self.dim = int(dim)
        self.entries = None if entries is None else _parse_matrix(entries, self.dim)
        self._bound: dict = {}

    @property
    def is_tagged(self) -> bool:
        return self.entries is None

    def parameters(self) -> set[str]:
        if self.entries is None:
            return set()
        return set().union(*(el.parameters(e) for row in self.entries for e in row))

    def to_json(self):
        if self.entries is None:
            return self.tag
        return [[el.to_string(e) for e in row] for row in self.entries]

    def _constant(self) -> np.ndarray:
        raise NotImplementedError

    def bind(self, params: Mapping[str, float] | None = None) -> "BoundMatrix":
        params = dict(params or {})
        key = tuple(sorted(params.items()))
        if key not in self._bound:
            if self.entries is None:
                self._bound[key] = BoundMatrix(self.dim, constant=self._constant())
            else:
                self._bound[key] = BoundMatrix(self.dim, entries=self.entries, params=params)
        return self._bound[key]


class BoundMatrix:
    """A matrix field with parameters fixed: fast value and first derivatives."""

    def __init__(self, dim, constant=None, entries=None, params=None):
        self.dim = dim
        self.constant = constant
        if entries is not None:
            flat = [e for row in entries for e in row]
            self.is_const = all(not el.free_variables(e) for e in flat)
            self._value = el.compile_many(flat, params)
            self._deriv = el.compile_many(
                [el.differentiate(e, l) for l in range(1, dim + 1) for e in flat], params
            )
            if self.is_const:
                self.constant = np.array(self._value(np.zeros(dim)), dtype=float).reshape(dim, dim)
        else:
            self.is_const = True

    def value(self, x) -> np.ndarray:
        if self.constant is not None:
            return self.constant
        return np.array(self._value(x), dtype=float).reshape(self.dim, self.dim)

    def derivative(self, x) -> np.ndarray:
        """Array ``d[l, i, j]`` = partial_l of entry (i, j)."""
        n = self.dim
        if self.is_const:
            return np.zeros((n, n, n))
        return np.array(self._deriv(x), dtype=float).reshape(n, n, n)


class MetricField(_MatrixField):
    """Riemannian metric on a coordinate box, as an n x n matrix of expressions."""

    tag = EUCLIDEAN

    def _constant(self):
        return np.eye(self.dim)

    @classmethod
    def euclidean(cls, dim: int) -> "MetricField":
        return cls(dim)

    @classmethod
    def from_json(cls, value, dim: int) -> "MetricField":
        if value == EUCLIDEAN or value is None:
            return cls(dim)
        return cls(dim, value)

    @classmethod
    def diagonal(cls, diag: Sequence[str]) -> "MetricField":
        n = len(diag)
        return cls(n, [[diag[i] if i == j else "0" for j in range(n)] for i in range(n)])

    def check_symmetric(self):
        if self.entries is None:
            return
        for i in range(self.dim):
            for j in range(i):
                if self.entries[i][j] != self.entries[j][i]:
                    raise GeometryError(f"metric entries ({i + 1},{j + 1}) and ({j + 1},{i + 1}) differ")


class AlmostComplexField(_MatrixField):
    """Almost complex structure as a matrix acting on coordinate components."""

    tag = CANONICAL

    def __init__(self, dim: int, entries=None):
        if entries is None and dim % 2:
            raise GeometryError(f"canonical almost complex structure needs even dimension, got {dim}")
        super().__init__(dim, entries)

    def _constant(self):
        return canonical_matrix(self.dim)

    @classmethod
    def from_json(cls, value, dim: int) -> "AlmostComplexField":
        if value == CANONICAL or value is None:
            return cls(dim)
        return cls(dim, value)


def canonical_matrix(n: int) -> np.ndarray:
    if n % 2:
        raise GeometryError(f"canonical almost complex structure needs even dimension, got {n}")
    J = np.zeros((n, n))
    for k in range(0, n, 2):
        J[k + 1, k] = 1.0   # J d_{2k-1} = d_{2k}
        J[k, k + 1] = -1.0  # J d_{2k} = -d_{2k-1}
    return J


def canonical_J(n: int) -> AlmostComplexField:
    """The coordinate-pair complex structure on R^n (n even)."""
    return AlmostComplexField(n)


@dataclass
class VectorField:
    """A vector field given by a procedure ``x -> components``.

    ``lo``/``hi`` bound the box on which it is defined (None = unbounded).
    """

    func: Callable[[np.ndarray], np.ndarray]
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)


def steps(p, step=DEFAULT_STEP) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return step * np.maximum(1.0, np.abs(p))


def fd_jacobian(f: Callable, p, step: float = DEFAULT_STEP, richardson: bool = False) -> np.ndarray:
    """Central-difference Jacobian ``D[k, i] = d f^k / d x_i`` at ``p``."""
    p = np.asarray(p, dtype=float)
    hs = steps(p, step)

    def central(scale):
        cols = []
        for i, h in enumerate(hs * scale):
            e = np.zeros_like(p)
            e[i] = h
            cols.append((np.asarray(f(p + e)) - np.asarray(f(p - e))) / (2 * h))
        return np.stack(cols, axis=-1)

    if not richardson:
        return central(1.0)
    return (4 * central(0.5) - central(1.0)) / 3


def christoffel(g: MetricField | BoundMatrix, p, params: Mapping[str, float] | None = None) -> np.ndarray:
    """Levi-Civita symbols ``Gamma[k, i, j]`` at ``p`` from exact metric derivatives."""
    bound = g.bind(params) if isinstance(g, MetricField) else g
    n = bound.dim
    if bound.is_const:
        return np.zeros((n, n, n))
    p = np.asarray(p, dtype=float)
    G = bound.value(p)
    _require_pd(G, p)
    dG = bound.derivative(p)  # dG[l, i, j] = d_l g_ij
    # T[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    T = dG + dG.transpose(1, 0, 2) - dG.transpose(1, 2, 0)
    return 0.5 * np.einsum("kl,ijl->kij", np.linalg.inv(G), T)


def _require_pd(G, p):
    w = np.linalg.eigvalsh(0.5 * (G + G.T))
    if w[0] <= PD_FLOOR:
        raise GeometryError(f"metric not positive definite at {np.asarray(p).tolist()} (min eigenvalue {w[0]:.3e})")


def covariant_derivative(
    g: MetricField | BoundMatrix,
    V: VectorField | Callable,
    direction,
    p,
    params: Mapping[str, float] | None = None,
    step: float = DEFAULT_STEP,
    richardson: bool = False,
) -> np.ndarray:
    """``(nabla_X V)^k = X^i d_i V^k + Gamma^k_ij X^i V^j`` with numerical ``d_i V``."""
    p = np.asarray(p, dtype=float)
    X = np.asarray(direction, dtype=float)
    if isinstance(V, VectorField) and V.lo is not None:
        hs = steps(p, step)
        if np.any(p - hs < V.lo) or np.any(p + hs > V.hi):
            raise GeometryError("point too close to the boundary of the field's box")
    D = fd_jacobian(V, p, step, richardson)
    gamma = christoffel(g, p, params)
    return D @ X + np.einsum("kij,i,j->k", gamma, X, V(p))


def nabla_J(J: BoundMatrix, gamma: np.ndarray, p) -> np.ndarray:
    """``N[k, i, j]`` = component k of ``(nabla_{d_i} J) d_j``."""
    dJ = J.derivative(p)  # dJ[i, k, j] = d_i J^k_j
    Jp = J.value(p)
    return (
        dJ.transpose(1, 0, 2)
        + np.einsum("kil,lj->kij", gamma, Jp)
        - np.einsum("kl,lij->kij", Jp, gamma)
    )


def hermitian_kahler_check(
    g: MetricField,
    J: AlmostComplexField,
    points: Sequence,
    params: Mapping[str, float] | None = None,
    rng: np.random.Generator | None = None,
    n_pairs: int = 8,
    tol: float = 1e-9,
) -> CheckReport:
    """Residuals of J^2 + id, of J-compatibility of g, and of nabla J over samples.

    ``nabla J`` is evaluated on every coordinate pair and on ``n_pairs`` random
    unit pairs; the Kahler verdict needs all three residuals within ``tol``.
    """
    if g.dim != J.dim or g.dim % 2:
        raise GeometryError("metric and J must share an even dimension")
    rng = rng if rng is not None else np.random.default_rng(0)
    gb, Jb = g.bind(params), J.bind(params)
    n = g.dim
    sq, compat, kahler, per_sample, witnesses = [], [], [], [], []
    for idx, p in enumerate(points):
        p = np.asarray(p, dtype=float)
        G, Jp = gb.value(p), Jb.value(p)
        r_sq = float(np.max(np.abs(Jp @ Jp + np.eye(n))))
        r_compat = float(np.max(np.abs(Jp.T @ G @ Jp - G)))
        N = nabla_J(Jb, christoffel(gb, p), p)
        r_k = float(np.max(np.abs(N))) if N.size else 0.0
        for _ in range(n_pairs):
            X, Y = rng.standard_normal(n), rng.standard_normal(n)
            X /= np.sqrt(X @ G @ X)
            Y /= np.sqrt(Y @ G @ Y)
            r_k = max(r_k, float(np.linalg.norm(np.einsum("kij,i,j->k", N, X, Y))))
        sq.append(r_sq)
        compat.append(r_compat)
        kahler.append(r_k)
        per_sample.append(max(r_sq, r_compat, r_k))
        if r_k > tol:
            i, j = np.unravel_index(np.argmax(np.linalg.norm(N, axis=0)), (n, n))
            witnesses.append({
                "sample": idx, "point": p, "X": f"d{i + 1}", "Y": f"d{j + 1}",
                "nabla_X_J_Y": N[:, i, j],
            })
    hermitian = max(sq + compat, default=0.0) <= tol
    is_kahler = hermitian and max(kahler, default=0.0) <= tol
    return CheckReport(
        "hermitian_kahler",
        PASS if is_kahler else FAIL,
        tol,
        residuals=per_sample,
        witnesses=witnesses[:3],
        details={
            "hermitian": hermitian,
            "kahler": is_kahler,
            "max_J_squared_residual": max(sq, default=0.0),
            "max_compatibility_residual": max(compat, default=0.0),
            "max_nabla_J": max(kahler, default=0.0),
        },
    )
