"""O'Neill tensors, second fundamental form, tension field and the derivative-based checks.

Vector fields are extended from pointwise vectors as projected constant
fields ``x -> P(x) v``; their derivatives are central differences over the
coordinate stencil, so every sample point reuses the same few neighbouring
decompositions.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .geometry import DEFAULT_STEP, christoffel, fd_jacobian, hermitian_kahler_check
from .mapcore import MapSpec, riemannian_map_check
from .report import FAIL, FLAGGED, NOT_APPLICABLE, PASS, CheckReport
from .sampling import SamplePlan, random_unit_vectors
from .slant import (
    HALF_PI,
    SlantDecomposition,
    semi_slant_verify,
    structure_operators,
)

FIRST_ORDER_TOL = 1e-6
SECOND_ORDER_TOL = 1e-5


_OPS = ("J", "Pv", "Ph", "P", "Q", "phi", "omega", "B", "C")


class Local:
    """Coordinate-form operators of the splitting at one point."""

    def __init__(self, spec: MapSpec, x: np.ndarray):
        dec = structure_operators(spec, x, ledger=False)
        self.dec = dec
        self.x = x
        self.G = dec.split.G
        Lt = dec.L.T
        Lt_inv = np.linalg.inv(Lt)
        for name in _OPS:
            op = dec.J_o if name == "J" else getattr(dec, name)
            setattr(self, name, Lt_inv @ op @ Lt)
        self.jac = dec.split.jac
        self.H = dec.split.H
        self.Pbar = dec.split.Pbar
        self.Qbar = dec.split.Qbar
        self.Pmu = Lt_inv @ dec.mu_o @ dec.mu_o.T @ Lt
        self.PomegaD2 = Lt_inv @ dec.omegaD2_o @ dec.omegaD2_o.T @ Lt
        self._spec = spec
        self.derivs: dict = {}
        self.flat = spec.gM.is_const
        self.flat_target = spec.gN.is_const

    @cached_property
    def Gamma(self) -> np.ndarray:
        return christoffel(self._spec.gM, self.x)

    @cached_property
    def F(self) -> np.ndarray:
        return self._spec.value(self.x)

    @cached_property
    def GammaN(self) -> np.ndarray:
        return christoffel(self._spec.gN, self.F)

    def norm(self, v) -> float:
        """g_M length; for an m x k matrix, the largest column length."""
        v = np.asarray(v)
        if v.ndim == 2:
            if v.shape[1] == 0:
                return 0.0
            return float(np.sqrt(max(0.0, np.max(np.einsum("an,ab,bn->n", v, self.G, v)))))
        return float(np.sqrt(max(0.0, v @ self.G @ v)))


@dataclass(frozen=True)
class Lin:
    """The field x -> A_1(x) ... A_k(x) v for named pointwise operators A_i."""

    ops: tuple
    v: np.ndarray


class Calculus:
    """Covariant calculus for projected fields of one map, with a point cache.

    Fields are :class:`Lin` chains or plain callables.  For chains the
    directional derivative is assembled by the product rule from central
    differences of each operator over the coordinate stencil, which equals the
    central difference of the whole field up to rounding.
    """

    def __init__(self, spec: MapSpec, step: float = DEFAULT_STEP, richardson: bool = False, cache: int = 4096):
        self.spec = spec
        self.step = step
        self.richardson = richardson
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache

    def at(self, x) -> Local:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        loc = self._cache.get(key)
        if loc is None:
            loc = Local(self.spec, x)
            self._cache[key] = loc
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return loc

    # -- field builders -----------------------------------------------------

    @staticmethod
    def const(v) -> Lin:
        return Lin((), np.asarray(v, dtype=float))

    def op(self, name: str, field):
        if isinstance(field, Lin):
            return Lin((name,) + field.ops, field.v)
        return lambda x: getattr(self.at(x), name) @ field(x)

    def vert(self, v) -> Lin:
        return Lin(("Pv",), np.asarray(v, dtype=float))

    def hor(self, v) -> Lin:
        return Lin(("Ph",), np.asarray(v, dtype=float))

    def proj(self, name: str, v) -> Lin:
        return Lin((name,), np.asarray(v, dtype=float))

    def value(self, field, p) -> np.ndarray:
        if not isinstance(field, Lin):
            return np.asarray(field(np.asarray(p, dtype=float)), dtype=float)
        loc = self.at(p)
        w = field.v
        for name in reversed(field.ops):
            w = getattr(loc, name) @ w
        return w

    # -- derivatives ----------------------------------------------------------

    def op_derivative(self, loc: Local, name: str) -> np.ndarray:
        """Flattened ``d[i, :]`` = partial_i of operator ``name`` (central differences)."""
        d = loc.derivs.get(name)
        if d is not None:
            return d
        if name == "jac":
            d = self.spec.hessian(loc.x).transpose(2, 0, 1)
        elif self.spec.constant_structure:
            # the splitting is the same at every point
            A = getattr(loc, name)
            d = np.zeros((len(loc.x),) + A.shape)
        else:
            d = np.moveaxis(fd_jacobian(lambda x: getattr(self.at(x), name), loc.x, self.step, self.richardson), -1, 0)
        d = d.reshape(d.shape[0], -1)
        loc.derivs[name] = d
        return d

    def derivative(self, field, p) -> np.ndarray:
        """Jacobian ``D[k, i]`` of a field at p."""
        p = np.asarray(p, dtype=float)
        if not isinstance(field, Lin):
            return fd_jacobian(field, p, self.step, self.richardson)
        m = len(p)
        return np.column_stack([self.directional(field, p, e) for e in np.eye(m)])

    def directional(self, field, p, X) -> np.ndarray:
        """X(field) at p.

        ``X`` and the chain's frozen vector may be m x k matrices; column j of
        the result is then the derivative of field j along X[:, j].
        """
        p = np.asarray(p, dtype=float)
        if not isinstance(field, Lin):
            return self.derivative(field, p) @ X
        loc = self.at(p)
        w = field.v
        if self.spec.constant_structure:
            out = self.value(field, p)
            return np.zeros(out.shape if out.ndim == X.ndim else (out.shape[0], X.shape[1]))
        dw = np.zeros(w.shape if w.ndim == X.ndim else X.shape)
        for name in reversed(field.ops):
            A = getattr(loc, name)
            d = self.op_derivative(loc, name)
            if X.ndim == 1:
                dA_w = (X @ d).reshape(A.shape) @ w
            else:
                d3 = d.reshape((-1,) + A.shape)
                dA_w = np.einsum("in,iab,bn->an", X, d3, w if w.ndim == 2 else np.broadcast_to(w[:, None], (len(w), X.shape[1])))
            dw = A @ dw + dA_w
            w = A @ w
        return dw

    def nabla(self, p, X, field) -> np.ndarray:
        """nabla_X field at p (Levi-Civita of g_M); columnwise for matrix arguments."""
        loc = self.at(p)
        out = self.directional(field, p, X)
        if loc.flat:
            return out
        V = self.value(field, p)
        if X.ndim == 1:
            return out + np.einsum("kij,i,j->k", loc.Gamma, X, V)
        if V.ndim == 1:
            V = np.broadcast_to(V[:, None], X.shape)
        return out + np.einsum("kij,in,jn->kn", loc.Gamma, X, V)

    def bracket(self, p, Xf, Yf) -> np.ndarray:
        """[X, Y] = X(Y) - Y(X) by central differences; no connection involved."""
        return self.directional(Yf, p, self.value(Xf, p)) - self.directional(Xf, p, self.value(Yf, p))

    def Vnabla(self, p, X, field):
        return self.at(p).Pv @ self.nabla(p, X, field)

    def Hnabla(self, p, X, field):
        return self.at(p).Ph @ self.nabla(p, X, field)

    def T(self, p, E, field) -> np.ndarray:
        """T_E F = H nabla_{VE} VF + V nabla_{VE} HF."""
        loc = self.at(p)
        e = loc.Pv @ E
        return loc.Ph @ self.nabla(p, e, self.op("Pv", field)) + loc.Pv @ self.nabla(p, e, self.op("Ph", field))

    def A(self, p, E, field) -> np.ndarray:
        """A_E F = H nabla_{HE} VF + V nabla_{HE} HF."""
        loc = self.at(p)
        e = loc.Ph @ E
        return loc.Ph @ self.nabla(p, e, self.op("Pv", field)) + loc.Pv @ self.nabla(p, e, self.op("Ph", field))

    def pullback_nabla(self, p, X, field) -> np.ndarray:
        """nabla^F_X F_* Y for a source field Y, in target coordinates."""
        loc = self.at(p)
        W = self.op("jac", field)
        if loc.flat_target:
            return self.directional(W, p, X)
        sub = "abc,b,c->a" if X.ndim == 1 else "abc,bn,cn->an"
        return self.directional(W, p, X) + np.einsum(sub, loc.GammaN, loc.jac @ X, self.value(W, p))

    def sff(self, p, E, F) -> np.ndarray:
        """(nabla F_*)(E, F) with F extended as a constant coordinate field; exact derivatives."""
        return second_fundamental_form_vector(self.spec, p, E, F, self.at(p))


def second_fundamental_form_vector(spec: MapSpec, p, E, F, loc: Local | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    E, F = np.asarray(E, float), np.asarray(F, float)
    hess = spec.hessian(p)
    jac = spec.jacobian(p)
    gM = loc.Gamma if loc is not None else christoffel(spec.gM, p)
    gN = loc.GammaN if loc is not None else christoffel(spec.gN, spec.value(p))
    dW = np.einsum("aji,i,j->a", hess, E, F)
    return dW + np.einsum("abc,b,c->a", gN, jac @ E, jac @ F) - jac @ np.einsum("kij,i,j->k", gM, E, F)


@dataclass
class TensorSample:
    point: np.ndarray
    E: np.ndarray
    F: np.ndarray
    T: np.ndarray | None = None
    A: np.ndarray | None = None
    T_vertical: np.ndarray | None = None
    T_horizontal: np.ndarray | None = None
    A_vertical: np.ndarray | None = None
    A_horizontal: np.ndarray | None = None
    sff: np.ndarray | None = None
    sff_range: np.ndarray | None = None
    sff_perp: np.ndarray | None = None


def oneill_tensors(spec: MapSpec, p, E, F, calc: Calculus | None = None) -> TensorSample:
    """T_E F and A_E F at p, with F extended as a projected constant field."""
    calc = calc or Calculus(spec)
    p = np.asarray(p, dtype=float)
    loc = calc.at(p)
    Ff = calc.const(F)
    T = calc.T(p, np.asarray(E, float), Ff)
    A = calc.A(p, np.asarray(E, float), Ff)
    return TensorSample(
        point=p, E=np.asarray(E, float), F=np.asarray(F, float), T=T, A=A,
        T_vertical=loc.Pv @ T, T_horizontal=loc.Ph @ T, A_vertical=loc.Pv @ A, A_horizontal=loc.Ph @ A,
    )


def second_fundamental_form(spec: MapSpec, p, E, F, calc: Calculus | None = None) -> TensorSample:
    """(nabla F_*)(E, F) = nabla^F_E F_* F - F_*(nabla_E F) with its range / range-perp split."""
    p = np.asarray(p, dtype=float)
    loc = calc.at(p) if calc is not None else Local(spec, p)
    v = second_fundamental_form_vector(spec, p, E, F, loc)
    return TensorSample(point=p, E=np.asarray(E, float), F=np.asarray(F, float),
                        sff=v, sff_range=loc.Pbar @ v, sff_perp=loc.Qbar @ v)


@dataclass
class NablaPhiOmega:
    nabla_phi: np.ndarray
    nabla_omega: np.ndarray
    kahler_residuals: dict | None = None


def nabla_phi_omega(spec: MapSpec, p, X, Y, calc: Calculus | None = None, kahler: bool = False,
                    tol: float = 1e-8) -> NablaPhiOmega:
    """(nabla_X phi)Y and (nabla_X omega)Y for vertical X, Y.

    With ``kahler`` set, also the residuals of
    (nabla_X omega)Y = C T_X Y - T_X phiY and (nabla_X phi)Y = B T_X Y - T_X omegaY.
    """
    calc = calc or Calculus(spec)
    p = np.asarray(p, dtype=float)
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    loc = calc.at(p)
    scale = max(1.0, loc.norm(X), loc.norm(Y))
    if loc.norm(loc.Ph @ X) > tol * scale or loc.norm(loc.Ph @ Y) > tol * scale:
        raise ValueError("nabla phi / nabla omega need vertical X and Y")
    Yf = calc.vert(Y)
    hatY = calc.Vnabla(p, X, Yf)
    n_phi = calc.Vnabla(p, X, calc.op("phi", Yf)) - loc.phi @ hatY
    n_omega = calc.Hnabla(p, X, calc.op("omega", Yf)) - loc.omega @ hatY
    res = None
    if kahler:
        TY = calc.T(p, X, Yf)
        res = {
            "nabla_omega": loc.norm(n_omega - (loc.C @ TY - calc.T(p, X, calc.op("phi", Yf)))),
            "nabla_phi": loc.norm(n_phi - (loc.B @ TY - calc.T(p, X, calc.op("omega", Yf)))),
        }
    return NablaPhiOmega(n_phi, n_omega, res)


# --------------------------------------------------------------------------
# shared per-analysis state

class Workspace:
    """Sample points, decompositions and hypothesis verdicts shared by the checks."""

    def __init__(self, spec: MapSpec, plan: SamplePlan | None = None, points: Sequence | None = None):
        self.spec = spec
        self.plan = plan or SamplePlan()
        self._points = None if points is None else [np.asarray(p, float) for p in points]
        self.calc = Calculus(spec, self.plan.fd_step, self.plan.richardson)

    @cached_property
    def points(self) -> list[np.ndarray]:
        return self._points if self._points is not None else self.plan.points(self.spec)

    @cached_property
    def decs(self) -> list[SlantDecomposition]:
        return [self.calc.at(p).dec for p in self.points]

    @cached_property
    def kahler_report(self) -> CheckReport:
        return hermitian_kahler_check(
            self.spec.metric_source, self.spec.J, self.points, self.spec.params,
            rng=self.plan.rng("hermitian_kahler"), n_pairs=self.plan.vectors,
        )

    @property
    def hermitian(self) -> bool:
        return bool(self.kahler_report.details["hermitian"])

    @property
    def kahler(self) -> bool:
        return bool(self.kahler_report.details["kahler"])

    @cached_property
    def riemannian_report(self) -> CheckReport:
        return riemannian_map_check(self.spec, self.plan, self.points)

    @cached_property
    def semi_slant_report(self) -> CheckReport:
        return semi_slant_verify(self.spec, self.plan, decs=self.decs)

    @property
    def theta(self) -> float:
        return float(self.semi_slant_report.details["theta"])

    def gate(self, name: str, tol: float, need_kahler: bool = False) -> CheckReport | None:
        """A not-applicable report when a hypothesis of ``name`` is unmet."""
        if self.riemannian_report.verdict != PASS:
            return CheckReport(name, NOT_APPLICABLE, tol, notes=["hypothesis unmet: not a Riemannian map"])
        if not self.hermitian:
            return CheckReport(name, NOT_APPLICABLE, tol, notes=["hypothesis unmet: source is not almost Hermitian"])
        if self.semi_slant_report.verdict != PASS:
            return CheckReport(name, NOT_APPLICABLE, tol, notes=["hypothesis unmet: no semi-slant structure"])
        if need_kahler and not self.kahler:
            return CheckReport(name, NOT_APPLICABLE, tol, notes=["hypothesis unmet: source is not Kahler"])
        return None

    def vectors(self, check: str, idx: int, basis: np.ndarray, count: int | None = None):
        return random_unit_vectors(self.plan.rng(check, idx), basis, count or self.plan.vectors, self.decs[idx].split.G)

    def cols(self, check: str, idx: int, basis: np.ndarray, count: int | None = None) -> np.ndarray:
        """Random unit vectors as the columns of an m x k matrix (k = 0 for an empty basis)."""
        vs = self.vectors(check, idx, basis, count)
        return np.column_stack(vs) if vs else np.zeros((basis.shape[0], 0))


def _ws(spec, plan, points, ws):
    return ws if ws is not None else Workspace(spec, plan, points)


def _max(values) -> float:
    return float(max(values, default=0.0))


# --------------------------------------------------------------------------
# harmonicity

def tension_and_harmonicity(spec=None, plan=None, points=None, ws: Workspace | None = None,
                            tol: float = FIRST_ORDER_TOL, d1_integrable: bool | None = None) -> CheckReport:
    """tau(F) = trace(nabla F_*), split into D1, D2 and horizontal traces.

    H~ is the horizontal trace divided by l = dim (ker F_*)^perp.
    """
    ws = _ws(spec, plan, points, ws)
    gate = ws.gate("tension", tol)
    if gate is not None:
        return gate
    calc = ws.calc
    taus, d1s, d2s, hts, residuals = [], [], [], [], []
    for p, dec in zip(ws.points, ws.decs):
        loc = calc.at(p)
        tr = {}
        for name in ("D1", "D2", "hor"):
            basis = dec.basis(name)
            tr[name] = sum((calc.sff(p, u, u) for u in basis.T), np.zeros(spec_dim_target(ws)))
        l = dec.hor_o.shape[1]
        tau = tr["D1"] + tr["D2"] + tr["hor"]
        taus.append(tau)
        d1s.append(tr["D1"])
        d2s.append(tr["D2"])
        hts.append(tr["hor"] / l if l else np.zeros_like(tau))
        residuals.append(float(np.sqrt(tau @ loc.H @ tau)))
    harmonic = _max(residuals) <= tol
    d2_zero = _max(np.linalg.norm(v) for v in d2s) <= tol
    ht_zero = _max(np.linalg.norm(v) for v in hts) <= tol
    agree = harmonic == (d2_zero and ht_zero)
    details = {
        "tau": taus[0] if taus else None,
        "tau_per_sample": taus,
        "trace_D1": d1s[0] if d1s else None,
        "trace_D2": d2s[0] if d2s else None,
        "H_tilde": hts[0] if hts else None,
        "max_trace_D1": _max(np.linalg.norm(v) for v in d1s),
        "max_trace_D2": _max(np.linalg.norm(v) for v in d2s),
        "max_H_tilde": _max(np.linalg.norm(v) for v in hts),
        "harmonic": harmonic,
        "theorem_agreement": agree,
    }
    worst = int(np.argmax(residuals)) if residuals else 0
    witnesses = [{"sample": worst, "point": ws.points[worst], "tau": taus[worst]}] if residuals and not harmonic else []
    if not ws.kahler:
        return CheckReport("tension", NOT_APPLICABLE, tol, residuals=residuals, witnesses=witnesses,
                           details=details, notes=["hypothesis unmet: source is not Kahler; raw tension reported"])
    notes = []
    verdict = PASS if harmonic else FAIL
    if d1_integrable is not False and not agree:
        verdict = FLAGGED
        notes.append("harmonicity disagrees with the D2-trace / H~ criterion")
    return CheckReport("tension", verdict, tol, residuals=residuals, witnesses=witnesses, details=details, notes=notes)


def spec_dim_target(ws: Workspace) -> int:
    return ws.spec.dim_target


# --------------------------------------------------------------------------
# structure identities with derivatives

def _identity_terms(calc: Calculus, p, loc: Local, which: str, a: np.ndarray, b: np.ndarray):
    """(lhs terms, rhs terms) of one companion identity of the Kahler structure equations."""
    if which in ("ker_ker_V", "ker_ker_H"):
        X, Yf = a, calc.vert(b)
        hatY = calc.Vnabla(p, X, Yf)
        TY = calc.T(p, X, Yf)
        if which == "ker_ker_V":
            return ([calc.Vnabla(p, X, calc.op("phi", Yf)), calc.T(p, X, calc.op("omega", Yf))],
                    [loc.phi @ hatY, loc.B @ TY])
        return ([calc.T(p, X, calc.op("phi", Yf)), calc.Hnabla(p, X, calc.op("omega", Yf))],
                [loc.omega @ hatY, loc.C @ TY])
    if which in ("hor_hor_V", "hor_hor_H"):
        Z, Wf = a, calc.hor(b)
        AW = calc.A(p, Z, Wf)
        hW = calc.Hnabla(p, Z, Wf)
        if which == "hor_hor_V":
            return ([calc.Vnabla(p, Z, calc.op("B", Wf)), calc.A(p, Z, calc.op("C", Wf))],
                    [loc.phi @ AW, loc.B @ hW])
        return ([calc.A(p, Z, calc.op("B", Wf)), calc.Hnabla(p, Z, calc.op("C", Wf))],
                [loc.omega @ AW, loc.C @ hW])
    if which in ("ker_hor_V", "ker_hor_H"):
        X, Zf = a, calc.hor(b)
        TZ = calc.T(p, X, Zf)
        hZ = calc.Hnabla(p, X, Zf)
        if which == "ker_hor_V":
            return ([calc.Vnabla(p, X, calc.op("B", Zf)), calc.T(p, X, calc.op("C", Zf))],
                    [loc.phi @ TZ, loc.B @ hZ])
        return ([calc.T(p, X, calc.op("B", Zf)), calc.Hnabla(p, X, calc.op("C", Zf))],
                [loc.omega @ TZ, loc.C @ hZ])
    # hor_ker: Z horizontal direction, X vertical field
    Z, Xf = a, calc.vert(b)
    vX = calc.Vnabla(p, Z, Xf)
    AX = calc.A(p, Z, Xf)
    if which == "hor_ker_V":
        return ([calc.Vnabla(p, Z, calc.op("phi", Xf)), calc.A(p, Z, calc.op("omega", Xf))],
                [loc.phi @ vX, loc.B @ AX])
    return ([calc.A(p, Z, calc.op("phi", Xf)), calc.Hnabla(p, Z, calc.op("omega", Xf))],
            [loc.omega @ vX, loc.C @ AX])


IDENTITIES = {
    # name: (direction space, argument space)
    "ker_ker_V": ("ker", "ker"),
    "ker_ker_H": ("ker", "ker"),
    "hor_hor_V": ("hor", "hor"),
    "hor_hor_H": ("hor", "hor"),
    "ker_hor_V": ("ker", "hor"),
    "ker_hor_H": ("ker", "hor"),
    "hor_ker_V": ("hor", "ker"),
    "hor_ker_H": ("hor", "ker"),
}


def identity_residual(calc: Calculus, p, which: str, a, b) -> tuple[float, float]:
    """(residual, largest term norm) of one structure identity at p.

    ``a`` and ``b`` may be vectors or m x k matrices of paired columns.
    """
    loc = calc.at(p)
    lhs, rhs = _identity_terms(calc, p, loc, which, np.asarray(a, float), np.asarray(b, float))
    res = loc.norm(sum(lhs) - sum(rhs))
    return res, max(loc.norm(t) for t in lhs + rhs)


def _roll(M: np.ndarray) -> np.ndarray:
    """Pair each column with the next one."""
    return np.roll(M, -1, axis=1)


def fundamental_identities_check(spec=None, plan=None, points=None, ws: Workspace | None = None,
                                 tol: float = FIRST_ORDER_TOL) -> CheckReport:
    """All eight Kahler structure identities for vertical/horizontal pairs, plus
    the nabla-phi / nabla-omega identities and the parallel-omega consequence."""
    ws = _ws(spec, plan, points, ws)
    gate = ws.gate("fundamental_identities", tol, need_kahler=True)
    if gate is not None:
        return gate
    calc = ws.calc
    per_id = {k: 0.0 for k in IDENTITIES}
    term_max = {k: 0.0 for k in IDENTITIES}
    extra = {"nabla_omega": 0.0, "nabla_phi": 0.0}
    max_nabla_omega = 0.0
    residuals = []
    theta = ws.theta
    parallel_residual = 0.0
    for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
        loc = calc.at(p)
        bases = {"ker": dec.basis("ker"), "hor": dec.basis("hor")}
        local = 0.0
        for name, (sa, sb) in IDENTITIES.items():
            va = ws.cols(f"fi:{name}:a", idx, bases[sa])
            vb = ws.cols(f"fi:{name}:b", idx, bases[sb])
            if not (va.shape[1] and vb.shape[1]):
                continue
            r, t = identity_residual(calc, p, name, va, vb)
            per_id[name] = max(per_id[name], r)
            term_max[name] = max(term_max[name], t)
            local = max(local, r)
        X = ws.cols("fi:nabla", idx, bases["ker"])
        if X.shape[1]:
            Yf = calc.vert(_roll(X))
            hatY = calc.Vnabla(p, X, Yf)
            n_phi = calc.Vnabla(p, X, calc.op("phi", Yf)) - loc.phi @ hatY
            n_omega = calc.Hnabla(p, X, calc.op("omega", Yf)) - loc.omega @ hatY
            TY = calc.T(p, X, Yf)
            r_om = loc.norm(n_omega - (loc.C @ TY - calc.T(p, X, calc.op("phi", Yf))))
            r_phi = loc.norm(n_phi - (loc.B @ TY - calc.T(p, X, calc.op("omega", Yf))))
            extra["nabla_omega"] = max(extra["nabla_omega"], r_om)
            extra["nabla_phi"] = max(extra["nabla_phi"], r_phi)
            local = max(local, r_om, r_phi)
            max_nabla_omega = max(max_nabla_omega, loc.norm(n_omega))
        residuals.append(local)
    parallel_omega = max_nabla_omega <= tol
    if parallel_omega:
        c2 = math.cos(theta) ** 2
        for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
            loc = calc.at(p)
            X = ws.cols("fi:parallel", idx, dec.basis("D2"))
            if not X.shape[1]:
                continue
            lhs = calc.T(p, loc.phi @ X, calc.op("phi", calc.vert(X)))
            rhs = -c2 * calc.T(p, X, calc.vert(X))
            r = loc.norm(lhs - rhs)
            parallel_residual = max(parallel_residual, r)
            residuals[idx] = max(residuals[idx], r)
    worst = _max(residuals)
    notes = []
    if parallel_omega and _max(term_max.values()) <= tol:
        notes.append("omega parallel with T = 0: the parallel-omega identity holds vacuously")
    return CheckReport(
        "fundamental_identities",
        PASS if worst <= tol else FAIL,
        tol,
        residuals=residuals,
        details={
            "max_by_identity": per_id,
            "max_term_norm": term_max,
            "nabla_identities": extra,
            "omega_parallel": parallel_omega,
            "max_nabla_omega": max_nabla_omega,
            "parallel_omega_identity": parallel_residual if parallel_omega else None,
        },
        notes=notes,
    )


# --------------------------------------------------------------------------
# integrability

def integrability_checks(spec=None, plan=None, points=None, ws: Workspace | None = None,
                         tol: float = FIRST_ORDER_TOL) -> CheckReport:
    """Integrability of D1 and D2 by the operator conditions and by a bracket oracle."""
    ws = _ws(spec, plan, points, ws)
    gate = ws.gate("integrability", tol)
    if gate is not None:
        return gate
    calc = ws.calc
    cond = {"D1": 0.0, "D2": 0.0}
    oracle = {"D1": 0.0, "D2": 0.0}
    residuals = []
    for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
        loc = calc.at(p)
        local = 0.0
        for name, proj in (("D1", "P"), ("D2", "Q")):
            X0 = ws.cols(f"int:{name}", idx, dec.basis(name))
            if not X0.shape[1]:
                continue
            Y0 = _roll(X0)
            Xf, Yf = calc.proj(proj, X0), calc.proj(proj, Y0)
            diff = calc.Vnabla(p, X0, Yf) - calc.Vnabla(p, Y0, Xf)
            c = loc.norm(loc.omega @ diff) if name == "D1" else loc.norm(loc.P @ loc.phi @ diff)
            br = calc.bracket(p, Xf, Yf)
            o = loc.norm(br - getattr(loc, proj) @ br)
            cond[name] = max(cond[name], c)
            oracle[name] = max(oracle[name], o)
            local = max(local, c)
        residuals.append(local)
    verdicts = {k: cond[k] <= tol for k in cond}
    oracle_verdicts = {k: oracle[k] <= tol for k in oracle}
    agree = verdicts == oracle_verdicts
    verdict = PASS if all(verdicts.values()) else FAIL
    notes = []
    if not agree:
        verdict = FLAGGED
        notes.append("operator condition disagrees with the bracket oracle")
    return CheckReport(
        "integrability",
        verdict,
        tol,
        residuals=residuals,
        details={
            "D1_integrable": verdicts["D1"],
            "D2_integrable": verdicts["D2"],
            "D1_condition": cond["D1"],
            "D2_condition": cond["D2"],
            "D1_bracket_oracle": oracle["D1"],
            "D2_bracket_oracle": oracle["D2"],
            "oracle_D1_integrable": oracle_verdicts["D1"],
            "oracle_D2_integrable": oracle_verdicts["D2"],
            "oracle_agreement": agree,
        },
        notes=notes,
    )


# --------------------------------------------------------------------------
# totally geodesic

def _vertical_pair_condition(calc, p, loc, X, Y):
    """omega(Vnabla_X phiY + T_X omegaY) + C(T_X phiY + H nabla_X omegaY)."""
    Yf = calc.vert(Y)
    phiY, omY = calc.op("phi", Yf), calc.op("omega", Yf)
    first = calc.Vnabla(p, X, phiY) + calc.T(p, X, omY)
    second = calc.T(p, X, phiY) + calc.Hnabla(p, X, omY)
    return first, second, loc.omega @ first + loc.C @ second


def _mixed_pair_condition(calc, p, loc, X, Z):
    """omega(Vnabla_X BZ + T_X CZ) + C(T_X BZ + H nabla_X CZ)."""
    Zf = calc.hor(Z)
    BZ, CZ = calc.op("B", Zf), calc.op("C", Zf)
    return loc.omega @ (calc.Vnabla(p, X, BZ) + calc.T(p, X, CZ)) + loc.C @ (calc.T(p, X, BZ) + calc.Hnabla(p, X, CZ))


def _h_norms(loc: Local, V: np.ndarray) -> np.ndarray:
    """g_N column lengths of target vectors."""
    if V.ndim == 1:
        V = V[:, None]
    return np.sqrt(np.maximum(0.0, np.einsum("an,ab,bn->n", V, loc.H, V)))


def _sff_block(calc, p, Ea, Eb) -> float:
    """max g_N length of (nabla F_*)(a, b) over all column pairs."""
    if not (Ea.shape[1] and Eb.shape[1]):
        return 0.0
    loc = calc.at(p)
    best = 0.0
    for a in Ea.T:
        S = np.column_stack([calc.sff(p, a, b) for b in Eb.T])
        best = max(best, float(np.max(_h_norms(loc, S))))
    return best


def totally_geodesic_check(spec=None, plan=None, points=None, ws: Workspace | None = None,
                           tol: float = FIRST_ORDER_TOL) -> CheckReport:
    """Three operator conditions against the direct test nabla F_* = 0."""
    ws = _ws(spec, plan, points, ws)
    gate = ws.gate("totally_geodesic", tol)
    if gate is not None:
        return gate
    calc = ws.calc
    kahler = ws.kahler
    conds = {"ker_ker": 0.0, "ker_hor": 0.0, "hor_hor": 0.0}
    direct = {"ker_ker": 0.0, "ker_hor": 0.0, "hor_hor": 0.0, "any": 0.0}
    residuals, witnesses = [], []
    for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
        loc = calc.at(p)
        K, Hh = dec.basis("ker"), dec.basis("hor")
        kv = ws.cols("tg:ker", idx, K)
        hv = ws.cols("tg:hor", idx, Hh)
        local = 0.0
        if kahler and kv.shape[1]:
            Y = _roll(kv)
            _, _, c = _vertical_pair_condition(calc, p, loc, kv, Y)
            norms = np.sqrt(np.maximum(0.0, np.einsum("an,ab,bn->n", c, loc.G, c)))
            j = int(np.argmax(norms))
            conds["ker_ker"] = max(conds["ker_ker"], float(norms[j]))
            local = max(local, float(norms[j]))
            if norms[j] > tol and len(witnesses) < 3:
                witnesses.append({"sample": idx, "point": p, "pair": "ker_ker", "X": kv[:, j], "Y": Y[:, j],
                                  "condition": c[:, j], "F_star_condition": loc.jac @ c[:, j],
                                  "sff": calc.sff(p, kv[:, j], Y[:, j])})
            if hv.shape[1]:
                r = loc.norm(_mixed_pair_condition(calc, p, loc, kv, hv))
                conds["ker_hor"] = max(conds["ker_hor"], r)
                local = max(local, r)
        if hv.shape[1]:
            v = loc.Qbar @ calc.pullback_nabla(p, hv, calc.hor(_roll(hv)))
            r = float(np.max(_h_norms(loc, v)))
            conds["hor_hor"] = max(conds["hor_hor"], r)
            local = max(local, r)
        residuals.append(local)
        # direct oracle: every basis pair of each block, then random pairs
        direct["ker_ker"] = max(direct["ker_ker"], _sff_block(calc, p, K, K))
        direct["ker_hor"] = max(direct["ker_hor"], _sff_block(calc, p, K, Hh))
        direct["hor_hor"] = max(direct["hor_hor"], _sff_block(calc, p, Hh, Hh))
        full = np.linalg.inv(dec.L.T)
        E, F = ws.cols("tg:E", idx, full), ws.cols("tg:F", idx, full)
        S = np.column_stack([calc.sff(p, e, f) for e, f in zip(E.T, F.T)])
        direct["any"] = max(direct["any"], float(np.max(_h_norms(loc, S))))
    direct_tg = max(direct.values()) <= tol
    details = {"conditions": conds, "direct_sff": direct, "direct_totally_geodesic": direct_tg}
    if not kahler:
        details["conditions"] = {"ker_ker": None, "ker_hor": None, "hor_hor": conds["hor_hor"]}
        return CheckReport("totally_geodesic", NOT_APPLICABLE, tol, residuals=residuals, details=details,
                           notes=["hypothesis unmet: source is not Kahler; direct test reported"])
    cond_tg = max(conds.values()) <= tol
    agree = cond_tg == direct_tg and all(
        (conds[k] <= tol) == (direct[k] <= tol) for k in ("ker_ker", "ker_hor", "hor_hor"))
    details["totally_geodesic"] = cond_tg
    details["oracle_agreement"] = agree
    verdict = PASS if cond_tg else FAIL
    notes = []
    if not agree:
        verdict = FLAGGED
        notes.append("operator conditions disagree with the direct nabla F_* test")
    return CheckReport("totally_geodesic", verdict, tol, residuals=residuals, witnesses=witnesses,
                       details=details, notes=notes)


# --------------------------------------------------------------------------
# umbilical fibers

def mean_curvature(calc: Calculus, p, kernel_basis: np.ndarray) -> np.ndarray:
    """H = (1 / dim ker) sum_i T_{u_i} u_i over a g_M-orthonormal kernel basis."""
    k = kernel_basis.shape[1]
    return calc.T(p, kernel_basis, calc.vert(kernel_basis)).sum(axis=1) / k


def umbilical_check(spec=None, plan=None, points=None, ws: Workspace | None = None,
                    tol: float = FIRST_ORDER_TOL) -> CheckReport:
    """T_X Y = g_M(X, Y) H on vertical pairs; on Kahler inputs also H in omega D2."""
    ws = _ws(spec, plan, points, ws)
    gate = ws.gate("umbilical", tol)
    if gate is not None:
        return gate
    if ws.decs and ws.decs[0].ker_o.shape[1] == 0:
        return CheckReport("umbilical", NOT_APPLICABLE, tol, notes=["fibers are points"])
    calc = ws.calc
    residuals, witnesses, Hs, outside = [], [], [], []
    for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
        loc = calc.at(p)
        K = dec.basis("ker")
        k = K.shape[1]
        Hv = mean_curvature(calc, p, K)
        Hs.append(Hv)
        # every basis pair, then random pairs
        X = np.repeat(K, k, axis=1)
        Y = np.tile(K, (1, k))
        kv = ws.cols("umb", idx, K)
        X = np.column_stack([X, kv])
        Y = np.column_stack([Y, _roll(kv)])
        TXY = calc.T(p, X, calc.vert(Y))
        gXY = np.einsum("an,ab,bn->n", X, loc.G, Y)
        R = TXY - np.outer(Hv, gXY)
        norms = np.sqrt(np.maximum(0.0, np.einsum("an,ab,bn->n", R, loc.G, R)))
        j = int(np.argmax(norms))
        residuals.append(float(norms[j]))
        if norms[j] > tol and len(witnesses) < 3:
            witnesses.append({"sample": idx, "point": p, "X": X[:, j], "Y": Y[:, j],
                              "T_X_Y": TXY[:, j], "g_XY_H": gXY[j] * Hv})
        outside.append(loc.norm(Hv - loc.PomegaD2 @ Hv))
    umbilical = _max(residuals) <= tol
    details = {"umbilical": umbilical, "H": Hs[0] if Hs else None, "H_per_sample": Hs}
    notes = []
    if umbilical and ws.kahler:
        details["H_outside_omega_D2"] = _max(outside)
        details["H_in_omega_D2"] = _max(outside) <= tol
        if _max(outside) > tol:
            notes.append("umbilical Kahler case with H not in omega D2")
            return CheckReport("umbilical", FLAGGED, tol, residuals=residuals, witnesses=witnesses,
                               details=details, notes=notes)
    return CheckReport("umbilical", PASS if umbilical else FAIL, tol, residuals=residuals,
                       witnesses=witnesses, details=details, notes=notes)


# --------------------------------------------------------------------------
# local product decompositions

def decomposition_checks(spec=None, plan=None, points=None, ws: Workspace | None = None,
                         tol: float = FIRST_ORDER_TOL) -> CheckReport:
    """Local product structure of M (ker / horizontal) and of the fibers (D1 / D2)."""
    ws = _ws(spec, plan, points, ws)
    gate = ws.gate("decomposition", tol)
    if gate is not None:
        return gate
    calc = ws.calc
    cond = {"ker": 0.0, "hor": 0.0, "D1": 0.0, "D2": 0.0}
    orac = {"ker": 0.0, "hor": 0.0, "D1": 0.0, "D2": 0.0}
    residuals = []
    kahler = ws.kahler
    for idx, (p, dec) in enumerate(zip(ws.points, ws.decs)):
        loc = calc.at(p)
        local = 0.0
        X = ws.cols("dec:ker", idx, dec.basis("ker"))
        if X.shape[1]:
            Y = _roll(X)
            if kahler:
                _, _, c = _vertical_pair_condition(calc, p, loc, X, Y)
                cond["ker"] = max(cond["ker"], loc.norm(c))
                local = max(local, loc.norm(c))
            orac["ker"] = max(orac["ker"], loc.norm(calc.Hnabla(p, X, calc.vert(Y))))
        Z = ws.cols("dec:hor", idx, dec.basis("hor"))
        if Z.shape[1]:
            W = _roll(Z)
            if kahler:
                Wf = calc.hor(W)
                BW, CW = calc.op("B", Wf), calc.op("C", Wf)
                c = loc.phi @ (calc.Vnabla(p, Z, BW) + calc.A(p, Z, CW)) + loc.B @ (
                    calc.A(p, Z, BW) + calc.Hnabla(p, Z, CW))
                cond["hor"] = max(cond["hor"], loc.norm(c))
                local = max(local, loc.norm(c))
            orac["hor"] = max(orac["hor"], loc.norm(calc.Vnabla(p, Z, calc.hor(W))))
        U = ws.cols("dec:D1", idx, dec.basis("D1"))
        if U.shape[1]:
            Vf = calc.proj("P", _roll(U))
            if kahler:
                phiV = calc.op("phi", Vf)
                vn, tv = calc.Vnabla(p, U, phiV), calc.T(p, U, phiV)
                c = max(loc.norm(loc.Q @ (loc.phi @ vn + loc.B @ tv)), loc.norm(loc.omega @ vn + loc.C @ tv))
                cond["D1"] = max(cond["D1"], c)
                local = max(local, c)
            n = calc.nabla(p, U, Vf)
            orac["D1"] = max(orac["D1"], loc.norm(n - loc.P @ n))
        X2 = ws.cols("dec:D2", idx, dec.basis("D2"))
        if X2.shape[1]:
            Yf = calc.proj("Q", _roll(X2))
            if kahler:
                phiY, omY = calc.op("phi", Yf), calc.op("omega", Yf)
                first = calc.Vnabla(p, X2, phiY) + calc.T(p, X2, omY)
                second = calc.T(p, X2, phiY) + calc.Hnabla(p, X2, omY)
                c = max(loc.norm(loc.P @ (loc.phi @ first + loc.B @ second)),
                        loc.norm(loc.omega @ first + loc.C @ second))
                cond["D2"] = max(cond["D2"], c)
                local = max(local, c)
            n = calc.nabla(p, X2, Yf)
            orac["D2"] = max(orac["D2"], loc.norm(n - loc.Q @ n))
        residuals.append(local)
    oracle_m = orac["ker"] <= tol and orac["hor"] <= tol
    oracle_f = orac["D1"] <= tol and orac["D2"] <= tol
    details = {"oracle_autoparallel": orac, "oracle_product_M": oracle_m, "oracle_product_fibers": oracle_f}
    if not kahler:
        return CheckReport("decomposition", NOT_APPLICABLE, tol, residuals=residuals, details=details,
                           notes=["hypothesis unmet: source is not Kahler; autoparallel oracle reported"])
    product_m = cond["ker"] <= tol and cond["hor"] <= tol
    product_f = cond["D1"] <= tol and cond["D2"] <= tol
    agree = all((cond[k] <= tol) == (orac[k] <= tol) for k in cond)
    details.update({"conditions": cond, "product_M": product_m, "product_fibers": product_f,
                    "oracle_agreement": agree})
    verdict = PASS if (product_m and product_f) else FAIL
    notes = []
    if not agree:
        verdict = FLAGGED
        notes.append("operator conditions disagree with the autoparallel oracle")
    return CheckReport("decomposition", verdict, tol, residuals=residuals, details=details, notes=notes)
