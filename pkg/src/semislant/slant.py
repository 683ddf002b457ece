"""Invariant/slant splitting of the kernel and the operators phi, omega, B, C.

All linear algebra is done in g_M-orthonormal coordinates (``u = L^T v`` with
``G = L L^T``); coordinate-form operators are exposed for field calculus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from .mapcore import MapSpec, PointSplit, _chol, point_split
from .report import FAIL, FLAGGED, NOT_APPLICABLE, PASS, CheckReport
from .sampling import SamplePlan, random_unit_vectors

ANGLE_ZERO = 1e-8
ANGLE_AMBIGUOUS = 1e-6
ALGEBRA_TOL = 1e-9
ANGLE_SPREAD_TOL = 1e-9
EIGEN_TOL = 1e-8
HALF_PI = math.pi / 2


class NotApplicable(ValueError):
    """A statement whose hypotheses do not hold for this input."""


def _orth(M, tol=1e-10):
    """Orthonormal basis of the column span of M."""
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    return U[:, : int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))]


def _complement(basis, within):
    """Orthonormal basis of the orthogonal complement of ``basis`` inside span(within)."""
    if basis.shape[1] == 0:
        return within
    if within.shape[1] == 0:
        return within
    coeffs = null_space(basis.T @ within)
    return within @ coeffs


@dataclass
class SlantDecomposition:
    """The splitting ker F_* = D1 + D2 and horizontal = omega D2 + mu at one point.

    Bases (``*_o``) are orthonormal columns in g_M-orthonormal coordinates.
    Operators are full m x m matrices in the same coordinates.
    """

    point: np.ndarray
    split: PointSplit
    L: np.ndarray
    J_o: np.ndarray
    ker_o: np.ndarray
    hor_o: np.ndarray
    D1_o: np.ndarray
    D2_o: np.ndarray
    omegaD2_o: np.ndarray
    mu_o: np.ndarray
    theta: float
    principal_angles: np.ndarray
    ambiguous: bool = False
    residuals: dict = field(default_factory=dict)

    # -- projectors and operators (orthonormal coordinates) -------------------

    @property
    def dims(self) -> tuple[int, int]:
        return self.D1_o.shape[1], self.D2_o.shape[1]

    @property
    def Pv(self):
        return self.ker_o @ self.ker_o.T

    @property
    def Ph(self):
        return self.hor_o @ self.hor_o.T

    @property
    def P(self):
        return self.D1_o @ self.D1_o.T

    @property
    def Q(self):
        return self.D2_o @ self.D2_o.T

    @property
    def phi(self):
        return self.Pv @ self.J_o @ self.Pv

    @property
    def omega(self):
        return self.Ph @ self.J_o @ self.Pv

    @property
    def B(self):
        return self.Pv @ self.J_o @ self.Ph

    @property
    def C(self):
        return self.Ph @ self.J_o @ self.Ph

    # -- blocks in the kernel / horizontal bases ------------------------------

    def block(self, name: str) -> np.ndarray:
        """Matrix of phi, omega, B or C between the kernel and horizontal bases."""
        K, Hh = self.ker_o, self.hor_o
        op = getattr(self, name)
        src = K if name in ("phi", "omega") else Hh
        dst = K if name in ("phi", "B") else Hh
        return dst.T @ op @ src

    # -- coordinate conversions -----------------------------------------------

    def to_ortho(self, v):
        return self.L.T @ np.asarray(v, dtype=float)

    def from_ortho(self, u):
        return np.linalg.solve(self.L.T, u)

    def coord_operator(self, name: str) -> np.ndarray:
        """Operator ``name`` acting on coordinate vectors."""
        op = self.J_o if name == "J" else getattr(self, name)
        return np.linalg.solve(self.L.T, op @ self.L.T)

    def basis(self, name: str) -> np.ndarray:
        """Coordinate-form basis (g_M-orthonormal columns) of a named subspace."""
        return np.linalg.solve(self.L.T, getattr(self, f"{name}_o"))


def kernel_split(spec: MapSpec, p, split: PointSplit | None = None):
    """D1 = ker F_* intersected with J(ker F_*), found from principal angles; D2 its complement.

    Returns ``(D1, D2, info)`` with coordinate bases and the principal angles.
    """
    dec = structure_operators(spec, p, split=split)
    return dec.basis("D1"), dec.basis("D2"), {
        "principal_angles": dec.principal_angles, "ambiguous": dec.ambiguous,
    }


def _split_kernel(ker_o, J_o):
    k = ker_o.shape[1]
    if k == 0:
        return ker_o, ker_o, np.zeros(0), False
    JK = J_o @ ker_o
    R = JK - ker_o @ (ker_o.T @ JK)
    _, s, Wt = np.linalg.svd(R, full_matrices=True)
    sines = np.zeros(k)
    sines[: s.size] = s
    angles = np.arcsin(np.clip(sines, 0.0, 1.0))
    inside = angles < ANGLE_ZERO
    ambiguous = bool(np.any((angles >= ANGLE_ZERO) & (angles <= ANGLE_AMBIGUOUS)))
    cand = JK @ Wt.T[:, inside]
    D1 = _orth(ker_o @ (ker_o.T @ cand))
    D2 = _complement(D1, ker_o)
    return D1, D2, np.sort(angles), ambiguous


def structure_operators(spec: MapSpec, p, split: PointSplit | None = None, d1d2=None,
                        ledger: bool = True) -> SlantDecomposition:
    """Full pointwise decomposition, with the algebraic residual ledger unless ``ledger`` is off."""
    p = np.asarray(p, dtype=float)
    sp = split if split is not None else point_split(spec, p)
    L = _chol(sp.G)
    J = spec.Jb.value(p)
    J_o = L.T @ J @ np.linalg.inv(L.T)
    ker_o = L.T @ sp.kernel
    hor_o = L.T @ sp.horizontal
    if d1d2 is None:
        D1, D2, angles, ambiguous = _split_kernel(ker_o, J_o)
    else:
        D1 = _orth(L.T @ np.asarray(d1d2[0]).reshape(len(p), -1))
        D2 = _orth(L.T @ np.asarray(d1d2[1]).reshape(len(p), -1))
        angles, ambiguous = np.zeros(0), False
    if D2.shape[1]:
        Phi2 = D2.T @ J_o @ D2
        Om2 = hor_o.T @ J_o @ D2
        theta = math.atan2(np.linalg.norm(Om2), np.linalg.norm(Phi2))
        omegaD2 = _orth(hor_o @ Om2)
    else:
        # vacuous slant part: theta = 0 by convention
        theta = 0.0
        omegaD2 = np.zeros((len(p), 0))
    mu = _complement(omegaD2, hor_o)
    dec = SlantDecomposition(
        point=p, split=sp, L=L, J_o=J_o, ker_o=ker_o, hor_o=hor_o, D1_o=D1, D2_o=D2,
        omegaD2_o=omegaD2, mu_o=mu, theta=theta, principal_angles=angles, ambiguous=ambiguous,
    )
    if ledger:
        dec.residuals = structural_residuals(dec)
    return dec


def _mx(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def structural_residuals(dec: SlantDecomposition, theta: float | None = None) -> dict:
    """Every algebraic identity of the splitting, as max-abs residuals."""
    theta = dec.theta if theta is None else theta
    K, Hh, D1, D2, mu = dec.ker_o, dec.hor_o, dec.D1_o, dec.D2_o, dec.mu_o
    phi, omega, B, C = dec.phi, dec.omega, dec.B, dec.C
    P, Q, Pv = dec.P, dec.Q, dec.Pv
    m = len(dec.point)
    I = np.eye(m)
    r = {
        "phi2_plus_B_omega": _mx((phi @ phi + B @ omega) @ K + K),
        "C2_plus_omega_B": _mx((C @ C + omega @ B) @ Hh + Hh),
        "omega_phi_plus_C_omega": _mx((omega @ phi + C @ omega) @ K),
        "B_C_plus_phi_B": _mx((B @ C + phi @ B) @ Hh),
        "projector_algebra": max(_mx(P @ P - P), _mx(Q @ Q - Q), _mx(P @ Q), _mx(P + Q - Pv)),
        "phi_D1_in_D1": _mx((I - P) @ phi @ D1),
        "omega_D1_zero": _mx(omega @ D1),
        "phi_D2_in_D2": _mx((I - Q) @ phi @ D2),
        "B_hor_in_D2": _mx((I - Q) @ B @ Hh),
        "J_D1_in_D1": _mx((I - P) @ dec.J_o @ D1),
        "mu_J_invariant": _mx((I - mu @ mu.T) @ dec.J_o @ mu),
    }
    if D2.shape[1]:
        Phi2 = D2.T @ dec.J_o @ D2
        Om2 = Hh.T @ dec.J_o @ D2
        k2 = D2.shape[1]
        r["phi_metric_cos2"] = _mx(Phi2.T @ Phi2 - math.cos(theta) ** 2 * np.eye(k2))
        r["omega_metric_sin2"] = _mx(Om2.T @ Om2 - math.sin(theta) ** 2 * np.eye(k2))
        B_rank = np.linalg.matrix_rank(B @ Hh, tol=1e-8) if Hh.shape[1] else 0
        r["B_onto_D2"] = 0.0 if (B_rank == k2 or theta < ANGLE_ZERO) else 1.0
    return r


def _angles(dec: SlantDecomposition, X):
    u = dec.to_ortho(X)
    JX = dec.J_o @ u
    phiX = dec.phi @ u
    nJ = np.linalg.norm(JX)
    direct = math.acos(min(1.0, np.linalg.norm(phiX) / nJ))
    q = -(u @ (dec.phi @ dec.phi @ u)) / (u @ u)
    quadratic = math.acos(math.sqrt(min(1.0, max(0.0, q))))
    return direct, quadratic


def slant_angle(dec: SlantDecomposition, X, tol: float = 1e-8) -> float:
    """Angle between JX and D2 for X in D2: arccos(|phi X| / |JX|)."""
    u = dec.to_ortho(X)
    nX = np.linalg.norm(u)
    if nX == 0.0:
        raise ValueError("slant angle of the zero vector")
    if np.linalg.norm(u - dec.Q @ u) > tol * nX:
        raise ValueError("vector is not in D2")
    return _angles(dec, X)[0]


def slant_angle_pair(dec: SlantDecomposition, X) -> tuple[float, float]:
    """(arccos(|phiX|/|JX|), arccos(sqrt(-g(X, phi^2 X)/|X|^2)))."""
    slant_angle(dec, X)
    return _angles(dec, X)


def _phi2_eigs(dec):
    D2 = dec.D2_o
    if D2.shape[1] == 0:
        return np.zeros(0)
    Phi2 = D2.T @ dec.J_o @ D2
    S = Phi2 @ Phi2
    return np.linalg.eigvalsh(0.5 * (S + S.T))


def decompose_samples(spec, plan, points=None):
    pts = plan.points(spec) if points is None else [np.asarray(p, float) for p in points]
    return pts, [structure_operators(spec, p) for p in pts]


def semi_slant_verify(
    spec: MapSpec,
    plan: SamplePlan | None = None,
    points: Sequence | None = None,
    decs: Sequence[SlantDecomposition] | None = None,
    spread_tol: float = ANGLE_SPREAD_TOL,
    eigen_tol: float = EIGEN_TOL,
) -> CheckReport:
    """Constant-angle test on random D2 vectors plus the phi^2 = -cos^2(theta) eigen-test."""
    plan = plan or SamplePlan()
    if decs is None:
        _, decs = decompose_samples(spec, plan, points)
    dims = [d.dims for d in decs]
    thetas, agreement, per_point_direct, witnesses = [], 0.0, [], []
    for idx, dec in enumerate(decs):
        vecs = random_unit_vectors(plan.rng("semi_slant", idx), dec.basis("D2"), plan.vectors, dec.split.G)
        local = []
        for X in vecs:
            direct, quadratic = _angles(dec, X)
            agreement = max(agreement, abs(direct - quadratic))
            local.append(direct)
        if not vecs:
            local = [0.0]
        thetas.extend(local)
        per_point_direct.append(float(np.median(local)))
    theta = float(np.median(thetas)) if thetas else 0.0
    spread = float(max(thetas) - min(thetas)) if thetas else 0.0
    eig_res, converse = [], []
    for idx, dec in enumerate(decs):
        eigs = _phi2_eigs(dec)
        if eigs.size:
            eig_res.append(float(np.max(np.abs(eigs + math.cos(theta) ** 2))))
            c2 = float(-np.mean(eigs))
            converse.append(math.acos(math.sqrt(min(1.0, max(0.0, c2)))))
        else:
            eig_res.append(0.0)
            converse.append(0.0)
    converse_gap = max((abs(a - b) for a, b in zip(converse, per_point_direct)), default=0.0)
    dims_constant = len(set(dims)) <= 1
    if not dims_constant:
        first = dims[0]
        witnesses = [{"sample": i, "point": d.point, "dims": d.dims} for i, d in enumerate(decs) if d.dims != first][:3]
        witnesses.insert(0, {"sample": 0, "point": decs[0].point, "dims": first})
    ok = (
        dims_constant
        and spread <= spread_tol
        and max(eig_res, default=0.0) <= eigen_tol
        and agreement <= ALGEBRA_TOL
        and converse_gap <= ALGEBRA_TOL
    )
    notes = []
    verdict = PASS if ok else FAIL
    if any(d.ambiguous or d.split.ambiguous for d in decs):
        notes.append("principal angle or rank inside the ambiguity band")
        verdict = FLAGGED if verdict == PASS else verdict
    if spread > spread_tol:
        notes.append(f"slant angle not constant: spread {spread:.3e}")
    d1, d2 = dims[0] if dims else (0, 0)
    if d2 == 0:
        notes.append("D2 = 0: slant angle taken as 0")
    return CheckReport(
        "semi_slant",
        verdict,
        spread_tol,
        residuals=[max(e, abs(t - theta)) for e, t in zip(eig_res, per_point_direct)],
        witnesses=witnesses,
        details={
            "dim_D1": d1,
            "dim_D2": d2,
            "dims_constant": dims_constant,
            "theta": theta,
            "theta_min": min(thetas) if thetas else 0.0,
            "theta_max": max(thetas) if thetas else 0.0,
            "theta_spread": spread,
            "eigen_residual": max(eig_res, default=0.0),
            "eigen_tolerance": eigen_tol,
            "angle_formula_agreement": agreement,
            "converse_theta": float(np.median(converse)) if converse else 0.0,
            "converse_gap": converse_gap,
        },
        notes=notes,
    )


def structural_identities_check(spec, plan=None, points=None, decs=None, theta=None, tol=ALGEBRA_TOL) -> CheckReport:
    """Algebraic identities of phi, omega, B, C, P, Q and mu at every sample."""
    plan = plan or SamplePlan()
    if decs is None:
        _, decs = decompose_samples(spec, plan, points)
    per_identity: dict[str, float] = {}
    residuals = []
    for dec in decs:
        r = structural_residuals(dec, theta)
        residuals.append(max(r.values()))
        for k, v in r.items():
            per_identity[k] = max(per_identity.get(k, 0.0), v)
    worst = max(residuals, default=0.0)
    return CheckReport(
        "structural_identities",
        PASS if worst <= tol else FAIL,
        tol,
        residuals=residuals,
        details={"max_by_identity": per_identity},
    )


def _is_right_angle(dec, theta):
    return dec.D2_o.shape[1] > 0 and abs(theta - HALF_PI) < ANGLE_ZERO


def jhat(dec: SlantDecomposition, theta: float | None = None) -> np.ndarray:
    """J P + sec(theta) phi Q in orthonormal coordinates."""
    theta = dec.theta if theta is None else theta
    sec = 1.0 / math.cos(theta) if dec.D2_o.shape[1] else 0.0
    return dec.J_o @ dec.P + sec * dec.phi @ dec.Q


def jhat_check(decs, theta: float | None = None, tol: float = ALGEBRA_TOL) -> CheckReport:
    """Jhat^2 = -id on the kernel (needs theta < pi/2)."""
    if isinstance(decs, SlantDecomposition):
        decs = [decs]
    theta = decs[0].theta if theta is None else theta
    if any(_is_right_angle(d, theta) for d in decs):
        return CheckReport("jhat", NOT_APPLICABLE, tol, details={"theta": theta},
                           notes=["theta = pi/2: sec(theta) undefined"])
    residuals = []
    for dec in decs:
        Jh = jhat(dec, theta)
        residuals.append(_mx(Jh @ Jh @ dec.ker_o + dec.ker_o))
    worst = max(residuals, default=0.0)
    return CheckReport("jhat", PASS if worst <= tol else FAIL, tol, residuals=residuals,
                       details={"theta": theta})


@dataclass
class AdaptedFrame:
    multiplicities: tuple[int, int, int]
    D1: list
    D2: list
    omegaD2: list
    mu: list
    gram_residual: float

    @property
    def vectors(self) -> np.ndarray:
        return np.column_stack(self.D1 + self.D2 + self.omegaD2 + self.mu)


def _pair_frame(basis, op, scale=1.0):
    """Orthonormal vectors {v, scale*op v, ...} spanning span(basis), which op must preserve."""
    out = []
    rest = basis
    while rest.shape[1]:
        v = rest[:, 0] / np.linalg.norm(rest[:, 0])
        w = scale * (op @ v)
        out.extend([v, w])
        rest = _complement(_orth(np.column_stack([v, w])), rest)
    return out


def adapted_frame(dec: SlantDecomposition, theta: float | None = None) -> AdaptedFrame:
    """Orthonormal frame grouped by D1, D2, omega D2, mu (orthonormal coordinates)."""
    theta = dec.theta if theta is None else theta
    d1, d2 = dec.dims
    t2 = dec.mu_o.shape[1]
    if d2 and abs(theta - HALF_PI) < ANGLE_ZERO:
        raise NotApplicable("theta = pi/2: sec(theta) undefined")
    if d2 and theta < ANGLE_ZERO:
        raise ValueError("theta = 0 but D2 is not empty")
    if d1 % 2 or d2 % 2 or t2 % 2:
        raise NotApplicable(f"odd block dimension (D1 {d1}, D2 {d2}, mu {t2})")
    J = dec.J_o
    e = _pair_frame(dec.D1_o, J)
    f = _pair_frame(dec.D2_o, dec.phi, 1.0 / math.cos(theta)) if d2 else []
    csc = 1.0 / math.sin(theta) if d2 else 0.0
    om = [csc * (dec.omega @ v) for v in f]
    g = _pair_frame(dec.mu_o, J)
    frame = e + f + om + g
    V = np.column_stack(frame) if frame else np.zeros((len(dec.point), 0))
    gram = V.T @ V
    res = _mx(gram - np.eye(V.shape[1]))
    if V.shape[1] != len(dec.point):
        res = max(res, 1.0)
    return AdaptedFrame((d1 // 2, d2 // 2, t2 // 2), e, f, om, g, res)


def adapted_frame_check(decs, theta=None, tol: float = ALGEBRA_TOL) -> CheckReport:
    if isinstance(decs, SlantDecomposition):
        decs = [decs]
    theta = decs[0].theta if theta is None else theta
    residuals = []
    frame = None
    try:
        for dec in decs:
            frame = adapted_frame(dec, theta)
            residuals.append(frame.gram_residual)
    except NotApplicable as exc:
        return CheckReport("adapted_frame", NOT_APPLICABLE, tol, notes=[str(exc)])
    k, s, t = frame.multiplicities
    notes = []
    if s:
        notes.append(
            f"omega D2 needs {2 * s} frame vectors csc(theta) omega f_j and csc(theta) omega(sec(theta) phi f_j); "
            f"a list of only s = {s} vectors would not span it"
        )
    worst = max(residuals, default=0.0)
    return CheckReport(
        "adapted_frame",
        PASS if worst <= tol else FAIL,
        tol,
        residuals=residuals,
        details={"k": k, "s": s, "t": t, "omega_D2_frame_size": 2 * s,
                 "groups": [2 * k, 2 * s, 2 * s, 2 * t]},
        notes=notes,
    )
