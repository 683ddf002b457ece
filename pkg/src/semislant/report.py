"""Check reports, the anchor table, and JSON/text rendering."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"
FLAGGED = "flagged"
VERDICTS = (PASS, FAIL, NOT_APPLICABLE, FLAGGED)

REPORT_SCHEMA = "semislant-report/1"

# Every check carries one of these anchors: the statement it machine-checks.
ANCHORS = {
    "hermitian_kahler": "J^2 = -id, g(JX,JY) = g(X,Y), nabla J = 0",
    "riemannian_map": "F_*: ((ker F_*)^perp, g_M) -> (range F_*, g_N) is a linear isometry",
    "eikonal": "2e(F) = |F_*|^2 = rank F",
    "semi_slant": "ker F_* = D1 + D2, J(D1) = D1, angle(JX, D2) constant; phi^2 X = -cos^2(theta) X on D2",
    "structural_identities": "phi^2 + B omega = -id, C^2 + omega B = -id, omega phi + C omega = 0, B C + phi B = 0",
    "jhat": "Jhat = J P + sec(theta) phi Q, Jhat^2 = -id on ker F_*",
    "adapted_frame": "{e_i, Je_i, f_j, sec(theta) phi f_j, csc(theta) omega f_j, g_l, Jg_l} orthonormal",
    "fundamental_identities": "Vnabla_X phiY + T_X omegaY = phi Vnabla_X Y + B T_X Y (and companions)",
    "integrability": "D1 integrable <=> omega(Vnabla_X Y - Vnabla_Y X) = 0; D2 integrable <=> P(phi(Vnabla_X Y - Vnabla_Y X)) = 0",
    "tension": "tau(F) = trace(nabla F_*); harmonic <=> trace on D2 = 0 and H~ = 0",
    "totally_geodesic": "nabla F_* = 0 <=> omega(..)+C(..) = 0 on ker, on ker x hor, and Qbar(nabla^F_Z1 F_* Z2) = 0",
    "umbilical": "T_X Y = g_M(X,Y) H, H in omega D2",
    "decomposition": "autoparallel ker F_* and (ker F_*)^perp; autoparallel D1 and D2",
}


def _clean(value: Any) -> Any:
    """Convert numpy containers/scalars into JSON-ready Python values."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v) or math.isinf(v):
            return None
        # -0.0 and 0.0 must serialize identically
        return v + 0.0
    return value


@dataclass
class CheckReport:
    name: str
    verdict: str
    tolerance: float
    residuals: list[float] = field(default_factory=list)
    witnesses: list[dict] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    anchor: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if not self.anchor:
            self.anchor = ANCHORS[self.name]

    @property
    def max_residual(self) -> float | None:
        vals = [r for r in self.residuals if r is not None]
        return max(vals) if vals else None

    @property
    def failed(self) -> bool:
        return self.verdict in (FAIL, FLAGGED)

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "anchor": self.anchor,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "max_residual": self.max_residual,
            "residuals": self.residuals,
            "witnesses": self.witnesses,
            "details": self.details,
            "notes": self.notes,
        })


def verdict_for(residual: float, tol: float) -> str:
    return PASS if residual <= tol else FAIL


def not_applicable(name: str, reason: str, tolerance: float, **details) -> CheckReport:
    return CheckReport(name, NOT_APPLICABLE, tolerance, details=details, notes=[reason])


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"


def _fmt_num(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.3e}" if x != 0 and (abs(x) < 1e-3 or abs(x) >= 1e4) else f"{x:.6g}"
    return str(x)


def render_text(report: dict) -> str:
    """Plain-text rendering of an analysis report dictionary."""
    lines = []
    spec = report["spec"]
    lines.append(f"map: {spec['name']}  ({spec['dim_source']} -> {spec['dim_target']})")
    if spec.get("params"):
        ps = ", ".join(f"{k}={_fmt_num(v)}" for k, v in sorted(spec["params"].items()))
        lines.append(f"params: {ps}")
    plan = report["plan"]
    lines.append(f"plan: {plan['samples']} samples, {plan['vectors']} vectors, seed {plan['seed']}")
    lines.append("")
    width = max(len(c["name"]) for c in report["checks"])
    for c in report["checks"]:
        lines.append(
            f"  {c['name']:<{width}}  {c['verdict']:<15} max residual {_fmt_num(c['max_residual'])}"
            f"  (tol {_fmt_num(c['tolerance'])})"
        )
        for note in c["notes"]:
            lines.append(f"  {'':<{width}}    note: {note}")
    lines.append("")
    lines.append("summary:")
    for key, value in report["summary"].items():
        if key == "annotations":
            continue
        shown = f"{value:.12g}" if isinstance(value, float) else value
        lines.append(f"  {key}: {shown}")
    for ann in report["summary"].get("annotations", []):
        lines.append(f"  annotation [{ann['kind']}]: {ann['message']}")
    return "\n".join(lines) + "\n"
