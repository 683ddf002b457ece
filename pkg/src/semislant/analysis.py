"""Run every check on one map in a fixed order and assemble the report."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import tensors as tn
from .catalog import PUBLISHED, Expectation
from .mapcore import MapSpec, eikonal_check
from .report import FAIL, NOT_APPLICABLE, PASS, REPORT_SCHEMA, CheckReport, dumps, render_text
from .sampling import SamplePlan
from .slant import adapted_frame_check, jhat_check, structural_identities_check

CHECK_ORDER = (
    "hermitian_kahler",
    "riemannian_map",
    "eikonal",
    "semi_slant",
    "structural_identities",
    "jhat",
    "adapted_frame",
    "fundamental_identities",
    "integrability",
    "tension",
    "totally_geodesic",
    "umbilical",
    "decomposition",
)

THETA_MATCH = 1e-8
DISCREPANCY = "published-value-discrepancy"
MISMATCH = "expectation-mismatch"
OPEN = "open-question"


@dataclass
class AnalysisReport:
    spec: dict
    plan: dict
    checks: list[CheckReport]
    summary: dict
    annotations: list[dict] = field(default_factory=list)

    def check(self, name: str) -> CheckReport:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def failed(self) -> bool:
        return any(c.failed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "spec": self.spec,
            "plan": self.plan,
            "checks": [c.to_dict() for c in self.checks],
            "summary": {**self.summary, "annotations": self.annotations},
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_text(self) -> str:
        return render_text(self.to_dict())


def _gated(report: CheckReport, reason: str) -> CheckReport:
    """Keep what was computed but mark the check not applicable."""
    report.verdict = NOT_APPLICABLE
    report.notes.append(f"hypothesis unmet: {reason}")
    return report


def _na(name: str, tol: float, reason: str) -> CheckReport:
    return CheckReport(name, NOT_APPLICABLE, tol, notes=[f"hypothesis unmet: {reason}"])


def run_check(name: str, ws: tn.Workspace, tol: float | None = None) -> CheckReport:
    """One named check with the same hypothesis gating as the full analysis."""
    t1 = tol if tol is not None else tn.FIRST_ORDER_TOL
    if name == "hermitian_kahler":
        return ws.kahler_report
    if name == "riemannian_map":
        return ws.riemannian_report
    riem_ok = ws.riemannian_report.verdict == PASS
    if name == "eikonal":
        rep = eikonal_check(ws.spec, ws.plan, ws.points)
        return rep if riem_ok else _gated(rep, "not a Riemannian map")
    if name == "semi_slant":
        rep = ws.semi_slant_report
        if not riem_ok:
            return _gated(_copy(rep), "not a Riemannian map")
        if not ws.hermitian:
            return _gated(_copy(rep), "source is not almost Hermitian")
        return rep
    slant_ok = riem_ok and ws.hermitian and ws.semi_slant_report.verdict == PASS
    if name == "structural_identities":
        rep = structural_identities_check(ws.spec, ws.plan, decs=ws.decs, theta=ws.theta)
        return rep if riem_ok and ws.hermitian else _gated(rep, "no Riemannian map with almost Hermitian source")
    if name in ("jhat", "adapted_frame"):
        if not slant_ok:
            return _na(name, 1e-9, "no semi-slant structure")
        return (jhat_check if name == "jhat" else adapted_frame_check)(ws.decs, ws.theta)
    fn = {
        "fundamental_identities": tn.fundamental_identities_check,
        "integrability": tn.integrability_checks,
        "tension": tn.tension_and_harmonicity,
        "totally_geodesic": tn.totally_geodesic_check,
        "umbilical": tn.umbilical_check,
        "decomposition": tn.decomposition_checks,
    }.get(name)
    if fn is None:
        raise KeyError(f"unknown check {name!r}; known: {', '.join(CHECK_ORDER)}")
    return fn(ws=ws, tol=t1)


def _copy(rep: CheckReport) -> CheckReport:
    return CheckReport(rep.name, rep.verdict, rep.tolerance, list(rep.residuals), list(rep.witnesses),
                       dict(rep.details), list(rep.notes), rep.anchor)


def _flag(rep: CheckReport, key: str):
    if rep.verdict == NOT_APPLICABLE and key not in rep.details:
        return None
    return rep.details.get(key)


def _summary(checks: dict[str, CheckReport], ws: tn.Workspace) -> dict:
    ss = checks["semi_slant"]
    tension = checks["tension"]
    tg = checks["totally_geodesic"]
    dec = checks["decomposition"]
    slant_valid = ss.verdict == PASS
    return {
        "verdict": FAIL if any(c.failed for c in checks.values()) else PASS,
        "failed_checks": [c.name for c in checks.values() if c.failed],
        "riemannian_map": checks["riemannian_map"].verdict == PASS,
        "hermitian": ws.hermitian,
        "kahler": ws.kahler,
        "rank": checks["riemannian_map"].details.get("rank"),
        "semi_slant": slant_valid,
        "dim_D1": ss.details.get("dim_D1") if slant_valid else None,
        "dim_D2": ss.details.get("dim_D2") if slant_valid else None,
        "theta": ss.details.get("theta") if slant_valid else None,
        "harmonic": _flag(tension, "harmonic"),
        "totally_geodesic": _flag(tg, "totally_geodesic") if tg.verdict != NOT_APPLICABLE
        else _flag(tg, "direct_totally_geodesic"),
        "umbilical": _flag(checks["umbilical"], "umbilical"),
        "product_M": _flag(dec, "product_M"),
        "product_fibers": _flag(dec, "product_fibers"),
    }


def _annotations(summary: dict, checks: dict[str, CheckReport], expected: dict | None) -> list[dict]:
    out = []
    theta = summary.get("theta")
    if expected:
        pub = expected.get("published_theta")
        if pub is None and expected.get("theta") is not None and expected["theta"].source == PUBLISHED:
            pub = expected["theta"]
        if pub is not None and theta is not None and abs(theta - pub.value) > THETA_MATCH:
            out.append({
                "kind": DISCREPANCY,
                "message": f"computed theta = {theta:.12g}, published value {pub.value:.12g}"
                           f" (difference {theta - pub.value:+.3e})",
            })
        for key, exp in sorted(expected.items()):
            if key == "published_theta" or key not in summary or summary[key] is None:
                continue
            if exp.source == PUBLISHED and key == "theta":
                continue
            got = summary[key]
            same = abs(got - exp.value) <= THETA_MATCH if isinstance(exp.value, float) else got == exp.value
            if not same:
                out.append({"kind": MISMATCH,
                            "message": f"{key}: computed {got!r}, expected {exp.value!r} ({exp.source})"})
    fi = checks["fundamental_identities"]
    if fi.verdict != NOT_APPLICABLE and fi.details.get("omega_parallel"):
        t_max = max(fi.details["max_term_norm"].values(), default=0.0)
        right = theta is not None and abs(theta - math.pi / 2) < THETA_MATCH
        if right or t_max <= fi.tolerance:
            out.append({"kind": OPEN, "message": "parallel-omega identity checked only in a degenerate instance"
                                                 " (theta = pi/2 or T = 0)"})
    return out


def analyze(spec: MapSpec, plan: SamplePlan | None = None, expected: dict[str, Expectation] | None = None,
            tol: float | None = None) -> AnalysisReport:
    """Every check in order; unmet hypotheses turn later checks into not-applicable."""
    plan = plan or SamplePlan()
    spec.validate()
    ws = tn.Workspace(spec, plan)
    checks = {name: run_check(name, ws, tol) for name in CHECK_ORDER}
    summary = _summary(checks, ws)
    plan_d = {**plan.to_dict(), "box": {"min": list(spec.box_lo), "max": list(spec.box_hi)}}
    return AnalysisReport(
        spec=spec.to_json(),
        plan=plan_d,
        checks=list(checks.values()),
        summary=summary,
        annotations=_annotations(summary, checks, expected),
    )
