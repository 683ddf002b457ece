"""Command line: ``semislant catalog list | analyze | verify``.

Exit codes: 0 when no check failed, 1 on a failed or flagged check, 2 on
usage or spec errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import catalog, mapspec_io
from .analysis import CHECK_ORDER, analyze, run_check
from .exprlang import ExpressionError
from .geometry import GeometryError
from .mapcore import SpecError
from .report import dumps
from .sampling import SamplePlan, SamplingError
from .tensors import Workspace

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _param(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected k=v, got {text!r}")
    key, value = text.split("=", 1)
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key!r} needs a number, got {value!r}") from None


def _add_common(p):
    p.add_argument("target", help="catalog name or path to a mapspec JSON file")
    p.add_argument("--param", action="append", type=_param, default=[], metavar="K=V",
                   help="bind a parameter (repeatable)")
    p.add_argument("--samples", type=int, default=25, help="sample points (default 25)")
    p.add_argument("--vectors", type=int, default=8, help="random test vectors per subspace and point (default 8)")
    p.add_argument("--seed", type=int, default=42, help="sampling seed (default 42)")
    p.add_argument("--tol", type=float, default=None,
                   help="tolerance for the derivative-based checks (default 1e-6)")
    p.add_argument("--fd-step", type=float, default=1e-5, help="finite-difference step (default 1e-5)")
    p.add_argument("--richardson", action="store_true", help="Richardson-extrapolate central differences")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semislant", description="Check semi-slant Riemannian map structure of smooth maps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cat = sub.add_parser("catalog", help="built-in maps")
    cat.add_argument("action", choices=("list",))
    cat.add_argument("--controls", action="store_true", help="include the negative controls")
    an = sub.add_parser("analyze", help="run every check on one map")
    _add_common(an)
    ve = sub.add_parser("verify", help="run a single check")
    ve.add_argument("check", choices=CHECK_ORDER)
    _add_common(ve)
    return parser


def _resolve(args):
    params = dict(args.param)
    path = Path(args.target)
    if args.target.endswith(".json") or path.exists():
        return mapspec_io.load(path, params), None
    e = catalog.entry(args.target)
    return e.spec(params), e.expected(params)


def _plan(args) -> SamplePlan:
    if args.samples <= 0 or args.vectors <= 0:
        raise SpecError("--samples and --vectors must be positive")
    return SamplePlan(samples=args.samples, vectors=args.vectors, seed=args.seed,
                      fd_step=args.fd_step, richardson=args.richardson)


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _check_text(rep) -> str:
    d = rep.to_dict()
    lines = [f"{d['name']}: {d['verdict']}  (max residual {d['max_residual']}, tol {d['tolerance']})",
             f"  anchor: {d['anchor']}"]
    for k, v in d["details"].items():
        if not k.endswith("per_sample"):
            lines.append(f"  {k}: {v}")
    lines += [f"  note: {n}" for n in d["notes"]]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "catalog":
        for name in catalog.names(args.controls):
            e = catalog.entry(name)
            ps = ", ".join(e.params) or "-"
            print(f"{name:<16} {e.summary}  [params: {ps}]")
        return EXIT_OK
    try:
        spec, expected = _resolve(args)
        plan = _plan(args)
        if args.command == "analyze":
            report = analyze(spec, plan, expected=expected, tol=args.tol)
            _emit(report.to_json() if args.format == "json" else report.to_text(), args.out)
            return EXIT_FAIL if report.failed else EXIT_OK
        spec.validate()
        rep = run_check(args.check, Workspace(spec, plan), args.tol)
        _emit(dumps(rep.to_dict()) if args.format == "json" else _check_text(rep), args.out)
        return EXIT_FAIL if rep.failed else EXIT_OK
    except (SpecError, ExpressionError, GeometryError, SamplingError, catalog.CatalogError, OSError) as exc:
        print(f"semislant: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
