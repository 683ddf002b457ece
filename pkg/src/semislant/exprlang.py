"""Scalar expression language for map components, metric and J entries.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = atom [ "^" [ "-" ] INTEGER ] ;
    atom    = NUMBER | VARIABLE | NAME | FUNC "(" expr ")" | "(" expr ")" ;
    FUNC    = "sin" | "cos" | "exp" | "sqrt" ;
    VARIABLE = "x" DIGITS            (* 1-based coordinate index *)
             | "x_" DIGITS ;
    NAME    = letter { letter | digit | "_" } ;   (* parameter, or the constant pi *)

Exponents are integer literals only, so differentiation stays inside the
grammar. Angles are radians.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

UNARY_OPS = ("neg", "sin", "cos", "exp", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div")
FUNCTIONS = ("sin", "cos", "exp", "sqrt")


class ExpressionError(ValueError):
    pass


class ParseError(ExpressionError):
    def __init__(self, message: str, offset: int, source: str):
        super().__init__(f"{message} at offset {offset}: {source!r}")
        self.offset = offset
        self.source = source


class EvaluationError(ExpressionError):
    pass


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


Expression = Union[Const, Var, Param, Unary, Binary, Pow]

ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)
_VAR_NAME = re.compile(r"x_?(\d+)$")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            offset = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[offset]!r}", offset, source)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, dim: int):
        self.source = source
        self.dim = dim
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, tok[2], self.source)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            self.fail(f"expected {value!r}")
        return self.take()

    def parse(self) -> Expression:
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = "add" if self.take()[1] == "+" else "sub"
            left = Binary(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = "mul" if self.take()[1] == "*" else "div"
            left = Binary(op, left, self.unary())
        return left

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            tok = self.peek()
            if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
                self.fail("exponent must be an integer literal")
            self.take()
            return Pow(base, sign * int(tok[1]))
        return base

    def atom(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "num":
            self.take()
            return Const(float(text))
        if kind == "name":
            self.take()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            m = _VAR_NAME.match(text)
            if m:
                index = int(m.group(1))
                if index < 1 or index > self.dim:
                    self.fail(f"variable {text} outside dimension {self.dim}", tok)
                return Var(index)
            if text == "pi":
                return Const(math.pi)
            return Param(text)
        if text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            self.fail("unexpected end of input")
        self.fail(f"unexpected token {text!r}")


def parse(source: str, dim: int) -> Expression:
    """Parse ``source`` into an expression tree; variables must satisfy 1 <= i <= dim."""
    if dim < 1:
        raise ValueError("dim must be positive")
    return _Parser(source, dim).parse()


# --------------------------------------------------------------------------
# inspection and printing

def free_variables(e: Expression) -> set[int]:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Unary):
        return free_variables(e.arg)
    if isinstance(e, Binary):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Pow):
        return free_variables(e.base)
    return set()


def parameters(e: Expression) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, Unary):
        return parameters(e.arg)
    if isinstance(e, Binary):
        return parameters(e.left) | parameters(e.right)
    if isinstance(e, Pow):
        return parameters(e.base)
    return set()


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def to_string(e: Expression) -> str:
    """Render ``e`` as source text that parses back to an equal-valued tree."""
    return _fmt(e, 0)


def _fmt(e, outer):
    if isinstance(e, Const):
        text = repr(float(e.value))
        if e.value < 0 or "inf" in text or "nan" in text:
            text = f"({text})"
        return text
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            s = "-" + _fmt(e.arg, 3)
            return f"({s})" if outer > 0 else s
        return f"{e.op}({_fmt(e.arg, 0)})"
    if isinstance(e, Pow):
        base = _fmt(e.base, 4)
        if isinstance(e.base, Pow):
            base = f"({base})"
        return f"{base}^{e.exponent}"
    prec = _PREC[e.op]
    # left-associative: the right operand binds one level tighter
    s = f"{_fmt(e.left, prec)}{_SYMBOL[e.op]}{_fmt(e.right, prec + 1)}"
    return f"({s})" if prec < outer else s


# --------------------------------------------------------------------------
# evaluation

def evaluate(e: Expression, point, params: Mapping[str, float] | None = None) -> float:
    """Evaluate ``e`` at ``point`` (0-based sequence, x_i is point[i-1])."""
    params = params or {}
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index > len(point):
            raise EvaluationError(f"point has no coordinate x{e.index}")
        return float(point[e.index - 1])
    if isinstance(e, Param):
        try:
            return float(params[e.name])
        except KeyError:
            raise EvaluationError(f"unbound parameter {e.name!r}") from None
    if isinstance(e, Unary):
        a = evaluate(e.arg, point, params)
        return _unary(e.op, a)
    if isinstance(e, Pow):
        b = evaluate(e.base, point, params)
        if b == 0.0 and e.exponent < 0:
            raise EvaluationError("division by zero")
        return b ** e.exponent
    a = evaluate(e.left, point, params)
    b = evaluate(e.right, point, params)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if b == 0.0:
        raise EvaluationError("division by zero")
    return a / b


def _unary(op, a):
    if op == "neg":
        return -a
    if op == "sqrt":
        if a < 0.0:
            raise EvaluationError(f"sqrt of negative value {a!r}")
        return math.sqrt(a)
    return getattr(math, op)(a)


def _safe_div(a, b):
    if b == 0.0:
        raise EvaluationError("division by zero")
    return a / b


def _safe_sqrt(a):
    if a < 0.0:
        raise EvaluationError(f"sqrt of negative value {a!r}")
    return math.sqrt(a)


def _safe_pow(b, n):
    if b == 0.0 and n < 0:
        raise EvaluationError("division by zero")
    return b ** n


_ENV = {"sin": math.sin, "cos": math.cos, "exp": math.exp,
        "sqrt": _safe_sqrt, "_div": _safe_div, "_pow": _safe_pow}


def _codegen(e, params):
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{e.index - 1}]"
    if isinstance(e, Param):
        if e.name not in params:
            raise EvaluationError(f"unbound parameter {e.name!r}")
        return repr(float(params[e.name]))
    if isinstance(e, Unary):
        inner = _codegen(e.arg, params)
        return f"(-{inner})" if e.op == "neg" else f"{e.op}({inner})"
    if isinstance(e, Pow):
        return f"_pow({_codegen(e.base, params)}, {e.exponent})"
    a, b = _codegen(e.left, params), _codegen(e.right, params)
    if e.op == "div":
        return f"_div({a}, {b})"
    return f"({a} {_SYMBOL[e.op]} {b})"


def compile_many(exprs, params: Mapping[str, float] | None = None) -> Callable:
    """Compile a list of expressions into one callable ``f(x) -> list[float]``.

    Parameters are bound at compile time. Semantics match :func:`evaluate`.
    """
    params = params or {}
    body = ", ".join(_codegen(e, params) for e in exprs)
    code = f"lambda x: [{body}]"
    return eval(code, dict(_ENV))  # noqa: S307 - source built from our own AST


# --------------------------------------------------------------------------
# differentiation

def _add(a, b):
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("add", a, b)


def _sub(a, b):
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("sub", a, b)


def _mul(a, b):
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("mul", a, b)


def _div(a, b):
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return Binary("div", a, b)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def differentiate(e: Expression, var: int) -> Expression:
    """Symbolic partial derivative of ``e`` with respect to x_var (1-based)."""
    if isinstance(e, (Const, Param)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == var else ZERO
    if isinstance(e, Unary):
        du = differentiate(e.arg, var)
        if du == ZERO:
            return ZERO
        u = e.arg
        if e.op == "neg":
            return _neg(du)
        if e.op == "sin":
            return _mul(Unary("cos", u), du)
        if e.op == "cos":
            return _neg(_mul(Unary("sin", u), du))
        if e.op == "exp":
            return _mul(e, du)
        if e.op == "sqrt":
            return _div(du, _mul(Const(2.0), e))
        raise ExpressionError(f"unknown unary op {e.op}")
    if isinstance(e, Pow):
        du = differentiate(e.base, var)
        if du == ZERO or e.exponent == 0:
            return ZERO
        n = e.exponent
        lower = e.base if n - 1 == 1 else (ONE if n - 1 == 0 else Pow(e.base, n - 1))
        return _mul(_mul(Const(float(n)), lower), du)
    da = differentiate(e.left, var)
    db = differentiate(e.right, var)
    if e.op == "add":
        return _add(da, db)
    if e.op == "sub":
        return _sub(da, db)
    if e.op == "mul":
        return _add(_mul(da, e.right), _mul(e.left, db))
    # quotient rule, split so a constant denominator stays simple
    if db == ZERO:
        return _div(da, e.right)
    return _sub(_div(da, e.right), _div(_mul(e.left, db), Pow(e.right, 2)))
