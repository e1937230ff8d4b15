"""Scalar fields on R^d: expression-grammar construction and pointwise algebra.

Grammar (standard precedence, functions are prefix):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? atom
    atom   := number | coord | func '(' expr (',' expr)* ')' | '(' expr ')'
    coord  := 'x1'..'x9'
    func   in {abs, pow, exp, log, min, max}

Evaluation is vectorized over (n, d) point arrays, saturates to +-inf instead
of raising, and is deterministic: the same points give bit-identical values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import FieldParseError
from .geometry import Box


# --------------------------------------------------------------------------
# Expression trees
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Coord:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Node", ...]


Node = Union[Num, Coord, Neg, BinOp, Call]

_FUNC_ARITY = {"abs": (1, 1), "exp": (1, 1), "log": (1, 1), "pow": (2, 2),
               "min": (2, None), "max": (2, None)}
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class FieldExpr:
    """Parsed expression over coordinates x1..xd."""

    root: Node
    dim: int

    def to_source(self) -> str:
        return _print(self.root, 0)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        with np.errstate(all="ignore"):
            out = _eval(self.root, pts)
        if np.ndim(out) == 0:
            out = np.full(pts.shape[0], float(out))
        return out

    @property
    def is_constant(self) -> bool:
        return _constant_of(self.root) is not None


def _print(node: Node, parent_prec: int) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Coord):
        return f"x{node.index}"
    if isinstance(node, Neg):
        inner = node.operand
        body = _print(inner, 0)
        if not isinstance(inner, (Num, Coord, Call)):
            body = f"({body})"
        out = f"-{body}"
        return f"({out})" if parent_prec > 0 else out
    if isinstance(node, Call):
        return f"{node.func}({', '.join(_print(a, 0) for a in node.args)})"
    prec = _PREC[node.op]
    left = _print(node.left, prec)
    # subtraction and division are left-associative: the right operand needs
    # parens at equal precedence
    right = _print(node.right, prec + (1 if node.op in "-/" else 0))
    out = f"{left} {node.op} {right}"
    return f"({out})" if prec < parent_prec else out


def _eval(node: Node, pts: np.ndarray):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Coord):
        return pts[:, node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, pts)
    if isinstance(node, BinOp):
        a = _eval(node.left, pts)
        b = _eval(node.right, pts)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return np.divide(a, b)
    args = [_eval(a, pts) for a in node.args]
    if node.func == "abs":
        return np.abs(args[0])
    if node.func == "exp":
        return np.exp(args[0])
    if node.func == "log":
        return np.log(args[0])
    if node.func == "pow":
        return np.power(args[0], args[1])
    fn = np.minimum if node.func == "min" else np.maximum
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


def _constant_of(node: Node) -> float | None:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg):
        v = _constant_of(node.operand)
        return None if v is None else -v
    if isinstance(node, BinOp):
        a, b = _constant_of(node.left), _constant_of(node.right)
        if a is None or b is None:
            return None
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b if b != 0 else None
    if isinstance(node, Call):
        vals = [_constant_of(a) for a in node.args]
        if any(v is None for v in vals):
            return None
        with np.errstate(all="ignore"):
            if node.func == "abs":
                return abs(vals[0])
            if node.func == "exp":
                return math.exp(vals[0]) if vals[0] < 700 else math.inf
            if node.func == "log":
                return math.log(vals[0]) if vals[0] > 0 else -math.inf
            if node.func == "pow":
                try:
                    return float(np.power(vals[0], vals[1]))
                except Exception:
                    return None
            return (min if node.func == "min" else max)(vals)
    return None


# --------------------------------------------------------------------------
# Tokenizer / parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[a-zA-Z_][a-zA-Z_0-9]*)|(?P<op>[-+*/(),])|(?P<bad>\S)"
)


class _Parser:
    def __init__(self, src: str, dim: int):
        self.src = src
        self.dim = dim
        self.tokens: list[tuple[str, str, int]] = []
        for m in _TOKEN.finditer(src):
            kind = m.lastgroup
            if kind == "bad":
                raise FieldParseError(f"unexpected character {m.group()!r}", m.start())
            self.tokens.append((kind, m.group(), m.start()))
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, "", len(self.src))

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, at = self.take()
        if kind != "op" or text != op:
            raise FieldParseError(f"expected {op!r}, found {text!r}" if kind else f"expected {op!r}", at)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, at = self.peek()
        if kind is not None:
            raise FieldParseError(f"unexpected trailing {text!r}", at)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.atom())
        return self.atom()

    def atom(self) -> Node:
        kind, text, at = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "name":
            if text in _FUNC_ARITY:
                self.expect_op("(")
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect_op(")")
                lo, hi = _FUNC_ARITY[text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise FieldParseError(
                        f"{text} takes {lo}{'' if hi == lo else ' or more'} argument(s), got {len(args)}", at)
                return Call(text, tuple(args))
            m = re.fullmatch(r"x([1-9])", text)
            if m:
                idx = int(m.group(1))
                if idx > self.dim:
                    raise FieldParseError(f"unknown coordinate {text} for dimension {self.dim}", at)
                return Coord(idx)
            raise FieldParseError(f"unknown identifier {text!r}", at)
        raise FieldParseError(f"unexpected {text!r}" if text else "unexpected end of input", at)


def parse_field(src: str, d: int) -> FieldExpr:
    """Parse an expression string into the unique tree under the grammar."""
    if not src or not src.strip():
        raise FieldParseError("empty expression", 0)
    if not 1 <= d <= 9:
        raise ValueError("dimension must be in 1..9")
    return FieldExpr(_Parser(src, d).parse(), d)


# --------------------------------------------------------------------------
# Scalar fields
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """Deterministic evaluatable function on a box.

    singular_points lists locations where the field may be 0 or inf (for
    example the origin of a power weight); the quadrature grades toward
    them and keeps nodes away from them.
    """

    domain: Box
    evaluator: Callable[[np.ndarray], np.ndarray]
    singular_points: tuple[tuple[float, ...], ...] = ()
    expr: FieldExpr | None = None
    constant_value: float | None = None

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.singular_points)
        for p in pts:
            if len(p) != self.domain.d:
                raise ValueError("singular point dimension mismatch")
        object.__setattr__(self, "singular_points", pts)

    @property
    def is_constant(self) -> bool:
        return self.constant_value is not None

    def values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.domain.d:
            raise ValueError(f"expected points of shape (n, {self.domain.d})")
        with np.errstate(all="ignore"):
            out = np.asarray(self.evaluator(pts), dtype=float)
        if out.shape != (pts.shape[0],):
            raise ValueError("evaluator returned wrong shape")
        return out

    def __call__(self, *coords: float) -> float:
        return float(self.values(np.asarray([coords], dtype=float))[0])


def field_from_expression(src: str, box: Box,
                          singular_points: Sequence[Sequence[float]] = ()) -> ScalarField:
    expr = parse_field(src, box.d)
    const = _constant_of(expr.root)
    return ScalarField(box, expr.evaluate, tuple(tuple(p) for p in singular_points),
                       expr=expr, constant_value=const)


def constant_field(value: float, box: Box) -> ScalarField:
    v = float(value)
    return ScalarField(box, lambda pts: np.full(pts.shape[0], v),
                       expr=FieldExpr(Num(v), box.d) if v >= 0 else None,
                       constant_value=v)


def field_from_callable(fn: Callable[[np.ndarray], np.ndarray], box: Box,
                        singular_points: Sequence[Sequence[float]] = (),
                        constant_value: float | None = None) -> ScalarField:
    return ScalarField(box, fn, tuple(tuple(p) for p in singular_points),
                       constant_value=constant_value)


def _require_same_domain(a: ScalarField, b: ScalarField):
    if a.domain != b.domain:
        raise ValueError("fields live on different domains")


def _merge_singulars(*fields: ScalarField) -> tuple[tuple[float, ...], ...]:
    out = {}
    for f in fields:
        for p in f.singular_points:
            out[p] = p
    return tuple(out.values())


def multiply(a: ScalarField, b: ScalarField) -> ScalarField:
    _require_same_domain(a, b)
    const = None
    if a.is_constant and b.is_constant:
        const = a.constant_value * b.constant_value
    return ScalarField(a.domain, lambda pts: a.values(pts) * b.values(pts),
                       _merge_singulars(a, b), constant_value=const)


def divide(a: ScalarField, b: ScalarField) -> ScalarField:
    _require_same_domain(a, b)
    const = None
    if a.is_constant and b.is_constant and b.constant_value != 0:
        const = a.constant_value / b.constant_value

    def ev(pts):
        with np.errstate(all="ignore"):
            return a.values(pts) / b.values(pts)

    return ScalarField(a.domain, ev, _merge_singulars(a, b), constant_value=const)


def power(a: ScalarField, exponent: float) -> ScalarField:
    e = float(exponent)
    const = None
    if a.is_constant:
        with np.errstate(all="ignore"):
            c = float(np.power(a.constant_value, e))
        if math.isfinite(c):
            const = c

    def ev(pts):
        with np.errstate(all="ignore"):
            return np.power(a.values(pts), e)

    return ScalarField(a.domain, ev, a.singular_points, constant_value=const)


def reciprocal(a: ScalarField) -> ScalarField:
    const = None
    if a.is_constant and a.constant_value != 0:
        const = 1.0 / a.constant_value

    def ev(pts):
        with np.errstate(all="ignore"):
            return 1.0 / a.values(pts)

    return ScalarField(a.domain, ev, a.singular_points, constant_value=const)


def absolute(a: ScalarField) -> ScalarField:
    const = abs(a.constant_value) if a.is_constant else None
    return ScalarField(a.domain, lambda pts: np.abs(a.values(pts)),
                       a.singular_points, constant_value=const)


def pointwise(op: str, a: ScalarField, b=None) -> ScalarField:
    """Dispatch {mul, div, pow_const, recip} by name; b is a field, a
    constant, or absent, as the operation requires."""
    if op == "mul":
        return multiply(a, b if isinstance(b, ScalarField) else constant_field(b, a.domain))
    if op == "div":
        return divide(a, b if isinstance(b, ScalarField) else constant_field(b, a.domain))
    if op == "pow_const":
        return power(a, b)
    if op == "recip":
        if b is not None:
            raise ValueError("recip takes no second operand")
        return reciprocal(a)
    raise ValueError(f"unknown pointwise op {op!r}")


def fields_identical(a: ScalarField, b: ScalarField) -> bool:
    """Conservative structural equality used for fixed-point short-circuits."""
    if a is b:
        return True
    if a.domain != b.domain:
        return False
    if a.is_constant and b.is_constant:
        return a.constant_value == b.constant_value
    if a.expr is not None and b.expr is not None:
        return a.expr == b.expr and a.singular_points == b.singular_points
    return False
