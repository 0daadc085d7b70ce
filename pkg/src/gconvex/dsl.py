"""Driver-expression DSL: AST, parser, evaluator, printer, differentiation.

Grammar (EBNF):

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := NUMBER | "t" | "y" | "z" IDX? | "norm(z)"
            | "abs(" expr ")" | "max(" expr "," expr ")" | "min(" expr "," expr ")"
            | "-" factor | "(" expr ")"

IDX is a decimal >= 1; bare "z" is permitted only when dim_z == 1.
The same grammar (restricted to a single scalar variable) is reused for
candidate functions h(y) and payoffs phi(x).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ExpressionSyntaxError, UnknownVariable


# ---------------------------------------------------------------------------
# AST nodes. All nodes are frozen: expressions are immutable and shareable.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "t", "y", or the scalar variable of an h/phi expression


@dataclass(frozen=True)
class ZVar:
    index: int  # 1-based


@dataclass(frozen=True)
class ZNorm:
    pass


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Div:
    left: object
    right: object


@dataclass(frozen=True)
class Abs:
    operand: object


@dataclass(frozen=True)
class Max:
    left: object
    right: object


@dataclass(frozen=True)
class Min:
    left: object
    right: object


@dataclass(frozen=True)
class Branch:
    """Internal node: value is ``if_ge`` where lhs >= rhs, else ``if_lt``.

    Produced only by differentiation of abs/max/min; not part of the
    surface grammar and not printable.
    """

    lhs: object
    rhs: object
    if_ge: object
    if_lt: object


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")

_SINGLE = {"+": "PLUS", "-": "MINUS", "*": "STAR", "/": "SLASH",
           "(": "LPAREN", ")": "RPAREN", ",": "COMMA"}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(source):
    tokens = []
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if source.startswith("**", i):
            raise ExpressionSyntaxError("operator '**' is not in the grammar", i)
        if c in _SINGLE:
            tokens.append(_Token(_SINGLE[c], c, i))
            i += 1
            continue
        m = _NUMBER_RE.match(source, i)
        if m:
            tokens.append(_Token("NUMBER", m.group(0), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(_Token("IDENT", m.group(0), i))
            i = m.end()
            continue
        raise ExpressionSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(_Token("EOF", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Recursive-descent parser
# ---------------------------------------------------------------------------

class _Parser:
    """Parses either generator expressions (variables t, y, z...) or scalar
    expressions over a single named variable."""

    def __init__(self, source, dim_z=None, scalar_var=None):
        if not source or not source.strip():
            raise ExpressionSyntaxError("empty expression", 0)
        self.source = source
        self.dim_z = dim_z
        self.scalar_var = scalar_var
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.peek()
        if tok.kind != kind:
            raise ExpressionSyntaxError(f"expected {what}, found {tok.text or 'end of input'!r}",
                                        tok.offset)
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "EOF":
            raise ExpressionSyntaxError(f"unexpected trailing input {tok.text!r}", tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind in ("PLUS", "MINUS"):
            op = self.advance()
            rhs = self.term()
            node = Add(node, rhs) if op.kind == "PLUS" else Sub(node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek().kind in ("STAR", "SLASH"):
            op = self.advance()
            rhs = self.factor()
            node = Mul(node, rhs) if op.kind == "STAR" else Div(node, rhs)
        return node

    def factor(self):
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "MINUS":
            self.advance()
            return Neg(self.factor())
        if tok.kind == "LPAREN":
            self.advance()
            node = self.expr()
            self.expect("RPAREN", "')'")
            return node
        if tok.kind == "IDENT":
            return self.ident_factor()
        raise ExpressionSyntaxError(f"expected a factor, found {tok.text or 'end of input'!r}",
                                    tok.offset)

    def ident_factor(self):
        tok = self.advance()
        name = tok.text
        if name == "abs":
            self.expect("LPAREN", "'(' after abs")
            node = self.expr()
            self.expect("RPAREN", "')'")
            return Abs(node)
        if name in ("max", "min"):
            self.expect("LPAREN", f"'(' after {name}")
            left = self.expr()
            self.expect("COMMA", "','")
            right = self.expr()
            self.expect("RPAREN", "')'")
            return Max(left, right) if name == "max" else Min(left, right)
        if name == "norm":
            if self.scalar_var is not None:
                raise UnknownVariable("norm(z)", tok.offset)
            self.expect("LPAREN", "'(' after norm")
            ztok = self.expect("IDENT", "'z'")
            if ztok.text != "z":
                raise ExpressionSyntaxError("norm applies to z only", ztok.offset)
            self.expect("RPAREN", "')'")
            return ZNorm()
        return self.variable(name, tok.offset)

    def variable(self, name, offset):
        if self.scalar_var is not None:
            if name == self.scalar_var:
                return Var(name)
            raise UnknownVariable(name, offset)
        if name == "t":
            return Var("t")
        if name == "y":
            return Var("y")
        if name == "z":
            if self.dim_z != 1:
                raise ExpressionSyntaxError(
                    f"bare 'z' requires dim_z=1 (dim_z={self.dim_z})", offset)
            return ZVar(1)
        m = re.fullmatch(r"z(\d+)", name)
        if m:
            idx = int(m.group(1))
            if idx < 1:
                raise ExpressionSyntaxError("z index must be >= 1", offset)
            if idx > self.dim_z:
                raise UnknownVariable(name, offset, dim_z=self.dim_z)
            return ZVar(idx)
        raise UnknownVariable(name, offset)


def parse_expression(source, dim_z):
    """Parse a generator expression over (t, y, z_1..z_d). Returns the AST."""
    return _Parser(source, dim_z=dim_z).parse()


def parse_scalar(source, var="y"):
    """Parse a scalar expression over a single variable (h(y) or phi(x))."""
    return _Parser(source, scalar_var=var).parse()


# ---------------------------------------------------------------------------
# Pretty printer. parse(pretty_print(ast)) reproduces the AST for any tree
# built from grammar constructs with nonnegative numeric literals.
# ---------------------------------------------------------------------------

_LEVEL_EXPR, _LEVEL_TERM, _LEVEL_FACTOR = 0, 1, 2


def _print(node):
    if isinstance(node, Num):
        return repr(node.value), _LEVEL_FACTOR
    if isinstance(node, Var):
        return node.name, _LEVEL_FACTOR
    if isinstance(node, ZVar):
        return f"z{node.index}", _LEVEL_FACTOR
    if isinstance(node, ZNorm):
        return "norm(z)", _LEVEL_FACTOR
    if isinstance(node, Abs):
        return f"abs({_render(node.operand, _LEVEL_EXPR)})", _LEVEL_FACTOR
    if isinstance(node, Max):
        return (f"max({_render(node.left, _LEVEL_EXPR)}, "
                f"{_render(node.right, _LEVEL_EXPR)})"), _LEVEL_FACTOR
    if isinstance(node, Min):
        return (f"min({_render(node.left, _LEVEL_EXPR)}, "
                f"{_render(node.right, _LEVEL_EXPR)})"), _LEVEL_FACTOR
    if isinstance(node, Neg):
        return f"-{_render(node.operand, _LEVEL_FACTOR)}", _LEVEL_FACTOR
    if isinstance(node, Add):
        return (f"{_render(node.left, _LEVEL_EXPR)} + "
                f"{_render(node.right, _LEVEL_TERM)}"), _LEVEL_EXPR
    if isinstance(node, Sub):
        return (f"{_render(node.left, _LEVEL_EXPR)} - "
                f"{_render(node.right, _LEVEL_TERM)}"), _LEVEL_EXPR
    if isinstance(node, Mul):
        return (f"{_render(node.left, _LEVEL_TERM)}*"
                f"{_render(node.right, _LEVEL_FACTOR)}"), _LEVEL_TERM
    if isinstance(node, Div):
        return (f"{_render(node.left, _LEVEL_TERM)}/"
                f"{_render(node.right, _LEVEL_FACTOR)}"), _LEVEL_TERM
    raise ValueError(f"node {type(node).__name__} is not printable")


def _render(node, need):
    text, level = _print(node)
    if level < need:
        return f"({text})"
    return text


def pretty_print(node):
    return _render(node, _LEVEL_EXPR)


# ---------------------------------------------------------------------------
# Evaluation. Accepts scalars or broadcastable numpy arrays; z is a sequence
# of per-component values (length dim_z).
# ---------------------------------------------------------------------------

def eval_expr(node, t=0.0, y=0.0, z=()):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return t if node.name == "t" else y
    if isinstance(node, ZVar):
        return z[node.index - 1]
    if isinstance(node, ZNorm):
        if len(z) == 1:
            return np.abs(z[0])
        return np.sqrt(sum(np.asarray(zi) ** 2 for zi in z))
    if isinstance(node, Neg):
        return -eval_expr(node.operand, t, y, z)
    if isinstance(node, Add):
        return eval_expr(node.left, t, y, z) + eval_expr(node.right, t, y, z)
    if isinstance(node, Sub):
        return eval_expr(node.left, t, y, z) - eval_expr(node.right, t, y, z)
    if isinstance(node, Mul):
        return eval_expr(node.left, t, y, z) * eval_expr(node.right, t, y, z)
    if isinstance(node, Div):
        return eval_expr(node.left, t, y, z) / eval_expr(node.right, t, y, z)
    if isinstance(node, Abs):
        return np.abs(eval_expr(node.operand, t, y, z))
    if isinstance(node, Max):
        return np.maximum(eval_expr(node.left, t, y, z),
                          eval_expr(node.right, t, y, z))
    if isinstance(node, Min):
        return np.minimum(eval_expr(node.left, t, y, z),
                          eval_expr(node.right, t, y, z))
    if isinstance(node, Branch):
        cond = np.greater_equal(eval_expr(node.lhs, t, y, z),
                                eval_expr(node.rhs, t, y, z))
        return np.where(cond,
                        eval_expr(node.if_ge, t, y, z),
                        eval_expr(node.if_lt, t, y, z))
    raise TypeError(f"not an expression node: {node!r}")


def eval_scalar(node, x):
    """Evaluate a single-variable expression at x (the variable binds to x)."""
    return eval_expr(node, t=0.0, y=x, z=())


# ---------------------------------------------------------------------------
# Differentiation (single-variable expressions). No simplification is
# performed; derivative trees may reference Branch for kinked primitives.
# ---------------------------------------------------------------------------

def differentiate(node, var):
    d = lambda n: differentiate(n, var)  # noqa: E731
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0) if node.name == var else Num(0.0)
    if isinstance(node, (ZVar, ZNorm)):
        return Num(0.0)
    if isinstance(node, Neg):
        return Neg(d(node.operand))
    if isinstance(node, Add):
        return Add(d(node.left), d(node.right))
    if isinstance(node, Sub):
        return Sub(d(node.left), d(node.right))
    if isinstance(node, Mul):
        return Add(Mul(d(node.left), node.right), Mul(node.left, d(node.right)))
    if isinstance(node, Div):
        num = Sub(Mul(d(node.left), node.right), Mul(node.left, d(node.right)))
        return Div(num, Mul(node.right, node.right))
    if isinstance(node, Abs):
        # sign(u) * u', with the u >= 0 branch chosen on the kink itself
        return Branch(node.operand, Num(0.0), d(node.operand), Neg(d(node.operand)))
    if isinstance(node, Max):
        return Branch(node.left, node.right, d(node.left), d(node.right))
    if isinstance(node, Min):
        return Branch(node.left, node.right, d(node.right), d(node.left))
    if isinstance(node, Branch):
        return Branch(node.lhs, node.rhs, d(node.if_ge), d(node.if_lt))
    raise TypeError(f"cannot differentiate {node!r}")


def substitute(node, var, replacement):
    """Replace every Var(var) by the replacement subtree."""
    if isinstance(node, Var):
        return replacement if node.name == var else node
    if isinstance(node, (Num, ZVar, ZNorm)):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, var, replacement))
    if isinstance(node, Abs):
        return Abs(substitute(node.operand, var, replacement))
    if isinstance(node, (Add, Sub, Mul, Div, Max, Min)):
        cls = type(node)
        return cls(substitute(node.left, var, replacement),
                   substitute(node.right, var, replacement))
    if isinstance(node, Branch):
        return Branch(substitute(node.lhs, var, replacement),
                      substitute(node.rhs, var, replacement),
                      substitute(node.if_ge, var, replacement),
                      substitute(node.if_lt, var, replacement))
    raise TypeError(f"cannot substitute into {node!r}")


def contains_kinked_op(node):
    """True if the tree uses abs/max/min (hence is merely continuous)."""
    if isinstance(node, (Abs, Max, Min, Branch)):
        return True
    if isinstance(node, (Num, Var, ZVar, ZNorm)):
        return False
    if isinstance(node, Neg):
        return contains_kinked_op(node.operand)
    return contains_kinked_op(node.left) or contains_kinked_op(node.right)


def iter_nodes(node):
    """Yield every node of the tree (pre-order)."""
    yield node
    if isinstance(node, (Num, Var, ZVar, ZNorm)):
        return
    if isinstance(node, Neg):
        yield from iter_nodes(node.operand)
        return
    if isinstance(node, Abs):
        yield from iter_nodes(node.operand)
        return
    if isinstance(node, Branch):
        for child in (node.lhs, node.rhs, node.if_ge, node.if_lt):
            yield from iter_nodes(child)
        return
    yield from iter_nodes(node.left)
    yield from iter_nodes(node.right)


def max_z_index(node):
    return max((n.index for n in iter_nodes(node) if isinstance(n, ZVar)), default=0)


def uses_norm(node):
    return any(isinstance(n, ZNorm) for n in iter_nodes(node))
