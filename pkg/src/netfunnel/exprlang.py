"""Small arithmetic expression language for vector fields in scenario files.

Grammar (whitespace is insignificant)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'
             | 'if' '(' expr CMP expr ',' expr ',' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-y1^2``
is ``-(y1^2)``. Variables are ``t``, ``s`` and indexed ``y<k>``, ``z<k>``,
``w<k>``.

Expressions are evaluated either by :func:`evaluate`, a plain recursive
interpreter, or by a closure produced with :func:`compile_expr`. Both perform
the same floating point operations in the same order, so they agree bitwise.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

from .errors import NonFiniteResult, ParseError, UnboundVariable

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "If", "Expr",
    "parse", "evaluate", "free_vars", "pretty", "compile_expr", "compile_many",
    "is_variable_name", "switching_functions",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class If:
    cmp: str  # one of < <= > >=
    lhs: "Expr"
    rhs: "Expr"
    then: "Expr"
    other: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call, If]

_VAR_RE = re.compile(r"(?:t|s|[yzw][1-9][0-9]*)\Z")
_FUNCS1 = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp, "abs": abs}
_FUNCSN = {"min": min, "max": max}
_CMPS = ("<=", ">=", "<", ">")


def is_variable_name(name: str) -> bool:
    return bool(_VAR_RE.match(name))


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<cmp><=|>=|<|>)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(_byte_offset(src, pos), f"unexpected character {src[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(src, pos)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(src, len(src))))
    return tokens


def _byte_offset(src: str, char_index: int) -> int:
    return len(src[:char_index].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        tok = self.advance()
        if tok[1] != text or tok[0] == "end":
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ParseError(tok[2], f"expected {text!r}, found {what}")
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(tok[2], f"unexpected {tok[1]!r}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[1] == "(":
                return self.call(text, pos)
            if not is_variable_name(text):
                raise ParseError(pos, f"unknown variable {text!r}")
            return Var(text)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(pos, f"expected operand, found {what}")

    def call(self, name: str, pos: int) -> Expr:
        self.expect("(")
        if name == "if":
            lhs = self.expr()
            kind, cmp, cpos = self.advance()
            if kind != "cmp":
                raise ParseError(cpos, "expected comparison operator in if()")
            rhs = self.expr()
            self.expect(",")
            then = self.expr()
            self.expect(",")
            other = self.expr()
            self.expect(")")
            return If(cmp, lhs, rhs, then, other)
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if name in _FUNCS1:
            if len(args) != 1:
                raise ParseError(pos, f"{name}() takes exactly one argument")
        elif name in _FUNCSN:
            if len(args) < 2:
                raise ParseError(pos, f"{name}() takes at least two arguments")
        else:
            raise ParseError(pos, f"unknown function {name!r}")
        return Call(name, tuple(args))


def parse(src: str) -> Expr:
    """Parse ``src`` into an immutable AST; raises :class:`ParseError`."""
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# evaluation

def _pow(a: float, b: float) -> float:
    return math.pow(a, b)


def _compare(cmp: str, a: float, b: float) -> bool:
    if cmp == "<":
        return a < b
    if cmp == "<=":
        return a <= b
    if cmp == ">":
        return a > b
    return a >= b


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Reference interpreter. Every intermediate value must be finite."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariable(e.name) from None
    try:
        if isinstance(e, Neg):
            v = -evaluate(e.operand, bindings)
        elif isinstance(e, BinOp):
            a = evaluate(e.left, bindings)
            b = evaluate(e.right, bindings)
            if e.op == "+":
                v = a + b
            elif e.op == "-":
                v = a - b
            elif e.op == "*":
                v = a * b
            elif e.op == "/":
                v = a / b
            else:
                v = _pow(a, b)
        elif isinstance(e, Call):
            vals = [evaluate(arg, bindings) for arg in e.args]
            if e.func in _FUNCS1:
                v = _FUNCS1[e.func](vals[0])
            else:
                v = _FUNCSN[e.func](vals)
        elif isinstance(e, If):
            a = evaluate(e.lhs, bindings)
            b = evaluate(e.rhs, bindings)
            v = evaluate(e.then if _compare(e.cmp, a, b) else e.other, bindings)
        else:
            raise TypeError(f"not an expression node: {e!r}")
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise NonFiniteResult(pretty(e), str(exc)) from None
    if not math.isfinite(v):
        raise NonFiniteResult(pretty(e), v)
    return v


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= free_vars(a)
        return out
    return free_vars(e.lhs) | free_vars(e.rhs) | free_vars(e.then) | free_vars(e.other)


def switching_functions(e: Expr) -> list:
    """Expressions whose sign changes mark kinks or jumps of ``e``.

    One per ``if`` guard (``lhs - rhs``), per ``abs`` argument and per pair
    of ``min``/``max`` arguments, in tree order without duplicates.
    """
    out = []

    def add(g):
        if free_vars(g) and g not in out:
            out.append(g)

    def walk(node):
        if isinstance(node, Neg):
            walk(node.operand)
        elif isinstance(node, BinOp):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Call):
            for a in node.args:
                walk(a)
            if node.func == "abs":
                add(node.args[0])
            elif node.func in _FUNCSN:
                for a, b in itertools.combinations(node.args, 2):
                    add(BinOp("-", a, b))
        elif isinstance(node, If):
            for part in (node.lhs, node.rhs, node.then, node.other):
                walk(part)
            add(BinOp("-", node.lhs, node.rhs))

    walk(e)
    return out


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _level(e: Expr) -> int:
    if isinstance(e, BinOp):
        return 4 if e.op == "^" else _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def _num_text(v: float) -> str:
    text = repr(float(v))
    return text if v >= 0 else f"({text})"


def pretty(e: Expr) -> str:
    """Render with the minimum parentheses needed to re-parse to ``e``."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = pretty(e.operand)
        return "-" + (f"({inner})" if _level(e.operand) < 3 else inner)
    if isinstance(e, BinOp):
        left, right = pretty(e.left), pretty(e.right)
        if e.op == "^":
            if _level(e.left) < 5:
                left = f"({left})"
            if _level(e.right) < 3:
                right = f"({right})"
            return f"{left}^{right}"
        prec = _PREC[e.op]
        if _level(e.left) < prec:
            left = f"({left})"
        if _level(e.right) <= prec:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(pretty(a) for a in e.args)})"
    return (f"if({pretty(e.lhs)} {e.cmp} {pretty(e.rhs)}, "
            f"{pretty(e.then)}, {pretty(e.other)})")


# ---------------------------------------------------------------------------
# compilation to Python closures (hot loop of the integrator)

def _py(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_py(e.operand)})"
    if isinstance(e, BinOp):
        if e.op == "^":
            return f"_pow({_py(e.left)}, {_py(e.right)})"
        return f"({_py(e.left)} {e.op} {_py(e.right)})"
    if isinstance(e, Call):
        if e.func in _FUNCSN:
            return f"_{e.func}([{', '.join(_py(a) for a in e.args)}])"
        return f"_{e.func}({_py(e.args[0])})"
    # lhs and rhs bound before the branch, like the interpreter
    return (f"({_py(e.then)} if _cmp_{_CMP_NAMES[e.cmp]}({_py(e.lhs)}, {_py(e.rhs)}) "
            f"else {_py(e.other)})")


_CMP_NAMES = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge"}

_NAMESPACE = {
    "_pow": _pow,
    "_sin": math.sin, "_cos": math.cos, "_tan": math.tan, "_exp": math.exp, "_abs": abs,
    "_min": min, "_max": max,
    "_cmp_lt": lambda a, b: a < b,
    "_cmp_le": lambda a, b: a <= b,
    "_cmp_gt": lambda a, b: a > b,
    "_cmp_ge": lambda a, b: a >= b,
    "_isfinite": math.isfinite,
}


def compile_many(exprs: Sequence[Expr], argnames: Sequence[str]) -> Callable[..., tuple]:
    """Compile several expressions into one positional-argument function.

    The returned function maps ``(*args)`` to a tuple of floats. Any
    non-finite value, division by zero or domain error is re-evaluated with
    :func:`evaluate` so the raised :class:`NonFiniteResult` names the
    offending subexpression.
    """
    exprs = list(exprs)
    argnames = list(argnames)
    for e in exprs:
        missing = free_vars(e) - set(argnames)
        if missing:
            raise UnboundVariable(", ".join(sorted(missing)))
    for name in argnames:
        if not is_variable_name(name):
            raise ValueError(f"invalid argument name {name!r}")
    body = ", ".join(_py(e) for e in exprs)
    src = (
        f"def _compiled({', '.join(argnames)}):\n"
        f"    return ({body}{',' if len(exprs) == 1 else ''})\n"
    )
    ns = dict(_NAMESPACE)
    exec(compile(src, "<netfunnel-expr>", "exec"), ns)
    raw = ns["_compiled"]

    def _diagnose(args):
        bindings = dict(zip(argnames, args))
        for e in exprs:
            evaluate(e, bindings)

    def fn(*args):
        try:
            out = raw(*args)
        except (ZeroDivisionError, OverflowError, ValueError):
            _diagnose(args)
            raise
        for v in out:
            if not _isfinite(v):
                _diagnose(args)
                raise NonFiniteResult("<compiled>", v)
        return out

    fn.source = src
    return fn


_isfinite = math.isfinite


def compile_expr(e: Expr, argnames: Sequence[str]) -> Callable[..., float]:
    many = compile_many([e], argnames)
    return lambda *args: many(*args)[0]
