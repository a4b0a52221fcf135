"""Expression language for the coordinate maps of a system.

Grammar (lowest to highest precedence)::

    grid    := row ((';' | newline) row)*
    row     := expr (',' expr)*
    expr    := term (('+' | '-') term)*
    term    := power (('*' | '/') power)*
    power   := unary ('^' integer)*
    unary   := ('-' | '+') unary | primary
    primary := number | name | name '(' args ')' | '(' expr ')'

Unary minus binds tighter than ``^``, so ``-x1^2`` is ``(-x1)^2``.  Exponents
are integer literals; ``pow(e, k)`` is accepted as a synonym for ``e^k``.
Functions: sin, cos, exp, log, sqrt, tanh.  The constant ``pi`` is predefined.

Parsed maps are compiled to Python closures once; evaluation accepts floats,
numpy arrays (batched evaluation) or :class:`~linsing.dual.Dual` numbers
(forward-mode derivatives).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dual import FUNCTIONS, Dual, ipow
from .errors import ArityError, DomainError, ParseError, ShapeError, UnknownIdentifier

FUNCTION_NAMES = ("sin", "cos", "exp", "log", "sqrt", "tanh")
CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------------------
# Syntax tree

class Expr:
    """Base class of syntax tree nodes; nodes are immutable."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int
    name: str = field(default="", compare=False)


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos, depth = 1, 0, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "newline":
            # newlines inside parentheses are plain whitespace
            if depth == 0:
                tokens.append(Token("sep", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "op":
            op = m.group()
            if op == "(":
                depth += 1
            elif op == ")":
                depth = max(depth - 1, 0)
            tokens.append(Token("sep" if op == ";" else "op", op, line, col))
        elif kind in ("number", "name"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("end", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser

_VAR_RE = re.compile(r"^[a-z]+\d+$")


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.tokens = tokenize(text)
        self.pos = 0
        self.variables = {name: i for i, name in enumerate(variables)}

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message, tok=None, cls=ParseError):
        tok = tok or self.tok
        return cls(message, tok.line, tok.column)

    def accept(self, kind, text=None):
        t = self.tok
        if t.kind == kind and (text is None or t.text == text):
            self.pos += 1
            return t
        return None

    def expect(self, kind, text=None):
        t = self.accept(kind, text)
        if t is None:
            want = text or kind
            got = self.tok.text or "end of input"
            raise self.error(f"expected {want!r}, found {got!r}")
        return t

    def grid(self) -> list[list[Expr]]:
        rows = []
        while True:
            while self.accept("sep"):
                pass
            if self.tok.kind == "end":
                break
            row = [self.expr()]
            while self.accept("op", ","):
                row.append(self.expr())
            rows.append(row)
            if self.tok.kind not in ("sep", "end"):
                raise self.error(f"unexpected {self.tok.text!r}")
        if not rows:
            raise self.error("empty expression")
        return rows

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tokens[self.pos].text
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.power()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tokens[self.pos].text
            self.pos += 1
            node = BinOp(op, node, self.power())
        return node

    def power(self) -> Expr:
        node = self.unary()
        while self.accept("op", "^"):
            node = Pow(node, self.integer())
        return node

    def integer(self) -> int:
        sign = 1
        if self.accept("op", "-"):
            sign = -1
        else:
            self.accept("op", "+")
        tok = self.tok
        if tok.kind != "number":
            raise self.error("exponent must be an integer literal")
        value = float(tok.text)
        if not value.is_integer():
            raise self.error("exponent must be an integer literal")
        self.pos += 1
        return sign * int(value)

    def unary(self) -> Expr:
        if self.accept("op", "-"):
            return Neg(self.unary())
        if self.accept("op", "+"):
            return self.unary()
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if self.accept("number"):
            return Const(float(tok.text))
        if self.accept("op", "("):
            node = self.expr()
            self.expect("op", ")")
            return node
        if self.accept("name"):
            name = tok.text
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            if name in self.variables:
                return Var(self.variables[name], name)
            if name in CONSTANTS:
                return Const(CONSTANTS[name])
            prefix = name.rstrip("0123456789")
            if _VAR_RE.match(name) and any(v.rstrip("0123456789") == prefix for v in self.variables):
                raise self.error(f"variable {name!r} exceeds declared arity", tok, ArityError)
            raise self.error(f"unknown identifier {name!r}", tok, UnknownIdentifier)
        raise self.error(f"unexpected {tok.text or 'end of input'!r}")

    def call(self, tok: Token) -> Expr:
        name = tok.text
        self.expect("op", "(")
        if name == "pow":
            base = self.expr()
            self.expect("op", ",")
            n = self.integer()
            self.expect("op", ")")
            return Pow(base, n)
        if name not in FUNCTION_NAMES:
            raise self.error(f"unknown function {name!r}", tok, UnknownIdentifier)
        arg = self.expr()
        if self.tok.kind == "op" and self.tok.text == ",":
            raise self.error(f"{name} takes one argument", cls=ArityError)
        self.expect("op", ")")
        return Call(name, arg)


# ---------------------------------------------------------------------------
# Printing and code generation

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Pow):
        return 3
    if isinstance(e, Neg):
        return 4
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 0
    return 5


def to_text(e: Expr, names: Sequence[str] | None = None) -> str:
    """Print an expression so that parsing it back gives the same tree."""

    def wrap(sub, min_prec):
        s = to_text(sub, names)
        return f"({s})" if _prec(sub) < min_prec else s

    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        if names is not None:
            return names[e.index]
        return e.name or f"x{e.index + 1}"
    if isinstance(e, Neg):
        return "-" + wrap(e.arg, 4)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        return f"{wrap(e.left, p)} {e.op} {wrap(e.right, p + 1)}"
    if isinstance(e, Pow):
        return f"{wrap(e.base, 5)}^{e.exponent}"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg, names)})"
    raise TypeError(f"not an expression: {e!r}")


def _codegen(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"v[{e.index}]"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg)})"
    if isinstance(e, BinOp):
        return f"({_codegen(e.left)} {e.op} {_codegen(e.right)})"
    if isinstance(e, Pow):
        return f"_pow({_codegen(e.base)}, {e.exponent})"
    if isinstance(e, Call):
        return f"_{e.func}({_codegen(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


_NAMESPACE = {f"_{k}": v for k, v in FUNCTIONS.items()}
_NAMESPACE["_pow"] = ipow


def compile_expr(e: Expr):
    return eval(f"lambda v: {_codegen(e)}", dict(_NAMESPACE))  # noqa: S307 - generated from our own AST


def max_var_index(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Neg):
        return max_var_index(e.arg)
    if isinstance(e, BinOp):
        return max(max_var_index(e.left), max_var_index(e.right))
    if isinstance(e, Pow):
        return max_var_index(e.base)
    if isinstance(e, Call):
        return max_var_index(e.arg)
    return -1


# ---------------------------------------------------------------------------
# Folding constructors and symbolic derivative (used to build lifted systems)

def const_value(e: Expr):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Const):
        return -e.arg.value
    return None


def neg(a: Expr) -> Expr:
    c = const_value(a)
    if c is not None:
        return Const(-c) if c != 0 else Const(0.0)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return Const(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if isinstance(b, Neg):
        return BinOp("-", a, b.arg)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return Const(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None:
        return Const(ca * cb)
    if ca == 0 or cb == 0:
        return Const(0.0)
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return neg(b)
    if cb == -1:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    ca, cb = const_value(a), const_value(b)
    if ca is not None and cb is not None and cb != 0:
        return Const(ca / cb)
    if cb == 1:
        return a
    if ca == 0:
        return Const(0.0)
    return BinOp("/", a, b)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return Const(1.0)
    if n == 1:
        return a
    c = const_value(a)
    if c is not None and (c != 0 or n > 0):
        return Const(c**n)
    return Pow(a, n)


def total(terms: Sequence[Expr]) -> Expr:
    out = None
    for t in terms:
        out = t if out is None else add(out, t)
    return Const(0.0) if out is None else out


def derivative(e: Expr, i: int) -> Expr:
    """Symbolic partial derivative with respect to variable ``i``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.index == i else 0.0)
    if isinstance(e, Neg):
        return neg(derivative(e.arg, i))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = derivative(a, i), derivative(b, i)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if isinstance(e, Pow):
        return mul(mul(Const(float(e.exponent)), power(e.base, e.exponent - 1)), derivative(e.base, i))
    if isinstance(e, Call):
        a = e.arg
        da = derivative(a, i)
        if const_value(da) == 0:
            return Const(0.0)
        if e.func == "sin":
            return mul(Call("cos", a), da)
        if e.func == "cos":
            return mul(neg(Call("sin", a)), da)
        if e.func == "exp":
            return mul(e, da)
        if e.func == "log":
            return div(da, a)
        if e.func == "sqrt":
            return div(da, mul(Const(2.0), e))
        if e.func == "tanh":
            return mul(sub(Const(1.0), power(e, 2)), da)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Maps

def default_variables(n: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(n))


_DOMAIN_EXC = (ZeroDivisionError, ValueError, OverflowError)


class SmoothMap:
    """Vector- or matrix-valued map of ``arity`` real variables.

    Entries are held as syntax trees; ``kind`` is ``"vector"`` (shape ``(p,)``)
    or ``"matrix"`` (shape ``(p, q)``).
    """

    __slots__ = ("_entries", "_variables", "_kind", "_fns", "_all")

    def __init__(self, entries, variables: Sequence[str], kind: str = "vector"):
        rows = tuple(tuple(r) for r in entries)
        if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
            raise ShapeError("entries must form a non-empty rectangular grid")
        if kind not in ("vector", "matrix"):
            raise ValueError(f"unknown kind {kind!r}")
        if kind == "vector" and len(rows[0]) != 1:
            raise ShapeError("vector maps need a single column of entries")
        variables = tuple(variables)
        for r in rows:
            for e in r:
                if max_var_index(e) >= len(variables):
                    raise ArityError(f"expression references variable {max_var_index(e) + 1} beyond arity {len(variables)}")
        self._entries = rows
        self._variables = variables
        self._kind = kind
        self._fns = tuple(compile_expr(e) for r in rows for e in r)
        body = ", ".join(_codegen(e) for r in rows for e in r)
        self._all = eval(f"lambda v: ({body},)", dict(_NAMESPACE))  # noqa: S307

    # -- structure ----------------------------------------------------------
    @property
    def arity(self) -> int:
        return len(self._variables)

    @property
    def variables(self) -> tuple[str, ...]:
        return self._variables

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def shape(self) -> tuple[int, ...]:
        p, q = len(self._entries), len(self._entries[0])
        return (p,) if self._kind == "vector" else (p, q)

    @property
    def entries(self) -> tuple[tuple[Expr, ...], ...]:
        return self._entries

    def entry(self, i: int, j: int = 0) -> Expr:
        return self._entries[i][j]

    def flat_entries(self) -> list[Expr]:
        return [e for r in self._entries for e in r]

    def with_variables(self, names: Sequence[str]) -> "SmoothMap":
        if len(names) != self.arity:
            raise ArityError("renaming must keep the arity")
        return SmoothMap(self._entries, names, self._kind)

    def to_text(self) -> str:
        return "; ".join(", ".join(to_text(e, self._variables) for e in r) for r in self._entries)

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"SmoothMap({self.to_text()!r}, arity={self.arity}, kind={self._kind!r})"

    def __eq__(self, other):
        if not isinstance(other, SmoothMap):
            return NotImplemented
        return (self._entries, self._kind, self.arity) == (other._entries, other._kind, other.arity)

    def __hash__(self):
        return hash((self._entries, self._kind, self.arity))

    def _entry_index(self, k: int):
        q = len(self._entries[0])
        return (k // q, k % q) if self._kind == "matrix" else k

    def _check_arity(self, n: int):
        if n != self.arity:
            raise ArityError(f"expected {self.arity} coordinates, got {n}")

    # -- evaluation ---------------------------------------------------------
    def evaluate_values(self, v: Sequence) -> list:
        """Evaluate every entry on raw inputs (floats, arrays or Duals); flat list."""
        out = []
        for k, fn in enumerate(self._fns):
            try:
                out.append(fn(v))
            except _DOMAIN_EXC as exc:
                raise DomainError(str(exc), entry=self._entry_index(k)) from None
        return out

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        self._check_arity(x.size)
        vals = self.evaluate_values(x.tolist())
        for k, val in enumerate(vals):
            if not math.isfinite(val):
                raise DomainError("non-finite value", entry=self._entry_index(k))
        return np.array(vals, dtype=float).reshape(self.shape)

    __call__ = evaluate

    def evaluate_batch(self, X) -> np.ndarray:
        """Evaluate at the rows of ``X`` (shape ``(k, arity)``) -> ``(k, *shape)``."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ShapeError("batch evaluation expects a 2-d array of points")
        self._check_arity(X.shape[1])
        cols = [X[:, i] for i in range(X.shape[1])]
        k = X.shape[0]
        out = np.empty((k, len(self._fns)))
        with np.errstate(all="ignore"):
            try:
                for j, val in enumerate(self._all(cols)):
                    out[:, j] = val
            except _DOMAIN_EXC:
                # locate the offending entry
                for j, fn in enumerate(self._fns):
                    try:
                        fn(cols)
                    except _DOMAIN_EXC as exc:
                        raise DomainError(str(exc), entry=self._entry_index(j)) from None
                raise
        bad = ~np.isfinite(out)
        if bad.any():
            col = int(np.argwhere(bad.any(axis=0))[0, 0])
            raise DomainError("non-finite value", entry=self._entry_index(col))
        return out.reshape((k,) + self.shape)

    def jvp(self, x, direction) -> np.ndarray:
        """Directional derivative along ``direction`` (one dual pass)."""
        x = np.asarray(x, dtype=float).ravel()
        d = np.asarray(direction, dtype=float).ravel()
        self._check_arity(x.size)
        duals = [Dual(a, b) for a, b in zip(x.tolist(), d.tolist())]
        vals = self.evaluate_values(duals)
        out = [v.du if isinstance(v, Dual) else 0.0 for v in vals]
        return np.array(out, dtype=float).reshape(self.shape)

    def jacobian(self, x) -> np.ndarray:
        """Exact first derivatives: ``(p, n)`` for vectors, ``(p, q, n)`` for matrices."""
        x = np.asarray(x, dtype=float).ravel()
        self._check_arity(x.size)
        n = x.size
        cols = [self.jvp(x, np.eye(n)[j]) for j in range(n)]
        if not cols:
            return np.zeros(self.shape + (0,))
        return np.stack(cols, axis=-1)


def parse(text: str, arity: int | None = None, variables: Sequence[str] | None = None,
          kind: str | None = None) -> SmoothMap:
    """Parse a grid of expressions into a :class:`SmoothMap`.

    Rows are separated by ``;`` or newlines, entries by ``,``.  With ``kind``
    left as None the result is a vector when every row holds one entry and a
    matrix otherwise.
    """
    if variables is None:
        if arity is None:
            raise ValueError("give either arity or variables")
        variables = default_variables(arity)
    elif arity is not None and arity != len(variables):
        raise ArityError("arity does not match the variable list")
    rows = _Parser(text, variables).grid()
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ShapeError("rows have different numbers of entries")
    if kind is None:
        kind = "vector" if width == 1 else "matrix"
    if kind == "vector" and width != 1:
        if len(rows) != 1:
            raise ShapeError("a vector needs a single row or column of entries")
        rows = [[e] for e in rows[0]]
    return SmoothMap(rows, variables, kind)


def constant_map(values, arity: int, variables: Sequence[str] | None = None) -> SmoothMap:
    arr = np.asarray(values, dtype=float)
    names = tuple(variables) if variables is not None else default_variables(arity)
    if arr.ndim == 1:
        return SmoothMap([[Const(float(v))] for v in arr], names, "vector")
    return SmoothMap([[Const(float(v)) for v in row] for row in arr], names, "matrix")


class FunctionMap:
    """Map given by a Python callable (used for composed evaluators).

    Derivatives are central finite differences with step ``fd_step``.
    """

    def __init__(self, func, arity: int, shape: tuple[int, ...], fd_step: float = 1e-6, name: str = ""):
        self.func = func
        self._arity = arity
        self._shape = tuple(shape)
        self.fd_step = fd_step
        self.name = name

    @property
    def arity(self):
        return self._arity

    @property
    def shape(self):
        return self._shape

    @property
    def kind(self):
        return "vector" if len(self._shape) == 1 else "matrix"

    def __repr__(self):
        return f"FunctionMap({self.name or self.func!r}, arity={self._arity}, shape={self._shape})"

    def evaluate(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self._arity:
            raise ArityError(f"expected {self._arity} coordinates, got {x.size}")
        out = np.asarray(self.func(x), dtype=float).reshape(self._shape)
        if not np.all(np.isfinite(out)):
            raise DomainError("non-finite value")
        return out

    __call__ = evaluate

    def evaluate_batch(self, X):
        X = np.asarray(X, dtype=float)
        return np.stack([self.evaluate(row) for row in X]) if len(X) else np.zeros((0,) + self._shape)

    def jvp(self, x, direction):
        x = np.asarray(x, dtype=float).ravel()
        d = np.asarray(direction, dtype=float).ravel()
        h = self.fd_step
        return (self.evaluate(x + h * d) - self.evaluate(x - h * d)) / (2 * h)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float).ravel()
        n = x.size
        cols = [self.jvp(x, np.eye(n)[j]) for j in range(n)]
        return np.stack(cols, axis=-1)


def as_map(obj, arity: int | None = None, kind: str | None = None):
    """Coerce text, SmoothMap or FunctionMap into a map object."""
    if isinstance(obj, (SmoothMap, FunctionMap)):
        return obj
    if isinstance(obj, str):
        if arity is None:
            raise ValueError("arity needed to parse expression text")
        return parse(obj, arity, kind=kind)
    raise TypeError(f"cannot interpret {obj!r} as a map")
