"""Polynomial flux expressions in (u, v): parsing and exact differentiation.

A flux is a pair of polynomial expressions over the state variables u, v
with rational coefficients.  Expressions are parsed to a small AST (kept
for printing round-trips), expanded to an exact monomial table, and
differentiated symbolically.  Evaluation is in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

MAX_TOTAL_DEGREE = 12

BUILTIN_FLUXES = {
    "example61": "(u*v/2 + v, u - v^2/2)",
    "linear_wave": "(v, u)",
}


class FluxParseError(ValueError):
    """Input rejected; carries the 0-based position in the source text."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class FluxSyntaxError(FluxParseError):
    pass


class NonPolynomialError(FluxParseError):
    pass


class DegreeError(FluxParseError):
    pass


class DomainError(ValueError):
    """State outside the flux model's configured neighborhood."""


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: Fraction
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Num) and self.value == other.value

    def __hash__(self):
        return hash(("num", self.value))


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Var) and self.name == other.name

    def __hash__(self):
        return hash(("var", self.name))


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*', '/'
    left: object
    right: object
    pos: int = 0

    def __eq__(self, other):
        return (isinstance(other, BinOp) and self.op == other.op
                and self.left == other.left and self.right == other.right)

    def __hash__(self):
        return hash((self.op, self.left, self.right))


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Neg) and self.operand == other.operand

    def __hash__(self):
        return hash(("neg", self.operand))


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int
    pos: int = 0

    def __eq__(self, other):
        return (isinstance(other, Pow) and self.exponent == other.exponent
                and self.base == other.base)

    def __hash__(self):
        return hash(("pow", self.base, self.exponent))


@dataclass(frozen=True)
class FluxExpr:
    """Pair of expression trees, one per conserved component."""

    comp1: object
    comp2: object
    source: str = ""

    def __eq__(self, other):
        return (isinstance(other, FluxExpr) and self.comp1 == other.comp1
                and self.comp2 == other.comp2)

    def __hash__(self):
        return hash((self.comp1, self.comp2))


# ---------------------------------------------------------------------------
# Tokenizer / parser (recursive descent)

_TOKEN_CHARS = set("+-*/^(),")


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _TOKEN_CHARS:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("int", text[i:j], i))
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and text[j].isalnum():
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise FluxSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def advance(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok[0] != kind:
            raise FluxSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse_flux(self):
        self.expect("(")
        first = self.parse_expr()
        self.expect(",")
        second = self.parse_expr()
        self.expect(")")
        tok = self.advance()
        if tok[0] != "end":
            raise FluxSyntaxError(f"trailing input {tok[1]!r}", tok[2])
        return FluxExpr(first, second, source=self.text)

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[0] in ("+", "-"):
            op, _, pos = self.advance()
            right = self.parse_term()
            node = BinOp(op, node, right, pos)
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.peek()[0] in ("*", "/"):
            op, _, pos = self.advance()
            right = self.parse_unary()
            node = BinOp(op, node, right, pos)
        return node

    def parse_unary(self):
        kind, _, pos = self.peek()
        if kind == "-":
            self.advance()
            return Neg(self.parse_unary(), pos)
        if kind == "+":
            self.advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.peek()[0] == "^":
            _, _, pos = self.advance()
            kind, text, epos = self.advance()
            if kind != "int":
                raise NonPolynomialError("exponent must be a nonnegative integer", epos)
            return Pow(base, int(text), pos)
        return base

    def parse_atom(self):
        kind, text, pos = self.advance()
        if kind == "int":
            return Num(Fraction(int(text)), pos)
        if kind == "name":
            if text in ("u", "v"):
                return Var(text, pos)
            raise FluxSyntaxError(f"unknown identifier {text!r}", pos)
        if kind == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        raise FluxSyntaxError(f"unexpected token {text!r}", pos)


def parse_flux(text):
    """Parse ``"(expr, expr)"`` into a FluxExpr; reject non-polynomial input."""
    expr = _Parser(text).parse_flux()
    # force conversion now so parse errors surface here, not at compile time
    _ = (expr_to_poly(expr.comp1), expr_to_poly(expr.comp2))
    return expr


# ---------------------------------------------------------------------------
# Printing (round-trip stable)

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt(node, parent_prec=0):
    if isinstance(node, Num):
        if node.value.denominator == 1:
            s = str(node.value.numerator)
            neg = node.value < 0
        else:
            s = f"{node.value.numerator}/{node.value.denominator}"
            neg = node.value < 0
        return f"({s})" if neg and parent_prec > 0 else s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = _fmt(node.operand, 3)
        out = f"-{inner}"
        return f"({out})" if parent_prec >= 2 else out
    if isinstance(node, Pow):
        base = _fmt(node.base, 4)
        if isinstance(node.base, Pow):
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, BinOp):
        prec = _PRECEDENCE[node.op]
        left = _fmt(node.left, prec)
        # '-' and '/' are left-associative: bump precedence on the right
        right = _fmt(node.right, prec + (1 if node.op in ("-", "/") else 0))
        out = f"{left}{node.op}{right}"
        return f"({out})" if prec < parent_prec else out
    raise TypeError(f"unknown node {node!r}")


def print_flux(expr):
    return f"({_fmt(expr.comp1)}, {_fmt(expr.comp2)})"


# ---------------------------------------------------------------------------
# Exact polynomial algebra: {(i, j): Fraction} monomial tables

def _poly_add(p, q):
    out = dict(p)
    for key, c in q.items():
        s = out.get(key, Fraction(0)) + c
        if s:
            out[key] = s
        elif key in out:
            del out[key]
    return out


def _poly_scale(p, c):
    if not c:
        return {}
    return {key: coef * c for key, coef in p.items()}


def _poly_mul(p, q, pos):
    out = {}
    for (i1, j1), c1 in p.items():
        for (i2, j2), c2 in q.items():
            key = (i1 + i2, j1 + j2)
            if key[0] + key[1] > MAX_TOTAL_DEGREE:
                raise DegreeError(
                    f"total degree exceeds {MAX_TOTAL_DEGREE}", pos)
            s = out.get(key, Fraction(0)) + c1 * c2
            if s:
                out[key] = s
            elif key in out:
                del out[key]
    return out


def expr_to_poly(node):
    """Expand an AST into the exact monomial table, rejecting division by
    anything that is not a nonzero constant."""
    if isinstance(node, Num):
        return {(0, 0): node.value} if node.value else {}
    if isinstance(node, Var):
        return {(1, 0) if node.name == "u" else (0, 1): Fraction(1)}
    if isinstance(node, Neg):
        return _poly_scale(expr_to_poly(node.operand), Fraction(-1))
    if isinstance(node, Pow):
        if node.exponent < 0:
            raise NonPolynomialError("negative exponent", node.pos)
        base = expr_to_poly(node.base)
        out = {(0, 0): Fraction(1)}
        for _ in range(node.exponent):
            out = _poly_mul(out, base, node.pos)
        return out
    if isinstance(node, BinOp):
        left = expr_to_poly(node.left)
        right = expr_to_poly(node.right)
        if node.op == "+":
            return _poly_add(left, right)
        if node.op == "-":
            return _poly_add(left, _poly_scale(right, Fraction(-1)))
        if node.op == "*":
            return _poly_mul(left, right, node.pos)
        if node.op == "/":
            const = set(right) <= {(0, 0)}
            if not const:
                raise NonPolynomialError("division by an expression in u, v", node.pos)
            denom = right.get((0, 0), Fraction(0))
            if denom == 0:
                raise NonPolynomialError("division by zero", node.pos)
            return _poly_scale(left, 1 / denom)
    raise TypeError(f"unknown node {node!r}")


def poly_diff(p, var_index):
    out = {}
    for (i, j), c in p.items():
        if var_index == 0 and i > 0:
            out[(i - 1, j)] = out.get((i - 1, j), Fraction(0)) + c * i
        elif var_index == 1 and j > 0:
            out[(i, j - 1)] = out.get((i, j - 1), Fraction(0)) + c * j
    return {k: c for k, c in out.items() if c}


class _CompiledPoly:
    """Monomial table frozen to float coefficients for fast evaluation."""

    __slots__ = ("powers", "coeffs")

    def __init__(self, table):
        items = sorted(table.items())
        self.powers = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, 2)
        self.coeffs = np.array([float(c) for _, c in items])

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(u, v).shape)
        for (i, j), c in zip(self.powers, self.coeffs):
            out += c * (u ** int(i)) * (v ** int(j))
        return out


@dataclass(frozen=True)
class FluxJet:
    """Value, Jacobian, and Hessian of the flux at one state."""

    f: np.ndarray    # (2,)
    df: np.ndarray   # (2, 2)
    d2f: np.ndarray  # (2, 2, 2), symmetric in the last two slots


class FluxModel:
    """Compiled polynomial flux with exact symbolic derivatives.

    ``polys[k]`` is the monomial table of component k; derivative tables are
    produced once by symbolic differentiation and compiled to float
    evaluators.  All evaluators broadcast over numpy arrays.
    """

    def __init__(self, expr, radius=1.0):
        self.expr = expr
        self.radius = float(radius)
        self.polys = (expr_to_poly(expr.comp1), expr_to_poly(expr.comp2))
        self.dpolys = tuple(
            tuple(poly_diff(p, i) for i in range(2)) for p in self.polys)
        self.d2polys = tuple(
            tuple(tuple(poly_diff(dp, j) for j in range(2)) for dp in dps)
            for dps in self.dpolys)
        self._f = tuple(_CompiledPoly(p) for p in self.polys)
        self._df = tuple(tuple(_CompiledPoly(q) for q in row) for row in self.dpolys)
        self._d2f = tuple(
            tuple(tuple(_CompiledPoly(q) for q in row) for row in mat)
            for mat in self.d2polys)

    # -- scalar state -------------------------------------------------------
    def check_domain(self, u):
        u = np.asarray(u, dtype=float)
        r = float(np.max(np.hypot(u[..., 0], u[..., 1])))
        if not np.isfinite(r) or r > self.radius:
            raise DomainError(
                f"state magnitude {r:.6g} exceeds domain radius {self.radius:.6g}")

    def jet(self, state):
        """Exact jet at a single state (2-vector)."""
        state = np.asarray(state, dtype=float)
        self.check_domain(state)
        u, v = state
        f = np.array([p(u, v) for p in self._f])
        df = np.array([[q(u, v) for q in row] for row in self._df])
        d2f = np.array(
            [[[q(u, v) for q in row] for row in mat] for mat in self._d2f])
        return FluxJet(f=f, df=df, d2f=0.5 * (d2f + d2f.transpose(0, 2, 1)))

    # -- vectorized over state arrays (..., 2) ------------------------------
    def f_at(self, states):
        u, v = states[..., 0], states[..., 1]
        return np.stack([p(u, v) for p in self._f], axis=-1)

    def df_at(self, states):
        u, v = states[..., 0], states[..., 1]
        rows = [[q(u, v) for q in row] for row in self._df]
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    def d2f_at(self, states):
        u, v = states[..., 0], states[..., 1]
        mats = [
            np.stack([np.stack([q(u, v) for q in row], axis=-1) for row in mat],
                     axis=-2)
            for mat in self._d2f
        ]
        return np.stack(mats, axis=-3)

    @property
    def source(self):
        return self.expr.source or print_flux(self.expr)


def differentiate(expr, radius=1.0):
    """Compile a parsed flux expression into a FluxModel with exact jets."""
    return FluxModel(expr, radius=radius)


def eval_expr(model, state):
    """Jet of the compiled model at one state (delegates to FluxModel.jet)."""
    return model.jet(state)


def load_flux(text_or_name, radius=1.0):
    """Accept a builtin name or a literal "(expr, expr)" flux string."""
    text = BUILTIN_FLUXES.get(text_or_name, text_or_name)
    return differentiate(parse_flux(text), radius=radius)
