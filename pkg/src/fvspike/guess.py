"""Initial vectors for the Newton solver.

Two flavours: a fixed family of builtin seeds indexed by the cell number s
(reciprocal sine integral, rectified trigonometric and elliptic profiles,
constants, seeded noise), and a parsed expression language in the variables
s, i, j, x, y, N.  Builtins rectify/clamp so the produced field is strictly
positive and finite everywhere.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import specfun
from .mesh import GridField, Mesh

__all__ = [
    "ParseError",
    "EvalError",
    "Num",
    "Var",
    "Unary",
    "Binary",
    "Call",
    "parse_expression",
    "eval_expression",
    "unparse",
    "GuessSpec",
    "materialize_guess",
    "BUILTIN_GUESSES",
]


class ParseError(ValueError):
    """Lexical or syntax error; carries the 0-based source position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(ValueError):
    """Arithmetic domain error during expression evaluation."""


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Num | Var | Unary | Binary | Call

VARIABLES = ("s", "i", "j", "x", "y", "N")

FUNCTIONS = {
    "abs": 1, "sin": 1, "cos": 1, "tan": 1, "sec": 1, "exp": 1,
    "log": 1, "sqrt": 1, "si": 1,
    "sn": 2, "cn": 2, "dn": 2, "cd": 2, "min": 2, "max": 2,
}


# ---------------------------------------------------------------------------
# Lexer / parser
#
# expr   := term (('+'|'-') term)*
# term   := factor (('*'|'/') factor)*
# factor := unary ('^' factor)?          -- '^' right-associative
# unary  := '-' unary | atom
# atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

_NUMBER = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9_]*")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        ch = source[pos]
        if ch.isspace():
            pos += 1
            continue
        m = _NUMBER.match(source, pos)
        if m:
            tokens.append(("num", m.group(), pos))
            pos = m.end()
            continue
        m = _IDENT.match(source, pos)
        if m:
            tokens.append(("ident", m.group(), pos))
            pos = m.end()
            continue
        if ch in "+-*/^(),":
            tokens.append(("op", ch, pos))
            pos += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", pos)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.k = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.k]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}, found {text or 'end of input'!r}", pos)
        self.take()

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", pos)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                node = Binary(text, node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                node = Binary(text, node, self.factor())
            else:
                return node

    def factor(self) -> Expr:
        node = self.unary()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return Binary("^", node, self.factor())
        return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Unary("-", self.unary())
        return self.atom()

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            nkind, ntext, _ = self.peek()
            if nkind == "op" and ntext == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos)
                self.take()
                args = [self.expr()]
                while True:
                    akind, atext, _ = self.peek()
                    if akind == "op" and atext == ",":
                        self.take()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                want = FUNCTIONS[text]
                if len(args) != want:
                    raise ParseError(
                        f"function {text!r} takes {want} argument(s), got {len(args)}",
                        pos,
                    )
                return Call(text, tuple(args))
            if text not in VARIABLES:
                raise ParseError(
                    f"unknown variable {text!r} (allowed: {', '.join(VARIABLES)})", pos
                )
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {text or 'end of input'!r}", pos)


def parse_expression(source: str) -> Expr:
    """Parse an initial-guess expression into its AST."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Evaluation

def _power(a: float, b: float) -> float:
    if a == 0.0 and b < 0.0:
        raise EvalError(f"0^{b}: zero base with negative exponent")
    try:
        return math.pow(a, b)
    except OverflowError:
        return math.inf
    except ValueError:
        raise EvalError(f"({a})^{b}: negative base with fractional exponent") from None


def _call(name: str, args: list[float]) -> float:
    try:
        if name == "abs":
            return abs(args[0])
        if name == "sin":
            return math.sin(args[0])
        if name == "cos":
            return math.cos(args[0])
        if name == "tan":
            return math.tan(args[0])
        if name == "sec":
            c = math.cos(args[0])
            if c == 0.0:
                raise EvalError(f"sec({args[0]}): cosine vanishes")
            return 1.0 / c
        if name == "exp":
            return math.exp(args[0])
        if name == "log":
            if args[0] <= 0.0:
                raise EvalError(f"log({args[0]}): non-positive argument")
            return math.log(args[0])
        if name == "sqrt":
            if args[0] < 0.0:
                raise EvalError(f"sqrt({args[0]}): negative argument")
            return math.sqrt(args[0])
        if name == "si":
            return specfun.sine_integral(args[0])
        if name == "sn":
            return specfun.jacobi_elliptic(args[0], args[1]).sn
        if name == "cn":
            return specfun.jacobi_elliptic(args[0], args[1]).cn
        if name == "dn":
            return specfun.jacobi_elliptic(args[0], args[1]).dn
        if name == "cd":
            return specfun.jacobi_cd(args[0], args[1])
        if name == "min":
            return min(args)
        if name == "max":
            return max(args)
    except OverflowError:
        return math.inf
    raise EvalError(f"unregistered function {name!r}")


def eval_expression(ast: Expr, env: dict) -> float:
    """Evaluate an AST; ``env`` must bind all of s, i, j, x, y, N."""
    try:
        return _eval(ast, env)
    except EvalError as exc:
        loc = "s={s}, i={i}, j={j}".format(**{k: env.get(k, "?") for k in "sij"})
        raise EvalError(f"{exc} [cell {loc}]") from None


def _eval(ast: Expr, env: dict) -> float:
    if isinstance(ast, Num):
        return ast.value
    if isinstance(ast, Var):
        return float(env[ast.name])
    if isinstance(ast, Unary):
        return -_eval(ast.child, env)
    if isinstance(ast, Binary):
        a = _eval(ast.left, env)
        b = _eval(ast.right, env)
        if ast.op == "+":
            return a + b
        if ast.op == "-":
            return a - b
        if ast.op == "*":
            return a * b
        if ast.op == "/":
            if b == 0.0:
                raise EvalError(f"division by zero: {a}/0")
            return a / b
        return _power(a, b)
    return _call(ast.name, [_eval(arg, env) for arg in ast.args])


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def unparse(ast: Expr) -> str:
    """Render an AST back to source that parses to a structurally equal tree."""
    return _unparse(ast, 1)


def _unparse(ast: Expr, minprec: int) -> str:
    if isinstance(ast, Num):
        return repr(ast.value)
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Call):
        return ast.name + "(" + ", ".join(_unparse(a, 1) for a in ast.args) + ")"
    if isinstance(ast, Unary):
        text = "-" + _unparse(ast.child, 4)
        return f"({text})" if minprec > 4 else text
    prec = _PREC[ast.op]
    if ast.op == "^":
        text = _unparse(ast.left, 4) + "^" + _unparse(ast.right, 3)
    else:
        text = (_unparse(ast.left, prec) + ast.op + _unparse(ast.right, prec + 1))
    return f"({text})" if prec < minprec else text


# ---------------------------------------------------------------------------
# Guess specifications

BUILTIN_GUESSES = {
    "recip_si": 0,        # 1 / Si(s)
    "recip_s_si": 0,      # 1 / (s * Si(s))
    "abs_sec": 0,         # |sec(s)|
    "abs_cos": 0,         # |cos(s)|
    "abs_cd": 1,          # |cd(s, m)|
    "recip_abs_cn": 1,    # 1 / |cn(s, m)|
    "constant": 1,        # kappa
    "random_uniform": 3,  # lo, hi, seed
}


@dataclass(frozen=True)
class GuessSpec:
    """How to build an initial vector: a named builtin or an expression.

    ``clamp_min`` floors the magnitude fed into reciprocals and the final
    builtin values, so every builtin field is strictly positive and finite.
    """

    kind: str                      # "builtin" | "expression"
    name: str = ""
    args: tuple = ()
    source: str = ""
    clamp_min: float = 1e-8

    def __post_init__(self) -> None:
        if self.clamp_min < 0:
            raise ValueError(f"clamp_min must be non-negative, got {self.clamp_min}")
        if self.kind == "builtin":
            if self.name not in BUILTIN_GUESSES:
                raise ValueError(
                    f"unknown builtin guess {self.name!r} "
                    f"(known: {', '.join(sorted(BUILTIN_GUESSES))})"
                )
            want = BUILTIN_GUESSES[self.name]
            if len(self.args) != want:
                raise ValueError(
                    f"builtin {self.name!r} takes {want} parameter(s), "
                    f"got {len(self.args)}"
                )
        elif self.kind == "expression":
            parse_expression(self.source)  # validate eagerly
        else:
            raise ValueError(f"guess kind must be 'builtin' or 'expression', got {self.kind!r}")

    @classmethod
    def builtin(cls, name: str, *args: float, clamp_min: float = 1e-8) -> "GuessSpec":
        return cls("builtin", name=name, args=tuple(float(a) for a in args),
                   clamp_min=clamp_min)

    @classmethod
    def expression(cls, source: str, clamp_min: float = 1e-8) -> "GuessSpec":
        return cls("expression", source=source, clamp_min=clamp_min)

    @classmethod
    def parse(cls, text: str, clamp_min: float = 1e-8) -> "GuessSpec":
        """Parse a config-file guess: 'abs_cd(10)', 'constant(1)', 'expr:...'."""
        text = text.strip()
        if text.startswith("expr:"):
            return cls.expression(text[len("expr:"):].strip(), clamp_min=clamp_min)
        m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(([^)]*)\))?", text)
        if not m:
            raise ValueError(f"cannot parse guess spec {text!r}")
        name = m.group(1)
        args = ()
        if m.group(2) is not None and m.group(2).strip():
            args = tuple(float(v) for v in m.group(2).split(","))
        return cls.builtin(name, *args, clamp_min=clamp_min)

    def describe(self) -> str:
        if self.kind == "expression":
            return f"expr:{self.source}"
        if self.args:
            inner = ",".join(repr(a) for a in self.args)
            return f"{self.name}({inner})"
        return self.name


def _builtin_value(spec: GuessSpec, s: int) -> float:
    lo = spec.clamp_min
    name = spec.name
    if name == "recip_si":
        return 1.0 / max(lo, abs(specfun.sine_integral(s)))
    if name == "recip_s_si":
        return 1.0 / max(lo, abs(s * specfun.sine_integral(s)))
    if name == "abs_sec":
        return 1.0 / max(lo, abs(math.cos(s)))
    if name == "abs_cos":
        return max(lo, abs(math.cos(s)))
    if name == "abs_cd":
        return max(lo, abs(specfun.jacobi_cd(s, spec.args[0])))
    if name == "recip_abs_cn":
        return 1.0 / max(lo, abs(specfun.jacobi_elliptic(s, spec.args[0]).cn))
    if name == "constant":
        return max(lo, abs(spec.args[0]))
    raise ValueError(f"unhandled builtin {name!r}")


def materialize_guess(spec: GuessSpec, mesh: Mesh) -> GridField:
    """Evaluate a guess over every control volume of ``mesh``.

    The per-cell environment binds s, i, j (1-based indices), the physical
    center coordinates x, y, and N = n_x.  Expression values are used as-is
    except that non-finite or sub-clamp magnitudes are replaced by
    ``clamp_min``.
    """
    n = mesh.n_cells
    out = np.empty(n)
    if spec.kind == "builtin" and spec.name == "random_uniform":
        lo_v, hi_v, seed = spec.args
        rng = np.random.default_rng(int(seed))
        draw = rng.uniform(lo_v, hi_v, n)
        out = np.maximum(spec.clamp_min, np.abs(draw))
        return GridField(mesh, out)
    ast = parse_expression(spec.source) if spec.kind == "expression" else None
    for s in range(1, n + 1):
        i, j = mesh.inverse_index(s)
        if ast is None:
            out[s - 1] = _builtin_value(spec, s)
        else:
            env = {
                "s": float(s), "i": float(i), "j": float(j),
                "x": mesh.x_centers[i - 1], "y": mesh.y_centers[j - 1],
                "N": float(mesh.n_x),
            }
            v = eval_expression(ast, env)
            if not math.isfinite(v) or abs(v) < spec.clamp_min:
                v = spec.clamp_min
            out[s - 1] = v
    return GridField(mesh, out)
