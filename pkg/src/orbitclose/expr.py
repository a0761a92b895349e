"""Expression trees for the vector-field DSL.

Grammar (ASCII only)::

    list   := '[' sum (',' sum)* ']'
    sum    := prod (('+' | '-') prod)*
    prod   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ['^' unary]            (right associative)
    atom   := NUMBER | IDENT | IDENT '(' sum ')' | '(' sum ')'

Identifiers resolve to coordinates, the time variable ``t``, or declared
parameters; anything else raises :class:`UnknownSymbolError`. ``abs`` is
rejected explicitly (non-smooth). Printing is precedence-aware and
round-trips: ``parse(print(tree))`` is structurally identical to ``tree``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError, UnknownSymbolError
from .jets import jsin, jcos, jexp, jlog, jsqrt


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Coord:
    index: int
    name: str


@dataclass(frozen=True)
class TimeVar:
    pass


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Add:
    a: object
    b: object


@dataclass(frozen=True)
class Sub:
    a: object
    b: object


@dataclass(frozen=True)
class Mul:
    a: object
    b: object


@dataclass(frozen=True)
class Div:
    a: object
    b: object


@dataclass(frozen=True)
class Pow:
    a: object
    b: object


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


FUNCTIONS = {"sin": jsin, "cos": jcos, "exp": jexp, "log": jlog, "sqrt": jsqrt}

_EXCLUDED_FUNCTIONS = {"abs"}  # non-smooth


# --------------------------------------------------------------------------
# Tokenizer
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[\+\-\*/\^\(\)\[\],]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            at = len(source) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}", at,
                             expected=("number", "identifier", "operator"))
        at = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), at))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

class _Parser:
    def __init__(self, source, coord_names, param_names):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.coord_index = {nm: k for k, nm in enumerate(coord_names)}
        self.param_names = set(param_names)

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value, what):
        kind, text, at = self.peek()
        if kind == "op" and text == value:
            return self.advance()
        raise ParseError(f"expected {what!r}, found {text or 'end of input'!r}",
                         at, expected=(what,))

    def _starts_operand(self):
        kind, text, _ = self.peek()
        return kind in ("num", "ident") or (kind == "op" and text in ("(", "-"))

    def parse_sum(self):
        node = self.parse_prod()
        while True:
            kind, text, at = self.peek()
            if kind == "op" and text in ("+", "-"):
                self.advance()
                if not self._starts_operand():
                    raise ParseError(f"operator {text!r} is missing its right operand",
                                     at, expected=("operand",))
                rhs = self.parse_prod()
                node = Add(node, rhs) if text == "+" else Sub(node, rhs)
            else:
                return node

    def parse_prod(self):
        node = self.parse_unary()
        while True:
            kind, text, at = self.peek()
            if kind == "op" and text in ("*", "/"):
                self.advance()
                if not self._starts_operand():
                    raise ParseError(f"operator {text!r} is missing its right operand",
                                     at, expected=("operand",))
                rhs = self.parse_unary()
                node = Mul(node, rhs) if text == "*" else Div(node, rhs)
            else:
                return node

    def parse_unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        kind, text, at = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            if not self._starts_operand():
                raise ParseError("operator '^' is missing its exponent",
                                 at, expected=("operand",))
            return Pow(base, self.parse_unary())
        return base

    def parse_atom(self):
        kind, text, at = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            nk, ntext, _ = self.peek()
            if nk == "op" and ntext == "(":
                if text in _EXCLUDED_FUNCTIONS:
                    raise UnknownSymbolError(
                        f"'{text}' is excluded (non-smooth), offset {at}")
                if text not in FUNCTIONS:
                    raise UnknownSymbolError(f"unknown function '{text}', offset {at}")
                self.advance()
                arg = self.parse_sum()
                self.expect(")", ")")
                return Call(text, arg)
            if text == "t":
                return TimeVar()
            if text in self.coord_index:
                return Coord(self.coord_index[text], text)
            if text in self.param_names:
                return Param(text)
            raise UnknownSymbolError(
                f"'{text}' is not a coordinate, t, or a declared parameter, offset {at}")
        if kind == "op" and text == "(":
            node = self.parse_sum()
            self.expect(")", ")")
            return node
        raise ParseError(f"expected an operand, found {text or 'end of input'!r}",
                         at, expected=("operand",))


def parse_expression(source, coord_names, param_names=()):
    """Parse a single scalar expression; trailing input is an error."""
    p = _Parser(source, coord_names, param_names)
    node = p.parse_sum()
    kind, text, at = p.peek()
    if kind != "end":
        raise ParseError(f"unparsed trailing input starting at {text!r}", at,
                         expected=("end of input",))
    return node


def parse_component_list(source, coord_names, param_names=()):
    """Parse a bracketed component list '[e1, ..., en]'."""
    p = _Parser(source, coord_names, param_names)
    p.expect("[", "[")
    comps = [p.parse_sum()]
    while True:
        kind, text, at = p.peek()
        if kind == "op" and text == ",":
            p.advance()
            comps.append(p.parse_sum())
        elif kind == "op" and text == "]":
            p.advance()
            break
        else:
            raise ParseError(f"expected ',' or ']', found {text or 'end of input'!r}",
                             at, expected=(",", "]"))
    kind, text, at = p.peek()
    if kind != "end":
        raise ParseError(f"unparsed trailing input starting at {text!r}", at,
                         expected=("end of input",))
    return tuple(comps)


# --------------------------------------------------------------------------
# Printer (inverse of the parser, minimal parentheses)
# --------------------------------------------------------------------------

_PREC_SUM, _PREC_PROD, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 10, 20, 25, 30, 40


def _prec(node):
    if isinstance(node, (Add, Sub)):
        return _PREC_SUM
    if isinstance(node, (Mul, Div)):
        return _PREC_PROD
    if isinstance(node, Neg):
        return _PREC_UNARY
    if isinstance(node, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(text, need):
    return f"({text})" if need else text


def to_source(node):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Coord):
        return node.name
    if isinstance(node, TimeVar):
        return "t"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({to_source(node.arg)})"
    if isinstance(node, Neg):
        arg = _wrap(to_source(node.arg), _prec(node.arg) < _PREC_UNARY)
        return f"-{arg}"
    if isinstance(node, (Add, Sub)):
        op = "+" if isinstance(node, Add) else "-"
        left = _wrap(to_source(node.a), _prec(node.a) < _PREC_SUM)
        right = _wrap(to_source(node.b), _prec(node.b) <= _PREC_SUM)
        return f"{left} {op} {right}"
    if isinstance(node, (Mul, Div)):
        op = "*" if isinstance(node, Mul) else "/"
        left = _wrap(to_source(node.a), _prec(node.a) < _PREC_PROD)
        right = _wrap(to_source(node.b), _prec(node.b) <= _PREC_PROD)
        return f"{left} {op} {right}"
    if isinstance(node, Pow):
        base = _wrap(to_source(node.a), _prec(node.a) < _PREC_ATOM)
        exponent = _wrap(to_source(node.b), _prec(node.b) < _PREC_UNARY)
        return f"{base}^{exponent}"
    raise TypeError(f"not an expression node: {node!r}")


def components_to_source(components):
    return "[" + ", ".join(to_source(c) for c in components) + "]"


# --------------------------------------------------------------------------
# Evaluation (floats, Dual1, or Jet -- anything jets.py's functions accept)
# --------------------------------------------------------------------------

def eval_expr(node, coords, t, params):
    """Evaluate an expression tree on jet-like scalars.

    ``coords`` is a sequence indexed by coordinate position, ``t`` the time
    value, ``params`` a mapping of parameter names to floats.
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Coord):
        return coords[node.index]
    if isinstance(node, TimeVar):
        return t
    if isinstance(node, Param):
        return params[node.name]
    if isinstance(node, Neg):
        return -eval_expr(node.arg, coords, t, params)
    if isinstance(node, Add):
        return eval_expr(node.a, coords, t, params) + eval_expr(node.b, coords, t, params)
    if isinstance(node, Sub):
        return eval_expr(node.a, coords, t, params) - eval_expr(node.b, coords, t, params)
    if isinstance(node, Mul):
        return eval_expr(node.a, coords, t, params) * eval_expr(node.b, coords, t, params)
    if isinstance(node, Div):
        return eval_expr(node.a, coords, t, params) / eval_expr(node.b, coords, t, params)
    if isinstance(node, Pow):
        return eval_expr(node.a, coords, t, params) ** eval_expr(node.b, coords, t, params)
    if isinstance(node, Call):
        return FUNCTIONS[node.fn](eval_expr(node.arg, coords, t, params))
    raise TypeError(f"not an expression node: {node!r}")


def free_symbols(node, acc=None):
    """Set of (kind, name) pairs appearing in the tree."""
    if acc is None:
        acc = set()
    if isinstance(node, Coord):
        acc.add(("coord", node.name))
    elif isinstance(node, TimeVar):
        acc.add(("time", "t"))
    elif isinstance(node, Param):
        acc.add(("param", node.name))
    elif isinstance(node, Neg):
        free_symbols(node.arg, acc)
    elif isinstance(node, (Add, Sub, Mul, Div, Pow)):
        free_symbols(node.a, acc)
        free_symbols(node.b, acc)
    elif isinstance(node, Call):
        free_symbols(node.arg, acc)
    return acc


def depends_on_time(node):
    return ("time", "t") in free_symbols(node)


# --------------------------------------------------------------------------
# Code generation for the fast scalar value path
# --------------------------------------------------------------------------

def _gen(node, params):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Coord):
        return f"x{node.index}"
    if isinstance(node, TimeVar):
        return "t"
    if isinstance(node, Param):
        return repr(float(params[node.name]))
    if isinstance(node, Neg):
        return f"(-{_gen(node.arg, params)})"
    if isinstance(node, Add):
        return f"({_gen(node.a, params)} + {_gen(node.b, params)})"
    if isinstance(node, Sub):
        return f"({_gen(node.a, params)} - {_gen(node.b, params)})"
    if isinstance(node, Mul):
        return f"({_gen(node.a, params)} * {_gen(node.b, params)})"
    if isinstance(node, Div):
        return f"({_gen(node.a, params)} / {_gen(node.b, params)})"
    if isinstance(node, Pow):
        return f"({_gen(node.a, params)} ** {_gen(node.b, params)})"
    if isinstance(node, Call):
        return f"_{node.fn}({_gen(node.arg, params)})"
    raise TypeError(f"not an expression node: {node!r}")


def compile_components(components, dimension, params):
    """Compile components into a fast scalar callable (x0..x{n-1}, t) -> tuple."""
    import math as _m

    args = ", ".join([f"x{i}" for i in range(dimension)] + ["t"])
    body = ", ".join(_gen(c, params) for c in components)
    ns = {"_sin": _m.sin, "_cos": _m.cos, "_exp": _m.exp, "_log": _m.log,
          "_sqrt": _m.sqrt}
    return eval(f"lambda {args}: ({body},)", ns)
