"""A small arithmetic expression language for coefficient tables and paths.

Grammar (tightest first): ``^`` (right-associative), unary ``-``,
``* /``, ``+ -``; parentheses; unary functions ``sin cos tan exp log
sqrt abs``; the binary function ``atan2``.  Variables are ``x1..xn`` by
default, or an explicit name list (paths use ``s`` or ``s, t``).

Parsed expressions compile to a tiny stack bytecode evaluated by the
kernels package (compiled extension when available, pure Python
otherwise), can be differentiated symbolically with respect to any
variable, and support substituting a constant for a variable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ExpressionSyntaxError, ShapeError
from .kernels import opcodes as op

UNARY_FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
BINARY_FUNCTIONS = ("atan2",)

_FUNCTION_OPS = {
    "sin": op.SIN,
    "cos": op.COS,
    "tan": op.TAN,
    "exp": op.EXP,
    "log": op.LOG,
    "sqrt": op.SQRT,
    "abs": op.ABS,
    "atan2": op.ATAN2,
}

_BIN_OPS = {"+": op.ADD, "-": op.SUB, "*": op.MUL, "/": op.DIV, "^": op.POW}


# --- AST -----------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Neg, Bin, Call]


def free_variables(node: Node) -> set:
    if isinstance(node, Num):
        return set()
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Neg):
        return free_variables(node.arg)
    if isinstance(node, Bin):
        return free_variables(node.left) | free_variables(node.right)
    return set().union(*(free_variables(a) for a in node.args)) if node.args else set()


# --- tokenizer -----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | op | end
    text: str
    position: int  # 1-based


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        match = _TOKEN_RE.match(src, pos)
        if match is None:
            raise ExpressionSyntaxError(
                f"unexpected character {src[pos]!r}",
                pos + 1,
                expected="number, variable, function or operator",
            )
        if match.lastgroup != "ws":
            tokens.append(_Token(match.lastgroup, match.group(), pos + 1))
        pos = match.end()
    tokens.append(_Token("end", "", len(src) + 1))
    return tokens


# --- parser --------------------------------------------------------------

_XVAR_RE = re.compile(r"^x([1-9]\d*)$")


class _Parser:
    def __init__(self, tokens, variables: Optional[Sequence[str]]):
        self.tokens = tokens
        self.index = 0
        self.variables = tuple(variables) if variables is not None else None

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect_op(self, text: str):
        token = self.current
        if token.kind != "op" or token.text != text:
            raise ExpressionSyntaxError(
                f"expected {text!r}, found {token.text!r}" if token.text else f"expected {text!r}, found end of input",
                token.position,
                expected=text,
            )
        return self.advance()

    def parse(self) -> Node:
        node = self.sum_expr()
        token = self.current
        if token.kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected trailing input {token.text!r}",
                token.position,
                expected="operator or end of input",
            )
        return node

    def sum_expr(self) -> Node:
        node = self.product_expr()
        while self.current.kind == "op" and self.current.text in "+-":
            operator = self.advance().text
            node = Bin(operator, node, self.product_expr())
        return node

    def product_expr(self) -> Node:
        node = self.unary_expr()
        while self.current.kind == "op" and self.current.text in "*/":
            operator = self.advance().text
            node = Bin(operator, node, self.unary_expr())
        return node

    def unary_expr(self) -> Node:
        if self.current.kind == "op" and self.current.text == "-":
            self.advance()
            return Neg(self.unary_expr())
        return self.power_expr()

    def power_expr(self) -> Node:
        base = self.atom()
        if self.current.kind == "op" and self.current.text == "^":
            self.advance()
            # exponent may carry a sign: 2^-3
            return Bin("^", base, self.unary_expr())
        return base

    def atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self.advance()
            return Num(float(token.text))
        if token.kind == "ident":
            return self.identifier()
        if token.kind == "op" and token.text == "(":
            self.advance()
            node = self.sum_expr()
            self.expect_op(")")
            return node
        raise ExpressionSyntaxError(
            f"unexpected token {token.text!r}" if token.text else "unexpected end of input",
            token.position,
            expected="number, variable, function or '('",
        )

    def identifier(self) -> Node:
        token = self.advance()
        name = token.text
        if name in UNARY_FUNCTIONS:
            self.expect_op("(")
            arg = self.sum_expr()
            self.expect_op(")")
            return Call(name, (arg,))
        if name in BINARY_FUNCTIONS:
            self.expect_op("(")
            first = self.sum_expr()
            self.expect_op(",")
            second = self.sum_expr()
            self.expect_op(")")
            return Call(name, (first, second))
        if self.variables is not None:
            try:
                return Var(self.variables.index(name))
            except ValueError:
                raise ExpressionSyntaxError(
                    f"unknown identifier {name!r}",
                    token.position,
                    expected=f"one of {', '.join(self.variables)} or a function name",
                ) from None
        match = _XVAR_RE.match(name)
        if match is None:
            raise ExpressionSyntaxError(
                f"unknown identifier {name!r}",
                token.position,
                expected="a variable x1, x2, ... or a function name",
            )
        return Var(int(match.group(1)) - 1)


# --- symbolic differentiation and substitution ---------------------------


def _num(value: float) -> Num:
    return Num(float(value))


def _is_zero(node: Node) -> bool:
    return isinstance(node, Num) and node.value == 0.0


def _is_one(node: Node) -> bool:
    return isinstance(node, Num) and node.value == 1.0


def _add(a: Node, b: Node) -> Node:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Bin("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Neg(b)
    return Bin("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_zero(a) or _is_zero(b):
        return _num(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return Bin("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_zero(a):
        return _num(0.0)
    if _is_one(b):
        return a
    return Bin("/", a, b)


def differentiate(node: Node, var: int) -> Node:
    """Symbolic derivative of ``node`` with respect to variable ``var``."""
    if isinstance(node, Num):
        return _num(0.0)
    if isinstance(node, Var):
        return _num(1.0 if node.index == var else 0.0)
    if isinstance(node, Neg):
        inner = differentiate(node.arg, var)
        return _num(0.0) if _is_zero(inner) else Neg(inner)
    if isinstance(node, Bin):
        da = differentiate(node.left, var)
        db = differentiate(node.right, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, node.right), _mul(node.left, db))
        if node.op == "/":
            num = _sub(_mul(da, node.right), _mul(node.left, db))
            return _div(num, _mul(node.right, node.right))
        # node.op == "^"
        if var not in free_variables(node.right):
            # power rule; keeps negative bases with integer exponents legal
            exponent_minus_one = _sub(node.right, _num(1.0))
            return _mul(
                _mul(node.right, Bin("^", node.left, exponent_minus_one)), da
            )
        log_term = _mul(db, Call("log", (node.left,)))
        ratio_term = _mul(node.right, _div(da, node.left))
        return _mul(node, _add(log_term, ratio_term))
    # Call
    if node.name == "atan2":
        y, x = node.args
        dy = differentiate(y, var)
        dx = differentiate(x, var)
        num = _sub(_mul(dy, x), _mul(dx, y))
        return _div(num, _add(_mul(x, x), _mul(y, y)))
    (arg,) = node.args
    du = differentiate(arg, var)
    if _is_zero(du):
        return _num(0.0)
    if node.name == "sin":
        return _mul(Call("cos", (arg,)), du)
    if node.name == "cos":
        return Neg(_mul(Call("sin", (arg,)), du))
    if node.name == "tan":
        cos_term = Call("cos", (arg,))
        return _div(du, _mul(cos_term, cos_term))
    if node.name == "exp":
        return _mul(node, du)
    if node.name == "log":
        return _div(du, arg)
    if node.name == "sqrt":
        return _div(du, _mul(_num(2.0), node))
    # abs: derivative is the sign, written as u/abs(u)
    return _mul(_div(arg, node), du)


def substitute(node: Node, var: int, value: float) -> Node:
    """Replace variable ``var`` with the constant ``value``."""
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        return _num(value) if node.index == var else node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, var, value))
    if isinstance(node, Bin):
        return Bin(
            node.op,
            substitute(node.left, var, value),
            substitute(node.right, var, value),
        )
    return Call(node.name, tuple(substitute(a, var, value) for a in node.args))


def shift_variable(node: Node, mapping: dict) -> Node:
    """Renumber variables according to ``mapping`` (old index -> new index)."""
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        return Var(mapping.get(node.index, node.index))
    if isinstance(node, Neg):
        return Neg(shift_variable(node.arg, mapping))
    if isinstance(node, Bin):
        return Bin(
            node.op,
            shift_variable(node.left, mapping),
            shift_variable(node.right, mapping),
        )
    return Call(node.name, tuple(shift_variable(a, mapping) for a in node.args))


# --- compilation to stack bytecode ---------------------------------------


@dataclass(frozen=True)
class Program:
    """One expression compiled to flat stack bytecode.

    ``codes`` holds (opcode, operand) pairs; operands index ``consts``
    for PUSH_CONST and the argument vector for PUSH_VAR.
    """

    codes: np.ndarray  # int32, interleaved (op, arg)
    consts: np.ndarray  # float64
    stack_need: int
    nvars: int


def compile_node(node: Node) -> Program:
    codes: list = []
    consts: list = []
    depth = 0
    max_depth = 0
    nvars = 0

    def emit(code: int, arg: int = 0):
        codes.append(code)
        codes.append(arg)

    def walk(n: Node):
        nonlocal depth, max_depth, nvars
        if isinstance(n, Num):
            emit(op.PUSH_CONST, len(consts))
            consts.append(float(n.value))
            depth += 1
        elif isinstance(n, Var):
            emit(op.PUSH_VAR, n.index)
            nvars = max(nvars, n.index + 1)
            depth += 1
        elif isinstance(n, Neg):
            walk(n.arg)
            emit(op.NEG)
        elif isinstance(n, Bin):
            walk(n.left)
            walk(n.right)
            emit(_BIN_OPS[n.op])
            depth -= 1
        else:
            for arg in n.args:
                walk(arg)
            emit(_FUNCTION_OPS[n.name])
            depth -= len(n.args) - 1
        max_depth = max(max_depth, depth)

    walk(node)
    return Program(
        codes=np.asarray(codes, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        stack_need=max(max_depth, 1),
        nvars=nvars,
    )


class ProgramTable:
    """Several programs packed into flat arrays for batch evaluation."""

    def __init__(self, programs: Sequence[Program]):
        self.count = len(programs)
        self.codes = (
            np.concatenate([p.codes for p in programs])
            if programs
            else np.zeros(0, dtype=np.int32)
        )
        offsets = np.zeros(self.count + 1, dtype=np.int32)
        const_offsets = np.zeros(self.count + 1, dtype=np.int32)
        for i, p in enumerate(programs):
            offsets[i + 1] = offsets[i] + p.codes.size
            const_offsets[i + 1] = const_offsets[i] + p.consts.size
        self.code_offsets = offsets
        self.consts = (
            np.concatenate([p.consts for p in programs])
            if programs
            else np.zeros(0, dtype=np.float64)
        )
        self.const_offsets = const_offsets
        self.stack_need = max((p.stack_need for p in programs), default=1)
        self.nvars = max((p.nvars for p in programs), default=0)

    def evaluate(self, args, out=None):
        from . import kernels

        args = np.ascontiguousarray(args, dtype=np.float64)
        if args.size < self.nvars:
            raise ShapeError(
                f"expression table needs {self.nvars} variables, got {args.size}"
            )
        if out is None:
            out = np.empty(self.count, dtype=np.float64)
        kernels.eval_table(
            self.codes,
            self.code_offsets,
            self.consts,
            self.const_offsets,
            self.stack_need,
            args,
            out,
        )
        return out


# --- public expression object --------------------------------------------


class Expression:
    """A parsed expression: evaluable, differentiable, substitutable."""

    def __init__(self, ast: Node, source: str = "", variables=None):
        self.ast = ast
        self.source = source
        self.variables = tuple(variables) if variables is not None else None
        self._program: Optional[Program] = None
        self._table: Optional[ProgramTable] = None

    @property
    def program(self) -> Program:
        if self._program is None:
            self._program = compile_node(self.ast)
        return self._program

    @property
    def nvars(self) -> int:
        return self.program.nvars

    def __call__(self, *args) -> float:
        if len(args) == 1 and np.ndim(args[0]) == 1:
            point = np.ascontiguousarray(args[0], dtype=np.float64)
        else:
            point = np.asarray(args, dtype=np.float64)
        if self._table is None:
            self._table = ProgramTable([self.program])
        return float(self._table.evaluate(point)[0])

    def derivative(self, var) -> "Expression":
        index = self._resolve(var)
        return Expression(
            differentiate(self.ast, index), source=f"d({self.source})", variables=self.variables
        )

    def substituted(self, var, value: float) -> "Expression":
        index = self._resolve(var)
        return Expression(
            substitute(self.ast, index, value),
            source=self.source,
            variables=self.variables,
        )

    def _resolve(self, var) -> int:
        if isinstance(var, str):
            if self.variables is None or var not in self.variables:
                raise ShapeError(f"unknown variable name {var!r}")
            return self.variables.index(var)
        return int(var)

    def __repr__(self):
        return f"Expression({self.source!r})"


def parse_expression(src: str, variables: Optional[Sequence[str]] = None) -> Expression:
    """Parse ``src`` into an :class:`Expression`.

    ``variables`` names the permitted identifiers in order (index 0
    first); when omitted, the default alphabet ``x1, x2, ...`` is used.
    Raises :class:`ExpressionSyntaxError` with a 1-based character
    position on malformed input.
    """
    if not isinstance(src, str):
        raise ExpressionSyntaxError("expression source must be text", 1)
    tokens = _tokenize(src)
    ast = _Parser(tokens, variables).parse()
    return Expression(ast, source=src, variables=variables)


def compile_table(sources, variables=None) -> ProgramTable:
    """Parse and pack a flat sequence of sources into one ProgramTable."""
    programs = []
    for src in sources:
        expr = src if isinstance(src, Expression) else parse_expression(src, variables)
        programs.append(expr.program)
    return ProgramTable(programs)
