"""Rate expressions: a tiny total arithmetic language for jump rates and kernels.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := atom ('^' uint)?
    atom   := number | 'x' uint | '(' expr ')' | 'max0(' expr ')'

There is no division, no unary minus and no transcendental function, so
evaluation is defined everywhere. Negative constants are written ``(0 - c)``.

Expressions are also compiled to a flat postfix program (see :func:`compile_program`)
which the numba kernels in :mod:`mflab._kernels` interpret.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ExpressionSyntaxError",
    "Const",
    "Var",
    "BinOp",
    "Pow",
    "Max0",
    "RateExpr",
    "parse_rate_expression",
    "eval_expression",
    "compile_program",
]

# postfix opcodes shared with the numba interpreter
OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_POW, OP_MAX0 = range(7)


class ExpressionSyntaxError(ValueError):
    """Malformed expression text; ``position`` is the 0-based offending offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        super().__init__(f"{message} at offset {position}" + (f" in {text!r}" if text else ""))
        self.position = position
        self.text = text


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*'
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Max0:
    arg: "Node"


Node = Union[Const, Var, BinOp, Pow, Max0]


def _ipow(v, n):
    # repeated multiplication, identical in every evaluation path
    if n == 0:
        return v * 0 + 1.0
    out = v
    for _ in range(n - 1):
        out = out * v
    return out


def _eval_node(node: Node, y) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(y[node.index])
    if isinstance(node, BinOp):
        a = _eval_node(node.left, y)
        b = _eval_node(node.right, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        return a * b
    if isinstance(node, Pow):
        return _ipow(_eval_node(node.base, y), node.exponent)
    v = _eval_node(node.arg, y)
    return v if v > 0.0 else 0.0


def _eval_many(node: Node, Y: np.ndarray) -> np.ndarray:
    if isinstance(node, Const):
        return np.full(Y.shape[0], node.value)
    if isinstance(node, Var):
        return Y[:, node.index].astype(float)
    if isinstance(node, BinOp):
        a = _eval_many(node.left, Y)
        b = _eval_many(node.right, Y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        return a * b
    if isinstance(node, Pow):
        return _ipow(_eval_many(node.base, Y), node.exponent)
    v = _eval_many(node.arg, Y)
    return np.where(v > 0.0, v, 0.0)


_PREC = {"+": 1, "-": 1, "*": 2}


def _format(node: Node, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(node, Const):
        v = float(node.value)
        return repr(v) if v >= 0 else f"(0 - {-v!r})"
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Max0):
        return f"max0({_format(node.arg)})"
    if isinstance(node, Pow):
        base = _format(node.base)
        if not isinstance(node.base, (Const, Var, Max0)):
            base = f"({base})"
        return f"{base}^{node.exponent}"
    prec = _PREC[node.op]
    # operators associate to the left, so an equal-precedence right operand keeps its parens
    s = f"{_format(node.left, prec)} {node.op} {_format(node.right, prec, True)}"
    if prec < parent_prec or (right and prec == parent_prec):
        return f"({s})"
    return s


def _max_var(node: Node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, BinOp):
        return max(_max_var(node.left), _max_var(node.right))
    if isinstance(node, Pow):
        return _max_var(node.base)
    if isinstance(node, Max0):
        return _max_var(node.arg)
    return -1


@dataclass(frozen=True, eq=False)
class RateExpr:
    """Parsed rate expression; ``text`` is the source it came from."""

    tree: Node
    text: str
    dim: int

    def __call__(self, y) -> float:
        return _eval_node(self.tree, y)

    def evaluate_many(self, Y) -> np.ndarray:
        """Evaluate on the rows of an ``(n, d)`` array."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return _eval_many(self.tree, Y)

    @property
    def max_var(self) -> int:
        return _max_var(self.tree)

    def pretty(self) -> str:
        return _format(self.tree)

    def __str__(self) -> str:
        return self.text

    def __repr__(self) -> str:
        return f"RateExpr({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, RateExpr) and self.tree == other.tree

    def __hash__(self):
        return hash(self.tree)


_NUMBER = re.compile(r"\d+(\.\d*)?([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?")
_UINT = re.compile(r"\d+")


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.pos = 0

    def error(self, msg, pos=None):
        raise ExpressionSyntaxError(msg, self.pos if pos is None else pos, self.text)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> Node:
        node = self.expr()
        self.skip()
        if self.pos < len(self.text):
            self.error(f"unexpected {self.text[self.pos]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek() == "*":
            self.pos += 1
            node = BinOp("*", node, self.factor())
        return node

    def factor(self) -> Node:
        node = self.atom()
        if self.peek() == "^":
            self.pos += 1
            self.skip()
            m = _UINT.match(self.text, self.pos)
            if not m:
                self.error("expected unsigned integer exponent")
            self.pos = m.end()
            node = Pow(node, int(m.group()))
        return node

    def atom(self) -> Node:
        c = self.peek()
        start = self.pos
        if c == "":
            self.error("unexpected end of input")
        if c == "(":
            self.pos += 1
            node = self.expr()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return node
        if self.text.startswith("max0(", self.pos):
            self.pos += 5
            node = self.expr()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return Max0(node)
        if c == "x":
            m = _UINT.match(self.text, self.pos + 1)
            if not m:
                self.error("expected variable index after 'x'")
            idx = int(m.group())
            if idx >= self.dim:
                self.error(f"variable x{idx} out of range for dimension {self.dim}", start)
            self.pos = m.end()
            return Var(idx)
        m = _NUMBER.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return Const(float(m.group()))
        self.error(f"unexpected {c!r}")


def parse_rate_expression(text: str, dim: int) -> RateExpr:
    """Parse ``text`` into a :class:`RateExpr` over variables ``x0..x{dim-1}``.

    Raises
    ------
    ExpressionSyntaxError
        On malformed input or a variable index ``>= dim``; carries the offset.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0, str(text))
    return RateExpr(_Parser(text, dim).parse(), text, dim)


def eval_expression(expr: RateExpr, y: Sequence[float]) -> float:
    """Evaluate ``expr`` at ``y``; ``max0`` clamps at zero."""
    return expr(y)


def _emit(node: Node, ops: list, args: list) -> int:
    """Append postfix code for ``node``; return the stack depth it needs."""
    if isinstance(node, Const):
        ops.append(OP_CONST)
        args.append(node.value)
        return 1
    if isinstance(node, Var):
        ops.append(OP_VAR)
        args.append(float(node.index))
        return 1
    if isinstance(node, BinOp):
        dl = _emit(node.left, ops, args)
        dr = _emit(node.right, ops, args)
        ops.append({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL}[node.op])
        args.append(0.0)
        return max(dl, dr + 1)
    if isinstance(node, Pow):
        d = _emit(node.base, ops, args)
        ops.append(OP_POW)
        args.append(float(node.exponent))
        return d
    d = _emit(node.arg, ops, args)
    ops.append(OP_MAX0)
    args.append(0.0)
    return d


@dataclass(frozen=True)
class Program:
    """Concatenated postfix code for a list of expressions.

    Expression ``j`` occupies ``ops[starts[j]:starts[j + 1]]``.
    """

    ops: np.ndarray
    args: np.ndarray
    starts: np.ndarray
    depth: int


def compile_program(exprs: Sequence[RateExpr]) -> Program:
    ops: list = []
    args: list = []
    starts = [0]
    depth = 1
    for e in exprs:
        depth = max(depth, _emit(e.tree, ops, args))
        starts.append(len(ops))
    return Program(
        np.asarray(ops, dtype=np.int64),
        np.asarray(args, dtype=np.float64),
        np.asarray(starts, dtype=np.int64),
        depth,
    )
