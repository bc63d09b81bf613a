"""Discrete-time metric temporal logic over boolean step traces.

Grammar (see docs/grammar.md)::

    iff      := implies ('<->' implies)*
    implies  := or ('->' implies)?
    or       := and ('|' and)*
    and      := unary ('&' unary)*
    unary    := '!' unary | ('G' | 'F') '[' int ',' int ']' '(' iff ')' | atom | '(' iff ')'

Interval bounds are integer step offsets relative to the evaluation step.
Evaluation is strict: if any step a formula needs lies outside a trace, the
result is OUT_OF_WINDOW rather than a truth value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BadInterval, InterMineError, MtlSyntaxError, UnknownAtom


class _OutOfWindow:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "OUT_OF_WINDOW"

    def __bool__(self):
        raise TypeError("OUT_OF_WINDOW has no truth value")


OUT_OF_WINDOW = _OutOfWindow()


@dataclass(frozen=True)
class BoolTrace:
    name: str
    values: tuple[bool, ...]
    offset: int = 0

    def __post_init__(self):
        if len(self.values) == 0:
            raise InterMineError(f"trace {self.name!r} is empty")
        object.__setattr__(self, "values", tuple(bool(v) for v in self.values))
        object.__setattr__(self, "offset", int(self.offset))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> int:
        """Last step covered (inclusive)."""
        return self.offset + len(self.values) - 1

    @property
    def steps(self) -> range:
        return range(self.offset, self.end + 1)

    def at(self, step: int):
        if not self.offset <= step <= self.end:
            return OUT_OF_WINDOW
        return self.values[step - self.offset]

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=bool)


# ---------------------------------------------------------------------------- AST

@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Iff:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Globally:
    lo: int
    hi: int
    arg: "Formula"


@dataclass(frozen=True)
class Eventually:
    lo: int
    hi: int
    arg: "Formula"


Formula = Union[Atom, Not, And, Or, Implies, Iff, Globally, Eventually]

_BINARY_SYMBOL = {And: "&", Or: "|", Implies: "->", Iff: "<->"}


def to_text(f: Formula) -> str:
    """Canonical text; every binary operand that is itself binary gets parentheses."""
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + _operand(f.arg)
    if isinstance(f, (Globally, Eventually)):
        op = "G" if isinstance(f, Globally) else "F"
        return f"{op}[{f.lo},{f.hi}]({to_text(f.arg)})"
    sym = _BINARY_SYMBOL[type(f)]
    return f"{_operand(f.left)} {sym} {_operand(f.right)}"


def _operand(f: Formula) -> str:
    text = to_text(f)
    return f"({text})" if type(f) in _BINARY_SYMBOL else text


def atoms(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, (Not, Globally, Eventually)):
        return atoms(f.arg)
    return atoms(f.left) | atoms(f.right)


def depth(f: Formula) -> int:
    if isinstance(f, Atom):
        return 0
    if isinstance(f, (Not, Globally, Eventually)):
        return 1 + depth(f.arg)
    return 1 + max(depth(f.left), depth(f.right))


# --------------------------------------------------------------------------- parser

_TOKEN = re.compile(r"\s*(?:(<->|->|[!&|()\[\],])|([A-Za-z_][A-Za-z0-9_]*)|([+-]?\d+(?:\.\d*)?(?:[eE][+-]?\d+)?))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise MtlSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = "op" if m.group(1) else "ident" if m.group(2) else "num"
        tokens.append((kind, m.group(m.lastindex), m.start(m.lastindex)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise MtlSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Formula:
        f = self.iff()
        kind, val, pos = self.peek()
        if kind != "end":
            raise MtlSyntaxError(f"unexpected {val!r}", pos)
        return f

    def iff(self) -> Formula:
        f = self.implies()
        while self.peek()[1] == "<->":
            self.take()
            f = Iff(f, self.implies())
        return f

    def implies(self) -> Formula:
        f = self.disj()
        if self.peek()[1] == "->":
            self.take()
            return Implies(f, self.implies())
        return f

    def disj(self) -> Formula:
        f = self.conj()
        while self.peek()[1] == "|":
            self.take()
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.unary()
        while self.peek()[1] == "&":
            self.take()
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        kind, val, pos = self.peek()
        if kind == "op" and val == "!":
            self.take()
            return Not(self.unary())
        if kind == "op" and val == "(":
            self.take()
            f = self.iff()
            self.expect(")")
            return f
        if kind == "ident":
            self.take()
            if val in ("G", "F") and self.peek()[1] == "[":
                lo, hi = self.interval()
                self.expect("(")
                arg = self.iff()
                self.expect(")")
                return Globally(lo, hi, arg) if val == "G" else Eventually(lo, hi, arg)
            return Atom(val)
        found = "end of input" if kind == "end" else repr(val)
        raise MtlSyntaxError(f"expected a formula, found {found}", pos)

    def interval(self) -> tuple[int, int]:
        _, _, start = self.take()  # '['
        lo = self.bound()
        self.expect(",")
        hi = self.bound()
        self.expect("]")
        if lo > hi:
            raise BadInterval(f"interval [{lo},{hi}] has lo > hi", start)
        return lo, hi

    def bound(self) -> int:
        kind, val, pos = self.take()
        if kind != "num":
            found = "end of input" if kind == "end" else repr(val)
            raise MtlSyntaxError(f"expected an integer bound, found {found}", pos)
        if not re.fullmatch(r"[+-]?\d+", val):
            raise BadInterval(f"bound {val!r} is not an integer", pos)
        return int(val)


def parse(text: str) -> Formula:
    return _Parser(text).parse()


# ------------------------------------------------------------------------ semantics

def _reach(f: Formula, acc: dict, lo: int = 0, hi: int = 0) -> dict[str, tuple[int, int]]:
    """Per atom, the range of step offsets the formula reads."""
    if isinstance(f, Atom):
        cur = acc.get(f.name)
        acc[f.name] = (lo, hi) if cur is None else (min(cur[0], lo), max(cur[1], hi))
    elif isinstance(f, Not):
        _reach(f.arg, acc, lo, hi)
    elif isinstance(f, (Globally, Eventually)):
        _reach(f.arg, acc, lo + f.lo, hi + f.hi)
    else:
        _reach(f.left, acc, lo, hi)
        _reach(f.right, acc, lo, hi)
    return acc


def _check_atoms(f: Formula, traces: Mapping[str, BoolTrace]) -> dict[str, tuple[int, int]]:
    reach = _reach(f, {})
    for name in sorted(reach):
        if name not in traces:
            raise UnknownAtom(f"no trace for atom {name!r}")
    return reach


def defined_steps(f: Formula, traces: Mapping[str, BoolTrace]) -> range:
    """Steps at which ``f`` evaluates to a truth value."""
    reach = _check_atoms(f, traces)
    lo = max(traces[n].offset - r[0] for n, r in reach.items())
    hi = min(traces[n].end - r[1] for n, r in reach.items())
    return range(lo, max(lo, hi + 1))


def _vector(f: Formula, traces: Mapping[str, BoolTrace], start: int, n: int) -> np.ndarray:
    """Truth values of ``f`` at steps start .. start+n-1 (all in window)."""
    if isinstance(f, Atom):
        tr = traces[f.name]
        return tr.as_array()[start - tr.offset:start - tr.offset + n]
    if isinstance(f, Not):
        return ~_vector(f.arg, traces, start, n)
    if isinstance(f, (Globally, Eventually)):
        width = f.hi - f.lo + 1
        inner = _vector(f.arg, traces, start + f.lo, n + width - 1)
        windows = sliding_window_view(inner, width)
        return windows.all(axis=1) if isinstance(f, Globally) else windows.any(axis=1)
    left = _vector(f.left, traces, start, n)
    right = _vector(f.right, traces, start, n)
    if isinstance(f, And):
        return left & right
    if isinstance(f, Or):
        return left | right
    if isinstance(f, Implies):
        return ~left | right
    return left == right


def eval_at(f: Formula, traces: Mapping[str, BoolTrace], step: int):
    """Truth value of ``f`` at ``step``, or OUT_OF_WINDOW."""
    if step not in defined_steps(f, traces):
        return OUT_OF_WINDOW
    return bool(_vector(f, traces, step, 1)[0])


def eval_all(f: Formula, traces: Mapping[str, BoolTrace], name: str | None = None) -> BoolTrace:
    """Trace of ``f`` over every step where it is defined.

    Raises InterMineError when no step is fully in window.
    """
    steps = defined_steps(f, traces)
    if len(steps) == 0:
        raise InterMineError(f"{to_text(f)} is out of window at every step")
    values = _vector(f, traces, steps.start, len(steps))
    return BoolTrace(name or to_text(f), tuple(values.tolist()), steps.start)
