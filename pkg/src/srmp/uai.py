"""Reader and writer for UAI ``MARKOV`` network files.

Table entries are taken as costs as they stand (no log transform).  The
first scope node varies slowest.  Scopes listed out of order are sorted
and their tables transposed to match.
"""
from __future__ import annotations

import math

import numpy as np

from .graph import Factor, NodeSet

__all__ = ["UAIParseError", "parse_uai", "read_uai", "write_uai"]


class UAIParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class _Tokens:
    def __init__(self, text: str):
        self.items = []
        for no, raw in enumerate(text.splitlines(), start=1):
            for tok in raw.split():
                self.items.append((tok, no))
        self.pos = 0
        self.last_line = max(1, len(text.splitlines()))

    def next(self, what: str):
        if self.pos >= len(self.items):
            raise UAIParseError(f"unexpected end of input, expected {what}", self.last_line)
        tok, no = self.items[self.pos]
        self.pos += 1
        return tok, no

    def integer(self, what: str, low: int = 0) -> int:
        tok, no = self.next(what)
        try:
            v = int(tok)
        except ValueError:
            raise UAIParseError(f"expected {what} (an integer), got {tok!r}", no) from None
        if v < low:
            raise UAIParseError(f"{what} must be >= {low}, got {v}", no)
        return v

    def number(self, what: str) -> float:
        tok, no = self.next(what)
        try:
            v = float(tok)
        except ValueError:
            raise UAIParseError(f"expected {what} (a number), got {tok!r}", no) from None
        if math.isnan(v) or v == -math.inf:
            raise UAIParseError(f"{what} must be a number or +inf, got {tok!r}", no)
        return v


def parse_uai(text: str) -> tuple[NodeSet, list[Factor]]:
    """Parse a ``MARKOV`` model.  Errors carry the offending line number."""
    tokens = _Tokens(text)
    head, no = tokens.next("the MARKOV header")
    if head.upper() != "MARKOV":
        raise UAIParseError(f"expected header MARKOV, got {head!r}", no)
    n = tokens.integer("the number of variables", low=1)
    cards = tuple(tokens.integer(f"cardinality of variable {v}", low=1) for v in range(n))
    n_factors = tokens.integer("the number of factors")
    scopes = []
    for k in range(n_factors):
        size = tokens.integer(f"scope size of factor {k}", low=1)
        scope = []
        for _ in range(size):
            v = tokens.integer(f"a variable of factor {k}")
            _, no = tokens.items[tokens.pos - 1]
            if v >= n:
                raise UAIParseError(f"factor {k} refers to variable {v}, but there are only {n}", no)
            if v in scope:
                raise UAIParseError(f"factor {k} lists variable {v} twice", no)
            scope.append(v)
        scopes.append(tuple(scope))
    factors = []
    for k, scope in enumerate(scopes):
        count = tokens.integer(f"entry count of factor {k}")
        _, no = tokens.items[tokens.pos - 1]
        shape = tuple(cards[v] for v in scope)
        expected = int(np.prod(shape))
        if count != expected:
            raise UAIParseError(
                f"factor {k} declares {count} table entries, its scope {scope} needs {expected}", no
            )
        values = np.array([tokens.number(f"entry {i} of factor {k}") for i in range(count)])
        table = values.reshape(shape)
        perm = sorted(range(len(scope)), key=lambda i: scope[i])
        factors.append(Factor(tuple(scope[i] for i in perm), table.transpose(perm)))
    if tokens.pos < len(tokens.items):
        tok, no = tokens.items[tokens.pos]
        raise UAIParseError(f"unexpected trailing token {tok!r} after the last table", no)
    return NodeSet(cards), factors


def read_uai(path) -> tuple[NodeSet, list[Factor]]:
    with open(path) as fh:
        return parse_uai(fh.read())


def _fmt(x: float) -> str:
    return repr(float(x))


def write_uai(nodes, factors) -> str:
    """Serialize to ``MARKOV`` text; values use ``repr`` so they read back bit for bit."""
    cards = nodes.cardinalities if isinstance(nodes, NodeSet) else tuple(nodes)
    lines = ["MARKOV", str(len(cards)), " ".join(str(c) for c in cards), str(len(factors))]
    for f in factors:
        lines.append(" ".join(str(v) for v in (len(f.scope), *f.scope)))
    for f in factors:
        lines.append("")
        lines.append(str(f.costs.size))
        lines.append(" ".join(_fmt(x) for x in f.costs.ravel()))
    return "\n".join(lines) + "\n"
