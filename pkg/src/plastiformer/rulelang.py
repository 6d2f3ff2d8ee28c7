"""Sum-of-products plasticity rule language.

Grammar (whitespace insensitive)::

    expr   := ['-'] term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := INT | VAR | '(' VAR ('+' | '-') INT ')'
    VAR    := x0 | x1 | x2 | y0 | y1 | y2 | y3 | w

Additive offsets are only allowed on trace and weight variables; spike
triggers (x0, y0) are bare. A product may reference w at most once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

SPIKE_VARS = ("x0", "y0")
TRACE_VARS = ("x1", "x2", "y1", "y2", "y3")
WEIGHT_VAR = "w"
VARIABLES = SPIKE_VARS + TRACE_VARS + (WEIGHT_VAR,)


class RuleSyntaxError(ValueError):
    """Malformed rule text; `position` is the character offset of the fault."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Factor:
    kind: str  # variable name or "constant"
    offset: int = 0
    const_value: int = 0

    def __post_init__(self):
        if self.kind == "constant":
            if self.offset != 0:
                raise ValueError("constant factors carry no offset")
        elif self.kind not in VARIABLES:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        elif self.offset != 0 and self.kind in SPIKE_VARS:
            raise ValueError(f"spike trigger {self.kind} cannot carry an offset")


@dataclass(frozen=True)
class ProductTerm:
    sign: int  # +1 or -1
    factors: tuple

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not self.factors:
            raise ValueError("a product needs at least one factor")
        if sum(1 for f in self.factors if f.kind == WEIGHT_VAR) > 1:
            raise ValueError("at most one w factor per product term")


@dataclass(frozen=True)
class RuleExpr:
    terms: tuple
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.terms:
            raise ValueError("rule has no terms")

    @property
    def variables(self) -> set:
        return {f.kind for t in self.terms for f in t.factors if f.kind != "constant"}


_TOKEN_RE = re.compile(r"\s*(?:(\d+)|([A-Za-z_]\w*)|([()*+-]))")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.group(1) is not None:
            tokens.append(("INT", int(m.group(1)), m.start(1)))
        elif m.group(2) is not None:
            tokens.append(("NAME", m.group(2), m.start(2)))
        elif m.group(3) is not None:
            tokens.append((m.group(3), m.group(3), m.start(3)))
        pos = m.end()
    tokens.append(("EOF", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            raise RuleSyntaxError(f"expected {kind}, found {tok[1]!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> RuleExpr:
        terms = []
        sign = 1
        if self.peek()[0] == "-":
            self.take()
            sign = -1
        terms.append(self.term(sign))
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            terms.append(self.term(1 if op == "+" else -1))
        tok = self.peek()
        if tok[0] != "EOF":
            raise RuleSyntaxError(f"trailing input {tok[1]!r}", tok[2])
        return RuleExpr(tuple(terms), self.text)

    def term(self, sign: int) -> ProductTerm:
        factors = [self.factor()]
        while self.peek()[0] == "*":
            self.take()
            factors.append(self.factor())
        tok = self.tokens[self.i - 1]
        try:
            return ProductTerm(sign, tuple(factors))
        except ValueError as exc:
            raise RuleSyntaxError(str(exc), tok[2]) from exc

    def factor(self) -> Factor:
        tok = self.take()
        kind, value, pos = tok
        if kind == "INT":
            return Factor("constant", const_value=value)
        if kind == "NAME":
            if value not in VARIABLES:
                raise RuleSyntaxError(f"unknown variable {value!r}", pos)
            return Factor(value)
        if kind == "(":
            name_tok = self.take("NAME")
            if name_tok[1] not in VARIABLES:
                raise RuleSyntaxError(f"unknown variable {name_tok[1]!r}", name_tok[2])
            op = self.take()
            if op[0] not in ("+", "-"):
                raise RuleSyntaxError("expected '+' or '-' inside parentheses", op[2])
            off_tok = self.take("INT")
            self.take(")")
            offset = off_tok[1] if op[0] == "+" else -off_tok[1]
            try:
                return Factor(name_tok[1], offset=offset)
            except ValueError as exc:
                raise RuleSyntaxError(str(exc), name_tok[2]) from exc
        raise RuleSyntaxError(f"expected a factor, found {value!r}", pos)


def parse_rule(text: str) -> RuleExpr:
    if not text or not text.strip():
        raise RuleSyntaxError("empty rule", 0)
    return _Parser(text).parse()


def render(rule: RuleExpr) -> str:
    """Canonical text form; parse(render(r)) == r."""
    parts = []
    for i, term in enumerate(rule.terms):
        body = " * ".join(_render_factor(f) for f in term.factors)
        if i == 0:
            parts.append(body if term.sign > 0 else f"-{body}")
        else:
            parts.append(("+ " if term.sign > 0 else "- ") + body)
    return " ".join(parts)


def _render_factor(f: Factor) -> str:
    if f.kind == "constant":
        return str(f.const_value)
    if f.offset == 0:
        return f.kind
    op = "+" if f.offset > 0 else "-"
    return f"({f.kind} {op} {abs(f.offset)})"


def evaluate_rule(rule: RuleExpr, binding) -> object:
    """Weight delta dw = sum of signed factor products.

    `binding` maps variable names to values; values may be scalars or numpy
    arrays (broadcast elementwise, one dw per synapse). Integer bindings are
    evaluated exactly; saturation to a storage format is the caller's job.
    """
    total = None
    for term in rule.terms:
        prod = term.sign
        for f in term.factors:
            if f.kind == "constant":
                prod = prod * f.const_value
            else:
                if f.kind not in binding:
                    raise KeyError(f"unbound rule variable {f.kind!r}")
                value = binding[f.kind]
                prod = prod * (value + f.offset) if f.offset else prod * value
        total = prod if total is None else total + prod
    return total
