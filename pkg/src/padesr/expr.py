"""Token alphabet, flat expressions, and the depth-bounded generation grammar.

Expressions are stored as flat prefix or postfix token sequences and are never
materialized as trees.  Tree depth uses the convention that a lone leaf has
depth 0.  Token-by-token generation is driven by :func:`legal_tokens`, which
admits exactly the tokens that can still be completed into an expression whose
depth fits the declared budget.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence


class Notation(str, Enum):
    PREFIX = "prefix"
    POSTFIX = "postfix"


class TokenKind(Enum):
    VARIABLE = "variable"
    IC = "ic"
    IC_DERIV = "ic_deriv"
    LITERAL = "literal"
    CONST = "const"
    UNARY = "unary"
    BINARY = "binary"


class ExprError(ValueError):
    """Structurally invalid token sequence (underflow, dangling operands...)."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (token {position + 1})")
        self.position = position


UNARY_OPS = ("~", "log", "exp", "cos", "sin", "sqrt", "asin", "acos", "tanh", "sech")
BINARY_OPS = ("+", "-", "*", "/", "^")

_ARITY = {
    TokenKind.VARIABLE: 0,
    TokenKind.IC: 0,
    TokenKind.IC_DERIV: 0,
    TokenKind.LITERAL: 0,
    TokenKind.CONST: 0,
    TokenKind.UNARY: 1,
    TokenKind.BINARY: 2,
}


@dataclass(frozen=True)
class Token:
    """One symbol of the expression alphabet.

    ``value`` is set for literals (named literals such as ``x_min`` carry the
    value they were bound to), ``dx``/``dy`` are the differentiation orders of
    an initial-condition derivative token, and ``slot`` identifies a learnable
    constant.  Slots survive differentiation, so a constant vector fitted for
    an expression also applies to all of its derivatives.
    """

    kind: TokenKind
    text: str
    value: Optional[float] = None
    dx: int = 0
    dy: int = 0
    slot: Optional[int] = None

    @property
    def arity(self) -> int:
        return _ARITY[self.kind]

    def __repr__(self) -> str:  # keep failure output readable
        return f"Token({self.text!r})"


def _lit(text: str, value: float) -> Token:
    return Token(TokenKind.LITERAL, text, value=float(value))


VAR_X = Token(TokenKind.VARIABLE, "x")
VAR_Y = Token(TokenKind.VARIABLE, "y")
VAR_T = Token(TokenKind.VARIABLE, "t")
IC_TOKEN = Token(TokenKind.IC, "I")
IC_X = Token(TokenKind.IC_DERIV, "I_x", dx=1)
IC_Y = Token(TokenKind.IC_DERIV, "I_y", dy=1)
IC_XX = Token(TokenKind.IC_DERIV, "I_xx", dx=2)
IC_YY = Token(TokenKind.IC_DERIV, "I_yy", dy=2)
IC_XY = Token(TokenKind.IC_DERIV, "I_xy", dx=1, dy=1)
IC_FAMILY = (IC_TOKEN, IC_X, IC_Y, IC_XX, IC_YY, IC_XY)

ZERO = _lit("0", 0.0)
ONE = _lit("1", 1.0)
TWO = _lit("2", 2.0)
FOUR = _lit("4", 4.0)

CONST_TOKEN = Token(TokenKind.CONST, "C")

UNARY_TOKENS = {op: Token(TokenKind.UNARY, op) for op in UNARY_OPS}
BINARY_TOKENS = {op: Token(TokenKind.BINARY, op) for op in BINARY_OPS}

NAMED_LITERALS = ("x_min", "x_max", "y_min", "y_max", "t_min", "t_max")

_DECIMAL_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")


def literal_token(value: float) -> Token:
    """Literal token for an arbitrary value, spelled canonically."""
    v = float(value)
    if v == int(v) and abs(v) < 1e15:
        return _lit(str(int(v)), v)
    return _lit(repr(v), v)


@dataclass(frozen=True)
class Alphabet:
    """Leaf/operator token sets available to the generator.

    The three search configurations are (variables only), (variables +
    literals) and (variables + literals + learnable constant).
    """

    variables: tuple[Token, ...]
    literals: tuple[Token, ...]
    include_learnable: bool
    unaries: tuple[Token, ...] = tuple(UNARY_TOKENS[op] for op in UNARY_OPS)
    binaries: tuple[Token, ...] = tuple(BINARY_TOKENS[op] for op in BINARY_OPS)

    @cached_property
    def leaves(self) -> tuple[Token, ...]:
        extra = (CONST_TOKEN,) if self.include_learnable else ()
        return self.variables + self.literals + extra

    @cached_property
    def ordered(self) -> tuple[Token, ...]:
        return self.leaves + self.unaries + self.binaries

    @cached_property
    def by_text(self) -> Mapping[str, Token]:
        return {tok.text: tok for tok in self.ordered}


def make_alphabet(
    bounds: Optional[Mapping[str, float]] = None,
    include_literals: bool = True,
    include_learnable: bool = False,
) -> Alphabet:
    """Build an alphabet; ``bounds`` supplies values for the named literals."""
    literals: tuple[Token, ...] = ()
    if include_literals:
        if bounds is None:
            raise ValueError("literal tokens need domain bounds")
        named = tuple(_lit(name, bounds[name]) for name in NAMED_LITERALS)
        literals = (ZERO, ONE, TWO, FOUR) + named
    return Alphabet(
        variables=(VAR_X, VAR_Y, VAR_T, IC_TOKEN),
        literals=literals,
        include_learnable=include_learnable,
    )


# ---------------------------------------------------------------------------
# completeness / depth scans (single pass, no tree construction)


def is_complete(tokens: Sequence[Token], notation: Notation) -> bool:
    if not tokens:
        return False
    if notation is Notation.PREFIX:
        need = 1
        for i, tok in enumerate(tokens):
            need += tok.arity - 1
            if need == 0:
                return i == len(tokens) - 1
        return False
    size = 0
    for tok in tokens:
        if tok.arity > size:
            return False
        size += 1 - tok.arity
    return size == 1


def sequence_depth(tokens: Sequence[Token], notation: Notation) -> int:
    """Tree depth of a complete token sequence (leaf = 0)."""
    scan = tokens if notation is Notation.POSTFIX else reversed(tokens)
    depths: list[int] = []
    for tok in scan:
        a = tok.arity
        if a == 0:
            depths.append(0)
        elif a == 1:
            if not depths:
                raise ExprError("operand underflow")
            depths[-1] += 1
        else:
            if len(depths) < 2:
                raise ExprError("operand underflow")
            b = depths.pop()
            depths[-1] = max(depths[-1], b) + 1
    if len(depths) != 1:
        raise ExprError("incomplete expression")
    return depths[0]


@dataclass(frozen=True)
class Expr:
    """Flat token sequence plus notation tag and declared depth budget."""

    notation: Notation
    tokens: tuple[Token, ...]
    budget: int

    @cached_property
    def depth(self) -> int:
        return sequence_depth(self.tokens, self.notation)

    @cached_property
    def key(self) -> str:
        return f"{self.notation.value}:{self.text}"

    @cached_property
    def text(self) -> str:
        return " ".join(tok.text for tok in self.tokens)

    @cached_property
    def n_slots(self) -> int:
        slots = [tok.slot for tok in self.tokens if tok.kind is TokenKind.CONST]
        return 0 if not slots else max(slots) + 1

    def __repr__(self) -> str:
        return f"Expr({self.notation.value}: {self.text})"


def make_expr(
    tokens: Iterable[Token], notation: Notation, budget: Optional[int] = None
) -> Expr:
    """Validate completeness, assign learnable-constant slots, wrap as Expr.

    Constant tokens without a slot id receive fresh ids in sequence order;
    tokens that already carry a slot (derivative output) keep it.
    """
    toks = list(tokens)
    if not is_complete(toks, notation):
        raise ExprError("incomplete expression")
    taken = [t.slot for t in toks if t.kind is TokenKind.CONST and t.slot is not None]
    next_slot = max(taken) + 1 if taken else 0
    for i, tok in enumerate(toks):
        if tok.kind is TokenKind.CONST and tok.slot is None:
            toks[i] = Token(TokenKind.CONST, tok.text, slot=next_slot)
            next_slot += 1
    depth = sequence_depth(toks, notation)
    if budget is None:
        budget = depth
    elif depth > budget:
        raise ExprError(f"depth {depth} exceeds budget {budget}")
    return Expr(notation, tuple(toks), budget)


# ---------------------------------------------------------------------------
# depth-bounded grammar


def _min_completion_depth(depths: Sequence[int]) -> int:
    """Smallest final tree depth reachable from a postfix stack of subtree depths.

    Each stack entry can only merge with the combined result of everything
    above it, so the optimum is the pairwise top-down merge.
    """
    m = depths[-1]
    for d in reversed(depths[:-1]):
        m = max(d, m) + 1
    return m


def _prefix_demands(partial: Sequence[Token], budget: int) -> list[int]:
    demands = [budget]
    for tok in partial:
        if not demands:
            raise ExprError("token after complete prefix expression")
        d = demands.pop()
        a = tok.arity
        if a and d < 1:
            raise ExprError("depth budget exceeded")
        for _ in range(a):
            demands.append(d - 1)
    return demands


def _postfix_depths(partial: Sequence[Token], budget: int) -> list[int]:
    depths: list[int] = []
    for tok in partial:
        a = tok.arity
        if a == 0:
            depths.append(0)
        elif a == 1:
            if not depths:
                raise ExprError("operand underflow")
            depths[-1] += 1
        else:
            if len(depths) < 2:
                raise ExprError("operand underflow")
            b = depths.pop()
            depths[-1] = max(depths[-1], b) + 1
        if _min_completion_depth(depths) > budget:
            raise ExprError("depth budget exceeded")
    return depths


def legal_tokens(
    partial: Sequence[Token],
    notation: Notation,
    budget: int,
    alphabet: Alphabet,
) -> list[Token]:
    """Tokens that extend ``partial`` toward at least one in-budget completion.

    The returned list preserves the alphabet's canonical order.  It is empty
    exactly when no extension exists; for prefix sequences that coincides with
    completeness, for postfix a complete sequence may still be extendable
    (pushing another operand to be merged later).
    """
    if notation is Notation.PREFIX:
        demands = _prefix_demands(partial, budget)
        if not demands:
            return []
        d = demands[-1]
        if d >= 1:
            return list(alphabet.ordered)
        return list(alphabet.leaves)

    depths = _postfix_depths(partial, budget)
    out: list[Token] = []
    if not depths:
        leaf_ok = budget >= 0
        unary_ok = binary_ok = False
    else:
        m = 0
        for d in reversed(depths):
            m = max(d, m) + 1
        leaf_ok = m <= budget
        m = depths[-1] + 1
        for d in reversed(depths[:-1]):
            m = max(d, m) + 1
        unary_ok = m <= budget
        binary_ok = False
        if len(depths) >= 2:
            m = max(depths[-1], depths[-2]) + 1
            for d in reversed(depths[:-2]):
                m = max(d, m) + 1
            binary_ok = m <= budget
    if leaf_ok:
        out.extend(alphabet.leaves)
    if unary_ok:
        out.extend(alphabet.unaries)
    if binary_ok:
        out.extend(alphabet.binaries)
    return out


def sample_complete(rng, notation: Notation, budget: int, alphabet: Alphabet) -> Expr:
    """Random expression: draw uniformly from the legal set until it empties."""
    partial: list[Token] = []
    while True:
        legal = legal_tokens(partial, notation, budget, alphabet)
        if not legal:
            break
        partial.append(legal[rng.randrange(len(legal))])
    return make_expr(partial, notation, budget)


# ---------------------------------------------------------------------------
# spans (array subranges standing in for subtrees)


def subexpr_end(tokens: Sequence[Token], start: int) -> int:
    """End index (exclusive) of the prefix subexpression starting at ``start``."""
    need = 1
    i = start
    while need:
        need += tokens[i].arity - 1
        i += 1
    return i


def subexpr_start(tokens: Sequence[Token], end: int) -> int:
    """Start index of the postfix subexpression ending at ``end`` (exclusive)."""
    need = 1
    i = end
    while need:
        i -= 1
        need += tokens[i].arity - 1
    return i


def span_at(tokens: Sequence[Token], index: int, notation: Notation) -> tuple[int, int]:
    """(start, end) of the complete subexpression rooted at ``index``."""
    if notation is Notation.PREFIX:
        return index, subexpr_end(tokens, index)
    return subexpr_start(tokens, index + 1), index + 1


def token_path_depths(tokens: Sequence[Token], notation: Notation) -> list[int]:
    """Distance of each token from the expression root (root = 0)."""
    n = len(tokens)
    out = [0] * n
    stack = [0]
    order = range(n) if notation is Notation.PREFIX else range(n - 1, -1, -1)
    for i in order:
        d = stack.pop()
        out[i] = d
        for _ in range(tokens[i].arity):
            stack.append(d + 1)
    return out


# ---------------------------------------------------------------------------
# depth / parse / render / convert


def depth(e: Expr) -> int:
    return e.depth


def parse(
    text: str,
    notation: Notation,
    alphabet: Alphabet,
    mode: str = "search",
    bindings: Optional[Mapping[str, float]] = None,
) -> Expr:
    """Parse whitespace-separated token spellings.

    ``search`` mode admits only the alphabet's tokens.  ``free`` mode also
    accepts the initial-condition derivative spellings, any decimal literal,
    and extra named bindings (e.g. ``y_0``) supplied by the caller.
    """
    if mode not in ("search", "free"):
        raise ValueError(f"unknown parse mode {mode!r}")
    words = text.split()
    if not words:
        raise ParseError("empty expression", 0)
    ic_by_text = {tok.text: tok for tok in IC_FAMILY}
    toks: list[Token] = []
    for i, word in enumerate(words):
        tok = alphabet.by_text.get(word)
        if tok is None and mode == "free":
            tok = ic_by_text.get(word)
            if tok is None and bindings and word in bindings:
                tok = _lit(word, bindings[word])
            if tok is None and _DECIMAL_RE.match(word):
                tok = _lit(word, float(word))
        if tok is None:
            raise ParseError(f"unknown token {word!r}", i)
        toks.append(tok)
    size = 0
    for i, tok in enumerate(toks):
        if notation is Notation.POSTFIX and tok.arity > size:
            raise ParseError(f"operand underflow at {tok.text!r}", i)
        size += 1 - tok.arity
    if not is_complete(toks, notation):
        raise ParseError("incomplete expression", len(words) - 1)
    return make_expr(toks, notation)


def _render(tokens: Sequence[Token], notation: Notation, consts) -> str:
    def fmt_leaf(tok: Token) -> str:
        if tok.kind is TokenKind.CONST and consts is not None:
            return f"{consts[tok.slot]:g}"
        return tok.text

    if notation is Notation.PREFIX:

        def rec(start: int) -> tuple[str, int]:
            tok = tokens[start]
            if tok.arity == 0:
                return fmt_leaf(tok), start + 1
            if tok.arity == 1:
                inner, nxt = rec(start + 1)
                if tok.text == "~":
                    return f"(-{inner})", nxt
                return f"{tok.text}({inner})", nxt
            left, mid = rec(start + 1)
            right, nxt = rec(mid)
            return f"({left}{tok.text}{right})", nxt

        text, _ = rec(0)
        return text

    def rec_post(end: int) -> tuple[str, int]:
        tok = tokens[end - 1]
        if tok.arity == 0:
            return fmt_leaf(tok), end - 1
        if tok.arity == 1:
            inner, nxt = rec_post(end - 1)
            if tok.text == "~":
                return f"(-{inner})", nxt
            return f"{tok.text}({inner})", nxt
        right, mid = rec_post(end - 1)
        left, nxt = rec_post(mid)
        return f"({left}{tok.text}{right})", nxt

    text, _ = rec_post(len(tokens))
    return text


def render_infix(e: Expr, consts: Optional[Sequence[float]] = None) -> str:
    """Fully parenthesized infix rendering; learnable constants print their
    fitted values when ``consts`` is given."""
    return _render(e.tokens, e.notation, consts)


def convert_notation(e: Expr, target: Notation) -> Expr:
    """Value-equivalent expression in the target notation; depth is preserved."""
    if target is e.notation:
        return e
    tokens = e.tokens
    out: list[Token] = []

    if e.notation is Notation.PREFIX:

        def rec(start: int) -> int:
            tok = tokens[start]
            if tok.arity == 0:
                out.append(tok)
                return start + 1
            if tok.arity == 1:
                nxt = rec(start + 1)
                out.append(tok)
                return nxt
            mid = rec(start + 1)
            nxt = rec(mid)
            out.append(tok)
            return nxt

        rec(0)
    else:

        def rec_post(end: int) -> int:
            tok = tokens[end - 1]
            out.append(tok)
            if tok.arity == 0:
                return end - 1
            if tok.arity == 1:
                return rec_post(end - 1)
            # emit left subtree before right to restore prefix order
            mid = subexpr_start(tokens, end - 1)
            start = rec_post(mid)
            rec_post(end - 1)
            return start

        rec_post(len(tokens))

    return Expr(target, tuple(out), e.budget)
