import random

import pytest

from padesr.expr import (
    BINARY_TOKENS,
    Alphabet,
    Notation,
    UNARY_TOKENS,
    VAR_X,
    VAR_Y,
)
from padesr.pde import build_case, case_alphabet


@pytest.fixture(scope="session")
def case1():
    return build_case("case1", (10, 10, 10))


@pytest.fixture(scope="session")
def case2():
    return build_case("case2", (10, 10, 10))


@pytest.fixture(scope="session")
def alpha1(case1):
    case, _ = case1
    return case_alphabet(case, "vars+const")


@pytest.fixture(scope="session")
def alpha1_opt(case1):
    case, _ = case1
    return case_alphabet(case, "vars+const+opt")


@pytest.fixture()
def rng():
    return random.Random(20240817)


@pytest.fixture(scope="session")
def tiny_alphabet():
    """Two leaves, one unary, one binary: small enough to enumerate exhaustively."""
    return Alphabet(
        variables=(VAR_X, VAR_Y),
        literals=(),
        include_learnable=False,
        unaries=(UNARY_TOKENS["sin"],),
        binaries=(BINARY_TOKENS["+"],),
    )


def iter_notations():
    return (Notation.PREFIX, Notation.POSTFIX)
