"""Exact counting and uniform-model probabilities for binary trees.

Everything in this module is computed in arbitrary-precision rational
arithmetic (stdlib ``fractions.Fraction``; plain ``int`` where the
value is a count), so golden values can be compared bit-exactly.  The
beta-splitting family for general beta needs Gamma ratios and lives in
:mod:`phylocomb.splitting` in floating point; only its two rational
members (beta = 0 and beta = -3/2) are recognized here.

Model families:

* ``pda``: uniform on labelled topologies, mass 1/t_n each.
* ``erm``: the labelled law with mass 2^(n-1)/n! * prod 1/(lam(v)-1).
* ``urt``: uniform-ranking law on ranked shapes, mass 2^(n-1-c)/(n-1)!.

Passing an undecorated shape asks for the pushforward of the model
under label (or rank) forgetting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from . import trees
from .trees import Tree

__all__ = [
    "Model",
    "PDA",
    "ERM",
    "URT",
    "t_count",
    "r_count",
    "catalan",
    "harmonic",
    "labellings_count",
    "rankings_count",
    "shape_probability",
    "gw_leaf_probability",
]

RationalLike = Union[int, Fraction, str]


@dataclass(frozen=True)
class Model:
    """A tree law identifier: family plus optional beta parameter."""

    family: str
    beta: Optional[RationalLike] = None

    def __post_init__(self):
        if self.family not in ("pda", "erm", "urt", "beta"):
            raise ValueError(f"unknown model family {self.family!r}")
        if self.family == "beta":
            if self.beta is None:
                raise ValueError("beta family needs a beta value")
        elif self.beta is not None:
            raise ValueError(f"{self.family} takes no parameter")

    def resolve(self) -> "Model":
        """Map the rational members of the beta family onto pda/erm."""
        if self.family != "beta":
            return self
        b = Fraction(self.beta)
        if b == 0:
            return ERM
        if b == Fraction(-3, 2):
            return PDA
        raise ValueError(
            "only beta in {0, -3/2} is exact; use phylocomb.splitting for other beta"
        )


PDA = Model("pda")
ERM = Model("erm")
URT = Model("urt")


def t_count(n: int) -> int:
    """Number of labelled topologies with n leaves: (2n-3)!!, with
    the n = 1 case set to 1 so recursions are total."""
    if n < 1:
        raise ValueError("n must be at least 1")
    out = 1
    for k in range(3, 2 * n - 2, 2):
        out *= k
    return out


def r_count(n: int) -> int:
    """Number of ranked labelled trees with n leaves: n!(n-1)!/2^(n-1)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    num = math.factorial(n) * math.factorial(n - 1)
    den = 1 << (n - 1)
    assert num % den == 0
    return num // den


def catalan(k: int) -> int:
    if k < 0:
        raise ValueError("k must be nonnegative")
    return math.comb(2 * k, k) // (k + 1)


def harmonic(n: int) -> Fraction:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return sum((Fraction(1, k) for k in range(1, n + 1)), Fraction(0))


def _split_products(t: Tree):
    lam = trees.leaf_counts(t)
    prod = 1
    for v in lam:
        prod *= v - 1
    return prod


def labellings_count(t: Tree) -> Fraction:
    """Distinct leaf labellings of a shape or ranked shape: 2^(-s) n!.

    s is the symmetric-node count, which degenerates to the cherry
    count when the input carries ranks.
    """
    n = t.n_leaves
    s = trees.symmetric_nodes(t)
    return Fraction(math.factorial(n), 1 << s)


def rankings_count(t: Tree) -> Fraction:
    """Distinct valid rankings of a shape or labelled tree:
    2^(c-s) (n-1)! / prod_v (lam(v)-1)."""
    n = t.n_leaves
    if n < 2:
        raise ValueError("rankings need at least 2 leaves")
    c = trees.cherries(t)
    s = trees.symmetric_nodes(t)
    num = math.factorial(n - 1) * 2 ** max(c - s, 0)
    den = _split_products(t) * 2 ** max(s - c, 0)
    return Fraction(num, den)


def _kind(t: Tree) -> str:
    ranked = t.n_leaves > 1 and t.is_ranked
    if t.is_labelled:
        return "ranked_labelled" if ranked else "labelled"
    if any(v.label is not None for v in t.iter_leaves()):
        raise ValueError("partial labellings are not a model domain")
    if ranked:
        return "ranked"
    if any(v.rank is not None for v in t.iter_splits()):
        raise ValueError("partial rankings are not a model domain")
    return "shape"


def shape_probability(t: Tree, model: Model) -> Fraction:
    """Exact probability of a tree under one of the uniform families.

    The accepted tree kind depends on the family: pda and erm are laws
    on labelled topologies, urt on ranked shapes.  An undecorated
    shape yields the corresponding pushforward mass; ranked labelled
    input is resolved by forgetting labels for urt.  Any other
    combination raises ValueError.
    """
    model = model.resolve()
    n = t.n_leaves
    kind = _kind(t)
    fam = model.family
    if fam == "pda":
        if kind == "labelled":
            return Fraction(1, t_count(n))
        if kind == "shape":
            s = trees.symmetric_nodes(t)
            return Fraction(2 ** (n - 1), 2 ** s * catalan(n - 1))
        raise ValueError("pda expects a labelled topology or a shape")
    if fam == "erm":
        if kind == "labelled":
            return Fraction(2 ** (n - 1), math.factorial(n) * _split_products(t))
        if kind == "shape":
            s = trees.symmetric_nodes(t)
            return Fraction(2 ** (n - 1), 2 ** s * _split_products(t))
        raise ValueError("erm expects a labelled topology or a shape")
    # urt
    if kind == "ranked_labelled":
        t = trees.forget_labels(t)
        kind = "ranked"
    if kind == "ranked":
        c = trees.cherries(t)
        return Fraction(2 ** (n - 1 - c), math.factorial(n - 1))
    if kind == "shape":
        # summing the urt mass over the rank fiber lands on the same
        # value as the erm pushforward
        s = trees.symmetric_nodes(t)
        return Fraction(2 ** (n - 1), 2 ** s * _split_products(t))
    raise ValueError("urt expects a ranked shape (labels optional) or a shape")


def gw_leaf_probability(n: int, p: RationalLike) -> Fraction:
    """Mass of {n leaves} for the binary branching tree in which each
    node begets two children with probability p: the total-offspring
    law sigma_n = 2^(n-1) t_n p^(n-1) (1-p)^n / n!."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p = Fraction(p)
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    return (
        Fraction(2 ** (n - 1) * t_count(n), math.factorial(n))
        * p ** (n - 1)
        * (1 - p) ** n
    )
