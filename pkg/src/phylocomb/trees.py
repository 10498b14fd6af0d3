"""Rooted binary trees with optional leaf labels and split ranks.

A tree here is a finite rooted binary topology without edge lengths.
The root is a degree-1 stem sitting above the first split; it is never
stored explicitly, so a tree with n leaves has exactly n - 1 split
nodes and every statistic that runs "over internal nodes" sees those
n - 1 splits.

Trees are stored in plane form (children are an ordered pair) but all
equality, hashing and counting is up to swapping children at any split.
:func:`canonical_shape` picks a deterministic representative of that
equivalence class by sorting children on a structural key; two trees
are equal exactly when their canonical forms are identical.

Decorations are optional and independent of each other:

* leaf labels, a bijection from the leaves to 1..n ("labelled" trees);
* split ranks, a bijection from the splits to 1..n-1 that increases
  along every root-to-leaf path ("ranked" trees, rank 1 at the basal
  split).

Serialization: a small Newick dialect (integer leaf labels, optional
``#k`` rank labels on internal nodes, mandatory semicolon) and laminar
families of integer sets ("hierarchies").
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Iterator
from typing import Optional

__all__ = [
    "Tree",
    "leaf",
    "split",
    "cherry",
    "caterpillar",
    "canonical_shape",
    "cherries",
    "symmetric_nodes",
    "leaf_counts",
    "forget_labels",
    "forget_ranks",
    "drop_leaf",
    "relabel",
    "is_valid_ranking",
    "enumerate_trees",
    "iter_trees",
    "ENUMERATION_BOUNDS",
    "canonical_code",
    "from_hierarchy",
    "to_hierarchy",
    "to_newick",
    "from_newick",
    "NewickError",
]


class Tree:
    """An immutable plane binary tree node.

    Do not mutate instances after construction; every operation in this
    module returns new trees.  Use :func:`leaf` and :func:`split` (or
    the class methods of the same names) to build instances.
    """

    __slots__ = ("children", "label", "rank", "_key", "_nleaves")

    def __init__(self, children=(), label=None, rank=None):
        if children:
            if len(children) != 2:
                raise ValueError("split nodes take exactly two children")
            if label is not None:
                raise ValueError("internal nodes cannot carry leaf labels")
            a, b = children
            if not (isinstance(a, Tree) and isinstance(b, Tree)):
                raise TypeError("children must be Tree instances")
            self.children = (a, b)
            self._nleaves = a._nleaves + b._nleaves
        else:
            if rank is not None:
                raise ValueError("leaves cannot carry ranks")
            if label is not None and (not isinstance(label, int) or label < 1):
                raise ValueError("leaf labels must be positive integers")
            self.children = ()
            self._nleaves = 1
        self.label = label
        self.rank = rank
        self._key = None

    @staticmethod
    def leaf(label=None) -> "Tree":
        return Tree((), label=label)

    @staticmethod
    def split(left: "Tree", right: "Tree", rank=None) -> "Tree":
        return Tree((left, right), rank=rank)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def n_leaves(self) -> int:
        return self._nleaves

    def key(self):
        """Canonical structural key; equal trees have equal keys.

        Leaves map to ``(1, label)`` and splits to
        ``(n, rank, key(a), key(b))`` with the child keys sorted, where
        a missing decoration is encoded as 0.  Keys are comparable
        tuples of ints, so sorting children on them is well defined.
        """
        k = self._key
        if k is None:
            if self.is_leaf:
                k = (1, self.label or 0)
            else:
                a = self.children[0].key()
                b = self.children[1].key()
                if b < a:
                    a, b = b, a
                k = (self._nleaves, self.rank or 0, a, b)
            self._key = k
        return k

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Tree({to_newick(self, auto_label=False)!r})"

    def iter_splits(self) -> Iterator["Tree"]:
        """Yield every split node in preorder."""
        if not self.is_leaf:
            yield self
            yield from self.children[0].iter_splits()
            yield from self.children[1].iter_splits()

    def iter_leaves(self) -> Iterator["Tree"]:
        if self.is_leaf:
            yield self
        else:
            yield from self.children[0].iter_leaves()
            yield from self.children[1].iter_leaves()

    def labels(self) -> tuple:
        """Sorted tuple of leaf labels (Nones excluded)."""
        return tuple(sorted(v.label for v in self.iter_leaves() if v.label is not None))

    @property
    def is_labelled(self) -> bool:
        lb = self.labels()
        return len(lb) == self._nleaves and lb == tuple(range(1, self._nleaves + 1))

    @property
    def is_ranked(self) -> bool:
        if self._nleaves == 1:
            return True
        ranks = sorted(v.rank for v in self.iter_splits() if v.rank is not None)
        return ranks == list(range(1, self._nleaves))

    @property
    def has_decorations(self) -> bool:
        return any(v.label is not None for v in self.iter_leaves()) or any(
            v.rank is not None for v in self.iter_splits()
        )


leaf = Tree.leaf
split = Tree.split


def cherry(a: int = None, b: int = None, rank=None) -> Tree:
    return split(leaf(a), leaf(b), rank=rank)


def caterpillar(n: int, labelled: bool = False, ranked: bool = False) -> Tree:
    """The comb shape: every split has at least one leaf child.

    With ``labelled``, leaves are numbered 1..n from the deepest cherry
    outward; with ``ranked``, ranks run 1..n-1 from the basal split
    down, which is the only valid ranking of this shape.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    t = leaf(1 if labelled else None)
    for k in range(2, n + 1):
        t = split(t, leaf(k if labelled else None),
                  rank=(n - k + 1) if ranked and n >= 2 else None)
    return t


def canonical_shape(t: Tree) -> Tree:
    """Canonical representative of t up to child swaps.

    Idempotent; preserves labels and ranks.  Two trees are equal (as
    unoriented decorated trees) iff their canonical forms are
    structurally identical, plane order included.
    """
    if t.is_leaf:
        return t
    a = canonical_shape(t.children[0])
    b = canonical_shape(t.children[1])
    if b.key() < a.key():
        a, b = b, a
    out = split(a, b, rank=t.rank)
    return out


def cherries(t: Tree) -> int:
    """Number of splits whose two children are both leaves."""
    return sum(1 for v in t.iter_splits()
               if v.children[0].is_leaf and v.children[1].is_leaf)


def symmetric_nodes(t: Tree) -> int:
    """Number of splits whose two child subtrees are identical.

    Only pure shapes can have symmetric non-cherry nodes; on labelled
    or ranked input the child subtrees always differ above the cherry
    level, so the count is taken to be the number of cherries.
    """
    if t.has_decorations:
        return cherries(t)
    return sum(1 for v in t.iter_splits()
               if v.children[0].key() == v.children[1].key())


def leaf_counts(t: Tree) -> tuple:
    """Subtended leaf counts of the splits, as a descending tuple.

    The root split contributes n, and each split's count is the sum of
    its children's counts.  Returned sorted so that plane order does
    not leak into downstream products.
    """
    return tuple(sorted((v.n_leaves for v in t.iter_splits()), reverse=True))


def _strip(t: Tree, labels: bool, ranks: bool) -> Tree:
    if t.is_leaf:
        return leaf(None if labels else t.label)
    a = _strip(t.children[0], labels, ranks)
    b = _strip(t.children[1], labels, ranks)
    return split(a, b, rank=None if ranks else t.rank)


def forget_labels(t: Tree) -> Tree:
    """Drop leaf labels; returns the canonical form of the result."""
    return canonical_shape(_strip(t, labels=True, ranks=False))


def forget_ranks(t: Tree) -> Tree:
    """Drop split ranks; returns the canonical form of the result."""
    return canonical_shape(_strip(t, labels=False, ranks=True))


def relabel(t: Tree, mapping: dict) -> Tree:
    """Apply a label mapping to the leaves (missing keys pass through)."""
    if t.is_leaf:
        return leaf(mapping.get(t.label, t.label))
    return split(relabel(t.children[0], mapping), relabel(t.children[1], mapping),
                 rank=t.rank)


def is_valid_ranking(t: Tree) -> bool:
    """Check ranks are 1..n-1 and increase from every split to its children."""
    if not t.is_ranked:
        return False

    def ok(v):
        if v.is_leaf:
            return True
        for c in v.children:
            if not c.is_leaf and c.rank <= v.rank:
                return False
        return all(ok(c) for c in v.children)

    return t.is_leaf or ok(t)


def drop_leaf(t: Tree, label: int) -> Tree:
    """Remove the leaf carrying ``label`` and suppress its parent split.

    Remaining labels are untouched, so dropping the largest label of a
    labelled tree keeps the 1..n-1 labelling invariant.  If the input
    is ranked, the surviving ranks are compacted to 1..n-2 preserving
    their order.
    """
    if t.n_leaves < 2:
        raise ValueError("cannot drop a leaf from a single-leaf tree")

    found = [False]

    def rec(v):
        if v.is_leaf:
            if v.label == label:
                found[0] = True
                return None
            return v
        a = rec(v.children[0])
        b = rec(v.children[1])
        if a is None:
            return b
        if b is None:
            return a
        return split(a, b, rank=v.rank)

    out = rec(t)
    if not found[0]:
        raise ValueError(f"no leaf labelled {label}")
    ranks = sorted(v.rank for v in out.iter_splits() if v.rank is not None)
    if ranks:
        squash = {r: i + 1 for i, r in enumerate(ranks)}

        def compact(v):
            if v.is_leaf:
                return v
            return split(compact(v.children[0]), compact(v.children[1]),
                         rank=squash.get(v.rank))

        out = compact(out)
    return canonical_shape(out)


# Enumeration.  Defaults keep the exhaustive oracles below one minute;
# pass limit=... to go past them knowingly.
ENUMERATION_BOUNDS = {
    "shapes": 16,
    "labelled": 9,
    "ranked": 9,
    "ranked_labelled": 8,
}


def _iter_shapes(n: int):
    # Wedderburn recursion with canonical dedupe at each size.
    memo = _iter_shapes.memo
    if n in memo:
        return memo[n]
    if n == 1:
        out = [leaf()]
    else:
        seen = {}
        for k in range(1, n // 2 + 1):
            for a in _iter_shapes(k):
                for b in _iter_shapes(n - k):
                    t = canonical_shape(split(a, b))
                    seen[t.key()] = t
        out = list(seen.values())
    memo[n] = out
    return out


_iter_shapes.memo = {}


def _iter_labelled(labels: tuple):
    # Unordered root split with min(labels) pinned to the first block.
    if len(labels) == 1:
        yield leaf(labels[0])
        return
    first, rest = labels[0], labels[1:]
    for r in range(len(rest) + 1):
        for pick in itertools.combinations(rest, r):
            block_a = (first,) + pick
            block_b = tuple(x for x in rest if x not in pick)
            if not block_b:
                continue
            for a in _iter_labelled(block_a):
                for b in _iter_labelled(block_b):
                    yield split(a, b)


def _iter_ranked(n: int):
    # Grow by replacing a leaf with the next-ranked cherry; dedupe per level.
    level = {leaf().key(): leaf()}
    for new_rank in range(1, n):
        nxt = {}
        for t in level.values():
            for i in range(t.n_leaves):
                counter = [0]

                def rep(v):
                    if v.is_leaf:
                        if counter[0] == i:
                            counter[0] += 1
                            return cherry(rank=new_rank)
                        counter[0] += 1
                        return v
                    return split(rep(v.children[0]), rep(v.children[1]), rank=v.rank)

                u = canonical_shape(rep(t))
                nxt[u.key()] = u
        level = nxt
    return list(level.values())


def _iter_ranked_labelled(n: int):
    # Coalescence sequences: merge two blocks at a time, the j-th merge
    # getting rank n - j, so the basal split ends up with rank 1.
    def rec(blocks):
        m = len(blocks)
        if m == 1:
            yield blocks[0]
            return
        rank = m - 1
        for i in range(m):
            for j in range(i + 1, m):
                merged = split(blocks[i], blocks[j], rank=rank)
                rest = [b for idx, b in enumerate(blocks) if idx not in (i, j)]
                yield from rec(rest + [merged])

    yield from rec([leaf(i) for i in range(1, n + 1)])


def iter_trees(n: int, kind: str = "shapes", limit: Optional[int] = None) -> Iterator[Tree]:
    """Stream the trees of :func:`enumerate_trees` without materializing."""
    if kind not in ENUMERATION_BOUNDS:
        raise ValueError(f"unknown kind {kind!r}")
    bound = ENUMERATION_BOUNDS[kind] if limit is None else limit
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > bound:
        raise ValueError(f"n={n} exceeds the enumeration bound {bound} for {kind!r}")
    if kind == "shapes":
        yield from _iter_shapes(n)
    elif kind == "labelled":
        yield from _iter_labelled(tuple(range(1, n + 1)))
    elif kind == "ranked":
        yield from _iter_ranked(n)
    else:
        yield from _iter_ranked_labelled(n)


def enumerate_trees(n: int, kind: str = "shapes", limit: Optional[int] = None) -> list:
    """Exhaustive duplicate-free list of trees with n leaves.

    ``kind`` is one of ``shapes``, ``labelled``, ``ranked`` (ranked
    shapes), ``ranked_labelled``.  Raises ValueError above the per-kind
    default bound unless ``limit`` overrides it.
    """
    return list(iter_trees(n, kind, limit))


def canonical_code(t: Tree) -> int:
    """Pack the canonical form into an integer, bijectively for n <= 8.

    Bit layout, most significant first: a leaf is ``0`` (plus 3 bits
    ``label-1`` when labelled), a split is ``1`` (plus 3 bits
    ``rank-1`` when ranked) followed by the codes of its children,
    ordered by (bit length, value).  A ranked labelled 8-leaf tree
    needs 60 bits, so codes fit in a uint64 for every kind at n <= 8.
    Decoration must be uniform: either all leaves are labelled or
    none, same for ranks.
    """
    labelled = t.is_labelled
    ranked = t.is_ranked and t.n_leaves > 1
    if not labelled and any(v.label is not None for v in t.iter_leaves()):
        raise ValueError("partial labellings cannot be encoded")
    if not ranked and any(v.rank is not None for v in t.iter_splits()):
        raise ValueError("partial rankings cannot be encoded")

    def rec(v):
        if v.is_leaf:
            if labelled:
                return v.label - 1, 4
            return 0, 1
        abits, alen = rec(v.children[0])
        bbits, blen = rec(v.children[1])
        if (blen, bbits) < (alen, abits):
            abits, alen, bbits, blen = bbits, blen, abits, alen
        if ranked:
            head, hlen = 8 | (v.rank - 1), 4
        else:
            head, hlen = 1, 1
        bits = ((head << alen) | abits) << blen | bbits
        return bits, hlen + alen + blen

    bits, nbits = rec(t)
    if nbits > 64:
        raise ValueError("tree too large for a 64-bit code")
    return bits


# Hierarchies: laminar families of integer sets.

def to_hierarchy(t: Tree) -> list:
    """All subtended label sets, singletons included, sorted."""
    if not t.is_labelled:
        raise ValueError("hierarchies need labelled trees")
    out = []

    def rec(v):
        if v.is_leaf:
            s = (v.label,)
        else:
            s = tuple(sorted(rec(v.children[0]) + rec(v.children[1])))
        out.append(s)
        return s

    rec(t)
    return sorted(set(out), key=lambda s: (len(s), s))


def from_hierarchy(sets: Iterable[Iterable[int]]) -> Tree:
    """Build the labelled tree whose clades are the given laminar family.

    The leaf set is the union of all members; the full set itself may
    be omitted.  Every non-singleton member must decompose into exactly
    two maximal sub-members (binary), all singletons must be present,
    and members must be pairwise nested or disjoint.
    """
    fam = {tuple(sorted(set(s))) for s in sets}
    if not fam or any(not s for s in fam):
        raise ValueError("hierarchy members must be nonempty")
    universe = tuple(sorted({x for s in fam for x in s}))
    if any(not isinstance(x, int) or x < 1 for x in universe):
        raise ValueError("hierarchy elements must be positive integers")
    for x in universe:
        if (x,) not in fam:
            raise ValueError(f"missing singleton {{{x}}}")
    fam.add(universe)
    members = sorted(fam, key=len)
    for i, a in enumerate(members):
        sa = set(a)
        for b in members[i + 1:]:
            sb = set(b)
            inter = sa & sb
            if inter and inter != sa and inter != sb:
                raise ValueError(f"not laminar: {a} vs {b}")

    children = {s: [] for s in fam}
    # parent of s is the smallest member strictly containing it
    for s in fam:
        if s == universe:
            continue
        best = None
        for cand in fam:
            if len(cand) > len(s) and set(s) < set(cand):
                if best is None or len(cand) < len(best):
                    best = cand
        children[best].append(s)

    def build(s):
        if len(s) == 1:
            return leaf(s[0])
        kids = children[s]
        if len(kids) != 2 or set(kids[0]) | set(kids[1]) != set(s):
            raise ValueError(f"member {s} does not split into two parts")
        return split(build(kids[0]), build(kids[1]))

    return canonical_shape(build(universe))


# Newick subset: integer leaf labels, "#k" internal rank labels, ";".

class NewickError(ValueError):
    pass


def to_newick(t: Tree, auto_label: bool = True) -> str:
    """Serialize.  Unlabelled leaves get plane-order numbers 1.. when
    ``auto_label`` is set, otherwise empty names."""
    counter = itertools.count(1)

    def rec(v):
        if v.is_leaf:
            if v.label is not None:
                return str(v.label)
            return str(next(counter)) if auto_label else ""
        inner = f"({rec(v.children[0])},{rec(v.children[1])})"
        if v.rank is not None:
            inner += f"#{v.rank}"
        return inner

    return rec(t) + ";"


def from_newick(text: str) -> Tree:
    """Parse the Newick subset; raises NewickError on malformed input."""
    s = "".join(text.split())
    if not s.endswith(";"):
        raise NewickError("missing terminating semicolon")
    s = s[:-1]
    pos = [0]

    def peek():
        return s[pos[0]] if pos[0] < len(s) else ""

    def take_int():
        start = pos[0]
        while pos[0] < len(s) and s[pos[0]].isdigit():
            pos[0] += 1
        if pos[0] == start:
            raise NewickError(f"expected an integer at position {start}")
        return int(s[start:pos[0]])

    def node():
        if peek() == "(":
            pos[0] += 1
            a = node()
            if peek() != ",":
                raise NewickError(f"expected ',' at position {pos[0]}")
            pos[0] += 1
            b = node()
            if peek() != ")":
                raise NewickError(f"expected ')' at position {pos[0]}")
            pos[0] += 1
            rank = None
            if peek() == "#":
                pos[0] += 1
                rank = take_int()
            return split(a, b, rank=rank)
        return leaf(take_int())

    out = node()
    if pos[0] != len(s):
        raise NewickError(f"trailing characters at position {pos[0]}")
    return out
