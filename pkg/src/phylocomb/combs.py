"""Combs: teeth on an interval coding compact ultrametric spaces.

A comb is a finite set of teeth (position, height) strictly inside an
interval [0, M].  Points of the interval off the teeth form an
ultrametric space under d(s, t) = twice the tallest tooth strictly
between s and t; tooth height is therefore a coalescence depth, half
the metric distance.  The maps to and from ultrametric trees preserve
the planar order of the gaps, and the round trips are inverses up to
comb isometry (tooth heights and their order; positions are
normalized to 1..k on the interval [0, k+1]).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import trees
from .generators import TimedRankedTree

__all__ = [
    "Comb",
    "comb_distance",
    "distance_matrix",
    "check_ultrametric",
    "tree_from_comb",
    "comb_from_ultrametric",
    "matrix_to_csv",
    "matrix_from_csv",
]


@dataclass(frozen=True)
class Comb:
    """Interval [0, M] with teeth at strictly increasing positions."""

    M: float
    teeth: tuple

    def __post_init__(self):
        object.__setattr__(self, "M", float(self.M))
        tt = tuple((float(x), float(h)) for x, h in self.teeth)
        object.__setattr__(self, "teeth", tt)
        if not self.M > 0:
            raise ValueError("interval length must be positive")
        for x, h in tt:
            if not 0.0 < x < self.M:
                raise ValueError("tooth positions must lie strictly inside (0, M)")
            if not h > 0:
                raise ValueError("tooth heights must be positive")
        if any(a[0] >= b[0] for a, b in zip(tt, tt[1:])):
            raise ValueError("tooth positions must be strictly increasing")

    @property
    def n_teeth(self) -> int:
        return len(self.teeth)

    def heights(self) -> tuple:
        return tuple(h for _, h in self.teeth)

    def positions(self) -> tuple:
        return tuple(x for x, _ in self.teeth)

    def gap_points(self) -> tuple:
        """One representative (midpoint) per maximal tooth-free gap."""
        edges = (0.0,) + self.positions() + (self.M,)
        return tuple((a + b) / 2.0 for a, b in zip(edges, edges[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# M={self.M!r}\n")
        w = csv.writer(buf)
        w.writerow(["position", "height"])
        for x, h in self.teeth:
            w.writerow([repr(x), repr(h)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Comb":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# M="):
            raise ValueError("expected a '# M=<value>' first line")
        M = float(lines[0][4:])
        body = [ln for ln in lines[1:] if not ln.startswith("#")]
        rows = list(csv.reader(io.StringIO("\n".join(body))))
        if not rows or rows[0] != ["position", "height"]:
            raise ValueError("expected a 'position,height' header")
        return cls(M=M, teeth=tuple((float(x), float(h)) for x, h in rows[1:] if x))


def comb_distance(c: Comb, s: float, t: float) -> float:
    """Twice the tallest tooth strictly between s and t; 0 if none.

    s and t must lie in [0, M] off the teeth (the metric lives on the
    tooth-free set).
    """
    for x in (s, t):
        if not 0.0 <= x <= c.M:
            raise ValueError("points must lie in [0, M]")
        if any(x == pos for pos, _ in c.teeth):
            raise ValueError(f"point {x} sits on a tooth")
    if s == t:
        return 0.0
    lo, hi = min(s, t), max(s, t)
    best = 0.0
    for x, h in c.teeth:
        if lo < x < hi and h > best:
            best = h
    return 2.0 * best


def distance_matrix(c: Comb) -> np.ndarray:
    """Pairwise distances of the gap representatives.

    Entry (i, j), i < j, is twice the tallest of teeth i..j-1, so the
    ultrametric triple inequality holds exactly in floating point.
    """
    h = c.heights()
    n = len(h) + 1
    out = np.zeros((n, n))
    for i in range(n):
        run = 0.0
        for j in range(i + 1, n):
            run = max(run, h[j - 1])
            out[i, j] = out[j, i] = 2.0 * run
    return out


def check_ultrametric(mat: np.ndarray) -> bool:
    """Exact test of d(i,k) <= max(d(i,j), d(j,k)) on every triple."""
    m = np.asarray(mat, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or np.any(m < 0) or np.any(np.diag(m) != 0):
        return False
    if np.any(m != m.T):
        return False
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if m[i, k] > max(m[i, j], m[j, k]):
                    return False
    return True


def tree_from_comb(c: Comb, T: float) -> TimedRankedTree:
    """Ultrametric tree of a comb: tips at height T, one per gap.

    Consecutive tips coalesce at the depth of the tooth between them,
    and every deeper pair at the tallest intermediate tooth, so the
    tallest tooth in each block splits it.  Tips are labelled 1..n in
    comb order and the planar order is kept in the tree's child order.
    Teeth at or above T are rejected (they would disconnect the comb),
    as are tied heights (no strict time order for the splits).
    """
    h = c.heights()
    if any(x >= T for x in h):
        raise ValueError("tooth height at or above the horizon")
    if len(set(h)) != len(h):
        raise ValueError("tied tooth heights admit no strict split order")
    order = sorted(range(len(h)), key=lambda i: -h[i])
    rank_of = {tooth: r + 1 for r, tooth in enumerate(order)}

    def build(lo, hi):
        # tips lo..hi (0-based), teeth lo..hi-1 between them
        if lo == hi:
            return trees.leaf(lo + 1)
        m = lo
        for t in range(lo + 1, hi):
            if h[t] > h[m]:
                m = t
        return trees.split(build(lo, m), build(m + 1, hi), rank=rank_of[m])

    tree = build(0, len(h))
    times = tuple(T - h[i] for i in order)
    return TimedRankedTree(tree=tree, times=times, horizon=float(T))


def comb_from_ultrametric(tt: TimedRankedTree) -> Comb:
    """Comb of an ultrametric tree, inverse of :func:`tree_from_comb`
    up to isometry: tooth i is the coalescence depth of planar-
    consecutive tips i and i+1, placed at position i on [0, n].
    """
    tree, times, T = tt.tree, tt.times, tt.horizon
    heights = []

    def walk(node):
        if node.is_leaf:
            return
        if node.rank is None:
            raise ValueError("splits must be ranked")
        walk(node.children[0])
        heights.append(T - times[node.rank - 1])
        walk(node.children[1])

    walk(tree)
    n = len(heights) + 1
    return Comb(M=float(n), teeth=tuple((float(i + 1), h) for i, h in enumerate(heights)))


def matrix_to_csv(mat: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    for row in np.asarray(mat, dtype=float):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return np.array([[float(x) for x in r] for r in rows])
