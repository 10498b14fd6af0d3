"""Chronological trees and their jumping contour paths.

A chronological tree records every individual of a branching
population by a word of positive integers (root = empty word) together
with its birth and death times.  The contour transform unrolls the
tree into a piecewise-linear path that falls at slope -1 and jumps up
by one lifetime at each birth; the transform is a bijection and both
directions here are exact inverses on the stored breakpoints.

Conventions.  Daughters of an individual are indexed by decreasing
birth time (daughter 1 is the last born), which is the orientation the
contour's depth-first descent discovers them in.  Sibling birth-time
ties are rejected: the transform needs distinct birth times to order
daughters, and they occur with probability zero in the simulations
this module targets.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._backend.pure import exponential

__all__ = [
    "ChronologicalTree",
    "ContourPath",
    "LifespanModel",
    "exponential_lifespan",
    "fixed_lifespan",
    "uniform_lifespan",
    "sample_splitting_tree",
    "sphere_size_samples",
    "contour",
    "tree_from_contour",
    "reduced_comb",
    "total_length",
]

# slope and jump consistency checks on hand-built paths
_PATH_TOL = 1e-9


class ChronologicalTree:
    """Finite population history: word -> (birth, death).

    Validates on construction: prefix-closed words with child index
    sets {1..K}, root born at 0, every child born strictly after its
    mother and no later than her death, positive lifespans, distinct
    sibling birth times, and daughter indices ordered by decreasing
    birth time.
    """

    __slots__ = ("_v",)

    def __init__(self, vertices: dict):
        v = {tuple(w): (float(a), float(o)) for w, (a, o) in vertices.items()}
        if () not in v:
            raise ValueError("missing root (empty word)")
        if v[()][0] != 0.0:
            raise ValueError("root must be born at time 0")
        kids = {}
        for w, (a, o) in v.items():
            if not o > a:
                raise ValueError(f"lifespan of {w} is not positive")
            if w:
                if any(i < 1 for i in w):
                    raise ValueError(f"word {w} has nonpositive letters")
                kids.setdefault(w[:-1], []).append(w[-1])
        for w, idx in kids.items():
            if w not in v:
                raise ValueError(f"word set not prefix-closed at {w}")
            idx.sort()
            if idx != list(range(1, len(idx) + 1)):
                raise ValueError(f"child indices of {w} are not 1..K")
            births = [v[w + (j,)][0] for j in idx]
            ma, mo = v[w]
            for j, b in zip(idx, births):
                if not ma < b <= mo:
                    raise ValueError(
                        f"child {w + (j,)} born outside its mother's lifespan"
                    )
            if len(set(births)) != len(births):
                raise ValueError(f"children of {w} share a birth time")
            if births != sorted(births, reverse=True):
                raise ValueError(
                    f"children of {w} are not indexed by decreasing birth"
                )
        self._v = dict(sorted(v.items()))

    def __len__(self):
        return len(self._v)

    def __eq__(self, other):
        return isinstance(other, ChronologicalTree) and self._v == other._v

    def __hash__(self):
        return hash(tuple(self._v.items()))

    def __repr__(self):
        return f"ChronologicalTree({len(self._v)} individuals)"

    def words(self):
        return list(self._v)

    def alpha(self, w) -> float:
        return self._v[tuple(w)][0]

    def omega(self, w) -> float:
        return self._v[tuple(w)][1]

    def zeta(self, w) -> float:
        a, o = self._v[tuple(w)]
        return o - a

    def children(self, w) -> list:
        w = tuple(w)
        out = []
        j = 1
        while w + (j,) in self._v:
            out.append(w + (j,))
            j += 1
        return out

    def sphere(self, T: float) -> list:
        """Individuals alive at height T (born before, dead no earlier),
        in contour visit order (preorder, daughter 1 first)."""
        out = []

        def visit(w):
            a, o = self._v[w]
            if a < T <= o:
                out.append(w)
            for c in self.children(w):
                visit(c)

        visit(())
        return out

    def divergence_time(self, u, v) -> float:
        """Height at which the ancestral lines of u and v part ways."""
        u, v = tuple(u), tuple(v)
        if u == v:
            raise ValueError("need two distinct individuals")
        k = 0
        while k < len(u) and k < len(v) and u[k] == v[k]:
            k += 1
        bu = self._v[u[: k + 1]][0] if len(u) > k else math.inf
        bv = self._v[v[: k + 1]][0] if len(v) > k else math.inf
        return min(bu, bv)

    def to_json(self) -> str:
        recs = [
            {"word": list(w), "alpha": a, "omega": o}
            for w, (a, o) in self._v.items()
        ]
        return json.dumps(recs, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ChronologicalTree":
        recs = json.loads(text)
        return cls({tuple(r["word"]): (r["alpha"], r["omega"]) for r in recs})


def total_length(tree: ChronologicalTree) -> float:
    """Sum of all (clipped) lifespans; equals the contour's domain."""
    return sum(tree.zeta(w) for w in tree.words())


@dataclass(frozen=True)
class ContourPath:
    """Piecewise-linear path: slope -1 segments and upward jumps.

    ``points`` are the breakpoints (t, value); a jump is two
    consecutive points at the same t with increasing value, and the
    path is right-continuous there.  Starts at (0, start value), ends
    at value 0, and the total drop equals the domain length.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValueError("a path needs at least two breakpoints")
        if pts[0][0] != 0.0:
            raise ValueError("path must start at t = 0")
        if pts[-1][1] != 0.0:
            raise ValueError("path must end at value 0")
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if v0 < 0.0 or v1 < 0.0:
                raise ValueError("path values must be nonnegative")
            if t1 < t0:
                raise ValueError("breakpoint times must be nondecreasing")
            if t1 == t0:
                if v1 <= v0:
                    raise ValueError("only upward jumps are allowed")
            else:
                drop = v0 - v1
                if abs(drop - (t1 - t0)) > _PATH_TOL * max(1.0, t1, v0):
                    raise ValueError("segments must descend at slope -1")

    @property
    def length(self) -> float:
        return self.points[-1][0]

    @property
    def start(self) -> float:
        return self.points[0][1]

    def value(self, t: float) -> float:
        """Right-continuous evaluation at t in [0, length]."""
        if not 0.0 <= t <= self.length:
            raise ValueError("t outside the path domain")
        lo, hi = 0, len(self.points) - 1
        while lo < hi:  # last breakpoint with time <= t
            mid = (lo + hi + 1) // 2
            if self.points[mid][0] <= t:
                lo = mid
            else:
                hi = mid - 1
        t0, v0 = self.points[lo]
        return v0 - (t - t0)

    def jumps(self) -> list:
        """(time, size) of every upward jump."""
        out = []
        for (t0, v0), (t1, v1) in zip(self.points, self.points[1:]):
            if t1 == t0:
                out.append((t0, v1 - v0))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t", "value"])
        for t, v in self.points:
            w.writerow([repr(t), repr(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ContourPath":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["t", "value"]:
            raise ValueError("expected a 't,value' header")
        return cls(tuple((float(t), float(v)) for t, v in rows[1:] if t))


@dataclass(frozen=True)
class LifespanModel:
    """Birth rate plus lifetime law for a splitting-tree population.

    ``sample_lifetime`` draws one lifetime; ``survival`` is its upper
    tail P(lifetime > t).  ``density`` (pdf) and ``death_rate`` (age
    hazard) are optional extras some downstream fits use.
    """

    b: float
    sample_lifetime: Callable
    survival: Callable
    density: Optional[Callable] = None
    death_rate: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("birth rate must be positive")
        if abs(self.survival(0.0) - 1.0) > 1e-12:
            raise ValueError("survival must start at 1")


def exponential_lifespan(b: float, d: float) -> LifespanModel:
    if not d > 0:
        raise ValueError("death rate must be positive")
    return LifespanModel(
        b=b,
        sample_lifetime=lambda rng: exponential(rng, d),
        survival=lambda t: math.exp(-d * t),
        density=lambda t: d * math.exp(-d * t),
        death_rate=lambda a: d,
        name=f"exponential(d={d})",
    )


def fixed_lifespan(b: float, x: float) -> LifespanModel:
    if not x > 0:
        raise ValueError("lifetime must be positive")
    return LifespanModel(
        b=b,
        sample_lifetime=lambda rng: x,
        survival=lambda t: 1.0 if t < x else 0.0,
        name=f"fixed({x})",
    )


def uniform_lifespan(b: float, scale: float = 1.0) -> LifespanModel:
    if not scale > 0:
        raise ValueError("scale must be positive")
    return LifespanModel(
        b=b,
        sample_lifetime=lambda rng: scale * rng.random(),
        survival=lambda t: min(1.0, max(0.0, 1.0 - t / scale)),
        density=lambda t: 1.0 / scale if 0.0 <= t < scale else 0.0,
        name=f"uniform(0,{scale})",
    )


def sample_splitting_tree(
    model: LifespanModel, T: float, rng, cap: int = 10**6
) -> Optional[ChronologicalTree]:
    """Grow a splitting tree and truncate it at height T.

    Every individual lives a lifetime drawn from the model and gives
    birth at rate b throughout it; births at or past T are discarded
    and deaths are clipped to T, so the result is always finite for
    finite T.  Individuals are processed depth first, earliest-born
    daughter first; per individual: one lifetime draw, then one
    exponential waiting-time draw per birth plus the final draw that
    overshoots.  Returns None once more than ``cap`` individuals have
    been created.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    if cap < 1:
        raise ValueError("cap must be at least 1")
    vertices = {}
    count = 0
    # stack entries: (word, birth time); earliest-born daughter on top
    stack = [((), 0.0)]
    while stack:
        w, a = stack.pop()
        count += 1
        if count > cap:
            return None
        zeta = model.sample_lifetime(rng)
        if not zeta > 0:
            raise ValueError("lifetime sampler produced a nonpositive value")
        end = min(a + zeta, T)
        vertices[w] = (a, end)
        births = []
        s = a
        while True:
            s += exponential(rng, model.b)
            if s >= a + zeta or s >= T:
                break
            births.append(s)
        K = len(births)
        # daughter index K-k: births ascend, indices descend with birth
        for k in range(K - 1, -1, -1):
            stack.append((w + (K - k,), births[k]))
    return ChronologicalTree(vertices)


def sphere_size_samples(
    model: LifespanModel, T: float, reps: int, rng, cap: int = 10**6
) -> np.ndarray:
    """Population sizes at height T of ``reps`` independent splitting
    trees (0 = extinct before T, -1 = more than ``cap`` individuals).

    Same draw order as :func:`sample_splitting_tree`, without building
    the trees.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        alive = 0
        count = 0
        stack = [0.0]
        while stack:
            a = stack.pop()
            count += 1
            if count > cap:
                alive = -1
                break
            zeta = model.sample_lifetime(rng)
            if a + zeta >= T:
                alive += 1
            births = []
            s = a
            while True:
                s += exponential(rng, model.b)
                if s >= a + zeta or s >= T:
                    break
                births.append(s)
            stack.extend(reversed(births))
        out[r] = alive
    return out


def contour(tree: ChronologicalTree) -> ContourPath:
    """Jumping contour of a chronological tree.

    Depth-first exploration, latest-born daughter first: start at the
    root's death level, descend at slope -1, and on reaching a
    daughter's birth level jump up to her death level and explore her
    subtree before resuming.  The walk ends at 0 after total time
    equal to the tree's length measure.
    """
    pts = [(0.0, tree.omega(()))]
    t = 0.0

    def explore(w):
        nonlocal t
        cur = tree.omega(w)
        for c in tree.children(w):
            a = tree.alpha(c)
            if cur > a:
                t += cur - a
                pts.append((t, a))
            pts.append((t, tree.omega(c)))
            explore(c)
            cur = a
        a = tree.alpha(w)
        if cur > a:
            t += cur - a
            pts.append((t, a))

    explore(())
    # a finished daughter's exit level is collinear with the mother's
    # continued descent; true breakpoints are the jumps and the ends
    kept = [pts[0]]
    for k in range(1, len(pts) - 1):
        if pts[k - 1][0] < pts[k][0] < pts[k + 1][0]:
            continue
        kept.append(pts[k])
    kept.append(pts[-1])
    return ContourPath(tuple(kept))


def tree_from_contour(path: ContourPath) -> ChronologicalTree:
    """Rebuild the chronological tree a contour path explores.

    Exact inverse of :func:`contour`: birth and death levels are read
    off the breakpoints unchanged, so the round trip is breakpoint-
    for-breakpoint and time-for-time exact.
    """
    root_omega = path.start
    # open individuals: [word, alpha, omega, n_children_so_far]
    stack = [[(), 0.0, root_omega, 0]]
    vertices = {}
    for (t0, v0), (t1, v1) in zip(path.points, path.points[1:]):
        if t1 > t0:
            continue
        a, w = v0, v1  # jump: a new daughter born at a, dying at w
        while stack and stack[-1][1] >= a:
            word, al, om, _ = stack.pop()
            vertices[word] = (al, om)
        if not stack:
            raise ValueError("jump below the root's birth level")
        stack[-1][3] += 1
        stack.append([stack[-1][0] + (stack[-1][3],), a, w, 0])
    while stack:
        word, al, om, _ = stack.pop()
        vertices[word] = (al, om)
    return ChronologicalTree(vertices)


def reduced_comb(path: ContourPath, T: float):
    """Comb of the tree's height-T sphere, read off the contour.

    The path must stay at or below T; each visit of level T is one
    individual alive at T, and the tooth between consecutive visits is
    T minus the path's infimum in between.  Returns a
    :class:`phylocomb.combs.Comb` on [0, N] with teeth at 1..N-1, or
    None when the path never reaches T (empty sphere).
    """
    from .combs import Comb

    if not T > 0:
        raise ValueError("horizon must be positive")
    visits = 0
    mins = []
    low = math.inf
    for t, v in path.points:
        if v > T:
            raise ValueError("path exceeds the horizon")
        if v == T:
            if visits:
                mins.append(low)
            visits += 1
            low = v
        else:
            low = min(low, v)
    if visits == 0:
        return None
    teeth = tuple((float(i + 1), T - m) for i, m in enumerate(mins))
    return Comb(M=float(visits), teeth=teeth)
