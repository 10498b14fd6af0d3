"""Forward-in-time tree simulators: Yule, Kingman, Galton-Watson.

All samplers take an explicit ``numpy.random.Generator`` and consume
scalar uniforms in a fixed, documented order that matches the batch
kernels in ``phylocomb._backend`` draw for draw, so a seeded run
produces the same tree whether it goes through the object samplers
here or through the classification kernels.

Laws (proved elsewhere, certified by the chi-square suites in the
tests): the ranked shape of a Yule tree stopped at n tips is uniform
over rankings whatever the birth rate; the Kingman coalescent tree is
uniform on ranked labelled trees and its unlabelled law is Yule's;
the binary Galton-Watson tree conditioned on n leaves is the uniform
labelled law pushed to shapes, independently of its parameter p.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import trees
from ._backend.pure import exponential, randint
from .trees import Tree

__all__ = [
    "TimedRankedTree",
    "sample_yule",
    "sample_kingman",
    "sample_gw_binary",
    "sample_gw_conditioned",
]


@dataclass(frozen=True)
class TimedRankedTree:
    """A ranked tree with the split times that produced the ranks.

    ``times[r-1]`` is the forward time of the split carrying rank r,
    strictly increasing in r; tips live at ``horizon`` (>= the last
    split time).  The root stem starts at time 0, so a basal split at
    time t leaves a stem of length t.
    """

    tree: Tree
    times: tuple
    horizon: float

    def __post_init__(self):
        if any(t < 0 for t in self.times):
            raise ValueError("split times must be nonnegative")
        if any(a >= b for a, b in zip(self.times, self.times[1:])):
            raise ValueError("split times must increase with rank")
        if self.times and self.horizon < self.times[-1]:
            raise ValueError("horizon precedes the last split")

    @property
    def n_tips(self) -> int:
        return self.tree.n_leaves

    def ranked_shape(self) -> Tree:
        return trees.forget_labels(self.tree)


def sample_yule(n: int, b: float, rng) -> TimedRankedTree:
    """Pure-birth tree from one particle, stopped on reaching n tips.

    Draw order, for k = 1..n-1 live lineages: one uniform for the
    Exp(b k) waiting time, one uniform for the splitting lineage; the
    k-th split gets rank k.  Matches the ``yule_ranked_codes`` kernel.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if b <= 0:
        raise ValueError("birth rate must be positive")
    size = 2 * n - 1
    first = [-1] * size
    rk = [0] * size
    lineages = [0]
    nid = 1
    t = 0.0
    times = []
    for k in range(1, n):
        t += exponential(rng, b * k)
        times.append(t)
        j = randint(rng, k)
        v = lineages[j]
        rk[v] = k
        first[v] = nid
        lineages[j] = nid
        lineages.append(nid + 1)
        nid += 2

    def build(v):
        c = first[v]
        if c < 0:
            return trees.leaf()
        return trees.split(build(c), build(c + 1), rank=rk[v])

    tree = trees.canonical_shape(build(0))
    return TimedRankedTree(tree=tree, times=tuple(times), horizon=times[-1])


def sample_kingman(n: int, c: float, rng) -> TimedRankedTree:
    """Kingman coalescent on n labelled lineages, rate c per pair.

    Draw order, for k = n..2 live lineages: one uniform for the
    Exp(c k(k-1)/2) waiting time, one uniform for the merging pair
    (lexicographic index); the merge leaving k-1 lineages gets rank
    k-1, the merged lineage replaces the smaller slot and the last
    lineage backfills the larger one.  Matches ``kingman_codes``.
    Split times are reported forward from the root: the final merge
    sits at time 0 and tips live at the total coalescence depth.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if c <= 0:
        raise ValueError("merge rate must be positive")
    blocks = [trees.leaf(i + 1) for i in range(n)]
    k = n
    tau = 0.0
    backward = {}
    while k > 1:
        tau += exponential(rng, c * k * (k - 1) / 2)
        q = randint(rng, k * (k - 1) // 2)
        i = 0
        while q >= k - 1 - i:
            q -= k - 1 - i
            i += 1
        j = i + 1 + q
        blocks[i] = trees.split(blocks[i], blocks[j], rank=k - 1)
        blocks[j] = blocks[k - 1]
        blocks.pop()
        backward[k - 1] = tau
        k -= 1
    total = tau
    times = tuple(total - backward[r] for r in range(1, n))
    tree = trees.canonical_shape(blocks[0])
    return TimedRankedTree(tree=tree, times=times, horizon=total)


def sample_gw_binary(p: float, rng, cap: int = 10**6) -> Optional[Tree]:
    """Binary branching tree: every particle begets two children with
    probability p, none otherwise.  Returns the resulting shape, or
    None as the overflow signal once more than ``cap`` total leaves
    are guaranteed (leaves so far + live particles exceeds cap, which
    never truncates a tree whose final leaf count is within the cap).

    One uniform per particle, particles processed in creation order;
    matches the ``gw_leaf_counts`` / ``gw_conditioned_codes`` kernels.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    if cap < 1:
        raise ValueError("cap must be at least 1")
    first = {}
    nid = 1
    leaves = 0
    i = 0
    while i < nid:
        if rng.random() < p:
            first[i] = nid
            nid += 2
        else:
            leaves += 1
        i += 1
        if leaves + (nid - i) > cap:
            return None

    def build(v):
        c = first.get(v, -1)
        if c < 0:
            return trees.leaf()
        return trees.split(build(c), build(c + 1))

    return trees.canonical_shape(build(0))


def sample_gw_conditioned(n: int, p: float, rng, budget: int = 10**7) -> Tree:
    """Rejection-sample the binary branching tree until it has exactly
    n leaves.  The accepted shape's law does not depend on p; p only
    drives the acceptance rate (p = 1/2 is a good default).  Raises
    RuntimeError when ``budget`` attempts all miss.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    for _ in range(budget):
        t = sample_gw_binary(p, rng, cap=n)
        if t is not None and t.n_leaves == n:
            return t
    raise RuntimeError(f"no {n}-leaf tree within {budget} attempts (p={p})")
