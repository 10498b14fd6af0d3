"""Pure-Python Monte Carlo kernels (fallback backend).

Twin of the compiled module ``_speed``.  Each kernel runs ``reps``
independent replicates of one simulation and returns per-replicate
summaries, either canonical tree codes or counts, as a numpy array.

All randomness is consumed as scalar uniforms taken one at a time from
a ``numpy.random.Generator``.  The order of consumption is part of
each kernel's contract: the compiled twin and the object-level
samplers in :mod:`phylocomb.generators` / :mod:`phylocomb.splitting`
consume draws in exactly the same order, which makes every simulation
bit-reproducible for a given seed regardless of backend.

Canonical codes pack a tree into a uint64, most significant bits
first: a leaf is ``0`` (followed by 3 bits of label-1 when labelled);
a split is ``1`` (followed by 3 bits of rank-1 when ranked) and the
two child codes ordered by (bit length, value).  This matches
``trees.canonical_code``, so codes can be classified against exact
enumerations.
"""

import math

import numpy as np

__all__ = [
    "uniform",
    "randint",
    "exponential",
    "yule_ranked_codes",
    "kingman_codes",
    "gw_leaf_counts",
    "gw_conditioned_codes",
    "mbm_codes",
    "cpp_codes",
    "cpp_tip_counts",
]


def uniform(rng):
    return rng.random()


def randint(rng, k):
    # floor(u*k), clipped: float rounding may produce u*k == k
    j = int(rng.random() * k)
    return k - 1 if j >= k else j


def exponential(rng, rate):
    return -math.log1p(-rng.random()) / rate


def _combine(abits, alen, bbits, blen, head, hlen):
    if (blen, bbits) < (alen, abits):
        abits, alen, bbits, blen = bbits, blen, abits, alen
    return ((head << alen) | abits) << blen | bbits, hlen + alen + blen


def yule_ranked_codes(n, reps, rng):
    """Ranked-shape codes of Yule trees stopped at n tips.

    Draw order per replicate, for k = 1..n-1 lineages: one uniform for
    the exponential waiting time (value unused here), one uniform for
    the splitting lineage index; the k-th split gets rank k.
    """
    out = np.empty(reps, dtype=np.uint64)
    size = 2 * n - 1
    for r in range(reps):
        first = [-1] * size
        rk = [0] * size
        lineages = [0]
        nid = 1
        for k in range(1, n):
            rng.random()
            j = randint(rng, k)
            v = lineages[j]
            rk[v] = k
            first[v] = nid
            lineages[j] = nid
            lineages.append(nid + 1)
            nid += 2

        def code(v):
            c = first[v]
            if c < 0:
                return 0, 1
            a, al = code(c)
            b, bl = code(c + 1)
            return _combine(a, al, b, bl, 8 | (rk[v] - 1), 4)

        out[r] = code(0)[0]
    return out


def kingman_codes(n, reps, labelled, rng):
    """Ranked (optionally labelled) codes of Kingman coalescent trees.

    Draw order per replicate, for k = n..2 lineages: one uniform for
    the waiting time (unused), one uniform for the merging pair index
    in lexicographic order; the merge leaves k-1 lineages and its
    split gets rank k-1.  Merged lineage replaces slot i, the last
    lineage backfills slot j.
    """
    out = np.empty(reps, dtype=np.uint64)
    for r in range(reps):
        if labelled:
            codes = [(lab, 4) for lab in range(n)]
        else:
            codes = [(0, 1)] * n
        k = n
        while k > 1:
            rng.random()
            q = randint(rng, k * (k - 1) // 2)
            i = 0
            while q >= k - 1 - i:
                q -= k - 1 - i
                i += 1
            j = i + 1 + q
            a, al = codes[i]
            b, bl = codes[j]
            merged = _combine(a, al, b, bl, 8 | (k - 2), 4)
            codes[i] = merged
            codes[j] = codes[k - 1]
            codes.pop()
            k -= 1
        out[r] = codes[0][0]
    return out


def gw_leaf_counts(p, cap, reps, rng):
    """Total leaf counts of binary branching trees; -1 when > cap.

    One uniform per particle, particles processed in creation order.
    A replicate aborts as soon as leaves + pending > cap, which cannot
    cut off any tree whose final leaf count is within the cap (every
    pending particle yields at least one leaf).
    """
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        pending = 1
        leaves = 0
        while pending:
            if rng.random() < p:
                pending += 1
            else:
                leaves += 1
                pending -= 1
            if leaves + pending > cap:
                leaves = -1
                break
        out[r] = leaves
    return out


def gw_conditioned_codes(n, p, reps, budget, rng):
    """Shape codes of binary branching trees conditioned on n leaves.

    Rejection sampling of the free tree (same draw order and abort
    rule as :func:`gw_leaf_counts` with cap = n) until the leaf count
    is exactly n; at most ``budget`` attempts per replicate.
    """
    out = np.empty(reps, dtype=np.uint64)
    size = 2 * n + 2
    for r in range(reps):
        for _ in range(budget):
            first = [-1] * size
            nid = 1
            leaves = 0
            i = 0
            ok = True
            while i < nid:
                if rng.random() < p:
                    first[i] = nid
                    nid += 2
                else:
                    leaves += 1
                i += 1
                if leaves + (nid - i) > n:
                    ok = False
                    break
            if ok and leaves == n:
                break
        else:
            raise RuntimeError(
                f"no {n}-leaf tree within {budget} attempts (p={p})"
            )

        def code(v):
            c = first[v]
            if c < 0:
                return 0, 1
            a, al = code(c)
            b, bl = code(c + 1)
            return _combine(a, al, b, bl, 1, 1)

        out[r] = code(0)[0]
    return out


def mbm_codes(n, cdf, reps, keep, rng):
    """Labelled codes from a Markov branching model, leaf set 1..n.

    ``cdf`` is a float64 matrix whose row m (2 <= m <= n) carries the
    distribution function of the split size K at an m-leaf node:
    cdf[m, j] = P(K <= j+1) for j = 0..m-2.  Draw order per node of
    size m: one uniform inverted through the row, then K uniforms for
    a partial Fisher-Yates pass that picks the label subset, then the
    subset-side subtree is sampled fully before the complement side.

    The returned code is restricted to labels <= keep, which performs
    leaf-dropping (of labels above keep) in the same pass; pass
    keep = n for the plain tree.
    """
    out = np.empty(reps, dtype=np.uint64)

    def rec(arr):
        m = len(arr)
        if m == 1:
            lab = arr[0]
            if lab > keep:
                return 0, 0, 0
            return lab - 1, 4, 1
        u = rng.random()
        row = cdf[m]
        K = m - 1
        for j in range(m - 1):
            if u <= row[j]:
                K = j + 1
                break
        for t in range(K):
            idx = t + int(rng.random() * (m - t))
            if idx >= m:
                idx = m - 1
            arr[t], arr[idx] = arr[idx], arr[t]
        a = rec(arr[:K])
        b = rec(arr[K:])
        if a[2] == 0:
            return b
        if b[2] == 0:
            return a
        bits, blen = _combine(a[0], a[1], b[0], b[1], 1, 1)
        return bits, blen, a[2] + b[2]

    for r in range(reps):
        out[r] = rec(list(range(1, n + 1)))[0]
    return out


def _cpp_depth(tag, b, d, u):
    # inverse transform of P(H <= t) = 1 - 1/W(t) for the three
    # constant-rate families; returns +inf when the draw escapes
    if tag == 0:
        # critical, W = 1 + b t
        return u / (b * (1.0 - u))
    if tag == 1:
        # pure birth, W = exp(b t)
        return -math.log1p(-u) / b
    # general birth-death, W = 1 + b (exp(rt) - 1)/r
    rr = b - d
    arg = 1.0 + rr * u / (b * (1.0 - u))
    if arg <= 0.0:
        return math.inf
    return math.log(arg) / rr


def cpp_codes(tag, b, d, T, n_target, reps, budget, rng):
    """Shape codes of coalescent point process trees with n_target tips.

    One uniform per node depth, drawn until the first depth exceeds T;
    a run with exactly n_target - 1 small depths is accepted
    (rejection otherwise, at most ``budget`` runs per replicate).  The
    tree over tips 0..n-1 splits recursively at the largest depth.
    ``tag``: 0 critical (d ignored), 1 pure birth (d ignored), 2
    birth-death with rates (b, d).
    """
    out = np.empty(reps, dtype=np.uint64)

    def code(depths, lo, hi):
        # tips lo..hi delimited by depths[lo..hi-1]
        if lo == hi:
            return 0, 1
        m = lo
        for t in range(lo + 1, hi):
            if depths[t] > depths[m]:
                m = t
        a, al = code(depths, lo, m)
        b2, bl = code(depths, m + 1, hi)
        return _combine(a, al, b2, bl, 1, 1)

    for r in range(reps):
        for _ in range(budget):
            depths = []
            while True:
                h = _cpp_depth(tag, b, d, rng.random())
                if h > T:
                    break
                depths.append(h)
            if len(depths) == n_target - 1:
                break
        else:
            raise RuntimeError(
                f"no {n_target}-tip tree within {budget} runs"
            )
        out[r] = code(depths, 0, len(depths))[0]
    return out


def cpp_tip_counts(tag, b, d, T, cap, reps, rng):
    """Tip counts of nonempty coalescent point processes; -1 past cap."""
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        count = 1
        while _cpp_depth(tag, b, d, rng.random()) <= T:
            count += 1
            if count > cap:
                count = -1
                break
        out[r] = count
    return out
