"""Markov branching models: split laws, samplers, consistency checks.

A Markov branching model grows a labelled tree recursively: a node
holding m labels draws a split size K from a law q_m on {1..m-1},
picks a uniform K-subset of its labels, and recurses on both sides.
This module provides the split-law families

* ``pda``: q_m(i) = (1/2) C(m,i) t_i t_{m-i} / t_m, evaluated in exact
  rational arithmetic and returned as float;
* ``erm``: q_m(i) = 1/(m-1);
* ``beta`` (beta > -2): q_m(i) proportional to
  Gamma(beta+i+1) Gamma(beta+m-i+1) / (Gamma(i+1) Gamma(m-i+1)),
  all Gamma ratios in log space, normalizer by explicit summation;
* measure-driven laws built from a symmetric measure on [0,1]
  (density plus equal atoms at the endpoints), integrated by adaptive
  quadrature;
* explicit tables, for toy laws.

The beta family interpolates the named ones: beta = 0 is erm and
beta = -3/2 is pda.  Sampling consistency (dropping the highest label
of an (n+1)-tree leaves an n-tree with the model's n-law) holds for
every measure-driven law and is checked empirically by
:func:`check_sampling_consistency`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional

import numpy as np
from scipy import integrate, stats
from scipy.special import gammaln, logsumexp

from . import exact, trees
from ._backend import impl as _kernels
from .trees import Tree

__all__ = [
    "SplitLaw",
    "SplitMeasure",
    "split_prob",
    "a_beta",
    "qn_from_measure",
    "beta_tree_probability",
    "sample_mbm",
    "sample_interval_splitting",
    "smaller_clade_stats",
    "CladeStats",
    "check_sampling_consistency",
    "ConsistencyReport",
]

_QUAD_KW = dict(epsabs=1e-11, epsrel=1e-11, limit=200)


def _quad(f, lo, hi):
    val, err = integrate.quad(f, lo, hi, **_QUAD_KW)
    if err > max(1e-8 * abs(val), 1e-9):
        raise ValueError(f"integral did not converge (value {val}, error {err})")
    return val


@dataclass(frozen=True)
class SplitMeasure:
    """A symmetric measure on [0,1]: density on (0,1) plus endpoint atoms.

    The density need not be normalized (sigma-finite families like
    x^beta (1-x)^beta with beta <= -1 are fine as long as
    x(1-x) density(x) is integrable); symmetry under x -> 1-x is
    required and spot-checked on a fixed grid unless ``trust`` is set.
    ``sampler``, when given, draws from the normalized density and
    enables :func:`sample_interval_splitting`.
    """

    density: Optional[Callable[[float], float]] = None
    atom0: float = 0.0
    atom1: float = 0.0
    sampler: Optional[Callable] = None
    trust: bool = False

    def __post_init__(self):
        if self.atom0 < 0 or self.atom1 < 0:
            raise ValueError("atom masses must be nonnegative")
        if abs(self.atom0 - self.atom1) > 1e-12:
            raise ValueError("measure must be symmetric: unequal endpoint atoms")
        if self.density is None and self.atom0 == 0:
            raise ValueError("measure is null")
        if self.density is not None and not self.trust:
            for x in (0.071, 0.2348, 0.377, 0.4421):
                a, b = self.density(x), self.density(1 - x)
                if abs(a - b) > 1e-8 * max(abs(a), abs(b), 1.0):
                    raise ValueError(f"density is not symmetric at x={x}")


@functools.lru_cache(maxsize=4096)
def _alpha_n(mu: SplitMeasure, n: int) -> float:
    total = n * (mu.atom0 + mu.atom1)
    if mu.density is not None:
        total += _quad(lambda x: (1 - x**n - (1 - x) ** n) * mu.density(x), 0.0, 1.0)
    return total


def qn_from_measure(mu: SplitMeasure, n: int, i: int) -> float:
    """Split law of the measure-driven branching model.

    q_n(i) is C(n,i) int x^i (1-x)^(n-i) mu(dx) over the open interval,
    plus n mu({0}) when i = 1 and n mu({1}) when i = n-1, normalized
    by alpha_n = int (1 - x^n - (1-x)^n) mu(dx) + n mu({0,1}).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= i <= n - 1:
        raise ValueError("i out of range")
    num = 0.0
    if mu.density is not None:
        num += math.comb(n, i) * _quad(
            lambda x: x**i * (1 - x) ** (n - i) * mu.density(x), 0.0, 1.0
        )
    if i == 1:
        num += n * mu.atom0
    if i == n - 1:
        num += n * mu.atom1
    return num / _alpha_n(mu, n)


@functools.lru_cache(maxsize=65536)
def _log_beta_weights(n: int, beta: float) -> tuple:
    i = np.arange(1, n)
    # pair each shifted term with its unshifted mate so the weights
    # cancel exactly when beta lands on an integer lattice point
    logw = (gammaln(beta + i + 1) - gammaln(i + 1)) + (
        gammaln(beta + n - i + 1) - gammaln(n - i + 1)
    )
    return tuple(logw)


def a_beta(n: int, beta: float) -> float:
    """Normalizer of the beta split law, as the explicit sum
    sum_i Gamma(beta+i+1) Gamma(beta+n-i+1) / (Gamma(i+1) Gamma(n-i+1))."""
    beta = float(beta)
    if beta <= -2:
        raise ValueError("beta must exceed -2")
    if n < 2:
        raise ValueError("n must be at least 2")
    logw = np.array(_log_beta_weights(n, beta))
    # linear-space summation keeps integer-valued normalizers exact
    # (every log weight is 0.0 at beta = 0); logs only guard overflow
    if float(np.max(logw)) < 700.0:
        return float(math.fsum(np.exp(logw)))
    return float(np.exp(logsumexp(logw)))


def _log_a_beta(n: int, beta: float) -> float:
    return float(logsumexp(np.array(_log_beta_weights(n, beta))))


@dataclass(frozen=True)
class SplitLaw:
    """A family (q_n) indexed by the node size n."""

    kind: str
    beta: Optional[float] = None
    measure: Optional[SplitMeasure] = None
    table: Optional[tuple] = None

    @staticmethod
    def pda() -> "SplitLaw":
        return SplitLaw("pda")

    @staticmethod
    def erm() -> "SplitLaw":
        return SplitLaw("erm")

    @staticmethod
    def from_beta(beta: float) -> "SplitLaw":
        beta = float(beta)
        if beta <= -2:
            raise ValueError("beta must exceed -2")
        return SplitLaw("beta", beta=beta)

    @staticmethod
    def from_measure(mu: SplitMeasure) -> "SplitLaw":
        return SplitLaw("measure", measure=mu)

    @staticmethod
    def from_table(rows: Mapping[int, list]) -> "SplitLaw":
        """Explicit rows {n: [q_n(1), ..., q_n(n-1)]}; each row must be
        symmetric and sum to 1."""
        frozen = []
        for n in sorted(rows):
            row = tuple(float(x) for x in rows[n])
            if len(row) != n - 1:
                raise ValueError(f"row {n} must have {n - 1} entries")
            if abs(sum(row) - 1) > 1e-12:
                raise ValueError(f"row {n} does not sum to 1")
            for i, q in enumerate(row, start=1):
                if q < 0 or abs(q - row[n - 1 - i]) > 1e-12:
                    raise ValueError(f"row {n} is not a symmetric law")
            frozen.append((n, row))
        return SplitLaw("table", table=tuple(frozen))

    def prob(self, n: int, i: int) -> float:
        return split_prob(self, n, i)

    def row(self, n: int) -> np.ndarray:
        """q_n(1..n-1) as a float vector."""
        if n < 2:
            raise ValueError("n must be at least 2")
        if self.kind == "erm":
            return np.full(n - 1, 1.0 / (n - 1))
        if self.kind == "beta":
            logw = np.array(_log_beta_weights(n, self.beta))
            return np.exp(logw - logsumexp(logw))
        if self.kind == "pda":
            tn = exact.t_count(n)
            out = np.empty(n - 1)
            for i in range(1, n):
                out[i - 1] = float(
                    Fraction(
                        math.comb(n, i) * exact.t_count(i) * exact.t_count(n - i),
                        2 * tn,
                    )
                )
            return out
        if self.kind == "measure":
            return np.array([qn_from_measure(self.measure, n, i) for i in range(1, n)])
        for m, row in self.table:
            if m == n:
                return np.array(row)
        raise ValueError(f"table law has no row for n={n}")

    def cdf_rows(self, nmax: int) -> np.ndarray:
        """Stacked distribution functions for the sampling kernels:
        entry [m, j] is P(K_m <= j+1), rows m = 2..nmax."""
        out = np.zeros((nmax + 1, max(nmax - 1, 1)))
        for m in range(2, nmax + 1):
            out[m, : m - 1] = np.cumsum(self.row(m))
            out[m, m - 2] = 1.0
        return out


def split_prob(law: SplitLaw, n: int, i: int) -> float:
    """Evaluate q_n(i) for one of the split-law families."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= i <= n - 1:
        raise ValueError("i out of range")
    if law.kind == "erm":
        return 1.0 / (n - 1)
    if law.kind == "pda":
        return float(
            Fraction(
                math.comb(n, i) * exact.t_count(i) * exact.t_count(n - i),
                2 * exact.t_count(n),
            )
        )
    if law.kind == "beta":
        logw = _log_beta_weights(n, law.beta)
        return float(np.exp(logw[i - 1] - _log_a_beta(n, law.beta)))
    if law.kind == "measure":
        return qn_from_measure(law.measure, n, i)
    return float(law.row(n)[i - 1])


def beta_tree_probability(t: Tree, beta: float) -> float:
    """Log probability of a labelled topology under the beta model:
    log of Gamma(beta+2)^n 2^(n-1) / Gamma(beta+n+1) times the product
    over splits of Gamma(beta+lam+1) / (Gamma(lam+1) a_lam(beta))."""
    beta = float(beta)
    if beta <= -2:
        raise ValueError("beta must exceed -2")
    if not t.is_labelled:
        raise ValueError("expects a labelled topology")
    n = t.n_leaves
    out = n * gammaln(beta + 2) + (n - 1) * math.log(2) - gammaln(beta + n + 1)
    for lam in trees.leaf_counts(t):
        out += gammaln(beta + lam + 1) - gammaln(lam + 1) - _log_a_beta(lam, beta)
    return float(out)


def _draw_split_size(row_cdf, m, rng) -> int:
    u = rng.random()
    for j in range(m - 1):
        if u <= row_cdf[j]:
            return j + 1
    return m - 1


def _partial_shuffle(arr, k, rng):
    # first k slots become a uniform k-subset, one uniform per swap
    m = len(arr)
    for t in range(k):
        idx = t + int(rng.random() * (m - t))
        if idx >= m:
            idx = m - 1
        arr[t], arr[idx] = arr[idx], arr[t]


def sample_mbm(n: int, law: SplitLaw, rng) -> Tree:
    """Sample a labelled tree on 1..n from the branching model.

    Draw order per node of size m: one uniform for K through the cdf
    row, K uniforms for the label subset (partial Fisher-Yates), then
    the subset side is sampled fully before the complement side.  This
    matches the batch kernel ``mbm_codes`` uniform for uniform.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n == 1:
        return trees.leaf(1)
    cdf = law.cdf_rows(n)

    def rec(labels):
        m = len(labels)
        if m == 1:
            return trees.leaf(labels[0])
        k = _draw_split_size(cdf[m], m, rng)
        _partial_shuffle(labels, k, rng)
        left = rec(labels[:k])
        right = rec(labels[k:])
        return trees.split(left, right)

    return trees.canonical_shape(rec(list(range(1, n + 1))))


def sample_interval_splitting(n: int, mu: SplitMeasure, rng) -> Tree:
    """Sample a labelled tree by recursive interval splitting.

    n uniform points land on (0,1), labelled 1..n in draw order; the
    interval is then split at X ~ density (redrawn until both sides
    are nonempty) and both sides recurse.  Only measures with an
    integrable density and no atoms qualify; the measure must carry a
    ``sampler`` (rng -> point in (0,1)) for the normalized density.
    """
    if mu.density is None or mu.atom0 != 0 or mu.atom1 != 0:
        raise ValueError("interval splitting needs a pure, integrable density")
    if mu.sampler is None:
        raise ValueError("measure has no sampler for its normalized density")
    if n < 1:
        raise ValueError("n must be at least 1")
    pts = [(rng.random(), lab) for lab in range(1, n + 1)]

    def rec(items, lo, hi):
        if len(items) == 1:
            return trees.leaf(items[0][1])
        while True:
            cut = lo + (hi - lo) * mu.sampler(rng)
            left = [it for it in items if it[0] <= cut]
            right = [it for it in items if it[0] > cut]
            if left and right:
                break
        return trees.split(rec(left, lo, cut), rec(right, cut, hi))

    return trees.canonical_shape(rec(pts, 0.0, 1.0))


@dataclass(frozen=True)
class CladeStats:
    """Monte Carlo summary of min(K_n, n - K_n) at the basal split."""

    n: int
    reps: int
    median: float
    mean: float
    histogram: tuple


def smaller_clade_stats(law: SplitLaw, n: int, reps: int, rng) -> CladeStats:
    if n < 2:
        raise ValueError("n must be at least 2")
    row = law.row(n)
    cdf = np.cumsum(row)
    cdf[-1] = 1.0
    u = rng.random(reps)
    k = np.searchsorted(cdf, u, side="left") + 1
    smaller = np.minimum(k, n - k)
    values, counts = np.unique(smaller, return_counts=True)
    return CladeStats(
        n=n,
        reps=reps,
        median=float(np.median(smaller)),
        mean=float(smaller.mean()),
        histogram=tuple(zip(values.tolist(), counts.tolist())),
    )


@dataclass(frozen=True)
class ConsistencyReport:
    """Chi-square comparison of the dropped-leaf law with the n-law."""

    n: int
    reps: int
    statistic: float
    dof: int
    p_value: float
    method: str

    def consistent(self, alpha: float = 0.01) -> bool:
        return self.p_value > alpha


def _exact_labelled_log_probs(law: SplitLaw, n: int):
    if law.kind == "pda":
        beta = -1.5
    elif law.kind == "erm":
        beta = 0.0
    elif law.kind == "beta":
        beta = law.beta
    else:
        return None
    out = {}
    for t in trees.iter_trees(n, "labelled"):
        out[trees.canonical_code(t)] = beta_tree_probability(t, beta)
    return out


def check_sampling_consistency(law: SplitLaw, n: int, reps: int, rng) -> ConsistencyReport:
    """Test that dropping label n+1 from a P_{n+1} sample leaves P_n.

    Samples ``reps`` trees of size n+1, drops the top label during
    coding, and compares the labelled-topology frequencies with the
    model's own n-leaf law: against exact probabilities for the
    pda/erm/beta families, else against a second sample of size-n
    trees (homogeneity test).  Returns the chi-square report; small
    p-values mean the family is not sampling consistent.
    """
    if not 2 <= n <= 6:
        raise ValueError("consistency checks enumerate T_n, need n <= 6")
    cdf = law.cdf_rows(n + 1)
    codes = _kernels.mbm_codes(n + 1, cdf, reps, n, rng)
    order = [trees.canonical_code(t) for t in trees.iter_trees(n, "labelled")]
    index = {c: j for j, c in enumerate(order)}
    observed = np.zeros(len(order))
    for c, cnt in zip(*np.unique(codes, return_counts=True)):
        observed[index[int(c)]] += cnt

    exact_logs = _exact_labelled_log_probs(law, n)
    if exact_logs is not None:
        probs = np.array([math.exp(exact_logs[c]) for c in order])
        probs /= probs.sum()
        res = stats.chisquare(observed, f_exp=probs * reps)
        return ConsistencyReport(
            n=n,
            reps=reps,
            statistic=float(res.statistic),
            dof=len(order) - 1,
            p_value=float(res.pvalue),
            method="one-sample",
        )

    other = _kernels.mbm_codes(n, law.cdf_rows(n), reps, n, rng)
    observed2 = np.zeros(len(order))
    for c, cnt in zip(*np.unique(other, return_counts=True)):
        observed2[index[int(c)]] += cnt
    keep = (observed + observed2) > 0
    table = np.vstack([observed[keep], observed2[keep]])
    res = stats.chi2_contingency(table, correction=False)
    return ConsistencyReport(
        n=n,
        reps=reps,
        statistic=float(res.statistic),
        dof=int(res.dof),
        p_value=float(res.pvalue),
        method="two-sample",
    )
