# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels.  Twin of ``pure``: same functions,
same draw order, bit-identical output for the same seeded Generator.

Uniforms come straight from the Generator's BitGenerator through its
PyCapsule, one ``next_double`` per draw, which is exactly what
``Generator.random()`` consumes, so the two backends walk the same
stream.  Arithmetic mirrors ``pure`` expression for expression; both
sides use the platform libm, so results agree to the last bit.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport INFINITY, log, log1p
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc
from numpy.random cimport bitgen_t

cnp.import_array()

__all__ = [
    "yule_ranked_codes",
    "kingman_codes",
    "gw_leaf_counts",
    "gw_conditioned_codes",
    "mbm_codes",
    "cpp_codes",
    "cpp_tip_counts",
]

cdef const char *CAPSULE_NAME = "BitGenerator"


cdef bitgen_t *get_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, CAPSULE_NAME):
        raise ValueError("rng must be a numpy Generator")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, CAPSULE_NAME)


cdef inline double nxt(bitgen_t *bg) noexcept:
    return bg.next_double(bg.state)


cdef inline long c_randint(bitgen_t *bg, long k) noexcept:
    cdef long j = <long> (nxt(bg) * k)
    return k - 1 if j >= k else j


cdef inline uint64_t c_combine(uint64_t abits, int alen,
                               uint64_t bbits, int blen,
                               uint64_t head, int hlen,
                               int *lenout) noexcept:
    cdef uint64_t tb
    cdef int tl
    if blen < alen or (blen == alen and bbits < abits):
        tb = abits
        tl = alen
        abits = bbits
        alen = blen
        bbits = tb
        blen = tl
    lenout[0] = hlen + alen + blen
    return ((head << alen) | abits) << blen | bbits


cdef uint64_t _shape_code(long *first, long v, int *lenout) noexcept:
    cdef long c = first[v]
    cdef uint64_t a, b
    cdef int al, bl
    if c < 0:
        lenout[0] = 1
        return 0
    a = _shape_code(first, c, &al)
    b = _shape_code(first, c + 1, &bl)
    return c_combine(a, al, b, bl, 1, 1, lenout)


cdef uint64_t _ranked_code(long *first, long *rk, long v, int *lenout) noexcept:
    cdef long c = first[v]
    cdef uint64_t a, b
    cdef int al, bl
    if c < 0:
        lenout[0] = 1
        return 0
    a = _ranked_code(first, rk, c, &al)
    b = _ranked_code(first, rk, c + 1, &bl)
    return c_combine(a, al, b, bl, <uint64_t> (8 | (rk[v] - 1)), 4, lenout)


def yule_ranked_codes(long n, long reps, object rng):
    """Ranked-shape codes of Yule trees stopped at n tips."""
    cdef bitgen_t *bg = get_bitgen(rng)
    out = np.empty(reps, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef long size = 2 * n - 1
    cdef long *first = <long *> malloc(size * sizeof(long))
    cdef long *rk = <long *> malloc(size * sizeof(long))
    cdef long *lineages = <long *> malloc(n * sizeof(long))
    if first == NULL or rk == NULL or lineages == NULL:
        free(first)
        free(rk)
        free(lineages)
        raise MemoryError()
    cdef long r, i, k, j, v, nid
    cdef int dummy
    try:
        for r in range(reps):
            for i in range(size):
                first[i] = -1
            lineages[0] = 0
            nid = 1
            for k in range(1, n):
                nxt(bg)
                j = c_randint(bg, k)
                v = lineages[j]
                rk[v] = k
                first[v] = nid
                lineages[j] = nid
                lineages[k] = nid + 1
                nid += 2
            o[r] = _ranked_code(first, rk, 0, &dummy)
    finally:
        free(first)
        free(rk)
        free(lineages)
    return out


def kingman_codes(long n, long reps, bint labelled, object rng):
    """Ranked (optionally labelled) codes of Kingman coalescent trees."""
    cdef bitgen_t *bg = get_bitgen(rng)
    out = np.empty(reps, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef uint64_t *bits = <uint64_t *> malloc(n * sizeof(uint64_t))
    cdef int *lens = <int *> malloc(n * sizeof(int))
    if bits == NULL or lens == NULL:
        free(bits)
        free(lens)
        raise MemoryError()
    cdef long r, k, q, i, j, lab
    cdef uint64_t merged
    cdef int ml
    try:
        for r in range(reps):
            if labelled:
                for lab in range(n):
                    bits[lab] = <uint64_t> lab
                    lens[lab] = 4
            else:
                for lab in range(n):
                    bits[lab] = 0
                    lens[lab] = 1
            k = n
            while k > 1:
                nxt(bg)
                q = c_randint(bg, k * (k - 1) // 2)
                i = 0
                while q >= k - 1 - i:
                    q -= k - 1 - i
                    i += 1
                j = i + 1 + q
                merged = c_combine(bits[i], lens[i], bits[j], lens[j],
                                   <uint64_t> (8 | (k - 2)), 4, &ml)
                bits[i] = merged
                lens[i] = ml
                bits[j] = bits[k - 1]
                lens[j] = lens[k - 1]
                k -= 1
            o[r] = bits[0]
    finally:
        free(bits)
        free(lens)
    return out


def gw_leaf_counts(double p, long cap, long reps, object rng):
    """Total leaf counts of binary branching trees; -1 when > cap."""
    cdef bitgen_t *bg = get_bitgen(rng)
    out = np.empty(reps, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef long r, pending, leaves
    for r in range(reps):
        pending = 1
        leaves = 0
        while pending:
            if nxt(bg) < p:
                pending += 1
            else:
                leaves += 1
                pending -= 1
            if leaves + pending > cap:
                leaves = -1
                break
        o[r] = leaves
    return out


def gw_conditioned_codes(long n, double p, long reps, long budget, object rng):
    """Shape codes of binary branching trees conditioned on n leaves."""
    cdef bitgen_t *bg = get_bitgen(rng)
    out = np.empty(reps, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef long size = 2 * n + 2
    cdef long *first = <long *> malloc(size * sizeof(long))
    if first == NULL:
        raise MemoryError()
    cdef long r, a, i, nid, leaves
    cdef bint ok, found
    cdef int dummy
    try:
        for r in range(reps):
            found = False
            for a in range(budget):
                for i in range(size):
                    first[i] = -1
                nid = 1
                leaves = 0
                i = 0
                ok = True
                while i < nid:
                    if nxt(bg) < p:
                        first[i] = nid
                        nid += 2
                    else:
                        leaves += 1
                    i += 1
                    if leaves + (nid - i) > n:
                        ok = False
                        break
                if ok and leaves == n:
                    found = True
                    break
            if not found:
                raise RuntimeError(
                    f"no {n}-leaf tree within {budget} attempts (p={p})"
                )
            o[r] = _shape_code(first, 0, &dummy)
    finally:
        free(first)
    return out


cdef struct CodeRes:
    uint64_t bits
    int len
    int size


cdef CodeRes _mbm_rec(long lo, long hi, long *arr, double[:, ::1] cdf,
                      long keep, bitgen_t *bg) noexcept:
    cdef CodeRes res, a, b
    cdef long m = hi - lo
    cdef long K, j, t, idx, tmp
    cdef double u
    if m == 1:
        if arr[lo] > keep:
            res.bits = 0
            res.len = 0
            res.size = 0
        else:
            res.bits = <uint64_t> (arr[lo] - 1)
            res.len = 4
            res.size = 1
        return res
    u = nxt(bg)
    K = m - 1
    for j in range(m - 1):
        if u <= cdf[m, j]:
            K = j + 1
            break
    for t in range(K):
        idx = t + <long> (nxt(bg) * (m - t))
        if idx >= m:
            idx = m - 1
        tmp = arr[lo + t]
        arr[lo + t] = arr[lo + idx]
        arr[lo + idx] = tmp
    a = _mbm_rec(lo, lo + K, arr, cdf, keep, bg)
    b = _mbm_rec(lo + K, hi, arr, cdf, keep, bg)
    if a.size == 0:
        return b
    if b.size == 0:
        return a
    res.bits = c_combine(a.bits, a.len, b.bits, b.len, 1, 1, &res.len)
    res.size = a.size + b.size
    return res


def mbm_codes(long n, object cdf, long reps, long keep, object rng):
    """Labelled codes from a Markov branching model, leaf set 1..n.

    Restriction to labels <= keep drops the other leaves in the same
    pass; pass keep = n for the plain tree.
    """
    cdef bitgen_t *bg = get_bitgen(rng)
    cdef double[:, ::1] rows = np.ascontiguousarray(cdf, dtype=np.float64)
    out = np.empty(reps, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef long *arr = <long *> malloc(n * sizeof(long))
    if arr == NULL:
        raise MemoryError()
    cdef long r, i
    cdef CodeRes res
    try:
        for r in range(reps):
            for i in range(n):
                arr[i] = i + 1
            res = _mbm_rec(0, n, arr, rows, keep, bg)
            o[r] = res.bits
    finally:
        free(arr)
    return out


cdef inline double c_cpp_depth(int tag, double b, double d, double u) noexcept:
    cdef double rr, arg
    if tag == 0:
        return u / (b * (1.0 - u))
    if tag == 1:
        return -log1p(-u) / b
    rr = b - d
    arg = 1.0 + rr * u / (b * (1.0 - u))
    if arg <= 0.0:
        return INFINITY
    return log(arg) / rr


cdef uint64_t _argmax_code(double *depths, long lo, long hi, int *lenout) noexcept:
    cdef long m, t
    cdef uint64_t a, b
    cdef int al, bl
    if lo == hi:
        lenout[0] = 1
        return 0
    m = lo
    for t in range(lo + 1, hi):
        if depths[t] > depths[m]:
            m = t
    a = _argmax_code(depths, lo, m, &al)
    b = _argmax_code(depths, m + 1, hi, &bl)
    return c_combine(a, al, b, bl, 1, 1, lenout)


def cpp_codes(int tag, double b, double d, double T, long n_target,
              long reps, long budget, object rng):
    """Shape codes of coalescent point process trees with n_target tips."""
    cdef bitgen_t *bg = get_bitgen(rng)
    out = np.empty(reps, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef double *depths = <double *> malloc(n_target * sizeof(double))
    if depths == NULL:
        raise MemoryError()
    cdef long r, a, count
    cdef double h
    cdef bint found
    cdef int dummy
    try:
        for r in range(reps):
            found = False
            for a in range(budget):
                count = 0
                while True:
                    h = c_cpp_depth(tag, b, d, nxt(bg))
                    if h > T:
                        break
                    if count < n_target - 1:
                        depths[count] = h
                    count += 1
                if count == n_target - 1:
                    found = True
                    break
            if not found:
                raise RuntimeError(
                    f"no {n_target}-tip tree within {budget} runs"
                )
            o[r] = _argmax_code(depths, 0, count, &dummy)
    finally:
        free(depths)
    return out


def cpp_tip_counts(int tag, double b, double d, double T, long cap,
                   long reps, object rng):
    """Tip counts of nonempty coalescent point processes; -1 past cap."""
    cdef bitgen_t *bg = get_bitgen(rng)
    out = np.empty(reps, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef long r, count
    for r in range(reps):
        count = 1
        while c_cpp_depth(tag, b, d, nxt(bg)) <= T:
            count += 1
            if count > cap:
                count = -1
                break
        o[r] = count
    return out
