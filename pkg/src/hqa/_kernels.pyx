# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``. Same semantics."""

from libc.stdint cimport int64_t, uint64_t, uint8_t
from libc.stdlib cimport malloc, free

DEF ASKED = 0
DEF PRUNED = 1
DEF MISSING = -1


def levenshtein(str a, str b):
    cdef Py_ssize_t n, m, i, j
    cdef Py_ssize_t *row
    cdef Py_ssize_t diag, up, best
    cdef Py_UCS4 ca
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    n = len(a)
    m = len(b)
    if m == 0:
        return n
    row = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    if row == NULL:
        raise MemoryError()
    try:
        for j in range(m + 1):
            row[j] = j
        for i in range(1, n + 1):
            ca = a[i - 1]
            diag = row[0]
            row[0] = i
            for j in range(1, m + 1):
                up = row[j]
                best = diag + (ca != b[j - 1])
                if up + 1 < best:
                    best = up + 1
                if row[j - 1] + 1 < best:
                    best = row[j - 1] + 1
                row[j] = best
                diag = up
        return row[m]
    finally:
        free(row)


cdef Py_ssize_t _prune_row(const int64_t[:] parent, const uint64_t[:] gate_mask,
                           const int64_t[:] codes, uint8_t[:] out) noexcept nogil:
    cdef Py_ssize_t i, n = parent.shape[0], first_missing = -1
    cdef int64_t p, c
    for i in range(n):
        p = parent[i]
        if p < 0:
            out[i] = ASKED
        else:
            c = codes[p]
            if out[p] == ASKED and c >= 0 and (gate_mask[i] >> c) & 1:
                out[i] = ASKED
            else:
                out[i] = PRUNED
        if out[i] == ASKED and codes[i] == MISSING and first_missing < 0:
            first_missing = i
    return first_missing


def prune_row(const int64_t[:] parent, const uint64_t[:] gate_mask,
              const int64_t[:] codes, uint8_t[:] out):
    return _prune_row(parent, gate_mask, codes, out)


def prune_matrix(const int64_t[:] parent, const uint64_t[:] gate_mask,
                 const int64_t[:, :] codes, uint8_t[:, :] out):
    cdef Py_ssize_t r, rows = codes.shape[0]
    result = [0] * rows
    for r in range(rows):
        result[r] = _prune_row(parent, gate_mask, codes[r], out[r])
    return result
