# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled buffer/channel matching loop."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def select_slots(const cnp.int64_t[:, ::1] order, const cnp.int64_t[:, ::1] starts,
                 const cnp.int64_t[:, ::1] cset, const double[:, ::1] h,
                 const double[::1] mids, bint soft):
    """Buffer slot sent in each channel use, or -1 for an idle use.

    ``order[b]`` lists the block's measurements grouped by parameter (and
    by draw key inside a group); group m occupies
    ``order[b, starts[b, m]:starts[b, m + 1]]``.
    """
    cdef Py_ssize_t nb = order.shape[0], d = order.shape[1], J = mids.shape[0]
    cdef Py_ssize_t b, j, m, best, k
    cdef double dist, dbest
    out = np.full((nb, d), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] src = out
    cdef cnp.int64_t[::1] ptr = np.empty(J, dtype=np.int64)
    with nogil:
        for b in range(nb):
            for m in range(J):
                ptr[m] = starts[b, m]
            for j in range(d):
                m = cset[b, j]
                if ptr[m] < starts[b, m + 1]:
                    best = m
                elif soft:
                    best = -1
                    dbest = 0.0
                    for k in range(J):
                        if ptr[k] < starts[b, k + 1]:
                            dist = fabs(h[b, j] - mids[k])
                            if best < 0 or dist < dbest:
                                best = k
                                dbest = dist
                    if best < 0:
                        continue
                else:
                    continue
                src[b, j] = order[b, ptr[best]]
                ptr[best] += 1
    return out
