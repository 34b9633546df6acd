# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled Monte Carlo kernel; row-for-row equivalent to ``_mcpy``."""

import numpy as np

cdef enum:
    CHOICE = 0
    PICK = 1
    LEAF = 2
    AND = 3

ctypedef struct Prog:
    const signed char* kind
    const int* first
    const int* count
    const int* children
    const double* cumw
    const double* prob
    const int* slot
    const int* best


cdef bint _eval(const Prog* p, int i, const double* u) noexcept nogil:
    cdef int k = p.kind[i]
    cdef int j, start, stop
    cdef double x
    while True:
        k = p.kind[i]
        if k == LEAF:
            return u[p.slot[i]] < p.prob[i]
        if k == PICK:
            if p.best[i] < 0:
                return False
            i = p.best[i]
            continue
        start = p.first[i]
        stop = start + p.count[i]
        if k == AND:
            for j in range(start, stop):
                if not _eval(p, p.children[j], u):
                    return False
            return True
        # weighted choice: first child whose cumulative weight exceeds the draw
        x = u[p.slot[i]]
        j = start
        while j < stop - 1 and x >= p.cumw[j]:
            j += 1
        i = p.children[j]


def count_successes(program, double[:, ::1] u):
    cdef signed char[::1] kind = program.kind
    cdef int[::1] first = program.first
    cdef int[::1] count = program.count
    cdef int[::1] children = np.ascontiguousarray(program.children, dtype=np.int32)
    cdef double[::1] cumw = np.ascontiguousarray(program.cumw, dtype=np.float64)
    cdef double[::1] prob = program.prob
    cdef int[::1] slot = program.slot
    cdef int[::1] best = program.best
    cdef Prog p
    cdef Py_ssize_t r, rows = u.shape[0]
    cdef long hits = 0
    # empty children arrays have no addressable first element
    cdef int dummy_i = 0
    cdef double dummy_d = 0.0
    if rows == 0:
        return 0
    p.kind = &kind[0]
    p.first = &first[0]
    p.count = &count[0]
    p.children = &children[0] if children.shape[0] else &dummy_i
    p.cumw = &cumw[0] if cumw.shape[0] else &dummy_d
    p.prob = &prob[0]
    p.slot = &slot[0]
    p.best = &best[0]
    with nogil:
        for r in range(rows):
            if _eval(&p, 0, &u[r, 0]):
                hits += 1
    return hits
