# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled union-find kernels over preallocated numpy arrays.

The clustering pass is the hottest loop in the whole toolkit: one union
per input address per transaction, millions of times. These kernels keep
the forest in flat int64/int8 arrays so the pure-Python fallback in
``_uf_py`` can share the exact same memory layout and semantics.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.int8_t i8


cdef inline i64 _find(i64[::1] parent, i64 x) noexcept nogil:
    cdef i64 root = x
    cdef i64 cur = x
    cdef i64 nxt
    while parent[root] != root:
        root = parent[root]
    while parent[cur] != root:
        nxt = parent[cur]
        parent[cur] = root
        cur = nxt
    return root


cdef inline void _union(i64[::1] parent, i8[::1] rank, i64 a, i64 b) noexcept nogil:
    cdef i64 ra = _find(parent, a)
    cdef i64 rb = _find(parent, b)
    if ra == rb:
        return
    if rank[ra] < rank[rb]:
        parent[ra] = rb
    elif rank[ra] > rank[rb]:
        parent[rb] = ra
    else:
        parent[rb] = ra
        rank[ra] = rank[ra] + 1


def union_groups(i64[::1] parent, i8[::1] rank, i64[::1] flat, i64[::1] offsets):
    """Union every member of each group with the group's first member.

    ``flat`` holds the concatenated member indices; group g spans
    ``flat[offsets[g]:offsets[g+1]]``. Groups of size 0 or 1 are no-ops.
    """
    cdef Py_ssize_t g, i
    cdef i64 start, end
    with nogil:
        for g in range(offsets.shape[0] - 1):
            start = offsets[g]
            end = offsets[g + 1]
            for i in range(start + 1, end):
                _union(parent, rank, flat[start], flat[i])


def find_many(i64[::1] parent, i64[::1] queries):
    """Return the root of each queried index, compressing paths as it goes."""
    out = np.empty(queries.shape[0], dtype=np.int64)
    cdef i64[::1] out_view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(queries.shape[0]):
            out_view[i] = _find(parent, queries[i])
    return out


def compress_all(i64[::1] parent):
    """Point every entry directly at its root (full path compression)."""
    cdef Py_ssize_t i
    with nogil:
        for i in range(parent.shape[0]):
            _find(parent, i)
