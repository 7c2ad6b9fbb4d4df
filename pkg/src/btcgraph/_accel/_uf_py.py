"""Pure-Python fallback for the union-find kernels.

Mirrors ``_unionfind.pyx`` exactly: same array layout (int64 parent,
int8 rank), same union-by-rank tie-breaking, so a forest built by one
backend is indistinguishable from one built by the other.
"""

from __future__ import annotations

import numpy as np


def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    cur = x
    while parent[cur] != root:
        parent[cur], cur = root, parent[cur]
    return root


def _union(parent, rank, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if rank[ra] < rank[rb]:
        parent[ra] = rb
    elif rank[ra] > rank[rb]:
        parent[rb] = ra
    else:
        parent[rb] = ra
        rank[ra] += 1


def union_groups(parent, rank, flat, offsets):
    """Union every member of each group with the group's first member."""
    for g in range(len(offsets) - 1):
        start = int(offsets[g])
        end = int(offsets[g + 1])
        for i in range(start + 1, end):
            _union(parent, rank, int(flat[start]), int(flat[i]))


def find_many(parent, queries):
    """Return the root of each queried index, compressing paths as it goes."""
    out = np.empty(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        out[i] = _find(parent, int(q))
    return out


def compress_all(parent):
    """Point every entry directly at its root (full path compression)."""
    for i in range(len(parent)):
        _find(parent, i)
