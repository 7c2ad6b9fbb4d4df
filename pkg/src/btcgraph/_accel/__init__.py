"""Backend selection for the union-find kernels.

The compiled Cython extension is preferred; the pure-Python module is a
drop-in replacement used when the extension was not built, or when
``BTCGRAPH_PURE_PYTHON`` is set (handy for the benchmark and for testing
both paths).
"""

from __future__ import annotations

import os

from . import _uf_py

if os.environ.get("BTCGRAPH_PURE_PYTHON"):
    _impl = _uf_py
    BACKEND = "python"
else:
    try:
        from . import _unionfind as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built on this install
        _impl = _uf_py
        BACKEND = "python"

union_groups = _impl.union_groups
find_many = _impl.find_many
compress_all = _impl.compress_all

__all__ = ["BACKEND", "union_groups", "find_many", "compress_all", "_uf_py"]
