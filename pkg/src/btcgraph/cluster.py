"""Common-input-ownership clustering and address-reuse statistics.

All addresses spent together in one transaction's input side are assumed
to belong to one user entity. The clustering is a union-find forest over
interned address indices; construction is single-writer and batched
through the compiled kernels, and after :meth:`AddressClustering.finalize`
the structure is frozen for concurrent reads.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _accel
from .blockparse import Address, RawTransaction, resolve_input_addresses

_GROW = 1024


class AddressIndex:
    """Interns address strings to dense indices, in first-seen order."""

    def __init__(self):
        self._index: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, address: str) -> int:
        idx = self._index.get(address)
        if idx is None:
            idx = len(self._names)
            self._index[address] = idx
            self._names.append(address)
        return idx

    def get(self, address: str):
        return self._index.get(address)

    def name(self, idx: int) -> str:
        return self._names[idx]

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, address: str) -> bool:
        return address in self._index


class AddressClustering:
    """Union-find forest over addresses; one root per user entity.

    The canonical user id of a cluster is the smallest address index it
    contains, assigned in :meth:`finalize`, which makes ids deterministic
    across runs regardless of union order.
    """

    def __init__(self):
        self.addresses = AddressIndex()
        self._parent = np.arange(_GROW, dtype=np.int64)
        self._rank = np.zeros(_GROW, dtype=np.int8)
        self._users: np.ndarray | None = None
        self.user_count = 0
        self.skipped_inputs = 0

    # -- construction ------------------------------------------------------

    def _ensure_capacity(self, n: int) -> None:
        cap = len(self._parent)
        if n <= cap:
            return
        new_cap = max(n, cap * 2)
        parent = np.arange(new_cap, dtype=np.int64)
        parent[:cap] = self._parent
        rank = np.zeros(new_cap, dtype=np.int8)
        rank[:cap] = self._rank
        self._parent, self._rank = parent, rank

    def intern(self, address: str) -> int:
        idx = self.addresses.intern(address)
        self._ensure_capacity(len(self.addresses))
        return idx

    def union_group(self, indices: Sequence[int]) -> None:
        if self._users is not None:
            raise RuntimeError("clustering already finalized")
        if len(indices) < 2:
            return
        flat = np.asarray(indices, dtype=np.int64)
        offsets = np.array([0, len(flat)], dtype=np.int64)
        _accel.union_groups(self._parent, self._rank, flat, offsets)

    def union_groups(self, flat: np.ndarray, offsets: np.ndarray) -> None:
        """Batched form: group g spans flat[offsets[g]:offsets[g+1]]."""
        if self._users is not None:
            raise RuntimeError("clustering already finalized")
        _accel.union_groups(
            self._parent,
            self._rank,
            np.ascontiguousarray(flat, dtype=np.int64),
            np.ascontiguousarray(offsets, dtype=np.int64),
        )

    # -- queries -----------------------------------------------------------

    def find(self, idx: int) -> int:
        return int(_accel.find_many(self._parent, np.array([idx], dtype=np.int64))[0])

    def finalize(self) -> None:
        """Freeze the forest and assign canonical user ids."""
        if self._users is not None:
            return
        n = len(self.addresses)
        _accel.compress_all(self._parent)
        roots = self._parent[:n]
        # canonical id per root = smallest member index
        canon = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(canon, roots, np.arange(n, dtype=np.int64))
        self._users = canon[roots] if n else np.empty(0, dtype=np.int64)
        self._users.setflags(write=False)
        self.user_count = int(len(np.unique(roots))) if n else 0

    @property
    def finalized(self) -> bool:
        return self._users is not None

    def user_of_index(self, idx: int) -> int:
        if self._users is None:
            raise RuntimeError("finalize() the clustering before reading user ids")
        return int(self._users[idx])

    def user_of(self, address: str) -> int:
        idx = self.addresses.get(address)
        if idx is None:
            raise KeyError(address)
        return self.user_of_index(idx)

    def users(self) -> np.ndarray:
        """Canonical user id per address index (read-only)."""
        if self._users is None:
            raise RuntimeError("finalize() the clustering before reading user ids")
        return self._users

    def partition(self) -> frozenset:
        """The clustering as a frozenset of frozensets of address strings."""
        groups: dict[int, set] = {}
        users = self.users()
        for idx in range(len(self.addresses)):
            groups.setdefault(int(users[idx]), set()).add(self.addresses.name(idx))
        return frozenset(frozenset(g) for g in groups.values())


def _encoded(addr: Address | str) -> str:
    return addr.encoded if isinstance(addr, Address) else addr


def cluster_transactions(
    transactions: Iterable[RawTransaction],
    outpoint_index,
    batch_size: int = 1 << 18,
) -> AddressClustering:
    """Cluster addresses through the common-input-ownership heuristic.

    Input addresses are resolved through the outpoint index; inputs whose
    outpoint is unknown are skipped and tallied in ``skipped_inputs``.
    Output-side addresses are interned too, so addresses never seen on an
    input side end up as singleton users.
    """
    clustering = AddressClustering()
    flat: list[int] = []
    offsets: list[int] = [0]

    def flush():
        if len(offsets) > 1:
            clustering.union_groups(
                np.array(flat, dtype=np.int64), np.array(offsets, dtype=np.int64)
            )
        flat.clear()
        offsets.clear()
        offsets.append(0)

    for tx in transactions:
        resolved, unresolved = resolve_input_addresses(tx, outpoint_index)
        clustering.skipped_inputs += unresolved
        for out in tx.outputs:
            if out.address is not None:
                clustering.intern(out.address.encoded)
        if resolved:
            indices = {clustering.intern(a.encoded) for a in resolved}
            if len(indices) > 1:
                flat.extend(sorted(indices))
                offsets.append(len(flat))
                if len(flat) >= batch_size:
                    flush()
    flush()
    clustering.finalize()
    return clustering


@dataclass
class ReuseHistogram:
    """bins[r] = number of addresses used in exactly r distinct transactions."""

    bins: dict[int, int]
    total_addresses: int

    def total_usages(self) -> int:
        return sum(r * c for r, c in self.bins.items())


def reuse_histogram(
    transactions: Iterable[RawTransaction], outpoint_index
) -> ReuseHistogram:
    """Count, per address, the distinct transactions it appears in.

    An address appearing several times within one transaction (say as two
    outputs, or on both sides) is counted once for that transaction.
    """
    usage: Counter[str] = Counter()
    for tx in transactions:
        resolved, _ = resolve_input_addresses(tx, outpoint_index)
        seen = {a.encoded for a in resolved}
        seen.update(o.address.encoded for o in tx.outputs if o.address is not None)
        usage.update(seen)
    bins: Counter[int] = Counter(usage.values())
    return ReuseHistogram(bins=dict(sorted(bins.items())), total_addresses=len(usage))


def histogram_from_usage_counts(counts: Iterable[int]) -> ReuseHistogram:
    """Build a ReuseHistogram from precomputed per-entity usage counts."""
    bins: Counter[int] = Counter(int(c) for c in counts if c > 0)
    return ReuseHistogram(
        bins=dict(sorted(bins.items())), total_addresses=sum(bins.values())
    )


def time_partition(transactions: Sequence[RawTransaction], parts: int):
    """Split transactions into `parts` contiguous time ranges of equal count.

    Transactions are ordered by timestamp (stable for ties); the parts
    concatenate back to the time-sorted input.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    txs = list(transactions)
    if parts > len(txs):
        raise ValueError(f"cannot split {len(txs)} transactions into {parts} parts")
    txs.sort(key=lambda tx: (tx.timestamp is None, tx.timestamp))
    bounds = np.linspace(0, len(txs), parts + 1).round().astype(int)
    return [txs[bounds[i] : bounds[i + 1]] for i in range(parts)]


# -- exports ---------------------------------------------------------------


def write_clustering_csv(clustering: AddressClustering, path, echo=None) -> None:
    from .csvio import open_report

    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["address", "user_id"])
        users = clustering.users()
        for idx in range(len(clustering.addresses)):
            writer.writerow([clustering.addresses.name(idx), int(users[idx])])


def write_histogram_csv(hist: ReuseHistogram, path, echo=None) -> None:
    from .csvio import open_report

    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "count"])
        for r, count in sorted(hist.bins.items()):
            writer.writerow([r, count])


def read_histogram_csv(path) -> ReuseHistogram:
    from .csvio import iter_report_rows

    bins: dict[int, int] = {}
    for _line, row in iter_report_rows(path, expected_header=["r", "count"]):
        bins[int(row[0])] = int(row[1])
    return ReuseHistogram(bins=dict(sorted(bins.items())),
                          total_addresses=sum(bins.values()))
