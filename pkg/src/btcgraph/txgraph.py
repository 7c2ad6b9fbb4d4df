"""User-level directed transaction multigraph and per-node metrics.

Nodes are user entities (clusters of addresses, or pre-clustered ids from
an edge list); each edge is one transaction output: source user pays
destination user some satoshi value at a timestamp. Self-edges (change
returning to the same cluster) are dropped entirely. Construction is
single-writer; finalized graphs are immutable and safe to read from
anywhere.

Two reserved endpoints use negative external ids so they survive CSV
round-trips: -1 is the coinbase source (new coins), -2 the unknown
sink/source for value flowing to or from scripts that carry no address.
Both are excluded from classification and centrality downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .blockparse import Block, RawTransaction, resolve_input_addresses
from .cluster import AddressClustering
from .errors import IngestError

COINBASE_EXTERNAL_ID = -1
UNKNOWN_EXTERNAL_ID = -2

EDGE_LIST_HEADER = ["src_user", "dst_user", "timestamp_unix", "value_satoshi"]

_CACHE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NodeMetrics:
    in_degree: int
    out_degree: int
    in_value: int
    out_value: int
    first_ts: int
    last_ts: int


class MetricsTable:
    """Column-oriented NodeMetrics for all nodes of a graph."""

    __slots__ = ("in_degree", "out_degree", "in_value", "out_value", "first_ts", "last_ts")

    def __init__(self, in_degree, out_degree, in_value, out_value, first_ts, last_ts):
        self.in_degree = in_degree
        self.out_degree = out_degree
        self.in_value = in_value
        self.out_value = out_value
        self.first_ts = first_ts
        self.last_ts = last_ts

    def __len__(self) -> int:
        return len(self.in_degree)

    def node(self, i: int) -> NodeMetrics:
        return NodeMetrics(
            in_degree=int(self.in_degree[i]),
            out_degree=int(self.out_degree[i]),
            in_value=int(self.in_value[i]),
            out_value=int(self.out_value[i]),
            first_ts=int(self.first_ts[i]),
            last_ts=int(self.last_ts[i]),
        )

    def as_dict(self) -> dict[int, NodeMetrics]:
        return {i: self.node(i) for i in range(len(self))}


class TxGraph:
    """Directed multigraph with dense node ids 0..node_count-1."""

    def __init__(self, node_count, src, dst, value, timestamp, external_ids=None):
        self.node_count = int(node_count)
        self.src = np.ascontiguousarray(src, dtype=np.int64)
        self.dst = np.ascontiguousarray(dst, dtype=np.int64)
        self.value = np.ascontiguousarray(value, dtype=np.int64)
        self.timestamp = np.ascontiguousarray(timestamp, dtype=np.int64)
        if external_ids is None:
            external_ids = np.arange(self.node_count, dtype=np.int64)
        self.external_ids = np.ascontiguousarray(external_ids, dtype=np.int64)
        if not (len(self.src) == len(self.dst) == len(self.value) == len(self.timestamp)):
            raise ValueError("edge arrays must have equal length")
        if len(self.external_ids) != self.node_count:
            raise ValueError("external_ids must cover every node")
        if len(self.src) and (self.src == self.dst).any():
            raise ValueError("self-edges are not allowed")
        if len(self.value) and self.value.min() < 0:
            raise ValueError("edge values must be non-negative")
        for arr in (self.src, self.dst, self.value, self.timestamp, self.external_ids):
            arr.setflags(write=False)

    @property
    def edge_count(self) -> int:
        return len(self.src)

    def reserved_nodes(self) -> list[int]:
        """Dense ids of the coinbase/unknown endpoints, when present."""
        return [int(i) for i in np.flatnonzero(self.external_ids < 0)]

    def with_values(self, value) -> "TxGraph":
        return TxGraph(self.node_count, self.src, self.dst, value, self.timestamp,
                       self.external_ids)

    def without_nodes(self, drop) -> tuple["TxGraph", np.ndarray]:
        """Subgraph with `drop` nodes (dense ids) and their edges removed.

        Returns (subgraph, kept) where kept[i] is the original dense id of
        the subgraph's node i.
        """
        drop = set(int(d) for d in drop)
        keep_mask = np.ones(self.node_count, dtype=bool)
        for d in drop:
            keep_mask[d] = False
        kept = np.flatnonzero(keep_mask)
        remap = np.full(self.node_count, -1, dtype=np.int64)
        remap[kept] = np.arange(len(kept), dtype=np.int64)
        edge_mask = keep_mask[self.src] & keep_mask[self.dst]
        return (
            TxGraph(
                len(kept),
                remap[self.src[edge_mask]],
                remap[self.dst[edge_mask]],
                self.value[edge_mask],
                self.timestamp[edge_mask],
                self.external_ids[kept],
            ),
            kept,
        )

    # -- binary cache (internal, versioned) --------------------------------

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            format_version=np.int64(_CACHE_FORMAT_VERSION),
            node_count=np.int64(self.node_count),
            src=self.src,
            dst=self.dst,
            value=self.value,
            timestamp=self.timestamp,
            external_ids=self.external_ids,
        )

    @classmethod
    def load(cls, path) -> "TxGraph":
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != _CACHE_FORMAT_VERSION:
                raise ValueError(f"unsupported graph cache version {version}")
            return cls(
                int(data["node_count"]),
                data["src"],
                data["dst"],
                data["value"],
                data["timestamp"],
                data["external_ids"],
            )


def build_user_graph(
    blocks_or_txs: Iterable, clustering: AddressClustering, outpoint_index
) -> TxGraph:
    """Build the user graph from parsed transactions plus a clustering.

    One edge per transaction output: the source is the user owning the
    inputs (the coinbase source for coinbase transactions, the unknown
    node when no input resolves), the destination the user owning the
    output address (unknown when the script carries none). Outputs paying
    back into the source cluster are change and produce no edge.
    """
    if not clustering.finalized:
        raise ValueError("clustering must be finalized")

    src_ext: list[int] = []
    dst_ext: list[int] = []
    values: list[int] = []
    times: list[int] = []

    for item in blocks_or_txs:
        txs = item.transactions if isinstance(item, Block) else [item]
        for tx in txs:
            ts = tx.timestamp if tx.timestamp is not None else 0
            if tx.is_coinbase:
                src = COINBASE_EXTERNAL_ID
            else:
                resolved, _ = resolve_input_addresses(tx, outpoint_index)
                src = (
                    clustering.user_of(resolved[0].encoded)
                    if resolved
                    else UNKNOWN_EXTERNAL_ID
                )
            for out in tx.outputs:
                if out.address is not None:
                    dst = clustering.user_of(out.address.encoded)
                else:
                    dst = UNKNOWN_EXTERNAL_ID
                if dst == src:
                    continue  # change back to the same cluster
                src_ext.append(src)
                dst_ext.append(dst)
                values.append(out.value)
                times.append(ts)

    return _densify(
        np.array(src_ext, dtype=np.int64),
        np.array(dst_ext, dtype=np.int64),
        np.array(values, dtype=np.int64),
        np.array(times, dtype=np.int64),
    )


def _densify(src_ext, dst_ext, values, times) -> TxGraph:
    """Map external ids (sorted ascending) onto dense 0..n-1 ids."""
    external = np.unique(np.concatenate([src_ext, dst_ext])) if len(src_ext) else np.empty(0, np.int64)
    src = np.searchsorted(external, src_ext)
    dst = np.searchsorted(external, dst_ext)
    return TxGraph(len(external), src, dst, values, times, external_ids=external)


def ingest_edge_list(path, strict: bool = True) -> tuple[TxGraph, list[tuple[int, str]]]:
    """Read the canonical edge-list CSV into a graph.

    Returns (graph, rejects); in strict mode any malformed row raises
    IngestError instead, so rejects is always empty. Node ids are
    densified by sorted external id, which makes every derived metric
    independent of row order.
    """
    src, dst, val, ts = [], [], [], []
    rejects: list[tuple[int, str]] = []

    def bad(line: int, reason: str):
        if strict:
            raise IngestError(reason, line)
        rejects.append((line, reason))

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header_seen = False
        for line_no, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if not header_seen:
                if row != EDGE_LIST_HEADER:
                    raise IngestError(
                        f"expected header {EDGE_LIST_HEADER}, found {row}", line_no
                    )
                header_seen = True
                continue
            if len(row) != 4:
                bad(line_no, f"expected 4 fields, found {len(row)}")
                continue
            try:
                s, d, t, v = (int(x) for x in row)
            except ValueError:
                bad(line_no, f"non-numeric field in {row}")
                continue
            if v < 0:
                bad(line_no, f"negative value {v}")
                continue
            if s == d:
                bad(line_no, f"self-edge on user {s}")
                continue
            src.append(s)
            dst.append(d)
            ts.append(t)
            val.append(v)
    if not header_seen:
        raise IngestError("missing header row", 1)
    graph = _densify(
        np.array(src, dtype=np.int64),
        np.array(dst, dtype=np.int64),
        np.array(val, dtype=np.int64),
        np.array(ts, dtype=np.int64),
    )
    return graph, rejects


def node_metrics(graph: TxGraph) -> MetricsTable:
    """Exact degree/value sums and first/last activity per node."""
    n = graph.node_count
    in_degree = np.bincount(graph.dst, minlength=n).astype(np.int64)
    out_degree = np.bincount(graph.src, minlength=n).astype(np.int64)
    in_value = np.zeros(n, dtype=np.int64)
    out_value = np.zeros(n, dtype=np.int64)
    np.add.at(in_value, graph.dst, graph.value)
    np.add.at(out_value, graph.src, graph.value)

    sentinel = np.iinfo(np.int64).max
    first_ts = np.full(n, sentinel, dtype=np.int64)
    last_ts = np.full(n, -1, dtype=np.int64)
    for endpoint in (graph.src, graph.dst):
        np.minimum.at(first_ts, endpoint, graph.timestamp)
        np.maximum.at(last_ts, endpoint, graph.timestamp)
    isolated = last_ts < 0
    first_ts[isolated] = 0
    last_ts[isolated] = 0
    return MetricsTable(in_degree, out_degree, in_value, out_value, first_ts, last_ts)


def write_edge_list_csv(graph: TxGraph, path, echo=None) -> None:
    from .csvio import open_report

    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EDGE_LIST_HEADER)
        ext = graph.external_ids
        for i in range(graph.edge_count):
            writer.writerow(
                [
                    int(ext[graph.src[i]]),
                    int(ext[graph.dst[i]]),
                    int(graph.timestamp[i]),
                    int(graph.value[i]),
                ]
            )
