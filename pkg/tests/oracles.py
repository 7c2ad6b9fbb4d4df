"""Independent oracles used to derive expected values.

Everything here is deliberately written from first principles (brute
force, dense linear algebra, fsum arithmetic) and never imports the
package, so each oracle stays independent of the code path it checks.
"""

from __future__ import annotations

import hashlib
import math
import struct
from collections import defaultdict, deque

import numpy as np

# ---------------------------------------------------------------------------
# wire-format serialization (round-trip oracle for the parser)

MAGIC = b"\xf9\xbe\xb4\xd9"


def sha256d(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def encode_varint(value: int) -> bytes:
    if value < 0xFD:
        return bytes([value])
    if value <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", value)
    if value <= 0xFFFFFFFF:
        return b"\xfe" + struct.pack("<I", value)
    return b"\xff" + struct.pack("<Q", value)


def serialize_tx(inputs, outputs, version=1, locktime=0) -> bytes:
    """Serialize a transaction from plain tuples.

    inputs: list of (prev_txid 32B, vout int, script_sig bytes)
    outputs: list of (value int, script_pubkey bytes)
    """
    out = bytearray(struct.pack("<I", version))
    out += encode_varint(len(inputs))
    for prev_txid, vout, script_sig in inputs:
        assert len(prev_txid) == 32
        out += prev_txid
        out += struct.pack("<I", vout)
        out += encode_varint(len(script_sig))
        out += script_sig
        out += struct.pack("<I", 0xFFFFFFFF)
    out += encode_varint(len(outputs))
    for value, script_pubkey in outputs:
        out += struct.pack("<Q", value)
        out += encode_varint(len(script_pubkey))
        out += script_pubkey
    out += struct.pack("<I", locktime)
    return bytes(out)


def coinbase_input(script_sig=b"\x51"):
    return (b"\x00" * 32, 0xFFFFFFFF, script_sig)


def serialize_block(timestamp, tx_blobs, prev_hash=b"\x00" * 32) -> bytes:
    """80-byte header + varint tx count + concatenated raw transactions."""
    merkle = sha256d(tx_blobs[0]) if tx_blobs else b"\x00" * 32
    header = struct.pack("<I", 1) + prev_hash + merkle + struct.pack("<III", timestamp, 0x1D00FFFF, 0)
    body = encode_varint(len(tx_blobs)) + b"".join(tx_blobs)
    return header + body


def framed_record(block_blob: bytes) -> bytes:
    return MAGIC + struct.pack("<I", len(block_blob)) + block_blob


def p2pkh_script(hash160: bytes) -> bytes:
    assert len(hash160) == 20
    return b"\x76\xa9\x14" + hash160 + b"\x88\xac"


# ---------------------------------------------------------------------------
# Base58Check, computed by schoolbook long division over the digit list
# (the package uses big-integer divmod, a different algorithm)

_B58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"


def b58check_encode(version: int, payload: bytes) -> str:
    data = bytes([version]) + payload
    data += sha256d(data)[:4]
    digits = list(data)
    encoded = []
    while any(digits):
        remainder = 0
        quotient = []
        for d in digits:
            acc = remainder * 256 + d
            quotient.append(acc // 58)
            remainder = acc % 58
        encoded.append(_B58[remainder])
        while quotient and quotient[0] == 0:
            quotient.pop(0)
        digits = quotient
    pad = 0
    for b in data:
        if b:
            break
        pad += 1
    return "1" * pad + "".join(reversed(encoded))


# ---------------------------------------------------------------------------
# clustering: BFS connected components of the input-set clique hypergraph


def bfs_components(groups):
    """Partition all members of `groups` (iterables of hashables).

    Each group is a clique; the result is the set of connected components,
    returned as a frozenset of frozensets.
    """
    member_groups = defaultdict(list)
    for gi, group in enumerate(groups):
        for member in group:
            member_groups[member].append(gi)
    group_members = [list(g) for g in groups]
    seen = set()
    components = []
    for start in member_groups:
        if start in seen:
            continue
        comp = set()
        queue = deque([start])
        seen.add(start)
        while queue:
            node = queue.popleft()
            comp.add(node)
            for gi in member_groups[node]:
                for other in group_members[gi]:
                    if other not in seen:
                        seen.add(other)
                        queue.append(other)
        components.append(frozenset(comp))
    return frozenset(components)


# ---------------------------------------------------------------------------
# graph metrics: plain per-edge scan into dicts


def edge_scan_metrics(edges):
    """edges: iterable of (src, dst, value, ts). Returns dict node -> dict."""
    nodes = {}

    def entry(u):
        return nodes.setdefault(
            u,
            {"in_degree": 0, "out_degree": 0, "in_value": 0, "out_value": 0,
             "first_ts": None, "last_ts": None},
        )

    for src, dst, value, ts in edges:
        s, d = entry(src), entry(dst)
        s["out_degree"] += 1
        s["out_value"] += value
        d["in_degree"] += 1
        d["in_value"] += value
        for e in (s, d):
            e["first_ts"] = ts if e["first_ts"] is None else min(e["first_ts"], ts)
            e["last_ts"] = ts if e["last_ts"] is None else max(e["last_ts"], ts)
    return nodes


# ---------------------------------------------------------------------------
# percentile / statistics


def nearest_rank(values, q) -> float:
    """Value at 1-based rank ceil(q*n) of the ascending sort."""
    ordered = sorted(values)
    idx = math.ceil(q * len(ordered))
    return ordered[idx - 1]


def pearson_fsum(x, y) -> float:
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = math.fsum((a - mx) ** 2 for a in x)
    vy = math.fsum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def brute_active_count(intervals, t) -> int:
    return sum(1 for first, last in intervals if first <= t <= last)


# ---------------------------------------------------------------------------
# centrality oracles: dense-matrix iterations, no sparse shortcuts


def dense_pagerank(n, edges, damping=0.85, value_weights=None, iters=2000):
    """Power iteration on the dense Google matrix to machine precision.

    edges: list of (src, dst); multiplicities matter. Dangling columns are
    replaced by uniform redistribution.
    """
    W = np.zeros((n, n))
    for k, (s, d) in enumerate(edges):
        w = 1.0 if value_weights is None else float(value_weights[k])
        W[d, s] += w
    col = W.sum(axis=0)
    M = np.zeros((n, n))
    nz = col > 0
    M[:, nz] = W[:, nz] / col[nz]
    M[:, ~nz] = 1.0 / n
    x = np.full(n, 1.0 / n)
    for _ in range(iters):
        x_new = damping * (M @ x) + (1.0 - damping) / n
        x_new /= x_new.sum()
        if np.abs(x_new - x).sum() < 1e-15:
            x = x_new
            break
        x = x_new
    return x


def eig_hits(n, edges):
    """Principal eigenvectors of A A^T (hubs) and A^T A (authorities)."""
    A = np.zeros((n, n))
    for s, d in edges:
        A[s, d] += 1.0
    hub_vals, hub_vecs = np.linalg.eigh(A @ A.T)
    auth_vals, auth_vecs = np.linalg.eigh(A.T @ A)
    hubs = np.abs(hub_vecs[:, -1])
    auths = np.abs(auth_vecs[:, -1])
    hubs /= np.linalg.norm(hubs)
    auths /= np.linalg.norm(auths)
    return hubs, auths


def eig_gap_ok(n, edges, rel=1e-3) -> bool:
    """True when the top-two eigenvalues of A A^T are clearly separated."""
    A = np.zeros((n, n))
    for s, d in edges:
        A[s, d] += 1.0
    vals = np.linalg.eigvalsh(A @ A.T)
    if vals[-1] <= 0:
        return False
    return (vals[-1] - vals[-2]) / vals[-1] > rel


# ---------------------------------------------------------------------------
# power-law histograms with a known exponent


def analytic_power_histogram(exponent, r_max=1000, scale=1e12):
    """bins[r] = round(scale * r**-exponent); exact analytic shape."""
    return {r: int(round(scale * r ** -exponent)) for r in range(1, r_max + 1)}


def multinomial_power_histogram(exponent, n_addresses, r_max, seed):
    r = np.arange(1, r_max + 1)
    p = r.astype(float) ** -exponent
    p /= p.sum()
    counts = np.random.default_rng(seed).multinomial(n_addresses, p)
    return {int(rv): int(c) for rv, c in zip(r, counts) if c > 0}
