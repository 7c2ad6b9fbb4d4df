"""Bit-exact decoding of raw Bitcoin block files.

Handles the pre-segwit wire format: framed block records (magic bytes,
little-endian record length, 80-byte header, transactions), variable
length integers, and P2PKH output scripts. Only P2PKH scripts map to
addresses; every other script type yields an absent address and its value
is later attributed to a reserved sink user so flows stay conserved.

Input-side ownership is resolved through an outpoint index built in a
first pass over all outputs; script_sig bytes are never interpreted.
"""

from __future__ import annotations

import hashlib
import logging
import mmap
import os
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .errors import DecodeError

log = logging.getLogger(__name__)

MAGIC = b"\xf9\xbe\xb4\xd9"
HEADER_SIZE = 80
COINBASE_PREV_TXID = b"\x00" * 32
COINBASE_PREV_VOUT = 0xFFFFFFFF

_B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(_B58_ALPHABET)}


def sha256d(data: bytes) -> bytes:
    """Double SHA-256, the hash used for txids, block hashes and checksums."""
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def base58check_encode(version: int, payload: bytes) -> str:
    data = bytes([version]) + payload
    data += sha256d(data)[:4]
    n = int.from_bytes(data, "big")
    chars = []
    while n:
        n, rem = divmod(n, 58)
        chars.append(_B58_ALPHABET[rem])
    pad = len(data) - len(data.lstrip(b"\x00"))
    return "1" * pad + "".join(reversed(chars))


def base58check_decode(encoded: str) -> tuple[int, bytes]:
    """Inverse of :func:`base58check_encode`; validates the 4-byte checksum."""
    n = 0
    for c in encoded:
        if c not in _B58_INDEX:
            raise ValueError(f"invalid base58 character {c!r}")
        n = n * 58 + _B58_INDEX[c]
    body = n.to_bytes((n.bit_length() + 7) // 8, "big")
    pad = len(encoded) - len(encoded.lstrip("1"))
    data = b"\x00" * pad + body
    if len(data) < 5:
        raise ValueError("base58 string too short")
    payload, checksum = data[:-4], data[-4:]
    if sha256d(payload)[:4] != checksum:
        raise ValueError("base58 checksum mismatch")
    return payload[0], payload[1:]


@dataclass(frozen=True)
class Address:
    """A P2PKH payment destination: 20-byte hash plus its Base58Check form."""

    hash160: bytes
    encoded: str

    @classmethod
    def from_hash160(cls, hash160: bytes) -> "Address":
        return cls(hash160=hash160, encoded=base58check_encode(0x00, hash160))


@dataclass(frozen=True)
class TxInput:
    prev_txid: bytes  # wire order (reversed relative to display hex)
    prev_vout: int
    script_sig: bytes


@dataclass(frozen=True)
class TxOutput:
    value: int  # satoshi
    script_pubkey: bytes
    address: Address | None


@dataclass(frozen=True)
class RawTransaction:
    txid: bytes  # wire order
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]
    is_coinbase: bool
    # Block time, attached when parsing inside a block; not part of the
    # wire content, so it is excluded from equality.
    timestamp: int | None = field(default=None, compare=False)

    @property
    def txid_hex(self) -> str:
        """Display form: byte-reversed hex, as block explorers show it."""
        return self.txid[::-1].hex()


@dataclass
class Block:
    timestamp: int
    transactions: list[RawTransaction]
    height_hint: int | None = None


def parse_varint(data, offset: int = 0) -> tuple[int, int]:
    """Decode a Bitcoin variable-length integer.

    Returns (value, consumed) where consumed is 1, 3, 5 or 9 bytes.
    """
    if offset >= len(data):
        raise DecodeError("varint: empty buffer", offset)
    first = data[offset]
    if first < 0xFD:
        return first, 1
    width = {0xFD: 2, 0xFE: 4, 0xFF: 8}[first]
    end = offset + 1 + width
    if end > len(data):
        raise DecodeError("varint: truncated", offset)
    return int.from_bytes(data[offset + 1 : end], "little"), 1 + width


def extract_p2pkh_address(script_pubkey: bytes) -> Address | None:
    """Return the Address iff the script is exactly the 25-byte P2PKH pattern."""
    if (
        len(script_pubkey) == 25
        and script_pubkey[0] == 0x76
        and script_pubkey[1] == 0xA9
        and script_pubkey[2] == 0x14
        and script_pubkey[23] == 0x88
        and script_pubkey[24] == 0xAC
    ):
        return Address.from_hash160(bytes(script_pubkey[3:23]))
    return None


def _take(data, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(data):
        raise DecodeError(f"truncated {what}", offset)
    return bytes(data[offset : offset + n])


def parse_transaction(data, offset: int = 0) -> tuple[RawTransaction, int]:
    """Decode one transaction starting at its version field.

    The txid is the double SHA-256 of exactly the consumed bytes. Segwit
    serialization (marker byte 0x00 after the version) is rejected; the
    supported corpus predates it.
    """
    start = offset
    _take(data, offset, 4, "transaction version")
    offset += 4

    n_in, consumed = parse_varint(data, offset)
    if n_in == 0:
        raise DecodeError("segwit transaction records are not supported", offset)
    offset += consumed

    inputs = []
    for _ in range(n_in):
        prev_txid = _take(data, offset, 32, "input outpoint txid")
        offset += 32
        prev_vout = struct.unpack("<I", _take(data, offset, 4, "input outpoint index"))[0]
        offset += 4
        script_len, consumed = parse_varint(data, offset)
        offset += consumed
        script_sig = _take(data, offset, script_len, "input script")
        offset += script_len
        _take(data, offset, 4, "input sequence")
        offset += 4
        inputs.append(TxInput(prev_txid, prev_vout, script_sig))

    n_out, consumed = parse_varint(data, offset)
    offset += consumed
    outputs = []
    for _ in range(n_out):
        value = struct.unpack("<Q", _take(data, offset, 8, "output value"))[0]
        offset += 8
        script_len, consumed = parse_varint(data, offset)
        offset += consumed
        script_pubkey = _take(data, offset, script_len, "output script")
        offset += script_len
        outputs.append(TxOutput(value, script_pubkey, extract_p2pkh_address(script_pubkey)))

    _take(data, offset, 4, "locktime")
    offset += 4

    is_coinbase = (
        len(inputs) == 1
        and inputs[0].prev_txid == COINBASE_PREV_TXID
        and inputs[0].prev_vout == COINBASE_PREV_VOUT
    )
    tx = RawTransaction(
        txid=sha256d(bytes(data[start:offset])),
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        is_coinbase=is_coinbase,
    )
    return tx, offset - start


def parse_block(data, offset: int = 0) -> tuple[Block, int]:
    """Decode an 80-byte header plus its transactions."""
    start = offset
    header = _take(data, offset, HEADER_SIZE, "block header")
    timestamp = struct.unpack("<I", header[68:72])[0]
    if timestamp <= 0:
        raise DecodeError("block timestamp must be positive", offset + 68)
    offset += HEADER_SIZE

    tx_count, consumed = parse_varint(data, offset)
    if tx_count == 0:
        raise DecodeError("block without transactions", offset)
    offset += consumed

    transactions = []
    for i in range(tx_count):
        tx, consumed = parse_transaction(data, offset)
        offset += consumed
        transactions.append(
            RawTransaction(tx.txid, tx.inputs, tx.outputs, tx.is_coinbase, timestamp=timestamp)
        )
    if not transactions[0].is_coinbase:
        raise DecodeError("first transaction in block is not a coinbase", start + HEADER_SIZE)
    return Block(timestamp=timestamp, transactions=transactions), offset - start


ErrorCallback = Callable[[str, int, str], None]


def scan_block_files(
    directory, on_error: ErrorCallback | None = None, pattern: str = ""
) -> Iterator[Block]:
    """Stream blocks from every raw block file in a directory, in file order.

    Zero padding between records is skipped. A bad magic sequence or an
    undecodable record is reported through ``on_error(file, offset, message)``
    (default: a warning log) and scanning resynchronizes on the next magic
    sequence, so one corrupt record never kills the run.

    Memory use is bounded by one record at a time: files are memory-mapped
    and only the current record is materialized.
    """

    def report(path: str, offset: int, message: str) -> None:
        if on_error is not None:
            on_error(path, offset, message)
        else:
            log.warning("%s @%d: %s", path, offset, message)

    names = sorted(
        f for f in os.listdir(directory) if not pattern or f.startswith(pattern)
    )
    height = 0
    for name in names:
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            continue
        if os.path.getsize(path) == 0:
            continue
        with open(path, "rb") as fh, mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ) as buf:
            offset = 0
            size = len(buf)
            while offset < size:
                if buf[offset] == 0:  # zero padding between records
                    offset += 1
                    continue
                if buf[offset : offset + 4] != MAGIC:
                    report(path, offset, "bad magic bytes")
                    nxt = buf.find(MAGIC, offset + 1)
                    if nxt < 0:
                        break
                    offset = nxt
                    continue
                if offset + 8 > size:
                    report(path, offset, "truncated record header")
                    break
                (length,) = struct.unpack("<I", buf[offset + 4 : offset + 8])
                body_start = offset + 8
                if body_start + length > size:
                    report(path, offset, "record length exceeds file size")
                    break
                record = buf[body_start : body_start + length]
                try:
                    block, consumed = parse_block(record)
                    if consumed != length:
                        raise DecodeError(
                            f"record length {length} but block consumed {consumed}", 0
                        )
                except DecodeError as exc:
                    report(path, body_start + (exc.offset or 0), str(exc))
                else:
                    block.height_hint = height
                    height += 1
                    yield block
                offset = body_start + length


def build_outpoint_index(transactions: Iterable[RawTransaction]) -> dict:
    """Map every (txid, vout) outpoint to its output's Address (or None)."""
    index: dict[tuple[bytes, int], Address | None] = {}
    for tx in transactions:
        for vout, output in enumerate(tx.outputs):
            index[(tx.txid, vout)] = output.address
    return index


def resolve_input_addresses(tx: RawTransaction, outpoint_index) -> tuple[list[Address], int]:
    """Addresses owning a transaction's inputs, via outpoint lookup.

    Returns (addresses, unresolved) where unresolved counts inputs whose
    referenced outpoint is missing from the index. Inputs that resolve to
    an address-less output (non-P2PKH) contribute nothing and are not
    counted as unresolved. Coinbase pseudo-inputs resolve to nothing.
    """
    if tx.is_coinbase:
        return [], 0
    addresses = []
    unresolved = 0
    for inp in tx.inputs:
        key = (inp.prev_txid, inp.prev_vout)
        if key not in outpoint_index:
            unresolved += 1
            continue
        addr = outpoint_index[key]
        if addr is not None:
            addresses.append(addr)
    return addresses, unresolved
