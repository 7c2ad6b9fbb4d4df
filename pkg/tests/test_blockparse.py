import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from btcgraph import blockparse
from btcgraph.blockparse import (
    Address,
    base58check_decode,
    base58check_encode,
    build_outpoint_index,
    extract_p2pkh_address,
    parse_block,
    parse_transaction,
    parse_varint,
    resolve_input_addresses,
    scan_block_files,
)
from btcgraph.errors import DecodeError

# ---------------------------------------------------------------------------
# varint


def test_varint_zero():
    assert parse_varint(bytes([0x00])) == (0, 1)


def test_varint_single_byte_max():
    # frozen from the independent encoder: encode_varint(252) == b"\xfc"
    assert oracles.encode_varint(252) == b"\xfc"
    assert parse_varint(b"\xfc") == (252, 1)


def test_varint_three_byte():
    assert oracles.encode_varint(253) == b"\xfd\xfd\x00"
    assert parse_varint(b"\xfd\xfd\x00") == (253, 3)


@pytest.mark.parametrize("buf", [b"", b"\xfd", b"\xfd\x01", b"\xfe\x01\x02", b"\xff" + b"\x00" * 7])
def test_varint_truncated(buf):
    with pytest.raises(DecodeError):
        parse_varint(buf)


def test_varint_error_names_offset():
    with pytest.raises(DecodeError) as err:
        parse_varint(b"\x00\xfd\x00", offset=1)
    assert err.value.offset == 1
    assert "offset 1" in str(err.value)


@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_varint_round_trip(value):
    encoded = oracles.encode_varint(value)
    assert parse_varint(encoded) == (value, len(encoded))


# ---------------------------------------------------------------------------
# transactions


def _hash160(i: int) -> bytes:
    return i.to_bytes(20, "big")


def test_parse_transaction_one_in_one_out():
    script = oracles.p2pkh_script(_hash160(7))
    blob = oracles.serialize_tx(
        inputs=[(b"\x11" * 32, 3, b"\xab\xcd")],
        outputs=[(123456, script)],
    )
    tx, consumed = parse_transaction(blob)
    assert consumed == len(blob)
    assert tx.txid == oracles.sha256d(blob)
    assert not tx.is_coinbase
    assert len(tx.inputs) == 1
    assert tx.inputs[0].prev_txid == b"\x11" * 32
    assert tx.inputs[0].prev_vout == 3
    assert tx.inputs[0].script_sig == b"\xab\xcd"
    assert len(tx.outputs) == 1
    assert tx.outputs[0].value == 123456
    assert tx.outputs[0].script_pubkey == script
    assert tx.outputs[0].address == Address.from_hash160(_hash160(7))


def test_parse_transaction_truncated_mid_script():
    blob = oracles.serialize_tx(
        inputs=[(b"\x11" * 32, 0, b"\x00" * 40)],
        outputs=[(5, b"")],
    )
    with pytest.raises(DecodeError):
        parse_transaction(blob[: 4 + 1 + 32 + 4 + 1 + 10])


def test_parse_transaction_rejects_segwit_marker():
    # marker 0x00 + flag 0x01 right after the version
    blob = b"\x01\x00\x00\x00" + b"\x00\x01" + b"\x00" * 40
    with pytest.raises(DecodeError, match="segwit"):
        parse_transaction(blob)


@st.composite
def transactions(draw):
    n_in = draw(st.integers(min_value=1, max_value=4))
    n_out = draw(st.integers(min_value=0, max_value=4))
    inputs = [
        (
            draw(st.binary(min_size=32, max_size=32)),
            draw(st.integers(min_value=0, max_value=0xFFFFFFFE)),
            draw(st.binary(max_size=64)),
        )
        for _ in range(n_in)
    ]
    outputs = []
    for _ in range(n_out):
        value = draw(st.integers(min_value=0, max_value=21_000_000 * 10**8))
        if draw(st.booleans()):
            script = oracles.p2pkh_script(draw(st.binary(min_size=20, max_size=20)))
        else:
            script = draw(st.binary(max_size=80))
        outputs.append((value, script))
    return inputs, outputs


@settings(max_examples=150, deadline=None)
@given(transactions())
def test_parse_round_trips_serialized_transactions(tx):
    inputs, outputs = tx
    blob = oracles.serialize_tx(inputs, outputs)
    parsed, consumed = parse_transaction(blob)
    assert consumed == len(blob)
    assert [(i.prev_txid, i.prev_vout, i.script_sig) for i in parsed.inputs] == inputs
    assert [(o.value, o.script_pubkey) for o in parsed.outputs] == outputs
    for out in parsed.outputs:
        expected = extract_p2pkh_address(out.script_pubkey)
        assert out.address == expected


def test_coinbase_detection():
    blob = oracles.serialize_tx(
        inputs=[oracles.coinbase_input()],
        outputs=[(50 * 10**8, oracles.p2pkh_script(_hash160(1)))],
    )
    tx, _ = parse_transaction(blob)
    assert tx.is_coinbase
    # same prev txid but a real vout index is not a coinbase
    blob2 = oracles.serialize_tx(
        inputs=[(b"\x00" * 32, 0, b"")],
        outputs=[(1, b"")],
    )
    tx2, _ = parse_transaction(blob2)
    assert not tx2.is_coinbase


# ---------------------------------------------------------------------------
# addresses


def test_p2pkh_zero_payload_matches_base58_oracle():
    script = oracles.p2pkh_script(b"\x00" * 20)
    address = extract_p2pkh_address(script)
    assert address is not None
    assert oracles.b58check_encode(0x00, b"\x00" * 20) == "1111111111111111111114oLvT2"
    assert address.encoded == "1111111111111111111114oLvT2"


def test_non_payment_scripts_have_no_address():
    assert extract_p2pkh_address(b"") is None
    assert extract_p2pkh_address(b"\x6a\x04test") is None  # data carrier
    # one byte short of the template
    assert extract_p2pkh_address(b"\x76\xa9\x14" + b"\x00" * 19 + b"\x88\xac") is None


@given(st.binary(min_size=20, max_size=20))
def test_base58check_against_oracle_and_round_trip(payload):
    encoded = base58check_encode(0x00, payload)
    assert encoded == oracles.b58check_encode(0x00, payload)
    version, decoded = base58check_decode(encoded)
    assert version == 0
    assert decoded == payload


def test_base58check_rejects_bad_checksum():
    encoded = base58check_encode(0x00, b"\x01" * 20)
    corrupted = encoded[:-1] + ("2" if encoded[-1] != "2" else "3")
    with pytest.raises(ValueError):
        base58check_decode(corrupted)


# ---------------------------------------------------------------------------
# blocks and files


def test_parse_genesis_block(genesis_bytes):
    from conftest import GENESIS_TIMESTAMP, GENESIS_TXID_HEX

    block, consumed = parse_block(genesis_bytes)
    assert consumed == len(genesis_bytes)
    assert block.timestamp == GENESIS_TIMESTAMP
    assert len(block.transactions) == 1
    tx = block.transactions[0]
    assert tx.is_coinbase
    assert tx.txid_hex == GENESIS_TXID_HEX
    # single-transaction block: the header's merkle root IS the txid
    assert genesis_bytes[36:68] == tx.txid
    assert len(tx.outputs) == 1
    assert tx.outputs[0].value == 5_000_000_000
    assert tx.outputs[0].address is None  # pay-to-pubkey, not P2PKH
    assert tx.timestamp == GENESIS_TIMESTAMP


def test_scan_single_genesis_file(tmp_path, genesis_bytes):
    (tmp_path / "blk00000.dat").write_bytes(oracles.framed_record(genesis_bytes))
    blocks = list(scan_block_files(tmp_path))
    assert len(blocks) == 1
    assert len(blocks[0].transactions) == 1
    assert blocks[0].height_hint == 0


def test_scan_empty_file_is_empty_stream(tmp_path):
    (tmp_path / "blk00000.dat").write_bytes(b"")
    assert list(scan_block_files(tmp_path)) == []


def _synthetic_block(timestamp, n_payments, start=0):
    txs = [
        oracles.serialize_tx(
            [oracles.coinbase_input()],
            [(50 * 10**8, oracles.p2pkh_script(_hash160(1000 + start)))],
        )
    ]
    for k in range(n_payments):
        txs.append(
            oracles.serialize_tx(
                [(bytes([k + start % 200]) + b"\x00" * 31, 0, b"")],
                [(100 + k, oracles.p2pkh_script(_hash160(start + k)))],
            )
        )
    return oracles.serialize_block(timestamp, txs)


def test_scan_three_blocks_in_order_with_padding(tmp_path):
    blobs = [_synthetic_block(100 + i, 2, start=10 * i) for i in range(3)]
    data = (
        oracles.framed_record(blobs[0])
        + b"\x00" * 17
        + oracles.framed_record(blobs[1])
        + b"\x00" * 3
        + oracles.framed_record(blobs[2])
    )
    (tmp_path / "blk00000.dat").write_bytes(data)
    blocks = list(scan_block_files(tmp_path))
    assert [b.timestamp for b in blocks] == [100, 101, 102]
    assert [b.height_hint for b in blocks] == [0, 1, 2]
    # position exactness: framed records plus padding cover the file
    consumed = sum(8 + len(blob) for blob in blobs) + 17 + 3
    assert consumed == len(data)


def test_scan_resynchronizes_after_bad_magic(tmp_path):
    good = _synthetic_block(100, 1)
    garbage = b"\xde\xad\xbe\xef" * 5
    (tmp_path / "blk00000.dat").write_bytes(
        garbage + oracles.framed_record(good) + garbage
    )
    errors = []
    blocks = list(
        scan_block_files(tmp_path, on_error=lambda f, off, msg: errors.append((off, msg)))
    )
    assert len(blocks) == 1
    assert blocks[0].timestamp == 100
    assert errors  # the garbage was reported
    assert errors[0][0] == 0


def test_scan_reports_file_order(tmp_path, genesis_bytes):
    (tmp_path / "blk00001.dat").write_bytes(oracles.framed_record(_synthetic_block(200, 1)))
    (tmp_path / "blk00000.dat").write_bytes(oracles.framed_record(genesis_bytes))
    blocks = list(scan_block_files(tmp_path))
    assert [b.timestamp for b in blocks] == [1231006505, 200]


def test_scan_skips_undecodable_record(tmp_path):
    bad_block = b"\x01" * 100  # nonsense body, valid framing
    good = _synthetic_block(300, 1)
    (tmp_path / "blk00000.dat").write_bytes(
        oracles.framed_record(bad_block) + oracles.framed_record(good)
    )
    errors = []
    blocks = list(scan_block_files(tmp_path, on_error=lambda *a: errors.append(a)))
    assert [b.timestamp for b in blocks] == [300]
    assert len(errors) == 1


# ---------------------------------------------------------------------------
# outpoint resolution


def test_outpoint_index_resolves_input_addresses():
    payer_script = oracles.p2pkh_script(_hash160(5))
    funding_blob = oracles.serialize_tx(
        [oracles.coinbase_input()], [(10, payer_script), (20, b"\x6a")]
    )
    funding, _ = parse_transaction(funding_blob)
    spend_blob = oracles.serialize_tx(
        [(funding.txid, 0, b""), (funding.txid, 1, b""), (b"\x99" * 32, 0, b"")],
        [(30, oracles.p2pkh_script(_hash160(6)))],
    )
    spend, _ = parse_transaction(spend_blob)

    index = build_outpoint_index([funding])
    resolved, unresolved = resolve_input_addresses(spend, index)
    assert [a.encoded for a in resolved] == [Address.from_hash160(_hash160(5)).encoded]
    assert unresolved == 1  # the \x99 outpoint is unknown; the OP_RETURN one is not an error
    assert resolve_input_addresses(funding, index) == ([], 0)
