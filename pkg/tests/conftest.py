import pytest

# Mainnet genesis block, framed exactly as it appears in a raw block file
# (public fixture; its hashes are cross-checked inside the tests).
GENESIS_BLOCK_HEX = (
    "0100000000000000000000000000000000000000000000000000000000000000"
    "000000003ba3edfd7a7b12b27ac72c3e67768f617fc81bc3888a51323a9fb8aa"
    "4b1e5e4a29ab5f49ffff001d1dac2b7c01"
    "01000000"
    "01"
    "0000000000000000000000000000000000000000000000000000000000000000"
    "ffffffff"
    "4d"
    "04ffff001d0104455468652054696d65732030332f4a616e2f32303039204368"
    "616e63656c6c6f72206f6e206272696e6b206f66207365636f6e64206261696c"
    "6f757420666f722062616e6b73"
    "ffffffff"
    "01"
    "00f2052a01000000"
    "43"
    "4104678afdb0fe5548271967f1a67130b7105cd6a828e03909a67962e0ea1f61"
    "deb649f6bc3f4cef38c4f35504e51ec112de5c384df7ba0b8d578a4c702b6bf1"
    "1d5fac"
    "00000000"
)

GENESIS_TXID_HEX = "4a5e1e4baab89f3a32518a88c31bc87f618f76673e2cc77ab2127b7afdeda33b"
GENESIS_TIMESTAMP = 1231006505


@pytest.fixture
def genesis_bytes() -> bytes:
    return bytes.fromhex(GENESIS_BLOCK_HEX)


def _backends():
    from btcgraph._accel import _uf_py

    backends = [pytest.param(_uf_py, id="python")]
    try:
        from btcgraph._accel import _unionfind

        backends.append(pytest.param(_unionfind, id="cython"))
    except ImportError:
        pass
    return backends


@pytest.fixture(params=_backends())
def uf_backend(request):
    return request.param
