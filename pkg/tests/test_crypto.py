import numpy as np
import pytest

from Helpers import crypto
from Helpers.crypto import KeyRing, NodeId, NodeKind


def test_hash_matches_sha256():
    assert crypto.hash_data(b"abc").hex() == \
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert len(crypto.hash_data(b"")) == crypto.DIGEST_SIZE


def test_keygen_is_deterministic():
    seed = bytes(range(32))
    assert crypto.keygen(seed, None) == crypto.keygen(seed, None)
    assert crypto.keygen(seed, None).public != \
        crypto.keygen(bytes(32), None).public


def test_keygen_rejects_bad_seed_length():
    with pytest.raises(ValueError):
        crypto.keygen(bytes(31), None)


def test_sign_and_verify():
    pair = crypto.keygen(bytes(32), None)
    other = crypto.keygen(b"\x01" * 32, None)
    signature = crypto.sign(pair.secret, b"message")

    assert len(signature) == crypto.SIGNATURE_SIZE
    assert crypto.sign(pair.secret, b"message") == signature
    assert crypto.verify(pair.public, b"message", signature)
    assert not crypto.verify(pair.public, b"messagf", signature)
    assert not crypto.verify(other.public, b"message", signature)

    flipped = bytes([signature[0] ^ 1]) + signature[1:]
    assert not crypto.verify(pair.public, b"message", flipped)


def flip_bit(data, bit):
    mutated = bytearray(data)
    mutated[bit // 8] ^= 1 << (bit % 8)
    return bytes(mutated)


def test_single_bit_changes_never_verify():
    rng = np.random.default_rng(11)
    for _ in range(40):
        pair = crypto.keygen(rng.bytes(32), None)
        message = rng.bytes(int(rng.integers(1, 64)))
        signature = crypto.sign(pair.secret, message)
        assert crypto.verify(pair.public, message, signature)

        for _ in range(8):
            assert not crypto.verify(
                pair.public,
                flip_bit(message, int(rng.integers(8 * len(message)))),
                signature)
            assert not crypto.verify(
                pair.public, message,
                flip_bit(signature, int(rng.integers(8 * len(signature)))))
            key_bit = int(rng.integers(8 * crypto.PUBLIC_KEY_SIZE))
            assert not crypto.verify(flip_bit(pair.public, key_bit), message,
                                     signature)


def test_verify_rejects_malformed_input_without_raising():
    pair = crypto.keygen(bytes(32), None)
    signature = crypto.sign(pair.secret, b"m")

    assert not crypto.verify(pair.public, b"m", signature[:-1])
    assert not crypto.verify(pair.public, b"m", b"")
    assert not crypto.verify(pair.public[:5], b"m", signature)
    assert not crypto.verify(b"\xff" * 32, b"m", signature)


def test_node_ids():
    edge = NodeId(NodeKind.EDGE, 3)
    assert str(edge) == "edge3"
    assert NodeId(1, 3) == edge
    assert NodeId(0, 0).kind is NodeKind.CLIENT
    assert sorted([edge, NodeId(NodeKind.CLIENT, 9)]) == \
        [NodeId(NodeKind.CLIENT, 9), edge]
    with pytest.raises(ValueError):
        NodeId(NodeKind.CLIENT, -1)


def test_keyring_generation():
    nodes = [NodeId(NodeKind.CLOUD, 0), NodeId(NodeKind.EDGE, 0),
             NodeId(NodeKind.CLIENT, 0), NodeId(NodeKind.CLIENT, 1)]
    ring, pairs = KeyRing.generate(42, nodes)
    again, _ = KeyRing.generate(42, nodes)
    other, _ = KeyRing.generate(43, nodes)

    assert len({ring.public(node) for node in nodes}) == len(nodes)
    assert all(pairs[node].owner == node for node in nodes)
    assert all(ring.public(node) == again.public(node) for node in nodes)
    assert all(ring.public(node) != other.public(node) for node in nodes)
    assert NodeId(NodeKind.CLIENT, 0) in ring
    assert ring.public(NodeId(NodeKind.CLIENT, 7)) is None
