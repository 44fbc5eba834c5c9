import dataclasses
import glob
import os

import numpy as np
import pytest

from Helpers import crypto
from Helpers.crypto import NodeId, NodeKind
from Networking import model
from Networking import message_types
from Networking.model import (AddRequest, AddResponse, Block, BlockCertify,
                              BlockProof, BlockProofMsg, BlockUpload,
                              DisputeKind, DisputeMsg, Entry, GetProofBundle,
                              GetRequest, GetResponse, GlobalRoot, GossipMsg,
                              LevelRoot, LogData, MergeRequest, MergeResponse,
                              NoOp, Page, PageEntry, Put, ReadRequest,
                              ReadResponse, ReadStatus, Verdict,
                              VerdictReason, WireError)
from support import CLIENTS, CLOUD, EDGE, FIXTURES_PATH


def read_fixture(name):
    with open(os.path.join(FIXTURES_PATH, name + ".bin"), "rb") as file:
        return file.read()


@pytest.fixture
def keys():
    _, pairs = crypto.KeyRing.generate(7, (CLOUD, EDGE) + CLIENTS)
    return pairs


def test_fixtures_decode_to_expected_values():
    edge_block = Block(EDGE, 0, ())
    zero_proof = BlockProof(EDGE, 0, bytes(32), b"")
    global_root = GlobalRoot(EDGE, bytes(32), 0.0, 0, b"")
    expected = {
        "add_request": AddRequest(
            Entry(CLIENTS[0], 1, Put(7, b"hi"), b"")),
        "add_response": AddResponse(
            Block(EDGE, 2, (Entry(CLIENTS[1], 0, LogData(b"ab"), b""),)), 2,
            b""),
        "block_certify": BlockCertify(EDGE, 3, crypto.hash_data(b"abc"),
                                      bytes(64)),
        "block_upload": BlockUpload(EDGE, Block(EDGE, 4, ()), b""),
        "block_proof": BlockProofMsg(
            BlockProof(EDGE, 3, crypto.hash_data(b"abc"), b"")),
        "read_request": ReadRequest(5),
        "read_response": ReadResponse(EDGE, 0, ReadStatus.PHASE2, 12.5,
                                      edge_block, zero_proof, b""),
        "gossip": GossipMsg(EDGE, 10, 1000.0, bytes(64)),
        "dispute": DisputeMsg(CLIENTS[2], DisputeKind.OMISSION,
                              model.canonical_encode(ReadRequest(5)), 5, b""),
        "get_request": GetRequest(1, 42),
        "get_response": GetResponse(
            EDGE, 1, 42, 1000.0,
            GetProofBundle(None, (), (),
                           (LevelRoot(EDGE, 1, bytes(32), 0, b""),),
                           global_root),
            b""),
        "merge_request": MergeRequest(
            EDGE, 3, 1, (),
            (Page(1, 0, (PageEntry(5, b"v", 2, 1),), 0, model.MAX_KEY, 20.0,
                  3),),
            (), (), b""),
        "merge_response": MergeResponse(
            EDGE, 0, 0, (), (),
            dataclasses.replace(global_root, timestamp=250.0, watermark=4),
            b""),
        "verdict": Verdict(EDGE, VerdictReason.LIED,
                           NodeId(NodeKind.CLIENT, 3), 7, 250.0, b""),
    }

    # One fixture per message kind.
    names = {os.path.basename(path)[:-len(".bin")]
             for path in glob.glob(os.path.join(FIXTURES_PATH, "*.bin"))}
    assert names == set(expected) == set(message_types.KIND_NAMES.values())

    for name, value in expected.items():
        data = read_fixture(name)
        assert model.decode(data, type(value)) == value, name
        assert model.canonical_encode(value) == data, name
        assert data[0] == value.TAG


def random_field(codec, rng, depth):
    if codec is model.OP:
        choice = int(rng.integers(3))
        if choice == 0:
            return LogData(rng.bytes(int(rng.integers(0, 24))))
        if choice == 1:
            return Put(int(rng.integers(0, 2 ** 64, dtype=np.uint64)),
                       rng.bytes(int(rng.integers(0, 24))))
        return NoOp()
    if isinstance(codec, model._Int):
        high = 1 << (8 * codec.struct.size)
        return int(rng.integers(0, high, dtype=np.uint64))
    if isinstance(codec, model._Time):
        return float(rng.normal() * 1e6)
    if isinstance(codec, model._Bool):
        return bool(rng.integers(2))
    if isinstance(codec, model._Enum):
        members = list(codec.enum_class)
        return members[int(rng.integers(len(members)))]
    if isinstance(codec, model._Blob):
        return rng.bytes(int(rng.integers(0, 80)))
    if isinstance(codec, model._Fixed):
        return rng.bytes(codec.size)
    if isinstance(codec, model._Node):
        return NodeId(NodeKind(int(rng.integers(3))),
                      int(rng.integers(0, 2 ** 64, dtype=np.uint64)))
    if isinstance(codec, model._Optional):
        if rng.random() < 0.3:
            return None
        return random_field(codec.inner, rng, depth)
    if isinstance(codec, model._List):
        count = int(rng.integers(0, 3 if depth < 3 else 1))
        return tuple(random_field(codec.inner, rng, depth + 1)
                     for _ in range(count))
    if isinstance(codec, model._Struct):
        return random_value(codec.wire_class, rng, depth + 1)
    raise TypeError("No generator for " + type(codec).__name__)


def random_value(wire_class, rng, depth=0):
    return wire_class(**{
        field.name: random_field(field.metadata["codec"], rng, depth)
        for field in dataclasses.fields(wire_class)})


@pytest.mark.parametrize("tag", sorted(model.TYPES))
def test_random_values_of_every_type_survive_encoding(tag):
    wire_class = model.TYPES[tag]
    rng = np.random.default_rng(tag)
    for _ in range(25):
        value = random_value(wire_class, rng)
        data = model.canonical_encode(value)
        assert data[0] == tag
        assert model.decode(data) == value
        assert model.decode(data, wire_class) == value
        assert model.message_size(value) == len(data)
        with pytest.raises(WireError):
            model.decode(data[:-1])


def test_every_tag_has_a_type():
    assert len(model.TYPES) == 26
    assert set(message_types.KIND_NAMES) <= set(model.TYPES)


def test_disputes_carry_the_block_inside_the_evidence():
    assert [field.name for field in dataclasses.fields(DisputeMsg)] == \
        ["disputant", "kind", "evidence", "subject", "client_sig"]



def test_integers_are_fixed_width_big_endian():
    assert model.canonical_encode(ReadRequest(5)) == \
        bytes.fromhex("250000000000000005")
    assert model.canonical_encode(ReadRequest(0))[1:] == bytes(8)


def test_block_certify_size_is_fixed():
    data = read_fixture("block_certify")
    assert len(data) == 118
    assert model.message_size(model.decode(data)) == 118


def test_decode_rejects_inexact_input():
    data = read_fixture("read_request")
    with pytest.raises(WireError):
        model.decode(data + b"\x00")
    with pytest.raises(WireError):
        model.decode(data[:-1])
    with pytest.raises(WireError):
        model.decode(b"")
    with pytest.raises(WireError):
        model.decode(b"\xff" + data[1:])
    with pytest.raises(WireError):
        model.decode(data, GetRequest)


def test_decode_rejects_invalid_flags_and_enums():
    data = bytearray(read_fixture("verdict"))
    bad_flag = bytes(data[:1]) + b"\x02" + bytes(data[2:])
    with pytest.raises(WireError):
        model.decode(bad_flag)

    # The reason follows the tag, the presence flag and the edge id.
    data[11] = 99
    with pytest.raises(WireError):
        model.decode(bytes(data))


def test_encode_rejects_out_of_range_values():
    with pytest.raises(WireError):
        model.canonical_encode(ReadRequest(2 ** 64))
    with pytest.raises(WireError):
        model.canonical_encode(ReadRequest(-1))
    with pytest.raises(WireError):
        model.canonical_encode(GossipMsg(EDGE, 1, float("nan"), b""))
    with pytest.raises(WireError):
        model.canonical_encode(BlockProof(EDGE, 0, b"short", b""))


def test_response_with_nested_values_survives_encoding(keys):
    entries = (model.new_entry(keys[CLIENTS[0]], 0, Put(7, b"seven")),
               model.new_entry(keys[CLIENTS[1]], 0, LogData(b"log")),
               model.new_entry(keys[EDGE], 0, NoOp()))
    block = Block(EDGE, 4, entries)
    proof = model.sign_value(
        BlockProof(EDGE, 4, model.block_digest(block), b""),
        keys[CLOUD].secret)
    response = model.sign_value(
        ReadResponse(EDGE, 4, ReadStatus.PHASE2, 12.5, block, proof, b""),
        keys[EDGE].secret)

    decoded = model.decode(model.canonical_encode(response), ReadResponse)
    assert decoded == response
    assert model.verify_value(decoded, keys[EDGE].public)


def test_sequences_are_stored_as_tuples(keys):
    entry = model.new_entry(keys[CLIENTS[0]], 0, LogData(b"x"))
    assert Block(EDGE, 0, [entry]).entries == (entry,)


def test_signatures_cover_every_other_field(keys):
    certify = model.sign_value(BlockCertify(EDGE, 0, bytes(32), b""),
                               keys[EDGE].secret)
    assert model.verify_value(certify, keys[EDGE].public)
    assert model.signing_payload(certify) == \
        model.signing_payload(BlockCertify(EDGE, 0, bytes(32), b"other"))

    moved = BlockCertify(EDGE, 1, bytes(32), certify.edge_sig)
    assert not model.verify_value(moved, keys[EDGE].public)
    assert not model.verify_value(certify, keys[CLOUD].public)
    assert not model.verify_value(certify, None)
    assert not model.verify_value(ReadRequest(0), keys[EDGE].public)


def test_entries_are_signed_by_their_client(keys):
    entry = model.new_entry(keys[CLIENTS[2]], 5, Put(1, b"v"))
    assert entry.identity == (CLIENTS[2], 5)
    assert model.verify_value(entry, keys[CLIENTS[2]].public)
    assert not model.verify_value(entry, keys[CLIENTS[1]].public)


def test_block_digest_depends_on_entry_order(keys):
    first = model.new_entry(keys[CLIENTS[0]], 0, LogData(b"a"))
    second = model.new_entry(keys[CLIENTS[1]], 0, LogData(b"b"))
    assert model.block_digest(Block(EDGE, 0, (first, second))) != \
        model.block_digest(Block(EDGE, 0, (second, first)))
    assert model.block_digest(Block(EDGE, 0, (first,))) != \
        model.block_digest(Block(EDGE, 1, (first,)))


def test_kinds_and_verdicts():
    assert ReadRequest.KIND == "read_request"
    assert model.BlockProofMsg.KIND == "block_proof"
    assert AddResponse.KIND == "add_response"
    assert Verdict(EDGE, VerdictReason.LIED, None, 0, 0.0, b"").convicting
    assert not Verdict(EDGE, VerdictReason.UNRESPONSIVE, None, 0, 0.0,
                       b"").convicting
