import dataclasses

import numpy as np
import pytest

from Helpers import crypto
from Helpers.crypto import NodeId, NodeKind
from Index import lsmerkle
from Index.lsmerkle import GetStatus
from Networking import model
from Networking.model import (Block, GetProofBundle, L0Page, MerklePath, Page,
                              PageEntry, Put, WireError)
from support import CLIENTS, CLOUD, EDGE, Cluster


def make_pages(count):
    return [Page(1, index, (PageEntry(10 * index, b"v", 0, index),),
                 10 * index, 10 * index + 9, 0.0, 0)
            for index in range(count)]


@pytest.fixture
def keys():
    _, pairs = crypto.KeyRing.generate(7, (CLOUD, EDGE) + CLIENTS)
    return pairs


@pytest.mark.parametrize("count", [1, 2, 3, 5, 8, 9])
def test_every_leaf_has_a_valid_path(count):
    pages = make_pages(count)
    root = lsmerkle.merkle_root(pages)
    for index, page in enumerate(pages):
        path = lsmerkle.merkle_path(pages, index)
        assert lsmerkle.verify_path(lsmerkle.page_hash(page), path, root,
                                    count)
        assert not lsmerkle.verify_path(crypto.hash_data(b"other"), path,
                                        root, count)
    with pytest.raises(IndexError):
        lsmerkle.merkle_path(pages, count)


def test_path_shape_is_checked_against_the_leaf_count():
    pages = make_pages(4)
    root = lsmerkle.merkle_root(pages)
    path = lsmerkle.merkle_path(pages, 1)
    leaf = lsmerkle.page_hash(pages[1])

    assert lsmerkle.verify_path(leaf, path, root, 4)
    assert not lsmerkle.verify_path(leaf, MerklePath(2, path.siblings), root,
                                    4)
    assert not lsmerkle.verify_path(leaf, path, root, 1)
    assert lsmerkle.merkle_root([]) == lsmerkle.EMPTY_ROOT


def test_merge_keeps_latest_versions_and_partitions_the_key_range(keys):
    def block(bid, puts):
        return Block(EDGE, bid, tuple(
            model.new_entry(keys[CLIENTS[0]], bid * 10 + index,
                            Put(key, value))
            for index, (key, value) in enumerate(puts)))

    l0_blocks = [block(2, [(5, b"a"), (7, b"b")]),
                 block(3, [(5, b"c"), (9, b"d")])]
    lower = [Page(1, 0, (PageEntry(5, b"e", 1, 0), PageEntry(6, b"f", 1, 1)),
                  0, 6, 0.0, 0),
             Page(1, 1, (PageEntry(9, b"g", 1, 2),), 7, model.MAX_KEY, 0.0,
                  0)]

    pages = lsmerkle.perform_merge(0, l0_blocks, [], lower, 2, 5.0, 1)

    assert [[(entry.key, entry.value) for entry in page.entries]
            for page in pages] == [[(5, b"c"), (6, b"f")],
                                   [(7, b"b"), (9, b"d")]]
    assert [(page.min_key, page.max_key) for page in pages] == \
        [(0, 6), (7, model.MAX_KEY)]
    assert all(page.level == 1 for page in pages)
    assert lsmerkle.check_partition(pages) is None


def test_l0_entries_keep_the_first_copy_of_each_entry(keys):
    first = model.new_entry(keys[CLIENTS[0]], 0, Put(5, b"old"))
    second = model.new_entry(keys[CLIENTS[0]], 1, Put(5, b"new"))
    blocks = [Block(EDGE, 0, (first,)), Block(EDGE, 1, (second, first))]

    assert lsmerkle.l0_entries(blocks) == [PageEntry(5, b"old", 0, 0),
                                           PageEntry(5, b"new", 1, 0)]

    seen = {first.identity}
    assert lsmerkle.l0_entries(blocks, seen) == [PageEntry(5, b"new", 1, 0)]
    assert seen == {first.identity, second.identity}


def test_partition_violations_are_reported():
    pages = make_pages(3)
    assert lsmerkle.check_partition(pages) == \
        "last page does not end at the maximum key"
    adjacent = lsmerkle.cut_pages(
        [PageEntry(key, b"v", 0, key) for key in (1, 4, 9)], 1, 1, 0.0, 0)
    assert lsmerkle.check_partition(adjacent) is None
    gap = [adjacent[0], dataclasses.replace(adjacent[1], min_key=3),
           adjacent[2]]
    assert "not adjacent" in lsmerkle.check_partition(gap)


def test_snapshot_is_independent_of_later_changes(keys):
    lsm = lsmerkle.LsmState(EDGE, (2, 2, 4))
    snapshot = lsm.snapshot()
    lsmerkle.insert_l0(lsm, Block(EDGE, 0, (model.new_entry(
        keys[CLIENTS[0]], 0, Put(1, b"v")),)), 0.0)
    assert len(lsm.levels[0]) == 1
    assert snapshot.levels[0] == [] and snapshot.l0_blocks == []


def brute_force_merge(request):
    """Latest (key, value) per key over every entry of a merge request."""

    versions = {}
    for l0_page in request.l0_pages:
        block = l0_page.block
        for index, entry in enumerate(block.entries):
            if isinstance(entry.op, Put):
                versions.setdefault(entry.op.key, []).append(
                    ((block.bid, index), entry.op.value))
    for page in request.upper + request.lower:
        for entry in page.entries:
            versions.setdefault(entry.key, []).append(
                (entry.version, entry.value))
    return [(key, max(versions[key])[1]) for key in sorted(versions)]


def mutations_detected(bundle, key, cluster, rng, count):
    data = model.canonical_encode(bundle)
    cloud_public = cluster.keyring.public(CLOUD)
    positions = rng.choice(len(data), size=min(count, len(data)),
                           replace=False)
    for position in positions:
        position = int(position)
        mutated = bytearray(data)
        mutated[position] = (mutated[position]
                             + int(rng.integers(1, 256))) % 256
        try:
            forged = model.decode(bytes(mutated), GetProofBundle)
        except WireError:
            continue
        result = lsmerkle.verify_get_proof(forged, key, cloud_public,
                                           cluster.keyring, EDGE)
        assert result.status == GetStatus.INVALID, position


@pytest.mark.parametrize("page_size", [2, 64])
def test_lookups_match_a_map_oracle(page_size):
    cluster = Cluster(batch_size=3, thresholds=(2, 2, 4), page_size=page_size)
    rng = np.random.default_rng(page_size)
    oracle = {}
    for index in range(1200):
        key = int(rng.integers(0, 120))
        value = rng.bytes(8)
        cluster.now = float(index)
        cluster.put(index % len(CLIENTS), key, value)
        oracle[key] = value
    cluster.flush()

    # Every merge output is partitioned and holds the latest versions.
    requests = {msg.merge_id: msg for msg in cluster.sent("merge_request")}
    responses = cluster.sent("merge_response")
    assert responses
    for response in responses:
        assert lsmerkle.check_partition(response.pages) is None
        assert [(entry.key, entry.value) for page in response.pages
                for entry in page.entries] == \
            brute_force_merge(requests[response.merge_id])

    lsm = cluster.edge_state.lsm
    for level in range(1, lsm.level_count):
        assert lsmerkle.check_partition(lsm.levels[level]) is None

    # Present and absent keys.
    cloud_public = cluster.keyring.public(CLOUD)
    bundles = {}
    for key in range(150):
        bundle = lsmerkle.lookup(lsm, key, cluster.edge_state.proofs)
        result = lsmerkle.verify_get_proof(bundle, key, cloud_public,
                                           cluster.keyring, EDGE)
        if key in oracle:
            assert result.status == GetStatus.FOUND
            assert result.value == oracle[key]
        else:
            assert result.status == GetStatus.ABSENT
        assert result.pending_bids == ()
        bundles[key] = bundle

    # Dropping a covering page or the edge binding is caught.
    absent = bundles[149]
    assert absent.covering_pages
    short = dataclasses.replace(absent,
                                covering_pages=absent.covering_pages[1:])
    assert lsmerkle.verify_get_proof(short, 149, cloud_public).status == \
        GetStatus.INVALID
    assert lsmerkle.verify_get_proof(
        absent, 149, cloud_public, edge=NodeId(NodeKind.EDGE, 1)).status == \
        GetStatus.INVALID

    # Single octet changes never verify.
    deep_key = next(key for key in sorted(oracle)
                    if bundles[key].value_page is not None)
    for key in (deep_key, 149):
        mutations_detected(bundles[key], key, cluster, rng, 150)


def test_uncertified_l0_entries_need_client_signatures():
    cluster = Cluster(batch_size=1)
    cluster.held_kinds = {"block_certify"}
    cluster.put(0, 5, b"five")

    lsm = cluster.edge_state.lsm
    cloud_public = cluster.keyring.public(CLOUD)
    bundle = lsmerkle.lookup(lsm, 5, cluster.edge_state.proofs)
    result = lsmerkle.verify_get_proof(bundle, 5, cloud_public,
                                       cluster.keyring, EDGE)
    assert result.status == GetStatus.FOUND
    assert result.value == b"five"
    assert result.pending_bids == (0,)
    assert result.phase1

    block = bundle.l0_pages[0].block
    entry = dataclasses.replace(block.entries[0], op=Put(5, b"forged"))
    forged = dataclasses.replace(bundle, l0_pages=(L0Page(
        dataclasses.replace(block, entries=(entry,)), None),))
    assert lsmerkle.verify_get_proof(forged, 5, cloud_public,
                                     cluster.keyring).status == \
        GetStatus.INVALID

    # Hiding the newest blocks is only bounded by the freshness window.
    hidden = dataclasses.replace(bundle, l0_pages=())
    assert lsmerkle.verify_get_proof(hidden, 5, cloud_public).status == \
        GetStatus.ABSENT

    cluster.release()
    bundle = lsmerkle.lookup(lsm, 5, cluster.edge_state.proofs)
    result = lsmerkle.verify_get_proof(bundle, 5, cloud_public,
                                       cluster.keyring, EDGE)
    assert result.status == GetStatus.FOUND and not result.phase1
