import dataclasses

import pytest

from Networking import model
from Networking.model import (AddResponse, DisputeKind, GossipMsg,
                              ReadResponse, ReadStatus)
from Nodes import client as client_node
from Nodes import edge as edge_node
from Nodes.client import OpKind, Phase
from support import CLIENTS, CLOUD, EDGE


def test_writes_move_through_both_phases(cluster):
    cluster.held_kinds = {"block_certify"}
    first = cluster.put(0, 3, b"three")
    second = cluster.add(1, b"log")
    assert first.kind == OpKind.PUT and second.kind == OpKind.ADD
    assert first.phase == Phase.PHASE1 and first.bid == 0
    assert first.phase1_at == 0.0 and first.phase2_at is None

    cluster.now = 40.0
    cluster.release()
    assert first.history == [Phase.SENT, Phase.PHASE1, Phase.PHASE2]
    assert first.phase2_at == 40.0
    assert second.phase == Phase.PHASE2


def test_phases_only_move_forward(cluster):
    cluster.put(0, 1, b"a")
    op = cluster.put(1, 2, b"b")
    assert op.phase == Phase.PHASE2
    with pytest.raises(ValueError):
        client_node._advance(op, Phase.PHASE1, 1.0)


def test_trusted_service_commits_at_once(cluster_of):
    cluster = cluster_of(trusted_service=True)
    cluster.held_kinds = {"block_certify"}
    cluster.put(0, 1, b"a")
    op = cluster.put(1, 2, b"b")
    assert op.phase == Phase.PHASE2
    assert op.phase1_at == op.phase2_at


def test_responses_with_bad_signatures_are_ignored(cluster):
    cluster.held_kinds = {"block_certify", "add_response"}
    cluster.put(0, 1, b"a")
    op = cluster.put(1, 2, b"b")
    response = cluster.held[1][1].msg
    assert isinstance(response, AddResponse)

    forged = dataclasses.replace(response, edge_sig=bytes(64))
    state = cluster.client(1)
    assert client_node.on_add_response(state, forged, 1.0) == []
    assert op.phase == Phase.SENT
    client_node.on_add_response(state, response, 1.0)
    assert op.phase == Phase.PHASE1


def test_missing_proofs_are_disputed_after_the_timeout(cluster):
    cluster.held_kinds = {"block_certify"}
    cluster.put(0, 1, b"a")
    op = cluster.put(1, 2, b"b")
    state = cluster.client(1)

    assert client_node.check_timeouts(state, 100.0) == []
    out, = client_node.check_timeouts(state, 100.5)
    assert op.phase == Phase.DISPUTED
    assert out.dst == CLOUD
    dispute = out.msg
    assert dispute.kind == DisputeKind.ADD and dispute.subject == op.seq
    assert model.decode(dispute.evidence) == op.evidence
    assert model.verify_value(dispute, cluster.keyring.public(CLIENTS[1]))


def test_unanswered_ops_expire_without_dispute(cluster):
    state = cluster.client(0)
    client_node.put(state, 1, b"a", 0.0)
    assert client_node.check_timeouts(state, 101.0) == []
    assert state.ops[0].phase == Phase.EXPIRED
    assert client_node.is_settled(state)


def test_log_reads_advance_the_cursor(cluster):
    cluster.held_kinds = {"block_certify"}
    cluster.add(0, b"a")
    cluster.add(1, b"b")
    state = cluster.client(2)

    cluster.request(2, client_node.read_next(state, 0.0))
    op = state.ops[0]
    assert op.phase == Phase.PHASE1 and op.outcome == "phase1"
    assert state.read_cursor == 1

    cluster.release()
    assert op.phase == Phase.PHASE2

    cluster.request(2, client_node.read_next(state, 1.0))
    assert state.ops[1].phase == Phase.UNAVAILABLE
    assert state.read_cursor == 1
    assert 1 in state.unavailable


def test_proven_block_that_differs_is_disputed(cluster):
    cluster.add(0, b"a")
    cluster.add(1, b"b")
    state = cluster.client(2)
    read = cluster.read(2, 0)
    assert read.phase == Phase.PHASE2

    block = cluster.edge_state.log[0]
    lie = model.sign_value(ReadResponse(
        EDGE, 0, ReadStatus.PHASE2, 2.0,
        dataclasses.replace(block, entries=block.entries[:1]),
        cluster.edge_state.proofs[0], b""), cluster.pairs[EDGE].secret)
    client_node.read_block(state, 0, 2.0)
    out, = client_node.on_read_response(state, lie, 2.0)
    assert state.ops[1].phase == Phase.DISPUTED
    assert out.msg.kind == DisputeKind.READ


def signed_gossip(cluster, log_size, timestamp):
    return model.sign_value(GossipMsg(EDGE, log_size, timestamp, b""),
                            cluster.pairs[CLOUD].secret)


def unavailable(cluster, bid, timestamp):
    return model.sign_value(
        ReadResponse(EDGE, bid, ReadStatus.UNAVAILABLE, timestamp, None,
                     None, b""), cluster.pairs[EDGE].secret)


def test_unavailable_answer_after_gossip_is_disputed_at_once(cluster_of):
    cluster = cluster_of(gossip_interval_ms=50.0)
    state = cluster.client(0)
    client_node.on_gossip(state, signed_gossip(cluster, 1, 5.0), 5.0)

    client_node.read_block(state, 0, 9.0)
    out, = client_node.on_read_response(state, unavailable(cluster, 0, 10.0),
                                        10.0)
    assert out.msg.kind == DisputeKind.OMISSION
    assert state.ops[0].phase == Phase.UNAVAILABLE
    assert state.read_cursor == 1


def test_older_unavailable_answers_are_read_again(cluster_of):
    cluster = cluster_of(gossip_interval_ms=50.0)
    state = cluster.client(0)
    client_node.read_block(state, 0, 0.0)
    assert client_node.on_read_response(
        state, unavailable(cluster, 0, 1.0), 1.0) == []
    assert not client_node.is_settled(state)

    out, = client_node.on_gossip(state, signed_gossip(cluster, 1, 5.0), 5.0)
    assert out.dst == EDGE and out.msg == model.ReadRequest(0)
    assert state.ops[1].bid == 0

    # Gossip that is older than what was already seen is ignored.
    assert client_node.on_gossip(state, signed_gossip(cluster, 2, 4.0),
                                 6.0) == []
    forged = model.sign_value(GossipMsg(EDGE, 9, 7.0, b""),
                              cluster.pairs[EDGE].secret)
    assert client_node.on_gossip(state, forged, 7.0) == []


def test_unavailable_answers_older_than_the_window_are_rejected(cluster):
    state = cluster.client(0)
    window = state.freshness.window_ms
    old = unavailable(cluster, 0, 10.0)

    assert client_node.verify_read(state, old, 10.0 + window) == \
        client_node.ReadOutcome.UNAVAILABLE
    assert client_node.verify_read(state, old, 10.5 + window) == \
        client_node.ReadOutcome.REJECTED

    client_node.read_block(state, 0, 10.5 + window)
    assert client_node.on_read_response(state, old, 11.0 + window) == []
    assert state.ops[0].phase == Phase.SENT
    assert 0 not in state.unavailable
    assert cluster.logger.count("client", "read", "rejected") == 1


def test_gets_of_fresh_roots_settle_with_their_proofs(cluster):
    cluster.held_kinds = {"block_certify"}
    cluster.put(0, 9, b"nine")
    cluster.put(1, 8, b"eight")

    op = cluster.get(2, 9)
    assert op.phase == Phase.PHASE1
    assert op.value == b"nine" and op.outcome == "found"
    assert op.pending_bids == {0}

    cluster.release()
    assert op.phase == Phase.PHASE2

    absent = cluster.get(3, 77)
    assert absent.phase == Phase.PHASE2 and absent.outcome == "absent"


def test_gets_of_stale_roots_are_retried_then_reported(cluster):
    cluster.now = 6000.0
    op = cluster.get(0, 1)
    assert op.phase == Phase.STALE and op.outcome == "stale"
    assert op.retries == cluster.client(0).max_retries
    assert len(cluster.sent("get_request")) == 4
    assert op.value is None


def test_invalid_bundles_are_disputed(cluster):
    cluster.put(0, 9, b"nine")
    cluster.put(1, 8, b"eight")
    state = cluster.client(2)
    request = client_node.get(state, 9, 1.0)
    response = edge_node.handle_get(cluster.edge_state, CLIENTS[2], request,
                                    1.0)
    bundle = dataclasses.replace(response.bundle, level_roots=())
    forged = model.sign_value(dataclasses.replace(response, bundle=bundle),
                              cluster.pairs[EDGE].secret)

    out, = client_node.on_get_response(state, forged, 1.0)
    assert state.ops[0].phase == Phase.DISPUTED
    assert out.msg.kind == DisputeKind.GET

    cluster.deliver(CLIENTS[2], [out])
    verdict, = [msg for _, dst, msg in cluster.log
                if msg.KIND == "verdict" and dst == CLIENTS[2]]
    assert verdict.convicting and verdict.edge == EDGE
    assert cluster.client(2).verdicts == [verdict]
