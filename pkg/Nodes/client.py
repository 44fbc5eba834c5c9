"""The client: issues signed operations and tracks their commit phases.

An add is Phase I committed once the edge's signed response shows the entry
in a block, and Phase II committed once a cloud proof matches that block.
Every response is verified, and signed statements that turn out to be false
are sent to the cloud as disputes.
"""

# Python imports.
import collections
import dataclasses
import enum
import typing

# External imports.

# Local imports.
from Helpers import crypto
from Helpers.Logger import Logger
from Index import lsmerkle
from Index.lsmerkle import GetResult, GetStatus
from Networking import model
from Networking.model import (AddRequest, AddResponse, BlockProofMsg,
                              DisputeKind, DisputeMsg, GetRequest,
                              GetResponse, GossipMsg, LogData, Put,
                              ReadRequest, ReadResponse, ReadStatus)
from Nodes.node import Node, Outbound


# Constants.

DEFAULT_MAX_RETRIES = 3
"""Stale gets are retried this many times before being reported stale."""

DISPUTE_TIMEOUT_RTTS = 10
"""Default dispute timeout in multiples of the edge to cloud round trip."""


class OpKind(enum.Enum):
    ADD = "add"
    PUT = "put"
    READ = "read"
    GET = "get"


class Phase(enum.Enum):
    SENT = "sent"
    PHASE1 = "phase1"
    PHASE2 = "phase2"
    DISPUTED = "disputed"
    UNAVAILABLE = "unavailable"
    STALE = "stale"
    EXPIRED = "expired"


ALLOWED_TRANSITIONS = {
    Phase.SENT: {Phase.PHASE1, Phase.DISPUTED, Phase.UNAVAILABLE,
                 Phase.STALE, Phase.EXPIRED},
    Phase.PHASE1: {Phase.PHASE2, Phase.DISPUTED},
}
"""Phases only move forward; anything not listed here is terminal."""


class ReadOutcome(enum.Enum):
    PHASE1 = "phase1"
    PHASE2 = "phase2"
    UNAVAILABLE = "unavailable"
    REJECTED = "rejected"


@dataclasses.dataclass
class PendingOp:
    """One client operation and its progress.

    Attributes:
        op_id (int): Client local id.
        kind (OpKind): What was issued.
        seq (int): Entry sequence number for adds and puts.
        key (int): The key for puts and gets.
        bid (int): The block holding the entry, or the block read.
        phase (Phase): Current phase.
        evidence (WireType): The signed edge response backing the phase.
        issued_at, phase1_at, phase2_at (float): Milliseconds.
        outcome (str): Final result for reads and gets.
        value (bytes): Value returned by a get.
        pending_bids (set): Blocks whose proofs a Phase I get waits for.
        retries (int): Stale get retries so far.
        history (list): Every phase the op has been in.
    """

    op_id: int
    kind: OpKind
    issued_at: float
    seq: typing.Optional[int] = None
    key: typing.Optional[int] = None
    bid: typing.Optional[int] = None
    entry: typing.Optional[model.Entry] = None
    phase: Phase = Phase.SENT
    evidence: typing.Optional[model.WireType] = None
    phase1_at: typing.Optional[float] = None
    phase2_at: typing.Optional[float] = None
    ended_at: typing.Optional[float] = None
    outcome: str = ""
    value: typing.Optional[bytes] = None
    pending_bids: set = dataclasses.field(default_factory=set)
    retries: int = 0
    history: list = dataclasses.field(default_factory=lambda: [Phase.SENT])

    @property
    def terminal(self) -> bool:
        return self.phase not in (Phase.SENT, Phase.PHASE1)


@dataclasses.dataclass
class FreshnessConfig:
    """How old a global root may be, and how long to wait for proofs."""

    window_ms: float = 5000.0
    dispute_timeout_ms: float = 610.0

    def __post_init__(self):
        if self.window_ms <= 0 or self.dispute_timeout_ms <= 0:
            raise ValueError("Freshness window and dispute timeout must be "
                             "positive")


@dataclasses.dataclass
class ClientState:
    """Everything a client knows.

    Attributes:
        me (NodeId): This client.
        keys (KeyPair): The client's signing keys.
        keyring (KeyRing): Public keys of every node.
        edge (NodeId): The edge this client talks to.
        cloud (NodeId): The cloud.
        freshness (FreshnessConfig): Window and dispute timeout.
        max_retries (int): Stale get retries.
        trusted_service (bool): Treat every response as final, for a store
            running at the cloud.
        expects_gossip (bool): Whether the cloud gossips log sizes; without
            gossip unavailable answers are never revisited.
        ops (dict): op_id to PendingOp.
        adds (dict): Entry seq to op_id.
        reads (dict): Block id to queued read op_ids.
        gets (dict): Request id to op_id.
        waiting (dict): Block id to op_ids waiting for its proof.
        proof_cache (dict): Block id to BlockProof.
        unavailable (dict): Block id to the latest signed unavailable answer.
        latest_gossip (GossipMsg): The newest verified gossip.
        read_cursor (int): Next block the log tail reader asks for.
        verdicts (list): Verdicts received from the cloud.
    """

    me: crypto.NodeId
    keys: crypto.KeyPair
    keyring: crypto.KeyRing
    edge: crypto.NodeId
    cloud: crypto.NodeId
    freshness: FreshnessConfig = dataclasses.field(
        default_factory=FreshnessConfig)
    max_retries: int = DEFAULT_MAX_RETRIES
    trusted_service: bool = False
    expects_gossip: bool = True
    next_seq: int = 0
    next_op_id: int = 0
    next_req_id: int = 0
    ops: dict = dataclasses.field(default_factory=dict)
    adds: dict = dataclasses.field(default_factory=dict)
    reads: dict = dataclasses.field(default_factory=dict)
    gets: dict = dataclasses.field(default_factory=dict)
    waiting: dict = dataclasses.field(default_factory=dict)
    proof_cache: dict = dataclasses.field(default_factory=dict)
    unavailable: dict = dataclasses.field(default_factory=dict)
    skipped: set = dataclasses.field(default_factory=set)
    latest_gossip: typing.Optional[GossipMsg] = None
    read_cursor: int = 0
    verdicts: list = dataclasses.field(default_factory=list)
    logger: Logger = None

    def __post_init__(self):
        if self.logger is None:
            self.logger = Logger()

    def log_event(self, level, category, key, value=""):
        self.logger.event("client", level, category, key, value, node=self.me)

    def new_op(self, kind: OpKind, now: float, **fields) -> PendingOp:
        op = PendingOp(self.next_op_id, kind, now, **fields)
        self.ops[op.op_id] = op
        self.next_op_id += 1
        return op


def _advance(op: PendingOp, phase: Phase, now: float):
    if phase not in ALLOWED_TRANSITIONS.get(op.phase, set()):
        raise ValueError("Illegal phase change " + op.phase.value + " -> "
                         + phase.value)
    op.phase = phase
    op.history.append(phase)
    if phase == Phase.PHASE1:
        op.phase1_at = now
    elif phase == Phase.PHASE2:
        op.phase2_at = now
    if op.terminal:
        op.ended_at = now


def _commit(op: PendingOp, now: float):
    """Marks an op Phase I and Phase II committed at once."""

    if op.phase == Phase.SENT:
        _advance(op, Phase.PHASE1, now)
    _advance(op, Phase.PHASE2, now)


def _dispute(state: ClientState, kind: DisputeKind,
             evidence: model.WireType, subject: int) -> Outbound:
    dispute = model.sign_value(
        DisputeMsg(state.me, kind, model.canonical_encode(evidence), subject,
                   b""),
        state.keys.secret)
    state.log_event("warn", "dispute", kind.name.lower(), subject)
    return Outbound(state.cloud, dispute)


def _wait_for_proof(state: ClientState, op: PendingOp, bid: int):
    state.waiting.setdefault(bid, []).append(op.op_id)


# Writes.

def submit(state: ClientState, op, now: float) -> AddRequest:
    """Signs op under the next sequence number and records a pending add."""

    entry = model.new_entry(state.keys, state.next_seq, op)
    kind = OpKind.PUT if isinstance(op, Put) else OpKind.ADD
    key = op.key if isinstance(op, Put) else None
    pending = state.new_op(kind, now, seq=state.next_seq, key=key,
                           entry=entry)
    state.adds[state.next_seq] = pending.op_id
    state.next_seq += 1
    return AddRequest(entry)


def add_entry(state: ClientState, payload: bytes, now: float) -> AddRequest:
    return submit(state, LogData(payload), now)


def put(state: ClientState, key: int, value: bytes,
        now: float) -> AddRequest:
    return submit(state, Put(key, value), now)


def _check_block_proof(state: ClientState, op: PendingOp,
                       proof: model.BlockProof,
                       now: float) -> typing.List[Outbound]:
    """Upgrades or disputes a Phase I add or read against a proof."""

    block = op.evidence.block
    if proof.digest == model.block_digest(block):
        _advance(op, Phase.PHASE2, now)
        return []
    _advance(op, Phase.DISPUTED, now)
    if op.kind == OpKind.READ:
        return [_dispute(state, DisputeKind.READ, op.evidence, op.bid)]
    return [_dispute(state, DisputeKind.ADD, op.evidence, op.seq)]


def on_add_response(state: ClientState, msg: AddResponse,
                    now: float) -> typing.List[Outbound]:
    """Marks own entries found in the signed block as Phase I committed.

    Responses with bad signatures or without the entry are ignored.
    """

    block = msg.block
    if block.edge != state.edge or msg.bid != block.bid or \
            not model.verify_value(msg, state.keyring.public(state.edge)):
        state.log_event("warn", "drop", "bad_add_response")
        return []

    out = []
    for entry in block.entries:
        if entry.client != state.me:
            continue
        op_id = state.adds.get(entry.seq)
        if op_id is None:
            continue
        op = state.ops[op_id]
        if op.phase != Phase.SENT or entry != op.entry:
            continue
        op.evidence = msg
        op.bid = msg.bid
        if state.trusted_service:
            _commit(op, now)
            continue
        _advance(op, Phase.PHASE1, now)
        proof = state.proof_cache.get(msg.bid)
        if proof is not None:
            out.extend(_check_block_proof(state, op, proof, now))
        else:
            _wait_for_proof(state, op, msg.bid)
    return out


def on_block_proof(state: ClientState, msg: BlockProofMsg,
                   now: float) -> typing.List[Outbound]:
    """Settles every op waiting on the proven block."""

    proof = msg.proof
    if proof.edge != state.edge or \
            not model.verify_value(proof, state.keyring.public(state.cloud)):
        state.log_event("warn", "drop", "bad_block_proof")
        return []
    if proof.bid in state.proof_cache:
        return []
    state.proof_cache[proof.bid] = proof

    out = []
    for op_id in state.waiting.pop(proof.bid, []):
        op = state.ops[op_id]
        if op.phase != Phase.PHASE1:
            continue
        if op.kind == OpKind.GET:
            out.extend(_settle_get_block(state, op, proof, now))
        else:
            out.extend(_check_block_proof(state, op, proof, now))
    return out


# Log reads.

def read_block(state: ClientState, bid: int, now: float) -> ReadRequest:
    op = state.new_op(OpKind.READ, now, bid=bid)
    state.reads.setdefault(bid, collections.deque()).append(op.op_id)
    return ReadRequest(bid)


def read_next(state: ClientState, now: float) -> ReadRequest:
    """Reads the block at the log tail cursor."""
    return read_block(state, state.read_cursor, now)


def verify_read(state: ClientState, msg: ReadResponse,
                now: float) -> ReadOutcome:
    """Classifies a read response without changing any state.

    An unavailable answer signed longer than the freshness window before now
    says nothing about the current log and is rejected.
    """

    if msg.edge != state.edge or \
            not model.verify_value(msg, state.keyring.public(state.edge)):
        return ReadOutcome.REJECTED
    if msg.status == ReadStatus.UNAVAILABLE:
        if msg.timestamp < now - state.freshness.window_ms:
            return ReadOutcome.REJECTED
        return ReadOutcome.UNAVAILABLE
    block = msg.block
    if block is None or block.bid != msg.bid or block.edge != msg.edge:
        return ReadOutcome.REJECTED
    if msg.status == ReadStatus.PHASE2:
        proof = msg.proof
        if proof is None or proof.bid != msg.bid or \
                proof.edge != msg.edge or \
                not model.verify_value(proof,
                                       state.keyring.public(state.cloud)) or \
                proof.digest != model.block_digest(block):
            return ReadOutcome.REJECTED
        return ReadOutcome.PHASE2
    return ReadOutcome.PHASE1


def _provable_omission(state: ClientState, msg: ReadResponse) -> bool:
    gossip = state.latest_gossip
    return gossip is not None and msg.bid < gossip.log_size and \
        msg.timestamp >= gossip.timestamp


def on_read_response(state: ClientState, msg: ReadResponse,
                     now: float) -> typing.List[Outbound]:
    """Applies a read response to the oldest read of that block."""

    queue = state.reads.get(msg.bid)
    if not queue:
        return []
    outcome = verify_read(state, msg, now)
    if outcome == ReadOutcome.REJECTED:
        state.log_event("warn", "read", "rejected", msg.bid)

        # A proof that is validly signed but does not match the signed block
        # proves the edge wrong.
        if model.verify_value(msg, state.keyring.public(state.edge)) and \
                msg.proof is not None and msg.block is not None and \
                model.verify_value(msg.proof,
                                   state.keyring.public(state.cloud)):
            op = state.ops[queue.popleft()]
            op.outcome = ReadOutcome.REJECTED.value
            _advance(op, Phase.DISPUTED, now)
            return [_dispute(state, DisputeKind.READ, msg, msg.bid)]
        return []

    op = state.ops[queue.popleft()]
    op.evidence = msg
    op.outcome = outcome.value
    if outcome == ReadOutcome.UNAVAILABLE:
        _advance(op, Phase.UNAVAILABLE, now)
        if _provable_omission(state, msg):
            state.skipped.add(msg.bid)
            _skip_cursor(state)
            return [_dispute(state, DisputeKind.OMISSION, msg, msg.bid)]
        state.unavailable[msg.bid] = msg
        return []

    if msg.bid == state.read_cursor:
        state.read_cursor += 1
        _skip_cursor(state)
    if outcome == ReadOutcome.PHASE2 or state.trusted_service:
        _commit(op, now)
        return []
    _advance(op, Phase.PHASE1, now)
    proof = state.proof_cache.get(msg.bid)
    if proof is not None:
        return _check_block_proof(state, op, proof, now)
    _wait_for_proof(state, op, msg.bid)
    return []


def _skip_cursor(state: ClientState):
    while state.read_cursor in state.skipped:
        state.read_cursor += 1


def on_gossip(state: ClientState, msg: GossipMsg,
              now: float) -> typing.List[Outbound]:
    """Disputes stored unavailable answers the gossip proves false.

    An answer is provably false when its bid is below the gossiped log size
    and it was given no earlier than the gossip. Older answers may have been
    true when given, so those blocks are read again.
    """

    if msg.edge != state.edge or \
            not model.verify_value(msg, state.keyring.public(state.cloud)):
        state.log_event("warn", "drop", "bad_gossip")
        return []
    if state.latest_gossip is not None and \
            msg.timestamp <= state.latest_gossip.timestamp:
        return []
    state.latest_gossip = msg

    out = []
    for bid in sorted(state.unavailable):
        if bid >= msg.log_size:
            continue
        statement = state.unavailable.pop(bid)
        if _provable_omission(state, statement):
            state.skipped.add(bid)
            out.append(_dispute(state, DisputeKind.OMISSION, statement, bid))
        else:
            out.append(Outbound(state.edge, read_block(state, bid, now)))
    _skip_cursor(state)
    return out


# Gets.

def get(state: ClientState, key: int, now: float) -> GetRequest:
    op = state.new_op(OpKind.GET, now, key=key)
    return _request_get(state, op)


def _request_get(state: ClientState, op: PendingOp) -> GetRequest:
    req_id = state.next_req_id
    state.next_req_id += 1
    state.gets[req_id] = op.op_id
    return GetRequest(req_id, op.key)


def verify_get(state: ClientState, bundle: model.GetProofBundle, key: int,
               now: float) -> GetResult:
    """Verifies a bundle and checks the global root is fresh enough."""

    result = lsmerkle.verify_get_proof(bundle, key,
                                       state.keyring.public(state.cloud),
                                       state.keyring, state.edge)
    if result.status == GetStatus.INVALID or state.trusted_service:
        return result
    if bundle.global_root.timestamp < now - state.freshness.window_ms:
        return GetResult(GetStatus.STALE, reason="global root too old")
    return result


def _settle_get_block(state: ClientState, op: PendingOp,
                      proof: model.BlockProof,
                      now: float) -> typing.List[Outbound]:
    for l0_page in op.evidence.bundle.l0_pages:
        if l0_page.block.bid == proof.bid:
            if model.block_digest(l0_page.block) != proof.digest:
                _advance(op, Phase.DISPUTED, now)
                return [_dispute(state, DisputeKind.GET, op.evidence, op.key)]
    op.pending_bids.discard(proof.bid)
    if not op.pending_bids:
        _advance(op, Phase.PHASE2, now)
    return []


def on_get_response(state: ClientState, msg: GetResponse,
                    now: float) -> typing.List[Outbound]:
    op_id = state.gets.pop(msg.req_id, None)
    if op_id is None:
        return []
    op = state.ops[op_id]
    if op.phase != Phase.SENT or msg.key != op.key or \
            msg.edge != state.edge or \
            not model.verify_value(msg, state.keyring.public(state.edge)):
        state.log_event("warn", "drop", "bad_get_response")
        return []

    result = verify_get(state, msg.bundle, op.key, now)
    op.outcome = result.status.value
    if result.status == GetStatus.INVALID:
        state.log_event("warn", "get", "invalid", result.reason)
        _advance(op, Phase.DISPUTED, now)
        return [_dispute(state, DisputeKind.GET, msg, op.key)]
    if result.status == GetStatus.STALE:
        if op.retries < state.max_retries:
            op.retries += 1
            return [Outbound(state.edge, _request_get(state, op))]
        _advance(op, Phase.STALE, now)
        return []

    op.evidence = msg
    op.value = result.value
    if state.trusted_service or not result.pending_bids:
        _commit(op, now)
        return []

    _advance(op, Phase.PHASE1, now)
    op.pending_bids = set(result.pending_bids)
    out = []
    for bid in sorted(result.pending_bids):
        proof = state.proof_cache.get(bid)
        if proof is not None:
            out.extend(_settle_get_block(state, op, proof, now))
            if op.phase != Phase.PHASE1:
                return out
        else:
            _wait_for_proof(state, op, bid)
    return out


# Timers.

def check_timeouts(state: ClientState, now: float) -> typing.List[Outbound]:
    """Disputes Phase I ops left without a proof and expires silent ones.

    Ops never answered carry no signed statement to dispute.
    """

    timeout = state.freshness.dispute_timeout_ms
    out = []
    for op in state.ops.values():
        if op.phase == Phase.PHASE1 and now - op.phase1_at > timeout:
            _advance(op, Phase.DISPUTED, now)
            if op.kind == OpKind.READ:
                out.append(_dispute(state, DisputeKind.READ, op.evidence,
                                    op.bid))
            elif op.kind == OpKind.GET:
                out.append(_dispute(state, DisputeKind.GET, op.evidence,
                                    op.key))
            else:
                out.append(_dispute(state, DisputeKind.ADD, op.evidence,
                                    op.seq))
        elif op.phase == Phase.SENT and now - op.issued_at > timeout:
            _advance(op, Phase.EXPIRED, now)
            state.log_event("warn", "op", "expired", op.op_id)
    return out


def is_settled(state: ClientState) -> bool:
    """True when every op is final and no unavailable answer awaits gossip."""

    if any(not op.terminal for op in state.ops.values()):
        return False
    if not state.unavailable or not state.expects_gossip:
        return True
    gossip = state.latest_gossip
    if gossip is None:
        return False
    return all(bid >= gossip.log_size and
               statement.timestamp < gossip.timestamp
               for bid, statement in state.unavailable.items())


class ClientNode(Node):
    """Adapts ClientState to the simulated network."""

    component = "client"

    def __init__(self, state: ClientState):
        super().__init__(state.me, state.logger)
        self.state = state

    def remote_add_response(self, src, msg, now):
        return on_add_response(self.state, msg, now)

    def remote_block_proof(self, src, msg, now):
        return on_block_proof(self.state, msg, now)

    def remote_read_response(self, src, msg, now):
        return on_read_response(self.state, msg, now)

    def remote_get_response(self, src, msg, now):
        return on_get_response(self.state, msg, now)

    def remote_gossip(self, src, msg, now):
        return on_gossip(self.state, msg, now)

    def remote_verdict(self, src, msg, now):
        if src == self.state.cloud and \
                model.verify_value(msg, self.state.keyring.public(src)):
            self.state.verdicts.append(msg)
        return []

    def tick(self, now):
        return check_timeouts(self.state, now)

    def is_settled(self) -> bool:
        return is_settled(self.state)
