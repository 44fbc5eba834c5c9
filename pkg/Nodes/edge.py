"""The edge node: commits entries at once and lets the cloud certify later.

An edge buffers signed client entries, seals them into blocks, answers every
contributing client immediately (Phase I) and sends the cloud only the block
digest. Cloud proofs are stored and forwarded to the clients waiting on them.
The edge also hosts the LSMerkle index and drives its merges.

The operations are functions over EdgeState returning the messages to send;
EdgeNode adapts them to the simulated network.
"""

# Python imports.
import dataclasses
import typing

# External imports.

# Local imports.
from Helpers import crypto
from Helpers.Logger import Logger
from Index import lsmerkle
from Networking import model
from Networking.model import (AddRequest, AddResponse, Block, BlockCertify,
                              BlockProofMsg, BlockUpload, GetRequest,
                              GetResponse, MergeResponse, ReadRequest,
                              ReadResponse, ReadStatus)
from Nodes.node import Node, Outbound


class EdgeInvariantError(AssertionError):
    """An honest edge received a proof that does not match its own block."""


@dataclasses.dataclass
class EdgeState:
    """Everything an edge knows.

    Attributes:
        me (NodeId): This edge.
        keys (KeyPair): The edge's signing keys.
        keyring (KeyRing): Public keys of every node.
        cloud (NodeId): The certifying cloud.
        batch_size (int): Entries per block.
        lsm (LsmState): The index.
        buffer (list): Entries waiting to be sealed.
        seen (set): (client, seq) of every accepted entry.
        next_bid (int): Id of the next block.
        log (dict): Block id to Block.
        proofs (dict): Block id to BlockProof, for certified blocks.
        pending_certify (dict): Block id to the time its certification was
            last requested, for blocks without proofs.
        certify_msgs (dict): Block id to the message that requested it.
        subscribers (dict): Block id to readers waiting for its proof.
        held (dict): Block id to add responses withheld until certification,
            when certifying synchronously.
        next_merge_id (int): Id of the next merge request.
        flush_interval_ms (float): Seal a partial buffer this long after its
            first entry. 0 disables.
        noop_interval_ms (float): Seal a NoOp block after this long without
            sealing, once nothing awaits certification. 0 disables.
        certify_retry_ms (float): Resend certification requests after this
            long. 0 disables.
        sync_certify (bool): Upload whole blocks and acknowledge only after
            certification.
        strict (bool): Raise EdgeInvariantError on mismatching proofs.
        clock_skew_ms (float): Offset of the edge clock used in signed
            timestamps.
    """

    me: crypto.NodeId
    keys: crypto.KeyPair
    keyring: crypto.KeyRing
    cloud: crypto.NodeId
    batch_size: int = 100
    lsm: lsmerkle.LsmState = None
    buffer: list = dataclasses.field(default_factory=list)
    seen: set = dataclasses.field(default_factory=set)
    next_bid: int = 0
    log: dict = dataclasses.field(default_factory=dict)
    proofs: dict = dataclasses.field(default_factory=dict)
    pending_certify: dict = dataclasses.field(default_factory=dict)
    certify_msgs: dict = dataclasses.field(default_factory=dict)
    subscribers: dict = dataclasses.field(default_factory=dict)
    held: dict = dataclasses.field(default_factory=dict)
    next_merge_id: int = 0
    noop_seq: int = 0
    buffer_started_at: float = 0.0
    last_seal_at: float = 0.0
    flush_interval_ms: float = 0.0
    noop_interval_ms: float = 0.0
    certify_retry_ms: float = 0.0
    sync_certify: bool = False
    strict: bool = True
    clock_skew_ms: float = 0.0
    logger: Logger = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lsm is None:
            self.lsm = lsmerkle.LsmState(self.me)
        if self.logger is None:
            self.logger = Logger()

    def log_event(self, level, category, key, value=""):
        self.logger.event("edge", level, category, key, value, node=self.me)

    def edge_time(self, now: float) -> float:
        return now + self.clock_skew_ms


def contributors(block: Block) -> typing.List[crypto.NodeId]:
    """The clients with entries in block, in order of first appearance."""

    clients = []
    for entry in block.entries:
        if entry.client.kind == crypto.NodeKind.CLIENT and \
                entry.client not in clients:
            clients.append(entry.client)
    return clients


def handle_add(state: EdgeState, src: crypto.NodeId, req: AddRequest,
               now: float) -> typing.List[Outbound]:
    """Buffers a valid entry and seals a block once the buffer is full.

    Entries from unknown clients, with bad signatures or already seen are
    dropped without an answer.
    """

    entry = req.entry
    if entry.client != src or entry.client.kind != crypto.NodeKind.CLIENT:
        state.log_event("warn", "drop", "foreign_entry", src)
        return []
    if not model.verify_value(entry, state.keyring.public(entry.client)):
        state.log_event("warn", "drop", "bad_entry_signature", src)
        return []
    if entry.identity in state.seen:
        state.log_event("debug", "drop", "duplicate_entry",
                        str(src) + ":" + str(entry.seq))
        return []

    state.seen.add(entry.identity)
    if not state.buffer:
        state.buffer_started_at = now
    state.buffer.append(entry)
    if len(state.buffer) >= state.batch_size:
        return seal_block(state, now)[1]
    return []


def seal_block(state: EdgeState, now: float) -> \
        typing.Tuple[typing.Optional[Block], typing.List[Outbound]]:
    """Turns the buffer into the next block.

    Returns the block with one AddResponse per contributing client and a
    data-free BlockCertify for the cloud. When certifying synchronously the
    whole block is uploaded instead and the responses are held back.
    """

    if not state.buffer:
        return None, []

    block = Block(state.me, state.next_bid, tuple(state.buffer))
    state.next_bid += 1
    state.buffer = []
    state.last_seal_at = now
    state.log[block.bid] = block
    lsmerkle.insert_l0(state.lsm, block, now)

    response = model.sign_value(AddResponse(block, block.bid, b""),
                                state.keys.secret)
    responses = [Outbound(client, response)
                 for client in contributors(block)]

    if state.sync_certify:
        upload = model.sign_value(BlockUpload(state.me, block, b""),
                                  state.keys.secret)
        state.held[block.bid] = responses
        state.certify_msgs[block.bid] = upload
        state.pending_certify[block.bid] = now
        return block, [Outbound(state.cloud, upload)]

    certify = model.sign_value(
        BlockCertify(state.me, block.bid, model.block_digest(block), b""),
        state.keys.secret)
    state.certify_msgs[block.bid] = certify
    state.pending_certify[block.bid] = now
    return block, responses + [Outbound(state.cloud, certify)]


def handle_read(state: EdgeState, src: crypto.NodeId, req: ReadRequest,
                now: float) -> ReadResponse:
    """Answers a block read as unavailable, Phase I or Phase II.

    Phase I readers are subscribed so the proof reaches them later.
    """

    block = state.log.get(req.bid)
    if block is None:
        response = ReadResponse(state.me, req.bid, ReadStatus.UNAVAILABLE,
                                state.edge_time(now), None, None, b"")
    elif req.bid in state.proofs:
        response = ReadResponse(state.me, req.bid, ReadStatus.PHASE2,
                                state.edge_time(now), block,
                                state.proofs[req.bid], b"")
    else:
        state.subscribers.setdefault(req.bid, set()).add(src)
        response = ReadResponse(state.me, req.bid, ReadStatus.PHASE1,
                                state.edge_time(now), block, None, b"")
    return model.sign_value(response, state.keys.secret)


def handle_block_proof(state: EdgeState, src: crypto.NodeId,
                       msg: BlockProofMsg,
                       now: float) -> typing.List[Outbound]:
    """Stores a cloud proof and forwards it to everyone waiting on it."""

    proof = msg.proof
    if src != state.cloud or proof.edge != state.me or \
            not model.verify_value(proof, state.keyring.public(state.cloud)):
        state.log_event("warn", "drop", "bad_proof_signature", src)
        return []
    block = state.log.get(proof.bid)
    if block is None:
        state.log_event("warn", "drop", "proof_for_unknown_block", proof.bid)
        return []
    if proof.bid in state.proofs:
        return []
    if proof.digest != model.block_digest(block):
        if state.strict:
            raise EdgeInvariantError("Proof for block " + str(proof.bid)
                                     + " does not match the stored block")
        state.log_event("warn", "proof", "digest_mismatch", proof.bid)

    state.proofs[proof.bid] = proof
    state.pending_certify.pop(proof.bid, None)
    state.certify_msgs.pop(proof.bid, None)
    out = list(state.held.pop(proof.bid, []))

    recipients = contributors(block)
    for reader in sorted(state.subscribers.pop(proof.bid, set())):
        if reader not in recipients:
            recipients.append(reader)
    forward = BlockProofMsg(proof)
    out.extend(Outbound(recipient, forward) for recipient in recipients)
    out.extend(maybe_start_merge(state, now))
    return out


def handle_get(state: EdgeState, src: crypto.NodeId, req: GetRequest,
               now: float) -> GetResponse:
    """Answers a get with a signed proof bundle.

    The requester is subscribed to every uncertified L0 block in the bundle.
    """

    bundle = lsmerkle.lookup(state.lsm, req.key, state.proofs)
    for l0_page in bundle.l0_pages:
        if l0_page.proof is None:
            state.subscribers.setdefault(l0_page.block.bid, set()).add(src)
    response = GetResponse(state.me, req.req_id, req.key,
                           state.edge_time(now), bundle, b"")
    return model.sign_value(response, state.keys.secret)


def maybe_start_merge(state: EdgeState,
                      now: float) -> typing.List[Outbound]:
    """Requests a merge of the lowest overflowing level.

    Only one merge is outstanding at a time.
    """

    if state.lsm.merge_in_flight is not None:
        return []
    level = lsmerkle.merge_candidate(state.lsm, state.proofs)
    if level is None:
        return []

    request = model.sign_value(
        lsmerkle.build_merge_request(state.lsm, level, state.next_merge_id,
                                     state.proofs),
        state.keys.secret)
    state.next_merge_id += 1
    state.lsm.merge_in_flight = request
    state.log_event("info", "merge", "requested", level)
    return [Outbound(state.cloud, request)]


def _merge_response_valid(state: EdgeState, msg: MergeResponse) -> bool:
    cloud_public = state.keyring.public(state.cloud)
    request = state.lsm.merge_in_flight
    if request is None or msg.merge_id != request.merge_id or \
            msg.level != request.level or msg.edge != state.me:
        return False
    if not model.verify_value(msg, cloud_public) or \
            not model.verify_value(msg.global_root, cloud_public):
        return False
    for root in msg.level_roots:
        if not model.verify_value(root, cloud_public):
            return False
        if root.level == msg.level + 1 and \
                root.root != lsmerkle.merkle_root(msg.pages):
            return False
    return True


def handle_merge_response(state: EdgeState, src: crypto.NodeId,
                          msg: MergeResponse,
                          now: float) -> typing.List[Outbound]:
    """Installs a merge result and checks whether another merge is due."""

    if src != state.cloud or not _merge_response_valid(state, msg):
        state.log_event("warn", "drop", "unmatched_merge_response",
                        msg.merge_id)
        return []
    lsmerkle.apply_merge_response(state.lsm, msg)
    state.log_event("info", "merge", "applied", msg.level)
    return maybe_start_merge(state, now)


def flush(state: EdgeState, now: float) -> typing.List[Outbound]:
    """Seals whatever is buffered."""
    return seal_block(state, now)[1]


def seal_noop(state: EdgeState, now: float) -> typing.List[Outbound]:
    """Seals a block holding a single edge-signed NoOp."""

    entry = model.new_entry(state.keys, state.noop_seq, model.NoOp())
    state.noop_seq += 1
    state.buffer.append(entry)
    return seal_block(state, now)[1]


def tick(state: EdgeState, now: float) -> typing.List[Outbound]:
    """Runs the opt-in timers: partial flush, NoOp blocks and retries."""

    out = []
    if state.flush_interval_ms > 0 and state.buffer and \
            now - state.buffer_started_at >= state.flush_interval_ms:
        out.extend(flush(state, now))
    if state.noop_interval_ms > 0 and not state.buffer and \
            not state.pending_certify and \
            state.lsm.merge_in_flight is None and \
            now - state.last_seal_at >= state.noop_interval_ms:
        out.extend(seal_noop(state, now))
    if state.certify_retry_ms > 0:
        for bid, sent_at in sorted(state.pending_certify.items()):
            if now - sent_at >= state.certify_retry_ms:
                state.pending_certify[bid] = now
                out.append(Outbound(state.cloud, state.certify_msgs[bid]))
                state.log_event("debug", "certify", "retry", bid)
    return out


class EdgeNode(Node):
    """Adapts EdgeState to the simulated network."""

    component = "edge"

    def __init__(self, state: EdgeState):
        super().__init__(state.me, state.logger)
        self.state = state

    def remote_add_request(self, src, msg, now):
        return handle_add(self.state, src, msg, now)

    def remote_read_request(self, src, msg, now):
        return [Outbound(src, handle_read(self.state, src, msg, now))]

    def remote_block_proof(self, src, msg, now):
        return handle_block_proof(self.state, src, msg, now)

    def remote_get_request(self, src, msg, now):
        return [Outbound(src, handle_get(self.state, src, msg, now))]

    def remote_merge_response(self, src, msg, now):
        return handle_merge_response(self.state, src, msg, now)

    def remote_verdict(self, src, msg, now):
        self.log("error", "verdict", msg.reason.name.lower(), msg.subject)
        return []

    def tick(self, now):
        return tick(self.state, now)

    def flush(self, now):
        return flush(self.state, now)

    def is_settled(self) -> bool:
        return not self.state.buffer
