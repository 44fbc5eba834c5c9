"""The trusted cloud node.

The cloud keeps a write-once registry of block digests per edge, merges
index levels for the edges, gossips certified log sizes to clients and judges
disputes. It never sees block contents, except in the edge-baseline wiring
where blocks are uploaded whole.
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
from Networking.model import (AddResponse, BlockCertify, BlockProof,
                              BlockProofMsg, BlockUpload, DisputeKind,
                              DisputeMsg, GetResponse, GlobalRoot, GossipMsg,
                              LevelRoot, MergeRequest, MergeResponse,
                              ReadResponse, ReadStatus, Verdict,
                              VerdictReason)
from Nodes.node import Node, Outbound


@dataclasses.dataclass
class CloudState:
    """Everything the cloud knows.

    Attributes:
        me (NodeId): The cloud.
        keys (KeyPair): The cloud's signing keys.
        keyring (KeyRing): Public keys of every node.
        thresholds (tuple): Index level thresholds shared with the edges.
        page_size (int): Entries per merged page.
        edge_clients (dict): Edge to the clients that gossip goes to.
        registry (dict): (edge, bid) to the first certified digest.
        certified_at (dict): (edge, bid) to the time it was certified.
        proofs (dict): (edge, bid) to the issued BlockProof.
        log_size (dict): Edge to its contiguous certified prefix length.
        merge_watermark (dict): Edge to its first L0 block not yet merged.
        level_roots (dict): Edge to {level: LevelRoot}, the cloud's record.
        global_roots (dict): Edge to its latest GlobalRoot.
        last_merge (dict): Edge to its latest MergeResponse.
        merged_entries (dict): Edge to the (client, seq) of every entry it
            has merged. Later copies are replays and are left out.
        verdicts (list): Verdicts naming an edge as malicious.
        rulings (list): Every verdict issued, including acquittals.
        merge_overdue (int): Certifications that found an edge's unmerged
            backlog above twice the L0 threshold.
        gossip_interval_ms (float): Time between gossip rounds. 0 disables.
    """

    me: crypto.NodeId
    keys: crypto.KeyPair
    keyring: crypto.KeyRing
    thresholds: typing.Tuple[int, ...] = lsmerkle.DEFAULT_THRESHOLDS
    page_size: int = lsmerkle.DEFAULT_PAGE_SIZE
    edge_clients: dict = dataclasses.field(default_factory=dict)
    registry: dict = dataclasses.field(default_factory=dict)
    certified_at: dict = dataclasses.field(default_factory=dict)
    proofs: dict = dataclasses.field(default_factory=dict)
    log_size: dict = dataclasses.field(default_factory=dict)
    merge_watermark: dict = dataclasses.field(default_factory=dict)
    level_roots: dict = dataclasses.field(default_factory=dict)
    global_roots: dict = dataclasses.field(default_factory=dict)
    last_merge: dict = dataclasses.field(default_factory=dict)
    merged_entries: dict = dataclasses.field(default_factory=dict)
    verdicts: list = dataclasses.field(default_factory=list)
    rulings: list = dataclasses.field(default_factory=list)
    merge_overdue: int = 0
    gossip_interval_ms: float = 0.0
    last_gossip_at: float = 0.0
    logger: Logger = None

    def __post_init__(self):
        self.thresholds = tuple(self.thresholds)
        if self.page_size < 1:
            raise ValueError("page_size must be positive")
        if self.logger is None:
            self.logger = Logger()

    def log_event(self, level, category, key, value=""):
        self.logger.event("cloud", level, category, key, value, node=self.me)


def _sign(state: CloudState, value):
    return model.sign_value(value, state.keys.secret)


def _rule(state: CloudState, edge: typing.Optional[crypto.NodeId],
          reason: VerdictReason, subject: int, now: float,
          disputant: crypto.NodeId = None) -> Verdict:
    """Issues a verdict. A repeated conviction returns the first one."""

    if reason in model.CONVICTING_REASONS:
        for verdict in state.verdicts:
            if verdict.edge == edge and verdict.reason == reason and \
                    verdict.subject == subject:
                return verdict
    verdict = _sign(state, Verdict(edge, reason, disputant, subject, now, b""))
    state.rulings.append(verdict)
    if verdict.convicting:
        state.verdicts.append(verdict)
        state.log_event("error", "verdict", reason.name.lower(), edge)
    else:
        state.log_event("info", "ruling", reason.name.lower(), edge)
    return verdict


def bootstrap(state: CloudState, edge: crypto.NodeId, now: float) -> \
        typing.Tuple[typing.Tuple[LevelRoot, ...], GlobalRoot]:
    """Signs the genesis roots of an edge: every level empty, watermark 0."""

    roots = {level: _sign(state, LevelRoot(edge, level, lsmerkle.EMPTY_ROOT,
                                           0, b""))
             for level in range(1, len(state.thresholds))}
    ordered = tuple(roots[level] for level in sorted(roots))
    global_root = _sign(state, GlobalRoot(edge, lsmerkle.global_hash(ordered),
                                          now, 0, b""))
    state.level_roots[edge] = roots
    state.global_roots[edge] = global_root
    state.merge_watermark[edge] = 0
    state.log_size.setdefault(edge, 0)
    return ordered, global_root


def _certify(state: CloudState, edge: crypto.NodeId, bid: int, digest: bytes,
             now: float) -> typing.List[Outbound]:
    key = (edge, bid)
    existing = state.registry.get(key)
    if existing is None:
        state.registry[key] = digest
        state.certified_at[key] = now
        state.proofs[key] = _sign(state, BlockProof(edge, bid, digest, b""))
        size = state.log_size.get(edge, 0)
        while (edge, size) in state.registry:
            size += 1
        state.log_size[edge] = size
        backlog = size - state.merge_watermark.get(edge, 0)
        if backlog > 2 * state.thresholds[0]:
            state.merge_overdue += 1
            state.log_event("warn", "merge", "overdue", edge)
    elif existing != digest:
        return [Outbound(edge, _rule(state, edge, VerdictReason.EQUIVOCATION,
                                     bid, now))]
    return [Outbound(edge, BlockProofMsg(state.proofs[key]))]


def handle_block_certify(state: CloudState, src: crypto.NodeId,
                         msg: BlockCertify,
                         now: float) -> typing.List[Outbound]:
    """Certifies a digest the first time a bid is seen.

    A retry with the same digest gets the same proof back. A second,
    different digest for a bid is equivocation.
    """

    if src != msg.edge or \
            not model.verify_value(msg, state.keyring.public(msg.edge)):
        state.log_event("warn", "drop", "bad_certify_signature", src)
        return []
    return _certify(state, msg.edge, msg.bid, msg.digest, now)


def handle_block_upload(state: CloudState, src: crypto.NodeId,
                        msg: BlockUpload,
                        now: float) -> typing.List[Outbound]:
    """Certifies a whole block after checking every entry itself."""

    block = msg.block
    if src != msg.edge or block.edge != msg.edge or \
            not model.verify_value(msg, state.keyring.public(msg.edge)):
        state.log_event("warn", "drop", "bad_upload_signature", src)
        return []
    for entry in block.entries:
        if not model.verify_value(entry, state.keyring.public(entry.client)):
            state.log_event("warn", "drop", "bad_entry_signature", src)
            return []
    return _certify(state, msg.edge, block.bid, model.block_digest(block), now)


def _merge_failure(state: CloudState, msg: MergeRequest) -> \
        typing.Optional[str]:
    """Returns why a merge request cannot be trusted, or None."""

    edge = msg.edge
    recorded = state.level_roots.get(edge)
    if recorded is None:
        return "edge was never bootstrapped"
    if msg.level >= len(state.thresholds) - 1:
        return "the last level is never merged"

    # L0 blocks must be the next certified blocks after the watermark.
    if msg.level == 0:
        if not msg.l0_pages or msg.upper:
            return "level 0 merge without L0 pages"
        watermark = state.merge_watermark[edge]
        for position, l0_page in enumerate(msg.l0_pages):
            block = l0_page.block
            if block.edge != edge or block.bid != watermark + position:
                return "L0 blocks are not contiguous from the watermark"
            if state.registry.get((edge, block.bid)) != \
                    model.block_digest(block):
                return "L0 block " + str(block.bid) + " is not certified"
    else:
        if msg.l0_pages:
            return "L0 pages in a deeper merge"
        root = recorded[msg.level]
        if lsmerkle.merkle_root(msg.upper) != root.root or \
                len(msg.upper) != root.page_count:
            return "upper pages do not match the level root"

    root = recorded[msg.level + 1]
    if lsmerkle.merkle_root(msg.lower) != root.root or \
            len(msg.lower) != root.page_count:
        return "lower pages do not match the level root"

    # The edge's roots must be the ones the cloud last signed.
    for level_root in msg.level_roots:
        if recorded.get(level_root.level) != level_root:
            return "level root " + str(level_root.level) + " is not current"
    return None


def handle_merge_request(state: CloudState, src: crypto.NodeId,
                         msg: MergeRequest,
                         now: float) -> typing.List[Outbound]:
    """Verifies and performs a merge, or convicts the edge of a bad one."""

    if src != msg.edge or \
            not model.verify_value(msg, state.keyring.public(msg.edge)):
        state.log_event("warn", "drop", "bad_merge_signature", src)
        return []
    edge = msg.edge
    previous = state.last_merge.get(edge)
    if previous is not None and previous.merge_id == msg.merge_id and \
            previous.level == msg.level:
        return [Outbound(edge, previous)]

    failure = _merge_failure(state, msg)
    if failure is not None:
        state.log_event("error", "merge", "rejected", failure)
        return [Outbound(edge, _rule(state, edge, VerdictReason.BAD_MERGE,
                                     msg.merge_id, now))]

    blocks = [l0_page.block for l0_page in msg.l0_pages]
    seen = state.merged_entries.setdefault(edge, set())
    shipped = sum(len(block.entries) for block in blocks)
    before = len(seen)
    pages = lsmerkle.perform_merge(
        msg.level, blocks, msg.upper, msg.lower, state.page_size, now,
        msg.merge_id, seen)
    replayed = shipped - (len(seen) - before)
    if replayed:
        state.log_event("warn", "merge", "replayed_entries", replayed)

    recorded = state.level_roots[edge]
    changed = []
    if msg.level > 0:
        changed.append(LevelRoot(edge, msg.level, lsmerkle.EMPTY_ROOT, 0, b""))
    changed.append(LevelRoot(edge, msg.level + 1, lsmerkle.merkle_root(pages),
                             len(pages), b""))
    changed = tuple(_sign(state, root) for root in changed)
    for root in changed:
        recorded[root.level] = root
    state.merge_watermark[edge] += len(msg.l0_pages)

    ordered = tuple(recorded[level] for level in sorted(recorded))
    global_root = _sign(state, GlobalRoot(
        edge, lsmerkle.global_hash(ordered), now,
        state.merge_watermark[edge], b""))
    state.global_roots[edge] = global_root

    response = _sign(state, MergeResponse(edge, msg.merge_id, msg.level,
                                          tuple(pages), changed, global_root,
                                          b""))
    state.last_merge[edge] = response
    state.log_event("info", "merge", "performed", msg.level)
    return [Outbound(edge, response)]


def gossip(state: CloudState, now: float) -> typing.List[Outbound]:
    """Signs each edge's certified log size and sends it to its clients."""

    out = []
    for edge, clients in state.edge_clients.items():
        message = _sign(state, GossipMsg(edge, state.log_size.get(edge, 0),
                                         now, b""))
        out.extend(Outbound(client, message) for client in clients)
    state.last_gossip_at = now
    return out


def _judge_statement(state: CloudState, edge: crypto.NodeId, bid: int,
                     block: model.Block, now: float,
                     disputant: crypto.NodeId) -> Verdict:
    registered = state.registry.get((edge, bid))
    if registered is None:
        return _rule(state, edge, VerdictReason.UNRESPONSIVE, bid, now,
                     disputant)
    if block.bid != bid or block.edge != edge or \
            model.block_digest(block) != registered:
        return _rule(state, edge, VerdictReason.LIED, bid, now, disputant)
    return _rule(state, edge, VerdictReason.NONE, bid, now, disputant)


def _judge(state: CloudState, msg: DisputeMsg, now: float) -> Verdict:
    disputant = msg.disputant
    try:
        evidence = model.decode(msg.evidence)
    except model.WireError:
        return _rule(state, None, VerdictReason.INVALID_EVIDENCE,
                     msg.subject, now, disputant)

    if msg.kind == DisputeKind.ADD and isinstance(evidence, AddResponse):
        edge = evidence.block.edge
        if not model.verify_value(evidence, state.keyring.public(edge)):
            return _rule(state, None, VerdictReason.INVALID_EVIDENCE,
                         msg.subject, now, disputant)
        promised = [entry for entry in evidence.block.entries
                    if entry.identity == (disputant, msg.subject)]
        if not promised:
            return _rule(state, edge, VerdictReason.INVALID_EVIDENCE,
                         msg.subject, now, disputant)
        return _judge_statement(state, edge, evidence.bid, evidence.block,
                                now, disputant)

    if isinstance(evidence, ReadResponse) and \
            msg.kind in (DisputeKind.READ, DisputeKind.OMISSION):
        edge = evidence.edge
        if not model.verify_value(evidence, state.keyring.public(edge)):
            return _rule(state, None, VerdictReason.INVALID_EVIDENCE,
                         msg.subject, now, disputant)
        if evidence.status == ReadStatus.UNAVAILABLE:
            certified_at = state.certified_at.get((edge, evidence.bid))
            if certified_at is not None and \
                    certified_at <= evidence.timestamp:
                return _rule(state, edge, VerdictReason.OMISSION,
                             evidence.bid, now, disputant)
            return _rule(state, edge, VerdictReason.NONE, evidence.bid, now,
                         disputant)
        if evidence.block is None:
            return _rule(state, edge, VerdictReason.INVALID_EVIDENCE,
                         evidence.bid, now, disputant)
        return _judge_statement(state, edge, evidence.bid, evidence.block,
                                now, disputant)

    if msg.kind == DisputeKind.GET and isinstance(evidence, GetResponse):
        edge = evidence.edge
        if not model.verify_value(evidence, state.keyring.public(edge)):
            return _rule(state, None, VerdictReason.INVALID_EVIDENCE,
                         msg.subject, now, disputant)
        result = lsmerkle.verify_get_proof(
            evidence.bundle, evidence.key, state.keys.public, state.keyring,
            edge)
        if result.status == lsmerkle.GetStatus.INVALID:
            return _rule(state, edge, VerdictReason.LIED, evidence.key, now,
                         disputant)
        for l0_page in evidence.bundle.l0_pages:
            block = l0_page.block
            registered = state.registry.get((edge, block.bid))
            if registered is not None and \
                    registered != model.block_digest(block):
                return _rule(state, edge, VerdictReason.LIED, evidence.key,
                             now, disputant)
        return _rule(state, edge, VerdictReason.NONE, evidence.key, now,
                     disputant)

    return _rule(state, None, VerdictReason.INVALID_EVIDENCE, msg.subject,
                 now, disputant)


def handle_dispute(state: CloudState, src: crypto.NodeId, msg: DisputeMsg,
                   now: float) -> typing.List[Outbound]:
    """Judges a signed edge statement against the registry.

    Returns the verdict to the disputant.
    """

    if src != msg.disputant or \
            not model.verify_value(msg, state.keyring.public(msg.disputant)):
        state.log_event("warn", "drop", "bad_dispute_signature", src)
        return []
    return [Outbound(src, _judge(state, msg, now))]


def tick(state: CloudState, now: float) -> typing.List[Outbound]:
    if state.gossip_interval_ms > 0 and \
            now - state.last_gossip_at >= state.gossip_interval_ms:
        return gossip(state, now)
    return []


class CloudNode(Node):
    """Adapts CloudState to the simulated network."""

    component = "cloud"

    def __init__(self, state: CloudState):
        super().__init__(state.me, state.logger)
        self.state = state

    def remote_block_certify(self, src, msg, now):
        return handle_block_certify(self.state, src, msg, now)

    def remote_block_upload(self, src, msg, now):
        return handle_block_upload(self.state, src, msg, now)

    def remote_merge_request(self, src, msg, now):
        return handle_merge_request(self.state, src, msg, now)

    def remote_dispute(self, src, msg, now):
        return handle_dispute(self.state, src, msg, now)

    def tick(self, now):
        return tick(self.state, now)
