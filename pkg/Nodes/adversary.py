"""Byzantine edge behaviours, applied to the messages of an honest edge.

ByzantineEdge runs the honest edge state machine unchanged and rewrites what
it sends. Every forged statement is signed with the edge's real key.
"""

# Python imports.
import dataclasses
import enum
import typing

# External imports.

# Local imports.
from Helpers import crypto
from Index import lsmerkle
from Networking import model
from Networking.model import (AddResponse, Block, BlockCertify, GetResponse,
                              ReadResponse, ReadStatus)
from Nodes.edge import EdgeNode
from Nodes.node import Node, Outbound


class Behavior(enum.Enum):
    NONE = "none"
    EQUIVOCATE = "equivocate"
    DROP_ENTRY = "drop_entry"
    WRONG_DIGEST = "wrong_digest"
    OMIT_BLOCK = "omit_block"
    STALE_SNAPSHOT = "stale_snapshot"


@dataclasses.dataclass(frozen=True)
class FaultSpec:
    """One misbehaviour of one edge.

    Attributes:
        behavior (Behavior): What the edge does.
        bid (int): Target block for equivocation, wrong digests and omission.
        clients_b (tuple): Client ids shown the second version of an
            equivocated block.
        client (int): Client id whose entry is dropped.
        seq (int): Sequence number of the dropped entry.
        age_ms (float): Minimum age of the snapshot served to gets.
        after_ms (float): The fault is dormant before this time.
        after_messages (int): The fault is dormant until the edge has sent
            this many messages.
    """

    behavior: Behavior = Behavior.NONE
    bid: int = 0
    clients_b: typing.Tuple[int, ...] = ()
    client: int = 0
    seq: int = 0
    age_ms: float = 0.0
    after_ms: float = 0.0
    after_messages: int = 0


class ByzantineEdge(Node):
    """Wraps an honest EdgeNode and rewrites its outbound messages.

    Attributes:
        honest (EdgeNode): The wrapped edge.
        fault (FaultSpec): The behaviour applied.
        sent (int): Messages the honest edge has produced so far.
        variants (dict): Block id to the forged version of that block.
        snapshots (list): (global root timestamp, index copy) for every
            global root the edge has installed.
    """

    component = "adversary"

    def __init__(self, honest: EdgeNode, fault: FaultSpec):
        super().__init__(honest.me, honest.logger)
        self.honest = honest
        self.fault = fault
        self.sent = 0
        self.variants = {}
        self.snapshots = []
        if fault.behavior == Behavior.WRONG_DIGEST:
            honest.state.strict = False
        self._record_snapshot()

    @property
    def state(self):
        return self.honest.state

    def active(self, now: float) -> bool:
        return self.fault.behavior != Behavior.NONE and \
            now >= self.fault.after_ms and \
            self.sent >= self.fault.after_messages

    def receive(self, src, msg, now):
        out = self.honest.receive(src, msg, now)
        self._record_snapshot()
        return self._intercept_all(out, now)

    def tick(self, now):
        out = self.honest.tick(now)
        self._record_snapshot()
        return self._intercept_all(out, now)

    def flush(self, now):
        return self._intercept_all(self.honest.flush(now), now)

    def is_settled(self) -> bool:
        return self.honest.is_settled()

    def _intercept_all(self, out, now):
        rewritten = []
        for outbound in out:
            rewritten.extend(self.intercept(outbound, now))
            self.sent += 1
        return rewritten

    def _sign(self, value):
        return model.sign_value(value, self.state.keys.secret)

    def intercept(self, outbound: Outbound,
                  now: float) -> typing.List[Outbound]:
        """Returns what the edge actually sends in place of outbound."""

        if not self.active(now):
            return [outbound]
        behavior = self.fault.behavior
        msg = outbound.msg
        if behavior == Behavior.EQUIVOCATE:
            return self._equivocate(outbound)
        if behavior == Behavior.DROP_ENTRY:
            return self._drop_entry(outbound)
        if behavior == Behavior.WRONG_DIGEST and \
                isinstance(msg, BlockCertify) and msg.bid == self.fault.bid:
            garbage = crypto.hash_data(b"forged" + msg.digest)
            return [Outbound(outbound.dst, self._sign(
                dataclasses.replace(msg, digest=garbage)))]
        if behavior == Behavior.OMIT_BLOCK and \
                isinstance(msg, ReadResponse) and msg.bid == self.fault.bid \
                and msg.status != ReadStatus.UNAVAILABLE:
            self.log("info", "fault", "omitted", msg.bid)
            return [Outbound(outbound.dst, self._sign(ReadResponse(
                msg.edge, msg.bid, ReadStatus.UNAVAILABLE, msg.timestamp,
                None, None, b"")))]
        if behavior == Behavior.STALE_SNAPSHOT and \
                isinstance(msg, GetResponse):
            return [Outbound(outbound.dst, self._stale_response(msg, now))]
        return [outbound]

    # Equivocation.

    def _equivocation_variant(self, block: Block) -> Block:
        variant = self.variants.get(block.bid)
        if variant is None:
            if len(block.entries) > 1:
                entries = tuple(reversed(block.entries))
            else:
                entries = block.entries + block.entries
            variant = Block(block.edge, block.bid, entries)
            self.variants[block.bid] = variant
        return variant

    def _equivocate(self, outbound: Outbound) -> typing.List[Outbound]:
        msg = outbound.msg
        in_group_b = outbound.dst.id in self.fault.clients_b
        if isinstance(msg, AddResponse) and msg.bid == self.fault.bid \
                and in_group_b:
            variant = self._equivocation_variant(msg.block)
            return [Outbound(outbound.dst, self._sign(
                AddResponse(variant, variant.bid, b"")))]
        if isinstance(msg, ReadResponse) and msg.bid == self.fault.bid \
                and msg.block is not None and in_group_b:
            variant = self._equivocation_variant(msg.block)
            return [Outbound(outbound.dst, self._sign(dataclasses.replace(
                msg, status=ReadStatus.PHASE1, block=variant, proof=None)))]
        if isinstance(msg, BlockCertify) and msg.bid == self.fault.bid:
            variant = self._equivocation_variant(self.state.log[msg.bid])
            self.log("info", "fault", "equivocated", msg.bid)
            second = self._sign(BlockCertify(
                msg.edge, msg.bid, model.block_digest(variant), b""))
            return [outbound, Outbound(outbound.dst, second)]
        return [outbound]

    # Dropped entries.

    def _is_victim(self, entry: model.Entry) -> bool:
        return entry.client.kind == crypto.NodeKind.CLIENT and \
            entry.client.id == self.fault.client and \
            entry.seq == self.fault.seq

    def _drop_variant(self, block: Block) -> typing.Optional[Block]:
        """Returns the forged block without the victim entry, if any.

        The forged block replaces the stored one, so the edge agrees with
        the cloud and lies only to the victim.
        """

        if block.bid in self.variants:
            return self.variants[block.bid]
        if not any(self._is_victim(entry) for entry in block.entries):
            return None
        entries = tuple(entry for entry in block.entries
                        if not self._is_victim(entry))
        if not entries:
            entries = (model.new_entry(self.state.keys, self.state.noop_seq,
                                       model.NoOp()),)
            self.state.noop_seq += 1
        variant = Block(block.edge, block.bid, entries)
        self.variants[block.bid] = variant
        self.state.log[block.bid] = variant
        lsmerkle.replace_l0(self.state.lsm, variant)
        self.log("info", "fault", "dropped_entry", block.bid)
        return variant

    def _drop_entry(self, outbound: Outbound) -> typing.List[Outbound]:
        msg = outbound.msg
        if isinstance(msg, AddResponse):
            variant = self._drop_variant(msg.block)
            if variant is None or outbound.dst.id == self.fault.client:
                return [outbound]
            return [Outbound(outbound.dst, self._sign(
                AddResponse(variant, variant.bid, b"")))]
        if isinstance(msg, BlockCertify) and msg.bid in self.variants:
            return [Outbound(outbound.dst, self._sign(dataclasses.replace(
                msg, digest=model.block_digest(self.variants[msg.bid]))))]
        return [outbound]

    # Stale snapshots.

    def _record_snapshot(self):
        lsm = self.state.lsm
        if lsm.global_root is None:
            return
        if self.snapshots and \
                self.snapshots[-1][0] == lsm.global_root.timestamp:
            return
        self.snapshots.append((lsm.global_root.timestamp, lsm.snapshot()))

    def _stale_response(self, msg: GetResponse, now: float) -> GetResponse:
        """Answers from the newest snapshot at least age_ms old."""

        chosen = self.snapshots[0]
        for snapshot in self.snapshots:
            if snapshot[0] <= now - self.fault.age_ms:
                chosen = snapshot
        # Proofs that arrived since the snapshot are attached; blocks still
        # pending were subscribed to by the honest edge.
        bundle = lsmerkle.lookup(chosen[1], msg.key, self.state.proofs)
        return self._sign(dataclasses.replace(msg, bundle=bundle))
