"""Domain types and their canonical encoding.

Every structure and message is a frozen dataclass whose fields carry their
codec in the field metadata. Encoding walks the fields in declaration order,
so the class definitions below are also the byte layout described in WIRE.md:
big-endian fixed-width integers, u32 length prefixes for octet strings and
lists, a one octet presence flag for optional fields. Top level encodings are
prefixed with the type tag from Networking.message_types.

Signed types name their signature field in SIGNATURE_FIELD. The signed payload
is the type tag followed by every other field, in order.
"""

# Python imports.
import dataclasses
import enum
import math
import struct
import typing

# External imports.

# Local imports.
from Helpers import crypto
from Helpers.crypto import NodeId, NodeKind
from Networking import message_types


# Constants.

MAX_KEY = 2 ** 64 - 1
"""The largest key, standing in for infinity in page ranges."""

TYPES = {}
"""Maps type tags to their classes, filled as the classes are defined."""


class WireError(ValueError):
    """Raised for any encoding that is not exactly a valid value."""


class _Reader:
    """Consumes an octet string from the front."""

    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0

    def take(self, count: int) -> bytes:
        if count < 0 or self.pos + count > len(self.data):
            raise WireError("Truncated encoding at offset " + str(self.pos))
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def remaining(self) -> int:
        return len(self.data) - self.pos


# Codecs.

class _Int:
    def __init__(self, fmt: str):
        self.struct = struct.Struct(fmt)

    def encode(self, value, out: bytearray):
        if isinstance(value, bool) or not isinstance(value, int):
            raise WireError("Expected an integer, got " + repr(value))
        try:
            out += self.struct.pack(value)
        except struct.error as error:
            raise WireError(str(error)) from error

    def decode(self, reader: _Reader):
        return self.struct.unpack(reader.take(self.struct.size))[0]


class _Time:
    """Milliseconds as a big-endian IEEE-754 double."""

    STRUCT = struct.Struct(">d")

    def encode(self, value, out: bytearray):
        value = float(value)
        if not math.isfinite(value):
            raise WireError("Timestamps must be finite")
        out += self.STRUCT.pack(value)

    def decode(self, reader: _Reader):
        value = self.STRUCT.unpack(reader.take(8))[0]
        if not math.isfinite(value):
            raise WireError("Timestamps must be finite")
        return value


class _Bool:
    def encode(self, value, out: bytearray):
        out.append(1 if value else 0)

    def decode(self, reader: _Reader):
        flag = reader.take(1)[0]
        if flag > 1:
            raise WireError("Invalid boolean octet " + str(flag))
        return flag == 1


class _Enum:
    def __init__(self, enum_class):
        self.enum_class = enum_class

    def encode(self, value, out: bytearray):
        out.append(int(self.enum_class(value)))

    def decode(self, reader: _Reader):
        value = reader.take(1)[0]
        try:
            return self.enum_class(value)
        except ValueError as error:
            raise WireError("Invalid " + self.enum_class.__name__ + " value "
                            + str(value)) from error


class _Blob:
    """Octets with a u32 length prefix."""

    def encode(self, value, out: bytearray):
        if not isinstance(value, (bytes, bytearray)):
            raise WireError("Expected octets, got " + type(value).__name__)
        U32.encode(len(value), out)
        out += value

    def decode(self, reader: _Reader):
        return reader.take(U32.decode(reader))


class _Fixed:
    """Octets of a fixed length, without prefix."""

    def __init__(self, size: int):
        self.size = size

    def encode(self, value, out: bytearray):
        if not isinstance(value, (bytes, bytearray)) or \
                len(value) != self.size:
            raise WireError("Expected " + str(self.size) + " octets")
        out += value

    def decode(self, reader: _Reader):
        return reader.take(self.size)


class _Node:
    def encode(self, value, out: bytearray):
        if not isinstance(value, NodeId):
            raise WireError("Expected a NodeId, got " + repr(value))
        out.append(int(value.kind))
        U64.encode(value.id, out)

    def decode(self, reader: _Reader):
        kind = _Enum(NodeKind).decode(reader)
        return NodeId(kind, U64.decode(reader))


class _Optional:
    def __init__(self, inner):
        self.inner = inner

    def encode(self, value, out: bytearray):
        if value is None:
            out.append(0)
        else:
            out.append(1)
            self.inner.encode(value, out)

    def decode(self, reader: _Reader):
        if _Bool().decode(reader):
            return self.inner.decode(reader)
        return None


class _List:
    def __init__(self, inner):
        self.inner = inner

    def encode(self, value, out: bytearray):
        U32.encode(len(value), out)
        for item in value:
            self.inner.encode(item, out)

    def decode(self, reader: _Reader):
        count = U32.decode(reader)

        # Every element takes at least one octet.
        if count > reader.remaining():
            raise WireError("List count " + str(count) + " exceeds the data")
        return tuple(self.inner.decode(reader) for _ in range(count))


class _Struct:
    """A nested wire type, encoded without its tag."""

    def __init__(self, wire_class):
        self.wire_class = wire_class

    def encode(self, value, out: bytearray):
        if not isinstance(value, self.wire_class):
            raise WireError("Expected " + self.wire_class.__name__ + ", got "
                            + type(value).__name__)
        _encode_fields(value, out)

    def decode(self, reader: _Reader):
        return _decode_fields(self.wire_class, reader)


U8 = _Int(">B")
U32 = _Int(">I")
U64 = _Int(">Q")
TIME = _Time()
BOOL = _Bool()
BLOB = _Blob()
DIGEST = _Fixed(crypto.DIGEST_SIZE)
SIGNATURE = BLOB
NODE = _Node()


def wire(codec):
    """Declares a dataclass field encoded with codec."""
    return dataclasses.field(metadata={"codec": codec})


def _encode_fields(value, out: bytearray, skip: str = None):
    for field in dataclasses.fields(value):
        if field.name != skip:
            field.metadata["codec"].encode(getattr(value, field.name), out)


def _decode_fields(wire_class, reader: _Reader):
    values = {}
    for field in dataclasses.fields(wire_class):
        values[field.name] = field.metadata["codec"].decode(reader)
    return wire_class(**values)


class WireType:
    """Base of every encodable structure and message.

    Subclasses pass their tag as a class keyword and are registered in TYPES.
    Sequence fields are stored as tuples so that equality is structural.
    """

    TAG = None
    KIND = None
    SIGNATURE_FIELD = None

    def __init_subclass__(cls, tag: int = None, **kwargs):
        super().__init_subclass__(**kwargs)
        if tag is not None:
            if tag in TYPES:
                raise ValueError("Duplicate wire tag " + str(tag))
            cls.TAG = tag
            cls.KIND = message_types.KIND_NAMES.get(tag, cls.__name__.lower())
            TYPES[tag] = cls

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if isinstance(value, list):
                object.__setattr__(self, field.name, tuple(value))


# Entry operations.

@dataclasses.dataclass(frozen=True)
class LogData:
    payload: bytes


@dataclasses.dataclass(frozen=True)
class Put:
    key: int
    value: bytes


@dataclasses.dataclass(frozen=True)
class NoOp:
    pass


class _Op:
    """Tagged entry operation: 0 LogData, 1 Put, 2 NoOp."""

    def encode(self, value, out: bytearray):
        if isinstance(value, LogData):
            out.append(0)
            BLOB.encode(value.payload, out)
        elif isinstance(value, Put):
            out.append(1)
            U64.encode(value.key, out)
            BLOB.encode(value.value, out)
        elif isinstance(value, NoOp):
            out.append(2)
        else:
            raise WireError("Unknown entry operation " + repr(value))

    def decode(self, reader: _Reader):
        tag = reader.take(1)[0]
        if tag == 0:
            return LogData(BLOB.decode(reader))
        if tag == 1:
            return Put(U64.decode(reader), BLOB.decode(reader))
        if tag == 2:
            return NoOp()
        raise WireError("Unknown entry operation tag " + str(tag))


OP = _Op()


class ReadStatus(enum.IntEnum):
    UNAVAILABLE = 0
    PHASE1 = 1
    PHASE2 = 2


class DisputeKind(enum.IntEnum):
    ADD = 0
    READ = 1
    OMISSION = 2
    GET = 3


class VerdictReason(enum.IntEnum):
    NONE = 0
    EQUIVOCATION = 1
    LIED = 2
    OMISSION = 3
    BAD_MERGE = 4
    INVALID_EVIDENCE = 5
    UNRESPONSIVE = 6


CONVICTING_REASONS = frozenset([VerdictReason.EQUIVOCATION,
                                VerdictReason.LIED,
                                VerdictReason.OMISSION,
                                VerdictReason.BAD_MERGE])
"""Reasons that name an edge as provably malicious."""


# Structures.

@dataclasses.dataclass(frozen=True)
class Entry(WireType, tag=message_types.ENTRY):
    SIGNATURE_FIELD = "client_sig"

    client: NodeId = wire(NODE)
    seq: int = wire(U64)
    op: typing.Union[LogData, Put, NoOp] = wire(OP)
    client_sig: bytes = wire(SIGNATURE)

    @property
    def identity(self) -> typing.Tuple[NodeId, int]:
        return self.client, self.seq


@dataclasses.dataclass(frozen=True)
class Block(WireType, tag=message_types.BLOCK):
    edge: NodeId = wire(NODE)
    bid: int = wire(U64)
    entries: typing.Tuple[Entry, ...] = wire(_List(_Struct(Entry)))


@dataclasses.dataclass(frozen=True)
class BlockProof(WireType, tag=message_types.BLOCK_PROOF):
    SIGNATURE_FIELD = "cloud_sig"

    edge: NodeId = wire(NODE)
    bid: int = wire(U64)
    digest: bytes = wire(DIGEST)
    cloud_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class PageEntry(WireType, tag=message_types.PAGE_ENTRY):
    """One key version. The version order is (bid, index), higher wins."""

    key: int = wire(U64)
    value: bytes = wire(BLOB)
    bid: int = wire(U64)
    index: int = wire(U32)

    @property
    def version(self) -> typing.Tuple[int, int]:
        return self.bid, self.index


@dataclasses.dataclass(frozen=True)
class Page(WireType, tag=message_types.PAGE):
    level: int = wire(U8)
    page_id: int = wire(U64)
    entries: typing.Tuple[PageEntry, ...] = wire(_List(_Struct(PageEntry)))
    min_key: int = wire(U64)
    max_key: int = wire(U64)
    created: float = wire(TIME)
    origin: int = wire(U64)


@dataclasses.dataclass(frozen=True)
class MerkleSibling(WireType, tag=message_types.MERKLE_SIBLING):
    digest: bytes = wire(DIGEST)
    right: bool = wire(BOOL)


@dataclasses.dataclass(frozen=True)
class MerklePath(WireType, tag=message_types.MERKLE_PATH):
    leaf_index: int = wire(U32)
    siblings: typing.Tuple[MerkleSibling, ...] = \
        wire(_List(_Struct(MerkleSibling)))


@dataclasses.dataclass(frozen=True)
class LevelRoot(WireType, tag=message_types.LEVEL_ROOT):
    SIGNATURE_FIELD = "cloud_sig"

    edge: NodeId = wire(NODE)
    level: int = wire(U8)
    root: bytes = wire(DIGEST)
    page_count: int = wire(U32)
    cloud_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class GlobalRoot(WireType, tag=message_types.GLOBAL_ROOT):
    """Root over all level roots.

    The watermark is the first L0 block id not yet consumed by a merge.
    """

    SIGNATURE_FIELD = "cloud_sig"

    edge: NodeId = wire(NODE)
    hash: bytes = wire(DIGEST)
    timestamp: float = wire(TIME)
    watermark: int = wire(U64)
    cloud_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class L0Page(WireType, tag=message_types.L0_PAGE):
    block: Block = wire(_Struct(Block))
    proof: typing.Optional[BlockProof] = wire(_Optional(_Struct(BlockProof)))


@dataclasses.dataclass(frozen=True)
class ProvenPage(WireType, tag=message_types.PROVEN_PAGE):
    page: Page = wire(_Struct(Page))
    path: MerklePath = wire(_Struct(MerklePath))


@dataclasses.dataclass(frozen=True)
class GetProofBundle(WireType, tag=message_types.GET_PROOF_BUNDLE):
    value_page: typing.Optional[ProvenPage] = \
        wire(_Optional(_Struct(ProvenPage)))
    l0_pages: typing.Tuple[L0Page, ...] = wire(_List(_Struct(L0Page)))
    covering_pages: typing.Tuple[ProvenPage, ...] = \
        wire(_List(_Struct(ProvenPage)))
    level_roots: typing.Tuple[LevelRoot, ...] = wire(_List(_Struct(LevelRoot)))
    global_root: GlobalRoot = wire(_Struct(GlobalRoot))


# Messages.

@dataclasses.dataclass(frozen=True)
class AddRequest(WireType, tag=message_types.ADD_REQUEST):
    entry: Entry = wire(_Struct(Entry))


@dataclasses.dataclass(frozen=True)
class AddResponse(WireType, tag=message_types.ADD_RESPONSE):
    SIGNATURE_FIELD = "edge_sig"

    block: Block = wire(_Struct(Block))
    bid: int = wire(U64)
    edge_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class BlockCertify(WireType, tag=message_types.BLOCK_CERTIFY):
    SIGNATURE_FIELD = "edge_sig"

    edge: NodeId = wire(NODE)
    bid: int = wire(U64)
    digest: bytes = wire(DIGEST)
    edge_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class BlockUpload(WireType, tag=message_types.BLOCK_UPLOAD):
    SIGNATURE_FIELD = "edge_sig"

    edge: NodeId = wire(NODE)
    block: Block = wire(_Struct(Block))
    edge_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class BlockProofMsg(WireType, tag=message_types.BLOCK_PROOF_MSG):
    proof: BlockProof = wire(_Struct(BlockProof))


@dataclasses.dataclass(frozen=True)
class ReadRequest(WireType, tag=message_types.READ_REQUEST):
    bid: int = wire(U64)


@dataclasses.dataclass(frozen=True)
class ReadResponse(WireType, tag=message_types.READ_RESPONSE):
    SIGNATURE_FIELD = "edge_sig"

    edge: NodeId = wire(NODE)
    bid: int = wire(U64)
    status: ReadStatus = wire(_Enum(ReadStatus))
    timestamp: float = wire(TIME)
    block: typing.Optional[Block] = wire(_Optional(_Struct(Block)))
    proof: typing.Optional[BlockProof] = wire(_Optional(_Struct(BlockProof)))
    edge_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class GossipMsg(WireType, tag=message_types.GOSSIP):
    SIGNATURE_FIELD = "cloud_sig"

    edge: NodeId = wire(NODE)
    log_size: int = wire(U64)
    timestamp: float = wire(TIME)
    cloud_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class DisputeMsg(WireType, tag=message_types.DISPUTE):
    """A client's request for judgement.

    The evidence is the canonical encoding of a signed edge statement. The
    subject is the disputed sequence number, block id or key.
    """

    SIGNATURE_FIELD = "client_sig"

    disputant: NodeId = wire(NODE)
    kind: DisputeKind = wire(_Enum(DisputeKind))
    evidence: bytes = wire(BLOB)
    subject: int = wire(U64)
    client_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class GetRequest(WireType, tag=message_types.GET_REQUEST):
    req_id: int = wire(U64)
    key: int = wire(U64)


@dataclasses.dataclass(frozen=True)
class GetResponse(WireType, tag=message_types.GET_RESPONSE):
    SIGNATURE_FIELD = "edge_sig"

    edge: NodeId = wire(NODE)
    req_id: int = wire(U64)
    key: int = wire(U64)
    timestamp: float = wire(TIME)
    bundle: GetProofBundle = wire(_Struct(GetProofBundle))
    edge_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class MergeRequest(WireType, tag=message_types.MERGE_REQUEST):
    """Asks the cloud to merge level into level + 1.

    A level 0 merge carries L0 pages in l0_pages and leaves upper empty;
    otherwise upper holds the pages of level. lower holds the pages of
    level + 1 and level_roots the edge's current signed roots.
    """

    SIGNATURE_FIELD = "edge_sig"

    edge: NodeId = wire(NODE)
    merge_id: int = wire(U64)
    level: int = wire(U8)
    l0_pages: typing.Tuple[L0Page, ...] = wire(_List(_Struct(L0Page)))
    upper: typing.Tuple[Page, ...] = wire(_List(_Struct(Page)))
    lower: typing.Tuple[Page, ...] = wire(_List(_Struct(Page)))
    level_roots: typing.Tuple[LevelRoot, ...] = wire(_List(_Struct(LevelRoot)))
    edge_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class MergeResponse(WireType, tag=message_types.MERGE_RESPONSE):
    SIGNATURE_FIELD = "cloud_sig"

    edge: NodeId = wire(NODE)
    merge_id: int = wire(U64)
    level: int = wire(U8)
    pages: typing.Tuple[Page, ...] = wire(_List(_Struct(Page)))
    level_roots: typing.Tuple[LevelRoot, ...] = wire(_List(_Struct(LevelRoot)))
    global_root: GlobalRoot = wire(_Struct(GlobalRoot))
    cloud_sig: bytes = wire(SIGNATURE)


@dataclasses.dataclass(frozen=True)
class Verdict(WireType, tag=message_types.VERDICT):
    SIGNATURE_FIELD = "cloud_sig"

    edge: typing.Optional[NodeId] = wire(_Optional(NODE))
    reason: VerdictReason = wire(_Enum(VerdictReason))
    disputant: typing.Optional[NodeId] = wire(_Optional(NODE))
    subject: int = wire(U64)
    timestamp: float = wire(TIME)
    cloud_sig: bytes = wire(SIGNATURE)

    @property
    def convicting(self) -> bool:
        return self.reason in CONVICTING_REASONS


# Encoding.

def canonical_encode(value: WireType) -> bytes:
    """Encodes value as its tag followed by its fields."""

    if not isinstance(value, WireType) or value.TAG is None:
        raise WireError("Not an encodable type: " + type(value).__name__)
    out = bytearray([value.TAG])
    _encode_fields(value, out)
    return bytes(out)


def decode(data: bytes, expected: type = None) -> WireType:
    """Decodes a tagged encoding, rejecting anything but an exact fit.

    Args:
        data (bytes): The encoding.
        expected (type): If given, the class the encoding must be.

    Returns:
        WireType: The decoded value.

    Raises:
        WireError: If the data is truncated, has trailing octets, holds out of
        range values or is not of the expected type.
    """

    reader = _Reader(data)
    tag = reader.take(1)[0]
    wire_class = TYPES.get(tag)
    if wire_class is None:
        raise WireError("Unknown type tag " + str(tag))
    if expected is not None and wire_class is not expected:
        raise WireError("Expected " + expected.__name__ + ", got "
                        + wire_class.__name__)
    value = _decode_fields(wire_class, reader)
    if reader.remaining() != 0:
        raise WireError(str(reader.remaining()) + " trailing octets")
    return value


def signing_payload(value: WireType) -> bytes:
    """Returns the octets a signed value's signature covers."""

    out = bytearray([value.TAG])
    _encode_fields(value, out, skip=value.SIGNATURE_FIELD)
    return bytes(out)


def sign_value(value: WireType, secret: bytes) -> WireType:
    """Returns a copy of value with its signature field filled in."""

    signature = crypto.sign(secret, signing_payload(value))
    return dataclasses.replace(value, **{value.SIGNATURE_FIELD: signature})


def verify_value(value: WireType, public: typing.Optional[bytes]) -> bool:
    """Checks the signature of a signed value. Unknown signers fail."""

    if public is None or value.SIGNATURE_FIELD is None:
        return False
    return crypto.verify(public, signing_payload(value),
                         getattr(value, value.SIGNATURE_FIELD))


def block_digest(block: Block) -> bytes:
    """The digest certified for a block; covers the edge, bid and entries."""
    return crypto.hash_data(canonical_encode(block))


def message_size(value: WireType) -> int:
    return len(canonical_encode(value))


def new_entry(keys: crypto.KeyPair, seq: int, op) -> Entry:
    """Creates an entry signed by the owner of keys."""
    return sign_value(Entry(keys.owner, seq, op, b""), keys.secret)
