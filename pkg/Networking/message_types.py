"""The type tags and kind names used on the WedgeChain wire.

Every canonical encoding starts with one of these tags. Structures that only
appear nested inside messages are never prefixed, but their tags still seed
their digests and signatures when they are encoded on their own.
"""

# Structures.

ENTRY = 1
"""A signed client entry."""
BLOCK = 2
"""A batch of entries under an edge block id."""
BLOCK_PROOF = 3
"""The cloud's signed binding of (edge, block id, digest)."""
PAGE_ENTRY = 4
"""One key version inside an index page."""
PAGE = 5
"""An index page."""
MERKLE_SIBLING = 6
"""One step of a Merkle path."""
MERKLE_PATH = 7
"""A Merkle inclusion path."""
LEVEL_ROOT = 8
"""The cloud's signed Merkle root of one index level."""
GLOBAL_ROOT = 9
"""The cloud's signed, timestamped root over all level roots."""
L0_PAGE = 10
"""An L0 page, shipped as its source block and optional proof."""
PROVEN_PAGE = 11
"""An index page with its Merkle path."""
GET_PROOF_BUNDLE = 12
"""Everything needed to verify a key lookup."""

# Messages.

ADD_REQUEST = 32
"""Client asks an edge to log an entry."""
ADD_RESPONSE = 33
"""Edge tells a client which block holds its entry."""
BLOCK_CERTIFY = 34
"""Edge asks the cloud to certify a block digest."""
BLOCK_UPLOAD = 35
"""Edge ships a full block to the cloud for certification."""
BLOCK_PROOF_MSG = 36
"""Carries a block proof from the cloud, forwarded by the edge."""
READ_REQUEST = 37
"""Client asks an edge for a block."""
READ_RESPONSE = 38
"""Edge answers a block read."""
GOSSIP = 39
"""Cloud announces an edge's certified log size."""
DISPUTE = 40
"""Client asks the cloud to judge an edge statement."""
GET_REQUEST = 41
"""Client asks an edge for the value of a key."""
GET_RESPONSE = 42
"""Edge answers a key lookup with a proof bundle."""
MERGE_REQUEST = 43
"""Edge asks the cloud to merge two index levels."""
MERGE_RESPONSE = 44
"""Cloud returns merged pages and new roots."""
VERDICT = 45
"""Cloud's ruling on an edge."""

KIND_NAMES = {
    ADD_REQUEST: "add_request",
    ADD_RESPONSE: "add_response",
    BLOCK_CERTIFY: "block_certify",
    BLOCK_UPLOAD: "block_upload",
    BLOCK_PROOF_MSG: "block_proof",
    READ_REQUEST: "read_request",
    READ_RESPONSE: "read_response",
    GOSSIP: "gossip",
    DISPUTE: "dispute",
    GET_REQUEST: "get_request",
    GET_RESPONSE: "get_response",
    MERGE_REQUEST: "merge_request",
    MERGE_RESPONSE: "merge_response",
    VERDICT: "verdict",
}
"""Message kind names used in traces and for remote_<kind> dispatch."""
