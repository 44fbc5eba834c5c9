"""Hashing and signing used by every WedgeChain node.

Digests are SHA-256. Signatures are Ed25519 through PyNaCl, which is
deterministic, so identical scenarios produce byte-identical traces.
"""

# Python imports.
import dataclasses
import enum
import functools
import hashlib
import typing

# External imports.
import nacl.exceptions
import nacl.signing

# Local imports.


# Constants.

DIGEST_SIZE = 32
"""Length of a digest in octets."""

SIGNATURE_SIZE = 64
"""Length of an Ed25519 signature in octets."""

PUBLIC_KEY_SIZE = 32
"""Length of an Ed25519 public key in octets."""

SEED_SIZE = 32
"""Length of a key generation seed in octets."""

NODE_SEED_TAG = b"wedgechain-node-key"
"""Domain separation prefix for per-node key seeds."""


class NodeKind(enum.IntEnum):
    """The three roles a node can play."""

    CLIENT = 0
    EDGE = 1
    CLOUD = 2


@dataclasses.dataclass(frozen=True, order=True)
class NodeId:
    """Identifies a node within a scenario.

    Attributes:
        kind (NodeKind): The role of the node, fixed for its lifetime.
        id (int): Non-negative number, unique among nodes of the same kind.
    """

    kind: NodeKind
    id: int

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if self.id < 0:
            raise ValueError("Node ids must be non-negative: " + str(self.id))

    def __str__(self) -> str:
        return self.kind.name.lower() + str(self.id)


@dataclasses.dataclass(frozen=True)
class KeyPair:
    """An Ed25519 key pair.

    Attributes:
        public (bytes): The 32 octet verification key.
        secret (bytes): The 32 octet seed of the signing key.
        owner (NodeId): The node the pair belongs to.
    """

    public: bytes
    secret: bytes
    owner: NodeId


def hash_data(data: bytes) -> bytes:
    """Returns the SHA-256 digest of data."""
    return hashlib.sha256(data).digest()


def keygen(seed: bytes, owner: NodeId) -> KeyPair:
    """Derives a key pair from a 32 octet seed.

    Args:
        seed (bytes): The seed. The same seed always gives the same pair.
        owner (NodeId): The node the pair is generated for.

    Returns:
        KeyPair: The derived key pair.

    Raises:
        ValueError: If the seed is not exactly 32 octets.
    """

    if len(seed) != SEED_SIZE:
        raise ValueError("Key seeds must be " + str(SEED_SIZE) + " octets.")
    signing_key = nacl.signing.SigningKey(bytes(seed))
    return KeyPair(bytes(signing_key.verify_key), bytes(signing_key), owner)


@functools.lru_cache(maxsize=1024)
def _signing_key(secret: bytes) -> nacl.signing.SigningKey:
    return nacl.signing.SigningKey(secret)


@functools.lru_cache(maxsize=1024)
def _verify_key(public: bytes) -> nacl.signing.VerifyKey:
    return nacl.signing.VerifyKey(public)


def sign(secret: bytes, message: bytes) -> bytes:
    """Signs message with the secret from keygen and returns the signature."""
    return _signing_key(bytes(secret)).sign(bytes(message)).signature


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    """Checks that signature was made over exactly message by public's owner.

    Never raises: malformed keys or signatures simply fail verification.
    """

    if len(public) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        _verify_key(bytes(public)).verify(bytes(message), bytes(signature))
    except (nacl.exceptions.CryptoError, ValueError, TypeError):
        return False
    return True


def node_seed(scenario_seed: int, node: NodeId) -> bytes:
    """Derives the key seed of a node from the scenario seed."""
    return hash_data(NODE_SEED_TAG
                     + (scenario_seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
                     + bytes([int(node.kind)])
                     + node.id.to_bytes(8, "big"))


class KeyRing:
    """The public keys of every node in a scenario.

    Attributes:
        keys (dict): Maps NodeId to the node's public key.
    """

    def __init__(self):
        self.keys = {}

    @classmethod
    def generate(cls, scenario_seed: int, nodes: typing.Iterable[NodeId]) -> \
            typing.Tuple["KeyRing", typing.Dict[NodeId, KeyPair]]:
        """Creates key pairs for nodes and a ring holding their public keys.

        Args:
            scenario_seed (int): Seed the node seeds are derived from.
            nodes (Iterable): The nodes to create keys for.

        Returns:
            tuple: The ring and a dictionary of NodeId to KeyPair, with the
            form (ring, pairs).
        """

        ring = cls()
        pairs = {}
        for node in nodes:
            pairs[node] = keygen(node_seed(scenario_seed, node), node)
            ring.register(pairs[node])
        return ring, pairs

    def register(self, pair: KeyPair):
        self.keys[pair.owner] = pair.public

    def public(self, node: NodeId) -> typing.Optional[bytes]:
        """Returns the public key of node, or None if it is unknown."""
        return self.keys.get(node)

    def __contains__(self, node: NodeId) -> bool:
        return node in self.keys
