"""The LSMerkle authenticated index.

L0 holds one page per sealed block, certified individually by the block's
BlockProof. Levels 1 and up are range partitioned, hold at most one version
per key and are Merklized; their roots are signed by the cloud, and a signed,
timestamped global root binds all level roots together.

This module holds the index state owned by an edge, the Merkle helpers, the
merge function run by the cloud, proof assembly for lookups and the client
side proof verification.
"""

# Python imports.
import bisect
import dataclasses
import enum
import typing

# External imports.

# Local imports.
from Helpers import crypto
from Networking import model
from Networking.model import (Block, BlockProof, GetProofBundle, GlobalRoot,
                              L0Page, LevelRoot, MerklePath, MerkleSibling,
                              Page, PageEntry, ProvenPage, Put)


# Constants.

EMPTY_ROOT = crypto.hash_data(b"")
"""Root of an empty level."""

DEFAULT_THRESHOLDS = (10, 10, 100, 1000)
"""Pages allowed per level before it is merged down."""

DEFAULT_PAGE_SIZE = 64
"""Entries per page produced by a merge."""


# Merkle trees.

def page_hash(page: Page) -> bytes:
    """The leaf digest of a page."""
    return crypto.hash_data(model.canonical_encode(page))


def _tree(leaves: typing.List[bytes]) -> typing.List[typing.List[bytes]]:
    """Builds every layer of the tree, leaves first.

    An odd node at the end of a layer is promoted unchanged.
    """

    layers = [list(leaves)]
    while len(layers[-1]) > 1:
        layer = layers[-1]
        parents = [crypto.hash_data(layer[i] + layer[i + 1])
                   for i in range(0, len(layer) - 1, 2)]
        if len(layer) % 2 == 1:
            parents.append(layer[-1])
        layers.append(parents)
    return layers


def merkle_root(pages: typing.Sequence[Page]) -> bytes:
    """Returns the Merkle root over the hashes of pages, in order."""

    if not pages:
        return EMPTY_ROOT
    return _tree([page_hash(page) for page in pages])[-1][0]


def merkle_path(pages: typing.Sequence[Page], index: int) -> MerklePath:
    """Returns the inclusion path of pages[index].

    Raises:
        IndexError: If index is out of range.
    """

    if index < 0 or index >= len(pages):
        raise IndexError("Page index " + str(index) + " out of range")
    siblings = []
    position = index
    for layer in _tree([page_hash(page) for page in pages])[:-1]:
        sibling = position ^ 1
        if sibling < len(layer):
            siblings.append(MerkleSibling(layer[sibling], sibling > position))
        position //= 2
    return MerklePath(index, tuple(siblings))


def verify_path(leaf: bytes, path: MerklePath, root: bytes,
                leaf_count: int = None) -> bool:
    """Checks that leaf is included under root.

    When leaf_count is given, the shape of the path is also checked: every
    sibling must sit exactly where a tree of leaf_count leaves puts it.
    """

    if leaf_count is not None:
        if path.leaf_index >= leaf_count:
            return False
        position = path.leaf_index
        width = leaf_count
        expected = []
        while width > 1:
            if position ^ 1 < width:
                expected.append(position % 2 == 0)
            position //= 2
            width = (width + 1) // 2
        if expected != [sibling.right for sibling in path.siblings]:
            return False

    current = leaf
    for sibling in path.siblings:
        if sibling.right:
            current = crypto.hash_data(current + sibling.digest)
        else:
            current = crypto.hash_data(sibling.digest + current)
    return current == root


def global_hash(level_roots: typing.Sequence[LevelRoot]) -> bytes:
    """Hash over the ordered concatenation of level roots 1..n-1."""
    return crypto.hash_data(b"".join(root.root for root in level_roots))


# Pages.

def page_from_block(block: Block, created: float = 0.0) -> Page:
    """Builds the L0 page of a block from its Put entries.

    LogData and NoOp entries are left out. The range is informational.
    """

    entries = sorted(
        (PageEntry(entry.op.key, entry.op.value, block.bid, index)
         for index, entry in enumerate(block.entries)
         if isinstance(entry.op, Put)),
        key=lambda page_entry: (page_entry.key, page_entry.index))
    min_key = entries[0].key if entries else 0
    max_key = entries[-1].key if entries else 0
    return Page(0, block.bid, tuple(entries), min_key, max_key, created,
                block.bid)


def l0_entries(blocks: typing.Iterable[Block],
               seen: typing.Optional[set] = None) -> typing.List[PageEntry]:
    """Returns the Put versions of L0 blocks, first copy of each entry only.

    An entry whose (client, seq) is already in seen, or appeared earlier in
    blocks, is a replay and contributes nothing. seen is updated in place.
    """

    seen = set() if seen is None else seen
    versions = []
    for block in blocks:
        for index, entry in enumerate(block.entries):
            if entry.identity in seen:
                continue
            seen.add(entry.identity)
            if isinstance(entry.op, Put):
                versions.append(PageEntry(entry.op.key, entry.op.value,
                                          block.bid, index))
    return versions


def merge_entries(entries: typing.Iterable[PageEntry]) -> \
        typing.List[PageEntry]:
    """Keeps the highest version of every key, sorted by key."""

    latest = {}
    for entry in entries:
        current = latest.get(entry.key)
        if current is None or entry.version > current.version:
            latest[entry.key] = entry
    return [latest[key] for key in sorted(latest)]


def cut_pages(entries: typing.Sequence[PageEntry], page_size: int, level: int,
              created: float, origin: int) -> typing.List[Page]:
    """Cuts sorted, unique entries into range partitioned pages.

    The first page starts at 0, the last ends at MAX_KEY and each page ends
    one below the first key of the next.
    """

    chunks = [tuple(entries[i:i + page_size])
              for i in range(0, len(entries), page_size)]
    pages = []
    for page_id, chunk in enumerate(chunks):
        min_key = 0 if page_id == 0 else chunk[0].key
        if page_id == len(chunks) - 1:
            max_key = model.MAX_KEY
        else:
            max_key = chunks[page_id + 1][0].key - 1
        pages.append(Page(level, page_id, chunk, min_key, max_key, created,
                          origin))
    return pages


def perform_merge(level: int, l0_blocks: typing.Sequence[Block],
                  upper: typing.Sequence[Page], lower: typing.Sequence[Page],
                  page_size: int, created: float, origin: int,
                  seen: typing.Optional[set] = None) -> typing.List[Page]:
    """Merges a level into the next one and returns the new lower pages.

    seen holds the (client, seq) of every entry merged before; replays of
    them in l0_blocks are left out.
    """

    entries = l0_entries(l0_blocks, seen)
    for page in list(upper) + list(lower):
        entries.extend(page.entries)
    return cut_pages(merge_entries(entries), page_size, level + 1, created,
                     origin)


def check_partition(pages: typing.Sequence[Page]) -> typing.Optional[str]:
    """Returns a description of the first range violation, or None."""

    if not pages:
        return None
    if pages[0].min_key != 0:
        return "first page does not start at 0"
    if pages[-1].max_key != model.MAX_KEY:
        return "last page does not end at the maximum key"
    for before, after in zip(pages, pages[1:]):
        if before.max_key != after.min_key - 1:
            return "pages " + str(before.page_id) + " and " + \
                str(after.page_id) + " are not adjacent"
    seen = set()
    for page in pages:
        keys = [entry.key for entry in page.entries]
        if keys != sorted(keys) or len(set(keys)) != len(keys):
            return "page " + str(page.page_id) + " is not sorted and unique"
        if keys and (keys[0] < page.min_key or keys[-1] > page.max_key):
            return "page " + str(page.page_id) + " holds keys out of range"
        if seen.intersection(keys):
            return "a key appears in more than one page"
        seen.update(keys)
    return None


# Index state.

@dataclasses.dataclass
class LsmState:
    """The index of one edge.

    Attributes:
        edge (NodeId): The owning edge.
        thresholds (tuple): Pages allowed per level, one per level.
        levels (list): Page lists indexed by level. levels[0] holds L0 pages.
        l0_blocks (list): The blocks behind the L0 pages, in the same order.
        level_roots (dict): Maps level 1..n-1 to its signed LevelRoot.
        global_root (GlobalRoot): The signed global root, None until the edge
            is bootstrapped.
        merge_in_flight (MergeRequest): The outstanding merge, if any.
    """

    edge: crypto.NodeId
    thresholds: typing.Tuple[int, ...] = DEFAULT_THRESHOLDS
    levels: list = None
    l0_blocks: list = None
    level_roots: dict = None
    global_root: typing.Optional[GlobalRoot] = None
    merge_in_flight: typing.Optional[model.MergeRequest] = None

    def __post_init__(self):
        self.thresholds = tuple(self.thresholds)
        if len(self.thresholds) < 2:
            raise ValueError("The index needs at least two levels.")
        if self.levels is None:
            self.levels = [[] for _ in self.thresholds]
        if self.l0_blocks is None:
            self.l0_blocks = []
        if self.level_roots is None:
            self.level_roots = {}

    @property
    def level_count(self) -> int:
        return len(self.thresholds)

    def install_roots(self, level_roots: typing.Iterable[LevelRoot],
                      global_root: GlobalRoot):
        for root in level_roots:
            self.level_roots[root.level] = root
        self.global_root = global_root

    def ordered_roots(self) -> typing.Tuple[LevelRoot, ...]:
        return tuple(self.level_roots[level]
                     for level in range(1, self.level_count)
                     if level in self.level_roots)

    def snapshot(self) -> "LsmState":
        """Returns a copy that later changes to this state do not affect."""

        return LsmState(self.edge, self.thresholds,
                        [list(pages) for pages in self.levels],
                        list(self.l0_blocks), dict(self.level_roots),
                        self.global_root, self.merge_in_flight)


def insert_l0(lsm: LsmState, block: Block, now: float):
    """Adds the page of a newly sealed block to L0."""

    lsm.levels[0].append(page_from_block(block, now))
    lsm.l0_blocks.append(block)


def replace_l0(lsm: LsmState, block: Block):
    """Swaps the L0 block with the same bid for block."""

    for position, existing in enumerate(lsm.l0_blocks):
        if existing.bid == block.bid:
            lsm.l0_blocks[position] = block
            lsm.levels[0][position] = page_from_block(
                block, lsm.levels[0][position].created)
            return


def certified_prefix(lsm: LsmState,
                     proofs: typing.Mapping[int, BlockProof]) -> int:
    """Counts the L0 blocks, from the oldest, that already have proofs."""

    count = 0
    for block in lsm.l0_blocks:
        if block.bid not in proofs:
            break
        count += 1
    return count


def merge_candidate(lsm: LsmState,
                    proofs: typing.Mapping[int, BlockProof]) -> \
        typing.Optional[int]:
    """Returns the lowest level due for a merge, or None.

    L0 is due once its certified prefix exceeds the threshold. The last
    level is never merged.
    """

    if certified_prefix(lsm, proofs) > lsm.thresholds[0]:
        return 0
    for level in range(1, lsm.level_count - 1):
        if len(lsm.levels[level]) > lsm.thresholds[level]:
            return level
    return None


def build_merge_request(lsm: LsmState, level: int, merge_id: int,
                        proofs: typing.Mapping[int, BlockProof]) -> \
        model.MergeRequest:
    """Builds the unsigned request to merge level into level + 1."""

    l0_pages = ()
    upper = ()
    if level == 0:
        l0_pages = tuple(L0Page(block, proofs[block.bid]) for block in
                         lsm.l0_blocks[:certified_prefix(lsm, proofs)])
    else:
        upper = tuple(lsm.levels[level])
    return model.MergeRequest(lsm.edge, merge_id, level, l0_pages, upper,
                              tuple(lsm.levels[level + 1]),
                              lsm.ordered_roots(), b"")


def apply_merge_response(lsm: LsmState, response: model.MergeResponse):
    """Replaces the merged pages with the cloud's output.

    Blocks sealed while the merge was in flight stay in L0.
    """

    request = lsm.merge_in_flight
    if request.level == 0:
        merged = len(request.l0_pages)
        del lsm.levels[0][:merged]
        del lsm.l0_blocks[:merged]
    else:
        lsm.levels[request.level] = []
    lsm.levels[request.level + 1] = list(response.pages)
    lsm.install_roots(response.level_roots, response.global_root)
    lsm.merge_in_flight = None


# Lookups.

def _covering_index(pages: typing.Sequence[Page], key: int) -> int:
    return bisect.bisect_right([page.min_key for page in pages], key) - 1


def lookup(lsm: LsmState, key: int,
           proofs: typing.Mapping[int, BlockProof]) -> GetProofBundle:
    """Assembles the proof bundle answering a get for key.

    All L0 pages are always returned, with their proofs where known. If the
    key is in L0 nothing else is needed and the value is read from L0. If its
    latest version is at level i, the bundle holds the covering page of every
    non-empty level above i and the value page at i. If the key is absent,
    it holds the covering page of every non-empty level.
    """

    l0_pages = tuple(L0Page(block, proofs.get(block.bid))
                     for block in lsm.l0_blocks)
    roots = lsm.ordered_roots()
    if any(entry.key == key for page in lsm.levels[0]
           for entry in page.entries):
        return GetProofBundle(None, l0_pages, (), roots, lsm.global_root)

    covering = []
    for level in range(1, lsm.level_count):
        pages = lsm.levels[level]
        if not pages:
            continue
        index = _covering_index(pages, key)
        proven = ProvenPage(pages[index], merkle_path(pages, index))
        if any(entry.key == key for entry in pages[index].entries):
            return GetProofBundle(proven, l0_pages, tuple(covering), roots,
                                  lsm.global_root)
        covering.append(proven)
    return GetProofBundle(None, l0_pages, tuple(covering), roots,
                          lsm.global_root)


class GetStatus(enum.Enum):
    FOUND = "found"
    ABSENT = "absent"
    STALE = "stale"
    INVALID = "invalid"


@dataclasses.dataclass(frozen=True)
class GetResult:
    """The outcome of verifying a proof bundle.

    Attributes:
        status (GetStatus): Found, absent, stale or invalid.
        value (bytes): The value when found.
        pending_bids (tuple): L0 blocks that were not yet certified. A result
            with pending blocks is only Phase I committed.
        reason (str): Why the bundle was rejected, when invalid.
    """

    status: GetStatus
    value: typing.Optional[bytes] = None
    pending_bids: typing.Tuple[int, ...] = ()
    reason: str = ""

    @property
    def phase1(self) -> bool:
        return bool(self.pending_bids)


def _invalid(reason: str) -> GetResult:
    return GetResult(GetStatus.INVALID, reason=reason)


def _check_proven(proven: ProvenPage, roots: typing.Mapping[int, LevelRoot],
                  key: int) -> typing.Optional[str]:
    root = roots.get(proven.page.level)
    if root is None:
        return "no level root for level " + str(proven.page.level)
    if not verify_path(page_hash(proven.page), proven.path, root.root,
                       root.page_count):
        return "Merkle path does not reach the level " + \
            str(proven.page.level) + " root"
    if not proven.page.min_key <= key <= proven.page.max_key:
        return "page range does not cover the key"
    return None


def verify_get_proof(bundle: GetProofBundle, key: int, cloud_public: bytes,
                     keyring: crypto.KeyRing = None,
                     edge: crypto.NodeId = None) -> GetResult:
    """Verifies a lookup bundle for key.

    Args:
        bundle (GetProofBundle): The edge's answer.
        key (int): The key that was looked up.
        cloud_public (bytes): The cloud's public key.
        keyring (KeyRing): If given, entries of uncertified L0 blocks must
            carry valid signatures of their clients.
        edge (NodeId): If given, the edge the bundle must belong to.

    Returns:
        GetResult: Found or absent, tagged with any pending L0 blocks, or
        invalid with the failed check.
    """

    # Global root.
    global_root = bundle.global_root
    if edge is not None and global_root.edge != edge:
        return _invalid("global root belongs to another edge")
    if not model.verify_value(global_root, cloud_public):
        return _invalid("bad global root signature")

    # Level roots, bound together by the global hash.
    roots = {}
    for position, root in enumerate(bundle.level_roots):
        if root.level != position + 1 or root.edge != global_root.edge:
            return _invalid("level roots out of order")
        if not model.verify_value(root, cloud_public):
            return _invalid("bad level root signature")
        if root.page_count == 0 and root.root != EMPTY_ROOT:
            return _invalid("empty level with a non-empty root")
        roots[root.level] = root
    if global_hash(bundle.level_roots) != global_root.hash:
        return _invalid("level roots do not match the global root")

    # L0 pages must continue exactly from the watermark.
    pending = []
    for position, l0_page in enumerate(bundle.l0_pages):
        block = l0_page.block
        if block.edge != global_root.edge:
            return _invalid("L0 block of another edge")
        if block.bid != global_root.watermark + position:
            return _invalid("L0 blocks are not contiguous from the watermark")
        proof = l0_page.proof
        if proof is not None:
            if not model.verify_value(proof, cloud_public) or \
                    proof.edge != block.edge or proof.bid != block.bid or \
                    proof.digest != model.block_digest(block):
                return _invalid("L0 block " + str(block.bid)
                                + " does not match its proof")
        else:
            if keyring is not None:
                for entry in block.entries:
                    if not model.verify_value(entry,
                                              keyring.public(entry.client)):
                        return _invalid("bad entry signature in pending "
                                        "block " + str(block.bid))
            pending.append(block.bid)

    l0_versions = [entry for entry in
                   l0_entries(l0_page.block for l0_page in bundle.l0_pages)
                   if entry.key == key]

    # Covering pages, one per non-empty level above the value.
    last_level = 0
    covered = []
    for proven in bundle.covering_pages:
        if proven.page.level <= last_level:
            return _invalid("covering pages out of level order")
        last_level = proven.page.level
        failure = _check_proven(proven, roots, key)
        if failure is not None:
            return _invalid(failure)
        if any(entry.key == key for entry in proven.page.entries):
            return _invalid("covering page holds the key")
        covered.append(last_level)

    if l0_versions:
        if bundle.value_page is not None or bundle.covering_pages:
            return _invalid("deeper pages returned for a key found in L0")
        value = max(l0_versions, key=lambda entry: entry.version).value
        return GetResult(GetStatus.FOUND, value, tuple(pending))

    if bundle.value_page is not None:
        value_level = bundle.value_page.page.level
        if value_level <= last_level:
            return _invalid("value page above a covering page")
        failure = _check_proven(bundle.value_page, roots, key)
        if failure is not None:
            return _invalid(failure)
        matches = [entry for entry in bundle.value_page.page.entries
                   if entry.key == key]
        if len(matches) != 1:
            return _invalid("value page does not hold exactly one version")
        expected = [level for level, root in sorted(roots.items())
                    if level < value_level and root.page_count > 0]
        if covered != expected:
            return _invalid("missing covering pages")
        return GetResult(GetStatus.FOUND, matches[0].value, tuple(pending))

    expected = [level for level, root in sorted(roots.items())
                if root.page_count > 0]
    if covered != expected:
        return _invalid("missing covering pages")
    return GetResult(GetStatus.ABSENT, None, tuple(pending))
