"""A small WedgeChain deployment with instant, in-order delivery.

Messages are handed to their destination as soon as they are sent, so a
whole protocol exchange runs inside one call. Kinds listed in held_kinds are
parked until release() instead.
"""

import collections
import os

from Helpers import crypto
from Helpers.crypto import NodeId, NodeKind
from Helpers.Logger import Logger
from Index import lsmerkle
from Nodes import client as client_node
from Nodes import cloud as cloud_node
from Nodes import edge as edge_node
from Nodes.adversary import ByzantineEdge
from Nodes.node import Outbound


ROOT_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
SCENARIOS_PATH = os.path.join(ROOT_PATH, "Scenarios")
FIXTURES_PATH = os.path.join(ROOT_PATH, "fixtures", "wire")

CLOUD = NodeId(NodeKind.CLOUD, 0)
EDGE = NodeId(NodeKind.EDGE, 0)
CLIENTS = tuple(NodeId(NodeKind.CLIENT, index) for index in range(4))


class Cluster:
    """One cloud, one edge and four clients."""

    def __init__(self, batch_size=2, thresholds=lsmerkle.DEFAULT_THRESHOLDS,
                 page_size=lsmerkle.DEFAULT_PAGE_SIZE, seed=7,
                 window_ms=5000.0, dispute_timeout_ms=100.0,
                 trusted_service=False, gossip_interval_ms=0.0,
                 **edge_options):
        self.keyring, self.pairs = crypto.KeyRing.generate(
            seed, (CLOUD, EDGE) + CLIENTS)
        self.logger = Logger()
        self.now = 0.0
        self.held_kinds = set()
        self.held = []
        self.log = []

        self.cloud = cloud_node.CloudNode(cloud_node.CloudState(
            CLOUD, self.pairs[CLOUD], self.keyring, thresholds, page_size,
            edge_clients={EDGE: list(CLIENTS)},
            gossip_interval_ms=gossip_interval_ms, logger=self.logger))

        edge_state = edge_node.EdgeState(
            EDGE, self.pairs[EDGE], self.keyring, CLOUD, batch_size,
            lsmerkle.LsmState(EDGE, thresholds), logger=self.logger,
            **edge_options)
        roots, global_root = cloud_node.bootstrap(self.cloud.state, EDGE,
                                                  0.0)
        edge_state.lsm.install_roots(roots, global_root)
        self.edge = edge_node.EdgeNode(edge_state)

        freshness = client_node.FreshnessConfig(window_ms, dispute_timeout_ms)
        self.clients = {
            client_id: client_node.ClientNode(client_node.ClientState(
                client_id, self.pairs[client_id], self.keyring, EDGE, CLOUD,
                freshness, trusted_service=trusted_service,
                expects_gossip=gossip_interval_ms > 0, logger=self.logger))
            for client_id in CLIENTS}

        self.nodes = {CLOUD: self.cloud, EDGE: self.edge}
        self.nodes.update(self.clients)

    @property
    def edge_state(self):
        return self.edge.state

    @property
    def cloud_state(self):
        return self.cloud.state

    def client(self, index):
        return self.clients[CLIENTS[index]].state

    def make_byzantine(self, fault):
        self.nodes[EDGE] = ByzantineEdge(self.edge, fault)
        return self.nodes[EDGE]

    def deliver(self, src, out):
        queue = collections.deque((src, outbound) for outbound in out)
        while queue:
            src, outbound = queue.popleft()
            if outbound.msg.KIND in self.held_kinds:
                self.held.append((src, outbound))
                continue
            self.log.append((src, outbound.dst, outbound.msg))
            node = self.nodes[outbound.dst]
            for reply in node.receive(src, outbound.msg, self.now):
                queue.append((outbound.dst, reply))

    def release(self):
        """Stops holding messages and delivers everything held so far."""

        self.held_kinds = set()
        held, self.held = self.held, []
        for src, outbound in held:
            self.deliver(src, [outbound])

    def request(self, index, msg):
        """Sends msg from client index to the edge."""
        self.deliver(CLIENTS[index], [Outbound(EDGE, msg)])

    def put(self, index, key, value):
        state = self.client(index)
        self.request(index, client_node.put(state, key, value, self.now))
        return state.ops[state.next_op_id - 1]

    def add(self, index, payload):
        state = self.client(index)
        self.request(index, client_node.add_entry(state, payload, self.now))
        return state.ops[state.next_op_id - 1]

    def get(self, index, key):
        state = self.client(index)
        self.request(index, client_node.get(state, key, self.now))
        return state.ops[state.next_op_id - 1]

    def read(self, index, bid):
        state = self.client(index)
        self.request(index, client_node.read_block(state, bid, self.now))
        return state.ops[state.next_op_id - 1]

    def tick(self, now):
        self.now = now
        for node_id in sorted(self.nodes):
            self.deliver(node_id, self.nodes[node_id].tick(now))

    def flush(self):
        self.deliver(EDGE, self.nodes[EDGE].flush(self.now))

    def sent(self, kind, dst=None):
        return [msg for _, to, msg in self.log
                if msg.KIND == kind and (dst is None or to == dst)]
