"""Builds a WedgeChain deployment from a ScenarioConfig and runs it.

The runner places one cloud, the edges and their clients on the simulated
network, wires them for the chosen baseline, plans the workload from the
network's seeded generator and runs the network until it is quiescent.
"""

# Python imports.
import dataclasses
import enum
import typing

# External imports.

# Local imports.
import wedgechain_metrics
from Helpers import crypto
from Helpers.crypto import NodeId, NodeKind
from Helpers.Logger import Logger
from Index import lsmerkle
from Networking.simnet import LatencyMatrix, Simnet
from Nodes import client as client_node
from Nodes import cloud as cloud_node
from Nodes import edge as edge_node
from Nodes.adversary import Behavior, ByzantineEdge
from scenario_config import ScenarioConfig


class WorkloadKind(enum.Enum):
    ADD = "add"
    PUT = "put"
    READ = "read"
    GET = "get"


class PlannedOp(typing.NamedTuple):
    at_ms: float
    client: int
    kind: WorkloadKind
    key: typing.Optional[int]
    value: typing.Optional[bytes]


@dataclasses.dataclass
class Deployment:
    """The nodes of one scenario and the network joining them.

    Attributes:
        config (ScenarioConfig): The scenario.
        net (Simnet): The simulated network.
        logger (Logger): Shared event log.
        keyring (KeyRing): Public keys of every node.
        cloud (CloudNode): The cloud.
        edges (dict): Edge NodeId to its node, Byzantine or honest.
        clients (dict): Client NodeId to ClientNode.
        plan (list): The workload, in issue order.
    """

    config: ScenarioConfig
    net: Simnet
    logger: Logger
    keyring: crypto.KeyRing
    cloud: cloud_node.CloudNode
    edges: dict
    clients: dict
    plan: list = dataclasses.field(default_factory=list)

    def client_ids(self) -> typing.List[NodeId]:
        return sorted(self.clients)


def dispute_timeout(config: ScenarioConfig, edge_cloud_rtt: float) -> float:
    """The configured dispute timeout, or one derived from the deployment.

    The derived timeout allows DISPUTE_TIMEOUT_RTTS edge to cloud round
    trips, never less than two minimum hops each, plus the time the
    workload takes to fill one batch.
    """

    if config.dispute_timeout_ms > 0:
        return config.dispute_timeout_ms
    rtt = max(edge_cloud_rtt, 2.0 * max(config.min_delay_ms, 1.0))
    batch_fill = config.batch_size * config.issue_interval_ms / \
        config.burst_size
    return client_node.DISPUTE_TIMEOUT_RTTS * rtt + batch_fill


def plan_workload(config: ScenarioConfig, rng) -> typing.List[PlannedOp]:
    """Draws the kind, key and value of every op from rng.

    Ops go round robin to the clients, burst_size at a time every
    issue_interval_ms from start_ms.
    """

    plan = []
    for index in range(config.ops_total):
        at_ms = config.start_ms + \
            (index // config.burst_size) * config.issue_interval_ms
        if rng.random() < config.read_write_ratio:
            kind = WorkloadKind.GET if rng.random() < config.get_ratio \
                else WorkloadKind.READ
        else:
            kind = WorkloadKind.PUT if rng.random() < config.put_ratio \
                else WorkloadKind.ADD
        key = None
        if kind in (WorkloadKind.PUT, WorkloadKind.GET):
            key = int(rng.integers(0, config.key_range))
        value = None
        if kind in (WorkloadKind.PUT, WorkloadKind.ADD):
            value = rng.bytes(config.value_size_bytes)
        plan.append(PlannedOp(at_ms, index % config.clients, kind, key,
                              value))
    return plan


def build_deployment(config: ScenarioConfig,
                     logger: Logger = None) -> Deployment:
    """Creates, places, keys and bootstraps every node of the scenario.

    Raises:
        ConfigurationError: If the network cannot be built as configured.
    """

    if logger is None:
        logger = Logger()
    cloud_id = NodeId(NodeKind.CLOUD, 0)
    edge_ids = [NodeId(NodeKind.EDGE, index) for index in range(config.edges)]
    client_ids = [NodeId(NodeKind.CLIENT, index)
                  for index in range(config.clients)]
    keyring, pairs = crypto.KeyRing.generate(
        config.seed, [cloud_id] + edge_ids + client_ids)

    # Place the nodes. The cloud_only store runs next to the cloud.
    latency = LatencyMatrix(dict(config.rtt_overrides), {},
                            config.jitter_pct)
    latency.place(cloud_id, config.cloud_site)
    edge_site = config.cloud_site if config.baseline == "cloud_only" \
        else config.edge_site
    for edge_id in edge_ids:
        latency.place(edge_id, edge_site)
    for client_id in client_ids:
        latency.place(client_id, config.client_site)

    certify_cost = config.cloud_certify_ms_per_entry * config.batch_size
    net = Simnet(
        latency, config.seed, config.min_delay_ms, config.drop_probability,
        processing_ms={NodeKind.CLIENT: config.processing_client_ms,
                       NodeKind.EDGE: config.processing_edge_ms,
                       NodeKind.CLOUD: config.processing_cloud_ms},
        kind_cost_ms={(NodeKind.CLOUD, "block_certify"): certify_cost,
                      (NodeKind.CLOUD, "block_upload"): certify_cost},
        tick_interval_ms=config.tick_interval_ms, logger=logger)
    if logger.clock is None:
        logger.clock = net.now

    # Cloud.
    attached = {edge_id: [client_id for client_id in client_ids
                          if client_id.id % config.edges == edge_id.id]
                for edge_id in edge_ids}
    cloud_state = cloud_node.CloudState(
        cloud_id, pairs[cloud_id], keyring, tuple(config.thresholds),
        config.page_size,
        edge_clients=attached if config.gossip_interval_ms > 0 else {},
        gossip_interval_ms=config.gossip_interval_ms, logger=logger)
    cloud = cloud_node.CloudNode(cloud_state)
    net.add_node(cloud)

    # Edges, bootstrapped with the cloud's genesis roots.
    edges = {}
    for edge_id in edge_ids:
        state = edge_node.EdgeState(
            edge_id, pairs[edge_id], keyring, cloud_id, config.batch_size,
            lsmerkle.LsmState(edge_id, tuple(config.thresholds)),
            flush_interval_ms=config.flush_interval_ms,
            noop_interval_ms=config.noop_interval_ms,
            certify_retry_ms=config.certify_retry_ms,
            sync_certify=config.baseline == "edge_baseline",
            clock_skew_ms=config.clock_skew_ms, logger=logger)
        level_roots, global_root = cloud_node.bootstrap(cloud_state, edge_id,
                                                        0.0)
        state.lsm.install_roots(level_roots, global_root)
        node = edge_node.EdgeNode(state)
        fault = config.fault_spec()
        if fault.behavior != Behavior.NONE and \
                edge_id.id == config.fault_edge:
            node = ByzantineEdge(node, fault)
        edges[edge_id] = node
        net.add_node(node)

    # Clients.
    clients = {}
    for client_id in client_ids:
        edge_id = edge_ids[client_id.id % config.edges]
        freshness = client_node.FreshnessConfig(
            config.window_ms,
            dispute_timeout(config, latency.node_rtt(edge_id, cloud_id)))
        state = client_node.ClientState(
            client_id, pairs[client_id], keyring, edge_id, cloud_id,
            freshness, config.max_retries,
            trusted_service=config.baseline == "cloud_only",
            expects_gossip=config.gossip_interval_ms > 0, logger=logger)
        clients[client_id] = client_node.ClientNode(state)
        net.add_node(clients[client_id])

    deployment = Deployment(config, net, logger, keyring, cloud, edges,
                            clients)
    deployment.plan = plan_workload(config, net.rng)
    return deployment


def issue(deployment: Deployment, planned: PlannedOp, now: float):
    """Has the planned client issue its op and sends the request."""

    node = deployment.clients[NodeId(NodeKind.CLIENT, planned.client)]
    state = node.state
    if planned.kind == WorkloadKind.ADD:
        request = client_node.add_entry(state, planned.value, now)
    elif planned.kind == WorkloadKind.PUT:
        request = client_node.put(state, planned.key, planned.value, now)
    elif planned.kind == WorkloadKind.READ:
        request = client_node.read_next(state, now)
    else:
        request = client_node.get(state, planned.key, now)
    deployment.net.send(node.me, state.edge, request)


def schedule_workload(deployment: Deployment):
    for planned in deployment.plan:
        deployment.net.schedule(
            planned.at_ms,
            lambda now, planned=planned: issue(deployment, planned, now))


def flush_edges(deployment: Deployment, now: float) -> bool:
    """Seals every partial buffer; returns whether anything was sent."""

    sent = False
    for edge_id in sorted(deployment.edges):
        out = deployment.edges[edge_id].flush(now)
        deployment.net.send_all(edge_id, out)
        sent = sent or bool(out)
    return sent


def run_deployment(deployment: Deployment) -> wedgechain_metrics.Metrics:
    schedule_workload(deployment)
    deployment.net.run_until_quiescent(
        deployment.config.limit_ms,
        on_quiet=lambda now: flush_edges(deployment, now))
    return wedgechain_metrics.collect(deployment)


def run_scenario(config: ScenarioConfig,
                 log_path: str = None) -> wedgechain_metrics.Metrics:
    """Runs config and returns its metrics.

    Args:
        config (ScenarioConfig): A validated scenario.
        log_path (str): Where to write the event log, if anywhere.

    Returns:
        Metrics: Everything the run measured. Equal configs give equal
        metrics.
    """

    config.validate()
    logger = Logger(log_path, config.as_dict())
    deployment = build_deployment(config, logger)
    return run_deployment(deployment)
