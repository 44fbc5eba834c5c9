"""Deterministic discrete-event network for WedgeChain nodes.

Messages travel between placed nodes with half the round trip time of their
sites, plus seeded jitter. Time is simulated on a twisted task.Clock in
milliseconds, and the network owns the single random generator of a run.
"""

# Python imports.
import dataclasses
import typing

# External imports.
import numpy as np
from twisted.internet import task

# Local imports.
from Helpers import crypto
from Helpers.Logger import Logger
from Networking import model
from Nodes.node import Node


# Constants.

PRESET_RTT_MS = {"C": 0.0, "O": 19.0, "V": 61.0, "I": 141.0, "M": 238.0}
"""Round trip times from site C to each preset site, in milliseconds."""

SITES = tuple(PRESET_RTT_MS)
"""Preset site names."""

DEFAULT_MIN_DELAY_MS = 1.0
"""Floor on every one-way delay, so co-sited messaging is not instant."""

DEFAULT_TICK_INTERVAL_MS = 10.0
"""Period of the node timers."""


class ConfigurationError(ValueError):
    """A scenario or network that cannot be run as configured."""


@dataclasses.dataclass
class LatencyMatrix:
    """Round trip times between sites and where every node sits.

    Pairs without an explicit entry take the preset: a pair involving C uses
    the other site's preset, any other pair of distinct sites the larger of
    their presets, and a site to itself 0.

    Attributes:
        rtt_ms (dict): Sorted (site, site) pair to round trip milliseconds.
        placement (dict): NodeId to site name.
        jitter_pct (float): Maximum deviation of a one-way delay, in percent.
    """

    rtt_ms: dict = dataclasses.field(default_factory=dict)
    placement: dict = dataclasses.field(default_factory=dict)
    jitter_pct: float = 0.0

    def __post_init__(self):
        if self.jitter_pct < 0 or self.jitter_pct >= 100:
            raise ConfigurationError("jitter_pct must be in [0, 100)")
        self.rtt_ms = {tuple(sorted(pair)): float(rtt)
                       for pair, rtt in self.rtt_ms.items()}
        for pair, rtt in self.rtt_ms.items():
            if rtt < 0:
                raise ConfigurationError("Negative round trip time for "
                                         + "-".join(pair))

    def place(self, node: crypto.NodeId, site: str):
        if site not in SITES and not any(site in pair
                                         for pair in self.rtt_ms):
            raise ConfigurationError("Unknown site " + str(site))
        self.placement[node] = site

    def site(self, node: crypto.NodeId) -> str:
        if node not in self.placement:
            raise ConfigurationError("Node " + str(node) + " is not placed")
        return self.placement[node]

    def rtt(self, site_a: str, site_b: str) -> float:
        pair = tuple(sorted((site_a, site_b)))
        if pair in self.rtt_ms:
            return self.rtt_ms[pair]
        if site_a == site_b:
            return 0.0
        if "C" in pair:
            other = pair[0] if pair[1] == "C" else pair[1]
            return PRESET_RTT_MS.get(other, 0.0)
        return max(PRESET_RTT_MS.get(site_a, 0.0),
                   PRESET_RTT_MS.get(site_b, 0.0))

    def node_rtt(self, node_a: crypto.NodeId, node_b: crypto.NodeId) -> float:
        return self.rtt(self.site(node_a), self.site(node_b))


class TraceRow(typing.NamedTuple):
    time_ms: float
    src: str
    dst: str
    msg_kind: str
    size_bytes: int


class Simnet:
    """Delivers messages between nodes in simulated time.

    Every node serves its messages one at a time: a message arriving while
    the node is busy waits for it. Service time is the node kind's
    processing time plus any per message-kind cost.

    Attributes:
        latency (LatencyMatrix): Sites and placements.
        clock (task.Clock): The simulated clock, in milliseconds.
        rng (numpy.random.Generator): The run's only source of randomness.
        nodes (dict): NodeId to Node.
        trace (list): TraceRow per message sent, dropped ones included.
        in_flight (int): Messages sent but not yet arrived.
        queued (int): Messages arrived but waiting for their node.
        jobs_pending (int): Scheduled workload callbacks not yet run.
        dropped (int): Messages lost to drop_probability.
        truncated (bool): The last run hit its time limit.
    """

    def __init__(self, latency: LatencyMatrix, seed: int = 0,
                 min_delay_ms: float = DEFAULT_MIN_DELAY_MS,
                 drop_probability: float = 0.0,
                 processing_ms: typing.Mapping = None,
                 kind_cost_ms: typing.Mapping = None,
                 tick_interval_ms: float = DEFAULT_TICK_INTERVAL_MS,
                 logger: Logger = None):
        if min_delay_ms < 0:
            raise ConfigurationError("min_delay_ms must not be negative")
        if not 0 <= drop_probability < 1:
            raise ConfigurationError("drop_probability must be in [0, 1)")
        self.latency = latency
        self.clock = task.Clock()
        self.rng = np.random.default_rng(seed)
        self.min_delay_ms = min_delay_ms
        self.drop_probability = drop_probability
        self.processing_ms = dict(processing_ms or {})
        self.kind_cost_ms = dict(kind_cost_ms or {})
        self.tick_interval_ms = tick_interval_ms
        self.logger = logger if logger is not None else Logger(
            clock=self.now)
        self.nodes = {}
        self.trace = []
        self.busy_until = {}
        self.in_flight = 0
        self.queued = 0
        self.jobs_pending = 0
        self.dropped = 0
        self.truncated = False
        self.ticker = task.LoopingCall(self._tick)
        self.ticker.clock = self.clock

    def now(self) -> float:
        return self.clock.seconds()

    def add_node(self, node: Node):
        self.latency.site(node.me)
        self.nodes[node.me] = node

    def one_way_delay(self, src: crypto.NodeId,
                      dst: crypto.NodeId) -> float:
        delay = self.latency.node_rtt(src, dst) / 2.0
        if self.latency.jitter_pct > 0:
            spread = self.latency.jitter_pct / 100.0
            delay *= 1.0 + self.rng.uniform(-spread, spread)
        return max(self.min_delay_ms, delay)

    def service_time(self, dst: crypto.NodeId, msg: model.WireType) -> float:
        return self.processing_ms.get(dst.kind, 0.0) + \
            self.kind_cost_ms.get((dst.kind, msg.KIND), 0.0)

    def send(self, src: crypto.NodeId, dst: crypto.NodeId,
             msg: model.WireType):
        """Schedules msg to arrive at dst after the one-way delay."""

        self.latency.site(src)
        self.latency.site(dst)
        if dst not in self.nodes:
            raise ConfigurationError("No node " + str(dst) + " to deliver to")

        now = self.now()
        self.trace.append(TraceRow(now, str(src), str(dst), str(msg.KIND),
                                   model.message_size(msg)))
        if self.drop_probability > 0 and \
                self.rng.random() < self.drop_probability:
            self.dropped += 1
            self.logger.event("simnet", "debug", "drop", str(msg.KIND),
                              str(src) + "->" + str(dst))
            return
        self.in_flight += 1
        self.clock.callLater(self.one_way_delay(src, dst), self._arrive,
                             src, dst, msg)

    def send_all(self, src: crypto.NodeId, out: typing.Iterable):
        for outbound in out:
            self.send(src, outbound.dst, outbound.msg)

    def schedule(self, at_ms: float, job: typing.Callable[[float], None]):
        """Runs job(now) at simulated time at_ms."""

        self.jobs_pending += 1
        self.clock.callLater(max(0.0, at_ms - self.now()), self._run_job, job)

    def _run_job(self, job):
        self.jobs_pending -= 1
        job(self.now())

    def _arrive(self, src, dst, msg):
        self.in_flight -= 1
        now = self.now()
        done = max(now, self.busy_until.get(dst, 0.0)) + \
            self.service_time(dst, msg)
        self.busy_until[dst] = done
        if done > now:
            self.queued += 1
            self.clock.callLater(done - now, self._serve, src, dst, msg)
        else:
            self._deliver(src, dst, msg)

    def _serve(self, src, dst, msg):
        self.queued -= 1
        self._deliver(src, dst, msg)

    def _deliver(self, src, dst, msg):
        node = self.nodes[dst]
        self.send_all(dst, node.receive(src, msg, self.now()))

    def _tick(self):
        now = self.now()
        for node_id in sorted(self.nodes):
            self.send_all(node_id, self.nodes[node_id].tick(now))

    def quiet(self) -> bool:
        return self.in_flight == 0 and self.queued == 0 and \
            self.jobs_pending == 0

    def settled(self) -> bool:
        return all(self.nodes[node_id].is_settled()
                   for node_id in sorted(self.nodes))

    def run_until_quiescent(self, limit_ms: float,
                            on_quiet: typing.Callable[[float], bool] = None
                            ) -> bool:
        """Processes events in time order until nothing is left to do.

        The run ends when no message is in flight or queued, no workload job
        is pending and every node is settled. When the network first goes
        quiet, on_quiet(now) may send more messages and returns whether it
        did. A run that would pass limit_ms stops there with truncated set.

        Returns:
            bool: True if the run completed, False if it was truncated.
        """

        self.truncated = False
        if self.tick_interval_ms > 0 and not self.ticker.running:
            self.ticker.start(self.tick_interval_ms, now=False)
        try:
            while True:
                if self.quiet():
                    if on_quiet is not None and on_quiet(self.now()):
                        continue
                    if self.settled():
                        break
                calls = self.clock.getDelayedCalls()
                if not calls:
                    break
                next_time = min(call.getTime() for call in calls)
                if next_time > limit_ms:
                    self.truncated = True
                    self.logger.event("simnet", "warn", "run", "truncated",
                                      limit_ms)
                    break
                self.clock.advance(max(0.0, next_time - self.now()))
        finally:
            if self.ticker.running:
                self.ticker.stop()
        return not self.truncated
