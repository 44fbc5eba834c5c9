"""Flat TOML scenario files for the WedgeChain simulator.

A scenario file holds top-level keys only. Every key has a default, listed
in DEFAULTS with its meaning; arrays are allowed for thresholds and
fault_clients_b. Round trip overrides use keys of the form rtt_<A>_<B>.
"""

# Python imports.
import re
import typing

# External imports.
import toml

# Local imports.
from Networking.simnet import SITES, ConfigurationError
from Nodes.adversary import Behavior, FaultSpec


# Constants.

BASELINES = ("wedgechain", "cloud_only", "edge_baseline")
"""Protocol wirings a scenario can run."""

DEFAULTS = {
    # Run.
    "seed": 42,
    "baseline": "wedgechain",
    "limit_ms": 600000.0,

    # Sites and network.
    "client_site": "C",
    "edge_site": "C",
    "cloud_site": "V",
    "jitter_pct": 0.0,
    "min_delay_ms": 1.0,
    "drop_probability": 0.0,
    "processing_client_ms": 0.0,
    "processing_edge_ms": 0.0,
    "processing_cloud_ms": 0.0,
    "cloud_certify_ms_per_entry": 0.0,
    "tick_interval_ms": 10.0,

    # Topology.
    "edges": 1,
    "clients": 4,

    # Workload.
    "ops_total": 400,
    "read_write_ratio": 0.0,
    "put_ratio": 1.0,
    "get_ratio": 0.5,
    "batch_size": 100,
    "value_size_bytes": 100,
    "key_range": 100000,
    "issue_interval_ms": 1.0,
    "burst_size": 1,
    "start_ms": 0.0,

    # Index.
    "levels": 4,
    "thresholds": [10, 10, 100, 1000],
    "page_size": 64,

    # Client and timers.
    "window_ms": 5000.0,
    "dispute_timeout_ms": 0.0,
    "max_retries": 3,
    "gossip_interval_ms": 100.0,
    "flush_interval_ms": 0.0,
    "noop_interval_ms": 0.0,
    "certify_retry_ms": 0.0,
    "clock_skew_ms": 0.0,

    # Fault injection.
    "fault": "none",
    "fault_edge": 0,
    "fault_bid": 0,
    "fault_clients_b": [],
    "fault_client": 0,
    "fault_seq": 0,
    "fault_age_ms": 0.0,
    "fault_after_ms": 0.0,
    "fault_after_messages": 0,
}
"""Every scenario key with its default value. The default's type is the
    key's type; ints are accepted where floats are expected."""

RTT_KEY = re.compile(r"^rtt_([A-Za-z0-9]+)_([A-Za-z0-9]+)$")
"""Keys overriding the round trip time between two sites."""


def parse_var(var: str) -> typing.Tuple[str, typing.Any]:
    """Parses a command line override of the form name=value.

    The value becomes an int if it can, otherwise a float, otherwise the raw
    string.
    """

    if "=" not in var:
        raise ConfigurationError("Overrides must look like name=value, got "
                                 + repr(var))
    name, value = var.split("=", 1)
    try:
        return name.strip(), int(value)
    except ValueError:
        try:
            return name.strip(), float(value)
        except ValueError:
            return name.strip(), value.strip()


def _coerce(key: str, value, default):
    """Converts value to the type of default or raises ConfigurationError."""

    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, list):
        if isinstance(value, str):
            try:
                value = [int(item) for item in value.split(",") if item]
            except ValueError:
                pass
        elif isinstance(value, int) and not isinstance(value, bool):
            value = [value]
        if isinstance(value, list) and \
                all(isinstance(item, int) and not isinstance(item, bool)
                    for item in value):
            return list(value)
    raise ConfigurationError("Invalid value " + repr(value) + " for "
                             + key + " (expected " + type(default).__name__
                             + ")")


class ScenarioConfig:
    """A validated scenario.

    Every key of DEFAULTS is an attribute.

    Attributes:
        scenario_file (str): The TOML file this was loaded from, if any.
        scenario_variables (dict): The overrides applied on top of the file.
        rtt_overrides (dict): (site, site) pair to round trip milliseconds.
    """

    def __init__(self, config_file: str = None,
                 replacement_vars: dict = None, **values):
        """Loads a scenario from a TOML file and applies overrides.

        Args:
            config_file (str): Path to the TOML file, or None for defaults.
            replacement_vars (dict): Keys replacing the file's values.
            values: Further keys, applied before replacement_vars.

        Raises:
            ConfigurationError: If the file cannot be parsed, or a key is
                unknown, mistyped or out of range.
        """

        # Load config file.
        config = {}
        if config_file is not None:
            try:
                config = toml.load(config_file)
            except toml.TomlDecodeError as error:
                raise ConfigurationError("Cannot parse " + str(config_file)
                                         + ": " + str(error)) from error
        config.update(values)
        config.update(replacement_vars or {})

        # Record the scenario settings.
        self.scenario_file = config_file
        self.scenario_variables = dict(replacement_vars or {})
        self.rtt_overrides = {}

        for key, value in config.items():
            match = RTT_KEY.match(key)
            if match is not None:
                self.rtt_overrides[(match.group(1), match.group(2))] = \
                    _coerce(key, value, 0.0)
            elif key not in DEFAULTS:
                raise ConfigurationError("Unknown scenario key " + repr(key))
        for key, default in DEFAULTS.items():
            value = config.get(key, default)
            setattr(self, key, _coerce(key, value, default))
        self.validate()

    def as_dict(self) -> dict:
        """All keys, in DEFAULTS order, then the round trip overrides."""

        values = {key: getattr(self, key) for key in DEFAULTS}
        for (site_a, site_b), rtt in sorted(self.rtt_overrides.items()):
            values["rtt_" + site_a + "_" + site_b] = rtt
        return values

    def known_sites(self) -> typing.Set[str]:
        sites = set(SITES)
        for pair in self.rtt_overrides:
            sites.update(pair)
        return sites

    def _check(self, condition: bool, key: str, requirement: str):
        if not condition:
            raise ConfigurationError(key + " " + requirement + " (got "
                                     + repr(getattr(self, key)) + ")")

    def validate(self):
        """Raises ConfigurationError naming the first invalid key."""

        self._check(self.baseline in BASELINES, "baseline",
                    "must be one of " + ", ".join(BASELINES))
        self._check(self.limit_ms > 0, "limit_ms", "must be positive")
        for key in ("client_site", "edge_site", "cloud_site"):
            self._check(getattr(self, key) in self.known_sites(), key,
                        "must be a known site")
        for pair, rtt in self.rtt_overrides.items():
            if rtt < 0:
                raise ConfigurationError("rtt_" + "_".join(pair)
                                         + " must not be negative")
        self._check(0 <= self.jitter_pct < 100, "jitter_pct",
                    "must be in [0, 100)")
        self._check(0 <= self.drop_probability < 1, "drop_probability",
                    "must be in [0, 1)")
        for key in ("min_delay_ms", "processing_client_ms",
                    "processing_edge_ms", "processing_cloud_ms",
                    "cloud_certify_ms_per_entry", "issue_interval_ms",
                    "start_ms", "dispute_timeout_ms", "gossip_interval_ms",
                    "flush_interval_ms", "noop_interval_ms",
                    "certify_retry_ms", "fault_age_ms", "fault_after_ms",
                    "ops_total", "value_size_bytes", "max_retries",
                    "fault_after_messages", "fault_bid", "fault_seq",
                    "fault_client"):
            self._check(getattr(self, key) >= 0, key, "must not be negative")
        for key in ("tick_interval_ms", "window_ms", "edges", "clients",
                    "batch_size", "key_range", "burst_size", "page_size"):
            self._check(getattr(self, key) > 0, key, "must be positive")
        for key in ("read_write_ratio", "put_ratio", "get_ratio"):
            self._check(0 <= getattr(self, key) <= 1, key,
                        "must be in [0, 1]")
        self._check(self.levels >= 2, "levels", "must be at least 2")
        self._check(len(self.thresholds) == self.levels, "thresholds",
                    "must have one entry per level")
        self._check(all(threshold > 0 for threshold in self.thresholds),
                    "thresholds", "must all be positive")

        self._check(self.fault in [behavior.value for behavior in Behavior],
                    "fault", "must be one of "
                    + ", ".join(behavior.value for behavior in Behavior))
        self._check(self.fault_edge < self.edges, "fault_edge",
                    "must name an existing edge")
        self._check(self.fault == "none" or self.baseline != "cloud_only",
                    "fault", "cannot be injected into the cloud_only baseline")

    def fault_spec(self) -> FaultSpec:
        return FaultSpec(Behavior(self.fault), self.fault_bid,
                         tuple(self.fault_clients_b), self.fault_client,
                         self.fault_seq, self.fault_age_ms,
                         self.fault_after_ms, self.fault_after_messages)
