"""Command line entry point of the WedgeChain simulator.

Subcommands:
    run             Runs a scenario file and writes its metrics.
    verify-vectors  Checks the crypto and wire golden vectors.
"""

# Python imports.
import argparse
import glob
import os
import sys

# External imports.
from twisted.logger import (FilteringLogObserver, LogLevel,
                            LogLevelFilterPredicate, globalLogBeginner,
                            textFileLogObserver)

# Local imports.
import scenario_runner
import wedgechain_metrics
from Helpers import crypto
from Networking import model
from Networking.simnet import ConfigurationError
from scenario_config import BASELINES, ScenarioConfig, parse_var


VERSION = "1.0.000"
VERSIONTITLE = 'WedgeChain v' + VERSION

# Default directories
ROOT_PATH = os.path.dirname(os.path.abspath(__file__))
SCENARIOS_PATH = "Scenarios"
OUTPUT_PATH = "out"
VECTORS_FILE = "crypto_vectors.txt"
FIXTURES_PATH = os.path.join("fixtures", "wire")

EVENTS_LOG = "events.log"
"""Name of the event log written next to the metrics."""

global CONFIG
CONFIG = {}


def criticalErrorMessage(title, msg):
    print("{}:{}".format(title, msg), file=sys.stderr)
    return 1


def loadConfig(config_filename=os.path.join(ROOT_PATH, 'config.txt')):
    if os.path.exists(config_filename):
        with open(config_filename, 'r') as lines:
            for line in lines:
                split = line.split('=')
                if len(split) == 2:
                    CONFIG[split[0].strip()] = split[1].strip()


def getConfigValue(key, defaultvalue):
    value = CONFIG.get(key)
    if value:
        return value
    else:
        return defaultvalue


def startLogging(level_name):
    """Sends twisted.logger events at level_name or above to stderr."""

    predicate = LogLevelFilterPredicate(
        defaultLogLevel=LogLevel.levelWithName(level_name))
    observer = FilteringLogObserver(textFileLogObserver(sys.stderr),
                                    [predicate])
    globalLogBeginner.beginLoggingTo([observer], redirectStandardIO=False)


def findScenario(path):
    """Returns path, or the file of that name in the scenarios directory."""

    if os.path.exists(path):
        return path
    candidate = os.path.join(getConfigValue('scenarios_path', SCENARIOS_PATH),
                             path)
    if os.path.exists(candidate):
        return candidate
    return path


def run(args):
    overrides = dict(parse_var(var) for var in args.var)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.baseline is not None:
        overrides["baseline"] = args.baseline
    config = ScenarioConfig(findScenario(args.config), overrides)

    out_dir = args.out or getConfigValue('output_path', OUTPUT_PATH)
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, EVENTS_LOG)
    if os.path.exists(log_path):
        os.remove(log_path)

    if args.verbose:
        startLogging(getConfigValue('log_level', 'info'))

    metrics = scenario_runner.run_scenario(config, log_path)
    for path in wedgechain_metrics.save_csv(metrics, out_dir):
        print("Wrote", path)
    if metrics.truncated:
        print("Warning: the run reached limit_ms before quiescence; the "
              "metrics are partial.", file=sys.stderr)
    return 0


def _hex(token):
    return b"" if token == "-" else bytes.fromhex(token)


def check_vector_line(line):
    """Returns why a crypto_vectors.txt line fails, or None if it holds.

    SHA-256 lines are "<input hex> <digest hex>", so the empty input leaves
    the line starting with the separator.
    """

    fields = line.split(" ")
    try:
        if len(fields) == 2:
            if crypto.hash_data(bytes.fromhex(fields[0])) != \
                    bytes.fromhex(fields[1]):
                return "digest mismatch"
            return None
        if fields[0] == "ed25519" and len(fields) == 5:
            seed, public, message, signature = [_hex(field)
                                                for field in fields[1:]]
            pair = crypto.keygen(seed, None)
            if pair.public != public:
                return "public key mismatch"
            if crypto.sign(pair.secret, message) != signature:
                return "signature mismatch"
            if not crypto.verify(public, message, signature):
                return "signature does not verify"
            return None
    except ValueError as error:
        return str(error)
    return "malformed line"


def check_fixture(bin_path):
    """Returns why a wire fixture fails, or None if it holds."""

    hex_path = bin_path[:-len(".bin")] + ".hex"
    if not os.path.exists(hex_path):
        return "missing " + os.path.basename(hex_path)
    with open(bin_path, 'rb') as file:
        data = file.read()
    with open(hex_path, 'r') as file:
        expected = bytes.fromhex("".join(file.read().split()))
    if data != expected:
        return "octets differ from the hex dump"
    try:
        value = model.decode(data)
    except model.WireError as error:
        return "does not decode: " + str(error)
    if model.canonical_encode(value) != data:
        return "re-encoding differs"
    return None


def verify_vectors(args):
    failures = []
    checked = 0
    with open(args.vectors, 'r') as lines:
        for number, line in enumerate(lines, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith('#'):
                continue
            checked += 1
            reason = check_vector_line(line)
            if reason is not None:
                failures.append(args.vectors + ":" + str(number) + ": "
                                + reason)

    for bin_path in sorted(glob.glob(os.path.join(args.fixtures, "*.bin"))):
        checked += 1
        reason = check_fixture(bin_path)
        if reason is not None:
            failures.append(bin_path + ": " + reason)

    for failure in failures:
        print(failure, file=sys.stderr)
    print("Checked", checked, "vectors,", len(failures), "failed.")
    return 1 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="WedgeChain", description=VERSIONTITLE)
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser(
        "run", help="Run a scenario and write its metrics.")
    run_parser.add_argument(
        "--config", "-c", type=str, required=True,
        help="Path to the scenario TOML file.")
    run_parser.add_argument(
        "--out", "-o", type=str, default=None,
        help="Directory the csv files are written to.")
    run_parser.add_argument(
        "--seed", "-s", type=int, default=None,
        help="Overrides the scenario seed.")
    run_parser.add_argument(
        "--baseline", "-b", type=str, choices=BASELINES, default=None,
        help="Overrides the scenario baseline.")
    run_parser.add_argument(
        "--var", "-v", type=str, action="append", default=[],
        help="Should be of the form 'name=value'. Replaces the scenario key "
             "name with int(value), float(value) or the raw string.")
    run_parser.add_argument(
        "--verbose", action="store_true",
        help="Print the event log to stderr while running.")
    run_parser.set_defaults(handler=run)

    vectors_parser = subparsers.add_parser(
        "verify-vectors", help="Check the crypto and wire golden vectors.")
    vectors_parser.add_argument(
        "--vectors", type=str, default=os.path.join(ROOT_PATH, VECTORS_FILE),
        help="Path to the crypto vectors file.")
    vectors_parser.add_argument(
        "--fixtures", type=str, default=os.path.join(ROOT_PATH, FIXTURES_PATH),
        help="Directory of .bin wire fixtures with .hex dumps.")
    vectors_parser.set_defaults(handler=verify_vectors)
    return parser


def main(argv=None):
    loadConfig()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigurationError, OSError) as error:
        return criticalErrorMessage("Error", str(error))


if __name__ == '__main__':
    sys.exit(main())
