"""This module collects and saves the metrics of a WedgeChain run.

Metrics are gathered from the nodes and the network trace once a run has
finished and are written as the csv files described in METRICS.md.
"""

# Python imports.
import argparse
import csv
import dataclasses
import os
import typing

# External imports.
import numpy as np

# Local imports.
import analysis_support
from Nodes.client import OpKind, Phase


OPS_HEADER = ["client", "op_id", "kind", "issued_at", "phase1_at",
              "phase2_at", "final_phase", "edge", "bid", "outcome"]
"""Columns of ops.csv."""

MESSAGES_HEADER = ["time_ms", "src", "dst", "msg_kind", "size_bytes"]
"""Columns of messages.csv."""

VERDICTS_HEADER = ["time_ms", "edge", "reason", "disputant", "subject",
                   "convicting"]
"""Columns of verdicts.csv."""

TIMELINE_HEADER = ["time_ms", "phase1_blocks", "phase2_blocks", "phase1_ops",
                   "phase2_ops"]
"""Columns of timeline.csv."""

SUMMARY_HEADER = ["metric", "value"]
"""Columns of summary.csv."""

WRITE_KINDS = (OpKind.ADD, OpKind.PUT)
"""Op kinds that put entries into blocks."""


class OpRow(typing.NamedTuple):
    client: str
    op_id: int
    kind: str
    issued_at: float
    phase1_at: typing.Optional[float]
    phase2_at: typing.Optional[float]
    final_phase: str
    edge: str
    bid: typing.Optional[int]
    outcome: str


class VerdictRow(typing.NamedTuple):
    time_ms: float
    edge: str
    reason: str
    disputant: str
    subject: int
    convicting: bool


@dataclasses.dataclass
class Metrics:
    """What one run measured.

    Attributes:
        ops (list): OpRow per client op, ordered by client then op id.
        messages (list): TraceRow per message sent.
        verdicts (list): VerdictRow per cloud ruling, acquittals included.
        blocks (dict): (edge, bid) to (phase1_at, phase2_at) of the blocks
            holding client writes. A block commits in a phase once every
            write in it has.
        summary (dict): Aggregates, in output order.
        truncated (bool): The run hit its time limit.
    """

    ops: list = dataclasses.field(default_factory=list)
    messages: list = dataclasses.field(default_factory=list)
    verdicts: list = dataclasses.field(default_factory=list)
    blocks: dict = dataclasses.field(default_factory=dict)
    summary: dict = dataclasses.field(default_factory=dict)
    truncated: bool = False

    def timeline(self) -> typing.List[list]:
        """Cumulative commit counts at every time a count changes."""

        block_p1 = [p1 for p1, _ in self.blocks.values() if p1 is not None]
        block_p2 = [p2 for _, p2 in self.blocks.values() if p2 is not None]
        writes = [op for op in self.ops if op.kind in
                  [kind.value for kind in WRITE_KINDS]]
        op_p1 = [op.phase1_at for op in writes if op.phase1_at is not None]
        op_p2 = [op.phase2_at for op in writes if op.phase2_at is not None]

        times = np.unique(np.asarray(block_p1 + block_p2 + op_p1 + op_p2,
                                     dtype=float))
        columns = [analysis_support.cumulative_counts(events, times)
                   for events in (block_p1, block_p2, op_p1, op_p2)]
        return [[float(time)] + [int(column[index]) for column in columns]
                for index, time in enumerate(times)]

    def verdicts_against(self, edge: str) -> typing.List[VerdictRow]:
        return [row for row in self.verdicts
                if row.convicting and row.edge == edge]


def _block_phases(ops: typing.List[OpRow]) -> dict:
    grouped = {}
    for op in ops:
        if op.kind not in [kind.value for kind in WRITE_KINDS] or \
                op.bid is None:
            continue
        grouped.setdefault((op.edge, op.bid), []).append(op)

    blocks = {}
    for key in sorted(grouped):
        members = grouped[key]
        p1 = [op.phase1_at for op in members]
        p2 = [op.phase2_at for op in members]
        blocks[key] = (max(p1) if None not in p1 else None,
                       max(p2) if None not in p2 else None)
    return blocks


def _summarise(metrics: Metrics, deployment) -> dict:
    ops = metrics.ops
    writes = [op for op in ops
              if op.kind in [kind.value for kind in WRITE_KINDS]]
    reads = [op for op in ops
             if op.kind not in [kind.value for kind in WRITE_KINDS]]
    summary = {"baseline": deployment.config.baseline,
               "seed": deployment.config.seed,
               "ops_issued": len(ops)}
    for phase in Phase:
        summary["ops_" + phase.value] = sum(op.final_phase == phase.value
                                            for op in ops)

    # Latency percentiles, from issue to each phase.
    for label, group in (("write", writes), ("read", reads)):
        for phase in ("phase1", "phase2"):
            latencies = [getattr(op, phase + "_at") - op.issued_at
                         for op in group
                         if getattr(op, phase + "_at") is not None]
            for point, value in analysis_support.percentiles(
                    latencies).items():
                summary[label + "_" + phase + "_p" + str(point)] = value

    # Block commits.
    p1 = [times[0] for times in metrics.blocks.values()
          if times[0] is not None]
    p2 = [times[1] for times in metrics.blocks.values()
          if times[1] is not None]
    summary["blocks_total"] = len(metrics.blocks)
    summary["blocks_phase1"] = len(p1)
    summary["blocks_phase2"] = len(p2)
    summary["phase1_completion_ms"] = max(p1) if p1 else None
    summary["phase2_completion_ms"] = max(p2) if p2 else None

    # Throughput of Phase I write commits while the workload ran.
    commit_times = np.sort(np.asarray(
        [op.phase1_at for op in writes if op.phase1_at is not None],
        dtype=float))
    if len(commit_times) > 0:
        start = min(op.issued_at for op in writes)
        first, after_last = analysis_support.get_ids_for_time_range(
            commit_times, (start, float(commit_times[-1])))
        summary["write_throughput_ops_per_s"] = \
            analysis_support.rate_per_second(
                after_last - first, (start, float(commit_times[-1])))
    else:
        summary["write_throughput_ops_per_s"] = None

    # Messages.
    certify_sizes = [row.size_bytes for row in metrics.messages
                     if row.msg_kind == "block_certify"]
    summary["messages"] = len(metrics.messages)
    summary["message_bytes"] = sum(row.size_bytes for row in metrics.messages)
    summary["block_certify_min_bytes"] = min(certify_sizes) \
        if certify_sizes else None
    summary["block_certify_max_bytes"] = max(certify_sizes) \
        if certify_sizes else None
    summary["dropped_messages"] = deployment.net.dropped

    # Verdicts and cloud bookkeeping.
    summary["rulings"] = len(metrics.verdicts)
    summary["verdicts"] = sum(row.convicting for row in metrics.verdicts)
    summary["merge_overdue"] = deployment.cloud.state.merge_overdue
    summary["end_ms"] = deployment.net.now()
    summary["truncated"] = metrics.truncated

    # Event counters.
    for (component, category, key), count in sorted(
            deployment.logger.counters.items()):
        summary["count_" + component + "_" + category + "_" + key] = count
    return summary


def collect(deployment) -> Metrics:
    """Gathers the metrics of a finished Deployment."""

    metrics = Metrics(truncated=deployment.net.truncated)
    for client_id in deployment.client_ids():
        state = deployment.clients[client_id].state
        for op_id in sorted(state.ops):
            op = state.ops[op_id]
            metrics.ops.append(OpRow(
                str(client_id), op.op_id, op.kind.value, op.issued_at,
                op.phase1_at, op.phase2_at, op.phase.value, str(state.edge),
                op.bid, op.outcome))
    metrics.messages = list(deployment.net.trace)
    for verdict in deployment.cloud.state.rulings:
        metrics.verdicts.append(VerdictRow(
            verdict.timestamp,
            str(verdict.edge) if verdict.edge is not None else "",
            verdict.reason.name.lower(),
            str(verdict.disputant) if verdict.disputant is not None else "",
            verdict.subject, verdict.convicting))
    metrics.blocks = _block_phases(metrics.ops)
    metrics.summary = _summarise(metrics, deployment)
    return metrics


def format_value(value) -> str:
    """Formats a csv cell: floats with three decimals, None as empty."""

    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "{:.3f}".format(value)
    return str(value)


def _write(file_path: str, header: list, rows: typing.Iterable):
    with open(file_path, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def save_csv(metrics: Metrics, out_dir: str) -> typing.List[str]:
    """Writes every metrics file to out_dir, creating it if needed.

    Returns:
        list: The paths written.

    Raises:
        OSError: If out_dir cannot be created or written.
    """

    os.makedirs(out_dir, exist_ok=True)
    files = [
        ("ops.csv", OPS_HEADER, metrics.ops),
        ("messages.csv", MESSAGES_HEADER, metrics.messages),
        ("verdicts.csv", VERDICTS_HEADER, metrics.verdicts),
        ("timeline.csv", TIMELINE_HEADER, metrics.timeline()),
        ("summary.csv", SUMMARY_HEADER, metrics.summary.items()),
    ]
    paths = []
    for name, header, rows in files:
        path = os.path.join(out_dir, name)
        _write(path, header, rows)
        paths.append(path)
    return paths


def read_csv(file_path: str) -> typing.List[dict]:
    """Reads a metrics file back as a list of {column: text} rows."""

    with open(file_path, newline='') as file:
        return list(csv.DictReader(file))


if __name__ == "__main__":

    # Read in the command line arguments.
    parser = argparse.ArgumentParser(
        prog="wedgechain_metrics",
        description="Prints the summary of a WedgeChain output directory.")
    parser.add_argument("-d", "--directory", default="./out",
                        help="The output directory of a run.")
    args = parser.parse_args()

    # Print the summary.
    for row in read_csv(os.path.join(args.directory, "summary.csv")):
        print(row["metric"] + "\t" + row["value"])
