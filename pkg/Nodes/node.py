"""Shared plumbing for the WedgeChain node state machines."""

# Python imports.
import typing

# External imports.

# Local imports.
from Helpers import crypto
from Helpers.Logger import Logger
from Networking import model


class Outbound(typing.NamedTuple):
    """A message a node wants delivered to dst."""

    dst: crypto.NodeId
    msg: model.WireType


class Node:
    """Dispatches incoming messages to remote_<kind> handlers.

    Handlers take (src, msg, now) and return a list of Outbound. Messages
    with no handler are dropped and counted.

    Attributes:
        me (NodeId): This node.
        logger (Logger): Where events are recorded.
    """

    component = "node"

    def __init__(self, me: crypto.NodeId, logger: Logger = None):
        self.me = me
        self.logger = logger if logger is not None else Logger()

    def receive(self, src: crypto.NodeId, msg: model.WireType,
                now: float) -> typing.List[Outbound]:
        handler = getattr(self, "remote_" + str(msg.KIND), None)
        if not callable(handler):
            self.log("warn", "drop", "unexpected_" + str(msg.KIND), src)
            return []
        return handler(src, msg, now) or []

    def tick(self, now: float) -> typing.List[Outbound]:
        return []

    def is_settled(self) -> bool:
        return True

    def log(self, level: str, category: str, key: str, value=""):
        self.logger.event(self.component, level, category, key, value,
                          node=self.me)
