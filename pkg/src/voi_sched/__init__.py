"""Value-of-Information packet scheduling for remote estimation over a lossy link."""
from ._backend import BACKEND
from .index import OrderedQueue, OrderKey, PacketIndex, delta, order_key, packet_index
from .model import (
    AssumptionViolation,
    EstimatorState,
    FilterParams,
    Packet,
    ProcessParams,
    SourceProfile,
    check_assumption,
)
from .policies import PolicyKind, ScheduleDecision, decide

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AssumptionViolation",
    "EstimatorState",
    "FilterParams",
    "OrderKey",
    "OrderedQueue",
    "Packet",
    "PacketIndex",
    "PolicyKind",
    "ProcessParams",
    "ScheduleDecision",
    "SourceProfile",
    "check_assumption",
    "decide",
    "delta",
    "order_key",
    "packet_index",
]
