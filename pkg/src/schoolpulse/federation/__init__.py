"""Simulated cross-school federation for the electives recommender.

Schools train a shared matrix-factorization model on local enrollments and
exchange only masked, fixed-point parameter deltas; user factors and
per-school item offsets never leave the school. The coordinator learns the
weighted sum of deltas and nothing else.
"""

from .codec import SCALE, EncodingOverflow, decode_value, encode_value
from .coordinator import (
    Coordinator,
    FederationConfig,
    MissingSchool,
    RunResult,
    VersionMismatch,
    run_federation,
)
from .node import ItemFactors, NoInteractions, SchoolNode
from .protocol import Abort, Channel, FederationMessage, MessageType, Transcript
from .recommend import EmptyCatalog, UnknownStudent, cold_start_recommend, recommend

__all__ = [
    "SCALE", "EncodingOverflow", "encode_value", "decode_value",
    "Coordinator", "FederationConfig", "MissingSchool", "RunResult",
    "VersionMismatch", "run_federation",
    "ItemFactors", "NoInteractions", "SchoolNode",
    "Abort", "Channel", "FederationMessage", "MessageType", "Transcript",
    "EmptyCatalog", "UnknownStudent", "cold_start_recommend", "recommend",
]
