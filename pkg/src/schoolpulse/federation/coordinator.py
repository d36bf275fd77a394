"""Coordinator event loop: synchronous rounds, abort on dropout.

The coordinator only ever sees masked, n^alpha-weighted, fixed-point deltas
plus clear sample counts; summation cancels the masks exactly and dividing
by Σ n^alpha yields the heterogeneity-weighted average delta. alpha=1 is
count-weighted federated averaging; alpha=0 is uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .codec import SCALE
from .node import ItemFactors, SchoolNode
from .protocol import Abort, Channel, FederationMessage, MessageType, Transcript

COORDINATOR = "coordinator"


class MissingSchool(Exception):
    pass


class VersionMismatch(Exception):
    pass


@dataclass(frozen=True)
class FederationConfig:
    schools: tuple[str, ...]
    rounds: int = 40
    dim: int = 8
    epochs: int = 50
    lr: float = 0.3
    lam: float = 0.0005
    alpha: float = 1.0
    seed: int = 0
    top_k: int = 5

    def __post_init__(self) -> None:
        if len(self.schools) < 2:
            raise ValueError("federation needs at least 2 schools")


@dataclass
class RunResult:
    history: list[dict[str, Any]]
    factors: ItemFactors
    final_metric: float
    aborted: bool = False


class Coordinator:
    """Single logical event loop; never processes two rounds concurrently."""

    def __init__(self, config: FederationConfig, items: tuple[str, ...]):
        self.config = config
        self.factors = ItemFactors.init(items, config.dim, config.seed)
        self.transcript = Transcript()
        self.channels: dict[str, Channel] = {}
        self.registered: list[str] = []

    def register(self, school: str) -> Channel:
        channel = Channel(transcript=self.transcript)
        self.channels[school] = channel
        channel.send_to_coordinator(FederationMessage(MessageType.REGISTER, 0, school, {}))
        msg = channel.recv_at_coordinator()
        assert msg is not None and msg.type is MessageType.REGISTER
        self.registered.append(school)
        return channel

    def broadcast(self, msg_type: MessageType, round_idx: int, payload: dict[str, Any]) -> None:
        for school, channel in self.channels.items():
            channel.send_to_school(FederationMessage(msg_type, round_idx, school, payload))

    def start_round(self, round_idx: int) -> None:
        self.broadcast(MessageType.ROUND_START, round_idx, {
            "factors": self.factors.to_payload(),
            "alpha": self.config.alpha,
            "epochs": self.config.epochs,
            "lr": self.config.lr,
            "lambda": self.config.lam,
        })

    def collect_updates(self, round_idx: int) -> dict[str, dict[str, Any]]:
        updates: dict[str, dict[str, Any]] = {}
        for school, channel in self.channels.items():
            msg = channel.recv_at_coordinator()
            if msg is None:
                continue
            if msg.round != round_idx:
                raise VersionMismatch(f"update for round {msg.round} during round {round_idx}")
            if msg.type is MessageType.UPDATE:
                updates[school] = msg.payload
        missing = [s for s in self.registered if s not in updates]
        if missing:
            raise MissingSchool(f"no update from {missing} in round {round_idx}")
        return updates

    def aggregate(self, updates: dict[str, dict[str, Any]]) -> tuple[float, int]:
        """Unmask by summation, weight by n^alpha, fold into the factors."""
        width = self.factors.dim + 1
        length = len(self.factors.items) * width
        totals = [0] * length
        denom = 0.0
        eval_hits = eval_total = 0
        for school in self.registered:
            payload = updates[school]
            masked = payload["masked"]
            if len(masked) != length:
                raise Abort(f"malformed update length from {school}")
            for i, v in enumerate(masked):
                totals[i] += v
            denom += payload["n"] ** self.config.alpha
            eval_hits += payload["eval_hits"]
            eval_total += payload["eval_total"]
        # Masks cancel in the integer sum; only now return to real arithmetic.
        delta = np.array([t / denom / SCALE for t in totals]).reshape(len(self.factors.items), width)
        self.factors.factors = self.factors.factors + delta[:, :-1]
        self.factors.biases = self.factors.biases + delta[:, -1]
        self.factors.version += 1
        metric = eval_hits / eval_total if eval_total else float("nan")
        return metric, self.factors.version


def run_federation(
    config: FederationConfig,
    nodes: dict[str, SchoolNode],
    drop_school_at: Optional[tuple[str, int]] = None,
) -> RunResult:
    """Deterministic full simulation of R synchronous rounds.

    Each history entry records the holdout hit-rate of the factors the round
    started from (i.e. after round-1 aggregations). ``drop_school_at`` is a
    fault-injection hook: that school registers but never sends its update
    in the given round, aborting the run with partial history.
    """
    items = tuple(sorted({i for node in nodes.values() for i in node.catalog}))
    coordinator = Coordinator(config, items)
    indices = {school: i for i, school in enumerate(sorted(config.schools))}
    for school in sorted(config.schools):
        coordinator.register(school)

    history: list[dict[str, Any]] = []
    aborted = False
    for round_idx in range(1, config.rounds + 1):
        coordinator.start_round(round_idx)
        for school in sorted(config.schools):
            node = nodes[school]
            channel = coordinator.channels[school]
            msg = channel.recv_at_school()
            while msg is not None and msg.type is MessageType.ROUND_END:
                msg = channel.recv_at_school()  # drain last round's close
            assert msg is not None and msg.type is MessageType.ROUND_START
            shared = ItemFactors.from_payload(msg.payload["factors"])
            hits, total = node.evaluate_hits(shared, k=config.top_k)
            dq, db, n = node.local_train(
                shared, msg.payload["epochs"], msg.payload["lr"], msg.payload["lambda"], round_idx
            )
            if drop_school_at == (school, round_idx):
                continue  # dropout after masking would follow; simulate silence
            payload = node.build_update_payload(
                dq, db, n, msg.payload["alpha"], round_idx,
                [indices[s] for s in sorted(config.schools)], (hits, total),
            )
            channel.send_to_coordinator(
                FederationMessage(MessageType.UPDATE, round_idx, school, payload)
            )
        try:
            updates = coordinator.collect_updates(round_idx)
        except MissingSchool:
            coordinator.broadcast(MessageType.ABORT, round_idx, {"reason": "missing school"})
            aborted = True
            break
        metric, version = coordinator.aggregate(updates)
        history.append({"round": round_idx, "version": version, "metric": metric})
        coordinator.broadcast(MessageType.ROUND_END, round_idx, {"version": version})

    final_hits = final_total = 0
    for school in sorted(config.schools):
        h, t = nodes[school].evaluate_hits(coordinator.factors, k=config.top_k)
        final_hits += h
        final_total += t
    final_metric = final_hits / final_total if final_total else float("nan")
    return RunResult(history=history, factors=coordinator.factors,
                     final_metric=final_metric, aborted=aborted)
