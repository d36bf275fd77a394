"""Recommendation serving on top of trained federation state, with a
popularity-blended cold-start fallback for unknown students."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .node import ItemFactors, SchoolNode


class UnknownStudent(Exception):
    pass


class EmptyCatalog(Exception):
    pass


@dataclass(frozen=True)
class Recommendation:
    elective_id: str
    score: float
    cross_school: bool
    cold_start: bool = False

    def to_dict(self) -> dict:
        return {
            "elective_id": self.elective_id,
            "score": self.score,
            "cross_school": self.cross_school,
            "cold_start": self.cold_start,
        }


def recommend(
    node: SchoolNode, factors: ItemFactors, token: str, k: int
) -> list[Recommendation]:
    """Top-k untaken electives for a known student; items the school does not
    offer carry cross_school=True (their offset layer is zero)."""
    if token not in node.user_factors:
        raise UnknownStudent(token)
    taken = set(node.enrollments.get(token, ()))
    offered = set(node.offered)
    scored = [
        Recommendation(
            elective_id=item,
            score=node.score(factors, token, item),
            cross_school=item not in offered,
        )
        for item in factors.items
        if item not in taken
    ]
    scored.sort(key=lambda r: (-r.score, r.elective_id))
    return scored[:k]


def enrollment_popularity(nodes: dict[str, SchoolNode]) -> dict[str, float]:
    """Fraction of all students enrolled per elective (aggregate counts only)."""
    total_students = sum(len(node.enrollments) for node in nodes.values())
    counts: dict[str, int] = {}
    for node in nodes.values():
        for items in node.enrollments.values():
            for item in items:
                counts[item] = counts.get(item, 0) + 1
    catalog = {i for node in nodes.values() for i in node.catalog}
    return {item: counts.get(item, 0) / total_students if total_students else 0.0
            for item in sorted(catalog)}


def cold_start_recommend(
    popularity: dict[str, float],
    factors: ItemFactors,
    school_offered: tuple[str, ...],
    k: int,
) -> list[Recommendation]:
    """Popularity blended 50/50 with rank-normalized item bias; no student
    data involved by construction."""
    if not factors.items:
        raise EmptyCatalog("no electives in the catalog")
    # Fractional ranks: tied biases share the average of their positions, so
    # a flat bias vector contributes 0.5 everywhere instead of an id-ordered
    # spread.
    n = len(factors.items)
    order = sorted(range(n), key=lambda i: (factors.biases[i], factors.items[i]))
    positions = {i: pos for pos, i in enumerate(order)}
    bias_rank: dict[str, float] = {}
    for i in range(n):
        ties = [j for j in range(n) if factors.biases[j] == factors.biases[i]]
        avg_pos = sum(positions[j] for j in ties) / len(ties)
        bias_rank[factors.items[i]] = avg_pos / (n - 1) if n > 1 else 0.5
    offered = set(school_offered)
    recs = [
        Recommendation(
            elective_id=item,
            score=0.5 * popularity.get(item, 0.0) + 0.5 * bias_rank[item],
            cross_school=item not in offered,
            cold_start=True,
        )
        for item in factors.items
    ]
    recs.sort(key=lambda r: (-r.score, r.elective_id))
    return recs[:k]


def recommend_or_cold_start(
    nodes: dict[str, SchoolNode],
    factors: ItemFactors,
    token: str,
    school: str,
    k: int,
) -> list[Recommendation]:
    """The serving entry point: UnknownStudent routes to the cold-start path."""
    node = nodes.get(school)
    if node is not None:
        try:
            return recommend(node, factors, token, k)
        except UnknownStudent:
            pass
    offered = nodes[school].offered if school in nodes else ()
    return cold_start_recommend(enrollment_popularity(nodes), factors, offered, k)
