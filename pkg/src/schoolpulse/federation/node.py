"""School-side federation state: private user factors, private item offsets,
local training, and masked update construction.

The model is r̂ = μ + b_u + b_i + p_u · (q_i + o_i), with μ fixed at 0.5
(enrollment=1, sampled negative=0, balanced 1:1). Shared across schools:
item factors q and item biases b_i. Private: user factors p_u, user biases
b_u, and the per-school offset layer o (only for items the school offers).

Local loss (mean over the n local rows, penalty once per school):

    L = (1/n) Σ e²  +  λ(‖p‖² + ‖q‖² + ‖o‖²),   e = r − r̂

With aggregation weights n_s^α/Σ n^α summing to 1, the α=1 weighted sum of
per-school gradients equals the gradient of the pooled mean loss exactly,
which is what the federated-equals-centralized check rides on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .codec import SCALE, encode_array

MU = 0.5
MASK_BITS = 40
INIT_SCALE = 0.3  # factor init std; tuned on the synthetic dataset

# SeedSequence purpose codes so every stream is independent and reproducible.
SEED_ITEMS = 1
SEED_USERS = 2
SEED_NEGATIVES = 3
SEED_HOLDOUT = 4
SEED_MASK = 5


class NoInteractions(Exception):
    pass


@dataclass
class ItemFactors:
    """Shared global state: one factor row and one bias per elective."""

    items: tuple[str, ...]  # sorted elective ids, canonical coordinate order
    factors: np.ndarray  # (n_items, dim)
    biases: np.ndarray  # (n_items,)
    version: int = 0

    @property
    def dim(self) -> int:
        return int(self.factors.shape[1])

    def index(self, item: str) -> int:
        return self.items.index(item)

    def copy(self) -> "ItemFactors":
        return ItemFactors(self.items, self.factors.copy(), self.biases.copy(), self.version)

    def to_payload(self) -> dict[str, Any]:
        return {
            "items": list(self.items),
            "factors": [[float(v) for v in row] for row in self.factors],
            "biases": [float(v) for v in self.biases],
            "version": self.version,
        }

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "ItemFactors":
        return cls(
            items=tuple(payload["items"]),
            factors=np.asarray(payload["factors"], dtype=float),
            biases=np.asarray(payload["biases"], dtype=float),
            version=int(payload["version"]),
        )

    @classmethod
    def init(cls, items: tuple[str, ...], dim: int, seed: int) -> "ItemFactors":
        rng = np.random.default_rng(np.random.SeedSequence([seed, SEED_ITEMS]))
        return cls(
            items=items,
            factors=rng.normal(0.0, INIT_SCALE, size=(len(items), dim)),
            biases=np.zeros(len(items)),
            version=0,
        )


def pair_mask(seed: int, idx_a: int, idx_b: int, round_idx: int, length: int) -> list[int]:
    """Per-round, per-coordinate mask shared by one school pair."""
    lo, hi = min(idx_a, idx_b), max(idx_a, idx_b)
    rng = np.random.default_rng(np.random.SeedSequence([seed, SEED_MASK, lo, hi, round_idx]))
    return [int(v) for v in rng.integers(-(2**MASK_BITS), 2**MASK_BITS, size=length, dtype=np.int64)]


@dataclass
class SchoolNode:
    """One school's private federation state. Nothing here is transmitted
    except the masked fixed-point update built by build_update_payload."""

    school: str
    index: int  # position in the sorted roster of participating schools
    enrollments: dict[str, tuple[str, ...]]  # token -> enrolled elective ids
    offered: tuple[str, ...]
    catalog: tuple[str, ...]
    dim: int
    seed: int

    user_factors: dict[str, np.ndarray] = field(default_factory=dict)
    user_biases: dict[str, float] = field(default_factory=dict)
    offsets: dict[str, np.ndarray] = field(default_factory=dict)
    holdout: dict[str, str] = field(default_factory=dict)
    train_enrollments: dict[str, tuple[str, ...]] = field(default_factory=dict)
    last_true_encoded: Optional[list[int]] = None  # test instrumentation

    def __post_init__(self) -> None:
        if not self.enrollments:
            raise NoInteractions(f"school {self.school} has no interactions")
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, SEED_USERS, self.index]))
        for token in sorted(self.enrollments):
            self.user_factors[token] = rng.normal(0.0, INIT_SCALE, size=self.dim)
            self.user_biases[token] = 0.0
        for item in self.offered:
            self.offsets[item] = np.zeros(self.dim)
        hold_rng = np.random.default_rng(np.random.SeedSequence([self.seed, SEED_HOLDOUT, self.index]))
        for token in sorted(self.enrollments):
            items = tuple(sorted(self.enrollments[token]))
            if len(items) >= 2:
                held = items[int(hold_rng.integers(len(items)))]
                self.holdout[token] = held
                self.train_enrollments[token] = tuple(i for i in items if i != held)
            else:
                self.train_enrollments[token] = items

    def training_rows(self, round_idx: int) -> list[tuple[str, str, float]]:
        """Positives from training enrollments plus 1:1 seeded negatives
        drawn per round from the global catalog."""
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, SEED_NEGATIVES, self.index, round_idx])
        )
        rows: list[tuple[str, str, float]] = []
        for token in sorted(self.train_enrollments):
            taken = set(self.enrollments[token])
            candidates = [i for i in self.catalog if i not in taken]
            for item in self.train_enrollments[token]:
                rows.append((token, item, 1.0))
                if candidates:
                    rows.append((token, candidates[int(rng.integers(len(candidates)))], 0.0))
        if not rows:
            raise NoInteractions(f"school {self.school} has no training rows")
        return rows

    def _offset(self, item: str) -> np.ndarray:
        off = self.offsets.get(item)
        return off if off is not None else np.zeros(self.dim)

    def local_train(
        self,
        shared: ItemFactors,
        epochs: int,
        lr: float,
        lam: float,
        round_idx: int,
    ) -> tuple[np.ndarray, np.ndarray, int]:
        """Full-batch gradient descent on the local loss for E epochs.

        All parameter blocks step simultaneously from gradients taken at the
        epoch's starting point. Updates private state in place; returns
        (delta_factors, delta_biases, n) with deltas = new minus received.
        """
        items = shared.items
        item_idx = {item: i for i, item in enumerate(items)}
        q = shared.factors.copy()
        b_i = shared.biases.copy()
        rows = self.training_rows(round_idx)
        n = len(rows)

        tokens = sorted(self.user_factors)
        tok_idx = {t: i for i, t in enumerate(tokens)}
        P = np.array([self.user_factors[t] for t in tokens])
        BU = np.array([self.user_biases[t] for t in tokens])
        O = np.zeros_like(q)
        for item, off in self.offsets.items():
            O[item_idx[item]] = off
        offered_mask = np.zeros(len(items), dtype=bool)
        offered_mask[[item_idx[i] for i in self.offsets if i in item_idx]] = True

        u_ix = np.array([tok_idx[t] for t, _, _ in rows])
        i_ix = np.array([item_idx[it] for _, it, _ in rows])
        r = np.array([val for _, _, val in rows])

        for _ in range(epochs):
            qo = q + O
            err = r - (MU + BU[u_ix] + b_i[i_ix] + np.sum(P[u_ix] * qo[i_ix], axis=1))
            c = -2.0 * err / n
            grad_q = 2.0 * lam * q
            np.add.at(grad_q, i_ix, c[:, None] * P[u_ix])
            grad_b = np.zeros(len(items))
            np.add.at(grad_b, i_ix, c)
            grad_P = 2.0 * lam * P
            np.add.at(grad_P, u_ix, c[:, None] * qo[i_ix])
            grad_BU = np.zeros(len(tokens))
            np.add.at(grad_BU, u_ix, c)
            grad_O = 2.0 * lam * O
            np.add.at(grad_O, i_ix, c[:, None] * P[u_ix])
            grad_O[~offered_mask] = 0.0  # items without a local offset param
            q = q - lr * grad_q
            b_i = b_i - lr * grad_b
            P = P - lr * grad_P
            BU = BU - lr * grad_BU
            O = O - lr * grad_O

        for t in tokens:
            self.user_factors[t] = P[tok_idx[t]]
            self.user_biases[t] = float(BU[tok_idx[t]])
        for item in self.offsets:
            self.offsets[item] = O[item_idx[item]]

        return q - shared.factors, b_i - shared.biases, n

    def build_update_payload(
        self,
        delta_factors: np.ndarray,
        delta_biases: np.ndarray,
        n: int,
        alpha: float,
        round_idx: int,
        peer_indices: list[int],
        eval_counts: tuple[int, int],
    ) -> dict[str, Any]:
        """Fixed-point encode the n^alpha-weighted delta and add pairwise masks.

        The weighting happens school-side because the coordinator must never
        see a single school's delta: it divides the masked sum by Σ n^alpha.
        Masks cancel exactly across the full roster (python ints, no overflow).
        """
        weighted = np.column_stack([delta_factors, delta_biases]).reshape(-1) * (n ** alpha)
        encoded = encode_array(weighted)
        self.last_true_encoded = list(encoded)
        masked = list(encoded)
        for peer in peer_indices:
            if peer == self.index:
                continue
            mask = pair_mask(self.seed, self.index, peer, round_idx, len(masked))
            sign = 1 if self.index < peer else -1
            masked = [m + sign * k for m, k in zip(masked, mask)]
        hits, total = eval_counts
        return {"masked": masked, "n": n, "eval_hits": hits, "eval_total": total}

    def score(self, shared: ItemFactors, token: str, item: str) -> float:
        i = shared.index(item)
        p_u = self.user_factors[token]
        return float(
            MU + self.user_biases[token] + shared.biases[i] + p_u @ (shared.factors[i] + self._offset(item))
        )

    def evaluate_hits(self, shared: ItemFactors, k: int = 5) -> tuple[int, int]:
        """Holdout hit-rate counts: is the held-out enrollment inside the
        top-k recommendations over items the student hasn't trained on?"""
        hits = total = 0
        for token, held in sorted(self.holdout.items()):
            trained = set(self.train_enrollments[token])
            scored = sorted(
                ((-self.score(shared, token, item), item) for item in shared.items if item not in trained),
            )
            top = [item for _, item in scored[:k]]
            hits += int(held in top)
            total += 1
        return hits, total

    def to_state_dict(self) -> dict[str, Any]:
        """School-local persistence; never sent over the federation wire."""
        return {
            "school": self.school,
            "index": self.index,
            "enrollments": {t: list(v) for t, v in self.enrollments.items()},
            "offered": list(self.offered),
            "catalog": list(self.catalog),
            "dim": self.dim,
            "seed": self.seed,
            "user_factors": {t: [float(x) for x in v] for t, v in self.user_factors.items()},
            "user_biases": {t: float(v) for t, v in self.user_biases.items()},
            "offsets": {i: [float(x) for x in v] for i, v in self.offsets.items()},
        }

    @classmethod
    def from_state_dict(cls, data: dict[str, Any]) -> "SchoolNode":
        node = cls(
            school=data["school"], index=data["index"],
            enrollments={t: tuple(v) for t, v in data["enrollments"].items()},
            offered=tuple(data["offered"]), catalog=tuple(data["catalog"]),
            dim=data["dim"], seed=data["seed"],
        )
        node.user_factors = {t: np.asarray(v, dtype=float) for t, v in data["user_factors"].items()}
        node.user_biases = {t: float(v) for t, v in data["user_biases"].items()}
        node.offsets = {i: np.asarray(v, dtype=float) for i, v in data["offsets"].items()}
        return node


def nodes_from_records(
    records_by_school: dict[str, list],
    dim: int,
    seed: int,
    offered_by_school: Optional[dict[str, tuple[str, ...]]] = None,
) -> dict[str, "SchoolNode"]:
    """Build federation nodes from pseudonymized student records.

    Enrollments come from ElectiveInteraction rows with enrolled=True; a
    school's offered catalog defaults to the items observed in its own
    interactions. Schools without any interactions are left out.
    """
    nodes: dict[str, SchoolNode] = {}
    schools = sorted(records_by_school)
    catalog: set[str] = set()
    enrollments_by_school: dict[str, dict[str, tuple[str, ...]]] = {}
    for school in schools:
        enrollments: dict[str, tuple[str, ...]] = {}
        for record in records_by_school[school]:
            items = tuple(sorted({e.elective_id for e in record.electives if e.enrolled}))
            if items:
                enrollments[record.token] = items
                catalog.update(items)
        enrollments_by_school[school] = enrollments
    if offered_by_school:
        for items in offered_by_school.values():
            catalog.update(items)
    catalog_t = tuple(sorted(catalog))
    for index, school in enumerate(schools):
        enrollments = enrollments_by_school[school]
        if not enrollments:
            continue
        if offered_by_school and school in offered_by_school:
            offered = tuple(sorted(offered_by_school[school]))
        else:
            offered = tuple(sorted({i for items in enrollments.values() for i in items}))
        nodes[school] = SchoolNode(
            school=school, index=index, enrollments=enrollments,
            offered=offered, catalog=catalog_t, dim=dim, seed=seed,
        )
    return nodes
