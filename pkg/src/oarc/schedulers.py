"""Index-based scheduling policies and the per-period service selection."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .ski_rental import ValueTable, priority_order
from .tree import MarkovTree, future_cost


class PolicyKind(str, Enum):
    OARC = "oarc"
    INSTANTANEOUS_COST = "cmu"
    EXPECTED_REMAINING_COST = "cmutheta"
    FIFO = "fifo"
    RANDOM = "random"
    CUSTOM = "custom"


# job ids, state ids -> per-job scores (higher is served first)
ScoreHook = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Policy:
    kind: PolicyKind
    index: np.ndarray | None = None
    score: ScoreHook | None = None
    name: str = ""

    def __post_init__(self):
        kind = PolicyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.index is not None:
            idx = np.asarray(self.index, dtype=float).copy()
            idx.setflags(write=False)
            object.__setattr__(self, "index", idx)
        if kind in (PolicyKind.OARC, PolicyKind.INSTANTANEOUS_COST,
                    PolicyKind.EXPECTED_REMAINING_COST) and self.index is None:
            raise ValueError(f"{kind.value} policy needs a per-state index")
        if kind is PolicyKind.CUSTOM and self.index is None and self.score is None:
            raise ValueError("custom policy needs an index or a score hook")
        if not self.name:
            object.__setattr__(self, "name", kind.value)

    def state_order(self, tree: MarkovTree) -> np.ndarray | None:
        """Priority order over states, or None for the random policy.

        Jobs in one state at one time are interchangeable, so FIFO amounts to
        serving deeper levels first (older jobs sit deeper in the tree).
        """
        if self.kind is PolicyKind.RANDOM:
            return None
        if self.kind is PolicyKind.FIFO:
            return np.lexsort((np.arange(tree.n), -tree.level))
        if self.index is None:
            raise ValueError("a score-hook policy has no state order")
        return priority_order(self.index)


def builtin(kind, tree: MarkovTree, value_table: ValueTable | None = None) -> Policy:
    kind = PolicyKind(kind)
    if kind is PolicyKind.OARC:
        if value_table is None:
            raise ValueError("the OaRC policy needs a value table (solve gamma* first)")
        return Policy(kind, value_table.index)
    if kind is PolicyKind.INSTANTANEOUS_COST:
        return Policy(kind, tree.cost)
    if kind is PolicyKind.EXPECTED_REMAINING_COST:
        return Policy(kind, future_cost(tree))
    if kind in (PolicyKind.FIFO, PolicyKind.RANDOM):
        return Policy(kind)
    raise ValueError(f"no built-in index for {kind.value}")


def select(policy: Policy, queue: Sequence[tuple[int, int]], capacity: int,
           rng: np.random.Generator | None = None) -> set[int]:
    """Serve the top ``capacity`` jobs of ``queue``.

    ``queue`` lists ``(job id, state id)`` in arrival order.  Ranking is by
    index descending, then state id, then arrival order.
    """
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    if not queue:
        return set()
    jobs = np.fromiter((j for j, _ in queue), dtype=np.int64, count=len(queue))
    states = np.fromiter((s for _, s in queue), dtype=np.int64, count=len(queue))
    k = min(capacity, len(queue))
    if k == len(queue):
        return set(jobs.tolist())
    arrival = np.arange(len(queue))
    if policy.kind is PolicyKind.RANDOM:
        if rng is None:
            raise ValueError("the random policy needs an rng")
        return set(jobs[rng.choice(len(queue), size=k, replace=False)].tolist())
    if policy.kind is PolicyKind.FIFO:
        key = arrival.astype(float)
        return set(jobs[np.argsort(key, kind="stable")[:k]].tolist())
    if policy.score is not None:
        primary = -np.asarray(policy.score(jobs, states), dtype=float)
    else:
        primary = -policy.index[states]
    ranked = np.lexsort((arrival, states, primary))
    return set(jobs[ranked[:k]].tolist())
