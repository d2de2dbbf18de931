"""Tree-shaped Markov chains of job states.

A job enters at the root, pays ``cost[i]`` for every period it waits in
state ``i`` and then moves to a child ``k`` with probability ``prob[k]``
(or leaves unserved with the remaining mass).  States are dense integer ids
``0..n-1``; ``labels`` keep whatever names the user gave them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12

StateSet = frozenset


class InvalidTreeError(ValueError):
    """Raised when an operation needs a valid tree and gets a broken one."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid Markov tree: " + "; ".join(self.problems))


@dataclass(frozen=True)
class ValidationReport:
    problems: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True, eq=False)
class MarkovTree:
    """Parent array, per-state entry probability and per-state holding cost.

    ``parent[root] == -1``.  ``prob[i]`` is P(parent(i), i); the root has
    prob 1.  Construction never raises on a malformed chain, call
    :func:`validate` for a report; derived quantities raise
    :class:`InvalidTreeError`.
    """

    parent: np.ndarray
    prob: np.ndarray
    cost: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64).copy()
        prob = np.asarray(self.prob, dtype=float).copy()
        cost = np.asarray(self.cost, dtype=float).copy()
        for arr in (parent, prob, cost):
            arr.setflags(write=False)
        labels = tuple(str(x) for x in self.labels) if len(self.labels) else tuple(
            str(i) for i in range(len(parent)))
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "prob", prob)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.parent)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"MarkovTree(n={self.n}, levels={self.L if self.report.ok else '?'})"

    @cached_property
    def report(self) -> ValidationReport:
        return validate(self)

    def require_valid(self) -> "MarkovTree":
        if not self.report.ok:
            raise InvalidTreeError(self.report.problems)
        return self

    @cached_property
    def root(self) -> int:
        self.require_valid()
        return int(np.flatnonzero(self.parent < 0)[0])

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in range(self.n)]
        for i, pa in enumerate(self.parent):
            if 0 <= pa < self.n:
                kids[pa].append(i)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def level(self) -> np.ndarray:
        self.require_valid()
        lvl = np.zeros(self.n, dtype=np.int64)
        for i in self.order[1:]:
            lvl[i] = lvl[self.parent[i]] + 1
        lvl.setflags(write=False)
        return lvl

    @cached_property
    def order(self) -> np.ndarray:
        """Breadth-first order from the root (parents before children)."""
        self.require_valid()
        return _bfs(self.children, self.root)

    @cached_property
    def by_level(self) -> tuple[np.ndarray, ...]:
        lvl = self.level
        return tuple(np.flatnonzero(lvl == d) for d in range(self.L))

    @property
    def L(self) -> int:
        return int(self.level.max()) + 1

    @cached_property
    def child_mass(self) -> np.ndarray:
        mass = np.zeros(self.n)
        nonroot = self.parent >= 0
        np.add.at(mass, self.parent[nonroot], self.prob[nonroot])
        return mass

    @property
    def theta(self) -> float:
        """Minimum abandonment probability over states (may be 0)."""
        return float(max(0.0, np.min(1.0 - self.child_mass)))

    def index_of(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown state label {label!r}") from None

    def with_costs(self, cost) -> "MarkovTree":
        cost = np.broadcast_to(np.asarray(cost, dtype=float), (self.n,))
        return MarkovTree(self.parent, self.prob, cost, self.labels)


def _bfs(children, root: int) -> np.ndarray:
    out = [root]
    head = 0
    while head < len(out):
        out.extend(children[out[head]])
        head += 1
    return np.asarray(out, dtype=np.int64)


def validate(tree: MarkovTree) -> ValidationReport:
    """List every violated structural or probabilistic assumption."""
    problems: list[str] = []
    n = len(tree.parent)
    if n == 0:
        return ValidationReport(("empty state space",))
    if len(tree.prob) != n or len(tree.cost) != n:
        return ValidationReport(("parent, prob and cost lengths differ",))
    if len(tree.labels) != n:
        problems.append("labels length differs from state count")
    elif len(set(tree.labels)) != n:
        problems.append("duplicate state labels")

    parent = tree.parent
    roots = np.flatnonzero(parent < 0)
    if len(roots) == 0:
        problems.append("no root")
    elif len(roots) > 1:
        problems.append(f"multiple roots: {[tree.labels[r] for r in roots]}")
    bad_ref = np.flatnonzero((parent >= n) | (parent == np.arange(n)))
    if len(bad_ref):
        problems.append(f"bad parent reference at states {bad_ref.tolist()}")

    if len(roots) == 1 and not len(bad_ref):
        reach = _bfs(tree.children, int(roots[0]))
        if len(reach) != n:
            missing = sorted(set(range(n)) - set(reach.tolist()))
            problems.append(f"states not reachable from the root (cycle): {missing}")

    prob, cost = tree.prob, tree.cost
    nonroot = parent >= 0
    if not np.all(np.isfinite(prob)) or np.any(prob[nonroot] <= 0) or np.any(prob > 1):
        problems.append("transition probability outside (0, 1]")
    if len(roots) == 1 and prob[roots[0]] != 1.0:
        problems.append("root probability must be 1")
    if not np.all(np.isfinite(cost)) or np.any(cost <= 0):
        problems.append("holding cost must be positive")
    if not len(bad_ref):
        mass = np.zeros(n)
        np.add.at(mass, parent[nonroot], prob[nonroot])
        over = np.flatnonzero(mass > 1.0 + PROB_TOL)
        if len(over):
            problems.append(f"probability mass > 1 at states {[tree.labels[i] for i in over]}")
    return ValidationReport(tuple(problems))


def pass_prob(tree: MarkovTree) -> np.ndarray:
    """Probability that an unserved job ever visits each state."""
    tree.require_valid()
    pi = np.empty(tree.n)
    pi[tree.root] = 1.0
    for lvl in tree.by_level[1:]:
        pi[lvl] = pi[tree.parent[lvl]] * tree.prob[lvl]
    return pi


def future_cost(tree: MarkovTree) -> np.ndarray:
    """Expected cost an unserved job pays from state ``a`` onwards."""
    tree.require_valid()
    cf = tree.cost.copy()
    for lvl in reversed(tree.by_level[1:]):
        np.add.at(cf, tree.parent[lvl], tree.prob[lvl] * cf[lvl])
    return cf


def ancestors(tree: MarkovTree, i: int) -> StateSet:
    """States on the root-to-``i`` path, both ends included."""
    tree.require_valid()
    out = []
    while i >= 0:
        out.append(int(i))
        i = tree.parent[i]
    return frozenset(out)


def subtree(tree: MarkovTree, states) -> StateSet:
    """Union of the subtrees rooted at ``states`` (an int or an iterable)."""
    tree.require_valid()
    stack = [int(states)] if np.isscalar(states) else [int(s) for s in states]
    seen = set()
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.add(s)
        stack.extend(tree.children[s])
    return frozenset(seen)


def top_set(tree: MarkovTree, states: Iterable[int]) -> StateSet:
    """Minimal subset of ``states`` whose subtrees cover ``states``."""
    tree.require_valid()
    X = frozenset(int(s) for s in states)
    top = []
    for i in X:
        a = tree.parent[i]
        while a >= 0 and a not in X:
            a = tree.parent[a]
        if a < 0:
            top.append(i)
    return frozenset(top)


# -- serialization ---------------------------------------------------------

def to_text(tree: MarkovTree) -> str:
    lines = ["# id parent p cost"]
    for i in range(tree.n):
        pa = "-" if tree.parent[i] < 0 else tree.labels[tree.parent[i]]
        lines.append(f"{tree.labels[i]} {pa} {float(tree.prob[i])!r} {float(tree.cost[i])!r}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> MarkovTree:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 'id parent p cost', got {raw!r}")
        rows.append(parts)
    return _from_rows([(r[0], None if r[1] == "-" else r[1], float(r[2]), float(r[3])) for r in rows])


def to_json(tree: MarkovTree) -> str:
    states = []
    for i in range(tree.n):
        pa = None if tree.parent[i] < 0 else tree.labels[tree.parent[i]]
        states.append({"id": tree.labels[i], "parent": pa,
                       "p": float(tree.prob[i]), "cost": float(tree.cost[i])})
    return json.dumps({"states": states}, indent=1)


def from_json(text: str) -> MarkovTree:
    doc = json.loads(text)
    return _from_rows([(str(s["id"]), None if s["parent"] is None else str(s["parent"]),
                        float(s["p"]), float(s["cost"])) for s in doc["states"]])


def _from_rows(rows) -> MarkovTree:
    labels = [r[0] for r in rows]
    pos = {lab: i for i, lab in enumerate(labels)}
    if len(pos) != len(labels):
        raise ValueError("duplicate state ids")
    try:
        parent = [-1 if r[1] is None else pos[r[1]] for r in rows]
    except KeyError as e:
        raise ValueError(f"unknown parent id {e.args[0]!r}") from None
    return MarkovTree(parent, [r[2] for r in rows], [r[3] for r in rows], tuple(labels))


def load_tree(path) -> MarkovTree:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        return from_json(text)
    return from_text(text)


def save_tree(tree: MarkovTree, path) -> None:
    path = Path(path)
    path.write_text(to_json(tree) if path.suffix == ".json" else to_text(tree))


# -- instances ---------------------------------------------------------------

def water_filling_example(cost=1.0) -> MarkovTree:
    """Six-state tree used to illustrate water filling.

    Root ``1`` splits evenly into ``2`` and ``4``; ``2`` continues to ``3``
    with probability 1/2; ``4`` splits evenly into ``5`` and ``6``.
    """
    parent = [-1, 0, 1, 0, 3, 3]
    prob = [1.0, 0.5, 0.5, 0.5, 0.5, 0.5]
    cost = np.broadcast_to(np.asarray(cost, dtype=float), (6,))
    return MarkovTree(parent, prob, cost, ("1", "2", "3", "4", "5", "6"))


def post_video_example(entry_cost: float = 1e-3, post_cost: float = 2.0,
                       video_cost: float = 3.0, red_cost: float = 6.0,
                       length: int = 5) -> MarkovTree:
    """Post/Video instance where both classic index rules go wrong.

    Every arrival spends one period in an ``entry`` state and then becomes a
    Post (cost 2 for ``length`` periods) or a Video (cost 3 for one period)
    with equal probability.  Half of the Videos turn Red (cost 6 for the
    remaining periods); Blue videos cost nothing afterwards, which is the
    same as leaving.
    """
    labels = ["entry"]
    parent, prob, cost = [-1], [1.0], [entry_cost]

    def chain(prefix, first_parent, first_p, c, periods):
        pa, p = first_parent, first_p
        for k in periods:
            labels.append(f"{prefix}{k}")
            parent.append(pa)
            prob.append(p)
            cost.append(c)
            pa, p = len(labels) - 1, 1.0

    chain("post", 0, 0.5, post_cost, range(1, length + 1))
    chain("video", 0, 0.5, video_cost, [1])
    chain("red", labels.index("video1"), 0.5, red_cost, range(2, length + 1))
    return MarkovTree(parent, prob, cost, tuple(labels))


def random_tree(rng: np.random.Generator, n: int, max_children: int = 3,
                min_abandon: float = 0.0, cost_range=(0.1, 10.0),
                max_depth: int | None = None) -> MarkovTree:
    """Random tree with ``n`` states, for property tests and benchmarks."""
    if n < 1:
        raise ValueError("n must be positive")
    parent = [-1]
    depth = [0]
    nkids = [0]
    for i in range(1, n):
        ok = [j for j in range(i) if nkids[j] < max_children
              and (max_depth is None or depth[j] + 1 < max_depth)]
        pa = int(rng.choice(ok))
        parent.append(pa)
        depth.append(depth[pa] + 1)
        nkids.append(0)
        nkids[pa] += 1
    prob = np.ones(n)
    kids: dict[int, list[int]] = {}
    for i in range(1, n):
        kids.setdefault(parent[i], []).append(i)
    for pa, ks in kids.items():
        w = rng.dirichlet(np.ones(len(ks) + 1))
        keep = (1.0 - min_abandon) * rng.uniform(0.3, 1.0)
        p = w[:-1] / w[:-1].sum() * keep
        p = np.maximum(p, 1e-3)
        prob[ks] = p * (keep / max(p.sum(), keep))
    prob[0] = 1.0
    cost = rng.uniform(*cost_range, size=n)
    return MarkovTree(parent, prob, cost)
