"""Discrete-time N-server queue with tree-Markov jobs.

Each period: draw R(t) ~ Bin(N, mu) servers, serve jobs by policy, charge
holding cost on the unserved, move the unserved one level down the tree (or
out), then admit A(t) ~ Bin(N, lambda) new jobs at the root.  The engine
tracks per-state counts and runs a block of replications as one array.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .schedulers import Policy
from .tree import MarkovTree

# event-type keys for the random streams
CAPACITY, ARRIVALS, TRANSITIONS, POLICY = 1, 2, 3, 4


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one (seed, key...) stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


@dataclass(frozen=True)
class SimConfig:
    N: int
    lam: float
    mu: float
    T: int
    warmup: int | None = None  # default T // 5
    seed: int = 0
    replications: int = 1
    block: int = 16  # replications vectorised together; fixes the transition streams

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.T // 5)
        problems = []
        if int(self.N) != self.N or self.N < 1:
            problems.append("N must be a positive integer")
        if not 0.0 <= self.lam < 1.0:
            problems.append("lambda must lie in [0, 1)")
        if not 0.0 <= self.mu <= 1.0:
            problems.append("mu must lie in [0, 1]")
        if self.T < 1:
            problems.append("T must be positive")
        if not 0 <= self.warmup < self.T:
            problems.append("warmup must satisfy 0 <= warmup < T")
        if self.replications < 1:
            problems.append("replications must be positive")
        if self.block < 1:
            problems.append("block must be positive")
        if problems:
            raise ValueError("invalid SimConfig: " + "; ".join(problems))


@dataclass
class SimTrace:
    """Per-period record of the first replication of a run."""

    capacity: np.ndarray  # (T,)
    arrivals: np.ndarray  # (T,)
    queue: np.ndarray  # (T, n) Q(t) before service
    served: np.ndarray  # (T, n) R(t)
    cost: np.ndarray  # (T,)
    moved: np.ndarray  # (T, n) jobs that moved into state i at the end of t
    abandoned: np.ndarray  # (T, n) unserved state-i jobs that left at the end of t


@dataclass
class SimMetrics:
    config: SimConfig
    policy: str
    cost: np.ndarray  # (reps, T) holding cost per period
    served: np.ndarray  # (reps, T)
    queue_len: np.ndarray  # (reps, T)
    mean_queue: np.ndarray  # (reps, n) post-warmup mean Q_i
    mean_served: np.ndarray  # (reps, n) post-warmup mean R_i
    notes: list[str] = field(default_factory=list)
    trace: SimTrace | None = None

    @property
    def per_rep_average(self) -> np.ndarray:
        return self.cost[:, self.config.warmup:].mean(axis=1)

    @property
    def cost_avg(self) -> float:
        return float(self.per_rep_average.mean())

    @property
    def cost_se(self) -> float:
        x = self.per_rep_average
        return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")


def _transition_table(tree: MarkovTree):
    width = max((len(k) for k in tree.children), default=0)
    pvals = np.zeros((tree.n, width + 1))
    src = np.empty(tree.n - 1, dtype=np.int64)
    slot = np.empty(tree.n - 1, dtype=np.int64)
    dst = np.empty(tree.n - 1, dtype=np.int64)
    e = 0
    for i, kids in enumerate(tree.children):
        for s, k in enumerate(kids):
            pvals[i, s] = tree.prob[k]
            src[e], slot[e], dst[e] = i, s, k
            e += 1
    pvals[:, width] = np.clip(1.0 - pvals[:, :width].sum(axis=1), 0.0, 1.0)
    return pvals, src, slot, dst


def _priority_service(Q, cap, order):
    Qo = Q[:, order]
    ahead = np.cumsum(Qo, axis=1) - Qo
    R = np.empty_like(Q)
    R[:, order] = np.clip(cap[:, None] - ahead, 0, Qo)
    return R


def _random_service(Q, cap, rng):
    left_jobs = Q.sum(axis=1)
    left_cap = np.minimum(cap, left_jobs)
    R = np.zeros_like(Q)
    for i in range(Q.shape[1]):
        R[:, i] = rng.hypergeometric(Q[:, i], left_jobs - Q[:, i], left_cap)
        left_jobs -= Q[:, i]
        left_cap -= R[:, i]
    return R


def _run_block(tree: MarkovTree, cfg: SimConfig, policy: Policy, first: int, count: int,
               want_trace: bool):
    n, T, N = tree.n, cfg.T, cfg.N
    reps = range(first, first + count)
    cap = np.stack([stream(cfg.seed, r, CAPACITY).binomial(N, cfg.mu, size=T) for r in reps])
    arr = np.stack([stream(cfg.seed, r, ARRIVALS).binomial(N, cfg.lam, size=T) for r in reps])
    move_rng = stream(cfg.seed, first, count, TRANSITIONS)
    pol_rng = stream(cfg.seed, first, count, POLICY)
    pvals, src, slot, dst = _transition_table(tree)
    order = policy.state_order(tree)
    c = tree.cost
    root = tree.root

    cost = np.empty((count, T))
    served = np.empty((count, T), dtype=np.int64)
    qlen = np.empty((count, T), dtype=np.int64)
    sumQ = np.zeros((count, n))
    sumR = np.zeros((count, n))
    tr = None
    if want_trace:
        tr = SimTrace(cap[0].copy(), arr[0].copy(), *(np.zeros((T, n), np.int64) for _ in range(2)),
                      np.zeros(T), *(np.zeros((T, n), np.int64) for _ in range(2)))

    Q = np.zeros((count, n), dtype=np.int64)
    for t in range(T):
        if order is None:
            R = _random_service(Q, cap[:, t], pol_rng)
        else:
            R = _priority_service(Q, cap[:, t], order)
        Z = Q - R
        cost[:, t] = Z @ c
        served[:, t] = R.sum(axis=1)
        qlen[:, t] = Q.sum(axis=1)
        if t >= cfg.warmup:
            sumQ += Q
            sumR += R
        moves = move_rng.multinomial(Z, pvals)
        Qn = np.zeros_like(Q)
        Qn[:, dst] = moves[:, src, slot]
        Qn[:, root] = arr[:, t]
        if tr is not None:
            tr.queue[t], tr.served[t], tr.cost[t] = Q[0], R[0], cost[0, t]
            tr.moved[t, dst] = moves[0, src, slot]
            tr.abandoned[t] = moves[0, :, -1]
        Q = Qn
    span = T - cfg.warmup
    return cost, served, qlen, sumQ / span, sumR / span, tr


def run(tree: MarkovTree, config: SimConfig, policy: Policy, trace: bool = False,
        workers: int = 1) -> SimMetrics:
    """Simulate ``config.replications`` independent runs of ``policy``.

    Capacity and arrival draws are keyed by (seed, replication), so two
    policies run with the same config see identical server and arrival paths.
    """
    tree.require_valid()
    if policy.index is not None and len(policy.index) != tree.n:
        raise ValueError("policy index length does not match the tree")
    blocks = [(s, min(config.block, config.replications - s))
              for s in range(0, config.replications, config.block)]
    args = [(tree, config, policy, s, k, trace and s == 0) for s, k in blocks]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_block, *zip(*args)))
    else:
        parts = [_run_block(*a) for a in args]
    cat = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    notes = []
    if tree.theta <= 0:
        notes.append("theta = 0: the stationarity premise (positive abandonment everywhere) fails")
    notes.append(f"long-run averages are post-warmup means over periods {config.warmup}..{config.T - 1}")
    return SimMetrics(config, policy.name, *cat, notes=notes, trace=parts[0][5])


@dataclass(frozen=True)
class RegretEstimate:
    value: float
    se: float
    ci_low: float
    ci_high: float
    per_rep: np.ndarray


def regret(metrics: SimMetrics, N: int | None = None, c_star: float | None = None,
           level: float = 0.95) -> RegretEstimate:
    """Average cost minus N * C*, with a t-interval over replications."""
    if c_star is None:
        raise ValueError("regret needs the optimal fluid cost c_star")
    N = metrics.config.N if N is None else N
    per = metrics.per_rep_average - N * c_star
    k = len(per)
    mean = float(per.mean())
    if k < 2:
        return RegretEstimate(mean, float("nan"), float("-inf"), float("inf"), per)
    se = float(per.std(ddof=1) / math.sqrt(k))
    h = float(stats.t.ppf(0.5 + level / 2, k - 1)) * se
    return RegretEstimate(mean, se, mean - h, mean + h, per)


@dataclass(frozen=True)
class StateReport:
    mean_queue: np.ndarray
    mean_served: np.ndarray
    mean_remaining: np.ndarray
    se_queue: np.ndarray
    se_remaining: np.ndarray

    def rows(self, labels=None):
        labels = labels or [str(i) for i in range(len(self.mean_queue))]
        return [dict(state=l, Q=q, R=r, Z=z) for l, q, r, z in
                zip(labels, self.mean_queue, self.mean_served, self.mean_remaining)]


def steady_state_report(metrics: SimMetrics) -> StateReport:
    Q, R = metrics.mean_queue, metrics.mean_served
    Z = Q - R
    k = Q.shape[0]

    def se(x):
        return x.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.full(x.shape[1], np.nan)

    return StateReport(Q.mean(0), R.mean(0), Z.mean(0), se(Q), se(Z))
