"""Water-filling fluid equilibria, their feasibility/optimality checks and the
optimal fluid cost C* that lower-bounds every scheduling policy."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np

from .ski_rental import check_rates, oarc_indices, optimal_gamma, value_functions
from .tree import (MarkovTree, ValidationReport, future_cost, pass_prob, subtree,
                   top_set)

MASS_TOL = 1e-12
CHECK_TOL = 1e-9


class StateType(IntEnum):
    UnReduced = 1
    FullyBlocked = 2
    Empty = 3
    PartiallyServed = 4
    PartiallyBlocked = 5
    PartiallyReduced = 6


@dataclass(frozen=True, eq=False)
class PriorityOrdering:
    """A permutation of state ids, highest priority first."""

    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64).copy()
        if order.ndim != 1 or not np.array_equal(np.sort(order), np.arange(len(order))):
            raise ValueError("ordering must be a permutation of the state ids")
        order.setflags(write=False)
        object.__setattr__(self, "order", order)

    def __len__(self):
        return len(self.order)

    def __iter__(self):
        return iter(self.order.tolist())

    @property
    def position(self) -> np.ndarray:
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(len(self.order))
        return pos

    @classmethod
    def from_labels(cls, tree: MarkovTree, labels) -> "PriorityOrdering":
        return cls([tree.index_of(str(x)) for x in labels])


def _as_ordering(tree, ordering) -> PriorityOrdering:
    o = ordering if isinstance(ordering, PriorityOrdering) else PriorityOrdering(ordering)
    if len(o) != tree.n:
        raise ValueError(f"ordering has {len(o)} states, tree has {tree.n}")
    return o


@dataclass(frozen=True, eq=False)
class FluidEquilibrium:
    lam: float
    mu: float
    ordering: PriorityOrdering
    q: np.ndarray
    nu: np.ndarray
    m: int
    partial: int | None
    kappa: float | None  # None stands for +infinity (no partially served state)
    classification: np.ndarray  # StateType codes

    @property
    def kappa_value(self) -> float:
        return float("inf") if self.kappa is None else self.kappa

    @property
    def z(self) -> np.ndarray:
        return self.q - self.nu


@lru_cache(maxsize=128)
def _euler(tree: MarkovTree) -> tuple[np.ndarray, np.ndarray]:
    """Entry/exit times so that a is an ancestor of b iff tin[a] <= tin[b] < tout[a]."""
    tin = np.empty(tree.n, dtype=np.int64)
    tout = np.empty(tree.n, dtype=np.int64)
    t = 0
    stack = [(tree.root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            tout[node] = t
            continue
        tin[node] = t
        t += 1
        stack.append((node, True))
        stack.extend((k, False) for k in reversed(tree.children[node]))
    return tin, tout


def water_fill(tree: MarkovTree, lam: float, mu: float, ordering) -> FluidEquilibrium:
    """Fill capacity down ``ordering``, accounting for downstream demand
    reduction, and return the resulting fluid equilibrium."""
    check_rates(lam, mu)
    tree.require_valid()
    o = _as_ordering(tree, ordering)
    pi = pass_prob(tree)
    tin, tout = _euler(tree)

    top: list[int] = []
    mass = 0.0
    m = 0
    for s in o.order.tolist():
        covered = any(tin[t] <= tin[s] < tout[t] for t in top)
        if covered:
            m += 1
            continue
        displaced = [t for t in top if tin[s] <= tin[t] < tout[s]]
        new_mass = mass + lam * (pi[s] - sum(pi[t] for t in displaced))
        if new_mass > mu + MASS_TOL:
            break
        top = [t for t in top if t not in displaced] + [s]
        mass = new_mass
        m += 1

    top_arr = np.array(sorted(top), dtype=np.int64)
    in_top = np.zeros(tree.n, dtype=bool)
    in_top[top_arr] = True
    covered = np.zeros(tree.n, dtype=bool)
    for t in top:
        covered |= (tin >= tin[t]) & (tin < tout[t])

    partial = None
    kappa = None
    nu_p = 0.0
    below = np.zeros(tree.n, dtype=bool)
    if m < tree.n and mass < mu - MASS_TOL:
        partial = int(o.order[m])
        below = (tin >= tin[partial]) & (tin < tout[partial])
        kappa = 1.0 - pi[in_top & below].sum() / pi[partial]
        nu_p = (mu - mass) / kappa

    base = lam * pi
    reduced = base - (nu_p * pi / pi[partial] if partial is not None else 0.0)
    q = base.copy()
    nu = np.zeros(tree.n)
    cls = np.full(tree.n, StateType.UnReduced, dtype=np.int64)

    blocked_partial = in_top & below
    cls[in_top] = StateType.FullyBlocked
    nu[in_top] = base[in_top]
    cls[blocked_partial] = StateType.PartiallyBlocked
    q[blocked_partial] = nu[blocked_partial] = reduced[blocked_partial]
    empty = covered & ~in_top
    cls[empty] = StateType.Empty
    q[empty] = 0.0
    if partial is not None:
        pr = below & ~covered
        pr[partial] = False
        cls[pr] = StateType.PartiallyReduced
        q[pr] = reduced[pr]
        cls[partial] = StateType.PartiallyServed
        nu[partial] = nu_p
    for arr in (q, nu, cls):
        arr.setflags(write=False)
    return FluidEquilibrium(float(lam), float(mu), o, q, nu, m, partial,
                            None if kappa is None else float(kappa), cls)


def fluid_cost(tree: MarkovTree, eq: FluidEquilibrium) -> float:
    """Holding cost ``sum_i c(i) (q_i - nu_i)`` of a feasible equilibrium."""
    rep = check_feasibility(tree, eq.lam, eq.mu, eq)
    if not rep.ok:
        raise ValueError("infeasible equilibrium: " + "; ".join(rep.problems))
    return float(np.dot(tree.cost, eq.q - eq.nu))


def queue_from_service(tree: MarkovTree, lam: float, nu) -> np.ndarray:
    """Fluid queue implied by a service vector: q_root = lam and
    q_i = (q_pa - nu_pa) P(pa, i)."""
    nu = np.asarray(nu, dtype=float)
    q = np.empty(tree.n)
    for d, lvl in enumerate(tree.by_level):
        if d == 0:
            q[lvl] = lam
        else:
            pa = tree.parent[lvl]
            q[lvl] = (q[pa] - nu[pa]) * tree.prob[lvl]
    return q


def _service_problems(tree, lam, mu, nu, q) -> list[str]:
    out = []
    if np.any(nu < -CHECK_TOL):
        out.append(f"negative service at states {np.flatnonzero(nu < -CHECK_TOL).tolist()}")
    over = nu > q + CHECK_TOL
    if np.any(over):
        out.append(f"service exceeds queue at states {np.flatnonzero(over).tolist()}")
    if nu.sum() > mu + CHECK_TOL:
        out.append(f"capacity exceeded: sum nu = {nu.sum():.12g} > {mu}")
    return out


def check_feasibility(tree: MarkovTree, lam: float, mu: float,
                      eq: FluidEquilibrium) -> ValidationReport:
    """Check every equilibrium invariant; the classification is re-derived
    from set operations on the ordering rather than trusted."""
    tree.require_valid()
    q = np.asarray(eq.q, dtype=float)
    nu = np.asarray(eq.nu, dtype=float)
    problems = []
    if q.shape != (tree.n,) or nu.shape != (tree.n,):
        return ValidationReport(("shape mismatch",))
    expected_q = queue_from_service(tree, lam, nu)
    bad = np.flatnonzero(np.abs(expected_q - q) > CHECK_TOL)
    if bad.size:
        problems.append(f"queue recursion violated at states {bad.tolist()}")
    problems += _service_problems(tree, lam, mu, nu, q)
    if eq.partial is not None and abs(nu.sum() - mu) > CHECK_TOL:
        problems.append("capacity slack with partial state")

    o = eq.ordering.order.tolist()
    pi = pass_prob(tree)
    prefix = o[:eq.m]
    T = top_set(tree, prefix)
    sub_m = subtree(tree, prefix)
    rho = eq.partial
    sub_r = subtree(tree, [rho]) if rho is not None else frozenset()
    if lam * sum(pi[i] for i in T) > mu + MASS_TOL:
        problems.append("cutoff position exceeds capacity")
    if eq.m < tree.n and lam * sum(pi[i] for i in top_set(tree, o[:eq.m + 1])) <= mu + MASS_TOL:
        problems.append("cutoff position is not maximal")
    expect = {}
    for i in range(tree.n):
        if i == rho:
            expect[i] = StateType.PartiallyServed
        elif i in T:
            expect[i] = StateType.PartiallyBlocked if i in sub_r else StateType.FullyBlocked
        elif i in sub_m:
            expect[i] = StateType.Empty
        elif i in sub_r:
            expect[i] = StateType.PartiallyReduced
        else:
            expect[i] = StateType.UnReduced
    wrong = [i for i in range(tree.n) if int(eq.classification[i]) != expect[i]]
    if wrong:
        problems.append(f"classification mismatch at states {wrong}")
    return ValidationReport(tuple(problems))


def check_optimality(tree: MarkovTree, lam: float, mu: float, nu, gamma_star: float,
                     value_table=None) -> ValidationReport:
    """Complementary slackness for the service-only fluid LP.

    C-1: full capacity use when the price is positive.  C-2: states whose
    index beats the price are fully served.  C-3: states below the price get
    no service.
    """
    check_rates(lam, mu)
    nu = np.asarray(nu, dtype=float)
    q = queue_from_service(tree, lam, nu)
    infeasible = _service_problems(tree, lam, mu, nu, q)
    if infeasible:
        raise ValueError("infeasible service vector: " + "; ".join(infeasible))
    vt = value_table if value_table is not None else value_functions(tree, gamma_star)
    idx = vt.index
    problems = []
    if gamma_star > CHECK_TOL and abs(nu.sum() - mu) > CHECK_TOL:
        problems.append(f"C-1: sum nu = {nu.sum():.12g} < mu = {mu} with positive price")
    hi = np.flatnonzero((idx > gamma_star + CHECK_TOL) & (np.abs(q - nu) > CHECK_TOL))
    if hi.size:
        problems.append(f"C-2: states {hi.tolist()} have index above the price but are not fully served")
    lo = np.flatnonzero((idx < gamma_star - CHECK_TOL) & (nu > CHECK_TOL))
    if lo.size:
        problems.append(f"C-3: states {lo.tolist()} have index below the price but receive service")
    return ValidationReport(tuple(problems))


@dataclass(frozen=True, eq=False)
class FluidSolution:
    gamma_star: float
    dual_objective: float
    index: np.ndarray
    equilibrium: FluidEquilibrium
    cost: float
    segment_end: float | None = None  # right end of a flat minimum of the dual


def solve(tree: MarkovTree, lam: float, mu: float) -> FluidSolution:
    """gamma*, the OaRC ordering and its water-filled equilibrium."""
    gs = optimal_gamma(tree, lam, mu)
    vt = value_functions(tree, gs.gamma)
    idx, order = oarc_indices(tree, gs.gamma)
    eq = water_fill(tree, lam, mu, order)
    rep = check_optimality(tree, lam, mu, eq.nu, gs.gamma, vt)
    if not rep.ok:
        raise RuntimeError("OaRC equilibrium failed the optimality check: "
                           + "; ".join(rep.problems))
    r = tree.root
    dual = mu * gs.gamma + lam * (future_cost(tree)[r] - vt.V[r])
    return FluidSolution(gs.gamma, float(dual), idx, eq, fluid_cost(tree, eq), gs.segment_end)


def c_star(tree: MarkovTree, lam: float, mu: float) -> float:
    """Optimal fluid cost; N * C* lower-bounds any policy's long-run average."""
    return solve(tree, lam, mu).cost


def lp_oracle(tree: MarkovTree, lam: float, mu: float, max_states: int = 8) -> float:
    """Minimum water-filled cost over all priority orderings.

    An equilibrium depends on the ordering only through the filled prefix set
    and the next state, so it suffices to try, for every prefix set within
    capacity, each possible next state.  This covers every one of the n!
    orderings' equilibria with at most 2^n * n water fills.
    """
    if tree.n > max_states:
        raise ValueError(f"tree too large for the exhaustive oracle ({tree.n} > {max_states})")
    check_rates(lam, mu)
    pi = pass_prob(tree)
    states = list(range(tree.n))
    best = np.inf
    for r in range(tree.n + 1):
        for X in itertools.combinations(states, r):
            if lam * sum(pi[i] for i in top_set(tree, X)) > mu + MASS_TOL:
                continue
            rest = [s for s in states if s not in X]
            for k in range(max(len(rest), 1)):
                order = list(X) + rest[k:k + 1] + rest[:k] + rest[k + 1:]
                best = min(best, fluid_cost(tree, water_fill(tree, lam, mu, order)))
    return float(best)
