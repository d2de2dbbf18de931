"""Markovian ski-rental: per-job buy/rent values, the dual bound and the
capacity price that turns them into a scheduling index."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tree import MarkovTree, future_cost

VALUE_TOL = 1e-9


def check_rates(lam: float, mu: float) -> None:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"arrival rate must lie in (0, 1), got {lam}")
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"service rate must lie in [0, 1], got {mu}")


@dataclass(frozen=True)
class ValueTable:
    gamma: float
    V: np.ndarray
    Vf: np.ndarray
    beta: np.ndarray
    index: np.ndarray


def value_functions(tree: MarkovTree, gamma: float) -> ValueTable:
    """Solve ``V(i) = min(gamma, c(i) + sum_k P(i,k) V(k))`` bottom-up."""
    if not gamma >= 0:
        raise ValueError(f"capacity price must be nonnegative, got {gamma}")
    tree.require_valid()
    c = tree.cost
    V = np.empty(tree.n)
    Vf = np.zeros(tree.n)
    for d in range(tree.L - 1, -1, -1):
        lvl = tree.by_level[d]
        V[lvl] = np.minimum(gamma, c[lvl] + Vf[lvl])
        if d:
            np.add.at(Vf, tree.parent[lvl], tree.prob[lvl] * V[lvl])
    index = c + Vf
    beta = np.maximum(0.0, index - gamma)
    return ValueTable(float(gamma), V, Vf, beta, index)


def _root_value_slopes(tree: MarkovTree, gamma: float) -> tuple[float, float, float]:
    """V(gamma, root) with its right and left derivatives in gamma.

    At a kink the right derivative follows the rent branch and the left
    derivative the buy branch.
    """
    c = tree.cost
    V = np.empty(tree.n)
    Vf = np.zeros(tree.n)
    dR = np.empty(tree.n)
    dL = np.empty(tree.n)
    dRf = np.zeros(tree.n)
    dLf = np.zeros(tree.n)
    for d in range(tree.L - 1, -1, -1):
        lvl = tree.by_level[d]
        rent = c[lvl] + Vf[lvl]
        V[lvl] = np.minimum(gamma, rent)
        dR[lvl] = np.where(gamma < rent, 1.0, dRf[lvl])
        dL[lvl] = np.where(gamma <= rent, 1.0, dLf[lvl])
        if d:
            pa, p = tree.parent[lvl], tree.prob[lvl]
            np.add.at(Vf, pa, p * V[lvl])
            np.add.at(dRf, pa, p * dR[lvl])
            np.add.at(dLf, pa, p * dL[lvl])
    r = tree.root
    return float(V[r]), float(dR[r]), float(dL[r])


def dual_value(tree: MarkovTree, lam: float, mu: float, gamma: float) -> float:
    """Best dual bound for a fixed capacity price: mu*gamma + lam*(c^f(r) - V(r))."""
    check_rates(lam, mu)
    vt = value_functions(tree, gamma)
    r = tree.root
    return mu * gamma + lam * (future_cost(tree)[r] - vt.V[r])


class GammaSolution(NamedTuple):
    gamma: float
    objective: float
    segment_end: float  # right end of the flat minimum; equals gamma when unique


def optimal_gamma(tree: MarkovTree, lam: float, mu: float, tol: float = 1e-12) -> GammaSolution:
    """Minimise ``g(gamma) = mu*gamma - lam*V(gamma, root)`` over gamma >= 0.

    ``g`` is convex and piecewise linear, so we bisect on the sign of its right
    derivative and then snap to the kink where the two adjacent linear pieces
    meet.  Returns the left end of the minimising segment.
    """
    check_rates(lam, mu)
    tree.require_valid()
    hi_bound = float(future_cost(tree).max())

    def slope(gamma):
        _, right, _ = _root_value_slopes(tree, gamma)
        return mu - lam * right

    def g(gamma):
        return mu * gamma - lam * _root_value_slopes(tree, gamma)[0]

    def first_where(pred, lo, hi):
        # smallest gamma in (lo, hi] with pred true; pred is monotone, pred(hi) true
        eps = max(tol, 4 * np.finfo(float).eps * hi)
        for _ in range(400):
            if hi - lo <= eps:
                break
            mid = 0.5 * (lo + hi)
            if pred(mid):
                hi = mid
            else:
                lo = mid
        return _snap_kink(tree, lo, hi, pred)

    if slope(0.0) >= 0:
        gstar = 0.0
    else:
        gstar = first_where(lambda x: slope(x) >= 0, 0.0, hi_bound)
    end = gstar
    if abs(slope(gstar)) <= VALUE_TOL and slope(hi_bound) > VALUE_TOL:
        end = first_where(lambda x: slope(x) > VALUE_TOL, gstar, hi_bound)
    elif abs(slope(gstar)) <= VALUE_TOL:
        end = float("inf")
    return GammaSolution(gstar, g(gstar), end)


def _snap_kink(tree, lo, hi, pred):
    """Intersect the linear pieces through ``lo`` and ``hi``; keep it if valid."""
    v_lo, s_lo, _ = _root_value_slopes(tree, lo)
    v_hi, s_hi, _ = _root_value_slopes(tree, hi)
    if s_lo != s_hi:
        x = (v_hi - v_lo + s_lo * lo - s_hi * hi) / (s_lo - s_hi)
        if lo <= x <= hi and pred(x):
            return float(x)
    return float(hi)


def oarc_indices(tree: MarkovTree, gamma_star: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-state index ``c + V^f(gamma_star)`` and the induced priority order.

    The order sorts by index descending and breaks ties by ascending state id.
    """
    index = value_functions(tree, gamma_star).index
    order = priority_order(index)
    return index, order


def priority_order(index: np.ndarray) -> np.ndarray:
    index = np.asarray(index, dtype=float)
    return np.lexsort((np.arange(len(index)), -index))
