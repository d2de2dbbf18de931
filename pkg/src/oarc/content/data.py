"""View-trajectory datasets: synthetic ads (bandit-promoted) and UGC
(Hawkes-excited) generators, CSV ingestion, splitting and perturbation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..tree import MarkovTree

N_FEATURES = 6
FEATURE_NAMES = ("pviolating", "age", "cumviews", "lag1", "lag2", "lag3")


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """One row per content: predicted violation probability, true label and
    per-period views ``views[j, d-1]`` for ages ``d = 1..L``."""

    ids: np.ndarray
    pviolating: np.ndarray
    violating: np.ndarray
    views: np.ndarray

    def __post_init__(self):
        pv = np.asarray(self.pviolating, dtype=float)
        vio = np.asarray(self.violating, dtype=np.int8)
        views = np.asarray(self.views)
        if views.ndim != 2:
            raise ValueError("views must be a 2-D array (records x periods)")
        n = views.shape[0]
        if pv.shape != (n,) or vio.shape != (n,) or len(self.ids) != n:
            raise ValueError("per-record arrays disagree in length")
        if np.any(~np.isfinite(pv)) or np.any((pv < 0) | (pv > 1)):
            raise ValueError("pviolating must lie in [0, 1]")
        if np.any((vio != 0) & (vio != 1)):
            raise ValueError("violating must be 0 or 1")
        if np.any(views < 0):
            raise ValueError("views must be nonnegative")
        object.__setattr__(self, "ids", np.asarray(self.ids).astype(str))
        object.__setattr__(self, "pviolating", pv)
        object.__setattr__(self, "violating", vio)
        object.__setattr__(self, "views", views.astype(np.int64))

    def __len__(self):
        return self.views.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def L(self) -> int:
        return self.views.shape[1]

    @property
    def total_views(self) -> np.ndarray:
        return self.views.sum(axis=1)

    def subset(self, idx) -> "TrajectoryDataset":
        idx = np.asarray(idx)
        return TrajectoryDataset(self.ids[idx], self.pviolating[idx], self.violating[idx],
                                 self.views[idx])

    def with_pviolating(self, pv) -> "TrajectoryDataset":
        return TrajectoryDataset(self.ids, pv, self.violating, self.views)


def pareto(rng, shape, scale, size, kind="lomax"):
    """Pareto draws.  ``lomax`` starts at 0 (numpy's convention, times
    ``scale``); ``classical`` starts at ``scale``."""
    if kind == "lomax":
        return scale * rng.pareto(shape, size)
    if kind == "classical":
        return scale * (1.0 + rng.pareto(shape, size))
    raise ValueError(f"unknown Pareto kind {kind!r}")


def ucb1_pulls(rewards: np.ndarray, periods: int, rng: np.random.Generator) -> np.ndarray:
    """Run UCB1 independently for each row of arm means; return the arm pulled
    in every period, shape (rows, periods).

    Each arm is pulled once first; afterwards the arm with the largest
    ``mean + sqrt(2 ln t / n)`` wins, ties to the lowest arm index.
    """
    rows, K = rewards.shape
    counts = np.zeros((rows, K))
    sums = np.zeros((rows, K))
    pulls = np.empty((rows, periods), dtype=np.int64)
    r_idx = np.arange(rows)
    for d in range(periods):
        if d < K:
            arm = np.full(rows, d)
        else:
            ucb = sums / counts + np.sqrt(2.0 * math.log(d) / counts)
            arm = np.argmax(ucb, axis=1)
        pulls[:, d] = arm
        reward = rng.random(rows) < rewards[r_idx, arm]
        counts[r_idx, arm] += 1
        sums[r_idx, arm] += reward
    return pulls


def gen_ads(campaigns: int, ads_per_campaign: int = 5, L: int = 100, seed: int = 0,
            budget_shape: float = 0.8, budget_scale: float = 1.0,
            pareto_kind: str = "lomax") -> TrajectoryDataset:
    """Ads whose views come from a per-campaign UCB1 promotion loop.

    Every campaign has one violation probability (Beta(1,3)) shared by its
    ads and a Pareto per-period budget X_u; the promoted ad gets
    Poisson(X_u) views, the others none.
    """
    if campaigns < 1 or ads_per_campaign < 1 or L < 1:
        raise ValueError("campaigns, ads_per_campaign and L must be positive")
    rng = np.random.default_rng(seed)
    C, K = campaigns, ads_per_campaign
    pv_c = rng.beta(1, 3, size=C)
    budget = pareto(rng, budget_shape, budget_scale, C, pareto_kind)
    reward = rng.beta(1, 5, size=(C, K))
    pv = np.repeat(pv_c, K)
    violating = (rng.random(C * K) < pv).astype(np.int8)
    pulls = ucb1_pulls(reward, L, rng)
    views = np.zeros((C, K, L), dtype=np.int64)
    promoted = rng.poisson(np.repeat(budget[:, None], L, axis=1))
    c_idx, d_idx = np.meshgrid(np.arange(C), np.arange(L), indexing="ij")
    views[c_idx, pulls, d_idx] = promoted
    ids = [f"ad{u}_{k}" for u in range(C) for k in range(K)]
    return TrajectoryDataset(np.array(ids), pv, violating, views.reshape(C * K, L))


def hawkes_mean(past_views: np.ndarray, alpha: float, multipliers: np.ndarray | None = None,
                cap: float = 5000.0) -> float:
    """Poisson mean of the next period's views given views in periods 1..d-1.

    ``multipliers`` holds the excitation draws Y for each past period (zeros
    when omitted).
    """
    past = np.asarray(past_views, dtype=float)
    d = len(past) + 1
    lags = d - np.arange(1, d)
    y = np.zeros(len(past)) if multipliers is None else np.asarray(multipliers, dtype=float)
    return float(min(cap, np.sum((1.0 + y) * past * np.exp(-alpha * lags))))


def gen_ugc(n: int, L: int = 200, seed: int = 0, alpha_range=(0.8, 2.0),
            excitation: bool = True, excitation_shape: float = 2.0,
            cap: float = 5000.0, pareto_kind: str = "lomax") -> TrajectoryDataset:
    """User-generated content with self-exciting (Hawkes) view trajectories.

    One view in period 1; later periods are Poisson with mean
    ``min(cap, sum_{d'<d} (1 + Y) view(d') exp(-alpha (d - d')))`` where Y is a
    fresh Pareto draw (scale 4/alpha) for every (d', d) pair.
    """
    if n < 1 or L < 1:
        raise ValueError("n and L must be positive")
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(alpha_range[0], alpha_range[1], size=n)
    views = np.zeros((n, L), dtype=np.int64)
    views[:, 0] = 1
    scale = 4.0 / alpha
    for d in range(2, L + 1):
        past = views[:, : d - 1].astype(float)
        lags = d - np.arange(1, d)
        kernel = np.exp(-alpha[:, None] * lags[None, :])
        if excitation:
            Y = scale[:, None] * pareto(rng, excitation_shape, 1.0, past.shape, pareto_kind)
        else:
            Y = 0.0
        mean = np.minimum(cap, np.sum((1.0 + Y) * past * kernel, axis=1))
        views[:, d - 1] = rng.poisson(mean)
    pv = rng.beta(alpha + 4.0 / alpha, 6.0)
    violating = (rng.random(n) < pv).astype(np.int8)
    return TrajectoryDataset(np.array([f"ugc{j}" for j in range(n)]), pv, violating, views)


def split(dataset: TrajectoryDataset, seed: int = 0):
    """Random, disjoint halves (train gets the extra record when n is odd)."""
    perm = np.random.default_rng(seed).permutation(dataset.n)
    half = (dataset.n + 1) // 2
    return dataset.subset(np.sort(perm[:half])), dataset.subset(np.sort(perm[half:]))


def perturb_pviolating(dataset: TrajectoryDataset, epsilon: float, seed: int = 0):
    """Add U[-eps, eps] calibration error to pviolating, clipped to [0, 1].

    Errors are ``eps * u`` with ``u ~ U[-1, 1]`` drawn from ``seed`` alone, so
    the same content moves in the same direction for every eps.  Labels are
    untouched.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0:
        return dataset
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, size=dataset.n)
    return dataset.with_pviolating(np.clip(dataset.pviolating + epsilon * u, 0.0, 1.0))


def gamma_percentile(dataset: TrajectoryDataset, p: float) -> float:
    """Nearest-rank p-th percentile of per-content total views."""
    if not 0 < p <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    if dataset.n == 0:
        raise ValueError("empty dataset")
    totals = np.sort(dataset.total_views)
    rank = max(1, math.ceil(p / 100.0 * len(totals)))
    return float(totals[rank - 1])


# --- features -------------------------------------------------------------

def features(dataset: TrajectoryDataset) -> np.ndarray:
    """State features at every age, shape (n, L, 6).

    At age d: pviolating, d, views before d, and views at d-1, d-2, d-3
    (zero before the first period).
    """
    n, L = dataset.views.shape
    v = dataset.views.astype(float)
    padded = np.concatenate([np.zeros((n, 3)), v], axis=1)
    out = np.empty((n, L, N_FEATURES))
    out[:, :, 0] = dataset.pviolating[:, None]
    out[:, :, 1] = np.arange(1, L + 1)[None, :]
    out[:, :, 2] = np.cumsum(padded[:, 2:-1], axis=1)
    for k in (1, 2, 3):
        out[:, :, 2 + k] = padded[:, 3 - k: 3 - k + L]
    return out


def future_views(dataset: TrajectoryDataset) -> np.ndarray:
    """Views strictly after age d, shape (n, L)."""
    v = dataset.views
    tail = np.cumsum(v[:, ::-1], axis=1)[:, ::-1]
    return np.concatenate([tail[:, 1:], np.zeros((v.shape[0], 1), dtype=v.dtype)], axis=1)


def last_views(dataset: TrajectoryDataset) -> np.ndarray:
    """view(d-1) at every age d with view(0) = 0, shape (n, L)."""
    v = dataset.views
    return np.concatenate([np.zeros((v.shape[0], 1), dtype=v.dtype), v[:, :-1]], axis=1)


# --- CSV ------------------------------------------------------------------

def to_csv(dataset: TrajectoryDataset, path=None, manifest: str | None = None) -> str:
    buf = io.StringIO()
    if manifest:
        buf.write(f"# manifest: {manifest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["content_id", "pviolating", "violating"] + [f"v{d}" for d in range(1, dataset.L + 1)])
    for j in range(dataset.n):
        w.writerow([dataset.ids[j], repr(float(dataset.pviolating[j])), int(dataset.violating[j])]
                   + dataset.views[j].tolist())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_dataset(path, zero_fill: bool = False) -> TrajectoryDataset:
    """Read ``content_id,pviolating,violating,v1..vL``.

    Short rows are padded with zeros only when ``zero_fill`` is set (traces
    observed for fewer days than the longest one).  Lines starting with '#'
    are skipped.
    """
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise ValueError(f"{path}: no header")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["content_id", "pviolating", "violating"]:
        raise ValueError(f"{path}: header must start with content_id,pviolating,violating")
    L = len(header) - 3
    ids, pv, vio, views = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < 3:
            raise ValueError(f"{path}:{lineno}: malformed row")
        vals = row[3:]
        if len(vals) > L:
            raise ValueError(f"{path}:{lineno}: more views than header columns")
        if len(vals) < L:
            if not zero_fill:
                raise ValueError(f"{path}:{lineno}: {len(vals)} views, expected {L} (use zero fill)")
            vals = vals + ["0"] * (L - len(vals))
        try:
            p = float(row[1])
            y = int(row[2])
            v = [int(float(x)) if x.strip() else 0 for x in vals]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from None
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{path}:{lineno}: pviolating {p} outside [0, 1]")
        ids.append(row[0])
        pv.append(p)
        vio.append(y)
        views.append(v)
    return TrajectoryDataset(np.array(ids, dtype=str), np.array(pv), np.array(vio),
                             np.array(views, dtype=np.int64).reshape(len(ids), L))


def from_daily_views(traces: dict, seed: int = 0, L: int | None = None) -> TrajectoryDataset:
    """Turn ``{id: [daily views...]}`` traces into a dataset.

    Traces are zero-padded to the longest one (or cut at ``L``); pviolating is
    uniform on [0, 1] and labels are Bernoulli draws from it.
    """
    keys = list(traces)
    L = L or max(len(traces[k]) for k in keys)
    views = np.zeros((len(keys), L), dtype=np.int64)
    for j, k in enumerate(keys):
        v = np.asarray(traces[k][:L], dtype=np.int64)
        views[j, : len(v)] = v
    rng = np.random.default_rng(seed)
    pv = rng.uniform(0.0, 1.0, size=len(keys))
    vio = (rng.random(len(keys)) < pv).astype(np.int8)
    return TrajectoryDataset(np.array(keys, dtype=str), pv, vio, views)


# --- observed-history tree ------------------------------------------------

def history_tree(dataset: TrajectoryDataset, horizon: int | None = None,
                 entry_cost: float = 1e-9, cost_floor: float = 1e-9):
    """Empirical tree whose states are observed view histories.

    A state at depth d is the prefix ``(pviolating, v1..vd)``; its cost is
    ``pviolating * v_d`` (floored to stay positive) and transition
    probabilities are empirical frequencies.  A synthetic entry state sits
    above all depth-1 histories.  Returns the tree and the list of prefixes.
    """
    H = dataset.L if horizon is None else min(horizon, dataset.L)
    keys: dict[tuple, int] = {(): 0}
    parent, count, cost = [-1], [dataset.n], [entry_cost]
    for j in range(dataset.n):
        prefix: tuple = ()
        pv = float(dataset.pviolating[j])
        for d in range(H):
            nxt = (prefix or (pv,)) + (int(dataset.views[j, d]),)
            if nxt not in keys:
                keys[nxt] = len(parent)
                parent.append(keys[prefix])
                count.append(0)
                cost.append(max(cost_floor, pv * int(dataset.views[j, d])))
            count[keys[nxt]] += 1
            prefix = nxt
    count = np.array(count, dtype=float)
    parent_arr = np.array(parent)
    prob = np.ones(len(parent))
    prob[1:] = count[1:] / count[parent_arr[1:]]
    tree = MarkovTree(parent_arr, prob, np.array(cost))
    return tree, list(keys)
