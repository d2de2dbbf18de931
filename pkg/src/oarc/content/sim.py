"""Review-queue simulation over a test set of view trajectories."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..simulator import ARRIVALS, CAPACITY, stream
from .data import TrajectoryDataset, features
from .indices import ContentKind, index_table

# 0.01, 0.015, ..., 0.205
RATIO_GRID = tuple(round(0.01 + 0.005 * k, 6) for k in range(40))


@dataclass(frozen=True)
class ContentSimConfig:
    N: int = 1000
    lam: float = 0.1
    ratio: float = 0.05
    T: int = 500
    replications: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.T < 1 or self.replications < 1:
            raise ValueError("N, T and replications must be positive")
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if self.ratio < 0 or self.mu > 1:
            raise ValueError("review ratio must be nonnegative with lambda * ratio <= 1")

    @property
    def mu(self) -> float:
        return self.lam * self.ratio


METRIC_FIELDS = ("vio_views", "pvio_views", "iv", "iv_actual", "reviews", "censored",
                 "total_violating_views")


@dataclass
class ContentMetrics:
    """Per-replication totals over the horizon and their means.

    ``vio_views`` counts views of violating content accrued before review
    (or the horizon end); ``censored`` holds the views such content would
    still get after the horizon, so ``iv_actual + vio_views + censored``
    equals ``total_violating_views``.
    """

    kind: str
    ratio: float
    per_rep: dict = field(default_factory=dict)

    def mean(self, name: str) -> float:
        return float(np.mean(self.per_rep[name]))

    def se(self, name: str) -> float:
        x = np.asarray(self.per_rep[name], dtype=float)
        return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")

    def __getattr__(self, name):
        if name in METRIC_FIELDS and "per_rep" in self.__dict__:
            return self.mean(name)
        raise AttributeError(name)


def _top_k(idx: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the k largest entries; exact ties go to lower positions."""
    n = len(idx)
    if k >= n:
        return np.ones(n, dtype=bool)
    mask = np.zeros(n, dtype=bool)
    if k <= 0:
        return mask
    v = np.partition(idx, n - k)[n - k]
    mask = idx > v
    need = k - int(mask.sum())
    mask[np.flatnonzero(idx == v)[:need]] = True
    return mask


def _one_rep(cfg: ContentSimConfig, test: TrajectoryDataset, table: np.ndarray,
             remaining_pred: np.ndarray | None, rep: int) -> dict:
    T, L = cfg.T, test.L
    cap = stream(cfg.seed, rep, CAPACITY).binomial(cfg.N, cfg.mu, size=T)
    arr_rng = stream(cfg.seed, rep, ARRIVALS)
    n_arr = arr_rng.binomial(cfg.N, cfg.lam, size=T)
    recs_all = arr_rng.integers(0, test.n, size=int(n_arr.sum()))
    starts = np.concatenate([[0], np.cumsum(n_arr)])
    views = test.views
    vio = test.violating.astype(float)
    pv = test.pviolating
    tail = np.cumsum(views[:, ::-1], axis=1)[:, ::-1]  # views from age d on
    out = dict.fromkeys(METRIC_FIELDS, 0.0)

    rec = np.zeros(0, dtype=np.int64)
    age = np.zeros(0, dtype=np.int64)
    for t in range(T):
        if len(rec):
            served = _top_k(table[rec, age - 1], int(cap[t]))
            sr, sa = rec[served], age[served]
            out["reviews"] += len(sr)
            out["iv_actual"] += float(np.dot(vio[sr], tail[sr, sa - 1]))
            if remaining_pred is not None:
                out["iv"] += float(np.dot(vio[sr], remaining_pred[sr, sa - 1]))
            keep = ~served
            rec, age = rec[keep], age[keep]
            v = views[rec, age - 1]
            out["vio_views"] += float(np.dot(vio[rec], v))
            out["pvio_views"] += float(np.dot(pv[rec], v))
            age = age + 1
            alive = age <= L
            rec, age = rec[alive], age[alive]
        new = recs_all[starts[t]:starts[t + 1]]
        rec = np.concatenate([rec, new])
        age = np.concatenate([age, np.ones(len(new), dtype=np.int64)])
    out["censored"] = float(np.dot(vio[rec], tail[rec, age - 1]))
    out["total_violating_views"] = float(np.dot(vio[recs_all], tail[recs_all, 0]))
    if remaining_pred is None:
        out["iv"] = float("nan")
    return out


def prepare_tables(test: TrajectoryDataset, kinds, models: dict | None = None) -> dict:
    tables = {ContentKind(k): index_table(k, test, models) for k in kinds}
    pred = None
    if models and "uncapped" in models:
        pred = models["uncapped"].predict(features(test).reshape(-1, 6)).reshape(test.views.shape)
    tables["_remaining"] = pred
    return tables


def content_sim(config: ContentSimConfig, test: TrajectoryDataset, kind,
                models: dict | None = None, tables: dict | None = None) -> ContentMetrics:
    """Simulate review of content arriving i.i.d. (with replacement) from
    ``test``.  Capacity and arrivals depend only on (seed, replication), so
    different policies see the same reviewers and the same content."""
    kind = ContentKind(kind)
    if tables is None or kind not in tables:
        tables = prepare_tables(test, [kind], models)
    reps = [_one_rep(config, test, tables[kind], tables.get("_remaining"), r)
            for r in range(config.replications)]
    per = {k: np.array([r[k] for r in reps]) for k in METRIC_FIELDS}
    return ContentMetrics(kind.value, config.ratio, per)


def _sweep_job(args):
    cfg, test, kind, tables = args
    return content_sim(cfg, test, kind, tables=tables)


def sweep(test: TrajectoryDataset, kinds, ratios=RATIO_GRID, base: ContentSimConfig | None = None,
          models: dict | None = None, workers: int = 1) -> dict:
    """Run every (policy, ratio) pair; returns ``{kind: {ratio: ContentMetrics}}``."""
    base = base or ContentSimConfig()
    kinds = [ContentKind(k) for k in kinds]
    tables = prepare_tables(test, kinds, models)
    jobs = [(ContentSimConfig(base.N, base.lam, r, base.T, base.replications, base.seed), test, k,
             {k: tables[k], "_remaining": tables["_remaining"]})
            for k in kinds for r in ratios]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    out: dict = {k.value: {} for k in kinds}
    for (cfg, _, k, _), res in zip(jobs, results):
        out[k.value][cfg.ratio] = res
    return out


def vio_table(result: dict, metric: str = "vio_views") -> dict:
    return {k: {r: m.mean(metric) for r, m in v.items()} for k, v in result.items()}


def reviewer_hour_savings(vio: dict, target: str = "oarch") -> dict:
    """For each baseline A and ratio r, ``1 - r'/r`` where r' is the smallest
    grid ratio at which ``target`` does at least as well as A does at r;
    None when no grid ratio qualifies.

    ``vio`` maps policy -> {ratio: vioViews} (plain numbers).
    """
    if target not in vio:
        raise ValueError(f"sweep has no {target!r} results")
    grid = sorted(vio[target])
    out = {}
    for kind, row in vio.items():
        if sorted(row) != grid:
            raise ValueError(f"ratio grid of {kind!r} differs from {target!r}")
        out[kind] = {}
        for r in grid:
            ok = [rp for rp in grid if vio[target][rp] <= row[r]]
            out[kind][r] = None if not ok else 1.0 - min(ok) / r
    return out


@dataclass(frozen=True)
class GammaTuning:
    gamma: float
    candidates: tuple
    scores: tuple  # mean pVioViews on the validation half, per candidate


def tune_gamma(train: TrajectoryDataset, candidates=None, ratios=(0.05, 0.1, 0.15),
               base: ContentSimConfig | None = None, seed: int = 0, **fit) -> GammaTuning:
    """Pick the capacity price for the hindsight index on held-out training data.

    Half of ``train`` fits one capped regressor per candidate, the other half
    serves as arrivals for the simulation, and the candidate with the lowest
    mean pVioViews over ``ratios`` wins.  The default candidates are a
    geometric grid from the median to the 99.9th percentile of total views.
    """
    from .data import gamma_percentile, split
    from .regressor import train_regressor

    fit_half, val_half = split(train, seed)
    if candidates is None:
        lo = max(gamma_percentile(train, 50), 1.0)
        hi = max(gamma_percentile(train, 99.9), lo)
        candidates = tuple(np.unique(np.round(np.geomspace(lo, hi, 7))).tolist())
    base = base or ContentSimConfig(N=200, lam=0.1, T=200, replications=3, seed=seed)
    scores = []
    for g in candidates:
        model = train_regressor(fit_half, g, **fit)
        tables = prepare_tables(val_half, [ContentKind.OARCH], {"capped": model})
        score = np.mean([content_sim(ContentSimConfig(base.N, base.lam, r, base.T,
                                                      base.replications, base.seed),
                                     val_half, ContentKind.OARCH, tables=tables).pvio_views
                         for r in ratios])
        scores.append(float(score))
    best = int(np.argmin(scores))
    return GammaTuning(float(candidates[best]), tuple(candidates), tuple(scores))
