"""Capped future-view regression: a histogram gradient-boosted tree ensemble,
a binned-lookup fallback, and the ``model.bin`` container."""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import TrajectoryDataset, features, future_views

MAX_BINS = 255


def quantile_edges(x: np.ndarray, max_bins: int = MAX_BINS) -> np.ndarray:
    """Right-closed bin edges: value v falls in bin ``searchsorted(edges, v)``."""
    uniq = np.unique(x)
    if len(uniq) <= max_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    qs = np.quantile(x, np.linspace(0, 1, max_bins + 1)[1:-1], method="linear")
    return np.unique(qs)


def bin_features(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.uint8)
    for f, e in enumerate(edges):
        out[:, f] = np.searchsorted(e, X[:, f], side="left")
    return out


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray  # go left when bin <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_binned(self, Xb: np.ndarray) -> np.ndarray:
        node = np.zeros(len(Xb), dtype=np.int64)
        rows = np.arange(len(Xb))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            idx = rows[inner]
            nd = node[idx]
            go_left = Xb[idx, f[inner]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])


def _fit_tree(Xb, r, nbins, max_depth, min_leaf):
    """Least-squares regression tree grown level by level on binned data."""
    n, F = Xb.shape
    feature, threshold, left, right, value = [-1], [0], [-1], [-1], [r.mean()]
    node = np.zeros(n, dtype=np.int64)  # current leaf of each sample
    frontier = [0]
    for _ in range(max_depth):
        if not frontier:
            break
        fmap = np.full(len(feature), -1, dtype=np.int64)
        fmap[frontier] = np.arange(len(frontier))
        slot = fmap[node]
        live = slot >= 0
        s = slot[live]
        rl = r[live]
        k = len(frontier)
        G = np.bincount(s, weights=rl, minlength=k)
        C = np.bincount(s, minlength=k).astype(float)
        best_gain = np.zeros(k)
        best_f = np.full(k, -1)
        best_t = np.zeros(k, dtype=np.int64)
        base = G * G / np.maximum(C, 1)
        for f in range(F):
            key = s * nbins[f] + Xb[live, f]
            hg = np.bincount(key, weights=rl, minlength=k * nbins[f]).reshape(k, nbins[f])
            hc = np.bincount(key, minlength=k * nbins[f]).reshape(k, nbins[f]).astype(float)
            gl = np.cumsum(hg, axis=1)[:, :-1]
            cl = np.cumsum(hc, axis=1)[:, :-1]
            gr = G[:, None] - gl
            cr = C[:, None] - cl
            ok = (cl >= min_leaf) & (cr >= min_leaf)
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = np.where(ok, gl * gl / cl + gr * gr / cr - base[:, None], -np.inf)
            if gain.shape[1] == 0:
                continue
            t = np.argmax(gain, axis=1)
            g = gain[np.arange(k), t]
            better = g > best_gain + 1e-12
            best_gain[better] = g[better]
            best_f[better] = f
            best_t[better] = t[better]
        new_frontier = []
        split_nodes = {}
        for j, nd in enumerate(frontier):
            if best_f[j] < 0:
                continue
            lch, rch = len(feature), len(feature) + 1
            feature[nd], threshold[nd], left[nd], right[nd] = int(best_f[j]), int(best_t[j]), lch, rch
            feature += [-1, -1]
            threshold += [0, 0]
            left += [-1, -1]
            right += [-1, -1]
            value += [0.0, 0.0]
            split_nodes[nd] = (lch, rch)
            new_frontier += [lch, rch]
        if not split_nodes:
            break
        feat = np.array(feature)
        thr = np.array(threshold)
        lf = np.array(left)
        rt = np.array(right)
        moving = feat[node] >= 0
        idx = np.flatnonzero(moving)
        nd = node[idx]
        go_left = Xb[idx, feat[nd]] <= thr[nd]
        node[idx] = np.where(go_left, lf[nd], rt[nd])
        sums = np.bincount(node, weights=r, minlength=len(feature))
        cnts = np.bincount(node, minlength=len(feature))
        for c in new_frontier:
            value[c] = sums[c] / cnts[c]
        frontier = new_frontier
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                np.array(value, dtype=float))


@dataclass
class GradientBoostedTrees:
    """Least-squares boosting over histogram trees."""

    n_trees: int = 60
    max_depth: int = 8
    learning_rate: float = 0.1
    min_leaf: int = 20
    max_bins: int = MAX_BINS
    edges: list = field(default_factory=list)
    init: float = 0.0
    trees: list = field(default_factory=list)
    train_mse: float = float("nan")

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoostedTrees":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise ValueError("empty training data")
        self.edges = [quantile_edges(X[:, f], self.max_bins) for f in range(X.shape[1])]
        nbins = [len(e) + 1 for e in self.edges]
        Xb = bin_features(X, self.edges)
        self.init = float(y.mean())
        F = np.full(len(y), self.init)
        self.trees = []
        for _ in range(self.n_trees):
            tree = _fit_tree(Xb, y - F, nbins, self.max_depth, self.min_leaf)
            tree.value = tree.value * self.learning_rate
            self.trees.append(tree)
            F += tree.predict_binned(Xb)
        self.train_mse = float(np.mean((F - y) ** 2))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xb = bin_features(np.asarray(X, dtype=float), self.edges)
        out = np.full(len(Xb), self.init)
        for t in self.trees:
            out += t.predict_binned(Xb)
        return out

    # flat array form for the model container
    def to_arrays(self) -> tuple[dict, dict]:
        meta = dict(kind="gbt", n_trees=len(self.trees), max_depth=self.max_depth,
                    learning_rate=self.learning_rate, min_leaf=self.min_leaf,
                    max_bins=self.max_bins, init=self.init, train_mse=self.train_mse,
                    n_features=len(self.edges))
        arrays = {f"edges{f}": e for f, e in enumerate(self.edges)}
        sizes = np.array([len(t.feature) for t in self.trees], dtype=np.int64)
        arrays["tree_sizes"] = sizes
        for name in ("feature", "threshold", "left", "right", "value"):
            arrays[name] = (np.concatenate([getattr(t, name) for t in self.trees])
                            if self.trees else np.zeros(0))
        return meta, arrays

    @classmethod
    def from_arrays(cls, meta: dict, arrays: dict) -> "GradientBoostedTrees":
        m = cls(meta["n_trees"], meta["max_depth"], meta["learning_rate"], meta["min_leaf"],
                meta["max_bins"])
        m.init, m.train_mse = meta["init"], meta["train_mse"]
        m.edges = [arrays[f"edges{f}"] for f in range(meta["n_features"])]
        bounds = np.concatenate([[0], np.cumsum(arrays["tree_sizes"])])
        m.trees = [Tree(*(arrays[k][a:b].astype(np.int64 if k != "value" else float)
                          for k in ("feature", "threshold", "left", "right", "value")))
                   for a, b in zip(bounds[:-1], bounds[1:])]
        return m


@dataclass
class BinnedLookupRegressor:
    """Mean target per (age, cumulative-views bin, last-views bin) cell."""

    n_bins: int = 16
    edges: list = field(default_factory=list)
    table: dict = field(default_factory=dict)
    init: float = 0.0
    train_mse: float = float("nan")
    cols = (1, 2, 3)

    def _keys(self, X):
        b = [np.searchsorted(e, X[:, c], side="left") for c, e in zip(self.cols, self.edges)]
        return (b[0] * 1000 + b[1]) * 1000 + b[2]

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise ValueError("empty training data")
        self.edges = [quantile_edges(X[:, c], self.n_bins if c != 1 else 999) for c in self.cols]
        keys = self._keys(X)
        uk, inv = np.unique(keys, return_inverse=True)
        means = np.bincount(inv, weights=y) / np.bincount(inv)
        self.table = dict(zip(uk.tolist(), means.tolist()))
        self.init = float(y.mean())
        self.train_mse = float(np.mean((means[inv] - y) ** 2))
        return self

    def predict(self, X):
        keys = self._keys(np.asarray(X, dtype=float))
        return np.array([self.table.get(k, self.init) for k in keys.tolist()])

    def to_arrays(self):
        meta = dict(kind="lookup", n_bins=self.n_bins, init=self.init, train_mse=self.train_mse)
        arrays = {f"edges{i}": e for i, e in enumerate(self.edges)}
        arrays["keys"] = np.array(list(self.table), dtype=np.int64)
        arrays["means"] = np.array(list(self.table.values()), dtype=float)
        return meta, arrays

    @classmethod
    def from_arrays(cls, meta, arrays):
        m = cls(meta["n_bins"])
        m.init, m.train_mse = meta["init"], meta["train_mse"]
        m.edges = [arrays[f"edges{i}"] for i in range(3)]
        m.table = dict(zip(arrays["keys"].tolist(), arrays["means"].tolist()))
        return m


_KINDS = {"gbt": GradientBoostedTrees, "lookup": BinnedLookupRegressor}


@dataclass
class CappedViewRegressor:
    """Predicts E[min(gamma, views after the current period) | state], clamped
    to [0, gamma] (to [0, largest training target] when uncapped)."""

    gamma: float
    model: object
    upper: float

    @property
    def train_mse(self) -> float:
        return self.model.train_mse

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.gamma == 0:
            return np.zeros(len(X))
        return np.clip(self.model.predict(X), 0.0, self.upper)


def training_rows(train: TrajectoryDataset, max_rows: int | None = None, seed: int = 0):
    X = features(train).reshape(-1, 6)
    y = future_views(train).reshape(-1).astype(float)
    if max_rows is not None and len(y) > max_rows:
        keep = np.random.default_rng(seed).choice(len(y), size=max_rows, replace=False)
        X, y = X[keep], y[keep]
    return X, y


def train_regressor(train: TrajectoryDataset, gamma: float = float("inf"), kind: str = "gbt",
                    max_rows: int | None = 200_000, seed: int = 0, **params) -> CappedViewRegressor:
    """Fit state -> min(gamma, future views) over every (content, age) pair."""
    if train.n == 0:
        raise ValueError("empty training data")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    X, fv = training_rows(train, max_rows, seed)
    y = np.minimum(fv, gamma)
    model = _KINDS[kind](**params).fit(X, y)
    upper = gamma if np.isfinite(gamma) else float(fv.max())
    return CappedViewRegressor(float(gamma), model, upper)


# --- model.bin ------------------------------------------------------------

MAGIC = b"OARCMDL\x00"
VERSION = 1


def save_models(models: dict[str, CappedViewRegressor], path, extra: dict | None = None) -> None:
    """Write named regressors to one file.

    Layout: 8-byte magic, little-endian uint32 version, uint32 header length,
    UTF-8 JSON header, then an ``.npz`` archive holding every array as
    ``<name>/<field>``.
    """
    header = {"version": VERSION, "models": {}, "extra": extra or {}}
    arrays = {}
    for name, reg in models.items():
        meta, arr = reg.model.to_arrays()
        header["models"][name] = dict(meta, gamma=None if not np.isfinite(reg.gamma) else reg.gamma,
                                      upper=reg.upper)
        arrays.update({f"{name}/{k}": v for k, v in arr.items()})
    payload = io.BytesIO()
    np.savez_compressed(payload, **arrays)
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(head)) + head + payload.getvalue())


def load_models(path) -> tuple[dict[str, CappedViewRegressor], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    header = json.loads(raw[16:16 + hlen])
    npz = np.load(io.BytesIO(raw[16 + hlen:]))
    models = {}
    for name, meta in header["models"].items():
        arrays = {k.split("/", 1)[1]: npz[k] for k in npz.files if k.startswith(name + "/")}
        model = _KINDS[meta["kind"]].from_arrays(meta, arrays)
        gamma = float("inf") if meta["gamma"] is None else float(meta["gamma"])
        models[name] = CappedViewRegressor(gamma, model, float(meta["upper"]))
    return models, header.get("extra", {})
