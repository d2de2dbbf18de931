import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oarc.content.data import (TrajectoryDataset, features, from_daily_views, future_views,
                               gamma_percentile, gen_ads, gen_ugc, hawkes_mean, history_tree,
                               last_views, load_dataset, pareto, perturb_pviolating, split, to_csv,
                               ucb1_pulls)
from oarc.tree import pass_prob


def tiny(views, pv=None, vio=None):
    views = np.asarray(views)
    n = len(views)
    pv = np.full(n, 0.5) if pv is None else np.asarray(pv, dtype=float)
    vio = np.zeros(n, dtype=int) if vio is None else np.asarray(vio)
    return TrajectoryDataset(np.array([f"c{i}" for i in range(n)]), pv, vio, views)


class TestAds:
    def test_one_ad_per_campaign_is_poisson(self):
        d = gen_ads(400, ads_per_campaign=1, L=60, seed=1)
        busy = d.views.mean(axis=1) > 2
        dispersion = d.views[busy].var(axis=1, ddof=1) / d.views[busy].mean(axis=1)
        assert abs(np.median(dispersion) - 1.0) < 0.15

    def test_full_scale_size(self):
        d = gen_ads(5000, 5, L=100, seed=0)
        assert (d.n, d.L) == (25_000, 100)
        # all ads of one campaign share pviolating
        assert np.all(np.ptp(d.pviolating.reshape(5000, 5), axis=1) == 0)

    def test_ucb_concentrates_on_best_arm(self):
        rewards = np.array([[0.1, 0.2, 0.9], [0.8, 0.1, 0.1]])
        pulls = ucb1_pulls(rewards, 2000, np.random.default_rng(0))
        late = pulls[:, 1000:]
        assert np.mean(late[0] == 2) > 0.9 and np.mean(late[1] == 0) > 0.9

    def test_campaign_views_track_budget(self):
        C, K, L = 300, 5, 100
        d = gen_ads(C, K, L=L, seed=2)
        # replay the generator's first draws to recover the budgets X_u
        rng = np.random.default_rng(2)
        rng.beta(1, 3, size=C)
        budget = pareto(rng, 0.8, 1.0, C)
        per_period = d.views.reshape(C, K, L).sum(axis=1)  # one promoted ad per period
        resid = per_period.mean(axis=1) - budget
        se = np.sqrt(budget / L)
        assert np.mean(np.abs(resid) <= 3 * se + 1e-9) > 0.95
        # the most-pulled ad gets more than an even share of the late periods
        v = d.views.reshape(C, K, L)[budget > 1]
        shown = (v[:, :, 60:] > 0).sum(axis=2)
        assert np.median(shown.max(axis=1) / np.maximum(shown.sum(axis=1), 1)) > 1 / K


class TestUGC:
    def test_decay_without_excitation(self):
        d = gen_ugc(40_000, L=2, seed=3, alpha_range=(2.0, 2.0), excitation=False)
        x = d.views[:, 1]
        assert abs(x.mean() - math.exp(-2)) <= 3 * x.std() / math.sqrt(len(x))

    def test_cap(self):
        assert hawkes_mean([10_000.0], alpha=0.1) == 5000.0
        assert hawkes_mean([1.0], alpha=1.0) == pytest.approx(math.exp(-1))
        assert hawkes_mean([1.0, 0.0], alpha=1.0, multipliers=[1.0, 0.0]) == pytest.approx(
            2 * math.exp(-2))

    def test_heavy_tail(self):
        d = gen_ugc(2000, seed=4)
        tot = d.total_views
        assert tot.max() > 100 * np.median(tot)
        assert np.all(d.views[:, 0] == 1)

    @pytest.mark.parametrize("make", [lambda: gen_ads(2000, 5, L=20, seed=5),
                                      lambda: gen_ugc(8000, L=5, seed=6)])
    def test_labels_are_calibrated(self, make):
        d = make()
        bins = np.linspace(0, 1, 6)
        which = np.digitize(d.pviolating, bins[1:-1])
        for b in range(5):
            sel = which == b
            if sel.sum() < 50:
                continue
            p = d.pviolating[sel].mean()
            se = math.sqrt(p * (1 - p) / sel.sum())
            assert abs(d.violating[sel].mean() - p) <= 4 * se

    def test_pareto_conventions(self):
        rng = np.random.default_rng(0)
        assert pareto(rng, 2.0, 3.0, 1000, "classical").min() >= 3.0
        assert pareto(rng, 2.0, 3.0, 1000, "lomax").min() >= 0.0
        with pytest.raises(ValueError):
            pareto(rng, 2.0, 1.0, 3, "other")


class TestIO:
    def test_split_four(self, tmp_path):
        d = tiny(np.arange(12).reshape(4, 3))
        tr, te = split(d, seed=1)
        assert tr.n == te.n == 2
        assert not set(tr.ids) & set(te.ids)

    def test_zero_fill(self, tmp_path):
        p = tmp_path / "short.csv"
        p.write_text("content_id,pviolating,violating,v1,v2,v3\na,0.5,1,4,5,6\nb,0.2,0,7\n")
        with pytest.raises(ValueError, match="zero fill"):
            load_dataset(p)
        d = load_dataset(p, zero_fill=True)
        assert d.views.tolist() == [[4, 5, 6], [7, 0, 0]]

    def test_bad_probability(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("content_id,pviolating,violating,v1\na,1.3,1,4\n")
        with pytest.raises(ValueError, match="outside"):
            load_dataset(p)

    def test_round_trip_with_manifest(self, tmp_path):
        d = gen_ugc(30, L=6, seed=1)
        p = tmp_path / "d.csv"
        to_csv(d, p, manifest='{"seed":1}')
        assert p.read_text().startswith("# manifest:")
        back = load_dataset(p)
        np.testing.assert_array_equal(back.views, d.views)
        np.testing.assert_array_equal(back.pviolating, d.pviolating)

    def test_daily_traces(self):
        d = from_daily_views({"x": [1, 2, 3], "y": [5]}, seed=0)
        assert d.views.tolist() == [[1, 2, 3], [5, 0, 0]]


class TestDerived:
    def test_features_and_targets(self):
        d = tiny([[1, 2, 3, 4]], pv=[0.25])
        f = features(d)[0]
        assert f[:, 0].tolist() == [0.25] * 4
        assert f[:, 1].tolist() == [1, 2, 3, 4]
        assert f[:, 2].tolist() == [0, 1, 3, 6]
        assert f[:, 3].tolist() == [0, 1, 2, 3]
        assert f[:, 5].tolist() == [0, 0, 0, 1]
        assert future_views(d)[0].tolist() == [9, 7, 4, 0]
        assert last_views(d)[0].tolist() == [0, 1, 2, 3]

    def test_percentiles(self):
        d = tiny(np.arange(1, 101)[:, None])
        assert gamma_percentile(d, 99) == 99
        assert gamma_percentile(tiny(np.full((7, 2), 3)), 37) == 6
        ads = gen_ads(200, 5, L=30, seed=7)
        oracle = np.sort(ads.total_views)[math.ceil(0.99 * ads.n) - 1]
        assert gamma_percentile(ads, 99) == oracle

    def test_perturbation(self):
        d = tiny(np.ones((3, 2)), pv=[0.99, 0.5, 0.01])
        assert perturb_pviolating(d, 0.0) is d
        big = perturb_pviolating(d, 0.5, seed=0)
        assert np.all((big.pviolating >= 0) & (big.pviolating <= 1))
        np.testing.assert_array_equal(big.violating, d.violating)
        with pytest.raises(ValueError):
            perturb_pviolating(d, -0.1)

    def test_perturbation_clips_at_one(self):
        d = tiny(np.ones((200, 1)), pv=np.full(200, 0.99))
        out = perturb_pviolating(d, 0.03, seed=1)
        assert out.pviolating.max() == 1.0

    @given(st.floats(0.0, 0.3), st.floats(0.0, 0.3), st.integers(0, 1000))
    def test_perturbation_is_coupled(self, e1, e2, seed):
        d = tiny(np.ones((20, 1)), pv=np.linspace(0.05, 0.95, 20))
        a = perturb_pviolating(d, e1, seed).pviolating - d.pviolating
        b = perturb_pviolating(d, e2, seed).pviolating - d.pviolating
        assert np.all(a * b >= -1e-15)

    def test_history_tree(self):
        d = tiny([[1, 2], [1, 3], [1, 2]], pv=[0.5, 0.5, 0.5])
        t, keys = history_tree(d)
        assert t.report.ok and t.n == 1 + 1 + 2
        pi = pass_prob(t)
        assert pi[keys.index((0.5, 1, 2))] == pytest.approx(2 / 3)
        assert t.cost[keys.index((0.5, 1, 3))] == pytest.approx(1.5)


def test_dataset_validation():
    with pytest.raises(ValueError):
        tiny([[1, -1]])
    with pytest.raises(ValueError):
        tiny([[1, 1]], vio=[2])
    with pytest.raises(ValueError):
        TrajectoryDataset(np.array(["a"]), np.array([0.5, 0.5]), np.array([0]), np.ones((1, 2)))
