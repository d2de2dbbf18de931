import numpy as np
import pytest
from hypothesis import given, strategies as st

from oarc.fluid import c_star, solve
from oarc.schedulers import Policy, builtin
from oarc.simulator import SimConfig, regret, run, steady_state_report
from oarc.ski_rental import value_functions
from oarc.tree import MarkovTree, pass_prob, random_tree, water_filling_example
from strategies import trees

SIX = water_filling_example()
FIG_OARC = builtin("oarc", SIX, value_functions(SIX, 2.75))


def policies_for(t):
    vt = value_functions(t, 1.0)
    return [builtin(k, t, vt) for k in ("oarc", "cmu", "cmutheta", "fifo", "random")]


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(N=0), dict(lam=1.0), dict(mu=1.5), dict(T=0),
                                    dict(warmup=10), dict(replications=0)])
    def test_rejects(self, kw):
        base = dict(N=10, lam=0.5, mu=0.5, T=10)
        with pytest.raises(ValueError):
            SimConfig(**{**base, **kw})

    def test_default_warmup(self):
        assert SimConfig(10, 0.5, 0.5, 100).warmup == 20


@given(trees(max_n=7), st.integers(1, 30), st.floats(0.0, 0.95), st.floats(0.0, 1.0),
       st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_trace_invariants(t, N, lam, mu, which, seed):
    cfg = SimConfig(N, lam, mu, T=25, seed=seed)
    pol = policies_for(t)[which]
    m = run(t, cfg, pol, trace=True)
    tr = m.trace
    Z = tr.queue - tr.served
    # event order: cost after service, before transitions
    np.testing.assert_allclose(tr.cost, Z @ t.cost)
    np.testing.assert_allclose(m.cost[0], tr.cost)
    assert np.all(tr.served >= 0) and np.all(Z >= 0)
    assert np.all(tr.served.sum(axis=1) <= tr.capacity)
    # conservation: survivors of Z_i split into children plus abandonment
    into_children = np.zeros_like(Z)
    for k in range(t.n):
        if t.parent[k] >= 0:
            into_children[:, t.parent[k]] += tr.moved[:, k]
    np.testing.assert_array_equal(into_children + tr.abandoned, Z)
    # next period's queue is exactly the movers plus arrivals; served jobs are gone
    nonroot = np.arange(t.n) != t.root
    np.testing.assert_array_equal(tr.queue[1:, nonroot], tr.moved[:-1, nonroot])
    np.testing.assert_array_equal(tr.queue[1:, t.root], tr.arrivals[:-1])
    assert np.all(tr.queue.sum(axis=1) <= N * t.L)
    # priority policies never leave a higher-index job waiting while serving a lower one
    order = pol.state_order(t)
    if order is not None:
        for q, r in zip(tr.queue, tr.served):
            waiting = np.flatnonzero(q[order] > r[order])
            if waiting.size:
                assert r[order][waiting[0] + 1:].sum() == 0


@given(trees(max_n=6), st.integers(0, 2**31 - 1), st.integers(0, 4))
def test_same_seed_same_run(t, seed, which):
    cfg = SimConfig(20, 0.6, 0.3, T=30, seed=seed, replications=3)
    pol = policies_for(t)[which]
    a, b = run(t, cfg, pol, trace=True), run(t, cfg, pol, trace=True)
    assert a.cost.tobytes() == b.cost.tobytes()
    assert a.trace.queue.tobytes() == b.trace.queue.tobytes()


def test_worker_count_does_not_change_results():
    cfg = SimConfig(50, 0.8, 0.7, T=200, seed=4, replications=40, block=16)
    a = run(SIX, cfg, FIG_OARC, workers=1)
    b = run(SIX, cfg, FIG_OARC, workers=3)
    assert a.cost.tobytes() == b.cost.tobytes()


def test_capacity_and_arrivals_are_paired_across_policies():
    cfg = SimConfig(40, 0.8, 0.7, T=50, seed=9)
    a = run(SIX, cfg, FIG_OARC, trace=True).trace
    b = run(SIX, cfg, Policy("fifo"), trace=True).trace
    np.testing.assert_array_equal(a.capacity, b.capacity)
    np.testing.assert_array_equal(a.arrivals, b.arrivals)


def test_no_arrivals_no_cost():
    m = run(SIX, SimConfig(100, 0.0, 0.5, T=50, replications=2), FIG_OARC)
    assert np.all(m.cost == 0)


def test_single_state_no_service():
    t = MarkovTree([-1], [1.0], [2.5])
    N, lam = 200, 0.4
    m = run(t, SimConfig(N, lam, 0.0, T=2000, replications=10, seed=1), Policy("fifo"))
    assert abs(m.cost_avg - N * lam * 2.5) <= 3 * m.cost_se
    rg = regret(m, c_star=c_star(t, lam, 0.0))
    assert rg.ci_low <= 0 <= rg.ci_high


def test_no_service_mean_queue_is_arrivals_times_pass_prob():
    t = random_tree(np.random.default_rng(5), 8, min_abandon=0.1)
    N, lam = 300, 0.5
    m = run(t, SimConfig(N, lam, 0.0, T=1500, replications=10, seed=2), Policy("fifo"))
    rep = steady_state_report(m)
    assert np.all(np.abs(rep.mean_queue - N * lam * pass_prob(t)) <= 3 * rep.se_queue + 1e-9)


def test_six_state_cost_near_fluid_bound():
    N = 1000
    sol = solve(SIX, 0.8, 0.7)
    m = run(SIX, SimConfig(N, 0.8, 0.7, T=1500, replications=6, seed=3), FIG_OARC)
    assert m.cost_avg >= N * sol.cost - 3 * m.cost_se
    assert m.cost_avg - N * sol.cost <= 3 * np.sqrt(N)


def test_fully_served_root_leaves_nothing():
    t = water_filling_example()
    vt = value_functions(t, 0.0)
    m = run(t, SimConfig(200, 0.3, 0.9, T=400, replications=4), builtin("oarc", t, vt))
    rep = steady_state_report(m)
    assert rep.mean_remaining[t.root] < 0.5


def test_empty_states_stay_empty_under_their_ordering():
    # the ordering 2,3,5,4,6,1 puts 2 first; its child 3 is classified Empty
    from oarc.fluid import PriorityOrdering
    order = PriorityOrdering.from_labels(SIX, "235461").order
    idx = np.empty(6)
    idx[order] = np.arange(6, 0, -1)
    m = run(SIX, SimConfig(500, 0.8, 0.7, T=1000, replications=4, seed=6), Policy("custom", idx))
    rep = steady_state_report(m)
    assert rep.mean_queue[SIX.index_of("3")] < 0.02 * 500


def test_regret_needs_cstar():
    m = run(SIX, SimConfig(10, 0.5, 0.5, T=20), FIG_OARC)
    with pytest.raises(ValueError):
        regret(m)


def test_theta_note():
    m = run(SIX, SimConfig(10, 0.5, 0.5, T=20), FIG_OARC)
    assert any("theta = 0" in n for n in m.notes)
