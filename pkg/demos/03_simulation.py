"""Simulating the finite system against its fluid bound.

Two jobs arrive for every reviewer. A cheap post that later turns into a
costly video fools myopic rules: they serve whatever costs most right now.
OaRC prices the whole future path and serves posts first. The second half
shows regret against N * C* as the system grows.

    python demos/03_simulation.py
"""
from oarc import SimConfig, builtin, post_video_example, regret, run, value_functions
from oarc import water_filling_example
from oarc.fluid import solve

tree = post_video_example()
lam, mu, N = 0.8, 0.4, 500
sol = solve(tree, lam, mu)
vt = value_functions(tree, sol.gamma_star)
cfg = SimConfig(N, lam, mu, T=2000, seed=1, replications=8)
print(f"post/video, N={N}: fluid bound N*C* = {N * sol.cost:.1f}")
for kind in ("oarc", "cmu", "cmutheta", "fifo", "random"):
    m = run(tree, cfg, builtin(kind, tree, vt))
    print(f"  {kind:>9}: average cost {m.cost_avg:9.1f} +- {m.cost_se:.1f}")

tree = water_filling_example()
sol = solve(tree, 0.8, 0.7)
policy = builtin("oarc", tree, value_functions(tree, sol.gamma_star))
print("\nsix-state tree, OaRC regret by system size")
for N in (50, 100, 200, 400):
    est = regret(run(tree, SimConfig(N, 0.8, 0.7, T=3000, seed=2, replications=10), policy),
                 N, sol.cost)
    print(f"  N={N:4d}: regret {est.value:7.3f}  95% CI [{est.ci_low:.3f}, {est.ci_high:.3f}]")
