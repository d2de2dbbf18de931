"""The capacity price behind the OaRC index.

Serving a job costs gamma; leaving it in the queue costs the holding cost of
every state it visits until it leaves. value_functions solves this
buy-or-rent problem per state. The dual objective is minimised over gamma,
and at the minimiser gamma* the index c + V^f orders states for service.

    python demos/02_capacity_price.py
"""
import numpy as np

from oarc import dual_value, optimal_gamma, post_video_example, value_functions

tree = post_video_example()
lam, mu = 0.8, 0.4

print("dual objective over a grid of capacity prices")
for g in np.linspace(0.0, 20.0, 11):
    print(f"  gamma={g:5.1f}  D={dual_value(tree, lam, mu, g):9.4f}")

sol = optimal_gamma(tree, lam, mu)
vt = value_functions(tree, sol.gamma)
print(f"\ngamma*={sol.gamma:.4f}")
print(f"{'state':>12} {'cost':>8} {'V':>8} {'index':>8}")
for i in np.argsort(-vt.index, kind="stable"):
    print(f"{tree.labels[i]:>12} {tree.cost[i]:8.3f} {vt.V[i]:8.3f} {vt.index[i]:8.3f}")
