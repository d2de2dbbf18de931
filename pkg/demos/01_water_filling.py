"""Water filling on the six-state tree.

Jobs enter at state 1 and move down the tree; a priority ordering decides
which states get the capacity. This script fills capacity along a fixed
ordering, prints the resulting equilibrium, then lets the fluid solver pick
the cost-optimal ordering.

    python demos/01_water_filling.py
"""
from oarc import PriorityOrdering, StateType, water_fill, fluid_cost, water_filling_example
from oarc.fluid import solve

tree = water_filling_example()
lam, mu = 0.8, 0.7

order = PriorityOrdering.from_labels(tree, "235461")
eq = water_fill(tree, lam, mu, order)
print("ordering 2,3,5,4,6,1")
print(f"  filled states m={eq.m}, partially served state={tree.labels[eq.partial]}, "
      f"kappa={eq.kappa}")
for i in order.order:
    print(f"  state {tree.labels[i]}: service {eq.nu[i]:.3f}, queue {eq.q[i]:.3f}, "
          f"type {StateType(eq.classification[i]).name}")
print(f"  fluid cost per job slot: {fluid_cost(tree, eq):.4f}")

sol = solve(tree, lam, mu)
print("\ncost-optimal ordering")
print(f"  capacity price gamma*={sol.gamma_star:.4f}, cost C*={sol.cost:.4f}")
print("  service:", {tree.labels[i]: round(float(v), 4) for i, v in enumerate(sol.equilibrium.nu)})
