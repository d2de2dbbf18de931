"""Prioritising content for human review.

Synthetic ad campaigns are generated, a view predictor is fitted on one
sample, and review policies are compared on another. OaRC-H caps predicted
future views at a price gamma* (the 99th percentile of total views). The
last table gives the reviewer hours it saves over ranking by pViolating
alone.

    python demos/04_content_moderation.py     (about 30 seconds)
"""
from oarc.content import (ContentSimConfig, gamma_percentile, gen_ads, reviewer_hour_savings,
                          sweep, train_regressor, vio_table)

train, test = gen_ads(300, seed=11), gen_ads(300, seed=12)
gamma = gamma_percentile(train, 99)
models = {"capped": train_regressor(train, gamma, n_trees=60),
          "uncapped": train_regressor(train, n_trees=60)}
print(f"gamma* = {gamma:.0f} views")

ratios = (0.03, 0.05, 0.10, 0.15, 0.20)
res = sweep(test, ("pviolating", "velocity", "piv", "oarch"), ratios,
            ContentSimConfig(N=200, lam=0.1, T=200, replications=3, seed=3), models)
table = vio_table(res, "pvio_views")
print("\nexpected violating views before review")
print("policy      " + "".join(f"{r:>9.0%}" for r in ratios))
for kind, row in table.items():
    print(f"{kind:<12}" + "".join(f"{row[r]:9.0f}" for r in ratios))

sav = reviewer_hour_savings(vio_table(res))["pviolating"]
print("\nreviewer hours saved vs pViolating: " +
      " ".join("none" if sav[r] is None else f"{sav[r]:.0%}" for r in ratios))
