"""
Checking the analytic inequalities numerically
==============================================

Each suite samples its inequality on a grid (or at random) and reports the
worst margin.  The tame inequality needs the true cutoff c(sigma); with the
desk cutoff c = e it can fail, which is recorded rather than hidden.
"""

import math

from nlskam import SUITES

for name, fn in SUITES.items():
    if name == "tame":
        continue
    v = fn()
    print(f"{name:22s} passed={v.passed}  worst margin {v.worst_margin:.4g}  trials {v.trials}")

for sigma in (2.1, 2.5, 3.0):
    t = SUITES["tame"](sigma=sigma, trials=10_000)
    e = SUITES["tame"](sigma=sigma, trials=10_000, c_override=math.e)
    print(f"tame sigma={sigma}: true c passed={t.passed}; c=e passed={e.passed} "
          f"(worst margin {e.worst_margin:.3g})")
