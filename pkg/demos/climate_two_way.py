"""Two crossed factors observed on a decade grid, with linear and quadratic time trends.

The data are synthetic (13 x 3 x 9, two responses) but follow the same layout
as an ensemble of model runs under several emission scenarios.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from designs import CLIMATE_CONFIG, climate_dataset  # noqa: E402

from mmanova.criteria import exceedance_matrix, summarize_posterior  # noqa: E402
from mmanova.model import build_model  # noqa: E402
from mmanova.posterior import SamplerConfig, run_posterior  # noqa: E402

data = climate_dataset(seed=2)
model = build_model(CLIMATE_CONFIG, data)
for b in model.batches:
    print(f"{b.name:8s} levels {b.n_b:3d}  constraints {b.c:3d}  dof {b.nu:3d}  v = {b.ratio:.5f}")

draws = run_posterior(model, data, SamplerConfig(draws=3000, seed=3))
print("\nmedian total marginal variance")
for s in summarize_posterior(draws, criteria=("total_marginal_variance",)):
    print(f"  {s.batch:8s}{s.parameter:16s}{s.quantiles[2]:10.4f}")

names, m = exceedance_matrix(draws, "finite", "determinant")
print("\nP(row determinant > column determinant), finite population")
print("         " + "".join(f"{n:>8s}" for n in names))
for n, row in zip(names, m):
    print(f"{n:9s}" + "".join(f"{v:8.2f}" for v in row))
print(f"\nposterior mean error covariance\n{np.round(draws.sigma_eps.mean(0), 4)}")
