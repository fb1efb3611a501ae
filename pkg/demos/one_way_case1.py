"""Fit the three-dimensional one-way model to a simulated case-1 dataset.

Prints posterior intervals for the batch, finite-population and error
covariance criteria next to their true values.
"""

from mmanova.criteria import CRITERIA, criterion_value, summarize_intervals
from mmanova.model import build_model, one_way_config
from mmanova.posterior import SamplerConfig, run_posterior
from mmanova.simulation import generate_scenario

scen, data = generate_scenario(case=1, n_alpha=8, n_eps=15, seed=11)
model = build_model(one_way_config(), data)
draws = run_posterior(model, data, SamplerConfig(draws=4000, seed=1))

targets = {
    "superpopulation": (draws["alpha"].sigma, scen.sigma_alpha),
    "finite": (draws["alpha"].finite, scen.finite_alpha),
    "error": (draws.sigma_eps, scen.sigma_eps),
}
print(f"{'parameter':16s}{'criterion':26s}{'2.5%':>9s}{'50%':>9s}{'97.5%':>9s}{'true':>9s}")
for param, (mats, truth) in targets.items():
    for kind in CRITERIA:
        q = summarize_intervals(criterion_value(mats, kind)).quantiles
        print(f"{param:16s}{kind:26s}{q[0]:9.3f}{q[2]:9.3f}{q[4]:9.3f}{criterion_value(truth, kind):9.3f}")

alpha = draws["alpha"]
print(f"\nrejections {alpha.rejections}, truncations {alpha.truncations}")
