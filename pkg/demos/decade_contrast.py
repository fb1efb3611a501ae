"""Predicted change over the decade grid for one factor combination and for a new one."""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from designs import CLIMATE_CONFIG, climate_dataset  # noqa: E402

from mmanova.linalg import rng_stream  # noqa: E402
from mmanova.model import build_model  # noqa: E402
from mmanova.posterior import SamplerConfig, run_posterior  # noqa: E402
from mmanova.predictive import NovelLevel, ObservedLevel, PredictiveScenario, decade_difference, predictive_contrast  # noqa: E402

data = climate_dataset(seed=2)
model = build_model(CLIMATE_CONFIG, data)
draws = run_posterior(model, data, SamplerConfig(draws=4000, seed=3))

t = np.arange(1.0, 10.0)
contrast = decade_difference(t, {"time": t, "time2": t ** 2})
observed = {"alpha0": ObservedLevel(0), "beta0": ObservedLevel(1), "gamma": ObservedLevel(1),
            "alpha1": ObservedLevel(0), "beta1": ObservedLevel(1)}
novel = dict(observed, alpha1=NovelLevel(), alpha0=NovelLevel())

for label, levels in (("observed G01 under A2", observed), ("new model under A2", novel)):
    out = predictive_contrast(model, draws, PredictiveScenario(levels, include_error=False), contrast, rng_stream(3, 9))
    lo, mid, hi = np.quantile(out, [0.025, 0.5, 0.975], axis=0)
    for k, name in enumerate(data.response_names):
        print(f"{label:24s}{name:8s} change {mid[k]:8.3f}  95% [{lo[k]:.3f}, {hi[k]:.3f}]")
