"""Posterior predictive draws and linear contrasts over design points.

Each batch contributes either one of its observed levels (taken from the
posterior level draws) or a novel level drawn from ``N(beta0, Sigma_b)`` with
the same posterior covariance draw. Factor-free batches (overall mean, global
slopes) enter at their posterior mean unless ``global_mean="full_draws"``.
"""

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .errors import MissingCovariance, ValidationError
from .linalg import psd_factor
from .model import BatchSpec, ModelSpec
from .posterior import PosteriorDraws


@dataclass(frozen=True)
class ObservedLevel:
    index: int  # 0-based level (cell) index
    point_estimate: bool = False


@dataclass(frozen=True)
class NovelLevel:
    pass


Choice = Union[ObservedLevel, NovelLevel]


@dataclass(frozen=True)
class PredictiveScenario:
    levels: Mapping[str, Choice] = field(default_factory=dict)
    point: Mapping[str, float] = field(default_factory=dict)
    include_error: bool = True
    global_mean: str = "point_estimate"  # or "full_draws"

    def __post_init__(self):
        if self.global_mean not in ("point_estimate", "full_draws"):
            raise ValidationError(f"unknown global_mean handling {self.global_mean!r}")


@dataclass(frozen=True)
class ContrastSpec:
    weights: Sequence[float]
    points: Sequence[Mapping[str, float]]
    include: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(self.points) != w.size or not np.all(np.isfinite(w)):
            raise ValidationError("contrast needs one finite weight per design point")


def _design_weight(batch: BatchSpec, contrast: ContrastSpec) -> float:
    w = np.asarray(contrast.weights, dtype=float)
    if not batch.is_slope:
        return float(w.sum())
    xs = []
    for p in contrast.points:
        if batch.covariate not in p:
            raise ValidationError(f"design point lacks covariate {batch.covariate!r} needed by batch {batch.name!r}")
        xs.append(batch.covariate_value(p[batch.covariate]))
    return float(w @ np.asarray(xs))


def _level_draws(batch: BatchSpec, draws: PosteriorDraws, scenario: PredictiveScenario, rng) -> NDArray:
    bd = draws.batches[batch.name]
    R = draws.R
    if batch.is_global:
        choice = scenario.levels.get(batch.name, ObservedLevel(0, scenario.global_mean == "point_estimate"))
    else:
        if batch.name not in scenario.levels:
            raise ValidationError(f"scenario does not say which level of batch {batch.name!r} to use")
        choice = scenario.levels[batch.name]
    if isinstance(choice, NovelLevel):
        if bd.sigma is None:
            raise MissingCovariance(f"batch {batch.name!r} has no covariance posterior ({bd.withheld})")
        F = psd_factor(bd.sigma)
        z = rng.standard_normal((R, batch.d))
        return batch.prior_mean + np.einsum("rab,rb->ra", F, z)
    if not 0 <= choice.index < batch.n_b:
        raise ValidationError(f"level index {choice.index} out of range for batch {batch.name!r}")
    lv = bd.levels[:, choice.index, :]
    if choice.point_estimate:
        return np.broadcast_to(lv.mean(axis=0), lv.shape).copy()
    return lv


def predictive_contrast(
    model: ModelSpec,
    draws: PosteriorDraws,
    scenario: PredictiveScenario,
    contrast: ContrastSpec,
    rng: np.random.Generator,
) -> NDArray:
    """``R x d`` draws of ``sum_t w_t Y~_t`` under ``scenario``.

    Slope batches contribute ``(sum_t w_t x_t) * level``, constant batches
    ``(sum_t w_t) * level``; independent errors contribute
    ``N(0, (sum_t w_t^2) Sigma_eps)``.
    """
    R, d = draws.R, model.d
    total = np.zeros((R, d))
    for b in model.batches:
        if not contrast.include.get(b.name, True):
            continue
        w = _design_weight(b, contrast)
        if w == 0.0:
            continue
        total += w * _level_draws(b, draws, scenario, rng)
    if scenario.include_error:
        w2 = float(np.sum(np.asarray(contrast.weights, dtype=float) ** 2))
        if w2 > 0:
            F = psd_factor(draws.sigma_eps)
            total += np.sqrt(w2) * np.einsum("rab,rb->ra", F, rng.standard_normal((R, d)))
    return total


def predictive_draws(model: ModelSpec, draws: PosteriorDraws, scenario: PredictiveScenario, rng: np.random.Generator) -> NDArray:
    """``R x d`` draws of a new observation at ``scenario.point``."""
    return predictive_contrast(model, draws, scenario, ContrastSpec([1.0], [dict(scenario.point)]), rng)


def decade_difference(covariate_values: Sequence[float], covariates: Optional[Mapping[str, Sequence[float]]] = None) -> ContrastSpec:
    """Last-minus-first contrast over an ordered covariate grid.

    ``covariates`` maps covariate name -> raw values along the grid; by default a
    single covariate named ``"time"`` takes ``covariate_values``.
    """
    covariates = dict(covariates or {"time": covariate_values})
    T = len(covariate_values)
    w = np.zeros(T)
    w[0], w[-1] = -1.0, 1.0
    points = [{k: float(v[t]) for k, v in covariates.items()} for t in range(T)]
    return ContrastSpec(w, points)
