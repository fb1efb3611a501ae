"""Least-squares decomposition of a balanced dataset into batch estimates.

Because the validated design is balanced and its batches own mutually
orthogonal subspaces, the joint least-squares fit splits into one projection
per batch: ``beta_hat = v_b * P_b X_b^T Y`` with ``P_b`` the constraint
projector (identity for factor-free batches) and ``v_b`` the batch ratio.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from .model import BatchSpec, Dataset, ModelSpec


@dataclass(frozen=True)
class BatchEstimates:
    levels: Dict[str, NDArray]  # name -> (n_b, d)
    ratios: Dict[str, float]  # name -> v_b

    def __getitem__(self, name: str) -> NDArray:
        return self.levels[name]


@dataclass(frozen=True)
class ScatterSet:
    residual: NDArray
    batches: Dict[str, NDArray]
    residual_dof: float  # n - sum_b n_b, before adding the prior dof


def _level_sums(batch: BatchSpec, y: NDArray) -> NDArray:
    out = np.zeros((batch.n_b, y.shape[1]))
    np.add.at(out, batch.level_map, batch.x[:, None] * y)
    return out


def least_squares_decompose(dataset: Dataset, model: ModelSpec) -> BatchEstimates:
    y = dataset.responses
    levels, ratios = {}, {}
    for b in model.batches:
        v = b.ratio
        est = v * _level_sums(b, y)
        if not b.is_global:
            est = b.projector @ est
        levels[b.name] = est
        ratios[b.name] = v
    return BatchEstimates(levels, ratios)


def fitted_values(model: ModelSpec, estimates: BatchEstimates) -> NDArray:
    fitted = np.zeros((model.n, model.d))
    for b in model.batches:
        fitted += b.x[:, None] * estimates.levels[b.name][b.level_map]
    return fitted


def fitted_and_residuals(dataset: Dataset, model: ModelSpec, estimates: BatchEstimates) -> Tuple[NDArray, NDArray]:
    fitted = fitted_values(model, estimates)
    return fitted, dataset.responses - fitted


def residual_scatter(residuals: NDArray) -> NDArray:
    r = np.atleast_2d(np.asarray(residuals, dtype=float))
    if r.shape[0] == 1 and np.ndim(residuals) == 1:
        r = r.T
    e = r.T @ r
    return 0.5 * (e + e.T)


def batch_scatter(levels: NDArray, basis: NDArray, c: int, beta0: Optional[NDArray] = None) -> NDArray:
    """Scatter of the free coordinates of ``levels`` about ``beta0``.

    ``basis`` is the constraint-projector eigenbasis with the ``c`` flat
    columns first; the scatter runs over the remaining ``n_b - c`` rotated
    coordinates.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        levels = levels[:, None]
    free = basis[:, c:].T @ levels
    if beta0 is not None:
        free = free - np.asarray(beta0, dtype=float)
    s = free.T @ free
    return 0.5 * (s + s.T)


def scatter_set(dataset: Dataset, model: ModelSpec, estimates: Optional[BatchEstimates] = None) -> ScatterSet:
    if estimates is None:
        estimates = least_squares_decompose(dataset, model)
    _, resid = fitted_and_residuals(dataset, model, estimates)
    E = residual_scatter(resid)
    B = {
        b.name: batch_scatter(estimates.levels[b.name], b.basis, b.c, b.prior_mean)
        for b in model.batches
        if b.nu >= 1
    }
    return ScatterSet(E, B, model.residual_dof - model.error_dof)


def anova_partition(dataset: Dataset, model: ModelSpec, estimates: Optional[BatchEstimates] = None) -> Dict[str, NDArray]:
    """Per-batch sums-of-squares-and-products matrices of the orthogonal partition.

    Each entry is the scatter of that batch's fitted contribution, so the
    entries plus ``"error"`` add up to ``Y^T Y``; the intercept entry is the
    part removed by centring.
    """
    if estimates is None:
        estimates = least_squares_decompose(dataset, model)
    out = {}
    for b in model.batches:
        lv = estimates.levels[b.name]
        s = (lv.T @ lv) / b.ratio
        out[b.name] = 0.5 * (s + s.T)
    _, resid = fitted_and_residuals(dataset, model, estimates)
    out["error"] = residual_scatter(resid)
    return out
