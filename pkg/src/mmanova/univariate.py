"""Univariate (d = 1) multilevel ANOVA.

Method-of-moments variance components and the four-step simulation:
raw variances from scaled inverse chi-squares, truncated superpopulation
variances, batch levels given those variances, finite-population variances.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from numpy.typing import NDArray

from .errors import InsufficientDof, ValidationError, ZeroDof
from .estimation import fitted_and_residuals, least_squares_decompose
from .linalg import projector_complement
from .model import BatchSpec, Dataset, ModelSpec


@dataclass(frozen=True)
class VarianceDecomposition:
    names: Tuple[str, ...]  # batches with nu >= 1, in bottom-up order
    V_hat: Dict[str, float]
    V_est: Dict[str, float]
    sigma2_raw: Dict[str, float]
    sigma2: Dict[str, float]  # truncated at zero
    nu: Dict[str, int]
    sigma2_eps: float
    nu_eps: int
    I: Dict[str, Tuple[Tuple[str, float], ...]]  # batch -> ((k, v_b / v_k), ...)
    estimates: Dict[str, NDArray]
    batches: Dict[str, BatchSpec]


def estimation_graph(model: ModelSpec) -> Dict[str, Tuple[Tuple[str, float], ...]]:
    """Batches entering each batch's estimation variance, with their weights.

    ``k`` enters ``I(b)`` when it shares ``b``'s covariate and its factors
    strictly contain ``b``'s; the error batch always enters. The weight is
    ``v_b / v_k``, i.e. ``n_b / n_k`` for constant batches.
    """
    graph = {}
    for b in model.batches:
        members = []
        for k in model.batches:
            if k.covariate == b.covariate and set(b.factors) < set(k.factors) and k.nu >= 1:
                members.append((k.name, b.ratio / k.ratio))
        members.append(("error", b.ratio))
        graph[b.name] = tuple(members)
    return graph


def fit_univariate(dataset: Dataset, model: ModelSpec) -> VarianceDecomposition:
    if model.d != 1:
        raise ValidationError("univariate ANOVA needs a one-dimensional response")
    est = least_squares_decompose(dataset, model)
    _, resid = fitted_and_residuals(dataset, model, est)
    nu_eps = model.n - model.rank
    if nu_eps < 1:
        raise InsufficientDof("no residual degrees of freedom", batch="error")
    s2e = float(np.sum(resid ** 2)) / nu_eps
    graph = estimation_graph(model)
    order = sorted((b for b in model.batches if b.nu >= 1), key=lambda b: -len(b.factors))
    V_hat, V_est, raw, trunc, nu = {}, {}, {}, {}, {}
    done = {"error": s2e}
    for b in order:
        v_hat = float(np.sum(est.levels[b.name] ** 2)) / b.nu
        v_est = sum(w * done[k] for k, w in graph[b.name])
        V_hat[b.name], V_est[b.name], nu[b.name] = v_hat, v_est, b.nu
        raw[b.name] = v_hat - v_est
        trunc[b.name] = max(0.0, v_hat - v_est)
        done[b.name] = trunc[b.name]
    names = tuple(b.name for b in order)
    return VarianceDecomposition(
        names, V_hat, V_est, raw, trunc, nu, s2e, nu_eps,
        {k: graph[k] for k in names},
        {k: est.levels[k][:, 0] for k in names},
        {b.name: b for b in order},
    )


@dataclass(frozen=True)
class UnivariateDraws:
    sigma2: NDArray  # (R,)
    levels: NDArray  # (R, n_b)
    finite: NDArray  # (R,)
    raw: NDArray  # (R,) step-1 raw variances


def simulate_univariate(dec: VarianceDecomposition, R: int, rng: np.random.Generator) -> Tuple[NDArray, Dict[str, UnivariateDraws]]:
    """Returns ``(sigma2_eps draws, {batch: UnivariateDraws})``.

    Levels are drawn from their conditional posterior given the simulated
    variances: free coordinates shrink the estimate by
    ``sigma2_b / (sigma2_b + V_estimation)``; flat coordinates stay at the
    (zero) estimate.
    """
    s2e = dec.nu_eps * dec.sigma2_eps / rng.chisquare(dec.nu_eps, size=R)
    raw = {k: dec.nu[k] * dec.V_hat[k] / rng.chisquare(dec.nu[k], size=R) for k in dec.names}
    done = {"error": s2e}
    out = {}
    for k in dec.names:
        v_est = sum(w * done[j] for j, w in dec.I[k])
        s2 = np.maximum(0.0, raw[k] - v_est)
        done[k] = s2
        b = dec.batches[k]
        basis = b.basis
        theta_hat = basis.T @ dec.estimates[k]
        free = theta_hat[b.c:]
        with np.errstate(invalid="ignore", divide="ignore"):
            denom = s2 + v_est
            shrink = np.where(denom > 0, s2 / denom, 0.0)
            var = np.where(denom > 0, s2 * v_est / denom, 0.0)
        theta = np.zeros((R, b.n_b))
        theta[:, : b.c] = theta_hat[: b.c]
        theta[:, b.c:] = shrink[:, None] * free + np.sqrt(var)[:, None] * rng.standard_normal((R, b.nu))
        levels = theta @ basis.T
        fin = np.einsum("rj,jk,rk->r", levels, b.projector, levels) / b.nu
        out[k] = UnivariateDraws(s2, levels, fin, raw[k])
    return s2e, out


def finite_variance(levels: NDArray, C: NDArray) -> float:
    """``(1/nu) beta^T (I - C^T (C C^T)^{-1} C) beta`` with ``nu = n_b - rank(C)``."""
    levels = np.asarray(levels, dtype=float).ravel()
    P = projector_complement(C)
    nu = int(round(np.trace(P)))
    if nu < 1:
        raise ZeroDof("finite variance needs nu >= 1")
    return float(levels @ P @ levels) / nu
