"""Scalar covariance criteria, posterior intervals and exceedance probabilities.

Three criteria summarise a covariance matrix: ``determinant`` (generalised
variance), ``total_variance`` (the sum of all entries, ``1^T S 1``) and
``total_marginal_variance`` (the trace). Intervals use the type-7 (linear
interpolation) empirical quantile.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .errors import Empty, InsufficientN, LengthMismatch, ValidationError
from .linalg import PD_TOL, cholesky_pivots, rng_stream, symmetrize

CRITERIA = ("determinant", "total_variance", "total_marginal_variance")
PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True)
class IntervalSummary:
    batch: str
    parameter: str  # superpopulation | finite | error
    criterion: str
    probs: Tuple[float, ...]
    quantiles: Tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "batch": self.batch,
            "parameter": self.parameter,
            "criterion": self.criterion,
            "quantiles": {f"{p:g}": q for p, q in zip(self.probs, self.quantiles)},
        }


def criterion_value(sigma: NDArray, kind: str) -> NDArray:
    """Criterion of one covariance matrix or of a stack ``(..., d, d)``.

    The determinant is the product of the Cholesky pivots and is zero once any
    pivot falls below the PD tolerance.
    """
    sigma = symmetrize(sigma)
    if kind == "determinant":
        d = sigma.shape[-1]
        _, piv = cholesky_pivots(sigma)
        scale = np.abs(np.trace(sigma, axis1=-2, axis2=-1)) / d
        ok = np.all(piv > PD_TOL * scale[..., None], axis=-1) & (scale > 0)
        out = np.where(ok, np.prod(np.where(ok[..., None], piv, 1.0), axis=-1), 0.0)
    elif kind == "total_variance":
        out = np.maximum(sigma.sum(axis=(-2, -1)), 0.0)
    elif kind == "total_marginal_variance":
        out = np.trace(sigma, axis1=-2, axis2=-1)
    else:
        raise ValidationError(f"unknown criterion {kind!r}")
    return out if np.ndim(out) else float(out)


def summarize_intervals(values: Sequence[float], probs: Sequence[float] = PROBS, batch: str = "", parameter: str = "", criterion: str = "") -> IntervalSummary:
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise Empty("need at least two draws to summarise")
    q = np.quantile(values, probs, method="linear")
    q = np.maximum.accumulate(q)
    return IntervalSummary(batch, parameter, criterion, tuple(float(p) for p in probs), tuple(float(v) for v in q))


def exceedance_prob(a: Sequence[float], b: Sequence[float]) -> float:
    """Fraction of paired draws with ``a > b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"draw counts differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise Empty("no draws")
    return float(np.mean(a > b))


def posterior_covariances(draws) -> Dict[Tuple[str, str], NDArray]:
    """``(batch, parameter) -> (R, d, d)`` for every available covariance draw set."""
    out = {}
    for name in draws.order:
        bd = draws.batches[name]
        if bd.sigma is not None:
            out[(name, "superpopulation")] = bd.sigma
        if bd.finite is not None:
            out[(name, "finite")] = bd.finite
    out[("error", "error")] = draws.sigma_eps
    return out


def summarize_posterior(draws, probs: Sequence[float] = PROBS, criteria: Iterable[str] = CRITERIA) -> List[IntervalSummary]:
    rows = []
    covs = posterior_covariances(draws)
    for (name, param), mats in covs.items():
        for kind in criteria:
            rows.append(summarize_intervals(criterion_value(mats, kind), probs, name, param, kind))
    return rows


def exceedance_matrix(draws, parameter: str, kind: str) -> Tuple[List[str], NDArray]:
    """Pairwise ``P(g(Sigma_row) > g(Sigma_col) | Y)``; the error covariance is included."""
    covs = posterior_covariances(draws)
    keys = [k for k in covs if k[1] == parameter]
    if parameter != "error":
        keys.append(("error", "error"))
    names = [k[0] for k in keys]
    vals = [criterion_value(covs[k], kind) for k in keys]
    m = np.zeros((len(keys), len(keys)))
    for i, a in enumerate(vals):
        for j, b in enumerate(vals):
            m[i, j] = exceedance_prob(a, b)
    return names, m


@lru_cache(maxsize=None)
def _det_pivot_quantiles(n: int, d: int, alpha: float, draws: int = 100_000, seed: int = 20110101) -> Tuple[float, float]:
    rng = rng_stream(seed, n, d)
    dofs = n - 1 - d + np.arange(1, d + 1)
    prod = np.prod(rng.chisquare(dofs, size=(draws, d)), axis=1)
    lo, hi = np.quantile(prod, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def freq_reference_interval(U: NDArray, n: int, kind: str, level: float = 0.95) -> Tuple[float, float]:
    """Classical interval for a criterion of ``Sigma`` from ``U ~ W_d(Sigma, n - 1)``.

    Determinant and total variance invert the pivots ``|U|/|Sigma|`` (product of
    chi-squares with ``n-1-d+i`` dof) and ``1^T U 1 / 1^T Sigma 1``
    (``chi^2_{n-1}``). The trace uses the two-moment normal approximation
    ``tr U ~ N((n-1) tr Sigma, 2 (n-1) tr Sigma^2)`` with ``Sigma`` replaced by
    ``U / (n-1)`` in the variance.
    """
    U = symmetrize(U)
    d = U.shape[0]
    if n - 1 < d:
        raise InsufficientN(f"need n - 1 >= d, got n={n}, d={d}")
    alpha = 1.0 - level
    if kind == "determinant":
        detU = float(criterion_value(U, "determinant"))
        if d == 1:
            lo, hi = stats.chi2.ppf([alpha / 2, 1 - alpha / 2], n - 1)
        else:
            lo, hi = _det_pivot_quantiles(n, d, alpha)
        return detU / hi, detU / lo
    if kind == "total_variance":
        t = float(U.sum())
        lo, hi = stats.chi2.ppf([alpha / 2, 1 - alpha / 2], n - 1)
        return t / hi, t / lo
    if kind == "total_marginal_variance":
        sig = U / (n - 1)
        centre = float(np.trace(sig))
        sd = np.sqrt(2.0 * (n - 1) * float(np.trace(sig @ sig))) / (n - 1)
        z = stats.norm.ppf(1 - alpha / 2)
        return centre - z * sd, centre + z * sd
    raise ValidationError(f"unknown criterion {kind!r}")
