"""Direct sampling from the batch-factored posterior.

Given the error covariance, batches are conditionally independent, so each
posterior draw is assembled without MCMC:

1. ``Sigma_eps ~ W^{-1}(Psi_eps + E, kappa_eps + n - sum_b n_b)``;
2. per batch, ``U_b = Sigma_b + v_b Sigma_eps ~ W^{-1}(Psi_b + B_b, kappa_b + nu_b)``
   restricted to ``Sigma_b`` positive definite (rejection, then eigenvalue
   truncation or failure once the cap is reached);
3. per batch, levels in the constraint-projector eigenbasis: flat coordinates
   ``N(theta_hat, v_b Sigma_eps)``, free coordinates from the Gaussian
   shrinkage law between ``theta_hat`` and the prior mean;
4. finite-population covariance of the projected levels.

Draws are produced in fixed-size chunks; each (chunk, batch) pair owns its own
random stream so the output does not depend on the number of threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from .errors import InsufficientDof, RejectionExhausted, ValidationError, ZeroDof
from .estimation import BatchEstimates, ScatterSet, least_squares_decompose, scatter_set
from .linalg import clip_psd, pd_mask, psd_factor, rng_stream, sample_inv_wishart, symmetrize
from .model import Dataset, ModelSpec

CHUNK = 256
STREAM_ERROR = 0
STREAM_BATCH = 1
STREAM_PREDICTIVE = 2


@dataclass(frozen=True)
class SamplerConfig:
    draws: int = 1000
    seed: int = 0
    rejection_cap: int = 1000
    fallback: str = "truncate"  # or "fail"
    threads: int = 1

    def __post_init__(self):
        if self.draws < 1:
            raise ValidationError("draws must be at least 1")
        if self.rejection_cap < 1:
            raise ValidationError("rejection_cap must be positive")
        if self.fallback not in ("truncate", "fail"):
            raise ValidationError(f"unknown fallback {self.fallback!r}")


@dataclass
class BatchDraws:
    name: str
    levels: NDArray  # (R, n_b, d)
    projector: NDArray
    sigma: Optional[NDArray] = None  # (R, d, d); None when withheld
    finite: Optional[NDArray] = None  # (R, d, d); None when nu_b = 0
    dof: float = 0.0
    rejections: int = 0
    truncations: int = 0
    withheld: Optional[str] = None

    @property
    def projected_levels(self) -> NDArray:
        """Levels with their flat-direction component removed."""
        return np.einsum("jk,rkd->rjd", self.projector, self.levels)


@dataclass
class PosteriorDraws:
    sigma_eps: NDArray  # (R, d, d)
    batches: Dict[str, BatchDraws]
    estimates: BatchEstimates
    config: SamplerConfig
    error_dof: float = 0.0
    order: Tuple[str, ...] = field(default=())

    @property
    def R(self) -> int:
        return self.sigma_eps.shape[0]

    def __getitem__(self, name: str) -> BatchDraws:
        return self.batches[name]


def sample_error_cov(scatter: ScatterSet, prior_scale: NDArray, prior_dof: float, rng: np.random.Generator, size=None) -> NDArray:
    d = scatter.residual.shape[0]
    dof = prior_dof + scatter.residual_dof
    if dof <= d - 1:
        raise InsufficientDof(f"error posterior dof {dof:g} <= d - 1", batch="error")
    return sample_inv_wishart(prior_scale + scatter.residual, dof, rng, size)


def sample_batch_cov(
    B: NDArray,
    prior_scale: NDArray,
    prior_dof: float,
    sigma_eps: NDArray,
    ratio: float,
    nu: int,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> Tuple[NDArray, int, int]:
    """Constrained inverse-Wishart draws of ``Sigma_b``, one per ``sigma_eps`` draw.

    Returns ``(sigma_b, rejections, truncations)``.
    """
    sigma_eps = np.asarray(sigma_eps, dtype=float)
    single = sigma_eps.ndim == 2
    if single:
        sigma_eps = sigma_eps[None]
    d = sigma_eps.shape[-1]
    dof = prior_dof + nu
    if dof <= d - 1:
        raise InsufficientDof(f"batch covariance dof {dof:g} <= d - 1")
    psi = symmetrize(prior_scale + B)
    shift = ratio * sigma_eps
    m = sigma_eps.shape[0]
    out = np.empty_like(sigma_eps)
    pending = np.arange(m)
    rejections = 0
    for _ in range(config.rejection_cap):
        U = sample_inv_wishart(psi, dof, rng, size=pending.size)
        diff = U - shift[pending]
        ok = pd_mask(diff)
        out[pending[ok]] = diff[ok]
        rejections += int((~ok).sum())
        pending = pending[~ok]
        if pending.size == 0:
            break
    truncations = 0
    if pending.size:
        if config.fallback == "fail":
            raise RejectionExhausted(f"{pending.size} draws still rejected after {config.rejection_cap} attempts")
        # multivariate analogue of max(0, V_b - V_estimation)
        U = sample_inv_wishart(psi, dof, rng, size=pending.size)
        out[pending] = clip_psd(U - shift[pending])
        truncations = int(pending.size)
    out = symmetrize(out)
    return (out[0] if single else out), rejections, truncations


def sample_batch_levels(
    estimate: NDArray,
    basis: NDArray,
    c: int,
    beta0: NDArray,
    sigma_eps: NDArray,
    sigma_b: Optional[NDArray],
    ratio: float,
    rng: np.random.Generator,
) -> NDArray:
    """Batch levels, one ``(n_b, d)`` matrix per error-covariance draw.

    In rotated coordinates ``theta = basis^T beta`` the first ``c`` (flat)
    coordinates follow ``N(theta_hat, v Sigma_eps)``. The free ones follow the
    product of ``N(theta_hat, v Sigma_eps)`` and ``N(beta0, Sigma_b)``:
    mean ``beta0 + K (theta_hat - beta0)`` and covariance ``(I - K) Sigma_b``
    with ``K = Sigma_b (Sigma_b + v Sigma_eps)^{-1}``, which equals
    ``P^{-1} m`` and ``P^{-1}`` for ``P = Sigma_b^{-1} + Sigma_eps^{-1} / v``
    and stays defined when a truncated ``Sigma_b`` is singular.
    ``sigma_b=None`` applies the flat law to every coordinate.
    """
    sigma_eps = np.asarray(sigma_eps, dtype=float)
    single = sigma_eps.ndim == 2
    if single:
        sigma_eps = sigma_eps[None]
        sigma_b = None if sigma_b is None else np.asarray(sigma_b)[None]
    R, d = sigma_eps.shape[0], sigma_eps.shape[-1]
    estimate = np.asarray(estimate, dtype=float).reshape(-1, d)
    n_b = estimate.shape[0]
    theta_hat = basis.T @ estimate
    z = rng.standard_normal((R, n_b, d))
    theta = np.empty((R, n_b, d))
    flat_c = n_b if sigma_b is None else c
    if flat_c:
        F = psd_factor(ratio * sigma_eps)
        theta[:, :flat_c] = theta_hat[:flat_c] + np.einsum("rab,rjb->rja", F, z[:, :flat_c])
    if flat_c < n_b:
        sigma_b = symmetrize(sigma_b)
        total = symmetrize(sigma_b + ratio * sigma_eps)
        Kt = np.linalg.solve(total, sigma_b)  # K^T
        cov = symmetrize(sigma_b - sigma_b @ Kt)
        F = psd_factor(cov)
        dev = theta_hat[flat_c:] - beta0
        mean = beta0 + np.einsum("rjb,rba->rja", np.broadcast_to(dev, (R,) + dev.shape), Kt)
        theta[:, flat_c:] = mean + np.einsum("rab,rjb->rja", F, z[:, flat_c:])
    levels = np.einsum("kj,rjd->rkd", basis, theta)
    return levels[0] if single else levels


def slope_ratio(x: NDArray, n_rep: int) -> float:
    """``v_b = 1 / (n_rep * sum_t x_t^2)`` for a slope batch on covariate grid ``x``."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (n_rep * float(np.sum(x ** 2)))


def sample_slope_batch(
    estimate: NDArray,
    x: NDArray,
    n_rep: int,
    basis: NDArray,
    c: int,
    prior: Tuple[NDArray, float, NDArray],
    sigma_eps: NDArray,
    config: SamplerConfig,
    rng: np.random.Generator,
    with_covariance: bool = True,
) -> Tuple[Optional[NDArray], NDArray]:
    """Slope-batch posterior: the constant-batch machinery with ``v_b`` from the covariate."""
    psi, kappa, beta0 = prior
    v = slope_ratio(x, n_rep)
    n_b = basis.shape[0]
    sigma_b = None
    if with_covariance and n_b - c >= 1:
        B = _scatter_free(estimate, basis, c, beta0)
        sigma_b, _, _ = sample_batch_cov(B, psi, kappa, sigma_eps, v, n_b - c, config, rng)
    levels = sample_batch_levels(estimate, basis, c, beta0, sigma_eps, sigma_b, v, rng)
    return sigma_b, levels


def _scatter_free(estimate, basis, c, beta0):
    free = basis[:, c:].T @ np.asarray(estimate, dtype=float) - beta0
    return symmetrize(free.T @ free)


def finite_pop_cov(levels: NDArray, C: NDArray = None, projector: NDArray = None) -> NDArray:
    """``(1/nu) * beta^T (I - C^T (C C^T)^{-1} C) beta`` for one or many level draws."""
    if projector is None:
        from .linalg import projector_complement

        projector = projector_complement(C)
    n_b = projector.shape[0]
    nu = int(round(np.trace(projector)))
    if nu < 1:
        raise ZeroDof("finite-population covariance needs nu >= 1")
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        levels = levels[:, None]
    if levels.shape[-2] != n_b:
        raise ValueError("levels and constraint dimensions disagree")
    S = np.einsum("...jd,jk,...ke->...de", levels, projector, levels) / nu
    return symmetrize(S)


def _chunk(model: ModelSpec, est: BatchEstimates, scat: ScatterSet, cfg: SamplerConfig, k: int, m: int, withheld):
    rng = rng_stream(cfg.seed, STREAM_ERROR, 0, k)
    seps = sample_error_cov(scat, model.error_scale, model.error_dof, rng, size=m)
    out = {}
    for bi, b in enumerate(model.batches):
        rng = rng_stream(cfg.seed, STREAM_BATCH, bi, k)
        sigma, rej, trunc = None, 0, 0
        if withheld[b.name] is None:
            try:
                sigma, rej, trunc = sample_batch_cov(
                    scat.batches[b.name], b.prior_scale, b.prior_dof, seps, b.ratio, b.nu, cfg, rng
                )
            except RejectionExhausted as exc:
                raise RejectionExhausted(f"batch {b.name!r}: {exc}", batch=b.name) from exc
        levels = sample_batch_levels(est.levels[b.name], b.basis, b.c, b.prior_mean, seps, sigma, b.ratio, rng)
        finite = finite_pop_cov(levels, projector=b.projector) if b.nu >= 1 else None
        out[b.name] = (sigma, levels, finite, rej, trunc)
    return seps, out


def _withheld_reason(model: ModelSpec, scat: ScatterSet) -> Dict[str, Optional[str]]:
    reasons = {}
    for b in model.batches:
        if b.nu < 1:
            reasons[b.name] = "no free levels (nu = 0)"
        elif not b.has_covariance:
            reasons[b.name] = f"insufficient dof: kappa + nu = {b.dof:g} <= d - 1"
        elif not pd_mask(b.prior_scale + scat.batches[b.name]):
            reasons[b.name] = "scale matrix Psi + B is singular"
        else:
            reasons[b.name] = None
    return reasons


def run_posterior(model: ModelSpec, dataset: Dataset, config: SamplerConfig = SamplerConfig()) -> PosteriorDraws:
    est = least_squares_decompose(dataset, model)
    scat = scatter_set(dataset, model, est)
    withheld = _withheld_reason(model, scat)
    R = config.draws
    sizes = [min(CHUNK, R - s) for s in range(0, R, CHUNK)]

    def work(k):
        return _chunk(model, est, scat, config, k, sizes[k], withheld)

    if config.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(k) for k in range(len(sizes))]

    seps = np.concatenate([p[0] for p in parts])
    batches = {}
    for b in model.batches:
        pieces = [p[1][b.name] for p in parts]
        sigma = None if withheld[b.name] else np.concatenate([q[0] for q in pieces])
        finite = np.concatenate([q[2] for q in pieces]) if b.nu >= 1 else None
        batches[b.name] = BatchDraws(
            name=b.name,
            levels=np.concatenate([q[1] for q in pieces]),
            projector=b.projector,
            sigma=sigma,
            finite=finite,
            dof=b.dof,
            rejections=sum(q[3] for q in pieces),
            truncations=sum(q[4] for q in pieces),
            withheld=withheld[b.name],
        )
    return PosteriorDraws(seps, batches, est, config, model.residual_dof, model.names)
