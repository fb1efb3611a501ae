"""Dense symmetric matrix primitives and the samplers built on them.

Everything here works on plain ``numpy`` arrays. Functions that take a stack of
matrices accept shape ``(..., d, d)`` and broadcast over the leading axes.
"""

from typing import NamedTuple, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from .errors import AllZero, InvalidDof, NonConvergence, NotPositiveDefinite

PD_TOL = 1e-10
RANK_TOL = 1e-9

Size = Union[None, int, Tuple[int, ...]]


class EigenDecomposition(NamedTuple):
    values: NDArray  # descending
    vectors: NDArray  # columns are orthonormal eigenvectors


def symmetrize(a: NDArray) -> NDArray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, stream...)``.

    Identical keys always give identical sequences; distinct keys give
    statistically independent streams (``SeedSequence`` spawn keys).
    """
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(s) for s in stream))
    return np.random.default_rng(seq)


def _pivot_scale(a: NDArray) -> NDArray:
    d = a.shape[-1]
    return np.trace(a, axis1=-2, axis2=-1) / d


def cholesky_pivots(a: NDArray) -> Tuple[NDArray, NDArray]:
    """Vectorised Cholesky returning ``(L, pivots)`` for a stack of matrices.

    ``pivots[..., j]`` is the quantity whose square root becomes ``L[..., j, j]``.
    A non-positive pivot is clamped to zero so the loop can continue; callers
    decide what a small pivot means.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[-1]
    L = np.zeros_like(a)
    piv = np.zeros(a.shape[:-1])
    for j in range(d):
        s = a[..., j, j] - np.einsum("...k,...k->...", L[..., j, :j], L[..., j, :j])
        piv[..., j] = s
        ljj = np.sqrt(np.maximum(s, 0.0))
        L[..., j, j] = ljj
        if j + 1 < d:
            num = a[..., j + 1:, j] - np.einsum("...ik,...k->...i", L[..., j + 1:, :j], L[..., j, :j])
            with np.errstate(divide="ignore", invalid="ignore"):
                col = np.where(ljj[..., None] > 0, num / ljj[..., None], 0.0)
            L[..., j + 1:, j] = col
    return L, piv


def pd_mask(a: NDArray, tol: float = PD_TOL) -> NDArray:
    """Batched :func:`is_pd`."""
    a = symmetrize(a)
    scale = _pivot_scale(a)
    _, piv = cholesky_pivots(a)
    return (scale > 0) & np.all(piv > tol * np.abs(scale)[..., None], axis=-1)


def is_pd(a: NDArray, tol: float = PD_TOL) -> bool:
    """True iff every Cholesky pivot exceeds ``tol * trace(a)/d``."""
    return bool(pd_mask(a, tol))


def cholesky_lower(a: NDArray, tol: float = PD_TOL) -> NDArray:
    a = symmetrize(a)
    scale = _pivot_scale(a)
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    piv = np.diagonal(L, axis1=-2, axis2=-1) ** 2
    if np.any(scale <= 0) or np.any(piv <= tol * np.abs(scale)[..., None]):
        raise NotPositiveDefinite("Cholesky pivot below tolerance")
    return L


def sym_eigen(a: NDArray) -> EigenDecomposition:
    a = symmetrize(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence("symmetric eigensolver did not converge") from exc
    return EigenDecomposition(w[..., ::-1], v[..., ::-1])


def pseudo_det(a: NDArray, rank_tol: float = RANK_TOL) -> float:
    """Product of the eigenvalues above ``rank_tol * max eigenvalue``."""
    w = sym_eigen(a).values
    if w[0] <= 0:
        raise AllZero("no positive eigenvalues")
    keep = w[w > rank_tol * w[0]]
    return float(np.prod(keep))


def clip_psd(a: NDArray) -> NDArray:
    """Project onto the PSD cone by zeroing negative eigenvalues."""
    w, v = np.linalg.eigh(symmetrize(a))
    w = np.maximum(w, 0.0)
    return symmetrize(np.einsum("...ik,...k,...jk->...ij", v, w, v))


def psd_factor(a: NDArray) -> NDArray:
    """A square root ``F`` with ``F F^T = a`` valid for singular PSD input."""
    w, v = np.linalg.eigh(symmetrize(a))
    return v * np.sqrt(np.maximum(w, 0.0))[..., None, :]


def _shape(size: Size) -> Tuple[int, ...]:
    if size is None:
        return ()
    if isinstance(size, (int, np.integer)):
        return (int(size),)
    return tuple(size)


def _bartlett(d: int, dof: float, rng: np.random.Generator, shape: Tuple[int, ...]) -> NDArray:
    # lower-triangular A with A A^T ~ W_d(I, dof)
    A = np.zeros(shape + (d, d))
    chi = rng.chisquare(dof - np.arange(d), size=shape + (d,))
    A[..., np.arange(d), np.arange(d)] = np.sqrt(chi)
    rows, cols = np.tril_indices(d, -1)
    if rows.size:
        A[..., rows, cols] = rng.standard_normal(shape + (rows.size,))
    return A


def sample_wishart(sigma: NDArray, dof: float, rng: np.random.Generator, size: Size = None) -> NDArray:
    sigma = symmetrize(sigma)
    d = sigma.shape[-1]
    if dof <= d - 1:
        raise InvalidDof(f"Wishart dof {dof} must exceed d - 1 = {d - 1}")
    L = cholesky_lower(sigma)
    LA = L @ _bartlett(d, dof, rng, _shape(size))
    return symmetrize(LA @ np.swapaxes(LA, -1, -2))


def sample_inv_wishart(psi: NDArray, dof: float, rng: np.random.Generator, size: Size = None) -> NDArray:
    """Draw from ``W^{-1}(psi, dof)`` (mean ``psi / (dof - d - 1)``).

    Bartlett factor ``A`` of a ``W(psi^{-1}, dof)`` draw; with ``psi = C C^T``
    the inverse is ``(C A^{-T})(C A^{-T})^T``.
    """
    psi = symmetrize(psi)
    d = psi.shape[-1]
    if dof <= d - 1:
        raise InvalidDof(f"inverse-Wishart dof {dof} must exceed d - 1 = {d - 1}")
    C = cholesky_lower(psi)
    A = _bartlett(d, dof, rng, _shape(size))
    T = C @ np.swapaxes(np.linalg.inv(A), -1, -2)
    return symmetrize(T @ np.swapaxes(T, -1, -2))


def sample_mvn(mean: NDArray, cov: NDArray, rng: np.random.Generator, size: Size = None) -> NDArray:
    mean = np.asarray(mean, dtype=float)
    L = cholesky_lower(cov)
    if mean.shape[-1] != L.shape[-1]:
        raise ValueError("mean and covariance dimensions disagree")
    z = rng.standard_normal(_shape(size) + (L.shape[-1],))
    return mean + z @ L.T


def quadratic_form_identity(x: NDArray, s: NDArray, t: NDArray, U: NDArray, V: NDArray) -> Tuple[float, float]:
    """Both sides of the completing-the-square identity for two Gaussian kernels.

    Returns ``(lhs, rhs)`` with
    ``lhs = (x-s)^T U^{-1} (x-s) + (x-t)^T V^{-1} (x-t)`` and
    ``rhs = tr((U+V)^{-1}(s-t)(s-t)^T) + (x - P^{-1}m)^T P (x - P^{-1}m)``,
    ``P = U^{-1} + V^{-1}``, ``m = U^{-1}s + V^{-1}t``.
    This is the algebra behind the shrinkage law for penalised batch levels.
    """
    Ui = np.linalg.inv(U)
    Vi = np.linalg.inv(V)
    lhs = (x - s) @ Ui @ (x - s) + (x - t) @ Vi @ (x - t)
    P = Ui + Vi
    m = Ui @ s + Vi @ t
    r = x - np.linalg.solve(P, m)
    st = s - t
    rhs = np.trace(np.linalg.solve(U + V, np.outer(st, st))) + r @ P @ r
    return float(lhs), float(rhs)


def projector_complement(C: NDArray) -> NDArray:
    """``I - C^T (C C^T)^{-1} C``: orthogonal projector onto ``null(C)``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = C.shape[1]
    if C.shape[0] == 0:
        return np.eye(n)
    return symmetrize(np.eye(n) - C.T @ np.linalg.solve(C @ C.T, C))

