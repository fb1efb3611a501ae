"""Independent reference computations used by the tests.

Nothing here imports the package's estimation or posterior code: least squares
is a dense KKT solve, inverse-Wisharts come from scipy, and the Gibbs sampler
works on the full Kronecker-structured level posterior.
"""

import numpy as np
from scipy import stats


def indicator(codes, k):
    Z = np.zeros((codes.size, k))
    Z[np.arange(codes.size), codes] = 1.0
    return Z


def kkt_one_way(y, codes, n_alpha):
    """Constrained least squares for ``y = 1 mu + Z alpha`` with ``sum(alpha) = 0``.

    Returns ``(mu, alpha, residuals)``.
    """
    n, d = y.shape
    X = np.hstack([np.ones((n, 1)), indicator(codes, n_alpha)])
    A = np.zeros((1, n_alpha + 1))
    A[0, 1:] = 1.0
    K = np.block([[X.T @ X, A.T], [A, np.zeros((1, 1))]])
    rhs = np.vstack([X.T @ y, np.zeros((1, d))])
    sol = np.linalg.solve(K, rhs)
    beta = sol[: n_alpha + 1]
    return beta[0], beta[1:], y - X @ beta


def kkt_two_way(y, a, b, na, nb):
    """Dense constrained fit of intercept + two main effects + interaction."""
    n, d = y.shape
    Za, Zb = indicator(a, na), indicator(b, nb)
    Zg = indicator(a * nb + b, na * nb)
    X = np.hstack([np.ones((n, 1)), Za, Zb, Zg])
    p = X.shape[1]
    rows = []
    r = np.zeros(p); r[1: 1 + na] = 1; rows.append(r)
    r = np.zeros(p); r[1 + na: 1 + na + nb] = 1; rows.append(r)
    off = 1 + na + nb
    for i in range(na):
        r = np.zeros(p); r[off + i * nb: off + (i + 1) * nb] = 1; rows.append(r)
    for j in range(nb):
        r = np.zeros(p); r[off + j: off + na * nb: nb] = 1; rows.append(r)
    A = np.array(rows)
    # drop one redundant interaction row so the KKT matrix is nonsingular
    A = np.delete(A, 2 + na + nb - 1, axis=0)
    m = A.shape[0]
    K = np.block([[X.T @ X, A.T], [A, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.vstack([X.T @ y, np.zeros((m, d))]))
    beta = sol[:p]
    return {
        "mu": beta[:1],
        "a": beta[1: 1 + na],
        "b": beta[1 + na: off],
        "ab": beta[off:p],
        "resid": y - X @ beta,
    }


def _truncated_iw(scale, dof, accept, rng, cap=10_000):
    """One draw per row of ``accept``'s argument, rejecting until ``accept(X)`` holds."""
    out = None
    todo = None
    for _ in range(cap):
        m = accept.size if todo is None else int(todo.sum())
        x = stats.invwishart.rvs(df=dof, scale=scale, size=m, random_state=rng).reshape(m, *scale.shape)
        if out is None:
            out = x
            todo = ~accept.check(x, np.arange(m))
        else:
            idx = np.flatnonzero(todo)
            out[idx] = x
            ok = accept.check(x, idx)
            todo[idx[ok]] = False
        if not todo.any():
            return out
    raise RuntimeError("truncated inverse-Wishart rejection did not finish")


class _PDGap:
    """Accepts ``X`` when ``sign * (other - v * X)`` (or its mirror) is PD."""

    def __init__(self, other, v, upper):
        self.other, self.v, self.upper = other, v, upper
        self.size = other.shape[0]

    def check(self, x, idx):
        if self.upper:  # X is U: need X - v * other PD
            gap = x - self.v * self.other[idx]
        else:  # X is Sigma_eps: need other - v * X PD
            gap = self.other[idx] - self.v * x
        return np.all(np.linalg.eigvalsh(gap) > 0, axis=-1)


def gibbs_one_way(y, codes, n_alpha, chains=2000, iters=60, burn=20, seed=0):
    """Two-block Gibbs sampler for the one-way model with noninformative priors.

    Targets ``p(Sigma_eps, U) ~ W^-1(Sigma_eps; E, n - 1 - n_alpha)
    W^-1(U; B, n_alpha - 1) 1{U - v Sigma_eps > 0}`` with ``Sigma_alpha = U - v
    Sigma_eps``, then draws levels from their joint Gaussian conditional using
    the dense Kronecker precision. Chains run in parallel (vectorised).

    Returns dict of arrays ``(chains, iters - burn, ...)``: sigma_eps,
    sigma_alpha, finite_alpha.
    """
    rng = np.random.default_rng(seed)
    n, d = y.shape
    _, alpha_hat, resid = kkt_one_way(y, codes, n_alpha)
    E = resid.T @ resid
    B = alpha_hat.T @ alpha_hat
    v = n_alpha / n
    nu_e = n - 1 - n_alpha
    nu_a = n_alpha - 1
    P = np.eye(n_alpha) - 1.0 / n_alpha

    seps = stats.invwishart.rvs(df=nu_e, scale=E, size=chains, random_state=rng).reshape(chains, d, d)
    keep_e, keep_a, keep_f = [], [], []
    for t in range(iters):
        U = _truncated_iw(B, nu_a, _PDGap(seps, v, upper=True), rng)
        seps = _truncated_iw(E, nu_e, _PDGap(U, v, upper=False), rng)
        sig_a = U - v * seps
        if t < burn:
            continue
        # levels: precision (1/v) I (x) Se^-1 + P (x) Sa^-1 on vec(alpha) row-major
        Sei = np.linalg.inv(seps)
        Sai = np.linalg.inv(sig_a)
        m = n_alpha * d
        Q = (
            np.einsum("ij,ckl->cikjl", np.eye(n_alpha), Sei) / v
            + np.einsum("ij,ckl->cikjl", P, Sai)
        ).reshape(chains, m, m)
        h = (np.einsum("ik,clk->cil", alpha_hat, Sei) / v).reshape(chains, m)
        L = np.linalg.cholesky(Q)
        mean = np.linalg.solve(Q, h[..., None])[..., 0]
        z = np.linalg.solve(np.swapaxes(L, -1, -2), rng.standard_normal((chains, m, 1)))[..., 0]
        a = (mean + z).reshape(chains, n_alpha, d)
        fin = np.einsum("cik,ij,cjl->ckl", a, P, a) / nu_a
        keep_e.append(seps.copy())
        keep_a.append(sig_a.copy())
        keep_f.append(fin)
    stack = lambda xs: np.stack(xs, axis=1)
    return {"error": stack(keep_e), "superpopulation": stack(keep_a), "finite": stack(keep_f)}


def group_quantile_se(values, probs, groups):
    """Quantiles of all values and their batch-means standard errors.

    ``values`` has shape ``(groups * m, ...)``; the leading axis is split into
    ``groups`` contiguous blocks.
    """
    values = np.asarray(values)
    flat = values.reshape(values.shape[0], -1)
    q = np.quantile(flat.ravel(), probs)
    blocks = np.array_split(flat, groups, axis=0)
    qs = np.array([np.quantile(b.ravel(), probs) for b in blocks])
    se = qs.std(axis=0, ddof=1) / np.sqrt(groups)
    return q, se
