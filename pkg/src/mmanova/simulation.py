"""One-way simulation scenarios and coverage experiments.

Data follow ``Y_ij = mu + alpha_i + eps_ij`` in three dimensions with fixed
correlation structures; only the marginal scales of ``alpha`` change between
cases (1: batch variability greater than the errors, 2: less, 3: comparable).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .criteria import CRITERIA, criterion_value, freq_reference_interval
from .errors import InvalidSizes
from .linalg import rng_stream
from .model import Dataset, build_model, one_way_config
from .posterior import SamplerConfig, finite_pop_cov, run_posterior

STREAM_SCENARIO = 3

R_ALPHA = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.5], [0.1, 0.5, 1.0]])
RHO = 0.2
CASE_SCALES = {
    1: np.sqrt([2.0, 2.0, 3.0]),
    2: np.array([0.4, 0.4, 0.4]),
    3: np.array([1.0, 1.0, 1.0]),
}
PARAMETERS = ("superpopulation", "finite", "error")


def ar1_correlation(d: int, rho: float) -> NDArray:
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True)
class Scenario:
    case: int
    n_alpha: int
    n_eps: int
    sigma_alpha: NDArray
    sigma_eps: NDArray
    mu: NDArray
    seed: int
    alpha: NDArray = field(repr=False)  # realised levels, (n_alpha, d)

    @property
    def finite_alpha(self) -> NDArray:
        """Finite-population covariance of the realised levels."""
        return finite_pop_cov(self.alpha, C=np.ones((1, self.n_alpha)))


def derive_seed(seed: int, *keys: int) -> int:
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def generate_scenario(case: int, n_alpha: int, n_eps: int, seed: int, s_alpha: Optional[Sequence[float]] = None) -> Tuple[Scenario, Dataset]:
    if case not in CASE_SCALES:
        raise InvalidSizes(f"case must be 1, 2 or 3, got {case}")
    if n_alpha < 2 or n_eps < 2:
        raise InvalidSizes("need n_alpha >= 2 and n_eps >= 2")
    s = CASE_SCALES[case] if s_alpha is None else np.asarray(s_alpha, dtype=float)
    d = s.size
    sig_a = np.diag(s) @ R_ALPHA[:d, :d] @ np.diag(s)
    sig_e = ar1_correlation(d, RHO)
    mu = np.zeros(d)
    rng = rng_stream(seed, STREAM_SCENARIO)
    alpha = rng.multivariate_normal(np.zeros(d), sig_a, size=n_alpha, method="cholesky")
    eps = rng.multivariate_normal(np.zeros(d), sig_e, size=(n_alpha, n_eps), method="cholesky")
    y = (mu + alpha[:, None, :] + eps).reshape(n_alpha * n_eps, d)
    codes = np.repeat(np.arange(n_alpha), n_eps)
    labels = tuple(f"a{i + 1}" for i in range(n_alpha))
    data = Dataset(y, {"alpha": codes}, {}, tuple(f"y{k + 1}" for k in range(d)), {"alpha": labels})
    return Scenario(case, n_alpha, n_eps, sig_a, sig_e, mu, seed, alpha), data


@dataclass(frozen=True)
class CoverageCell:
    n_alpha: int
    parameter: str
    criterion: str
    coverage: float
    mean_width: float
    median_width: float
    S: int


@dataclass(frozen=True)
class CoverageReport:
    case: int
    n_eps: int
    S: int
    draws: int
    level: float
    seed: int
    cells: Tuple[CoverageCell, ...]
    reference: Tuple[CoverageCell, ...]  # classical intervals with alpha observed directly

    def cell(self, n_alpha: int, parameter: str, criterion: str) -> CoverageCell:
        for c in self.cells + self.reference:
            if (c.n_alpha, c.parameter, c.criterion) == (n_alpha, parameter, criterion):
                return c
        raise KeyError((n_alpha, parameter, criterion))


def fit_replicate(scenario: Scenario, data: Dataset, draws: int, level: float, seed: int) -> Dict[Tuple[str, str], Tuple[bool, float]]:
    """Interval hits and widths for one simulated dataset.

    Keys are ``(parameter, criterion)``; the ``"frequentist"`` parameter uses
    the classical pivots on the realised ``alpha`` levels.
    """
    model = build_model(one_way_config(), data)
    post = run_posterior(model, data, SamplerConfig(draws=draws, seed=seed))
    lo_p, hi_p = (1 - level) / 2, 1 - (1 - level) / 2
    mats = {
        "superpopulation": (post["alpha"].sigma, scenario.sigma_alpha),
        "finite": (post["alpha"].finite, scenario.finite_alpha),
        "error": (post.sigma_eps, scenario.sigma_eps),
    }
    out = {}
    for param, (draw, truth) in mats.items():
        for kind in CRITERIA:
            vals = criterion_value(draw, kind)
            lo, hi = np.quantile(vals, [lo_p, hi_p])
            t = criterion_value(truth, kind)
            out[(param, kind)] = (bool(lo <= t <= hi), float(hi - lo))
    a = scenario.alpha - scenario.alpha.mean(axis=0)
    U = a.T @ a
    if scenario.n_alpha - 1 >= U.shape[0]:
        for kind in CRITERIA:
            lo, hi = freq_reference_interval(U, scenario.n_alpha, kind, level)
            t = criterion_value(scenario.sigma_alpha, kind)
            out[("frequentist", kind)] = (bool(lo <= t <= hi), float(hi - lo))
    return out


def coverage_experiment(
    case: int,
    n_alpha_grid: Sequence[int],
    n_eps: int = 15,
    S: int = 100,
    R: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    threads: int = 1,
) -> CoverageReport:
    if S < 1:
        raise InvalidSizes("S must be at least 1")
    jobs = [(g, n_a, k) for g, n_a in enumerate(n_alpha_grid) for k in range(S)]

    def run(job):
        g, n_a, k = job
        scen, data = generate_scenario(case, n_a, n_eps, derive_seed(seed, 0, g, k))
        return fit_replicate(scen, data, R, level, derive_seed(seed, 1, g, k))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    cells: List[CoverageCell] = []
    reference: List[CoverageCell] = []
    for g, n_a in enumerate(n_alpha_grid):
        res = [r for (gg, _, _), r in zip(jobs, results) if gg == g]
        keys = list(res[0])
        for key in keys:
            hits = np.array([r[key][0] for r in res], dtype=float)
            widths = np.array([r[key][1] for r in res])
            cell = CoverageCell(int(n_a), key[0], key[1], float(hits.mean()), float(widths.mean()), float(np.median(widths)), S)
            (reference if key[0] == "frequentist" else cells).append(cell)
    return CoverageReport(case, n_eps, S, R, level, seed, tuple(cells), tuple(reference))
