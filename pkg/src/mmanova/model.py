"""Design declaration: datasets, batches, flat-direction constraints, priors.

A *batch* is any additive term of the model. Constant batches (intercept, main
effects, interactions) contribute one level vector per cell of their factors;
slope batches multiply the level vector by a per-observation covariate. Every
batch is described by a level map ``j_i`` (observation -> level), the covariate
column ``x_i`` (ones for constant batches) and a constraint matrix ``C`` whose
rows span the directions left flat by the prior.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, product
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DegenerateBasis,
    InsufficientDof,
    InvalidDims,
    NonOrthogonal,
    Unbalanced,
    ValidationError,
)
from .linalg import projector_complement, symmetrize

KINDS = ("intercept", "main", "interaction", "slope")
ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class Dataset:
    """``n`` observations of a ``d``-dimensional response.

    Factor columns hold 0-based contiguous level codes; ``factor_labels`` maps
    them back to the original labels.
    """

    responses: NDArray
    factors: Mapping[str, NDArray] = field(default_factory=dict)
    covariates: Mapping[str, NDArray] = field(default_factory=dict)
    response_names: Tuple[str, ...] = ()
    factor_labels: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.responses, dtype=float))
        if y.shape[0] == 1 and np.ndim(self.responses) == 1:
            y = y.T
        if not np.all(np.isfinite(y)):
            raise ValidationError("responses contain missing or non-finite values")
        y.setflags(write=False)
        object.__setattr__(self, "responses", y)
        n = y.shape[0]
        facs = {}
        labels = dict(self.factor_labels)
        for name, codes in self.factors.items():
            codes = np.asarray(codes)
            if codes.shape != (n,):
                raise ValidationError(f"factor {name!r} has {codes.size} entries, expected {n}")
            if codes.dtype.kind not in "iu":
                raise ValidationError(f"factor {name!r} must hold integer level codes")
            k = int(codes.max()) + 1 if n else 0
            if codes.min() < 0 or np.unique(codes).size != k:
                raise ValidationError(f"factor {name!r} levels are not contiguous from 0")
            codes = codes.astype(np.int64)
            codes.setflags(write=False)
            facs[name] = codes
            labels.setdefault(name, tuple(str(i + 1) for i in range(k)))
        covs = {}
        for name, x in self.covariates.items():
            x = np.asarray(x, dtype=float)
            if x.shape != (n,) or not np.all(np.isfinite(x)):
                raise ValidationError(f"covariate {name!r} must be {n} finite values")
            x.setflags(write=False)
            covs[name] = x
        object.__setattr__(self, "factors", facs)
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "factor_labels", labels)
        if not self.response_names:
            object.__setattr__(self, "response_names", tuple(f"y{k + 1}" for k in range(y.shape[1])))

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def d(self) -> int:
        return self.responses.shape[1]

    def n_levels(self, factor: str) -> int:
        return len(self.factor_labels[factor])

    @classmethod
    def from_labels(cls, responses, factors: Mapping[str, Sequence] = (), covariates=(), response_names=()):
        """Build from raw factor labels, coded in first-appearance order."""
        codes, labels = {}, {}
        for name, raw in dict(factors).items():
            seen: Dict[str, int] = {}
            col = []
            for v in raw:
                col.append(seen.setdefault(str(v), len(seen)))
            codes[name] = np.array(col, dtype=np.int64)
            labels[name] = tuple(seen)
        return cls(np.asarray(responses, dtype=float), codes, dict(covariates), tuple(response_names), labels)


def flat_direction_constraints(kind: str, dims) -> NDArray:
    """Constraint matrix whose rows span the flat (unpenalised) directions.

    ``dims`` is the tuple of factor level counts of the batch (an int is
    accepted for one factor). Main effects and one-factor slopes get a single
    sum-to-zero row; interactions get every marginal sum, reduced to full row
    rank; factor-free batches (intercept, global slopes) are entirely flat.
    """
    if kind not in KINDS:
        raise InvalidDims(f"unknown batch kind {kind!r}")
    dims = (int(dims),) if np.isscalar(dims) else tuple(int(k) for k in dims)
    if any(k < 1 for k in dims):
        raise InvalidDims(f"level counts must be positive, got {dims}")
    if kind == "intercept":
        if dims not in ((), (1,)):
            raise InvalidDims("intercept batch has exactly one level")
        return np.ones((1, 1))
    if kind == "main" and len(dims) != 1:
        raise InvalidDims("main effect needs exactly one factor")
    if kind == "interaction" and len(dims) < 2:
        raise InvalidDims("interaction needs at least two factors")
    if len(dims) == 0:
        return np.ones((1, 1))
    if len(dims) == 1:
        return np.ones((1, dims[0]))
    rows = []
    for f in range(len(dims)):
        others = [range(k) for i, k in enumerate(dims) if i != f]
        for rest in product(*others):
            mask = np.zeros(dims)
            idx = list(rest)
            idx.insert(f, slice(None))
            mask[tuple(idx)] = 1.0
            rows.append(mask.ravel())
    # keep a linearly independent subset of the marginal-sum rows
    kept: list = []
    rank = 0
    for r in rows:
        trial = np.array(kept + [r])
        new_rank = np.linalg.matrix_rank(trial)
        if new_rank > rank:
            kept.append(r)
            rank = new_rank
    return np.array(kept)


def orthogonalize_covariate(x: NDArray, basis: NDArray) -> NDArray:
    """Gram-Schmidt residual of ``x`` against the columns of ``basis``."""
    x = np.asarray(x, dtype=float)
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    if basis.shape[1] == 0:
        return x.copy()
    q, r = np.linalg.qr(basis)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        raise DegenerateBasis("basis columns are linearly dependent")
    out = x - q @ (q.T @ x)
    # second pass removes the rounding left by the first
    out -= q @ (q.T @ out)
    return out


@dataclass(frozen=True, eq=False)
class BatchSpec:
    name: str
    kind: str
    factors: Tuple[str, ...]
    dims: Tuple[int, ...]
    level_map: NDArray
    x: NDArray
    constraint: NDArray
    prior_scale: NDArray
    prior_dof: float
    prior_mean: NDArray
    covariate: Optional[str] = None
    transform: Optional[str] = None
    covariate_map: Mapping[float, float] = field(default_factory=dict)

    @property
    def n_b(self) -> int:
        return int(np.prod(self.dims)) if self.dims else 1

    @property
    def c(self) -> int:
        return self.constraint.shape[0]

    @property
    def nu(self) -> int:
        return self.n_b - self.c

    @property
    def is_global(self) -> bool:
        """No factors: a single, entirely flat level (overall mean or global slope)."""
        return not self.factors

    @property
    def is_slope(self) -> bool:
        return self.covariate is not None

    @property
    def ratio(self) -> float:
        """Estimation-variance factor ``v_b``: ``Var(level estimate) = v_b * Sigma_eps``.

        ``n_b / n`` for constant batches; ``1 / (n_rep * sum_t x_t^2)`` for slopes.
        """
        return 1.0 / float(np.sum(self.x[self.level_map == 0] ** 2))

    @property
    def dof(self) -> float:
        return self.prior_dof + self.nu

    @property
    def d(self) -> int:
        return self.prior_scale.shape[0]

    @property
    def has_covariance(self) -> bool:
        return self.nu >= 1 and self.dof > self.d - 1

    @cached_property
    def projector(self) -> NDArray:
        if self.is_global:
            return np.zeros((1, 1))
        return projector_complement(self.constraint)

    @cached_property
    def basis(self) -> NDArray:
        """Orthonormal eigenbasis of the projector: ``c`` flat columns, then ``nu`` free ones."""
        w, v = np.linalg.eigh(self.projector)
        order = np.argsort(w, kind="stable")
        return v[:, order]

    def design(self) -> NDArray:
        """``n x n_b`` matrix with ``X[i, j] = x_i [j_i == j]``."""
        X = np.zeros((self.level_map.size, self.n_b))
        X[np.arange(self.level_map.size), self.level_map] = self.x
        return X

    def effect_columns(self) -> NDArray:
        """Columns spanning the part of the design this batch owns."""
        X = self.design()
        return X if self.is_global else X @ self.projector

    def covariate_value(self, raw: float) -> float:
        """Map a raw covariate value onto the transformed scale used in the fit."""
        if not self.is_slope:
            return 1.0
        key = float(raw)
        if key in self.covariate_map:
            return self.covariate_map[key]
        if self.transform == "center":
            shift = next(iter(self.covariate_map.items()))
            return key - (shift[0] - shift[1])
        if self.transform in (None, "none"):
            return key
        raise ValidationError(
            f"covariate value {raw} was not observed; the orthogonalized covariate of "
            f"batch {self.name!r} is only defined on observed values"
        )


@dataclass(frozen=True, eq=False)
class ModelSpec:
    d: int
    n: int
    batches: Tuple[BatchSpec, ...]
    error_scale: NDArray
    error_dof: float
    response_names: Tuple[str, ...] = ()

    @property
    def B(self) -> int:
        return len(self.batches)

    @property
    def residual_dof(self) -> float:
        """Error posterior dof: ``kappa_eps + n - sum_b n_b``."""
        return self.error_dof + self.n - sum(b.n_b for b in self.batches)

    @property
    def rank(self) -> int:
        return sum(b.n_b if b.is_global else b.nu for b in self.batches)

    def batch(self, name: str) -> BatchSpec:
        for b in self.batches:
            if b.name == name:
                return b
        raise KeyError(name)

    def index(self, name: str) -> int:
        return [b.name for b in self.batches].index(name)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(b.name for b in self.batches)


def _prior(prior: Optional[Mapping], d: int, what: str):
    prior = dict(prior or {})
    psi = prior.get("psi", 0.0)
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 0:
        psi = float(psi) * np.eye(d)
    if psi.shape != (d, d):
        raise ValidationError(f"{what}: prior psi must be {d}x{d}")
    psi = symmetrize(psi)
    if np.linalg.eigvalsh(psi).min() < -1e-12 * max(1.0, np.abs(psi).max()):
        raise ValidationError(f"{what}: prior psi must be positive semidefinite")
    kappa = float(prior.get("kappa", 0.0))
    if kappa < 0:
        raise ValidationError(f"{what}: prior kappa must be nonnegative")
    beta0 = np.asarray(prior.get("beta0", np.zeros(d)), dtype=float)
    if beta0.ndim == 0:
        beta0 = np.full(d, float(beta0))
    if beta0.shape != (d,):
        raise ValidationError(f"{what}: prior beta0 must have {d} entries")
    return psi, kappa, beta0


def _infer_kind(factors, covariate) -> str:
    if covariate is not None:
        return "slope"
    return {0: "intercept", 1: "main"}.get(len(factors), "interaction")


def _check_balance(dataset: Dataset, factors: Sequence[str]) -> None:
    if not factors:
        return
    dims = tuple(dataset.n_levels(f) for f in factors)
    cells = np.ravel_multi_index(tuple(dataset.factors[f] for f in factors), dims)
    counts = np.bincount(cells, minlength=int(np.prod(dims)))
    target = int(np.bincount(counts).argmax()) if counts.max() > 0 else 0
    target = max(target, 1)
    bad = np.flatnonzero(counts != target)
    if bad.size:
        idx = np.unravel_index(int(bad[0]), dims)
        cell = ", ".join(f"{f}={dataset.factor_labels[f][k]}" for f, k in zip(factors, idx))
        raise Unbalanced(
            f"unbalanced design: cell ({cell}) has {int(counts[bad[0]])} observations, expected {target}"
        )


def build_model(config: Mapping, dataset: Dataset) -> ModelSpec:
    """Validate a model configuration against a dataset.

    ``config`` follows the JSON model schema (``batches`` plus optional
    ``error_prior``; run settings such as ``draws`` are ignored here). Slope
    covariates are centred by default or Gram-Schmidt orthogonalised against
    all earlier batches with ``transform="orthogonalize"``.
    """
    d, n = dataset.d, dataset.n
    raw_batches = list(config.get("batches", ()))
    if not raw_batches:
        raise ValidationError("model needs at least one batch")
    used = sorted({f for b in raw_batches for f in b.get("factors", ())})
    for f in used:
        if f not in dataset.factors:
            raise ValidationError(f"factor {f!r} not present in dataset")
    _check_balance(dataset, used)

    batches = []
    prior_cols = []
    seen_names = set()
    for spec in raw_batches:
        name = spec["name"]
        if name in seen_names or name == "error":
            raise ValidationError(f"duplicate or reserved batch name {name!r}")
        seen_names.add(name)
        factors = tuple(spec.get("factors", ()))
        if len(set(factors)) != len(factors):
            raise ValidationError(f"batch {name!r} repeats a factor")
        covariate = spec.get("covariate")
        kind = spec.get("kind") or _infer_kind(factors, covariate)
        if kind != _infer_kind(factors, covariate) and not (kind == "slope" and covariate):
            raise ValidationError(f"batch {name!r}: kind {kind!r} inconsistent with its factors/covariate")
        if kind == "slope" and covariate is None:
            raise ValidationError(f"slope batch {name!r} needs a covariate")
        dims = tuple(dataset.n_levels(f) for f in factors)
        level_map = (
            np.ravel_multi_index(tuple(dataset.factors[f] for f in factors), dims)
            if factors
            else np.zeros(n, dtype=np.int64)
        ).astype(np.int64)
        transform = None
        cmap: Dict[float, float] = {}
        if covariate is None:
            x = np.ones(n)
        else:
            if covariate not in dataset.covariates:
                raise ValidationError(f"covariate {covariate!r} not present in dataset")
            raw = dataset.covariates[covariate]
            transform = spec.get("transform", "center")
            if transform == "center":
                x = raw - raw.mean()
            elif transform == "orthogonalize":
                basis = np.hstack(prior_cols) if prior_cols else np.ones((n, 1))
                u, s, _ = np.linalg.svd(basis, full_matrices=False)
                keep = s > 1e-10 * s[0]
                x = orthogonalize_covariate(raw, u[:, keep])
            elif transform == "none":
                x = raw.astype(float).copy()
            else:
                raise ValidationError(f"batch {name!r}: unknown transform {transform!r}")
            for r_, t_ in zip(raw, x):
                r_ = float(r_)
                if r_ in cmap and abs(cmap[r_] - t_) > 1e-8 * max(1.0, abs(t_)):
                    raise NonOrthogonal(
                        f"batch {name!r}: transformed covariate is not a function of the raw value"
                    )
                cmap.setdefault(r_, float(t_))
        x.setflags(write=False)
        level_map.setflags(write=False)
        C = flat_direction_constraints(kind if kind != "slope" else "slope", dims)
        psi, kappa, beta0 = _prior(spec.get("prior"), d, f"batch {name!r}")
        b = BatchSpec(name, kind, factors, dims, level_map, x, C, psi, kappa, beta0, covariate, transform, cmap)
        prior_cols.append(b.design())
        batches.append(b)

    _check_structure(batches)
    eps_psi, eps_kappa, _ = _prior(config.get("error_prior"), d, "error")
    model = ModelSpec(d, n, tuple(batches), eps_psi, eps_kappa, dataset.response_names)
    if model.residual_dof <= d - 1:
        raise InsufficientDof(
            f"error covariance posterior improper: dof {model.residual_dof:g} <= d - 1 = {d - 1}", batch="error"
        )
    return model


def _check_structure(batches: Sequence[BatchSpec]) -> None:
    keyed = {(frozenset(b.factors), b.covariate) for b in batches}
    for b in batches:
        for k in range(len(b.factors)):
            for sub in combinations(b.factors, k):
                if (frozenset(sub), b.covariate) not in keyed:
                    lower = "+".join(sub) or ("intercept" if b.covariate is None else f"global slope on {b.covariate}")
                    raise NonOrthogonal(f"batch {b.name!r} needs lower-order batch ({lower}) to absorb its flat directions")
        sums = np.bincount(b.level_map, weights=b.x ** 2, minlength=b.n_b)
        if sums.min() <= 0 or np.ptp(sums) > 1e-8 * sums.max():
            raise NonOrthogonal(f"batch {b.name!r}: covariate energy differs across levels")
    cols = [b.effect_columns() for b in batches]
    norms = [np.linalg.norm(z) for z in cols]
    for i, j in combinations(range(len(batches)), 2):
        cross = np.linalg.norm(cols[i].T @ cols[j])
        if cross > ORTHO_TOL * max(norms[i] * norms[j], 1e-300):
            raise NonOrthogonal(f"batches {batches[i].name!r} and {batches[j].name!r} are not orthogonal")


def one_way_config(factor: str = "alpha", name: str = "alpha") -> dict:
    """Intercept plus one main effect."""
    return {"batches": [{"name": "mu", "kind": "intercept"}, {"name": name, "kind": "main", "factors": [factor]}]}
