"""Dense Gaussian linear algebra: Cholesky, Schur-complement conditioning,
seeded sampling, exact log-likelihood and plug-in cokriging.

Joint vectors follow the component-major vec(Y) layout of
:mod:`gppcorr.covmodels`: entry (component j, location a) is ``j * n + a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .covmodels import DEFAULT_MAX_NQ, CrossCovModel, LocationSet, _as_points, build_joint_cov

__all__ = [
    "NotPositiveDefiniteError",
    "FieldSample",
    "ConditionalLaw",
    "chol",
    "condition",
    "make_rng",
    "sample_field",
    "sample_replicates",
    "loglik",
    "predict",
]

LOG_2PI = math.log(2.0 * math.pi)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky failed; ``pivot`` is the zero-based index of the failing leading minor."""

    def __init__(self, pivot: int, what: str = "matrix"):
        self.pivot = pivot
        super().__init__(f"{what} is not positive definite (Cholesky failed at pivot {pivot})")


@dataclass(frozen=True, eq=False)
class FieldSample:
    """n x q observations bound to a location set; ``mask`` is True where observed."""

    values: np.ndarray
    locs: LocationSet
    mask: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.shape[0] != self.locs.n:
            raise ValueError(f"{v.shape[0]} rows of values for {self.locs.n} locations")
        if self.mask is None:
            m = np.ones(v.shape, dtype=bool)
        else:
            m = np.array(self.mask, dtype=bool)
            if m.shape != v.shape:
                raise ValueError("mask shape must match values")
        if not np.all(np.isfinite(v[m])):
            raise ValueError("observed values must be finite")
        v = np.where(m, v, np.nan)
        for a in (v, m):
            a.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    @property
    def fully_observed(self) -> bool:
        return bool(self.mask.all())

    def observed_index(self) -> np.ndarray:
        """Positions in vec(Y) of the observed entries, in component-major order."""
        return np.flatnonzero(self.mask.T.ravel())

    def observed_vector(self) -> np.ndarray:
        return self.values.T.ravel()[self.observed_index()]

    def with_mask(self, mask) -> "FieldSample":
        return FieldSample(np.where(self.mask, self.values, 0.0), self.locs, np.asarray(mask) & self.mask)


@dataclass(frozen=True, eq=False)
class ConditionalLaw:
    """Gaussian law of the targets given the conditioning values.

    ``targets`` lists (component, row) pairs, or joint indices for
    :func:`condition`; ``clamped`` counts diagonal entries raised to 0.
    """

    mean: np.ndarray | None
    cov: np.ndarray
    targets: tuple
    clamped: int = 0

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.cov), 0.0))

    def corr(self) -> np.ndarray:
        s = self.sd
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.cov / np.outer(s, s)


def chol(a, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor via LAPACK dpotrf.

    Raises :class:`NotPositiveDefiniteError` naming the failing pivot.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("Cholesky needs a square matrix")
    scale = max(np.abs(a).max(), np.finfo(float).tiny) if a.size else 1.0
    if a.size and np.abs(a - a.T).max() > 1e-10 * scale:
        raise ValueError(f"{what} is not symmetric")
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1, what)
    if info < 0:  # pragma: no cover
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return c


def _clamp_psd(cov: np.ndarray) -> tuple[np.ndarray, int]:
    cov = 0.5 * (cov + cov.T)
    d = np.diag(cov).copy()
    neg = d < 0
    if neg.any():
        cov = cov.copy()
        idx = np.flatnonzero(neg)
        cov[idx, :] = 0.0
        cov[:, idx] = 0.0
    return cov, int(neg.sum())


def condition(joint_cov, target_idx, given_idx, values=None, mean=None) -> ConditionalLaw:
    """Law of the ``target_idx`` entries given the ``given_idx`` entries.

    Covariance is the Schur complement C_tt - C_tg C_gg^{-1} C_gt.  When
    ``values`` (of the given entries) are supplied the conditional mean is
    returned too, with ``mean`` the unconditional mean (zero by default).
    """
    c = np.asarray(joint_cov, dtype=float)
    t = np.asarray(target_idx, dtype=int).ravel()
    g = np.asarray(given_idx, dtype=int).ravel()
    if np.intersect1d(t, g).size:
        raise ValueError("target and given index sets must be disjoint")
    mu = np.zeros(c.shape[0]) if mean is None else np.asarray(mean, dtype=float)
    ctt = c[np.ix_(t, t)]
    if g.size == 0:
        return ConditionalLaw(mu[t].copy() if values is not None else None, ctt.copy(), tuple(t.tolist()))
    lg = chol(c[np.ix_(g, g)], "conditioning block")
    w = sla.solve_triangular(lg, c[np.ix_(g, t)], lower=True)
    cov, clamped = _clamp_psd(ctt - w.T @ w)
    m = None
    if values is not None:
        z = sla.solve_triangular(lg, np.asarray(values, dtype=float) - mu[g], lower=True)
        m = mu[t] + w.T @ z
    return ConditionalLaw(m, cov, tuple(t.tolist()), clamped)


def make_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Philox generator keyed by (master seed, replicate id)."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(replicate)])
    return np.random.Generator(np.random.Philox(ss))


def _as_rng(seed_or_rng, replicate=0):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(seed_or_rng, replicate)


def sample_replicates(model: CrossCovModel, locs: LocationSet, seed, reps: int,
                      max_nq: int = DEFAULT_MAX_NQ) -> np.ndarray:
    """``reps`` draws of the n x q field as an array of shape (reps, n, q)."""
    c = build_joint_cov(model, locs, max_nq)
    try:
        lc = chol(c, "joint covariance")
    except NotPositiveDefiniteError:
        # PSD but rank-deficient (e.g. discretized convolution): symmetric square root
        w, v = np.linalg.eigh(c)
        lc = v * np.sqrt(np.clip(w, 0.0, None))
    z = _as_rng(seed).standard_normal((reps, c.shape[0]))
    draws = z @ lc.T
    return draws.reshape(reps, model.q, locs.n).transpose(0, 2, 1)


def sample_field(model: CrossCovModel, locs: LocationSet, seed, max_nq: int = DEFAULT_MAX_NQ) -> FieldSample:
    """One zero-mean draw of the field at ``locs``; deterministic in ``seed``."""
    return FieldSample(sample_replicates(model, locs, seed, 1, max_nq)[0], locs)


def _gaussian_loglik(c: np.ndarray, y: np.ndarray) -> float:
    lc = chol(c, "covariance")
    z = sla.solve_triangular(lc, y, lower=True)
    return -0.5 * (y.size * LOG_2PI + 2.0 * np.log(np.diag(lc)).sum() + z @ z)


def loglik(sample: FieldSample, model: CrossCovModel, max_nq: int = DEFAULT_MAX_NQ) -> float:
    """Exact Gaussian log-likelihood of the observed entries (masked entries dropped)."""
    if sample.q != model.q:
        raise ValueError("sample and model disagree on q")
    idx = sample.observed_index()
    c = build_joint_cov(model, sample.locs, max_nq)[np.ix_(idx, idx)]
    return float(_gaussian_loglik(c, sample.observed_vector()))


def predict(sample: FieldSample, model: CrossCovModel, targets, max_nq: int = DEFAULT_MAX_NQ) -> ConditionalLaw:
    """Plug-in cokriging of (component, point) targets from the observed entries.

    A target that coincides with an observed (component, location) gets the
    observed value with zero variance.
    """
    targets = [(int(j), np.asarray(p, dtype=float).ravel()) for j, p in targets]
    model._check_component(*[j for j, _ in targets])
    d = sample.locs.d
    pts = np.vstack([_as_points(p, d) for _, p in targets]) if targets else np.empty((0, d))
    # merge target points into the location set without duplicating existing ones
    where = sample.locs.index_of(pts) if len(pts) else np.empty(0, int)
    extra = []
    new_rows = np.empty(len(targets), dtype=int)
    for k, w in enumerate(where):
        if w >= 0:
            new_rows[k] = w
        else:
            key = pts[k].tobytes()
            found = [e for e, (kk, _) in enumerate(extra) if kk == key]
            if found:
                new_rows[k] = sample.n + found[0]
            else:
                new_rows[k] = sample.n + len(extra)
                extra.append((key, pts[k]))
    locs = sample.locs.concat(np.array([p for _, p in extra])) if extra else sample.locs
    n_all = locs.n
    if n_all * model.q > max_nq:
        raise ValueError(f"nq = {n_all * model.q} exceeds the cap of {max_nq}")
    c = build_joint_cov(model, locs, max_nq)
    full_mask = np.zeros((n_all, model.q), dtype=bool)
    full_mask[: sample.n] = sample.mask
    given = np.flatnonzero(full_mask.T.ravel())
    y = sample.observed_vector()
    tidx = np.array([j * n_all + r for (j, _), r in zip(targets, new_rows)], dtype=int)
    is_obs = np.isin(tidx, given)
    mean = np.empty(len(targets))
    cov = np.zeros((len(targets), len(targets)))
    free = np.flatnonzero(~is_obs)
    if is_obs.any():
        lookup = {g: k for k, g in enumerate(given)}
        mean[is_obs] = y[[lookup[t] for t in tidx[is_obs]]]
    clamped = 0
    if free.size:
        law = condition(c, tidx[free], given, y)
        mean[free] = law.mean
        cov[np.ix_(free, free)] = law.cov
        clamped = law.clamped
    return ConditionalLaw(mean, cov, tuple((j, tuple(p)) for j, p in targets), clamped)
