"""Marginal and partial cross-correlation functions and network summaries.

For the inside-out families the partial cross-correlation between y_i and
y_j given all other components is

    r_ij * c_ij(l, l'),   r_ij = -Q_ij / sqrt(Q_ii Q_jj),

where c_ij is the model's sigma-free attenuation, normalized to multiply
correlations.  The LMC is handled separately through the column support of
the inverse loadings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .covmodels import LMC, CrossCovModel, SigmaPair, _as_points
from .specialfn import matern_spectral_density

EDGE_TOL = 1e-8
DEFAULT_RANGE_THRESHOLD = 0.05
NEVER_BELOW = math.inf


class UnsupportedModelError(TypeError):
    """The requested closed form does not exist for this model family."""


def partial_coeff(sp: SigmaPair, i: int, j: int) -> float:
    """Process-level partial correlation coefficient -Q_ij / sqrt(Q_ii Q_jj)."""
    if i == j:
        raise ValueError("partial correlation coefficient needs two distinct components")
    qm = sp.q_mat
    # + 0.0 turns the -0.0 of an exact zero into +0.0
    return float(-qm[i, j] / math.sqrt(qm[i, i] * qm[j, j])) + 0.0


def partial_coeff_matrix(sp: SigmaPair) -> np.ndarray:
    """All r_ij at once, with ones on the diagonal."""
    qm = sp.q_mat
    dg = np.sqrt(np.diag(qm))
    r = -qm / np.outer(dg, dg) + 0.0
    np.fill_diagonal(r, 1.0)
    return r


@dataclass(frozen=True)
class PartialCorrFn:
    """A correlation function factored as ``coefficient * attenuation(l1, l2)``.

    ``attenuation`` maps two (m, d) point arrays to an (m1, m2) matrix.
    """

    coefficient: float
    attenuation: Callable

    def __call__(self, l1, l2):
        val = self.coefficient * self.attenuation(l1, l2)
        return float(val[0, 0]) if np.size(val) == 1 else val

    def along(self, anchor, direction) -> Callable[[float], float]:
        """Lag function h -> value(anchor, anchor + h * direction)."""
        anchor = np.asarray(anchor, dtype=float)
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)

        def fn(h):
            h = np.atleast_1d(np.asarray(h, dtype=float))
            pts = anchor[None, :] + h[:, None] * u[None, :]
            vals = self.coefficient * self.attenuation(anchor[None, :], pts)[0]
            return vals if vals.size > 1 else float(vals[0])

        return fn


def _require_inside_out(model: CrossCovModel):
    if not model.inside_out:
        raise UnsupportedModelError(
            "the LMC partial cross-correlation does not factor into a coefficient and an "
            "attenuation; conditional independence is decided by the support of inv(Lambda) "
            "(see lmc_ci_check)"
        )


def _attenuation_fn(model, i, j):
    d = model.dim
    return lambda l1, l2: model.corr_attenuation(i, j, _as_points(l1, d), _as_points(l2, d))


def marginal_corr_fn(model: CrossCovModel, i: int, j: int) -> PartialCorrFn:
    """Cross-correlation function of y_i and y_j as a factored function."""
    model._check_component(i, j)
    if not model.inside_out:
        d = model.dim

        def att(l1, l2):
            l1, l2 = _as_points(l1, d), _as_points(l2, d)
            c = model.cross_block(i, j, l1, l2)
            return c / np.sqrt(np.outer(model.variance(i, l1), model.variance(j, l2)))

        return PartialCorrFn(1.0, att)
    s = model.sigma
    return PartialCorrFn(float(s[i, j] / math.sqrt(s[i, i] * s[j, j])), _attenuation_fn(model, i, j))


def partial_corr_fn(model: CrossCovModel, i: int, j: int) -> PartialCorrFn:
    """Partial cross-correlation function of y_i and y_j given all other components."""
    _require_inside_out(model)
    model._check_component(i, j)
    if i == j:
        return PartialCorrFn(1.0, _attenuation_fn(model, i, i))
    return PartialCorrFn(partial_coeff(model.sp, i, j), _attenuation_fn(model, i, j))


def marginal_cross_corr(model: CrossCovModel, i: int, j: int, l1, l2) -> float:
    """corr{y_i(l1), y_j(l2)}: the cross-covariance standardized by both variances."""
    model._check_component(i, j)
    d = model.dim
    p1, p2 = _as_points(l1, d), _as_points(l2, d)
    v = float(model.variance(i, p1)[0] * model.variance(j, p2)[0])
    if v <= 0:
        raise ValueError("zero variance; correlation undefined")
    return float(model.cross_block(i, j, p1, p2)[0, 0] / math.sqrt(v))


def partial_cross_corr(model: CrossCovModel, i: int, j: int, l1, l2) -> float:
    """corr{y_i(l1), y_j(l2) | all other component processes}."""
    return partial_corr_fn(model, i, j)(l1, l2)


def effective_range(
    fn: Callable,
    threshold: float = DEFAULT_RANGE_THRESHOLD,
    search_max: float = 1.0,
    n_grid: int = 2001,
    tol: float = 1e-6,
) -> float:
    """Smallest lag beyond which ``|fn|`` stays below ``threshold`` up to ``search_max``.

    ``fn`` maps an array of lags to values.  Returns 0 when ``|fn|`` never
    reaches the threshold and :data:`NEVER_BELOW` (inf) when it is still at
    or above the threshold at ``search_max``.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    grid = np.linspace(0.0, search_max, n_grid)
    vals = np.abs(np.asarray(fn(grid), dtype=float))
    above = np.nonzero(vals >= threshold)[0]
    if above.size == 0:
        return 0.0
    last = above[-1]
    if last == n_grid - 1:
        return NEVER_BELOW
    lo, hi = grid[last], grid[last + 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if abs(float(np.atleast_1d(fn(np.array([mid])))[0])) >= threshold:
            lo = mid
        else:
            hi = mid
    return float(hi)


@dataclass(frozen=True)
class LmcCheck:
    independent: bool
    witness: int | None
    products: np.ndarray = field(repr=False)


def lmc_ci_check(lmc: LMC, i: int, j: int, tol: float = 1e-12) -> LmcCheck:
    """Process-level conditional independence of y_i, y_j in an LMC.

    Independent iff a_ri a_rj = 0 for every row r of A = inv(Lambda); the
    witness is the row with the largest violating product.
    """
    lmc._check_component(i, j)
    a = lmc.inverse_loadings
    prods = a[:, i] * a[:, j]
    scale = tol * float(np.abs(a).max() ** 2)
    worst = int(np.argmax(np.abs(prods)))
    ok = bool(np.abs(prods[worst]) <= scale)
    return LmcCheck(ok, None if ok else worst, prods)


def lmc_inverse_spectral_entry(lmc: LMC, omega, i: int, j: int) -> float:
    """[S_Y(w)^{-1}]_ij = sum_r a_ri a_rj / rho~_r(w) for the LMC's Matérn latents."""
    lmc._check_component(i, j)
    w = float(np.linalg.norm(np.atleast_1d(np.asarray(omega, dtype=float))))
    a = lmc.inverse_loadings
    dens = np.array([matern_spectral_density(w, p, lmc.dim) for p in lmc.corrs])
    if np.any(dens <= 0):
        raise ZeroDivisionError("latent spectral density vanishes at this frequency")
    return float(np.sum(a[:, i] * a[:, j] / dens))


def colocated_cov(model: CrossCovModel, at=None) -> np.ndarray:
    """cov{Y(l), Y(l)} at one location (the first reference point for nonstationary models)."""
    if at is None:
        ref = getattr(model, "reference", None) or getattr(model, "knots", None)
        at = ref.coords[0] if ref is not None else np.zeros(model.dim)
    pt = _as_points(at, model.dim)
    q = model.q
    c = np.empty((q, q))
    for i in range(q):
        for j in range(i, q):
            c[i, j] = c[j, i] = model.cross_block(i, j, pt, pt)[0, 0]
    return c


def _standardized_neg_inverse(c: np.ndarray) -> np.ndarray:
    try:
        p = np.linalg.inv(c)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("colocated covariance is singular") from None
    dg = np.sqrt(np.diag(p))
    out = -p / np.outer(dg, dg)
    np.fill_diagonal(out, 1.0)
    return out


def colocated_pointwise_pcorr(model: CrossCovModel, at=None) -> np.ndarray:
    """corr{y_i(l), y_j(l) | Y_o(l)}: partial correlations of the colocated covariance."""
    return _standardized_neg_inverse(colocated_cov(model, at))


def colocated_process_pcorr(model: CrossCovModel, at=None) -> np.ndarray:
    """corr{y_i(l), y_j(l) | other processes} = r_ij c_ij(l, l)."""
    _require_inside_out(model)
    if at is None:
        ref = getattr(model, "reference", None) or getattr(model, "knots", None)
        at = ref.coords[0] if ref is not None else np.zeros(model.dim)
    pt = _as_points(at, model.dim)
    r = partial_coeff_matrix(model.sp)
    q = model.q
    for i in range(q):
        for j in range(i + 1, q):
            r[i, j] = r[j, i] = r[i, j] * model.corr_attenuation(i, j, pt, pt)[0, 0]
    return r


@dataclass(frozen=True)
class GraphSummary:
    """Conditional-independence graph implied by Q with signed process-level weights."""

    q: int
    edges: tuple
    weights: dict
    colocated_pointwise: np.ndarray
    colocated_process: np.ndarray | None

    def to_dict(self) -> dict:
        return {
            "nodes": list(range(1, self.q + 1)),
            "edges": [
                {"i": i + 1, "j": j + 1, "weight": self.weights[(i, j)]} for i, j in self.edges
            ],
            "colocated_pointwise": self.colocated_pointwise.tolist(),
            "colocated_process": None
            if self.colocated_process is None
            else self.colocated_process.tolist(),
        }


def graph_summary(model: CrossCovModel, tol: float = EDGE_TOL) -> GraphSummary:
    """Edges (|r_ij| >= tol), weights r_ij and both colocated partial-correlation matrices."""
    _require_inside_out(model)
    r = partial_coeff_matrix(model.sp)
    q = model.q
    edges = tuple((i, j) for i in range(q) for j in range(i + 1, q) if abs(r[i, j]) >= tol)
    return GraphSummary(
        q=q,
        edges=edges,
        weights={e: float(r[e]) for e in edges},
        colocated_pointwise=colocated_pointwise_pcorr(model),
        colocated_process=colocated_process_pcorr(model),
    )
