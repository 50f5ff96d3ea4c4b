"""Estimation of the cross-dependence matrix and the graph, plus scoring metrics.

``fit_sigma_mle`` maximizes the exact Gaussian likelihood over Sigma with
every spatial parameter held fixed.  Because inside-out covariances are
linear in Sigma, C(Sigma) = K o Sigma[comp, comp] for a fixed attenuation
matrix K, and the score has the closed form

    d loglik / d sigma_ij = 1/2 * sum over block (i, j) of K o (a a^T - C^{-1}),

with a = C^{-1} y.  The optimizer works on a lower-triangular factor with
log-scale diagonal, so every iterate is SPD.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import optimize
from scipy.linalg import lapack
from scipy.stats import norm

from .covmodels import DEFAULT_MAX_NQ, CovarianceSizeError, CrossCovModel, InsideOut, SigmaPair
from .gaussian import LOG_2PI, FieldSample, NotPositiveDefiniteError

log = logging.getLogger(__name__)

__all__ = [
    "FitResult",
    "GraphEstimate",
    "F1Point",
    "attenuation_matrix",
    "fit_sigma_mle",
    "iox_sigma_hat",
    "sample_cov_independent",
    "graphical_lasso",
    "lambda_path",
    "edge_entry_scores",
    "roc_curve",
    "f1_best_threshold",
    "crps_gaussian",
    "rmse",
]


# ---------------------------------------------------------------------------
# Sigma maximum likelihood


def attenuation_matrix(model: CrossCovModel, sample: FieldSample, max_nq: int = DEFAULT_MAX_NQ):
    """Sigma-free matrix K over the observed entries and their component labels."""
    if not model.inside_out:
        raise TypeError("Sigma-MLE needs an inside-out family (covariance linear in Sigma)")
    n, q = sample.n, model.q
    if n * q > max_nq:
        raise CovarianceSizeError(f"nq = {n * q} exceeds the cap of {max_nq}")
    x = sample.locs.coords
    k = np.empty((n * q, n * q))
    for i in range(q):
        for j in range(i, q):
            blk = model.attenuation(i, j, x, x)
            k[i * n:(i + 1) * n, j * n:(j + 1) * n] = blk
            if j != i:
                k[j * n:(j + 1) * n, i * n:(i + 1) * n] = blk.T
    idx = sample.observed_index()
    k = k[np.ix_(idx, idx)]
    return 0.5 * (k + k.T), idx // n


class _SigmaLik:
    """Log-likelihood in Sigma and its gradient for a fixed attenuation matrix."""

    def __init__(self, k, comp, y, q):
        self.k, self.comp, self.y, self.q = k, comp, y, q
        self.m = y.size
        # component-major ordering keeps each component's entries contiguous
        self.starts = np.searchsorted(comp, np.arange(q))
        self.nevals = 0

    def _factor(self, sigma):
        c = self.k * sigma[np.ix_(self.comp, self.comp)]
        lc, info = lapack.dpotrf(c, lower=1, clean=1)
        if info != 0:
            raise NotPositiveDefiniteError(max(info - 1, 0), "joint covariance")
        return lc

    def value(self, sigma) -> float:
        lc = self._factor(sigma)
        z = sla.solve_triangular(lc, self.y, lower=True)
        return -0.5 * (self.m * LOG_2PI + 2.0 * np.log(np.diag(lc)).sum() + z @ z)

    def value_and_grad(self, sigma):
        """loglik and the symmetric matrix H with d loglik = tr(H dSigma)."""
        self.nevals += 1
        lc = self._factor(sigma)
        logdet = 2.0 * np.log(np.diag(lc)).sum()
        alpha = lapack.dpotrs(lc, self.y, lower=1)[0]
        cinv, info = lapack.dpotri(lc, lower=1)
        if info != 0:  # pragma: no cover
            raise NotPositiveDefiniteError(info - 1, "joint covariance")
        cinv = np.tril(cinv) + np.tril(cinv, -1).T
        val = -0.5 * (self.m * LOG_2PI + logdet + self.y @ alpha)
        w = np.outer(alpha, alpha)
        w -= cinv
        w *= self.k
        g = np.add.reduceat(np.add.reduceat(w, self.starts, axis=0), self.starts, axis=1)
        return val, 0.5 * g


@dataclass(frozen=True, eq=False)
class FitResult:
    model_hat: CrossCovModel
    loglik_at_opt: float
    loglik_init: float
    iterations: int
    converged: bool
    grad_norm: float
    message: str = ""

    @property
    def sigma_hat(self) -> np.ndarray:
        return self.model_hat.sigma

    def to_dict(self) -> dict:
        return {
            "family": self.model_hat.family,
            "sigma_hat": self.sigma_hat.tolist(),
            "loglik_at_opt": self.loglik_at_opt,
            "loglik_init": self.loglik_init,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "message": self.message,
        }


def _whitened_init(model, sample):
    """Starting value: per-component variances, correlations from the colocated sample."""
    y = np.where(sample.mask, sample.values, 0.0)
    cnt = sample.mask.sum(axis=0)
    if isinstance(model, InsideOut) and model.reference == sample.locs and sample.fully_observed:
        return iox_sigma_hat(sample, model)
    both = sample.mask.T.astype(float) @ sample.mask.astype(float)
    s = (y.T @ y) / np.maximum(both, 1.0)
    s[np.diag_indices_from(s)] = (y**2).sum(axis=0) / np.maximum(cnt, 1)
    # shrink toward the diagonal until comfortably SPD
    d = np.sqrt(np.diag(s))
    r = s / np.outer(d, d)
    for shrink in (1.0, 0.9, 0.7, 0.5, 0.0):
        rr = shrink * r + (1 - shrink) * np.eye(len(d))
        np.fill_diagonal(rr, 1.0)
        if np.linalg.eigvalsh(rr).min() > 1e-3:
            return rr * np.outer(d, d)
    return np.diag(d**2)  # pragma: no cover


def fit_sigma_mle(
    sample: FieldSample,
    model: CrossCovModel,
    init=None,
    maxiter: int = 500,
    gtol: float = 1e-5,
    max_nq: int = DEFAULT_MAX_NQ,
) -> FitResult:
    """Maximum-likelihood Sigma for an inside-out family with fixed spatial parameters.

    Parameters
    ----------
    sample : FieldSample
        Observations; masked entries are dropped from the likelihood.
    model : CrossCovModel
        Template carrying the fixed spatial parameters; its Sigma is ignored
        unless ``init`` is None and the data-based initializer fails.
    init : array_like, optional
        Starting Sigma.  Defaults to the whitened estimator on the reference
        set (IOX) or a shrunk colocated moment estimator.
    gtol : float
        Convergence when the gradient norm is below ``gtol * |loglik|``.

    Returns
    -------
    FitResult
        ``converged`` is False when the iteration cap was hit; the best
        iterate is returned either way.
    """
    if sample.q != model.q:
        raise ValueError("sample and model disagree on q")
    q = model.q
    k, comp = attenuation_matrix(model, sample, max_nq)
    lik = _SigmaLik(k, comp, sample.observed_vector(), q)
    s0 = np.asarray(init if init is not None else _whitened_init(model, sample), dtype=float)
    a0 = np.linalg.cholesky(0.5 * (s0 + s0.T))
    tril = np.tril_indices(q)
    # Sigma = (A0 M)(A0 M)^T, M lower triangular with log diagonal; theta = 0 is the start
    theta0 = np.zeros(len(tril[0]))

    def unpack(theta):
        m = np.zeros((q, q))
        m[tril] = theta
        m[np.diag_indices(q)] = np.exp(np.diag(m))
        return a0 @ m, m

    ll0 = lik.value(s0)
    scale = max(abs(ll0), 1.0)
    best = {"f": -ll0, "theta": theta0.copy()}

    def fun(theta):
        lmat, m = unpack(theta)
        try:
            val, h = lik.value_and_grad(lmat @ lmat.T)
        except NotPositiveDefiniteError:
            return np.inf, np.zeros_like(theta)
        gm = a0.T @ (2.0 * h @ lmat)
        gm[np.diag_indices(q)] *= np.diag(m)
        if -val < best["f"]:
            best.update(f=-val, theta=theta.copy())
        return -val / scale, -gm[tril] / scale

    res = optimize.minimize(fun, theta0, jac=True, method="BFGS",
                            options={"gtol": gtol, "maxiter": maxiter, "norm": 2})
    theta = res.x if -res.fun * scale >= -best["f"] - 1e-12 else best["theta"]
    lmat, _ = unpack(theta)
    sig = lmat @ lmat.T
    val, h = lik.value_and_grad(sig)
    gnorm = float(np.linalg.norm(h) / scale)
    converged = bool(res.success or gnorm <= gtol)
    if not converged:
        log.warning("Sigma-MLE did not converge: %s", res.message)
    return FitResult(
        model_hat=model.with_sigma(SigmaPair.from_sigma(sig)),
        loglik_at_opt=float(val),
        loglik_init=float(ll0),
        iterations=int(res.nit),
        converged=converged,
        grad_norm=gnorm,
        message=str(res.message),
    )


# ---------------------------------------------------------------------------
# closed-form estimators


def iox_sigma_hat(sample: FieldSample, model: InsideOut) -> np.ndarray:
    """Whitened estimator (1/n) U^T U with U[:, j] = L_j^{-1} y_j on the reference set."""
    if not sample.fully_observed:
        raise ValueError("the whitened estimator needs a fully observed sample")
    rows = model.reference.index_of(sample.locs.coords)
    if np.any(rows < 0) or sample.n != model.reference.n or len(set(rows.tolist())) != sample.n:
        raise ValueError("sample must be observed exactly on the reference set")
    y = np.empty_like(sample.values)
    y[rows] = sample.values
    u = np.column_stack([
        sla.solve_triangular(model.factors[j], y[:, j], lower=True) for j in range(model.q)
    ])
    s = u.T @ u / sample.n
    if sample.n < sample.q:
        warnings.warn("fewer locations than components; adding a ridge", RuntimeWarning, stacklevel=2)
        s = s + 1e-8 * np.trace(s) * np.eye(sample.q)
    return s


def sample_cov_independent(sample: FieldSample) -> np.ndarray:
    """(1/n) Y_c^T Y_c, treating the n locations as independent replicates."""
    if not sample.fully_observed:
        raise ValueError("the independent-replicates covariance needs a fully observed sample")
    if sample.n < 2:
        raise ValueError("need at least two observations")
    yc = sample.values - sample.values.mean(axis=0)
    return yc.T @ yc / sample.n


# ---------------------------------------------------------------------------
# graphical lasso


@dataclass(frozen=True, eq=False)
class GraphEstimate:
    precision_hat: np.ndarray
    lam: float
    edges: tuple
    pcorr_hat: np.ndarray
    covariance_hat: np.ndarray = field(repr=False)
    iterations: int = 0
    converged: bool = True
    kkt_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "precision_hat": self.precision_hat.tolist(),
            "edges": [[i + 1, j + 1] for i, j in self.edges],
            "pcorr_hat": self.pcorr_hat.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
        }


def _lasso_cd(v, s, lam, beta, tol, maxit):
    """min 1/2 b^T V b - s^T b + lam |b|_1 by cyclic coordinate descent (in place)."""
    p = len(s)
    vb = v @ beta
    for _ in range(maxit):
        dmax = 0.0
        for k in range(p):
            old = beta[k]
            r = s[k] - vb[k] + v[k, k] * old
            new = math.copysign(max(abs(r) - lam, 0.0), r) / v[k, k]
            if new != old:
                vb += v[:, k] * (new - old)
                beta[k] = new
                dmax = max(dmax, abs(new - old))
        if dmax < tol:
            return beta, True
    return beta, False


def kkt_residual(s_hat, w, theta, lam) -> float:
    """Largest violation of the glasso stationarity conditions (off-diagonal penalty)."""
    q = s_hat.shape[0]
    off = ~np.eye(q, dtype=bool)
    diff = w - s_hat
    nz = off & (theta != 0)
    z = off & (theta == 0)
    res = [np.abs(np.diag(diff)).max(initial=0.0)]
    if nz.any():
        res.append(np.abs(diff[nz] - lam * np.sign(theta[nz])).max())
    if z.any():
        res.append(max(np.abs(diff[z]).max() - lam, 0.0))
    return float(max(res))


def graphical_lasso(s_hat, lam: float, w_init=None, tol: float = 1e-12, maxiter: int = 1000,
                    inner_maxiter: int = 10000) -> GraphEstimate:
    """Graphical lasso by block coordinate descent with the diagonal unpenalized.

    Minimizes -log det Theta + tr(S Theta) + lam * sum_{i != j} |Theta_ij|.
    """
    s = np.asarray(s_hat, dtype=float)
    q = s.shape[0]
    if s.shape != (q, q) or not np.allclose(s, s.T, atol=1e-12 * max(1.0, np.abs(s).max())):
        raise ValueError("S_hat must be square and symmetric")
    if np.any(np.diag(s) <= 0):
        raise ValueError("S_hat needs a positive diagonal")
    if lam < 0:
        raise ValueError("penalty must be non-negative")
    s = 0.5 * (s + s.T)
    w = s.copy() if w_init is None else np.array(w_init, dtype=float)
    np.fill_diagonal(w, np.diag(s))
    betas = np.zeros((q, q - 1))
    if w_init is not None:
        for j in range(q):
            o = np.arange(q) != j
            betas[j] = np.linalg.solve(w[np.ix_(o, o)], w[o, j])
    converged = q == 1
    it = 0
    for it in range(1, maxiter + 1):
        if q == 1:
            break
        delta = 0.0
        for j in range(q):
            o = np.arange(q) != j
            beta, _ = _lasso_cd(w[np.ix_(o, o)], s[o, j], lam, betas[j], tol, inner_maxiter)
            w12 = w[np.ix_(o, o)] @ beta
            delta = max(delta, np.abs(w12 - w[o, j]).max())
            w[o, j] = w12
            w[j, o] = w12
        if delta < 1e-10 * np.abs(np.diag(s)).max():
            converged = True
            break
    theta = np.zeros((q, q))
    for j in range(q):
        o = np.arange(q) != j
        beta = betas[j]
        t22 = 1.0 / (w[j, j] - w[o, j] @ beta)
        theta[j, j] = t22
        theta[o, j] = -beta * t22
    # symmetrize, keeping the zero pattern only where both columns agree
    zero = (theta == 0) | (theta.T == 0)
    theta = 0.5 * (theta + theta.T)
    theta[zero] = 0.0
    if not converged:
        log.warning("graphical lasso hit the iteration cap at lambda=%g", lam)
    dg = np.sqrt(np.diag(theta))
    pc = -theta / np.outer(dg, dg)
    np.fill_diagonal(pc, 1.0)
    edges = tuple((i, j) for i in range(q) for j in range(i + 1, q) if theta[i, j] != 0)
    return GraphEstimate(theta, float(lam), edges, pc, w, it, converged, kkt_residual(s, w, theta, lam))


def lambda_path(s_hat, n_lambda: int = 50, ratio: float = 0.01) -> np.ndarray:
    """Geometric path from the full-shrinkage value max|S_ij| down to ``ratio`` times it."""
    s = np.asarray(s_hat, dtype=float)
    off = np.abs(s[~np.eye(len(s), dtype=bool)])
    lmax = float(off.max()) if off.size else 1.0
    return np.geomspace(lmax, lmax * ratio, n_lambda)


def edge_entry_scores(s_hat, lambdas) -> tuple[np.ndarray, list]:
    """Per-pair score: the largest path lambda at which the pair is an edge (0 if never).

    ``s_hat`` is standardized to a correlation matrix first.  Returns scores
    over the upper triangle (row-major pair order) and the warm-started
    estimates along the path.
    """
    s = np.asarray(s_hat, dtype=float)
    d = np.sqrt(np.diag(s))
    r = s / np.outer(d, d)
    q = len(r)
    iu = np.triu_indices(q, 1)
    scores = np.zeros(len(iu[0]))
    path = []
    w = None
    for lam in sorted(np.asarray(lambdas, dtype=float), reverse=True):
        est = graphical_lasso(r, lam, w_init=w)
        w = est.covariance_hat
        path.append(est)
        on = est.precision_hat[iu] != 0
        scores = np.where(on & (scores == 0), lam, scores)
    return scores, path


# ---------------------------------------------------------------------------
# scores


def _check_truth(scores, truth):
    scores = np.asarray(scores, dtype=float).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have the same length")
    if truth.all() or not truth.any():
        raise ValueError("ROC needs at least one true edge and one true non-edge")
    return scores, truth


def roc_curve(scores, truth) -> tuple[np.ndarray, float]:
    """ROC points (fpr, tpr) sorted by false-positive rate, and trapezoidal AUC."""
    scores, truth = _check_truth(scores, truth)
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    # one point per distinct threshold
    cut = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(t)[cut]
    fp = np.cumsum(~t)[cut]
    tpr = np.r_[0.0, tp / t.sum()]
    fpr = np.r_[0.0, fp / (~t).sum()]
    trap = getattr(np, "trapezoid", None) or np.trapz
    auc = float(trap(tpr, fpr))
    return np.column_stack([fpr, tpr]), auc


@dataclass(frozen=True)
class F1Point:
    threshold: float
    sensitivity: float
    specificity: float
    f1: float


def f1_best_threshold(scores, truth) -> F1Point:
    """Threshold (edge iff score >= threshold) maximizing F1; ties go to higher specificity.

    All-zero scores give the sentinel threshold ``inf`` with no edges called.
    """
    scores, truth = _check_truth(scores, truth)
    npos, nneg = truth.sum(), (~truth).sum()
    cands = np.unique(scores[scores > 0])
    best = F1Point(math.inf, 0.0, 1.0, 0.0)
    for thr in cands[::-1]:
        pred = scores >= thr
        tp = np.sum(pred & truth)
        fp = np.sum(pred & ~truth)
        sens = tp / npos
        spec = 1.0 - fp / nneg
        f1 = 2.0 * tp / (2.0 * tp + fp + (npos - tp))
        if f1 > best.f1 or (f1 == best.f1 and spec > best.specificity):
            best = F1Point(float(thr), float(sens), float(spec), float(f1))
    return best


def crps_gaussian(mu, sd, y):
    """CRPS of N(mu, sd^2) at y: sd [z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)]."""
    mu, sd, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sd, y)))
    if np.any(~(sd > 0)):
        raise ValueError("predictive standard deviation must be positive")
    z = (y - mu) / sd
    out = sd * (z * (2.0 * norm.cdf(z) - 1.0) + 2.0 * norm.pdf(z) - 1.0 / math.sqrt(math.pi))
    return float(out) if out.ndim == 0 else out


def rmse(estimates, truth) -> float:
    """Root mean squared error between two equal-length vectors."""
    e = np.asarray(estimates, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("rmse of an empty vector")
    if e.shape != t.shape:
        raise ValueError("estimates and truth must have the same length")
    return float(np.sqrt(np.mean((e - t) ** 2)))
