"""Cross-covariance models for q-variate Gaussian processes.

Every joint covariance matrix produced here is laid out component-major:
the entry for component ``j`` at location ``a`` (both zero-based) sits at
row ``j * n + a``, which is vec(Y) for the n x q data matrix Y.

Five families are provided (plus the continuous process convolution that
the discretized version approximates).  All families except the LMC are
"inside-out": their covariance is ``sigma_ij * attenuation_ij(l, l')`` with
an attenuation that carries no cross-process parameters.
"""
from __future__ import annotations

import dataclasses
import functools
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.integrate as integrate
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .specialfn import MaternParams, gamma_factor, matern_corr

log = logging.getLogger(__name__)

DEFAULT_MAX_NQ = 12000
IOX_JITTER = 1e-10

__all__ = [
    "CovarianceSizeError",
    "LocationSet",
    "SigmaPair",
    "Kernel",
    "CrossCovModel",
    "Separable",
    "ParsimoniousMatern",
    "ProcessConvolution",
    "DiscretizedConvolution",
    "InsideOut",
    "LMC",
    "matern_matrix",
    "conv_overlap",
    "cross_cov_entry",
    "build_joint_cov",
    "iox_weights",
]


class CovarianceSizeError(MemoryError):
    """Requested joint covariance exceeds the configured nq cap."""


def _as_points(x, d=None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if d is None or arr.size == d else arr.reshape(-1, 1)
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"points have dimension {arr.shape[1]}, expected {d}")
    return arr


@dataclass(frozen=True, eq=False)
class LocationSet:
    """Ordered points in R^d shared by all components."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("a location set needs at least one point")
        if not np.all(np.isfinite(c)):
            raise ValueError("coordinates must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @classmethod
    def grid(cls, side: int, d: int = 2, lo: float = 0.0, hi: float = 1.0) -> "LocationSet":
        """Regular ``side**d`` grid on the cube [lo, hi]^d, first axis varying slowest."""
        ax = np.linspace(lo, hi, side)
        mesh = np.meshgrid(*([ax] * d), indexing="ij")
        return cls(np.column_stack([m.ravel() for m in mesh]))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, LocationSet) and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())

    @cached_property
    def _lookup(self):
        table = {}
        for k, row in enumerate(self.coords):
            table.setdefault(row.tobytes(), k)
        return table

    def has_duplicates(self) -> bool:
        return len(self._lookup) < self.n

    def index_of(self, points) -> np.ndarray:
        """Index of each point in this set by exact coordinate match, -1 if absent."""
        pts = _as_points(points, self.d)
        return np.array([self._lookup.get(p.tobytes(), -1) for p in pts], dtype=int)

    def concat(self, other) -> "LocationSet":
        return LocationSet(np.vstack([self.coords, _as_points(other, self.d)]))

    def subset(self, idx) -> "LocationSet":
        return LocationSet(self.coords[np.asarray(idx)])


def _symmetric(a, what: str) -> np.ndarray:
    """Symmetrize away rounding noise; reject genuinely asymmetric input."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be a square matrix")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError(f"{what} must be symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class SigmaPair:
    """Cross-dependence covariance ``sigma`` with its cached inverse ``q_mat``."""

    sigma: np.ndarray
    q_mat: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        qm = np.array(self.q_mat, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape != qm.shape:
            raise ValueError("sigma and its inverse must be square and conformable")
        scale = max(1.0, np.abs(s).max())
        if not np.allclose(s, s.T, rtol=0, atol=1e-12 * scale):
            raise ValueError("sigma must be symmetric")
        try:
            np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise ValueError("sigma must be positive definite") from None
        if np.abs(s @ qm - np.eye(s.shape[0])).max() > 1e-8:
            raise ValueError("q_mat is not the inverse of sigma")
        for a in (s, qm):
            a.setflags(write=False)
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "q_mat", qm)

    @classmethod
    def from_sigma(cls, sigma) -> "SigmaPair":
        s = _symmetric(sigma, "sigma")
        qm = np.linalg.inv(s)
        return cls(s, 0.5 * (qm + qm.T))

    @classmethod
    def from_precision(cls, q_mat) -> "SigmaPair":
        qm = _symmetric(q_mat, "precision")
        s = np.linalg.inv(qm)
        return cls(0.5 * (s + s.T), qm)

    @property
    def q(self) -> int:
        return self.sigma.shape[0]

    def scaled(self, c: float) -> "SigmaPair":
        return SigmaPair(self.sigma * c, self.q_mat / c)

    def __eq__(self, other):
        return (
            isinstance(other, SigmaPair)
            and np.array_equal(self.sigma, other.sigma)
            and np.array_equal(self.q_mat, other.q_mat)
        )

    __hash__ = None


def matern_matrix(x1, x2, p: MaternParams) -> np.ndarray:
    """Matérn correlation between two point sets, evaluated on unique distances."""
    dist = cdist(_as_points(x1), _as_points(x2))
    uniq, inv = np.unique(dist, return_inverse=True)
    return matern_corr(uniq, p)[inv].reshape(dist.shape)


# ---------------------------------------------------------------------------
# convolution kernels

_SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}
# spherical profile 1 - 1.5 t + 0.5 t^3 on t < 1
_SPH_PROFILE = np.polynomial.Polynomial([1.0, -1.5, 0.0, 0.5])


@dataclass(frozen=True)
class Kernel:
    """Isotropic smoothing kernel normalized to unit L2 norm on R^dim.

    ``gaussian``: bandwidth is the standard deviation ``a`` of the Gaussian.
    ``spherical``: bandwidth is the support radius ``R`` of the spherical profile.
    """

    family: str
    bandwidth: float
    dim: int = 2

    def __post_init__(self):
        if self.family not in ("gaussian", "spherical"):
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not self.bandwidth > 0:
            raise ValueError("kernel bandwidth must be positive")
        if self.dim not in (1, 2, 3) or (self.family == "spherical" and self.dim == 3):
            raise ValueError(f"{self.family} kernel not available in dimension {self.dim}")

    @cached_property
    def norm_const(self) -> float:
        a, d = self.bandwidth, self.dim
        if self.family == "gaussian":
            return (math.pi * a * a) ** (-d / 4.0)
        # int_0^1 p(t)^2 t^(d-1) dt, exact polynomial integral
        poly = (_SPH_PROFILE**2) * np.polynomial.Polynomial([0.0] * (d - 1) + [1.0])
        radial = poly.integ()(1.0) - poly.integ()(0.0)
        return 1.0 / math.sqrt(_SPHERE_AREA[d] * a**d * radial)

    def radial(self, r) -> np.ndarray:
        """Kernel value at distance(s) ``r`` from its center."""
        r = np.asarray(r, dtype=float)
        if self.family == "gaussian":
            return self.norm_const * np.exp(-0.5 * (r / self.bandwidth) ** 2)
        t = r / self.bandwidth
        return np.where(t < 1.0, self.norm_const * _SPH_PROFILE(np.minimum(t, 1.0)), 0.0)


@functools.lru_cache(maxsize=65536)
def _spherical_overlap(ki: Kernel, kj: Kernel, h: float) -> float:
    ri, rj = ki.bandwidth, kj.bandwidth
    if h >= ri + rj:
        return 0.0
    opts = dict(epsabs=1e-12, epsrel=1e-10, limit=200)
    if ki.dim == 1:
        pts = sorted(p for p in {0.0, -h, -h - rj, -h + rj} if -ri < p < ri)
        f = lambda r: float(ki.radial(abs(r)) * kj.radial(abs(r + h)))
        return integrate.quad(f, -ri, ri, points=pts or None, **opts)[0]

    def inner(rho):
        # angle integral of k_j(|r + h e_1|) over the circle of radius rho
        if rho == 0.0:
            return 2.0 * math.pi * float(kj.radial(h))
        g = lambda th: float(kj.radial(math.sqrt(max(rho * rho + h * h + 2 * rho * h * math.cos(th), 0.0))))
        pts = None
        if h > 0:
            cth = (rj * rj - rho * rho - h * h) / (2 * rho * h)
            if -1 < cth < 1:
                pts = [math.acos(cth)]
        return 2.0 * integrate.quad(g, 0.0, math.pi, points=pts, **opts)[0]

    f = lambda rho: rho * float(ki.radial(rho)) * inner(rho)
    brk = [b for b in (abs(h - rj), h + rj) if 0 < b < ri]
    return integrate.quad(f, 0.0, ri, points=brk or None, **opts)[0]


def _overlap_at(ki: Kernel, kj: Kernel, dist: np.ndarray) -> np.ndarray:
    if ki.family == "gaussian" and kj.family == "gaussian":
        a2, b2, d = ki.bandwidth**2, kj.bandwidth**2, ki.dim
        pref = ki.norm_const * kj.norm_const * (2.0 * math.pi * a2 * b2 / (a2 + b2)) ** (d / 2.0)
        return pref * np.exp(-0.5 * dist**2 / (a2 + b2))
    # integrate with the compact kernel outermost
    first, second = (ki, kj) if ki.family == "spherical" else (kj, ki)
    return np.array([_spherical_overlap(first, second, float(x)) for x in dist])


def conv_overlap(ki: Kernel, kj: Kernel, h) -> np.ndarray | float:
    """k_ij(h) = integral of k_i(r) k_j(r + h) dr for isotropic kernels.

    ``h`` is one lag vector of length ``dim``, an (m, dim) array of them, or
    a scalar distance (the kernels are isotropic).  Gaussian pairs use the closed form; any pair involving a spherical kernel
    is integrated numerically.
    """
    if ki.dim != kj.dim:
        raise ValueError("kernels live in different dimensions")
    h = np.asarray(h, dtype=float)
    scalar = h.ndim <= 1
    dist = np.abs(h).reshape(1) if h.ndim == 0 else np.linalg.norm(h.reshape(-1, ki.dim), axis=1)
    out = _overlap_at(ki, kj, dist)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# models


class CrossCovModel:
    """Common surface of all cross-covariance families.

    Subclasses implement ``cross_block(i, j, x1, x2)`` returning the matrix
    cov{y_i(x1[a]), y_j(x2[b])}; component indices are zero-based.
    """

    inside_out = True
    family = ""

    @property
    def q(self) -> int:
        return self.sp.q

    @property
    def sigma(self) -> np.ndarray:
        return self.sp.sigma

    def _check_component(self, *idx):
        for k in idx:
            if not (0 <= int(k) < self.q):
                raise IndexError(f"component index {k} out of range for q={self.q}")

    def attenuation(self, i, j, x1, x2) -> np.ndarray:
        raise NotImplementedError

    def cross_block(self, i, j, x1, x2) -> np.ndarray:
        self._check_component(i, j)
        return self.sp.sigma[i, j] * self.attenuation(i, j, x1, x2)

    def variance(self, i, x) -> np.ndarray:
        """var{y_i(x)} at each point of ``x``."""
        x = _as_points(x, self.dim)
        return self.sp.sigma[i, i] * self.attenuation_diag(i, x)

    def attenuation_diag(self, i, x) -> np.ndarray:
        return np.ones(_as_points(x, self.dim).shape[0])

    def corr_attenuation(self, i, j, x1, x2) -> np.ndarray:
        """Attenuation rescaled so that it multiplies correlations, not covariances."""
        x1, x2 = _as_points(x1, self.dim), _as_points(x2, self.dim)
        a = self.attenuation(i, j, x1, x2)
        return a / np.sqrt(np.outer(self.attenuation_diag(i, x1), self.attenuation_diag(j, x2)))

    def with_sigma(self, sp: SigmaPair) -> "CrossCovModel":
        if sp.q != self.q:
            raise ValueError("replacement sigma has the wrong size")
        return dataclasses.replace(self, sp=sp)


@dataclass(frozen=True, eq=False)
class Separable(CrossCovModel):
    """Intrinsic coregionalization: cov = sigma_ij rho(l - l') with one shared Matérn rho."""

    sp: SigmaPair
    corr: MaternParams
    dim: int = 2
    family = "separable"

    def attenuation(self, i, j, x1, x2):
        self._check_component(i, j)
        return matern_matrix(_as_points(x1, self.dim), _as_points(x2, self.dim), self.corr)


@dataclass(frozen=True, eq=False)
class ParsimoniousMatern(CrossCovModel):
    """cov = sigma_ij gamma_ij M(l - l'; (nu_i + nu_j)/2, phi) with a common decay phi."""

    sp: SigmaPair
    nus: tuple
    phi: float
    dim: int = 2
    family = "parsimonious_matern"

    def __post_init__(self):
        nus = tuple(float(v) for v in self.nus)
        object.__setattr__(self, "nus", nus)
        if len(nus) != self.sp.q:
            raise ValueError("need one smoothness per component")
        if not all(v > 0 for v in nus) or not self.phi > 0:
            raise ValueError("smoothness and decay must be positive")

    @cached_property
    def gammas(self) -> np.ndarray:
        q = self.q
        g = np.ones((q, q))
        for a in range(q):
            for b in range(a + 1, q):
                g[a, b] = g[b, a] = gamma_factor(self.nus[a], self.nus[b], self.dim)
        return g

    def cross_params(self, i, j) -> MaternParams:
        return MaternParams(0.5 * (self.nus[i] + self.nus[j]), self.phi)

    def attenuation(self, i, j, x1, x2):
        self._check_component(i, j)
        m = matern_matrix(_as_points(x1, self.dim), _as_points(x2, self.dim), self.cross_params(i, j))
        return self.gammas[i, j] * m

    def colocated_cov(self) -> np.ndarray:
        return self.sp.sigma * self.gammas


@dataclass(frozen=True, eq=False)
class ProcessConvolution(CrossCovModel):
    """Component-specific convolutions of correlated white noise: cov = sigma_ij k_ij(l - l')."""

    sp: SigmaPair
    kernels: tuple
    family = "process_convolution"

    def __post_init__(self):
        ks = tuple(self.kernels)
        object.__setattr__(self, "kernels", ks)
        if len(ks) != self.sp.q or len({k.dim for k in ks}) != 1:
            raise ValueError("need one kernel per component, all in one dimension")

    @property
    def dim(self) -> int:
        return self.kernels[0].dim

    def attenuation(self, i, j, x1, x2):
        self._check_component(i, j)
        dist = cdist(_as_points(x1, self.dim), _as_points(x2, self.dim))
        uniq, inv = np.unique(dist, return_inverse=True)
        return _overlap_at(self.kernels[i], self.kernels[j], uniq)[inv].reshape(dist.shape)


def _default_cell_areas(knots: LocationSet) -> np.ndarray:
    spacing = []
    for axis in knots.coords.T:
        u = np.unique(axis)
        spacing.append((u[-1] - u[0]) / (len(u) - 1) if len(u) > 1 else 1.0)
    return np.full(knots.n, float(np.prod(spacing)))


@dataclass(frozen=True, eq=False)
class DiscretizedConvolution(CrossCovModel):
    """Knot-based discretization y_j(l) = g_j(l)^T v_j of the process convolution.

    ``areas`` holds the cell area of each knot; by default the product of the
    grid spacings, i.e. domain area / n_S on a regular grid.
    """

    sp: SigmaPair
    kernels: tuple
    knots: LocationSet
    areas: np.ndarray = None
    family = "discretized_convolution"

    def __post_init__(self):
        ks = tuple(self.kernels)
        object.__setattr__(self, "kernels", ks)
        if len(ks) != self.sp.q:
            raise ValueError("need one kernel per component")
        if self.knots.d != ks[0].dim:
            raise ValueError("knots and kernels disagree on dimension")
        areas = _default_cell_areas(self.knots) if self.areas is None else np.asarray(self.areas, float)
        if areas.shape != (self.knots.n,) or np.any(areas <= 0):
            raise ValueError("need one positive cell area per knot")
        object.__setattr__(self, "areas", areas)

    @property
    def dim(self) -> int:
        return self.knots.d

    def design(self, j, x) -> np.ndarray:
        """G_j: rows g_j(l) = (k_j(l - s_k) sqrt(area_k))_k."""
        dist = cdist(_as_points(x, self.dim), self.knots.coords)
        return self.kernels[j].radial(dist) * np.sqrt(self.areas)

    def attenuation(self, i, j, x1, x2):
        self._check_component(i, j)
        return self.design(i, x1) @ self.design(j, x2).T

    def attenuation_diag(self, i, x):
        g = self.design(i, x)
        return np.einsum("ak,ak->a", g, g)


@dataclass(frozen=True, eq=False)
class InsideOut(CrossCovModel):
    """Inside-out cross-covariance (IOX) over a reference set S.

    y_j(l) = h_j(l)^T L_j v_j + r_j(l)^{1/2} v_j(l) with L_j the lower Cholesky
    factor of rho_j(S).  cov = sigma_ij f_ij(l, l'; S).
    """

    sp: SigmaPair
    corrs: tuple
    reference: LocationSet
    family = "inside_out"

    def __post_init__(self):
        cs = tuple(self.corrs)
        object.__setattr__(self, "corrs", cs)
        if len(cs) != self.sp.q:
            raise ValueError("need one correlation function per component")

    @property
    def dim(self) -> int:
        return self.reference.d

    @cached_property
    def factors(self) -> tuple:
        """Lower Cholesky factor of rho_j(S) for every component."""
        out = []
        s = self.reference.coords
        for j, p in enumerate(self.corrs):
            r = matern_matrix(s, s, p)
            try:
                out.append(np.linalg.cholesky(r))
            except np.linalg.LinAlgError:
                log.warning("rho_%d(S) not numerically PD; adding jitter %.0e", j, IOX_JITTER)
                try:
                    out.append(np.linalg.cholesky(r + IOX_JITTER * np.eye(len(s))))
                except np.linalg.LinAlgError:
                    raise np.linalg.LinAlgError(f"rho_{j}(S) is singular (component {j})") from None
        return tuple(out)

    def loading_rows(self, j, x) -> np.ndarray:
        """Rows h_j(l)^T L_j for each point l of ``x`` (exact rows of L_j on S)."""
        x = _as_points(x, self.dim)
        lj = self.factors[j]
        idx = self.reference.index_of(x)
        out = np.empty((x.shape[0], self.reference.n))
        inside = idx >= 0
        if inside.any():
            out[inside] = lj[idx[inside]]
        if (~inside).any():
            cross = matern_matrix(self.reference.coords, x[~inside], self.corrs[j])
            out[~inside] = sla.solve_triangular(lj, cross, lower=True).T
        return out

    def residual_var(self, j, x) -> np.ndarray:
        """r_j(l): exactly zero on S, clamped at zero elsewhere."""
        x = _as_points(x, self.dim)
        rows = self.loading_rows(j, x)
        r = np.maximum(1.0 - np.einsum("ak,ak->a", rows, rows), 0.0)
        r[self.reference.index_of(x) >= 0] = 0.0
        return r

    def attenuation(self, i, j, x1, x2):
        self._check_component(i, j)
        x1, x2 = _as_points(x1, self.dim), _as_points(x2, self.dim)
        f = self.loading_rows(i, x1) @ self.loading_rows(j, x2).T
        same = np.all(x1[:, None, :] == x2[None, :, :], axis=2)
        if same.any():
            ri = np.sqrt(self.residual_var(i, x1))
            rj = np.sqrt(self.residual_var(j, x2))
            f = f + same * np.outer(ri, rj)
        return f

    def attenuation_diag(self, i, x):
        # var = sigma_ii rho_i(l, l) = sigma_ii
        return np.ones(_as_points(x, self.dim).shape[0])


@dataclass(frozen=True, eq=False)
class LMC(CrossCovModel):
    """Linear model of coregionalization Y = Lambda W with independent Matérn latents."""

    loadings: np.ndarray
    corrs: tuple
    dim: int = 2
    inside_out = False
    family = "lmc"

    def __post_init__(self):
        lam = np.array(self.loadings, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ValueError("LMC loadings must be square (full rank)")
        cs = tuple(self.corrs)
        if len(cs) != lam.shape[0]:
            raise ValueError("need one latent correlation per column of the loadings")
        if len(set(cs)) != len(cs):
            raise ValueError("latent correlation functions must be distinct")
        if not np.isfinite(np.linalg.cond(lam)) or np.linalg.cond(lam) > 1e12:
            raise ValueError("LMC loadings are singular")
        lam.setflags(write=False)
        object.__setattr__(self, "loadings", lam)
        object.__setattr__(self, "corrs", cs)

    @property
    def q(self) -> int:
        return self.loadings.shape[0]

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.loadings))

    @cached_property
    def sp(self) -> SigmaPair:
        return SigmaPair.from_sigma(self.loadings @ self.loadings.T)

    @cached_property
    def inverse_loadings(self) -> np.ndarray:
        return np.linalg.inv(self.loadings)

    def attenuation(self, i, j, x1, x2):
        raise TypeError("the LMC has no sigma-free attenuation")

    def corr_attenuation(self, i, j, x1, x2):
        raise TypeError("the LMC has no sigma-free attenuation")

    def cross_block(self, i, j, x1, x2):
        self._check_component(i, j)
        x1, x2 = _as_points(x1, self.dim), _as_points(x2, self.dim)
        lam = self.loadings
        out = np.zeros((x1.shape[0], x2.shape[0]))
        for r, p in enumerate(self.corrs):
            w = lam[i, r] * lam[j, r]
            if w != 0.0:
                out += w * matern_matrix(x1, x2, p)
        return out

    def variance(self, i, x):
        return np.full(_as_points(x, self.dim).shape[0], float(np.sum(self.loadings[i] ** 2)))

    def with_sigma(self, sp):
        raise TypeError("the LMC is parametrized by its loadings, not by sigma")


# ---------------------------------------------------------------------------
# assembly


def cross_cov_entry(model: CrossCovModel, i: int, j: int, l1, l2) -> float:
    """cov{y_i(l1), y_j(l2)} for single points (zero-based components)."""
    model._check_component(i, j)
    return float(model.cross_block(i, j, _as_points(l1, model.dim), _as_points(l2, model.dim))[0, 0])


def build_joint_cov(model: CrossCovModel, locs: LocationSet, max_nq: int = DEFAULT_MAX_NQ) -> np.ndarray:
    """Joint covariance of vec(Y) at ``locs``, component-major (row j*n + a)."""
    n, q = locs.n, model.q
    if n * q > max_nq:
        raise CovarianceSizeError(f"nq = {n * q} exceeds the cap of {max_nq}")
    x = locs.coords
    out = np.empty((n * q, n * q))
    for i in range(q):
        for j in range(i, q):
            blk = model.cross_block(i, j, x, x)
            out[i * n:(i + 1) * n, j * n:(j + 1) * n] = blk
            if j != i:
                out[j * n:(j + 1) * n, i * n:(i + 1) * n] = blk.T
    # off-diagonal blocks are exact transposes; diagonal blocks symmetric up to rounding
    return 0.5 * (out + out.T)


def iox_weights(model: InsideOut, j: int, point) -> tuple[np.ndarray, float]:
    """(h_j(l), r_j(l)) for one point: interpolation weights and residual variance."""
    model._check_component(j)
    pt = _as_points(point, model.dim)
    k = model.reference.index_of(pt)[0]
    n = model.reference.n
    if k >= 0:
        h = np.zeros(n)
        h[k] = 1.0
        return h, 0.0
    lj = model.factors[j]
    cross = matern_matrix(model.reference.coords, pt, model.corrs[j])[:, 0]
    h = sla.cho_solve((lj, True), cross)
    r = 1.0 - float(h @ cross)
    return h, max(r, 0.0)
