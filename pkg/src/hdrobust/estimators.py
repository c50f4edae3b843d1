"""Location/scatter estimation: sample and pooled covariance, regularization,
exact and FAST-MCD, and the robust univariate estimators used by projection pursuit."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import integrate
from scipy.stats import chi2

from .seeds import derive_seed

HUBER_C = 1.345          # 95% efficiency at the normal
BIWEIGHT_C = 1.547645    # 50% breakdown for the Tukey biweight S-scale

UNIVARIATE_KINDS = ("classical", "median_mad", "huber", "s_estimator")


class McdInfeasibleError(ValueError):
    """MCD cannot be computed for the requested (n, p, h)."""


class ExactFitError(ValueError):
    """An h-subset has singular covariance: the data lie on a lower-dimensional flat."""


@dataclass(frozen=True)
class LocationScatter:
    """A location vector and SPD scatter matrix plus estimation metadata."""

    mu: np.ndarray
    sigma: np.ndarray
    method: str
    h: int | None = None
    support: tuple[int, ...] | None = None
    consistency: float = 1.0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(f"sigma shape {sigma.shape} does not match p={mu.size}")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ValueError("sigma is not symmetric within 1e-12")
        if self.method.startswith("mcd"):
            if self.support is None or self.h is None or len(self.support) != self.h:
                raise ValueError("MCD estimates must record an h-sized support")
            if _chol_logdet(sigma) is None:
                raise ValueError("MCD scatter must be positive definite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class RegularizationSpec:
    """none, ridge (sigma + lambda I) or convex ((1-a) sigma + (a/p) tr(sigma) I)."""

    kind: str = "none"
    lam: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("none", "ridge", "convex"):
            raise ValueError(f"unknown regularization kind {self.kind!r}")
        if self.kind == "ridge" and self.lam <= 0:
            raise ValueError(f"ridge needs lambda > 0, got {self.lam}")
        if self.kind == "convex" and not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"convex needs alpha in (0,1], got {self.alpha}")

    def describe(self) -> str:
        if self.kind == "ridge":
            return f"ridge(lambda={self.lam:g})"
        if self.kind == "convex":
            return f"convex(alpha={self.alpha:g})"
        return "none"


@dataclass(frozen=True)
class UnivariateEstimate:
    location: float
    scale: float
    kind: str
    degenerate: bool = False


def _chol_logdet(sigma: np.ndarray) -> float | None:
    """Log-determinant via Cholesky; None when sigma is not positive definite."""
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(chol)
    if not np.all(diag > 0):
        return None
    return 2.0 * float(np.log(diag).sum())


def _mean_cov(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    d = x - mu
    return mu, d.T @ d / (x.shape[0] - 1)


def sample_mean_cov(x: np.ndarray) -> LocationScatter:
    """Sample mean and unbiased (n-1 denominator) covariance."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need a 2-D matrix with n >= 2 rows, got shape {x.shape}")
    mu, sigma = _mean_cov(x)
    return LocationScatter(mu, sigma, "sample")


def pooled_cov(groups: list[tuple[int, np.ndarray]]) -> np.ndarray:
    """Pooled covariance sum_k (n_k - 1) S_k / (sum_k n_k - G)."""
    if not groups:
        raise ValueError("no groups")
    denom = sum(n for n, _ in groups) - len(groups)
    if denom <= 0:
        raise ValueError(f"pooled covariance needs sum n_k > G, got denominator {denom}")
    num = sum((n - 1) * np.asarray(s, dtype=float) for n, s in groups)
    return num / denom


def regularize(sigma: np.ndarray, spec: RegularizationSpec) -> np.ndarray:
    """Apply the requested shrinkage; convex preserves the trace."""
    sigma = np.asarray(sigma, dtype=float)
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("sigma must be symmetric")
    p = sigma.shape[0]
    if spec.kind == "ridge":
        return sigma + spec.lam * np.eye(p)
    if spec.kind == "convex":
        return (1.0 - spec.alpha) * sigma + (spec.alpha / p) * np.trace(sigma) * np.eye(p)
    return sigma


def default_h(n: int, p: int) -> int:
    """MCD subset size floor((n+p+1)/2), clamped to [ceil(n/2), n-1]."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    h = (n + p + 1) // 2
    lo, hi = math.ceil(n / 2), n - 1
    if h > hi:
        warnings.warn(
            f"default h={h} exceeds n-1={hi}; clamping (MCD still needs h > p)",
            stacklevel=2,
        )
    return min(max(h, lo), hi)


def mcd_consistency_factor(n: int, h: int, p: int) -> float:
    """Multiplicative factor making the raw h-subset covariance consistent at the normal."""
    if h >= n:
        return 1.0
    q = h / n
    return q / float(chi2.cdf(chi2.ppf(q, p), p + 2))


def _check_mcd_args(x: np.ndarray, h: int) -> tuple[int, int]:
    n, p = x.shape
    if not p < h:
        raise McdInfeasibleError(
            f"the MCD estimator cannot be computed when p>h or p=h (p={p}, h={h})"
        )
    if h > n:
        raise McdInfeasibleError(f"h={h} exceeds n={n}")
    return n, p


def mcd_exact(x: np.ndarray, h: int) -> LocationScatter:
    """Exhaustive MCD: enumerate all C(n,h) subsets, keep the smallest determinant.

    Ties go to the lexicographically smallest index set.  Guarded to n <= 25.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = _check_mcd_args(x, h)
    if n > 25:
        raise ValueError(f"enumeration guard: mcd_exact allows n <= 25, got {n}")
    best_logdet = np.inf
    best: tuple[np.ndarray, np.ndarray, tuple[int, ...]] | None = None
    for subset in combinations(range(n), h):
        mu, sigma = _mean_cov(x[list(subset)])
        logdet = _chol_logdet(sigma)
        if logdet is None:
            raise ExactFitError(
                f"subset {subset} has singular covariance; data lie on a lower-dimensional flat"
            )
        if logdet < best_logdet:
            best_logdet = logdet
            best = (mu, sigma, subset)
    assert best is not None
    mu, sigma, subset = best
    factor = mcd_consistency_factor(n, h, p)
    return LocationScatter(mu, factor * sigma, "mcd_exact", h, subset, factor)


def c_step_refine(
    x: np.ndarray,
    h: int,
    mu: np.ndarray,
    sigma: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Concentration steps from an initial estimate until the determinant stalls.

    Each step keeps the h smallest Mahalanobis distances and re-estimates.
    Returns (mu, sigma, support, logdet trace); the trace is non-increasing.
    """
    logdets = []
    support = np.arange(h)
    prev = np.inf
    for _ in range(max_iter):
        diff = x - mu
        sol = np.linalg.solve(sigma, diff.T)
        dist = np.einsum("ij,ji->i", diff, sol)
        support = np.sort(np.argsort(dist, kind="stable")[:h])
        mu, sigma = _mean_cov(x[support])
        logdet = _chol_logdet(sigma)
        if logdet is None:
            raise ExactFitError("C-step produced a singular h-subset covariance")
        logdets.append(logdet)
        if prev - logdet < tol:
            break
        prev = logdet
    return mu, sigma, support, np.asarray(logdets)


def mcd_fast(x: np.ndarray, h: int, n_starts: int = 500, seed: int = 0) -> LocationScatter:
    """FAST-MCD: random (p+1)-subset starts refined by C-steps; best determinant wins.

    Deterministic given seed; ties across starts go to the smallest start index.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = _check_mcd_args(x, h)
    if np.unique(x, axis=0).shape[0] < p + 1:
        raise ValueError(f"need at least p+1={p + 1} distinct rows")
    best_logdet = np.inf
    best: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    for s in range(n_starts):
        rng = np.random.default_rng(derive_seed(seed, s))
        idx = rng.choice(n, size=p + 1, replace=False)
        mu, sigma = _mean_cov(x[idx])
        while _chol_logdet(sigma) is None and idx.size < n:
            # degenerate start: grow the subset until its covariance is invertible
            extra = rng.choice(np.setdiff1d(np.arange(n), idx), size=1)
            idx = np.concatenate([idx, extra])
            mu, sigma = _mean_cov(x[idx])
        if _chol_logdet(sigma) is None:
            raise ExactFitError("all rows together have singular covariance")
        mu, sigma, support, trace = c_step_refine(x, h, mu, sigma)
        if trace[-1] < best_logdet:
            best_logdet = trace[-1]
            best = (mu, sigma, support)
    assert best is not None
    mu, sigma, support = best
    factor = mcd_consistency_factor(n, h, p)
    return LocationScatter(
        mu, factor * sigma, "mcd_fast", h, tuple(int(i) for i in support), factor
    )


# ---------------------------------------------------------------------------
# Robust univariate location/scale
# ---------------------------------------------------------------------------

def _mad_scale(x: np.ndarray, med: np.ndarray) -> np.ndarray:
    return 1.4826 * np.median(np.abs(x - med), axis=0)


def _fallback_scale(x: np.ndarray, med: np.ndarray) -> np.ndarray:
    # mean absolute deviation about the median, scaled for normal consistency;
    # needed when more than half the sample sits exactly at the median
    return np.sqrt(np.pi / 2.0) * np.mean(np.abs(x - med), axis=0)


def _robust_start(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Median location, MAD scale with mean-AD fallback, and a degeneracy mask."""
    med = np.median(x, axis=0)
    scale = _mad_scale(x, med)
    zero = scale == 0.0
    if np.any(zero):
        fb = _fallback_scale(x, med)
        scale = np.where(zero, fb, scale)
    return med, scale, scale == 0.0


def _huber_location(x: np.ndarray, scale: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Huber M-location with fixed scale, vectorized over columns.

    Newton steps on the convex M-objective (psi piecewise linear) converge in
    a handful of iterations from the median start.
    """
    m = np.median(x, axis=0)
    s = np.where(scale > 0, scale, 1.0)
    out = m.copy()
    active = np.arange(x.shape[1])
    xa, ma, sa = x, m, s
    for _ in range(100):
        u = (xa - ma) / sa
        psi = np.clip(u, -HUBER_C, HUBER_C)
        inside = np.abs(u) <= HUBER_C
        den = np.maximum(inside.mean(axis=0), 1.0 / xa.shape[0])
        step = np.clip(psi.mean(axis=0) / den, -3.0, 3.0)
        m_new = ma + sa * step
        conv = np.abs(m_new - ma) <= tol * sa
        ma = m_new
        if conv.any():
            out[active[conv]] = ma[conv]
            keep = ~conv
            active, xa, ma, sa = active[keep], xa[:, keep], ma[keep], sa[keep]
            if active.size == 0:
                return out
    out[active] = ma
    return out


def _biweight_rho(u: np.ndarray, c: float) -> np.ndarray:
    t = np.minimum(u * u * (1.0 / (c * c)), 1.0)
    omt = 1.0 - t
    return (c * c / 6.0) * (1.0 - omt * omt * omt)


def _biweight_b(c: float = BIWEIGHT_C) -> float:
    """Expected biweight rho under the standard normal (consistency constant)."""
    val, _ = integrate.quad(
        lambda z: _biweight_rho(np.asarray(z), c) * math.exp(-z * z / 2.0) / math.sqrt(2 * math.pi),
        -np.inf,
        np.inf,
    )
    return val


_BIWEIGHT_B = None


def _s_estimate(x: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Tukey-biweight S-scale with its associated M-location, vectorized over columns.

    The scale solves mean(rho((x-m)/s)) = b by damped Newton steps in log s,
    alternating with weighted-mean location updates.
    """
    global _BIWEIGHT_B
    if _BIWEIGHT_B is None:
        _BIWEIGHT_B = _biweight_b()
    b = _BIWEIGHT_B
    c = BIWEIGHT_C
    med, s0, degenerate = _robust_start(x)
    out_m = med.copy()
    out_s = np.where(degenerate, 0.0, s0)
    active = np.flatnonzero(~degenerate)
    xa, ma, sa = x[:, active], med[active], s0[active]
    inv_c2 = 1.0 / (c * c)
    for _ in range(100):
        if active.size == 0:
            break
        u = (xa - ma) / sa
        t = np.minimum(u * u * inv_c2, 1.0)
        omt = 1.0 - t
        w = omt * omt
        # location: Newton on the M-equation when safe, IRLS otherwise
        psi_mean = (u * w).mean(axis=0)
        dpsi_mean = (omt * (1.0 - 5.0 * t)).mean(axis=0)
        wsum = w.sum(axis=0)
        irls = np.where(wsum > 0, (w * xa).sum(axis=0) / np.where(wsum > 0, wsum, 1.0), ma)
        safe = dpsi_mean > 0.2 * np.maximum(wsum / xa.shape[0], 1e-12)
        newton = ma + sa * np.clip(psi_mean / np.maximum(dpsi_mean, 1e-12), -3.0, 3.0)
        m_new = np.where(safe, newton, irls)
        # scale: Newton in log s on mean rho = b
        u = (xa - m_new) / sa
        t = np.minimum(u * u * inv_c2, 1.0)
        omt = 1.0 - t
        gap = (c * c / 6.0) * (1.0 - omt * omt * omt).mean(axis=0) - b
        slope = (u * u * omt * omt).mean(axis=0)
        step = np.clip(gap / np.maximum(slope, 1e-12), -2.0, 2.0)
        conv = (np.abs(m_new - ma) <= tol * sa) & (np.abs(step) <= tol)
        ma, sa = m_new, np.maximum(sa * np.exp(step), 1e-300)
        if conv.any():
            out_m[active[conv]] = ma[conv]
            out_s[active[conv]] = sa[conv]
            keep = ~conv
            active, xa, ma, sa = active[keep], xa[:, keep], ma[keep], sa[keep]
    out_m[active] = ma
    out_s[active] = sa
    return out_m, out_s


def location_scale(x: np.ndarray, kind: str, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise (location, scale) of a 2-D array for the given estimator kind."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("location_scale expects a 2-D array")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    if kind == "classical":
        return x.mean(axis=0), x.std(axis=0, ddof=1)
    if kind == "median_mad":
        med = np.median(x, axis=0)
        return med, _mad_scale(x, med)
    if kind == "huber":
        med, scale, degenerate = _robust_start(x)
        loc = _huber_location(x, scale, tol)
        return np.where(degenerate, med, loc), np.where(degenerate, 0.0, scale)
    if kind == "s_estimator":
        return _s_estimate(x, tol)
    raise ValueError(f"unknown estimator kind {kind!r}")


def univariate(x, kind: str) -> UnivariateEstimate:
    """Robust or classical location/scale of a 1-D sample."""
    col = np.asarray(x, dtype=float).ravel()[:, None]
    if col.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    loc, scale = location_scale(col, kind)
    return UnivariateEstimate(float(loc[0]), float(scale[0]), kind, degenerate=bool(scale[0] == 0.0))
