"""Synthetic data: covariance builders, Gaussian sampling, contamination mixtures."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .dataset import LabeledDataset
from .seeds import derive_seed


@dataclass(frozen=True)
class CovSpec:
    """Covariance family tau * C(rho): equicorrelation or first-order autoregressive."""

    kind: str
    tau: float
    rho: float
    p: int

    def __post_init__(self):
        if self.kind not in ("equicorrelation", "ar1"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.p < 1:
            raise ValueError(f"p must be positive, got {self.p}")
        if self.kind == "equicorrelation" and not 0.0 <= self.rho < 1.0:
            raise ValueError(f"equicorrelation needs rho in [0,1), got {self.rho}")
        if self.kind == "ar1" and not -1.0 < self.rho < 1.0:
            raise ValueError(f"ar1 needs rho in (-1,1), got {self.rho}")


@dataclass(frozen=True)
class ContaminationSpec:
    """Mixture parameters: rate epsilon, location shift eta, scatter inflation kappa."""

    epsilon: float
    eta: tuple[float, ...]
    kappa: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0,1], got {self.epsilon}")
        if self.kappa < 1.0:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        object.__setattr__(self, "eta", tuple(float(v) for v in self.eta))

    @classmethod
    def constant_shift(cls, epsilon: float, p: int, shift: float = 3.0, kappa: float = 9.0):
        """Shift every coordinate by the same amount (the default eta = shift * 1_p)."""
        return cls(epsilon, (shift,) * p, kappa)

    @property
    def eta_array(self) -> np.ndarray:
        return np.asarray(self.eta, dtype=float)


@dataclass(frozen=True)
class SimDesign:
    """Full description of one synthetic classification experiment."""

    G: int
    p: int
    n_per_class: tuple[int, ...]
    class_means: tuple[tuple[float, ...], ...]
    cov: CovSpec
    contamination: ContaminationSpec
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.G < 2:
            raise ValueError(f"need G >= 2, got {self.G}")
        if len(self.n_per_class) != self.G:
            raise ValueError("n_per_class must have length G")
        if any(n < 2 for n in self.n_per_class):
            raise ValueError("every class needs n_k >= 2")
        if len(self.class_means) != self.G:
            raise ValueError("class_means must have length G")
        if any(len(m) != self.p for m in self.class_means):
            raise ValueError("every class mean must have length p")
        if self.cov.p != self.p:
            raise ValueError("cov.p disagrees with design p")
        if len(self.contamination.eta) != self.p:
            raise ValueError("eta must have length p")
        object.__setattr__(self, "n_per_class", tuple(int(n) for n in self.n_per_class))
        object.__setattr__(
            self, "class_means", tuple(tuple(float(v) for v in m) for m in self.class_means)
        )
        if not self.name:
            c = self.contamination
            object.__setattr__(
                self,
                "name",
                f"sim-G{self.G}-p{self.p}-rho{self.cov.rho:g}-eps{c.epsilon:g}-kappa{c.kappa:g}",
            )

    @property
    def n(self) -> int:
        return sum(self.n_per_class)

    def mean(self, k: int) -> np.ndarray:
        return np.asarray(self.class_means[k - 1], dtype=float)


def default_design(
    G: int,
    p: int,
    rho: float,
    epsilon: float,
    *,
    n_per_class: int = 30,
    kappa: float = 9.0,
    cov_kind: str = "equicorrelation",
    tau: float = 1.0,
    eta_shift: float = 3.0,
    mean_delta: float = 2.0,
    seed: int = 0,
) -> SimDesign:
    """The documented default design: class k mean at (k-1)*mean_delta along axis 1."""
    means = tuple(
        tuple(((k * mean_delta) if j == 0 else 0.0) for j in range(p)) for k in range(G)
    )
    return SimDesign(
        G=G,
        p=p,
        n_per_class=(n_per_class,) * G,
        class_means=means,
        cov=CovSpec(cov_kind, tau, rho, p),
        contamination=ContaminationSpec.constant_shift(epsilon, p, eta_shift, kappa),
        seed=seed,
    )


def build_cov(spec: CovSpec) -> np.ndarray:
    """Materialize the covariance matrix and verify positive definiteness."""
    if spec.kind == "equicorrelation":
        sigma = spec.tau * ((1.0 - spec.rho) * np.eye(spec.p) + spec.rho * np.ones((spec.p, spec.p)))
    else:
        idx = np.arange(spec.p)
        sigma = spec.tau * spec.rho ** np.abs(idx[:, None] - idx[None, :])
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError(f"covariance for {spec} is not positive definite") from None
    return sigma


@lru_cache(maxsize=32)
def _cov_and_chol(spec: CovSpec) -> tuple[np.ndarray, np.ndarray]:
    sigma = build_cov(spec)
    chol = np.linalg.cholesky(sigma)
    sigma.setflags(write=False)
    chol.setflags(write=False)
    return sigma, chol


def sample_mvn(
    mu: np.ndarray,
    sigma: np.ndarray,
    n: int,
    seed: int,
    chol: np.ndarray | None = None,
) -> np.ndarray:
    """Draw n i.i.d. rows x = mu + L z with L the lower Cholesky factor of sigma."""
    mu = np.asarray(mu, dtype=float).ravel()
    if chol is None:
        try:
            chol = np.linalg.cholesky(np.asarray(sigma, dtype=float))
        except np.linalg.LinAlgError:
            raise ValueError("sigma is not symmetric positive definite") from None
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, mu.size))
    return mu + z @ chol.T


class ClassSample(NamedTuple):
    x: np.ndarray
    contaminated: np.ndarray  # boolean per-row flags, kept for diagnostics


def sample_contaminated_class(k: int, design: SimDesign) -> ClassSample:
    """Sample class k's rows from the epsilon-contamination mixture.

    Each row is drawn from N(mu_k, Sigma) with probability 1-epsilon and from
    N(mu_k + eta, kappa * Sigma) otherwise.
    """
    if not 1 <= k <= design.G:
        raise ValueError(f"class index {k} outside 1..{design.G}")
    n_k = design.n_per_class[k - 1]
    mu = design.mean(k)
    _, chol = _cov_and_chol(design.cov)
    c = design.contamination
    rng = np.random.default_rng(derive_seed(design.seed, k))
    flags = rng.random(n_k) < c.epsilon
    z = rng.standard_normal((n_k, design.p))
    x = mu + z @ chol.T
    if flags.any():
        # contaminated rows: shift by eta, inflate scatter by kappa
        x[flags] = mu + c.eta_array + np.sqrt(c.kappa) * (z[flags] @ chol.T)
    return ClassSample(x, flags)


def generate(design: SimDesign) -> LabeledDataset:
    """Generate the full labeled dataset: class-blocked sampling, then a global shuffle."""
    blocks = []
    labels = []
    for k in range(1, design.G + 1):
        xk, _ = sample_contaminated_class(k, design)
        blocks.append(xk)
        labels.append(np.full(xk.shape[0], k, dtype=np.int64))
    x = np.vstack(blocks)
    y = np.concatenate(labels)
    perm = np.random.default_rng(design.seed).permutation(x.shape[0])
    return LabeledDataset(x[perm], y[perm], name=design.name)
