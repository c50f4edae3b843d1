"""Discriminant-family classifiers: classic and MCD-robust linear discriminants,
diagonal discriminant analysis, projection-pursuit discrimination (four robust
flavours) and a simplified robust SIMCA, all behind one fit/predict contract."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dataset import LabeledDataset
from .estimators import (
    RegularizationSpec,
    default_h,
    location_scale,
    mcd_fast,
    pooled_cov,
    regularize,
    sample_mean_cov,
)
from .seeds import derive_seed


class SingularCovarianceError(ValueError):
    """Pooled covariance is singular; regularization is required."""


class DegenerateProjectionError(ValueError):
    """No projection direction separates the classes (zero scale everywhere)."""


def _as_rows(x: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.shape[1] != p:
        raise ValueError(f"expected {p} features, got {rows.shape[1]}")
    return rows, single


def _spd_inverse(sigma: np.ndarray) -> np.ndarray:
    factor = cho_factor(sigma, lower=True, check_finite=False)
    inv = cho_solve(factor, np.eye(sigma.shape[0]), check_finite=False)
    return (inv + inv.T) / 2.0


def _class_blocks(train: LabeledDataset) -> list[np.ndarray]:
    return [train.features[train.class_rows(k)] for k in range(1, train.n_classes + 1)]


def _log_priors(train: LabeledDataset) -> np.ndarray:
    counts = np.bincount(train.labels, minlength=train.n_classes + 1)[1:]
    return np.log(counts / train.n)


# ---------------------------------------------------------------------------
# Linear discriminants (classic and MCD-robust)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscriminantModel:
    """Per-class means with a shared precision matrix and log priors."""

    class_means: np.ndarray        # (G, p)
    precision: np.ndarray          # (p, p)
    log_priors: np.ndarray         # (G,)
    covariance_method: str
    regularization: RegularizationSpec

    def __post_init__(self):
        if abs(float(np.exp(self.log_priors).sum()) - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")
        if not np.allclose(self.precision, self.precision.T, atol=1e-10):
            raise ValueError("precision must be symmetric")

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    def predict(self, x: np.ndarray) -> np.ndarray | int:
        rows, single = _as_rows(x, self.class_means.shape[1])
        scores = _score_matrix(self, rows)
        labels = np.argmax(scores, axis=1) + 1
        return int(labels[0]) if single else labels


def _score_matrix(model: DiscriminantModel, rows: np.ndarray) -> np.ndarray:
    scores = np.empty((rows.shape[0], model.n_classes))
    for k in range(model.n_classes):
        d = rows - model.class_means[k]
        quad = np.einsum("ij,jk,ik->i", d, model.precision, d)
        scores[:, k] = -0.5 * quad + model.log_priors[k]
    return scores


def discriminant_scores(model: DiscriminantModel, x: np.ndarray) -> np.ndarray:
    """delta_k(x) = -1/2 (x-mu_k)' P (x-mu_k) + log pi_k for every class."""
    rows, single = _as_rows(x, model.class_means.shape[1])
    scores = _score_matrix(model, rows)
    return scores[0] if single else scores


def lda_fit(
    train: LabeledDataset, reg: RegularizationSpec = RegularizationSpec()
) -> DiscriminantModel:
    """Classic LDA: per-class sample means, pooled covariance, observed priors."""
    blocks = _class_blocks(train)
    if any(b.shape[0] < 2 for b in blocks):
        raise ValueError("every class needs at least 2 training rows")
    estimates = [sample_mean_cov(b) for b in blocks]
    sigma = pooled_cov([(b.shape[0], e.sigma) for b, e in zip(blocks, estimates)])
    sigma = regularize(sigma, reg)
    try:
        precision = _spd_inverse(sigma)
    except np.linalg.LinAlgError:
        if reg.kind == "none":
            raise SingularCovarianceError(
                f"pooled covariance is singular at n={train.n}, p={train.p}; "
                "apply ridge or convex regularization"
            ) from None
        raise SingularCovarianceError(
            f"covariance still singular after {reg.describe()}"
        ) from None
    return DiscriminantModel(
        np.vstack([e.mu for e in estimates]), precision, _log_priors(train), "sample", reg
    )


def linda_fit(
    train: LabeledDataset,
    reg: RegularizationSpec = RegularizationSpec(),
    h: int | None = None,
    n_starts: int = 50,
    seed: int = 0,
) -> DiscriminantModel:
    """MCD-robust LDA: per-class FAST-MCD location/scatter pooled with weights h_k."""
    blocks = _class_blocks(train)
    p = train.p
    estimates = []
    for k, b in enumerate(blocks, start=1):
        h_k = default_h(b.shape[0], p) if h is None else h
        estimates.append(mcd_fast(b, h_k, n_starts=n_starts, seed=derive_seed(seed, k)))
    sigma = pooled_cov([(e.h, e.sigma) for e in estimates])
    sigma = regularize(sigma, reg)
    try:
        precision = _spd_inverse(sigma)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            f"pooled MCD covariance is singular at p={p}; apply regularization"
        ) from None
    return DiscriminantModel(
        np.vstack([e.mu for e in estimates]), precision, _log_priors(train), "mcd", reg
    )


# ---------------------------------------------------------------------------
# Diagonal discriminant analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DdaModel:
    """Diagonal LDA: per-class means with pooled per-feature variances."""

    class_means: np.ndarray
    pooled_variances: np.ndarray
    log_priors: np.ndarray
    floored: bool = False

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    def scores(self, x: np.ndarray) -> np.ndarray:
        rows, single = _as_rows(x, self.class_means.shape[1])
        out = np.empty((rows.shape[0], self.n_classes))
        for k in range(self.n_classes):
            d = rows - self.class_means[k]
            out[:, k] = -0.5 * (d * d / self.pooled_variances).sum(axis=1) + self.log_priors[k]
        return out[0] if single else out

    def predict(self, x: np.ndarray) -> np.ndarray | int:
        rows, single = _as_rows(x, self.class_means.shape[1])
        labels = np.argmax(self.scores(rows), axis=1) + 1
        return int(labels[0]) if single else labels


def dda_fit(train: LabeledDataset) -> DdaModel:
    """Diagonal discriminant analysis; feasible for p much larger than n."""
    if train.n <= train.n_classes:
        raise ValueError("need n > G")
    blocks = _class_blocks(train)
    means = np.vstack([b.mean(axis=0) for b in blocks])
    num = np.zeros(train.p)
    for b in blocks:
        d = b - b.mean(axis=0)
        num += (d * d).sum(axis=0)
    variances = num / (train.n - train.n_classes)
    floored = bool(np.any(variances < 1e-12))
    return DdaModel(means, np.maximum(variances, 1e-12), _log_priors(train), floored)


# ---------------------------------------------------------------------------
# Projection pursuit discrimination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairRule:
    first: int
    second: int
    direction: np.ndarray   # unit p-vector
    cutoff: float
    orientation: int        # +1: projections above the cutoff vote `first`


@dataclass(frozen=True)
class PPModel:
    pairs: tuple[PairRule, ...]
    estimator_kind: str
    n_classes: int

    def predict(self, x: np.ndarray) -> np.ndarray | int:
        return pp_predict(self, x)


def _unit_rows(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1)
    keep = norms > 1e-12
    return a[keep] / norms[keep, None]


_SEARCH_TOL = 1e-6  # candidate ranking needs far less precision than final cutoffs


def _pair_index(pj: np.ndarray, pk: np.ndarray, kind: str) -> np.ndarray:
    """Separation index per candidate column: |m_j - m_k| / (s_j + s_k)."""
    c = pj.shape[1]
    if pj.shape[0] == pk.shape[0]:
        m, s = location_scale(np.concatenate([pj, pk], axis=1), kind, tol=_SEARCH_TOL)
        mj, sj, mk, sk = m[:c], s[:c], m[c:], s[c:]
    else:
        mj, sj = location_scale(pj, kind, tol=_SEARCH_TOL)
        mk, sk = location_scale(pk, kind, tol=_SEARCH_TOL)
    denom = sj + sk
    with np.errstate(divide="ignore", invalid="ignore"):
        idx = np.abs(mj - mk) / denom
    return np.where(denom > 1e-300, idx, -np.inf)


def pp_fit(
    train: LabeledDataset,
    estimator_kind: str,
    seed: int = 0,
    n_random: int = 200,
) -> PPModel:
    """Per class pair, search for the unit direction maximizing the robust
    separation index, then place a scale-weighted cutoff on the projection.

    Candidates are all robust-center difference directions, n_random seeded
    random unit directions per pair, and all cross-pair data-point differences
    when the training set has at most 100 rows.  The best candidate is refined
    by 50 rounds of coordinate-wise perturbation (initial step 0.1, halved
    when a round fails to improve); each round sweeps a bounded round-robin
    slice of coordinates so the search stays tractable at large p.
    """
    g = train.n_classes
    if g < 2:
        raise ValueError("need at least 2 classes")
    blocks = _class_blocks(train)
    if any(b.shape[0] < 3 for b in blocks):
        raise ValueError("every class needs at least 3 training rows")
    p = train.p
    centers = np.vstack([location_scale(b, estimator_kind, tol=_SEARCH_TOL)[0] for b in blocks])
    center_diffs = np.vstack(
        [centers[a] - centers[b] for a, b in combinations(range(g), 2)]
    )
    # full coordinate sweeps while affordable; bounded round-robin slices at
    # large p, where the candidate set has to carry the search anyway
    n_coords = p if p <= 128 else max(1, 256 // p)

    rules = []
    for ordinal, (j, k) in enumerate(combinations(range(1, g + 1), 2)):
        xj, xk = blocks[j - 1], blocks[k - 1]
        cands = [center_diffs]
        if train.n <= 100:
            diffs = (xj[:, None, :] - xk[None, :, :]).reshape(-1, p)
            cands.append(diffs)
        rng = np.random.default_rng(derive_seed(seed, ordinal + 1))
        cands.append(rng.standard_normal((n_random, p)))
        a_matrix = _unit_rows(np.vstack(cands))
        if a_matrix.shape[0] == 0:
            raise DegenerateProjectionError(f"no usable candidate direction for pair ({j},{k})")
        index = _pair_index(xj @ a_matrix.T, xk @ a_matrix.T, estimator_kind)
        best = int(np.argmax(index))
        if not np.isfinite(index[best]):
            raise DegenerateProjectionError(
                f"classes {j} and {k} are constant along every candidate direction"
            )
        a, best_index = a_matrix[best], index[best]

        # coordinate-wise refinement
        step = 0.1
        pos = 0
        for _ in range(50):
            if step < 1e-7:
                break
            coords = [(pos + i) % p for i in range(n_coords)]
            pos = (pos + n_coords) % p
            trials = np.repeat(a[None, :], 2 * len(coords), axis=0)
            for t, c in enumerate(coords):
                trials[2 * t, c] += step
                trials[2 * t + 1, c] -= step
            trials = _unit_rows(trials)
            if trials.shape[0] == 0:
                step /= 2.0
                continue
            trial_index = _pair_index(xj @ trials.T, xk @ trials.T, estimator_kind)
            t_best = int(np.argmax(trial_index))
            if trial_index[t_best] > best_index:
                a, best_index = trials[t_best], trial_index[t_best]
            else:
                step /= 2.0

        mj, sj = location_scale((xj @ a)[:, None], estimator_kind)
        mk, sk = location_scale((xk @ a)[:, None], estimator_kind)
        mj, sj, mk, sk = float(mj[0]), float(sj[0]), float(mk[0]), float(sk[0])
        if sj + sk > 0:
            cutoff = (mj * sk + mk * sj) / (sj + sk)
        else:
            cutoff = (mj + mk) / 2.0
        orientation = 1 if mj >= cutoff else -1
        a = a.copy()
        a.setflags(write=False)
        rules.append(PairRule(j, k, a, cutoff, orientation))
    return PPModel(tuple(rules), estimator_kind, g)


def pp_predict(model: PPModel, x: np.ndarray) -> np.ndarray | int:
    """Pairwise votes by projection side; most votes win, ties resolved by the
    larger absolute-margin sum and then the smaller label."""
    p = model.pairs[0].direction.size
    rows, single = _as_rows(x, p)
    m = rows.shape[0]
    a_matrix = np.vstack([r.direction for r in model.pairs])
    cutoffs = np.array([r.cutoff for r in model.pairs])
    orient = np.array([r.orientation for r in model.pairs])
    signed = (rows @ a_matrix.T - cutoffs) * orient
    firsts = np.array([r.first for r in model.pairs])
    seconds = np.array([r.second for r in model.pairs])
    low = np.minimum(firsts, seconds)
    votes = np.where(signed > 0, firsts, np.where(signed < 0, seconds, low))
    margins = np.abs(signed)

    best_label = np.ones(m, dtype=np.int64)
    best_votes = np.full(m, -1)
    best_margin = np.full(m, -np.inf)
    for label in range(1, model.n_classes + 1):
        mask = votes == label
        count = mask.sum(axis=1)
        margin = (margins * mask).sum(axis=1)
        better = (count > best_votes) | ((count == best_votes) & (margin > best_margin))
        best_label = np.where(better, label, best_label)
        best_votes = np.where(better, count, best_votes)
        best_margin = np.where(better, margin, best_margin)
    return int(best_label[0]) if single else best_label


# ---------------------------------------------------------------------------
# Robust SIMCA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassSubspace:
    center: np.ndarray
    loadings: np.ndarray      # (p, k), orthonormal columns
    eigenvalues: np.ndarray   # (k,), positive nonincreasing
    sd_cutoff: float
    od_cutoff: float


@dataclass(frozen=True)
class SimcaModel:
    classes: tuple[ClassSubspace, ...]
    variance_retained: float
    trim: float

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def predict(self, x: np.ndarray) -> np.ndarray | int:
        return rsimca_predict(self, x)


def _subspace_distances(
    sub: ClassSubspace, rows: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    z = rows - sub.center
    t = z @ sub.loadings
    sd = np.sqrt((t * t / sub.eigenvalues).sum(axis=1))
    resid = z - t @ sub.loadings.T
    od = np.linalg.norm(resid, axis=1)
    return sd, od


def _pca(z: np.ndarray, retained: float, cap: int) -> tuple[np.ndarray, np.ndarray]:
    _, svals, vt = np.linalg.svd(z, full_matrices=False)
    eig = svals * svals / max(z.shape[0] - 1, 1)
    positive = int((svals > svals[0] * 1e-12).sum()) if svals.size else 0
    if positive == 0:
        raise ValueError("class has zero scatter; no principal subspace exists")
    cap = max(1, min(cap, positive))
    total = eig[:positive].sum()
    cum = np.cumsum(eig[:positive]) / total
    k = int(np.searchsorted(cum, retained - 1e-12) + 1)
    k = min(k, cap)
    return vt[:k].T, eig[:k]


def rsimca_fit(
    train: LabeledDataset,
    variance_retained: float = 0.90,
    trim: float = 0.25,
) -> SimcaModel:
    """Per-class PCA around the coordinatewise median, with one trimming pass:
    the trim fraction of rows with largest orthogonal distance is dropped and
    the PCA recomputed on the kept rows.  Score/orthogonal distance cutoffs
    are the 0.975 empirical quantiles over the kept rows."""
    if not 0.0 < variance_retained <= 1.0:
        raise ValueError("variance_retained must be in (0,1]")
    if not 0.0 <= trim < 1.0:
        raise ValueError("trim must be in [0,1)")
    blocks = _class_blocks(train)
    if any(b.shape[0] < 4 for b in blocks):
        raise ValueError("every class needs at least 4 training rows")
    models = []
    for b in blocks:
        n_k = b.shape[0]
        cap = min(n_k - 2, train.p)
        center = np.median(b, axis=0)
        z = b - center
        loadings, eig = _pca(z, variance_retained, cap)
        t = z @ loadings
        od = np.linalg.norm(z - t @ loadings.T, axis=1)
        n_trim = int(math.floor(trim * n_k))
        drop = np.argsort(-od, kind="stable")[:n_trim]
        kept = np.setdiff1d(np.arange(n_k), drop)
        if kept.size < 3:
            raise ValueError(f"class too small after trimming ({kept.size} rows)")
        center = np.median(b[kept], axis=0)
        z = b[kept] - center
        loadings, eig = _pca(z, variance_retained, cap)
        sub = ClassSubspace(center, loadings, eig, 1.0, 1.0)
        sd, od = _subspace_distances(sub, b[kept])
        models.append(
            ClassSubspace(
                center,
                loadings,
                eig,
                float(np.quantile(sd, 0.975)),
                float(np.quantile(od, 0.975)),
            )
        )
    return SimcaModel(tuple(models), variance_retained, trim)


def rsimca_predict(model: SimcaModel, x: np.ndarray) -> np.ndarray | int:
    """Assign to the class minimizing sqrt((SD/SD_cut)^2 + (OD/OD_cut)^2)."""
    p = model.classes[0].center.size
    rows, single = _as_rows(x, p)
    dist = np.empty((rows.shape[0], model.n_classes))
    for k, sub in enumerate(model.classes):
        sd, od = _subspace_distances(sub, rows)
        dist[:, k] = np.hypot(sd / max(sub.sd_cutoff, 1e-12), od / max(sub.od_cutoff, 1e-12))
    labels = np.argmin(dist, axis=1) + 1
    return int(labels[0]) if single else labels
