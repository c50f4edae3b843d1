"""Uniform classifier contract: fit_method(name, train, config, seed) -> model
with model.predict(x) -> label(s).  Method names as exposed to the CLI."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .classifiers import dda_fit, lda_fit, linda_fit, pp_fit, rsimca_fit
from .dataset import LabeledDataset
from .estimators import RegularizationSpec
from .forest import ForestConfig, TreeConfig, rsl_fit
from .seeds import derive_seed

METHOD_NAMES = (
    "lda",
    "linda",
    "dda",
    "pp-class",
    "pp-huber",
    "pp-mad",
    "pp-sest",
    "rsimca",
    "rf",
)

_PP_KINDS = {
    "pp-class": "classical",
    "pp-huber": "huber",
    "pp-mad": "median_mad",
    "pp-sest": "s_estimator",
}


@dataclass(frozen=True)
class MethodConfig:
    """Per-method knobs shared by the benchmark harness and the CLI."""

    regularization: RegularizationSpec = field(default_factory=RegularizationSpec)
    linda_n_starts: int = 50
    linda_h: int | None = None
    pp_n_random: int = 200
    rsimca_variance_retained: float = 0.90
    rsimca_trim: float = 0.25
    forest_B: int = 500
    forest_d_mode: str = "sqrt"
    forest_d: int | None = None
    tree_max_depth: int = 20
    tree_min_leaf: int = 1


def method_seed(name: str, base_seed: int) -> int:
    """Deterministic per-method seed, independent of the method list ordering."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    offset = int.from_bytes(digest[:7], "big")  # < 2^56, keeps index * golden in range
    return derive_seed(base_seed, offset)


def fit_method(name: str, train: LabeledDataset, cfg: MethodConfig, seed: int):
    """Fit the named method on the training data; returns a model with .predict."""
    if name not in METHOD_NAMES:
        raise ValueError(f"unknown method {name!r}; known: {', '.join(METHOD_NAMES)}")
    if name == "lda":
        return lda_fit(train, cfg.regularization)
    if name == "linda":
        return linda_fit(
            train,
            reg=cfg.regularization,
            h=cfg.linda_h,
            n_starts=cfg.linda_n_starts,
            seed=seed,
        )
    if name == "dda":
        return dda_fit(train)
    if name in _PP_KINDS:
        return pp_fit(train, _PP_KINDS[name], seed=seed, n_random=cfg.pp_n_random)
    if name == "rsimca":
        return rsimca_fit(train, cfg.rsimca_variance_retained, cfg.rsimca_trim)
    forest_cfg = ForestConfig(cfg.forest_B, cfg.forest_d_mode, cfg.forest_d, seed)
    tree_cfg = TreeConfig(cfg.tree_max_depth, cfg.tree_min_leaf)
    return rsl_fit(train, forest_cfg, tree_cfg)
