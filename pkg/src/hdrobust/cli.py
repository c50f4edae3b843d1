"""Command-line front end: dataset simulation, benchmark grids over simulated
designs, and real-data evaluation, emitting report and plot-data CSVs."""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import DataError, load_csv, normalize_log_median, save_csv
from .estimators import RegularizationSpec
from .evaluate import (
    EvalConfig,
    compare,
    write_plot_csv,
    write_report_csv,
    write_timings_csv,
)
from .methods import METHOD_NAMES, MethodConfig
from .seeds import derive_seed
from .synth import SimDesign, default_design

ARTIFACT_VERSION = "0.1.0"


class ConfigError(ValueError):
    """Invalid or unparseable run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description: grid axes, design constants, evaluation
    protocol and per-method parameters."""

    grid_epsilon: tuple[float, ...] = (0.0,)
    grid_kappa: tuple[float, ...] = (9.0,)
    grid_rho: tuple[float, ...] = (0.0,)
    grid_p: tuple[int, ...] = (10,)
    grid_G: tuple[int, ...] = (2,)
    n_per_class: int = 30
    cov_kind: str = "equicorrelation"
    tau: float = 1.0
    eta_shift: float = 3.0
    mean_delta: float = 2.0
    eval: EvalConfig = field(default_factory=EvalConfig)
    method_config: MethodConfig = field(default_factory=MethodConfig)

    def designs(self) -> list[SimDesign]:
        """Expand the grid; one design per cell, count = product of axis lengths."""
        out = []
        cell = 0
        for g in self.grid_G:
            for p in self.grid_p:
                for rho in self.grid_rho:
                    for eps in self.grid_epsilon:
                        for kappa in self.grid_kappa:
                            cell += 1
                            out.append(
                                default_design(
                                    g,
                                    p,
                                    rho,
                                    eps,
                                    n_per_class=self.n_per_class,
                                    kappa=kappa,
                                    cov_kind=self.cov_kind,
                                    tau=self.tau,
                                    eta_shift=self.eta_shift,
                                    mean_delta=self.mean_delta,
                                    seed=derive_seed(self.eval.master_seed, cell),
                                )
                            )
        return out


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in raw.split(",") if v.strip() != "")


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip() != "")


def _names(raw: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in raw.split(",") if v.strip() != "")


def load_config(path: str | Path | None) -> RunConfig:
    """Parse the INI-style run configuration; missing keys take defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such config file: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from None

    def get(section, key, default, conv):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None
        return default

    try:
        eval_cfg = EvalConfig(
            R=get("eval", "R", 200, int),
            train_fraction=get("eval", "train_fraction", 2.0 / 3.0, float),
            master_seed=get("eval", "master_seed", 0, int),
            methods=get("eval", "methods", METHOD_NAMES, _names),
        )
        reg_kind = get("lda", "regularization", "none", str).strip()
        method_cfg = MethodConfig(
            regularization=RegularizationSpec(
                reg_kind,
                lam=get("lda", "lambda", 1.0, float),
                alpha=get("lda", "alpha", 0.5, float),
            ),
            linda_n_starts=get("linda", "n_starts", 50, int),
            pp_n_random=get("pp", "n_random", 200, int),
            rsimca_variance_retained=get("rsimca", "variance_retained", 0.90, float),
            rsimca_trim=get("rsimca", "trim", 0.25, float),
            forest_B=get("rf", "B", 500, int),
            forest_d_mode=get("rf", "d_mode", "sqrt", str).strip(),
            forest_d=get("rf", "d", None, lambda s: int(s) if s.strip() else None),
            tree_max_depth=get("rf", "max_depth", 20, int),
            tree_min_leaf=get("rf", "min_leaf", 1, int),
        )
        cfg = RunConfig(
            grid_epsilon=get("grid", "epsilon", (0.0,), _floats),
            grid_kappa=get("grid", "kappa", (9.0,), _floats),
            grid_rho=get("grid", "rho", (0.0,), _floats),
            grid_p=get("grid", "p", (10,), _ints),
            grid_G=get("grid", "G", (2,), _ints),
            n_per_class=get("design", "n_per_class", 30, int),
            cov_kind=get("design", "cov_kind", "equicorrelation", str).strip(),
            tau=get("design", "tau", 1.0, float),
            eta_shift=get("design", "eta_shift", 3.0, float),
            mean_delta=get("design", "mean_delta", 2.0, float),
            eval=eval_cfg,
            method_config=method_cfg,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    unknown = [m for m in cfg.eval.methods if m not in METHOD_NAMES]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; known: {', '.join(METHOD_NAMES)}")
    return cfg


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    from dataclasses import replace

    eval_cfg = cfg.eval
    if getattr(args, "seed", None) is not None:
        eval_cfg = replace(eval_cfg, master_seed=args.seed)
    if getattr(args, "R", None) is not None:
        eval_cfg = replace(eval_cfg, R=args.R)
    if getattr(args, "methods", None) is not None:
        names = _names(args.methods)
        unknown = [m for m in names if m not in METHOD_NAMES]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}")
        eval_cfg = replace(eval_cfg, methods=names)
    return replace(cfg, eval=eval_cfg)


def write_resolved_config(cfg: RunConfig, path: Path) -> None:
    """Materialize every option (defaults included); enough to re-run identically."""
    parser = configparser.ConfigParser()
    parser["grid"] = {
        "epsilon": ",".join(repr(v) for v in cfg.grid_epsilon),
        "kappa": ",".join(repr(v) for v in cfg.grid_kappa),
        "rho": ",".join(repr(v) for v in cfg.grid_rho),
        "p": ",".join(str(v) for v in cfg.grid_p),
        "G": ",".join(str(v) for v in cfg.grid_G),
    }
    parser["design"] = {
        "n_per_class": str(cfg.n_per_class),
        "cov_kind": cfg.cov_kind,
        "tau": repr(cfg.tau),
        "eta_shift": repr(cfg.eta_shift),
        "mean_delta": repr(cfg.mean_delta),
    }
    parser["eval"] = {
        "R": str(cfg.eval.R),
        "train_fraction": repr(cfg.eval.train_fraction),
        "master_seed": str(cfg.eval.master_seed),
        "methods": ",".join(cfg.eval.methods),
    }
    m = cfg.method_config
    parser["lda"] = {
        "regularization": m.regularization.kind,
        "lambda": repr(m.regularization.lam),
        "alpha": repr(m.regularization.alpha),
    }
    parser["linda"] = {"n_starts": str(m.linda_n_starts)}
    parser["pp"] = {"n_random": str(m.pp_n_random)}
    parser["rsimca"] = {
        "variance_retained": repr(m.rsimca_variance_retained),
        "trim": repr(m.rsimca_trim),
    }
    parser["rf"] = {
        "B": str(m.forest_B),
        "d_mode": m.forest_d_mode,
        "d": "" if m.forest_d is None else str(m.forest_d),
        "max_depth": str(m.tree_max_depth),
        "min_leaf": str(m.tree_min_leaf),
    }
    with path.open("w", encoding="utf-8") as fh:
        parser.write(fh)


def _design_manifest(design: SimDesign) -> dict:
    return {
        "artifact_version": ARTIFACT_VERSION,
        "name": design.name,
        "G": design.G,
        "p": design.p,
        "n_per_class": list(design.n_per_class),
        "class_means": [list(m) for m in design.class_means],
        "cov": {
            "kind": design.cov.kind,
            "tau": design.cov.tau,
            "rho": design.cov.rho,
            "p": design.cov.p,
        },
        "contamination": {
            "epsilon": design.contamination.epsilon,
            "eta": list(design.contamination.eta),
            "kappa": design.contamination.kappa,
        },
        "seed": design.seed,
    }


def cmd_simulate(config_path, out_dir, args=None) -> int:
    """Write one dataset CSV plus manifest per grid cell."""
    cfg = load_config(config_path)
    if args is not None:
        cfg = _apply_overrides(cfg, args)
    designs = cfg.designs()  # validates every cell before any file is written
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .synth import generate

    for design in designs:
        ds = generate(design)
        csv_path = out / f"{design.name}.csv"
        save_csv(ds, csv_path)
        manifest_path = csv_path.with_suffix(".manifest")
        manifest_path.write_text(
            json.dumps(_design_manifest(design), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"[simulate] {design.name}: n={design.n}, p={design.p}", file=sys.stderr)
    return 0


def _bench_one(payload):
    source, methods, eval_cfg, method_cfg = payload
    return compare([source], methods, eval_cfg, method_cfg)


def cmd_bench(config_path, out_dir, args=None) -> int:
    """Run the comparison grid; write report, plot-data and timing CSVs."""
    cfg = load_config(config_path)
    if args is not None:
        cfg = _apply_overrides(cfg, args)
    designs = cfg.designs()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = getattr(args, "workers", 1) or 1
    payloads = [(d, cfg.eval.methods, cfg.eval, cfg.method_config) for d in designs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_bench_one, payloads))
    else:
        chunks = [_bench_one(p) for p in payloads]
    reports = []
    for design, chunk in zip(designs, chunks):
        reports.extend(chunk)
        print(f"[bench] {design.name}: done", file=sys.stderr)
    include_timings = bool(getattr(args, "timings", False))
    write_report_csv(reports, out / "report.csv", include_timings=include_timings)
    write_plot_csv(reports, out / "plot_data.csv")
    write_timings_csv(reports, out / "timings.csv")
    write_resolved_config(cfg, out / "resolved_config.ini")
    return 0


def cmd_eval_real(dataset_path, label_column, config_path, out_dir, args=None) -> int:
    """Fixed-dataset comparison (re-split mode) on a user-supplied CSV."""
    cfg = load_config(config_path)
    if args is not None:
        cfg = _apply_overrides(cfg, args)
    ds = load_csv(dataset_path, label_column)
    if args is not None and getattr(args, "log_median", False):
        ds = normalize_log_median(ds)
    eval_cfg = EvalConfig(
        cfg.eval.R,
        cfg.eval.train_fraction,
        cfg.eval.master_seed,
        cfg.eval.methods,
        fixed_dataset=True,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = compare([ds], eval_cfg.methods, eval_cfg, cfg.method_config)
    include_timings = bool(getattr(args, "timings", False))
    write_report_csv(reports, out / "report.csv", include_timings=include_timings)
    write_plot_csv(reports, out / "plot_data.csv")
    write_timings_csv(reports, out / "timings.csv")
    write_resolved_config(cfg, out / "resolved_config.ini")
    print(f"[eval-real] {ds.name}: {len(reports)} rows", file=sys.stderr)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdrobust",
        description="Robust HDLSS classification: simulation, benchmarks, real-data evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="INI run configuration")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override master seed")
    common.add_argument("--R", type=int, default=None, help="override replication count")
    common.add_argument("--methods", type=str, default=None, help="comma-separated method list")

    sub.add_parser("simulate", parents=[common], help="write dataset CSVs plus manifests")

    bench = sub.add_parser("bench", parents=[common], help="run the benchmark grid")
    bench.add_argument("--workers", type=int, default=1, help="grid-cell worker pool size")
    bench.add_argument(
        "--timings", action="store_true",
        help="inline measured runtimes in report.csv (non-deterministic output)",
    )

    real = sub.add_parser("eval-real", parents=[common], help="evaluate a real dataset CSV")
    real.add_argument("dataset", type=Path, help="dataset CSV path")
    real.add_argument("--label-column", type=str, default="label")
    real.add_argument("--log-median", action="store_true", help="log + row-median centering")
    real.add_argument(
        "--timings", action="store_true",
        help="inline measured runtimes in report.csv (non-deterministic output)",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args)
        if args.command == "bench":
            return cmd_bench(args.config, args.out, args)
        return cmd_eval_real(args.dataset, args.label_column, args.config, args.out, args)
    except (ConfigError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
