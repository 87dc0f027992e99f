"""Command-line interface: ``mortgp fit|forecast|evaluate``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import fit_lee_carter, forecast_lc, lc_forecaster
from .data_io import atomic_write_text, prepare_surface, read_rates
from .demography import SurfaceConfig, SurfaceModel, fit_surface, forecast_curve, gpr_forecaster
from .errors import MortGPError, MissingAgeRange, ParseError, WindowOverrun
from .evaluation import rolling_window_evaluate
from .kernels import KERNEL_FAMILIES
from .plotting import curve_svg
from .synthetic import bundled_path

log = logging.getLogger("mortgp")

EXIT_OK, EXIT_MODEL, EXIT_USAGE = 0, 1, 2
MODEL_IDS = ("gpr", "lc", "perfect")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path
    kind: str = "mortality"
    fmt: str | None = None
    column: str | None = None
    models: tuple = ("gpr",)
    K: int = 4
    Q: int = 2
    kernel: str = "sm"
    restarts: int = 10
    seed: int = 0
    workers: int = 1
    train_end: int | None = None
    years: tuple = ()
    horizons: tuple = (5, 10, 15, 20)
    windows: int = 10
    first_train_end: int | None = None
    out: Path = Path("out")
    svg: bool = False
    from_model: Path | None = None
    dataset: str = ""
    alpha: float = 0.05

    def __post_init__(self):
        if self.K < 2 or self.Q < 1 or self.restarts < 1 or self.workers < 1:
            raise UsageError("need --knots >= 2, --mixtures >= 1, --restarts >= 1, --workers >= 1")
        if self.kernel not in KERNEL_FAMILIES:
            raise UsageError(f"unknown --kernel {self.kernel!r}")
        bad = [m for m in self.models if m not in MODEL_IDS]
        if bad or not self.models:
            raise UsageError(f"--model must list ids from {MODEL_IDS}")
        if self.command == "evaluate" and not self.horizons:
            raise UsageError("--horizons must not be empty")
        if not 0 < self.alpha < 1:
            raise UsageError("--alpha must lie in (0, 1)")

    def surface_config(self) -> SurfaceConfig:
        return SurfaceConfig(
            family=self.kernel, Q=self.Q, K=self.K, restarts=self.restarts, seed=self.seed, workers=self.workers
        )


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> tuple:
    return tuple(v.strip().lower() for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mortgp", description="Per-age Gaussian process forecasts of demographic rates.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=Path, help="rate table path, or 'bundled' for the packaged synthetic data")
    common.add_argument("--format", dest="fmt", choices=("canonical", "hmd"), help="input layout (default: guess)")
    common.add_argument("--column", help="rate column for whitespace exports (e.g. Male)")
    common.add_argument("--kind", choices=("mortality", "fertility"), default="mortality")
    common.add_argument("--model", dest="models", type=_str_list, default=("gpr",), help="comma list of gpr,lc")
    common.add_argument("--knots", dest="K", type=int, default=4)
    common.add_argument("--mixtures", dest="Q", type=int, default=2)
    common.add_argument("--kernel", default="sm", help=f"one of {', '.join(KERNEL_FAMILIES)}")
    common.add_argument("--restarts", type=int, default=10)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1, help="processes for per-age fits")
    common.add_argument("--train-end", type=int, help="last training year (default: last year in the data)")
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--dataset", default="", help="label used in reports (default: input file stem)")
    common.add_argument("--json-logs", action="store_true", help="log JSON lines to stderr")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("fit", parents=[common], help="fit per-age models and write them with a summary")
    fc = sub.add_parser("forecast", parents=[common], help="forecast curves for target years")
    fc.add_argument("--year", dest="years", type=_int_list, default=(), help="target year(s), comma separated")
    fc.add_argument("--svg", action="store_true", help="also write an SVG plot per year")
    fc.add_argument("--from-model", type=Path, help="model file written by 'fit' (GPR only)")
    fc.add_argument("--alpha", type=float, default=0.05)
    ev = sub.add_parser("evaluate", parents=[common], help="rolling-window RMSE backtest")
    ev.add_argument("--horizons", type=_int_list, default=(5, 10, 15, 20))
    ev.add_argument("--windows", type=int, default=10)
    ev.add_argument("--first-train-end", type=int, help="training end of the first window")
    return p


def _config_from_args(ns) -> RunConfig:
    if ns.input is None and getattr(ns, "from_model", None) is None:
        raise UsageError("--input is required")
    keys = [
        "command", "input", "kind", "fmt", "column", "models", "K", "Q", "kernel", "restarts", "seed",
        "workers", "train_end", "out", "dataset",
    ]
    kw = {k: getattr(ns, k) for k in keys}
    for k in ("years", "svg", "from_model", "alpha", "horizons", "windows", "first_train_end"):
        if hasattr(ns, k):
            kw[k] = getattr(ns, k)
    return RunConfig(**kw)


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        payload = {"time": round(record.created, 3), "level": record.levelname, "logger": record.name, "msg": record.getMessage()}
        payload.update(getattr(record, "fields", {}))
        return json.dumps(payload)


def _setup_logging(json_logs: bool, verbose: bool):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if json_logs else logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("mortgp")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def _load(cfg: RunConfig):
    path = bundled_path() if str(cfg.input) == "bundled" else cfg.input
    if not Path(str(path)).is_file():
        raise UsageError(f"input file not found: {cfg.input}")
    raw = read_rates(Path(str(path)), fmt=cfg.fmt, column=cfg.column, kind=cfg.kind)
    surface = prepare_surface(raw, cfg.kind)
    label = cfg.dataset or Path(str(cfg.input)).stem
    return surface, label


def _training(surface, cfg: RunConfig):
    end = cfg.train_end if cfg.train_end is not None else int(surface.years[-1])
    if end < surface.years[0] or end > surface.years[-1]:
        raise UsageError(f"--train-end {end} outside the data years {surface.years[0]}-{surface.years[-1]}")
    return surface.years_between(None, end)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v))


def cmd_fit(cfg: RunConfig) -> int:
    surface, label = _load(cfg)
    train = _training(surface, cfg)
    t0 = time.perf_counter()
    model = fit_surface(train, cfg.surface_config())
    log.info("fitted %d ages on %d-%d in %.1f s", len(model.fitted_ages), train.years[0], train.years[-1], time.perf_counter() - t0)
    atomic_write_text(cfg.out / "model.json", json.dumps(model.to_dict()))
    rows = []
    for r in model.summary():
        if r["fitted"]:
            rows.append([r["age"], r["n"], _fmt(r["log_likelihood"]), _fmt(r["noise_sd"]), r["iterations"], ""])
        else:
            rows.append([r["age"], "", "", "", "", r["reason"]])
    atomic_write_text(
        cfg.out / "fit_summary.csv",
        _csv_text(["age", "n", "log_likelihood", "noise_sd", "iterations", "failure"], rows),
    )
    return EXIT_OK


def _forecast_rows(ages, mean, lower, upper):
    return [[int(a), _fmt(m), _fmt(lo), _fmt(hi)] for a, m, lo, hi in zip(ages, mean, lower, upper)]


def cmd_forecast(cfg: RunConfig) -> int:
    surface = None
    if cfg.from_model is not None:
        if not cfg.from_model.is_file():
            raise UsageError(f"model file not found: {cfg.from_model}")
        if cfg.models != ("gpr",):
            raise UsageError("--from-model only supports --model gpr")
        gpr = SurfaceModel.from_dict(json.loads(cfg.from_model.read_text(encoding="utf-8")))
        last = int(gpr.years[-1])
        if cfg.input is not None:
            surface, _ = _load(cfg)
    else:
        surface, _ = _load(cfg)
        train = _training(surface, cfg)
        last = int(train.years[-1])
        gpr = fit_surface(train, cfg.surface_config()) if "gpr" in cfg.models else None
        lc = fit_lee_carter(train) if "lc" in cfg.models else None
    years = cfg.years or (last + 10,)
    for model_id in cfg.models:
        for year in years:
            if model_id == "gpr":
                fc = forecast_curve(gpr, year, alpha=cfg.alpha)
                ages, mean, lower, upper = fc.ages, fc.mean, fc.lower, fc.upper
            elif model_id == "lc":
                if year <= last:
                    raise UsageError(f"lc forecasts need a year after the training end {last}")
                fc = forecast_lc(lc, year - last, cfg.alpha)
                ages, mean, lower, upper = fc.ages, fc.mean, fc.lower, fc.upper
            else:
                raise UsageError("the 'perfect' model is only available to evaluate")
            stem = f"forecast_{model_id}_{year}"
            atomic_write_text(
                cfg.out / f"{stem}.csv",
                _csv_text(["age", "mean", "lower95", "upper95"], _forecast_rows(ages, mean, lower, upper)),
            )
            if cfg.svg:
                observed = None
                if surface is not None and year in set(surface.years.tolist()):
                    observed = [surface.values[surface.age_index(a), surface.year_index(year)] for a in ages]
                svg = curve_svg(ages, mean, lower, upper, observed, title=f"{model_id.upper()} forecast, {year}")
                atomic_write_text(cfg.out / f"{stem}.svg", svg)
            log.info("wrote %s", cfg.out / f"{stem}.csv")
    return EXIT_OK


def _perfect_forecaster(surface):
    def run(train, target_years):
        return np.column_stack([surface.column(y) for y in target_years])

    return run


def cmd_evaluate(cfg: RunConfig) -> int:
    surface, label = _load(cfg)
    if cfg.train_end is not None:
        surface = surface.years_between(None, cfg.train_end)
    builders = {
        "gpr": lambda: gpr_forecaster(cfg.surface_config()),
        "lc": lc_forecaster,
        "perfect": lambda: _perfect_forecaster(surface),
    }
    models = {m: builders[m]() for m in cfg.models}
    try:
        report = rolling_window_evaluate(
            surface, models, horizons=cfg.horizons, window_count=cfg.windows, t_m=cfg.first_train_end, dataset=label
        )
    except WindowOverrun as exc:
        raise UsageError(str(exc)) from exc
    atomic_write_text(cfg.out / "evaluation.csv", report.to_csv())
    atomic_write_text(cfg.out / "evaluation_windows.csv", report.per_window_csv())
    table = report.to_table()
    atomic_write_text(cfg.out / "evaluation.txt", table)
    sys.stdout.write(table)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "forecast": cmd_forecast, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(ns.json_logs, ns.verbose)
    try:
        cfg = _config_from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except (UsageError, ParseError, MissingAgeRange, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (MortGPError, ArithmeticError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
