"""Main entry point for gevgp."""

import argparse
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler

from .core.errors import DataError, DomainError, GevGpError, NumericalError, ValidationError
from .core.gev import GUMBEL, LogShape
from .core.laplace import FitResult, LaplaceFitter
from .core.posterior import coverage_check, default_p_exp_grid, holdout_check, predict_new, return_levels, sample_joint
from .core.settings import RunConfig
from .dataio.csvio import export_csv, ingest_csv, read_coords, read_records, read_truth, write_table
from .dataio.grid import GridSpec, grid_maxima
from .dataio.manifest import manifest_name, write_manifest
from .dataio.store import load_fit, save_fit
from .render import FitRenderer
from .simstudy.refit import metrics, refit_check
from .simstudy.surfaces import make_lattice, simulate_from_params, true_surfaces

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

FIT_FILE = "fit.npz"
COVERAGE_LEVELS = (0.5, 0.8, 0.9, 0.95)


def _add_fit_options(parser: argparse.ArgumentParser, with_model: bool = True) -> None:
    if with_model:
        parser.add_argument("--model", type=str, help="Model variant: M1, M2, M3, M4 or M4S (default: M1)")
    parser.add_argument("--kernel-form", dest="kernel_form", choices=["exponential", "squared_exponential"],
                        help="Covariance kernel (default: exponential)")
    parser.add_argument("--jitter", type=float, help="Diagonal nugget (default: 1e-6 * sigma2)")
    parser.add_argument("--inner-tol", dest="inner_tol", type=float, help="Inner Newton tolerance (default: 1e-8)")
    parser.add_argument("--inner-max-iter", dest="inner_max_iter", type=int, help="Inner iteration cap (default: 100)")
    parser.add_argument("--outer-tol", dest="outer_tol", type=float, help="Outer BFGS tolerance (default: 1e-6)")
    parser.add_argument("--outer-max-iter", dest="outer_max_iter", type=int, help="Outer iteration cap (default: 500)")
    parser.add_argument("--fd-step", dest="fd_step", type=float, help="Relative finite-difference step (default: 1e-5)")
    parser.add_argument("--workers", type=int, help="Threads for gradients and kriging (default: 1)")


def _add_fit_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fit", dest="fit_path", type=str,
                        help=f"Saved fit (default: <output-dir>/{FIT_FILE})")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per workflow step."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Config file (YAML or JSON; default: ./gevgp.yaml if present)")
    common.add_argument("--output-dir", dest="output_dir", type=str, help="Directory for outputs (default: .)")
    common.add_argument("--seed", type=int, help="Master random seed (default: 0)")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    common.add_argument("--quiet", "-q", action="store_true", help="Do not render fit progress")

    parser = argparse.ArgumentParser(
        prog="gevgp",
        description="gevgp - Laplace-approximate inference for spatial GEV models",
    )

    subparsers = parser.add_subparsers(dest="command", required=True, help="Available commands")

    sim = subparsers.add_parser("simulate", help="Simulate data on the true surfaces", parents=[common])
    sim.add_argument("--side", type=int, help="Lattice side (default: 20)")
    sim.add_argument("--lo", type=float, help="Lower lattice bound (default: 0)")
    sim.add_argument("--hi", type=float, help="Upper lattice bound (default: 10)")
    sim.add_argument("--n-per-site", dest="n_per_site", type=int, help="Observations per site (default: 1)")
    sim.add_argument("--true-s", dest="true_s", type=float, help="True log-shape (default: -2)")
    sim.add_argument("--gumbel", action="store_true", default=None, help="Simulate with zero shape")

    fit = subparsers.add_parser("fit", help="Fit a model to a CSV dataset", parents=[common])
    fit.add_argument("--data", type=str, help="Input CSV")
    fit.add_argument("--truth", type=str, help="Truth CSV (lon,lat,a,b) from simulate; writes metrics")
    _add_fit_options(fit)

    sample = subparsers.add_parser("sample", help="Posterior return levels at the fitted sites", parents=[common])
    _add_fit_input(sample)
    sample.add_argument("--n-sim", dest="n_sim", type=int, help="Posterior draws (default: 10000)")
    sample.add_argument("--prob-upper", dest="prob_upper", type=float,
                        help="Upper-tail probability of the return level (default: 0.1)")

    predict = subparsers.add_parser("predict", help="Posterior predictive intervals at new sites", parents=[common])
    _add_fit_input(predict)
    predict.add_argument("--coords", type=str, required=True, help="CSV with lon,lat columns")
    predict.add_argument("--n-sim", dest="n_sim", type=int, help="Posterior draws (default: 10000)")
    predict.add_argument("--p-exp", dest="p_exp", type=float, help="Interval level (default: 0.95)")
    predict.add_argument("--workers", type=int, help="Threads for kriging (default: 1)")

    coverage = subparsers.add_parser("coverage", help="In-sample predictive coverage", parents=[common])
    _add_fit_input(coverage)
    coverage.add_argument("--n-sim", dest="n_sim", type=int, help="Posterior draws (default: 10000)")
    coverage.add_argument("--workers", type=int, help="Threads for kriging (default: 1)")

    grid = subparsers.add_parser("grid", help="Grid point records into per-cell maxima", parents=[common])
    grid.add_argument("--records", type=str, required=True, help="CSV with lon,lat,value columns")
    grid.add_argument("--cell-deg", dest="cell_deg", type=float, help="Cell side in degrees (default: 3)")
    grid.add_argument("--min-records", dest="min_records", type=int, help="Records needed per cell (default: 20)")
    grid.add_argument("--bbox", type=float, nargs=4, metavar=("LON_MIN", "LON_MAX", "LAT_MIN", "LAT_MAX"),
                      help="Bounding box (default: extent of the records)")

    refit = subparsers.add_parser("refit-check", help="Refit on pseudo-data from the posterior means", parents=[common])
    _add_fit_input(refit)
    _add_fit_options(refit, with_model=False)

    holdout = subparsers.add_parser("holdout", help="Out-of-sample check on held-out sites", parents=[common])
    holdout.add_argument("--data", type=str, help="Input CSV")
    holdout.add_argument("--n-test", dest="n_test", type=int, help="Held-out sites (default: 20%% of sites)")
    holdout.add_argument("--n-sim", dest="n_sim", type=int, help="Posterior draws (default: 10000)")
    holdout.add_argument("--p-exp", dest="p_exp", type=float, help="Interval level (default: 0.95)")
    _add_fit_options(holdout)

    return parser


def setup_logging(verbose: bool) -> None:
    """Route gevgp logs through a rich handler on standard error."""
    root = logging.getLogger("gevgp")
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def load_config(args: argparse.Namespace) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names and v is not None}
    return RunConfig.load(config_path=args.config, cli_args=overrides)


class Command:
    """State shared by one subcommand run: config, output directory and written files."""

    def __init__(self, name: str, args: argparse.Namespace, config: RunConfig):
        self.name = name
        self.args = args
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.outputs: List[str] = []
        self.diagnostics: Optional[Dict[str, Any]] = None
        self.renderer = FitRenderer()

    def path(self, filename: str) -> Path:
        return self.out_dir / filename

    def write(self, filename: str, frame: pd.DataFrame) -> Path:
        path = write_table(self.path(filename), frame)
        self.outputs.append(str(path))
        return path

    def data_path(self) -> str:
        path = self.config.data
        if not path:
            raise DataError("no input data: pass --data or set 'data' in the config file")
        return path

    def fit_path(self) -> Path:
        return Path(self.args.fit_path) if getattr(self.args, "fit_path", None) else self.path(FIT_FILE)

    def load_fit(self) -> FitResult:
        fit = load_fit(self.fit_path())
        if fit.data is None:
            raise DataError(f"fit file {self.fit_path()} holds no dataset")
        self.diagnostics = fit.diagnostics.to_dict()
        return fit

    def run_fit(self, data) -> FitResult:
        fitter = LaplaceFitter(self.config.model_spec(), self.config.fit_config())
        if not self.args.quiet:
            fitter.subscribe(self.renderer.render_event)
        fit = fitter.fit(data)
        self.diagnostics = fit.diagnostics.to_dict()
        if not self.args.quiet:
            self.renderer.render_fit(fit)
        return fit


def _site_frame(coords: np.ndarray, columns: Dict[str, np.ndarray]) -> pd.DataFrame:
    frame = pd.DataFrame({"site": np.arange(coords.shape[0]), "lon": coords[:, 0], "lat": coords[:, 1]})
    for name, values in columns.items():
        frame[name] = values
    return frame


def cmd_simulate(cmd: Command) -> None:
    cfg = cmd.config
    shape = GUMBEL if cfg.gumbel else LogShape(cfg.true_s)
    coords = make_lattice(cfg.side, cfg.lo, cfg.hi)
    a, b = true_surfaces(coords)
    data = simulate_from_params(coords, a, b, shape, cfg.n_per_site, cfg.seed)
    path = export_csv(data, cmd.path("data.csv"))
    cmd.outputs.append(str(path))
    cmd.write("truth.csv", pd.DataFrame({"lon": coords[:, 0], "lat": coords[:, 1], "a": a, "b": b}))


def cmd_fit(cmd: Command) -> None:
    spec = cmd.config.model_spec()
    data = ingest_csv(cmd.data_path(), spec.transform)
    fit = cmd.run_fit(data)
    save_fit(fit, cmd.path(FIT_FILE))
    cmd.outputs.append(str(cmd.path(FIT_FILE)))

    a_mean, a_sd, b_mean, b_sd = fit.latent_summary()
    cmd.write("fit.csv", _site_frame(fit.data.coords, {
        "a_mean": a_mean, "a_sd": a_sd, "b_mean": b_mean, "b_sd": b_sd,
    }))
    cmd.write("theta.csv", pd.DataFrame({
        "name": fit.theta_names,
        "mode": fit.theta_vec,
        "sd": np.sqrt(np.clip(np.diag(fit.v_theta), 0.0, None)),
    }))

    if cmd.args.truth:
        coords, a_true, b_true = read_truth(cmd.args.truth)
        if coords.shape != fit.data.coords.shape or not np.allclose(coords, fit.data.coords):
            raise DomainError("truth file sites do not match the data sites")
        s_true = cmd.config.true_s if spec.estimates_shape else None
        report = metrics(fit, (a_true, b_true, s_true))
        cmd.write("metrics.csv", pd.DataFrame([report.to_dict()]))
        if not cmd.args.quiet:
            cmd.renderer.render_metrics(report.to_dict())


def cmd_sample(cmd: Command) -> None:
    cfg = cmd.config
    fit = cmd.load_fit()
    draws = sample_joint(fit, cfg.n_sim, cfg.seed)
    summaries = return_levels(draws, cfg.prob_upper)
    coords = fit.data.coords
    cmd.write("return_levels.csv", _site_frame(coords, {
        "p": [s.prob_upper for s in summaries],
        "z_mean": [s.mean for s in summaries],
        "z_sd": [s.sd for s in summaries],
        "z_lo": [s.ci_lo for s in summaries],
        "z_hi": [s.ci_hi for s in summaries],
    }))


def cmd_predict(cmd: Command) -> None:
    cfg = cmd.config
    fit = cmd.load_fit()
    coords = read_coords(cmd.args.coords)
    pred = predict_new(fit, fit.data, coords, cfg.n_sim, cfg.seed, p_exp=cfg.p_exp, workers=cfg.workers)
    lo, hi = pred.interval()
    cmd.write("predictions.csv", _site_frame(coords, {
        "p_exp": np.full(coords.shape[0], cfg.p_exp),
        "y_mean": pred.mean,
        "y_lo": lo,
        "y_hi": hi,
        "error": [pred.errors.get(i, "") for i in range(coords.shape[0])],
    }))


def cmd_coverage(cmd: Command) -> None:
    cfg = cmd.config
    fit = cmd.load_fit()
    grid = sorted(set(default_p_exp_grid()) | set(COVERAGE_LEVELS))
    rows = coverage_check(fit, fit.data, grid, cfg.n_sim, cfg.seed, workers=cfg.workers)
    cmd.write("coverage.csv", pd.DataFrame(rows, columns=["p_exp", "p_obs"]))
    if not cmd.args.quiet:
        cmd.renderer.render_coverage([row for row in rows if row[0] in COVERAGE_LEVELS])


def cmd_grid(cmd: Command) -> None:
    cfg = cmd.config
    records = read_records(cmd.args.records)
    spec = GridSpec(cell_deg=cfg.cell_deg, min_records=cfg.min_records,
                    bbox=tuple(cfg.bbox) if cfg.bbox is not None else None)
    result = grid_maxima(records, spec)
    data = result.dataset
    path = export_csv(data, cmd.path("data.csv"))
    cmd.outputs.append(str(path))
    cmd.write("cells.csv", pd.DataFrame({
        "lon": data.coords[:, 0],
        "lat": data.coords[:, 1],
        "n_records": result.counts,
        "max": [o[0] for o in data.obs],
    }))


def cmd_refit_check(cmd: Command) -> None:
    cfg = cmd.config
    fit = cmd.load_fit()
    report = refit_check(fit, seed=cfg.seed, config=cfg.fit_config())
    cmd.write("refit.csv", _site_frame(fit.data.coords, {
        "a_original": report.original_a,
        "a_recovered": report.recovered_a,
        "b_original": report.original_b,
        "b_recovered": report.recovered_b,
    }))
    cmd.diagnostics = {
        "original": cmd.diagnostics,
        "refit": report.refit.diagnostics.to_dict(),
        "slope_a": report.slope_a,
        "slope_b": report.slope_b,
        "original_s": report.original_s,
        "recovered_s": report.recovered_s,
    }


def cmd_holdout(cmd: Command) -> None:
    cfg = cmd.config
    spec = cfg.model_spec()
    data = ingest_csv(cmd.data_path(), spec.transform)
    report = holdout_check(data, spec, n_test=cfg.n_test, seed=cfg.seed, m=cfg.n_sim,
                           p_exp=cfg.p_exp, config=cfg.fit_config())
    coords = data.coords[report.test_sites]
    frame = _site_frame(coords, {
        "y_mean": report.mean,
        "y_lo": report.lower,
        "y_hi": report.upper,
        "covered": report.site_coverage,
    })
    frame["site"] = report.test_sites
    cmd.write("holdout.csv", frame)
    cmd.diagnostics = {"fit": report.fit.diagnostics.to_dict(), "coverage": report.coverage, "p_exp": report.p_exp}


COMMANDS: Dict[str, Callable[[Command], None]] = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "sample": cmd_sample,
    "predict": cmd_predict,
    "coverage": cmd_coverage,
    "grid": cmd_grid,
    "refit-check": cmd_refit_check,
    "holdout": cmd_holdout,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    started = time.perf_counter()
    try:
        config = load_config(args)
        cmd = Command(args.command, args, config)
        COMMANDS[args.command](cmd)
        write_manifest(
            cmd.path(manifest_name(args.command)),
            command=args.command,
            config=config,
            wall_seconds=time.perf_counter() - started,
            outputs=cmd.outputs,
            diagnostics=cmd.diagnostics,
        )
    except ValidationError as e:
        print(f"ERROR:{e.category}:{e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"ERROR:{e.category}:{e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GevGpError as e:
        print(f"ERROR:{e.category}:{e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ArithmeticError as e:
        print(f"ERROR:numerical:{e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"ERROR:io:{e}", file=sys.stderr)
        return EXIT_VALIDATION
    logger.info(f"{args.command} finished in {time.perf_counter() - started:.1f}s")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point."""
    sys.exit(run(argv))
