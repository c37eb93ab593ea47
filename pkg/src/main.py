# main.py

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
import scipy

from analysis.projection import project_W, oscillation_fit, scaled_fluctuation
from btree.rules import make_rule, btree_start
from btree.tree import run_tree_trajectory
from spectral.roots import compute_spectrum, spectral_table, QUANTITIES
from urn.csv_handler import write_frame, write_json, trajectories_frame
from urn.embedding import embed_batch, estimate_xi
from urn.simulator import run_parallel
from utils.config import Config, RunConfig, VERSION, ALGORITHMS, ENGINES, VARIANTS, FORMATS
from utils.errors import (
    InvalidParameterError, InvalidInputError, PhaseMismatchError, NonContractiveError,
    ConfigurationError, NumericFailureError, ResourceLimitError,
)
from wlimit.cascade import cascade_sample, fixpoint_iterate, contraction_ratio
from wlimit.moments import moments_W, laplace_residual, default_anchor, contraction_factor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2

FIGURES = {
    "drift-small": (10, 30, 55),
    "drift-large": (65, 100, 237),
    "scaled-small": (10, 30, 55),
    "scaled-large": (65, 100, 237),
}
SCALES = {"desk": 100_000, "full": 10_000_000}


class CliParser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def versions():
    return {
        "btree-fringe-urns": VERSION,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
    }


def build_parser():
    common = CliParser(add_help=False)
    common.add_argument("--output", default="", help="output file (default: inside BTREE_URN_OUTPUT_DIR)")
    common.add_argument("--format", choices=FORMATS, default="csv")
    common.add_argument("--log-level", default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=None)

    parser = CliParser(prog="btree-urns", description="B-tree fringe dynamics as Polya urns")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, help_text, *flags):
        p = sub.add_parser(name, parents=[common], help=help_text)
        for flag in flags:
            FLAGS[flag](p)
        return p

    add("rule", "replacement rule as JSON", "m", "algorithm")
    add("spectrum", "roots and lambda2 data as JSON", "m", "roots")
    add("table", "spectral quantity over a range of m", "quantity", "range")
    add("simulate", "urn or tree trajectory", "m", "algorithm", "engine", "n", "stride", "runs", "coords", "geometric")
    add("embed", "trajectory with continuous-time jump instants", "m", "algorithm", "n", "stride", "runs", "geometric")
    add("project", "W_n series along a trajectory", "m", "n", "stride", "geometric")
    add("fit", "oscillation fit per run (m >= 60)", "m", "n", "runs")
    add("cascade", "cascade samples of W", "m", "variant", "depth", "samples")
    add("moments", "moment recursion of W", "m", "variant", "pmax", "depth", "finite_depth")
    add("fixpoint", "Wasserstein fixed-point iteration", "m", "variant", "samples", "iters")
    add("laplace-check", "Laplace system residuals", "m", "pmax")
    add("figure", "figure recipe batch", "figure", "scale", "runs")
    return parser


FLAGS = {
    "m": lambda p: p.add_argument("--m", type=int, default=2),
    "algorithm": lambda p: p.add_argument("--algorithm", choices=ALGORITHMS, default="optimistic"),
    "engine": lambda p: p.add_argument("--engine", choices=ENGINES, default="urn"),
    "n": lambda p: p.add_argument("--n", dest="n_steps", type=int, default=1000),
    "stride": lambda p: p.add_argument("--stride", type=int, default=1),
    "runs": lambda p: p.add_argument("--runs", type=int, default=1),
    "coords": lambda p: p.add_argument("--coords", choices=("gaps", "fringe"), default="gaps"),
    "geometric": lambda p: p.add_argument("--geometric", action="store_true"),
    "roots": lambda p: p.add_argument("--roots", action="store_true"),
    "quantity": lambda p: p.add_argument("--quantity", choices=QUANTITIES, default="sigma2"),
    "range": lambda p: (p.add_argument("--from", dest="m_from", type=int, default=2),
                        p.add_argument("--to", dest="m_to", type=int, default=300)),
    "variant": lambda p: p.add_argument("--variant", choices=VARIANTS, default="CT"),
    "depth": lambda p: p.add_argument("--depth", type=int, default=15),
    "finite_depth": lambda p: p.add_argument("--finite-depth", action="store_true"),
    "samples": lambda p: p.add_argument("--samples", type=int, default=1000),
    "pmax": lambda p: p.add_argument("--pmax", type=int, default=12),
    "iters": lambda p: p.add_argument("--iters", type=int, default=50),
    "figure": lambda p: p.add_argument("--figure", choices=sorted(FIGURES), required=True),
    "scale": lambda p: p.add_argument("--scale", choices=sorted(SCALES), default="desk"),
}


def parse_config(argv):
    args = build_parser().parse_args(argv)
    values = {k: v for k, v in vars(args).items() if v is not None and k != "log_level"}
    return RunConfig(**values), args.log_level


def _emit(df, config, stem):
    """Write a table as CSV (with config header) or as JSON records."""
    settings = config.to_dict()
    if config.format == "csv":
        return write_frame(df, config.output_path(f"{stem}.csv"), settings)
    payload = {"config": settings, "rows": json.loads(df.to_json(orient="records", double_precision=15))}
    return write_json(payload, config.output_path(f"{stem}.json"))


def _trajectories(config, geometric=None):
    rule = make_rule(config.m, config.algorithm)
    geometric = config.geometric if geometric is None else geometric
    if config.engine == "tree":
        return [
            run_tree_trajectory(rule, config.n_steps, config.seed, config.stride, index=i, geometric=geometric)
            for i in range(config.runs)
        ]
    return run_parallel(rule, btree_start(rule), config.n_steps, config.seed, config.runs,
                        config.stride, geometric, config.workers)


def _wlimit_parameters(config):
    spectrum = compute_spectrum(config.m)
    return spectrum.lambda2, default_anchor(config.variant, spectrum)


def run_rule(config):
    rule = make_rule(config.m, config.algorithm)
    path = write_json({"config": config.to_dict(), "rule": rule.to_dict()},
                      config.output_path(f"rule-m{config.m}-{config.algorithm}.json"))
    return {"outputs": [path], "rule": rule.to_dict()}


def run_spectrum(config):
    bundle = compute_spectrum(config.m)
    result = bundle.to_dict(include_roots=config.roots)
    path = write_json({"config": config.to_dict(), "spectrum": result},
                      config.output_path(f"spectrum-m{config.m}.json"))
    return {"outputs": [path], **result}


def run_table(config):
    df = spectral_table(config.quantity, config.m_from, config.m_to)
    path = _emit(df, config, f"table-{config.quantity}-{config.m_from}-{config.m_to}")
    return {"outputs": [path], "rows": len(df)}


def run_simulate(config):
    trajectories = _trajectories(config)
    if config.runs == 1:
        df = trajectories[0].to_frame(config.coords)
    else:
        df = trajectories_frame(trajectories, config.coords)
    path = _emit(df, config, f"simulate-m{config.m}-{config.engine}-seed{config.seed}")
    return {"outputs": [path], "final": [list(map(int, t.compositions[-1])) for t in trajectories]}


def run_embed(config):
    trajectories = embed_batch(_trajectories(config), config.seed)
    df = trajectories[0].to_frame() if config.runs == 1 else trajectories_frame(trajectories)
    path = _emit(df, config, f"embed-m{config.m}-seed{config.seed}")
    xi = [estimate_xi(t) for t in trajectories]
    return {"outputs": [path], "xi_mean": float(np.mean(xi)), "k0": trajectories[0].k0}


def run_project(config):
    trajectory = _trajectories(config)[0]
    series = project_W(trajectory, compute_spectrum(config.m))
    path = _emit(series.to_frame(), config, f"project-m{config.m}-seed{config.seed}")
    final = series.w[-1] if series.w.size else 0j
    return {"outputs": [path], "w_final": {"re": float(final.real), "im": float(final.imag)}}


def run_fit(config):
    spectrum = compute_spectrum(config.m)
    rows = []
    for trajectory in _trajectories(config, geometric=True):
        series = project_W(trajectory, spectrum)
        rho, phi, residual = oscillation_fit(series)
        rows.append((trajectory.index, rho, phi, residual, abs(series.w[-1])))
    df = pd.DataFrame(rows, columns=["run", "rho", "phi", "residual", "abs_w"])
    path = _emit(df, config, f"fit-m{config.m}-seed{config.seed}")
    return {"outputs": [path], "median_residual": float(df["residual"].median())}


def run_cascade(config):
    lam, anchor = _wlimit_parameters(config)
    sample_set = cascade_sample(config.variant, config.m, lam, config.depth, config.samples,
                                config.seed, anchor)
    path = _emit(sample_set.to_frame(), config, f"cascade-{config.variant}-m{config.m}-seed{config.seed}")
    return {"outputs": [path], **sample_set.metadata()}


def run_moments(config):
    lam, anchor = _wlimit_parameters(config)
    table = moments_W(config.variant, config.m, lam, anchor, config.pmax,
                      config.depth if config.finite_depth else None)
    stem = f"moments-{config.variant}-m{config.m}"
    if config.format == "csv":
        path = write_frame(table.to_frame(), config.output_path(f"{stem}.csv"), config.to_dict())
    else:
        path = write_json({"config": config.to_dict(), "moments": table.to_records()},
                          config.output_path(f"{stem}.json"))
    return {"outputs": [path], "pmax": table.pmax}


def run_fixpoint(config):
    lam, anchor = _wlimit_parameters(config)
    sample_set, trace = fixpoint_iterate(config.variant, config.m, lam, anchor,
                                         config.samples, config.iters, config.seed)
    df = pd.DataFrame({"iteration": np.arange(1, trace.size + 1), "w2": trace})
    path = _emit(df, config, f"fixpoint-{config.variant}-m{config.m}-seed{config.seed}")
    result = {"outputs": [path], "bound": float(np.sqrt(contraction_factor(config.m, lam))),
              **sample_set.metadata()}
    if trace.size >= 7:
        result["contraction_ratio"] = contraction_ratio(trace)
    return result


def run_laplace_check(config):
    spectrum = compute_spectrum(config.m)
    residuals = laplace_residual(config.m, spectrum.lambda2, config.pmax)
    df = pd.DataFrame({"k": np.arange(1, config.m + 1), "residual": residuals})
    path = _emit(df, config, f"laplace-m{config.m}")
    return {"outputs": [path], "max_residual": float(residuals.max())}


def figure_recipe(name, scale="desk", seed=None, runs=1):
    """
    Configs reproducing one figure family: one simulation per m.

    Raises:
        InvalidParameterError: unknown figure or scale
    """
    if name not in FIGURES:
        raise InvalidParameterError(f"Unknown figure {name!r}. Use one of {sorted(FIGURES)}")
    if scale not in SCALES:
        raise InvalidParameterError(f"Unknown scale {scale!r}. Use one of {sorted(SCALES)}")
    seed = Config.seed() if seed is None else seed
    return [
        RunConfig(subcommand="figure", figure=name, scale=scale, m=m, n_steps=SCALES[scale],
                  seed=seed, runs=runs, geometric=True, engine="urn", algorithm="optimistic")
        for m in FIGURES[name]
    ]


def tracked_types(m):
    return sorted({1, m // 2, m})


def figure_frame(config):
    """Tracked coordinates (types 1, m//2, m) of one figure run."""
    rule = make_rule(config.m)
    spectrum = compute_spectrum(config.m)
    trajectories = run_parallel(rule, btree_start(rule), config.n_steps, config.seed, config.runs,
                                geometric=True)
    frames = []
    for trajectory in trajectories:
        keep = trajectory.steps >= 1
        df = pd.DataFrame({"run": trajectory.index, "n": trajectory.steps[keep]})
        for k in tracked_types(config.m):
            if config.figure.startswith("drift"):
                df[f"g{k}_over_n"] = trajectory.compositions[keep, k - 1] / trajectory.steps[keep]
                df[f"v1_{k}"] = spectrum.v1[k - 1]
            else:
                divisor = "sqrt" if config.figure == "scaled-small" else "sigma2"
                _, df[f"x{k}"] = scaled_fluctuation(trajectory, spectrum, k, divisor)
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


def _run_figure_config(config, directory):
    path = os.path.join(directory, f"{config.figure}-m{config.m}.csv") if directory else \
        config.output_path(f"{config.figure}-m{config.m}.csv")
    return write_frame(figure_frame(config), path, config.to_dict())


def run_figure(config):
    configs = figure_recipe(config.figure, config.scale, config.seed, config.runs)
    directory = config.output
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            paths = list(ex.map(_run_figure_config, configs, [directory] * len(configs)))
    else:
        paths = [_run_figure_config(c, directory) for c in configs]
    return {"outputs": paths, "m": [c.m for c in configs]}


HANDLERS = {
    "rule": run_rule,
    "spectrum": run_spectrum,
    "table": run_table,
    "simulate": run_simulate,
    "embed": run_embed,
    "project": run_project,
    "fit": run_fit,
    "cascade": run_cascade,
    "moments": run_moments,
    "fixpoint": run_fixpoint,
    "laplace-check": run_laplace_check,
    "figure": run_figure,
}


def dispatch(config):
    """
    Run one validated configuration and print a one-line JSON summary.

    Returns:
        0 on success, 1 for usage or validation errors, 2 for numeric or
        resource failures
    """
    try:
        config.validate()
        result = HANDLERS[config.subcommand](config)
    except (InvalidParameterError, InvalidInputError, PhaseMismatchError,
            NonContractiveError, ConfigurationError) as e:
        logging.error(f"{config.subcommand}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailureError, ResourceLimitError) as e:
        logging.error(f"{config.subcommand}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC

    summary = {"subcommand": config.subcommand, "seed": config.seed, "versions": versions(), **result}
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


def main(argv=None):
    try:
        Config.validate()
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    config, log_level = parse_config(argv)
    logging.basicConfig(
        level=(log_level or Config.LOG_LEVEL).upper(),
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    return dispatch(config)


if __name__ == "__main__":
    sys.exit(main())
