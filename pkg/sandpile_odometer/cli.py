"""
Command-line front end: sandpile-odometer <subcommand> [flags].

Exit status is 0 on success, 1 for invalid input or configuration and 2 when
a computation misses its numerical contract.
"""
import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    STANDARD,
    convergence_sweep,
    monte_carlo_pairing,
    scaling_constant,
    tightness_proxy,
)
from .config import METHODS, load_config, write_resolved
from .errors import NumericalError, ValidationError
from .formats import field_rows, write_csv, write_dsgf, write_pgm
from .grid import ScalarField, TorusGrid
from .kernels import BRUTE_FORCE_CAP, PowerLaw, WhiteNoise, limit_multiplier_estimate, validate
from .sampler import RngStream, initial_configuration, sample_many, sample_sigma
from .sandpile import odometer_spectral, stabilize_toppling
from .tracking import z_score

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# flag dest -> dotted config key
OVERRIDES = {
    "dim": "run.dim",
    "n": "run.n",
    "seed": "run.seed",
    "replicates": "run.replicates",
    "tol": "run.tol",
    "max_rounds": "run.max_rounds",
    "epsilon": "run.epsilon",
    "cutoff": "run.cutoff",
    "scaling": "run.scaling",
    "test_function": "run.test_function",
    "out": "run.out_dir",
    "threads": "run.threads",
    "method": "run.method",
    "kernel": "kernel.variant",
    "s": "kernel.s",
    "sign": "kernel.sign",
    "diagonal": "kernel.diagonal",
    "exponent": "kernel.exponent",
    "zero_mode": "kernel.zero_mode",
    "table": "kernel.table_path",
}


class ArgumentParser(argparse.ArgumentParser):
    """
    Exits with the validation status on usage errors.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common_flags():
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("run")
    group.add_argument("--config", metavar="PATH", help="INI file with [run] and [kernel] sections")
    group.add_argument("--dim", type=int)
    group.add_argument("--n", metavar="N[,N...]", help="side length or comma-separated list")
    group.add_argument("--seed", type=int)
    group.add_argument("--replicates", type=int)
    group.add_argument("--tol", type=float)
    group.add_argument("--max-rounds", dest="max_rounds", type=int)
    group.add_argument("--epsilon", type=float)
    group.add_argument("--cutoff", type=int)
    group.add_argument("--scaling", choices=("standard", "bilap"))
    group.add_argument("--test-function", dest="test_function", metavar="ROWS|PATH")
    group.add_argument("--out", metavar="DIR")
    group.add_argument("--threads", type=int)
    group.add_argument("--method", choices=METHODS)
    group.add_argument(
        "--log-level",
        dest="log_level",
        default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
    )

    kernel = parser.add_argument_group("kernel")
    kernel.add_argument("--kernel", metavar="VARIANT")
    kernel.add_argument("--s", type=float)
    kernel.add_argument("--sign", type=int, choices=(1, -1))
    kernel.add_argument("--diagonal", type=float)
    kernel.add_argument("--exponent", type=float)
    kernel.add_argument("--zero-mode", dest="zero_mode", type=float)
    kernel.add_argument("--table", metavar="PATH")
    return parser


def build_parser():
    parser = ArgumentParser(prog="sandpile-odometer", description="Divisible sandpile odometer toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_flags()
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    sample = commands.add_parser("sample-sigma", parents=[common], help="draw Gaussian weight fields")
    sample.add_argument("--csv", action="store_true", help="also export the first field as CSV")
    commands.add_parser("stabilize", parents=[common], help="compute the odometer of one configuration")
    commands.add_parser("validate-kernel", parents=[common], help="check that a kernel is a covariance")
    commands.add_parser("variance-convergence", parents=[common], help="closed-form variance sweep")
    commands.add_parser("monte-carlo", parents=[common], help="sample the variance of the pairing")
    commands.add_parser("tightness", parents=[common], help="mean Sobolev norm per side length")
    commands.add_parser("render", parents=[common], help="export a d=2 odometer as a 16-bit PGM")
    return parser


def _overrides(args):
    return {key: getattr(args, dest, None) for dest, key in OVERRIDES.items()}


def _out(config, name):
    return os.path.join(config.out_dir, name)


def _dataclass_rows(items):
    names = [f.name for f in dataclasses.fields(items[0])]
    return names, [[getattr(item, name) for name in names] for item in items]


def run_sample_sigma(config, args):
    grid = TorusGrid(config.dim, config.n[0])
    fields = sample_many(config.kernel, grid, config.seed, config.replicates, threads=config.threads)
    for stream_id, sigma in enumerate(fields):
        write_dsgf(_out(config, f"sigma_{stream_id:05d}.dsgf"), sigma)
    if args.csv:
        header = [f"z_{i + 1}" for i in range(grid.dim)] + ["sigma"]
        write_csv(_out(config, "sigma_00000.csv"), header, field_rows(fields[0]))
    print(f"wrote {len(fields)} fields to {config.out_dir}")
    return EXIT_OK


def run_stabilize(config, args):
    grid = TorusGrid(config.dim, config.n[0])
    sigma = sample_sigma(config.kernel, grid, RngStream(config.seed), workers=config.threads)
    start = initial_configuration(sigma)

    results = {}
    if config.method in ("toppling", "both"):
        results["toppling"] = stabilize_toppling(start, tol=config.tol, max_rounds=config.max_rounds)
    if config.method in ("spectral", "both"):
        results["spectral"] = odometer_spectral(start, workers=config.threads)

    rows = []
    for name, result in results.items():
        write_dsgf(_out(config, f"odometer_{name}.dsgf"), result.u)
        values = result.u.values
        rows.append([name, result.rounds, result.residual, float(values.min()), float(values.max())])
    write_csv(_out(config, "summary.csv"), ["method", "rounds", "residual", "min_u", "max_u"], rows)

    if len(results) == 2:
        discrepancy = float(
            np.max(np.abs(results["toppling"].u.values - results["spectral"].u.values))
        )
        write_csv(_out(config, "discrepancy.csv"), ["max_abs_difference"], [[discrepancy]])
        print(f"max |u_toppling - u_spectral| = {discrepancy:.3e}")
    return EXIT_OK


def _report_limit(kernel, dim):
    xi = (1,) + (0,) * (dim - 1)
    try:
        estimate = limit_multiplier_estimate(kernel, xi, rescaled=isinstance(kernel, (WhiteNoise, PowerLaw)))
    except ValidationError as e:
        LOGGER.info("no limit multiplier at %s: %s", xi, e)
        return
    print(f"limit multiplier at {xi}: {estimate}")


def run_validate_kernel(config, args):
    status = EXIT_OK
    rows = []
    for n in config.n:
        grid = TorusGrid(config.dim, n)
        report = validate(config.kernel, grid, brute_force=grid.total <= BRUTE_FORCE_CAP)
        rows.append(
            [
                n,
                report.is_valid,
                report.min_multiplier,
                report.symmetric,
                report.offending_frequency or "",
                "" if report.min_eigenvalue_bruteforce is None else report.min_eigenvalue_bruteforce,
            ]
        )
        if not report.is_valid:
            status = EXIT_VALIDATION
            print(
                f"Z_{n}^{config.dim}: kernel is not positive definite "
                f"(min multiplier {report.min_multiplier:.6g}, "
                f"offending frequency {report.offending_frequency})"
            )
    header = [
        "n",
        "is_valid",
        "min_multiplier",
        "symmetric",
        "offending_frequency",
        "min_eigenvalue_bruteforce",
    ]
    write_csv(_out(config, "psd_report.csv"), header, rows)
    if status == EXIT_OK:
        _report_limit(config.kernel, config.dim)
    return status


def run_variance_convergence(config, args):
    rows = convergence_sweep(config.test_function, config.kernel, config.n, scaling=config.scaling)
    header, values = _dataclass_rows(rows)
    write_csv(_out(config, "variance_convergence.csv"), header, values)
    for row in rows:
        print(f"n={row.n}: finite_n={row.finite_n:.6f} limit={row.limit:.6f} gap={row.gap:.3e}")
    return EXIT_OK


def run_monte_carlo(config, args):
    reports = []
    for n in config.n:
        grid = TorusGrid(config.dim, n)
        report = monte_carlo_pairing(
            config.kernel,
            grid,
            config.test_function,
            scaling=config.scaling,
            replicates=config.replicates,
            seed=config.seed,
            threads=config.threads,
        )
        reports.append(report)
        z = z_score(report.mc_var, report.finite_n, report.mc_stderr)
        print(f"n={n}: mc_var={report.mc_var:.6g} finite_n={report.finite_n:.6g} z={z:+.2f}")
    header, values = _dataclass_rows(reports)
    write_csv(_out(config, "monte_carlo.csv"), header, values)
    return EXIT_OK


def run_tightness(config, args):
    rows = tightness_proxy(
        config.kernel,
        config.dim,
        config.n,
        replicates=config.replicates,
        epsilon=config.epsilon,
        cutoff=config.cutoff,
        seed=config.seed,
        threads=config.threads,
    )
    header, values = _dataclass_rows(rows)
    write_csv(_out(config, "tightness.csv"), header, values)
    return EXIT_OK


def run_render(config, args):
    if config.dim != 2:
        raise ValidationError(f"render needs d = 2, got d = {config.dim}")
    grid = TorusGrid(2, config.n[0])
    sigma = sample_sigma(config.kernel, grid, RngStream(config.seed), workers=config.threads)
    result = odometer_spectral(initial_configuration(sigma), workers=config.threads)
    rescaled = ScalarField(grid, scaling_constant(grid, STANDARD) * result.u.values)
    write_dsgf(_out(config, "odometer.dsgf"), rescaled)
    low, high = write_pgm(_out(config, "odometer.pgm"), rescaled)
    print(f"rendered {_out(config, 'odometer.pgm')} (range [{low:.6g}, {high:.6g}])")
    return EXIT_OK


COMMANDS = {
    "sample-sigma": run_sample_sigma,
    "stabilize": run_stabilize,
    "validate-kernel": run_validate_kernel,
    "variance-convergence": run_variance_convergence,
    "monte-carlo": run_monte_carlo,
    "tightness": run_tightness,
    "render": run_render,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_VALIDATION

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        config = load_config(args.config, _overrides(args))
        write_resolved(config)
        return COMMANDS[args.command](config, args)
    except ValidationError as e:
        LOGGER.debug("validation failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        LOGGER.debug("numerical failure", exc_info=True)
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
