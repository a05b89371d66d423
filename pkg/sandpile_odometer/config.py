"""
Run configuration: INI files with [run] and [kernel] sections, overridden by
command-line flags. A file without section headers holds flat dotted keys
(run.n, kernel.variant); bare keys belong to [run].
"""
import configparser
import csv
from dataclasses import dataclass
import logging
import os
from typing import Optional, Tuple

from . import __version__
from .analysis import SCALING_MODES, TestFunction, default_epsilon
from .errors import ConfigError, FormatError, ValidationError
from .kernels import DirectMultiplier, FractionalSpectral, PowerLaw, Table, WhiteNoise

LOGGER = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.ini"

RUN_DEFAULTS = {
    "dim": "2",
    "n": "16",
    "seed": "0",
    "replicates": "200",
    "tol": "1e-12",
    "max_rounds": "100000",
    "epsilon": "",
    "cutoff": "16",
    "scaling": "standard",
    "test_function": "",
    "out_dir": ".",
    "threads": "",
    "method": "spectral",
}

KERNEL_DEFAULTS = {
    "variant": "direct_multiplier",
    "s": "0.5",
    "sign": "1",
    "diagonal": "7.0",
    "exponent": "3.0",
    "zero_mode": "1.0",
    "table_path": "",
    "default": "",
}

METHODS = ("toppling", "spectral", "both")


@dataclass(frozen=True)
class RunConfig:
    """
    Fully resolved settings of one CLI run.
    """

    dim: int
    n: Tuple[int, ...]
    kernel: object
    seed: int
    replicates: int
    tol: float
    max_rounds: int
    epsilon: float
    cutoff: int
    scaling: str
    test_function: TestFunction
    out_dir: str
    threads: Optional[int]
    method: str
    # raw section values, written back by write_resolved
    sections: Tuple[Tuple[str, Tuple[Tuple[str, str], ...]], ...] = ()


def _read_flat(parser, text, path):
    flat = configparser.ConfigParser(interpolation=None)
    try:
        flat.read_string("[flat]\n" + text, source=path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}")
    for key, value in flat["flat"].items():
        section, dot, name = key.partition(".")
        if not dot:
            section, name = "run", key
        if section not in ("run", "kernel") or not name:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        parser.set(section, name, value)
    parser.read_dict({s: dict(flat[s]) for s in flat.sections() if s != "flat"}, source=path)


def _read_file(parser, path):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        parser.read_string(text, source=path)
    except configparser.MissingSectionHeaderError:
        _read_flat(parser, text, path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}")


def load_config(path=None, overrides=None):
    """
    Resolve defaults < config file < overrides and validate the result.

    Args:
        path (Optional[str]): INI file
        overrides (Optional[Dict[str, Any]]): dotted keys such as "run.n" or
            "kernel.s"; None values are ignored

    Returns:
        RunConfig

    Raises:
        ConfigError: for unknown keys or values that do not parse
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict({"run": RUN_DEFAULTS, "kernel": KERNEL_DEFAULTS})
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path} not found")
        _read_file(parser, path)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if section not in ("run", "kernel") or not name:
            raise ConfigError(f"unknown config key {key!r}")
        parser.set(section, name, str(value))

    for section, defaults in (("run", RUN_DEFAULTS), ("kernel", KERNEL_DEFAULTS)):
        unknown = set(parser[section]) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    extra = set(parser.sections()) - {"run", "kernel", "meta"}
    if extra:
        raise ConfigError(f"unknown sections: {', '.join(sorted(extra))}")

    run, kernel_section = parser["run"], parser["kernel"]
    try:
        dim = _parse_int(run, "dim")
        config = RunConfig(
            dim=dim,
            n=tuple(int(v) for v in run["n"].replace(" ", "").split(",") if v),
            kernel=parse_kernel(kernel_section, dim),
            seed=_parse_int(run, "seed"),
            replicates=_parse_int(run, "replicates"),
            tol=_parse_float(run, "tol"),
            max_rounds=_parse_int(run, "max_rounds"),
            epsilon=_parse_float(run, "epsilon") if run["epsilon"] else default_epsilon(dim),
            cutoff=_parse_int(run, "cutoff"),
            scaling=run["scaling"],
            test_function=parse_test_function(run["test_function"], dim),
            out_dir=run["out_dir"],
            threads=_parse_int(run, "threads") if run["threads"] else None,
            method=run["method"],
            sections=tuple(
                (name, tuple(parser[name].items())) for name in ("run", "kernel")
            ),
        )
    except ValueError as e:
        raise ConfigError(f"invalid configuration value: {e}")

    _validate(config)
    return config


def _parse_int(section, key):
    try:
        return section.getint(key)
    except ValueError:
        raise ConfigError(f"{section.name}.{key} must be an integer, got {section[key]!r}")


def _parse_float(section, key):
    try:
        return section.getfloat(key)
    except ValueError:
        raise ConfigError(f"{section.name}.{key} must be a number, got {section[key]!r}")


def _validate(config):
    if not config.n or any(n < 2 for n in config.n):
        raise ConfigError(f"run.n must list side lengths >= 2, got {config.n}")
    if config.replicates < 1:
        raise ConfigError(f"run.replicates must be positive, got {config.replicates}")
    if not config.tol > 0:
        raise ConfigError(f"run.tol must be positive, got {config.tol}")
    if config.max_rounds < 1:
        raise ConfigError(f"run.max_rounds must be positive, got {config.max_rounds}")
    if config.cutoff < 1:
        raise ConfigError(f"run.cutoff must be positive, got {config.cutoff}")
    if config.scaling not in SCALING_MODES:
        raise ConfigError(f"run.scaling must be one of {SCALING_MODES}, got {config.scaling!r}")
    if config.method not in METHODS:
        raise ConfigError(f"run.method must be one of {METHODS}, got {config.method!r}")
    if config.threads is not None and config.threads < 1:
        raise ConfigError(f"run.threads must be positive, got {config.threads}")
    if config.seed < 0:
        raise ConfigError(f"run.seed must be non-negative, got {config.seed}")
    if config.test_function.dim != config.dim:
        raise ConfigError("run.test_function dimension does not match run.dim")


def _variant_name(value):
    return value.replace("_", "").replace("-", "").lower()


def parse_kernel(section, dim):
    """
    Build a KernelSpec from the [kernel] section.

    Args:
        section (Mapping[str, str]):
        dim (int): dimension of table frequencies

    Returns:
        KernelSpec
    """
    variant = _variant_name(section["variant"])
    try:
        if variant == "whitenoise":
            return WhiteNoise()
        if variant == "powerlaw":
            return PowerLaw(
                sign=int(section["sign"]),
                diagonal=float(section["diagonal"]),
                exponent=float(section["exponent"]),
            )
        if variant == "fractionalspectral":
            return FractionalSpectral(float(section["s"]), float(section["zero_mode"]))
        if variant == "directmultiplier":
            return DirectMultiplier(float(section["s"]), float(section["zero_mode"]))
        if variant == "table":
            if not section["table_path"]:
                raise ConfigError("kernel.table_path is required for the table variant")
            default = float(section["default"]) if section["default"] else None
            return Table(read_table(section["table_path"], dim), default=default)
    except ValidationError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid kernel: {e}")
    raise ConfigError(f"unknown kernel variant {section['variant']!r}")


def read_table(path, dim):
    """
    Read multiplier rows xi_1, ..., xi_d, value from a CSV with a header row.

    Returns:
        Dict[Tuple[int, ...], float]
    """
    values = {}
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        next(reader, None)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise FormatError(f"{path}:{line}: expected {dim + 1} columns, got {len(row)}")
            values[tuple(int(v) for v in row[:dim])] = float(row[dim])
    return values


def parse_test_function(text, dim):
    """
    Parse rows "nu_1 ... nu_d re im" separated by ';', or read them from a CSV
    file with a header row. Empty text gives 2 cos(2 pi x_1).

    Returns:
        TestFunction
    """
    if not text.strip():
        return TestFunction.cosine((1,) + (0,) * (dim - 1))

    if os.path.isfile(text):
        with open(text, "r", newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            next(reader, None)
            rows = [row for row in reader if row]
    else:
        rows = [chunk.split() for chunk in text.split(";") if chunk.strip()]

    modes = {}
    for row in rows:
        if len(row) != dim + 2:
            raise ConfigError(f"test function row {row} needs {dim} frequencies, re and im")
        nu = tuple(int(v) for v in row[:dim])
        modes[nu] = complex(float(row[dim]), float(row[dim + 1]))
    try:
        return TestFunction(modes)
    except ValidationError as e:
        raise ConfigError(f"invalid test function: {e}")


def write_resolved(config, out_dir=None):
    """
    Write the resolved configuration and package version next to a run's
    outputs.

    Returns:
        str: path written
    """
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    parser = configparser.ConfigParser(interpolation=None)
    parser["meta"] = {"version": __version__}
    for name, items in config.sections:
        parser[name] = dict(items)
    path = os.path.join(out_dir, RESOLVED_CONFIG_NAME)
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)
    LOGGER.info("wrote %s", path)
    return path
