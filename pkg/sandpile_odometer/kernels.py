"""
Stationary covariance models given by their Fourier multiplier K_hat_n.

A kernel K_n(z) on Z_n^d and its multiplier are related by the transforms of
the grid module, K_n(z) = sum_xi K_hat_n(xi) psi_xi(z). A kernel is a valid
covariance iff its multiplier is real, even and positive.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import logging
import math
from typing import Mapping, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import KernelError, SizeCapError, ValidationError, ZeroLimitError, ZeroMeanError
from .grid import (
    ScalarField,
    Spectrum,
    coordinate_mesh,
    dft_forward,
    dft_inverse,
    eigenvalue_sandwich,
    frequency_mesh,
    laplacian_eigenvalues,
    position_of,
    reflect,
)

LOGGER = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 4096
SYMMETRY_TOL = 1e-12
EIGENVALUE_TOL = 1e-10
ZERO_SUM_TOL = 1e-12
ZERO_MEAN_TOL = 1e-12

# Side lengths used to extrapolate the rescaled PowerLaw limit
RICHARDSON_SIDES = (32, 64, 128)


@dataclass(frozen=True)
class WhiteNoise:
    """Independent weights, K_n(z) = 1_{z=0}."""


@dataclass(frozen=True)
class PowerLaw:
    """
    K(0) = diagonal, K(z) = sign * |z|^{-exponent} otherwise, with |z| the
    minimum-image Euclidean norm on the torus.
    """

    sign: int = 1
    diagonal: float = 7.0
    exponent: float = 3.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValidationError(f"PowerLaw sign must be +1 or -1, got {self.sign}")
        if self.exponent <= 0:
            raise ValidationError(f"PowerLaw exponent must be positive, got {self.exponent}")


@dataclass(frozen=True)
class FractionalSpectral:
    """
    Multiplier (a_n / (-lambda_xi))^{2s}, the covariance a_n^{2s} (-Delta_g)^{-2s}.
    """

    s: float
    zero_mode: float = 1.0

    def __post_init__(self):
        _check_fractional(self.s, self.zero_mode)


@dataclass(frozen=True)
class DirectMultiplier:
    """Multiplier |xi|^{-4s} for xi != 0."""

    s: float
    zero_mode: float = 1.0

    def __post_init__(self):
        _check_fractional(self.s, self.zero_mode)


@dataclass(frozen=True)
class Table:
    """
    Explicit multiplier values keyed by frequency tuple. Frequencies missing
    from values take default; limit gives the n -> infinity multiplier, as a
    mapping or a single constant.
    """

    values: Mapping[Tuple[int, ...], float] = field(default_factory=dict, hash=False)
    default: Optional[float] = None
    limit: Union[None, float, Mapping[Tuple[int, ...], float]] = field(default=None, hash=False)

    def __hash__(self):
        return id(self)


KernelSpec = Union[WhiteNoise, PowerLaw, FractionalSpectral, DirectMultiplier, Table]


@dataclass(frozen=True)
class PSDReport:
    """
    Outcome of the discrete Bochner check of a kernel on a grid.
    """

    is_valid: bool
    min_multiplier: float
    symmetric: bool
    offending_frequency: Optional[Tuple[int, ...]] = None
    min_eigenvalue_bruteforce: Optional[float] = None


def _check_fractional(s, zero_mode):
    if not s > 0:
        raise ValidationError(f"smoothness s must be positive, got {s}")
    if not zero_mode > 0:
        raise ValidationError(f"zero_mode must be positive, got {zero_mode}")


def _a_n(grid):
    return 4 * math.pi ** 2 / (2 * grid.dim) / grid.n ** 2


@lru_cache(maxsize=32)
def _power_law_kernel(kernel, grid):
    mesh = coordinate_mesh(grid).astype(np.float64)
    norms = np.sqrt(np.sum(mesh ** 2, axis=-1))
    origin = position_of(grid, (0,) * grid.dim)
    norms[origin] = 1.0
    table = kernel.sign * norms ** -kernel.exponent
    table[origin] = kernel.diagonal
    table.setflags(write=False)
    return table


@lru_cache(maxsize=32)
def _power_law_multipliers(kernel, grid):
    coeffs = dft_forward(ScalarField(grid, _power_law_kernel(kernel, grid))).coeffs.real
    # even kernel: symmetrize away transform rounding
    table = 0.5 * (coeffs + reflect(coeffs))
    table.setflags(write=False)
    return table


def _raw_multipliers(kernel, grid):
    """
    Multiplier table without admissibility checks, centred storage order.
    """
    if isinstance(kernel, WhiteNoise):
        return np.full(grid.shape, float(grid.total) ** -1)

    if isinstance(kernel, PowerLaw):
        return np.array(_power_law_multipliers(kernel, grid))

    freqs = frequency_mesh(grid)
    origin = position_of(grid, (0,) * grid.dim)

    if isinstance(kernel, FractionalSpectral):
        eigen = -laplacian_eigenvalues(grid)
        eigen = np.where(eigen > 0, eigen, 1.0)
        table = (_a_n(grid) / eigen) ** (2 * kernel.s)
        table[origin] = kernel.zero_mode
        return table

    if isinstance(kernel, DirectMultiplier):
        norms_sq = np.sum(freqs.astype(np.float64) ** 2, axis=-1)
        norms_sq[origin] = 1.0
        table = norms_sq ** (-2 * kernel.s)
        table[origin] = kernel.zero_mode
        return table

    if isinstance(kernel, Table):
        table = np.empty(grid.shape)
        for position in np.ndindex(*grid.shape):
            xi = tuple(int(v) for v in freqs[position])
            if xi in kernel.values:
                table[position] = kernel.values[xi]
            elif kernel.default is not None:
                table[position] = kernel.default
            else:
                raise KernelError(f"table has no multiplier for frequency {xi}", frequency=xi)
        return table

    raise ValidationError(f"unknown kernel variant {type(kernel).__name__}")


def multiplier_table(kernel, grid):
    """
    All multiplier values K_hat_n(xi) on a grid.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):

    Returns:
        np.ndarray: centred storage order

    Raises:
        KernelError: if any value is negative or non-finite, or, for PowerLaw,
            not strictly positive; carries the first offending frequency
    """
    table = _raw_multipliers(kernel, grid)
    strict = isinstance(kernel, PowerLaw)
    bad = ~np.isfinite(table) | ((table <= 0) if strict else (table < 0))
    if np.any(bad):
        xi = _frequency_at(grid, np.argwhere(bad)[0])
        raise KernelError(
            f"{type(kernel).__name__} multiplier is {table[tuple(np.argwhere(bad)[0])]:.6g} "
            f"at frequency {xi} on Z_{grid.n}^{grid.dim}; kernel is not positive definite",
            frequency=xi,
        )
    return table


def _frequency_at(grid, position):
    return tuple(int(p) + grid.low for p in position)


def multiplier(kernel, grid, xi):
    """
    K_hat_n(xi) for a single frequency.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):
        xi (Sequence[int]): frequency, taken mod n

    Returns:
        float
    """
    return float(multiplier_table(kernel, grid)[position_of(grid, xi)])


def kernel_table(kernel, grid):
    """
    The stationary kernel K_n(z) = sum_xi K_hat_n(xi) psi_xi(z).

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):

    Returns:
        ScalarField: real and exactly even, K_n(z) = K_n(-z)
    """
    table = multiplier_table(kernel, grid)
    return _even_kernel(grid, table)


def _even_kernel(grid, table):
    values = dft_inverse(Spectrum(grid, 0.5 * (table + reflect(table)))).values
    return ScalarField(grid, 0.5 * (values + reflect(values)))


def covariance_matrix(kernel, grid, table=None):
    """
    Brute-force n^d x n^d covariance matrix K_n(x - y) over all site pairs.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):
        table (Optional[np.ndarray]): multiplier table to use instead of the
            kernel's; it is not checked for positivity

    Returns:
        np.ndarray

    Raises:
        SizeCapError: if n^d exceeds BRUTE_FORCE_CAP
    """
    if grid.total > BRUTE_FORCE_CAP:
        raise SizeCapError(f"brute force needs n^d <= {BRUTE_FORCE_CAP}, got {grid.total}")
    if table is None:
        table = multiplier_table(kernel, grid)
    return lag_matrix(_even_kernel(grid, table))


def lag_matrix(field):
    """
    Matrix M[i, j] = field(z_i - z_j) over lexicographic site indices.

    Args:
        field (ScalarField):

    Returns:
        np.ndarray
    """
    grid = field.grid
    mesh = coordinate_mesh(grid).reshape(grid.total, grid.dim)
    lags = mesh[:, None, :] - mesh[None, :, :]
    positions = np.mod(lags - grid.low, grid.n)
    return field.values[tuple(positions[..., axis] for axis in range(grid.dim))]


def validate(kernel, grid, brute_force=False):
    """
    Discrete Bochner check: the kernel is a covariance on the grid iff its
    multiplier is real, symmetric and positive.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):
        brute_force (bool): additionally diagonalize the covariance matrix

    Returns:
        PSDReport: failures are reported, not raised
    """
    try:
        table = _raw_multipliers(kernel, grid)
    except KernelError as e:
        LOGGER.warning("kernel validation failed: %s", e)
        return PSDReport(False, float("nan"), False, offending_frequency=e.frequency)

    min_position = np.unravel_index(int(np.argmin(table)), grid.shape)
    min_multiplier = float(table[min_position])
    scale = max(1.0, float(np.max(np.abs(table))))
    symmetric = bool(np.max(np.abs(table - reflect(table))) <= SYMMETRY_TOL * scale)

    offending = None
    if not min_multiplier > 0:
        offending = _frequency_at(grid, min_position)

    min_eigenvalue = None
    if brute_force:
        eigenvalues = scipy.linalg.eigvalsh(covariance_matrix(kernel, grid, table=table))
        min_eigenvalue = float(eigenvalues[0])

    is_valid = min_multiplier > 0 and symmetric
    if min_eigenvalue is not None:
        is_valid = is_valid and min_eigenvalue >= -EIGENVALUE_TOL

    if not is_valid:
        LOGGER.warning(
            "%s is not positive definite on Z_%d^%d (min multiplier %.6g at %s)",
            type(kernel).__name__, grid.n, grid.dim, min_multiplier, offending,
        )
    return PSDReport(is_valid, min_multiplier, symmetric, offending, min_eigenvalue)


def uniform_bound(kernel, dim, sides):
    """
    max over the given side lengths and all frequencies of K_hat_n(xi).

    Args:
        kernel (KernelSpec):
        dim (int):
        sides (Iterable[int]):

    Returns:
        float
    """
    from .grid import TorusGrid

    return max(float(np.max(multiplier_table(kernel, TorusGrid(dim, n)))) for n in sides)


def richardson_limit(values):
    """
    Extrapolate a sequence sampled at n, 2n, 4n assuming error ~ C n^{-p}.

    Args:
        values (Sequence[float]): three samples

    Returns:
        Tuple[float, float]: extrapolated value and the estimated order p
            (nan when the samples do not show a geometric error)
    """
    v1, v2, v3 = values
    d12, d23 = v1 - v2, v2 - v3
    if d23 == 0 or d12 == 0 or d12 / d23 <= 1:
        return v3, float("nan")
    order = math.log2(d12 / d23)
    return v3 - d23 / (2 ** order - 1), order


@dataclass(frozen=True)
class LimitEstimate:
    """
    A limit multiplier and, for extrapolated values, the Richardson order.
    """

    value: float
    order: Optional[float] = None

    @property
    def is_estimate(self):
        return self.order is not None

    def __str__(self):
        if self.is_estimate:
            return f"{self.value:.10g} (estimate, order {self.order:.3g})"
        return f"{self.value:.10g}"


def limit_multiplier_estimate(kernel, xi, rescaled=False):
    """
    lim_{n -> infinity} K_hat_n(xi), or of n^d K_hat_n(xi) when rescaled.

    Kernels with a summable table (WhiteNoise, PowerLaw) have multipliers of
    order n^{-d}; their limit only exists after the n^d rescaling used with
    the b_n scaling constant.

    Args:
        kernel (KernelSpec):
        xi (Sequence[int]): nonzero frequency in Z^d
        rescaled (bool):

    Returns:
        LimitEstimate: exact values carry no order; PowerLaw is a Richardson
            estimate from n in RICHARDSON_SIDES

    Raises:
        ZeroLimitError: for WhiteNoise and PowerLaw without rescaling
    """
    xi = tuple(int(v) for v in xi)
    if not any(xi):
        raise ValidationError("limit multiplier needs a nonzero frequency")

    if isinstance(kernel, (FractionalSpectral, DirectMultiplier)):
        if rescaled:
            raise ValidationError(
                f"{type(kernel).__name__} has a bounded multiplier; use the a_n scaling"
            )
        return LimitEstimate(float(sum(v * v for v in xi)) ** (-2 * kernel.s))

    if isinstance(kernel, (WhiteNoise, PowerLaw)) and not rescaled:
        raise ZeroLimitError(
            f"{type(kernel).__name__} multiplier tends to 0: requires b_n rescaling "
            f"(use the bilap scaling mode)"
        )

    if isinstance(kernel, WhiteNoise):
        return LimitEstimate(1.0)

    if isinstance(kernel, PowerLaw):
        from .grid import TorusGrid

        samples = []
        for n in RICHARDSON_SIDES:
            grid = TorusGrid(len(xi), n)
            samples.append(grid.total * float(_power_law_multipliers(kernel, grid)[position_of(grid, xi)]))
        value, order = richardson_limit(samples)
        estimate = LimitEstimate(value, order)
        LOGGER.debug("PowerLaw limit multiplier at %s: %s", xi, estimate)
        return estimate

    if isinstance(kernel, Table):
        if kernel.limit is None:
            raise ZeroLimitError("table kernel declares no limit multiplier")
        if isinstance(kernel.limit, Mapping):
            try:
                return LimitEstimate(float(kernel.limit[xi]))
            except KeyError:
                raise KernelError(f"table declares no limit at frequency {xi}", frequency=xi)
        return LimitEstimate(float(kernel.limit))

    raise ValidationError(f"unknown kernel variant {type(kernel).__name__}")


def limit_multiplier(kernel, xi, rescaled=False):
    """
    Value of limit_multiplier_estimate.

    Returns:
        float
    """
    return limit_multiplier_estimate(kernel, xi, rescaled).value


def fractional_limit_bounds(kernel, grid, xi, c=1.0):
    """
    Bounds on the FractionalSpectral multiplier from the s-th power of the
    eigenvalue sandwich,

        |xi|^{-4s} <= K_hat_n(xi) <= pi^{4s} (|pi xi|^{-2} + c n^{-2})^{2s}.

    Args:
        kernel (FractionalSpectral):
        grid (TorusGrid):
        xi (Sequence[int]): nonzero frequency in Z_n^d
        c (float): constant of the sandwich's upper bound

    Returns:
        Tuple[float, float]: lower and upper bound
    """
    if not isinstance(kernel, FractionalSpectral):
        raise ValidationError(f"expected a FractionalSpectral kernel, got {type(kernel).__name__}")
    lower, _, upper = eigenvalue_sandwich(grid, xi, c)
    scale = math.pi ** (4 * kernel.s)
    return scale * lower ** kernel.s, scale * upper ** kernel.s


def summed_kernel_constant(kernel, grid):
    """
    C_K = sum_z K(z) over the grid window Z_n^d.

    Args:
        kernel (KernelSpec): WhiteNoise, PowerLaw or Table
        grid (TorusGrid):

    Returns:
        float

    Raises:
        ValidationError: C_K = 0 violates hypothesis, or the kernel has no
            summable table
    """
    if isinstance(kernel, (FractionalSpectral, DirectMultiplier)):
        raise ValidationError(f"{type(kernel).__name__} has no summable kernel table")

    if isinstance(kernel, PowerLaw):
        total = float(np.sum(_power_law_kernel(kernel, grid)))
    else:
        total = float(np.sum(kernel_table(kernel, grid).values))

    if abs(total) <= ZERO_SUM_TOL:
        raise ValidationError("C_K = 0 violates hypothesis C_K != 0")
    return total


def fractional_laplacian_discrete(operand, s, direction="inverse"):
    """
    Spectral fractional Laplacian on zero-mean grid functions: multiply each
    mode nu != 0 by (-lambda_nu)^{-s} ("inverse") or (-lambda_nu)^{s}
    ("forward"); the zero mode stays 0.

    Args:
        operand (Union[ScalarField, Spectrum]):
        s (float):
        direction (str): "inverse" or "forward"

    Returns:
        Same type as operand

    Raises:
        ZeroMeanError: if the input does not sum to zero
    """
    if direction not in ("inverse", "forward"):
        raise ValidationError(f"direction must be 'inverse' or 'forward', got {direction!r}")

    spectrum = dft_forward(operand) if isinstance(operand, ScalarField) else operand
    grid = spectrum.grid
    origin = position_of(grid, (0,) * grid.dim)

    scale = max(1.0, float(np.max(np.abs(spectrum.coeffs))))
    if abs(spectrum.coeffs[origin]) > ZERO_MEAN_TOL * scale:
        raise ZeroMeanError(
            "fractional Laplacian needs a zero-average input, sum_z f(z) = 0"
        )

    eigen = -laplacian_eigenvalues(grid)
    safe = np.where(eigen > 0, eigen, 1.0)
    factor = safe ** (-s if direction == "inverse" else s)
    factor[origin] = 0.0
    result = Spectrum(grid, spectrum.coeffs * factor)

    if isinstance(operand, ScalarField):
        return dft_inverse(result)
    return result
