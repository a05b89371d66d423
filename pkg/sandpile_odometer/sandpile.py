"""
Divisible sandpile stabilization on the torus and the covariance oracles of
its odometer.

The odometer u counts the mass each site emits before the configuration
settles to all ones. It solves Delta_g u = 1 - s with min u = 0, and is
computed here both by toppling and by an exact spectral Poisson solve.
"""
from dataclasses import dataclass
import enum
from functools import lru_cache
import logging
import time

import numpy as np

from .errors import SizeCapError, StabilizationError, ValidationError, ZeroMeanError
from .grid import (
    ScalarField,
    Spectrum,
    apply_graph_laplacian,
    dft_forward,
    dft_inverse,
    laplacian_eigenvalues,
    position_of,
)
from .kernels import BRUTE_FORCE_CAP, covariance_matrix, multiplier_table
from .sampler import initial_configuration

LOGGER = logging.getLogger(__name__)

ZERO_MEAN_TOL = 1e-9


class Method(enum.Enum):
    TOPPLING = "toppling"
    SPECTRAL = "spectral"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class OdometerResult:
    """
    Attributes:
        u (ScalarField): mass emitted per site
        rounds (int): toppling rounds or sweeps, 0 for the spectral solve
        residual (float): max |s_final - 1| for toppling; max
            |Delta_g u - (1 - s)| for the spectral solve
        method (Method):
    """

    u: ScalarField
    rounds: int
    residual: float
    method: Method

    @property
    def grid(self):
        return self.u.grid


def _excess(s):
    return np.maximum(s - 1.0, 0.0)


def stabilize_toppling(config, tol=1e-12, max_rounds=100000, observer=None):
    """
    Parallel toppling: each round every site with mass above 1 keeps 1 and
    sends an equal share of the excess to each of its 2d neighbours. All
    sites read the masses of the previous round.

    Args:
        config (SandpileConfig):
        tol (float): stop once the largest excess is at most tol
        max_rounds (int):
        observer (Optional[Callable[[int, np.ndarray, np.ndarray], None]]):
            called after each round with (round, s, u); receives copies

    Returns:
        OdometerResult

    Raises:
        StabilizationError: if the configuration is still unstable after
            max_rounds rounds
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")

    grid = config.grid
    share = 1.0 / (2 * grid.dim)
    s = np.array(config.s.values)
    u = np.zeros(grid.shape)
    started = time.perf_counter()

    rounds = 0
    excess = _excess(s)
    while float(excess.max()) > tol:
        if rounds >= max_rounds:
            raise StabilizationError(
                f"toppling did not stabilize within {max_rounds} rounds "
                f"(max excess {float(excess.max()):.3e}, tol {tol:.1e})",
                residual=float(excess.max()),
                rounds=rounds,
            )
        received = np.zeros(grid.shape)
        for axis in range(grid.dim):
            received += np.roll(excess, 1, axis=axis) + np.roll(excess, -1, axis=axis)
        u += excess
        s = s - excess + share * received
        rounds += 1
        if observer is not None:
            observer(rounds, s.copy(), u.copy())
        excess = _excess(s)

    LOGGER.debug(
        "toppling on Z_%d^%d settled after %d rounds in %.3fs",
        grid.n, grid.dim, rounds, time.perf_counter() - started,
    )
    return OdometerResult(
        ScalarField(grid, u), rounds, float(np.max(np.abs(s - 1.0))), Method.TOPPLING
    )


@lru_cache(maxsize=16)
def _neighbour_table(grid):
    index = np.arange(grid.total).reshape(grid.shape)
    columns = []
    for axis in range(grid.dim):
        columns.append(np.roll(index, 1, axis=axis).ravel())
        columns.append(np.roll(index, -1, axis=axis).ravel())
    table = np.stack(columns, axis=1)
    table.setflags(write=False)
    return table


def stabilize_sequential(config, tol=1e-12, max_sweeps=100000, rng=None):
    """
    Topple one site at a time, visiting the sites in a fresh random order on
    every sweep. The odometer does not depend on the order, so this agrees
    with stabilize_toppling.

    Args:
        config (SandpileConfig):
        tol (float):
        max_sweeps (int):
        rng (Optional[RngStream]): order of the sweeps; seed 0 if omitted

    Returns:
        OdometerResult: rounds counts sweeps
    """
    from .sampler import RngStream

    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")

    grid = config.grid
    share = 1.0 / (2 * grid.dim)
    neighbours = _neighbour_table(grid)
    generator = (rng or RngStream(0)).generator()
    s = np.array(config.s.values).ravel()
    u = np.zeros(grid.total)

    sweeps = 0
    while float(np.max(s)) - 1.0 > tol:
        if sweeps >= max_sweeps:
            residual = float(np.max(s)) - 1.0
            raise StabilizationError(
                f"sequential toppling did not stabilize within {max_sweeps} sweeps",
                residual=residual,
                rounds=sweeps,
            )
        for site in generator.permutation(grid.total):
            excess = s[site] - 1.0
            if excess > 0:
                u[site] += excess
                s[site] = 1.0
                # n = 2 lists the same neighbour twice per axis
                np.add.at(s, neighbours[site], share * excess)
        sweeps += 1

    return OdometerResult(
        ScalarField(grid, u), sweeps, float(np.max(np.abs(s - 1.0))), Method.SEQUENTIAL
    )


def odometer_spectral(config, workers=None):
    """
    Exact odometer by a Poisson solve: v_hat(xi) = (1 - s)_hat(xi) / lambda_xi
    for xi != 0, v_hat(0) = 0, and u = v - min v.

    Args:
        config (SandpileConfig):
        workers (Optional[int]): threads for the transforms

    Returns:
        OdometerResult

    Raises:
        ZeroMeanError: if 1 - s has nonzero mean
    """
    grid = config.grid
    deficit = ScalarField(grid, 1.0 - config.s.values)
    spectrum = dft_forward(deficit, workers=workers)
    origin = position_of(grid, (0,) * grid.dim)
    if abs(spectrum.coeffs[origin]) > ZERO_MEAN_TOL:
        raise ZeroMeanError(
            f"1 - s has mean {spectrum.coeffs[origin].real:.3e}; the Poisson solve "
            f"needs sum_z (1 - s(z)) = 0"
        )

    eigenvalues = np.array(laplacian_eigenvalues(grid))
    eigenvalues[origin] = 1.0
    coeffs = spectrum.coeffs / eigenvalues
    coeffs[origin] = 0.0
    v = dft_inverse(Spectrum(grid, coeffs), workers=workers).values
    u = ScalarField(grid, v - v.min())

    residual = float(np.max(np.abs(apply_graph_laplacian(u).values - deficit.values)))
    return OdometerResult(u, 0, residual, Method.SPECTRAL)


def odometer_from_sigma(sigma, method=Method.SPECTRAL, **kwargs):
    """
    Build the initial configuration from weights and stabilize it.

    Args:
        sigma (ScalarField):
        method (Method):
        **kwargs: passed to the chosen solver

    Returns:
        OdometerResult
    """
    config = initial_configuration(sigma)
    solvers = {
        Method.SPECTRAL: odometer_spectral,
        Method.TOPPLING: stabilize_toppling,
        Method.SEQUENTIAL: stabilize_sequential,
    }
    return solvers[Method(method)](config, **kwargs)


@lru_cache(maxsize=16)
def _green_at_origin(grid):
    eigenvalues = np.array(laplacian_eigenvalues(grid))
    origin = position_of(grid, (0,) * grid.dim)
    eigenvalues[origin] = 1.0
    coeffs = -2.0 * grid.dim / grid.total / eigenvalues
    coeffs[origin] = 0.0
    values = dft_inverse(Spectrum(grid, coeffs)).values
    values.setflags(write=False)
    return values


def green_function_zero_mean(grid, x):
    """
    Zero-mean torus Green function centred at x, with Fourier coefficients
    -2d n^{-d} lambda_xi^{-1} exp(-2 pi i xi.x / n) for xi != 0 and 0 at xi = 0.
    It solves Delta_g g_x = -2d (1_{. = x} - n^{-d}).

    Args:
        grid (TorusGrid):
        x (Sequence[int]): site

    Returns:
        ScalarField
    """
    shift = tuple(int(v) for v in np.asarray(x).reshape(-1))
    position_of(grid, shift)
    values = np.roll(_green_at_origin(grid), shift, axis=tuple(range(grid.dim)))
    return ScalarField(grid, values)


def chi_covariance_table(kernel, grid):
    """
    chi(h) = sum_{xi != 0} K_hat_n(xi) exp(2 pi i h.xi / n) / lambda_xi^2 for
    every lag h, the covariance of the mean-zero odometer.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):

    Returns:
        ScalarField: indexed by the lag
    """
    eigenvalues = np.array(laplacian_eigenvalues(grid))
    origin = position_of(grid, (0,) * grid.dim)
    eigenvalues[origin] = 1.0
    coeffs = multiplier_table(kernel, grid) / eigenvalues ** 2
    coeffs[origin] = 0.0
    return dft_inverse(Spectrum(grid, coeffs))


def chi_covariance(kernel, grid, x, y):
    """
    E[chi_x chi_y], a function of x - y only.

    Returns:
        float
    """
    lag = np.asarray(x, dtype=np.int64) - np.asarray(y, dtype=np.int64)
    return float(chi_covariance_table(kernel, grid)[lag])


def eta_covariance_bruteforce(kernel, grid, x, y):
    """
    (2d)^{-2} sum_{z, z'} K_n(z - z') g_x(z) g_y(z') by explicit summation over
    all site pairs.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):
        x (Sequence[int]):
        y (Sequence[int]):

    Returns:
        float

    Raises:
        SizeCapError: if n^d exceeds BRUTE_FORCE_CAP
    """
    if grid.total > BRUTE_FORCE_CAP:
        raise SizeCapError(
            f"brute-force eta covariance needs n^d <= {BRUTE_FORCE_CAP}, got {grid.total}"
        )
    g_x = green_function_zero_mean(grid, x).values.ravel()
    g_y = green_function_zero_mean(grid, y).values.ravel()
    matrix = covariance_matrix(kernel, grid)
    return float(g_x @ matrix @ g_y) / (2 * grid.dim) ** 2
