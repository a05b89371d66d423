"""
Scaling-limit checks for the rescaled odometer: pairings with smooth test
functions, closed-form variances, Sobolev norms and the Monte Carlo harness
that ties them together.

Test functions are trigonometric polynomials f(x) = sum_nu c_nu phi_nu(x),
phi_nu(x) = exp(2 pi i nu.x), on the continuum torus T^d = [0, 1)^d, so every
sum over frequencies below is finite.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
import itertools
import logging
import math
from typing import Dict, Tuple

import numpy as np
import scipy.special
import scipy.stats

from .errors import AliasingError, EpsilonError, ValidationError
from .grid import ScalarField, Spectrum, TorusGrid, coordinate_mesh, dft_forward, laplacian_eigenvalues, position_of
from .kernels import limit_multiplier, multiplier_table, summed_kernel_constant
from .sampler import RngStream, initial_configuration, sample_sigma
from .sandpile import OdometerResult, odometer_spectral

LOGGER = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
MIN_REPLICATES = 100

STANDARD = "standard"
BILAP = "bilap"
SCALING_MODES = (STANDARD, BILAP)

EXACT = "exact"
MIDPOINT = "midpoint"
QUADRATURES = (EXACT, MIDPOINT)


@dataclass(frozen=True)
class TestFunction:
    """
    Real, mean-zero trigonometric polynomial.

    Attributes:
        modes (Dict[Tuple[int, ...], complex]): coefficient c_nu per nonzero
            frequency nu; c_{-nu} must equal conj(c_nu)
    """

    __test__ = False

    modes: Dict[Tuple[int, ...], complex] = field(hash=False)

    def __post_init__(self):
        if not self.modes:
            raise ValidationError("test function needs at least one mode")
        modes = {tuple(int(v) for v in nu): complex(c) for nu, c in self.modes.items()}
        dims = {len(nu) for nu in modes}
        if len(dims) != 1:
            raise ValidationError("test function modes have mixed dimensions")
        for nu, c in modes.items():
            if not any(nu):
                raise ValidationError("test function must have zero mean (no zero mode)")
            partner = modes.get(tuple(-v for v in nu))
            if partner is None or abs(partner - c.conjugate()) > HERMITIAN_TOL * max(1.0, abs(c)):
                raise ValidationError(
                    f"coefficients at {nu} and its negative are not conjugate; f would be complex"
                )
        object.__setattr__(self, "modes", modes)

    @classmethod
    def cosine(cls, frequency, coefficient=1.0):
        """
        c phi_nu + conj(c) phi_{-nu}; coefficient 1 gives 2 cos(2 pi nu.x).
        """
        nu = tuple(int(v) for v in frequency)
        c = complex(coefficient)
        return cls({nu: c, tuple(-v for v in nu): c.conjugate()})

    @property
    def dim(self):
        return len(next(iter(self.modes)))

    def evaluate(self, points):
        """
        Args:
            points (np.ndarray): shape (..., d), points of T^d

        Returns:
            np.ndarray: f at every point
        """
        points = np.asarray(points, dtype=np.float64)
        total = np.zeros(points.shape[:-1], dtype=np.complex128)
        for nu, c in self.modes.items():
            total += c * np.exp(2j * np.pi * (points @ np.asarray(nu, dtype=np.float64)))
        return total.real

    def scale(self, alpha):
        return TestFunction({nu: alpha * c for nu, c in self.modes.items()})

    def max_frequency(self):
        return max(abs(v) for nu in self.modes for v in nu)


@dataclass(frozen=True)
class VarianceReport:
    n: int
    finite_n: float
    limit: float
    mc_mean: float
    mc_var: float
    mc_stderr: float
    skewness: float
    excess_kurtosis: float
    replicates: int

    @property
    def mean_stderr(self):
        return math.sqrt(self.mc_var / self.replicates)


@dataclass(frozen=True)
class SobolevEstimate:
    """
    Truncated negative-order Sobolev norm of a rescaled field.

    Attributes:
        epsilon (float):
        cutoff (int): frequencies with |xi| <= cutoff are summed
        value (float):
        n (int):
        tail_bound (float): bound on the frequencies left out
    """

    epsilon: float
    cutoff: int
    value: float
    n: int
    tail_bound: float = 0.0


@dataclass(frozen=True)
class SweepRow:
    n: int
    finite_n: float
    limit: float
    gap: float


@dataclass(frozen=True)
class TightnessRow:
    n: int
    mean: float
    stderr: float
    tail_bound: float
    epsilon: float
    cutoff: int


def _side_factors(n, xi):
    xi = np.asarray(xi, dtype=np.float64)
    safe = np.where(xi == 0, 1.0, xi)
    return np.where(xi == 0, 1.0 / n, np.sin(np.pi * xi / n) / (np.pi * safe))


def box_integral(grid, xi, z):
    """
    Integral of phi_xi over the box of side 1/n centred at z.

    Args:
        grid (TorusGrid):
        xi (Sequence[int]): frequency in Z^d
        z (np.ndarray): lattice centres k/n, shape (d,) or (..., d)

    Returns:
        complex or np.ndarray: phi_xi(z) prod_i t_i with t_i =
            sin(pi xi_i / n) / (pi xi_i), or 1/n when xi_i = 0
    """
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    if xi.shape != (grid.dim,):
        raise ValidationError(f"expected a {grid.dim}-vector frequency, got {tuple(xi)}")
    z = np.asarray(z, dtype=np.float64)
    weight = float(np.prod(_side_factors(grid.n, xi)))
    return weight * np.exp(2j * np.pi * (z @ xi))


def _check_fits(f, grid):
    if f.dim != grid.dim:
        raise ValidationError(f"test function is {f.dim}-dimensional, grid is {grid.dim}-dimensional")
    if 2 * f.max_frequency() >= grid.n:
        raise AliasingError(
            f"test function frequency {f.max_frequency()} aliases on Z_{grid.n}^{grid.dim}; "
            f"need n > {2 * f.max_frequency()}"
        )


def _mode_weights(f, grid, quadrature):
    """
    Coefficients of the pairing weight w(z) = sum_nu c_nu W_nu phi_nu(z/n) per
    grid frequency, with W_nu = n^d prod t_i for box integrals and 1 at the
    midpoint. Sums of w against psi_xi are n^d times these entries at -xi.
    """
    if quadrature not in QUADRATURES:
        raise ValidationError(f"quadrature must be one of {QUADRATURES}, got {quadrature!r}")
    weights = np.zeros(grid.shape, dtype=np.complex128)
    for nu, c in f.modes.items():
        factor = 1.0
        if quadrature == EXACT:
            factor = grid.total * float(np.prod(_side_factors(grid.n, nu)))
        weights[position_of(grid, nu)] += c * factor
    return weights


def _field_of(u):
    return u.u if isinstance(u, OdometerResult) else u


def pair_odometer(u, f, scaling, quadrature=EXACT):
    """
    Pairing of the rescaled odometer with a test function.

    exact: scaling * sum_z u(z) int_{B(z/n, 1/2n)} f
    midpoint: scaling * n^{-d} sum_z u(z) f(z/n)

    Args:
        u (Union[OdometerResult, ScalarField]):
        f (TestFunction):
        scaling (float):
        quadrature (str): "exact" or "midpoint"

    Returns:
        float
    """
    field_ = _field_of(u)
    grid = field_.grid
    _check_fits(f, grid)
    spectrum = dft_forward(field_).coeffs
    weights = _mode_weights(f, grid, quadrature)
    # sum_z u(z) phi_nu(z/n) = n^d u_hat(-nu)
    total = np.sum(weights * np.conj(spectrum))
    return float(scaling * total.real)


def pair_midpoint(u, f, scaling):
    return pair_odometer(u, f, scaling, quadrature=MIDPOINT)


def quadrature_error(f, grid):
    """
    E_n(z) = n^d int_{B(z/n, 1/2n)} f - f(z/n) at every site.

    Args:
        f (TestFunction):
        grid (TorusGrid):

    Returns:
        ScalarField
    """
    _check_fits(f, grid)
    points = coordinate_mesh(grid) / grid.n
    error = np.zeros(grid.shape, dtype=np.complex128)
    for nu, c in f.modes.items():
        factor = grid.total * float(np.prod(_side_factors(grid.n, nu))) - 1.0
        error += c * factor * np.exp(2j * np.pi * (points @ np.asarray(nu, dtype=np.float64)))
    return ScalarField(grid, error.real)


def scaling_constant(grid, mode=STANDARD, c_k=None):
    """
    a_n = 4 pi^2 (2d)^{-1} n^{-2}, or b_n = 4 pi^2 (2d)^{-1} n^{(d-4)/2} C_K^{-1/2}.

    Args:
        grid (TorusGrid):
        mode (str): "standard" or "bilap"
        c_k (Optional[float]): summed kernel constant, required for bilap

    Returns:
        float
    """
    base = 4 * math.pi ** 2 / (2 * grid.dim)
    if mode == STANDARD:
        return base / grid.n ** 2
    if mode != BILAP:
        raise ValidationError(f"scaling mode must be one of {SCALING_MODES}, got {mode!r}")
    if c_k is None or c_k == 0:
        raise ValidationError("bilap scaling needs C_K != 0")
    if c_k < 0:
        raise ValidationError(f"bilap scaling needs C_K > 0 for a real b_n, got {c_k}")
    return base * float(grid.n) ** ((grid.dim - 4) / 2) / math.sqrt(c_k)


def _norm_sq(nu):
    return float(sum(v * v for v in nu))


def limit_norm(f, kernel, scaling=STANDARD):
    """
    ||f||_K^2 = sum_{nu != 0} K_hat(nu) |nu|^{-4} |c_nu|^2.

    In bilap mode the rescaled multiplier divided by C_K tends to 1 and the
    norm is the one of the bi-Laplacian field.

    Args:
        f (TestFunction):
        kernel (KernelSpec):
        scaling (str): "standard" or "bilap"

    Returns:
        float

    Raises:
        ZeroLimitError: for kernels without a limit multiplier in standard mode
    """
    if scaling not in SCALING_MODES:
        raise ValidationError(f"scaling mode must be one of {SCALING_MODES}, got {scaling!r}")
    total = 0.0
    for nu, c in f.modes.items():
        weight = 1.0 if scaling == BILAP else limit_multiplier(kernel, nu)
        total += weight * _norm_sq(nu) ** -2 * abs(c) ** 2
    return total


def _resolve_scaling(kernel, grid, scaling, c_k):
    if scaling == BILAP and c_k is None:
        c_k = summed_kernel_constant(kernel, grid)
    return scaling_constant(grid, scaling, c_k)


def finite_n_variance(f, kernel, grid, scaling=STANDARD, c_k=None, quadrature=MIDPOINT):
    """
    Closed-form variance of the rescaled pairing on Z_n^d,

        scaling^2 sum_{xi != 0} K_hat_n(xi) lambda_xi^{-2} |F(xi)|^2,

    with F the transform of f sampled at the sites (midpoint) or averaged over
    their boxes (exact). With a_n and midpoint sampling this is
    pi^4 n^{-4} sum K_hat_n(xi) (sum_i sin^2(pi xi_i / n))^{-2} |f_hat_n(xi)|^2.

    Args:
        f (TestFunction):
        kernel (KernelSpec):
        grid (TorusGrid):
        scaling (str): "standard" or "bilap"
        c_k (Optional[float]): for bilap; the window sum of the kernel if omitted
        quadrature (str):

    Returns:
        float

    Raises:
        AliasingError: if a mode of f does not fit in Z_n^d
    """
    _check_fits(f, grid)
    constant = _resolve_scaling(kernel, grid, scaling, c_k)
    weights = _mode_weights(f, grid, quadrature)
    eigenvalues = np.array(laplacian_eigenvalues(grid))
    origin = position_of(grid, (0,) * grid.dim)
    eigenvalues[origin] = 1.0
    terms = multiplier_table(kernel, grid) / eigenvalues ** 2 * np.abs(weights) ** 2
    terms[origin] = 0.0
    return float(constant ** 2 * np.sum(terms))


def monte_carlo_pairing(
    kernel,
    grid,
    f,
    scaling=STANDARD,
    replicates=2000,
    seed=0,
    threads=None,
    quadrature=EXACT,
    c_k=None,
):
    """
    Sample sigma, stabilize spectrally and pair, once per replicate on its
    own random stream, and summarize the sample.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):
        f (TestFunction):
        scaling (str): "standard" or "bilap"
        replicates (int): at least MIN_REPLICATES
        seed (int):
        threads (Optional[int]): size of the worker pool
        quadrature (str): pairing rule; the closed form uses the same one
        c_k (Optional[float]):

    Returns:
        VarianceReport
    """
    if replicates < MIN_REPLICATES:
        raise ValidationError(f"Monte Carlo needs at least {MIN_REPLICATES} replicates, got {replicates}")
    _check_fits(f, grid)
    constant = _resolve_scaling(kernel, grid, scaling, c_k)
    finite_n = finite_n_variance(f, kernel, grid, scaling, c_k, quadrature=quadrature)
    limit = limit_norm(f, kernel, scaling)

    def replicate(stream_id):
        sigma = sample_sigma(kernel, grid, RngStream(seed, stream_id))
        u = odometer_spectral(initial_configuration(sigma))
        return pair_odometer(u, f, constant, quadrature=quadrature)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        samples = np.fromiter(pool.map(replicate, range(replicates)), dtype=np.float64, count=replicates)

    variance = float(np.var(samples, ddof=1))
    report = VarianceReport(
        n=grid.n,
        finite_n=finite_n,
        limit=limit,
        mc_mean=float(np.mean(samples)),
        mc_var=variance,
        # Gaussian fourth moment: Var(sample variance) = 2 var^2 / (M - 1)
        mc_stderr=variance * math.sqrt(2.0 / (replicates - 1)),
        skewness=float(scipy.stats.skew(samples)),
        excess_kurtosis=float(scipy.stats.kurtosis(samples)),
        replicates=replicates,
    )
    LOGGER.info(
        "n=%d: mc_var %.6g +- %.2g vs closed form %.6g", grid.n, report.mc_var, report.mc_stderr, finite_n
    )
    return report


@lru_cache(maxsize=32)
def _sobolev_weights(kernel, dim, cutoff, power, mode):
    """
    Frequencies 0 < |xi| <= cutoff with their shell index ceil(|xi|) and
    weight K_hat(xi) |xi|^{-power}.
    """
    axis = range(-cutoff, cutoff + 1)
    freqs, shells, weights = [], [], []
    for xi in itertools.product(axis, repeat=dim):
        norm_sq = _norm_sq(xi)
        if not 0 < norm_sq <= cutoff * cutoff:
            continue
        norm = math.sqrt(norm_sq)
        multiplier = 1.0 if mode == BILAP else limit_multiplier(kernel, xi)
        freqs.append(xi)
        shells.append(math.ceil(norm - 1e-12))
        weights.append(multiplier * norm ** -power)
    freqs = np.array(freqs, dtype=np.int64)
    shells = np.array(shells, dtype=np.int64)
    weights = np.array(weights)
    for array in (freqs, shells, weights):
        array.setflags(write=False)
    return freqs, shells, weights


def _check_epsilon(dim, epsilon):
    threshold = max(dim / 2, dim / 4 + 1)
    if not epsilon > threshold:
        raise EpsilonError(
            f"epsilon = {epsilon} violates ε > max{{d/2, d/4 + 1}} = {threshold} for d = {dim}"
        )


def default_epsilon(dim):
    return dim / 2 + 1.25


def sobolev_norm_sq(u, kernel, epsilon, exponent_mode="half", cutoff=16, scaling=1.0, mode=STANDARD):
    """
    sum_{0 < |xi| <= cutoff} K_hat(xi) |xi|^{-p} |<F, phi_xi>|^2 for the
    piecewise-constant field F = scaling * u(z) on the box around z / n.
    p is 2 epsilon ("half") or 4 epsilon ("full").

    The tail bound assumes the shell sums beyond the cutoff stay below
    C' k^{d - 1 - p}, with C' the largest ratio seen up to the cutoff.

    Args:
        u (Union[OdometerResult, ScalarField, Spectrum]):
        kernel (KernelSpec): supplies the limit multiplier K_hat
        epsilon (float): must exceed max(d/2, d/4 + 1)
        exponent_mode (str): "half" or "full"
        cutoff (int):
        scaling (float):
        mode (str): "bilap" replaces K_hat by 1

    Returns:
        SobolevEstimate

    Raises:
        EpsilonError: if epsilon is at or below the threshold
    """
    spectrum = u if isinstance(u, Spectrum) else dft_forward(_field_of(u))
    grid = spectrum.grid
    _check_epsilon(grid.dim, epsilon)
    if exponent_mode not in ("half", "full"):
        raise ValidationError(f"exponent_mode must be 'half' or 'full', got {exponent_mode!r}")
    if cutoff < 1:
        raise ValidationError(f"cutoff must be positive, got {cutoff}")
    power = (2 if exponent_mode == "half" else 4) * epsilon

    freqs, shell_index, weights = _sobolev_weights(kernel, grid.dim, cutoff, power, mode)
    boxes = np.prod(_side_factors(grid.n, freqs), axis=-1)
    positions = np.mod(freqs - grid.low, grid.n)
    coeffs = spectrum.coeffs[tuple(positions[:, axis] for axis in range(grid.dim))]
    terms = weights * np.abs(scaling * boxes * grid.total * coeffs) ** 2
    shells = np.bincount(shell_index, weights=terms, minlength=cutoff + 1)

    value = float(np.sum(terms))
    exponent = grid.dim - 1 - power
    k = np.arange(1, cutoff + 1, dtype=np.float64)
    c_prime = float(np.max(shells[1:] / k ** exponent))
    # sum_{k > cutoff} k^exponent, a Hurwitz zeta value since exponent < -1
    tail = c_prime * float(scipy.special.zeta(-exponent, cutoff + 1))
    return SobolevEstimate(epsilon, cutoff, value, grid.n, tail)


def fractional_laplacian_continuum(f, a):
    """
    (-Delta)^a f = sum_nu |nu|^{2a} c_nu phi_nu.

    Args:
        f (TestFunction):
        a (float):

    Returns:
        TestFunction
    """
    return TestFunction({nu: _norm_sq(nu) ** a * c for nu, c in f.modes.items()})


def l2_norm_sq(f):
    return float(sum(abs(c) ** 2 for c in f.modes.values()))


def convergence_sweep(f, kernel, n_values, scaling=STANDARD, quadrature=MIDPOINT):
    """
    Closed-form finite-n variances against the limit norm.

    Args:
        f (TestFunction):
        kernel (KernelSpec):
        n_values (Iterable[int]):
        scaling (str):
        quadrature (str):

    Returns:
        List[SweepRow]
    """
    limit = limit_norm(f, kernel, scaling)
    rows = []
    for n in n_values:
        grid = TorusGrid(f.dim, int(n))
        value = finite_n_variance(f, kernel, grid, scaling, quadrature=quadrature)
        rows.append(SweepRow(grid.n, value, limit, abs(value - limit)))
        LOGGER.info("sweep n=%d: %.10g (limit %.10g)", grid.n, value, limit)
    return rows


def tightness_proxy(
    kernel,
    dim,
    n_values,
    replicates=200,
    epsilon=None,
    cutoff=16,
    seed=0,
    threads=None,
    exponent_mode="half",
):
    """
    Mean Sobolev estimate of the a_n-rescaled odometer per side length.

    Args:
        kernel (KernelSpec):
        dim (int):
        n_values (Iterable[int]):
        replicates (int):
        epsilon (Optional[float]): d/2 + 1.25 if omitted
        cutoff (int):
        seed (int):
        threads (Optional[int]):
        exponent_mode (str):

    Returns:
        List[TightnessRow]
    """
    if epsilon is None:
        epsilon = default_epsilon(dim)
    _check_epsilon(dim, epsilon)
    if replicates < 2:
        raise ValidationError(f"tightness needs at least 2 replicates, got {replicates}")

    rows = []
    for n in n_values:
        grid = TorusGrid(dim, int(n))
        constant = scaling_constant(grid, STANDARD)

        def replicate(stream_id):
            sigma = sample_sigma(kernel, grid, RngStream(seed, stream_id))
            u = odometer_spectral(initial_configuration(sigma))
            return sobolev_norm_sq(u, kernel, epsilon, exponent_mode, cutoff, constant)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            estimates = list(pool.map(replicate, range(replicates)))

        values = np.array([e.value for e in estimates])
        rows.append(
            TightnessRow(
                n=grid.n,
                mean=float(values.mean()),
                stderr=float(values.std(ddof=1) / math.sqrt(replicates)),
                tail_bound=float(np.mean([e.tail_bound for e in estimates])),
                epsilon=epsilon,
                cutoff=cutoff,
            )
        )
        LOGGER.info("tightness n=%d: mean %.6g", grid.n, rows[-1].mean)
    return rows
