"""
Torus geometry, Fourier transforms and the graph Laplacian on Z_n^d.

Sites and frequencies share the centred coordinate domain
[-floor(n/2), ceil(n/2) - 1]^d. Arrays are stored with shape (n,) * d in
lexicographic order over that domain, so array position p along an axis holds
coordinate p - n // 2. All public transforms use the normalization

    f_hat(w) = n^{-d} sum_z f(z) exp(-2 pi i z.w / n),
    f(z)     = sum_w f_hat(w) exp(2 pi i z.w / n).
"""
from dataclasses import dataclass
from functools import lru_cache
import logging

import numpy as np
import scipy.fft

from .errors import GridError, HermitianError

LOGGER = logging.getLogger(__name__)

# Largest side length allowed per dimension
MAX_SIDE = {1: 1024, 2: 1024, 3: 128, 4: 32}

HERMITIAN_RTOL = 1e-10
IMAGINARY_RTOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """
    The discrete torus Z_n^d.

    Attributes:
        dim (int): dimension d
        n (int): side length
    """

    dim: int
    n: int

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim not in MAX_SIDE:
            raise GridError(f"dimension must be one of {sorted(MAX_SIDE)}, got {self.dim}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise GridError(f"side length must be an integer >= 2, got {self.n}")
        if self.n > MAX_SIDE[self.dim]:
            raise GridError(
                f"side length {self.n} exceeds the cap {MAX_SIDE[self.dim]} for d={self.dim}"
            )

    @property
    def total(self):
        return self.n ** self.dim

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def low(self):
        """
        Returns:
            int: smallest centred coordinate, -floor(n/2)
        """
        return -(self.n // 2)

    @property
    def high(self):
        """
        Returns:
            int: largest centred coordinate, ceil(n/2) - 1
        """
        return (self.n + 1) // 2 - 1

    def contains(self, w):
        w = np.asarray(w)
        return w.shape == (self.dim,) and bool(np.all((w >= self.low) & (w <= self.high)))


@dataclass(frozen=True)
class ScalarField:
    """
    Real values on the sites of a torus, one per site.

    Attributes:
        grid (TorusGrid):
        values (np.ndarray): float64 array of shape grid.shape; read-only
    """

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.size != self.grid.total:
            raise GridError(
                f"field has {values.size} values but the grid has {self.grid.total} sites"
            )
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __getitem__(self, z):
        return self.values[position_of(self.grid, z)]

    def mean(self):
        return float(self.values.mean())


@dataclass(frozen=True)
class Spectrum:
    """
    Fourier coefficients f_hat(w) of a grid function, indexed by w in Z_n^d.

    Attributes:
        grid (TorusGrid):
        coeffs (np.ndarray): complex128 array of shape grid.shape; read-only
    """

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.size != self.grid.total:
            raise GridError(
                f"spectrum has {coeffs.size} coefficients but the grid has {self.grid.total} modes"
            )
        coeffs = coeffs.reshape(self.grid.shape)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def __getitem__(self, w):
        return self.coeffs[position_of(self.grid, w)]

    def hermitian_defect(self):
        """
        Returns:
            float: max |c(-w) - conj(c(w))| over all w, indices mod n
        """
        return float(np.max(np.abs(reflect(self.coeffs) - np.conj(self.coeffs))))


def position_of(grid, z):
    """
    Array position of a site or frequency; coordinates are reduced mod n.

    Args:
        grid (TorusGrid):
        z (Sequence[int]): coordinate vector

    Returns:
        Tuple[int, ...]
    """
    z = np.asarray(z, dtype=np.int64).reshape(-1)
    if z.shape != (grid.dim,):
        raise GridError(f"expected a {grid.dim}-vector, got {tuple(z)}")
    return tuple(int(p) for p in np.mod(z - grid.low, grid.n))


def coords_of(grid, idx):
    """
    Centred coordinates of the site with lexicographic index idx.

    Args:
        grid (TorusGrid):
        idx (int): 0 <= idx < grid.total

    Returns:
        Tuple[int, ...]

    Raises:
        GridError: if idx is out of range
    """
    if not 0 <= idx < grid.total:
        raise GridError(f"site index {idx} outside [0, {grid.total})")
    position = np.unravel_index(int(idx), grid.shape)
    return tuple(int(p) + grid.low for p in position)


def index_of(grid, z):
    """
    Lexicographic index of the site with coordinates z (taken mod n).

    Args:
        grid (TorusGrid):
        z (Sequence[int]):

    Returns:
        int
    """
    return int(np.ravel_multi_index(position_of(grid, z), grid.shape))


@lru_cache(maxsize=64)
def _mesh(grid):
    axis = np.arange(grid.low, grid.high + 1)
    mesh = np.stack(np.meshgrid(*([axis] * grid.dim), indexing="ij"), axis=-1)
    mesh.setflags(write=False)
    return mesh


def coordinate_mesh(grid):
    """
    Returns:
        np.ndarray: integer array of shape grid.shape + (d,) holding the
            centred coordinates of every site
    """
    return _mesh(grid)


# Frequencies live on the same centred domain as sites
frequency_mesh = coordinate_mesh


def reflect(array):
    """
    Evaluate a grid array at the negated coordinate, mod n.

    Args:
        array (np.ndarray): array in centred storage order

    Returns:
        np.ndarray: b with b(z) = array(-z)
    """
    natural = np.fft.ifftshift(array)
    axes = tuple(range(natural.ndim))
    flipped = np.roll(np.flip(natural, axis=axes), 1, axis=axes)
    return np.fft.fftshift(flipped)


def _sin_squares(grid, w):
    return np.sum(np.sin(np.pi * np.asarray(w, dtype=np.float64) / grid.n) ** 2, axis=-1)


def laplacian_eigenvalue(grid, w):
    """
    Eigenvalue lambda_w = -(4/2d) sum_i sin^2(pi w_i / n) of the graph
    Laplacian for the Fourier mode psi_w.

    Args:
        grid (TorusGrid):
        w (Sequence[int]): frequency; only its class mod n matters

    Returns:
        float: value in [-2, 0], zero only for w = 0 mod n

    Raises:
        GridError: if w is not a d-vector
    """
    w = np.asarray(w, dtype=np.int64).reshape(-1)
    if w.shape != (grid.dim,):
        raise GridError(f"expected a {grid.dim}-vector, got {tuple(w)}")
    return float(-(4.0 / (2 * grid.dim)) * _sin_squares(grid, w))


@lru_cache(maxsize=64)
def _eigenvalue_table(grid):
    table = -(4.0 / (2 * grid.dim)) * _sin_squares(grid, frequency_mesh(grid))
    table.setflags(write=False)
    return table


def laplacian_eigenvalues(grid):
    """
    Returns:
        np.ndarray: lambda_w for every frequency, centred storage order
    """
    return _eigenvalue_table(grid)


def eigenvalue_sandwich(grid, w, c):
    """
    Both sides and the middle of the eigenvalue bound

        1/|pi w|^4 <= (n^2 sum_i sin^2(pi w_i/n))^{-2} <= (|pi w|^{-2} + c n^{-2})^2.

    Args:
        grid (TorusGrid):
        w (Sequence[int]): nonzero frequency in Z_n^d
        c (float): constant of the upper bound

    Returns:
        Tuple[float, float, float]: lower, middle, upper
    """
    if not grid.contains(w) or not np.any(w):
        raise GridError(f"expected a nonzero frequency of Z_{grid.n}^{grid.dim}, got {tuple(w)}")
    pi_w_sq = float(np.sum((np.pi * np.asarray(w, dtype=np.float64)) ** 2))
    middle = (grid.n ** 2 * float(_sin_squares(grid, w))) ** -2
    upper = (1.0 / pi_w_sq + c / grid.n ** 2) ** 2
    return 1.0 / pi_w_sq ** 2, middle, upper


def dft_forward(field, workers=None):
    """
    Fourier coefficients of a real field, f_hat(w) = <f, psi_w>.

    Args:
        field (ScalarField):
        workers (Optional[int]): threads for the transform backend

    Returns:
        Spectrum: Hermitian-symmetric coefficients
    """
    grid = field.grid
    natural = np.fft.ifftshift(field.values)
    coeffs = scipy.fft.fftn(natural, workers=workers) / grid.total
    return Spectrum(grid, np.fft.fftshift(coeffs))


def dft_inverse(spectrum, workers=None):
    """
    Synthesize f(z) = sum_w f_hat(w) psi_w(z) from a Hermitian spectrum.

    Args:
        spectrum (Spectrum):
        workers (Optional[int]): threads for the transform backend

    Returns:
        ScalarField

    Raises:
        HermitianError: if the spectrum is not Hermitian-symmetric, i.e. the
            field would be complex
    """
    grid = spectrum.grid
    scale = max(1.0, float(np.max(np.abs(spectrum.coeffs))))
    defect = spectrum.hermitian_defect()
    if defect > HERMITIAN_RTOL * scale:
        raise HermitianError(
            f"spectrum is not Hermitian (defect {defect:.3e}): field would be complex"
        )

    natural = np.fft.ifftshift(spectrum.coeffs)
    values = scipy.fft.ifftn(natural, workers=workers) * grid.total
    residue = float(np.max(np.abs(values.imag)))
    if residue > IMAGINARY_RTOL * max(1.0, float(np.max(np.abs(values.real)))):
        LOGGER.warning("imaginary residue %.3e discarded in inverse transform", residue)

    return ScalarField(grid, np.fft.fftshift(values.real))


def apply_graph_laplacian(field):
    """
    Delta_g f(x) = (1/2d) sum_{|y - x| = 1} f(y) - f(x) with periodic neighbours.

    Args:
        field (ScalarField):

    Returns:
        ScalarField
    """
    values = field.values
    neighbour_sum = np.zeros_like(values)
    for axis in range(field.grid.dim):
        neighbour_sum += np.roll(values, 1, axis=axis) + np.roll(values, -1, axis=axis)
    return ScalarField(field.grid, neighbour_sum / (2 * field.grid.dim) - values)


def inner_product(f, g):
    """
    Normalized inner product <f, g> = n^{-d} sum_z f(z) g(z).

    Args:
        f (ScalarField):
        g (ScalarField):

    Returns:
        float
    """
    if f.grid != g.grid:
        raise GridError("fields live on different grids")
    return float(np.sum(f.values * g.values) / f.grid.total)
