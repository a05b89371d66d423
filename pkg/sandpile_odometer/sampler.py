"""
Stationary Gaussian weight fields by spectral synthesis, and the initial
sandpile configuration built from them.

White noise W is filtered in Fourier space by sqrt(n^d K_hat_n). Filtering a
real field keeps the Hermitian symmetry of its transform, so the modes that
are their own conjugate (the zero mode and, for even n, the Nyquist planes)
stay real with variance K_hat_n(xi) and every other pair carries half of it
in each of its real and imaginary parts.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
import logging
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .grid import ScalarField, Spectrum, dft_forward, dft_inverse, position_of
from .kernels import kernel_table, multiplier_table

LOGGER = logging.getLogger(__name__)

MASS_RTOL = 1e-9
SELF_TEST_RTOL = 1e-10


@dataclass(frozen=True)
class RngStream:
    """
    Independent random stream number stream_id under a base seed.

    Attributes:
        seed (int):
        stream_id (int): replicate index
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValidationError(
                f"seed and stream id must be non-negative, got ({self.seed}, {self.stream_id})"
            )

    def generator(self):
        return rng_generator(self)


def rng_generator(stream):
    """
    Counter-based generator for a stream. Streams with distinct ids share the
    seed entropy but draw from disjoint spawn keys.

    Args:
        stream (RngStream):

    Returns:
        np.random.Generator
    """
    sequence = np.random.SeedSequence(stream.seed, spawn_key=(stream.stream_id,))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class SandpileConfig:
    """
    Initial mass s(x) = 1 + sigma(x) - mean(sigma) on a torus.

    Attributes:
        grid (TorusGrid):
        s (ScalarField): mass per site, summing to n^d
        sigma (Optional[ScalarField]): the weights s was built from
    """

    grid: object
    s: ScalarField
    sigma: Optional[ScalarField] = None

    def __post_init__(self):
        if self.s.grid != self.grid:
            raise ValidationError("mass field lives on a different grid")
        total = float(np.sum(self.s.values))
        if abs(total - self.grid.total) > MASS_RTOL * self.grid.total:
            raise ValidationError(
                f"total mass {total!r} differs from n^d = {self.grid.total}"
            )

    @classmethod
    def from_masses(cls, grid, masses):
        return cls(grid, ScalarField(grid, masses))


@lru_cache(maxsize=16)
def _amplitude(kernel, grid):
    amplitude = np.sqrt(grid.total * multiplier_table(kernel, grid))
    amplitude.setflags(write=False)
    return amplitude


def _synthesize(amplitude, noise, workers=None):
    coeffs = dft_forward(noise, workers=workers).coeffs * amplitude
    return dft_inverse(Spectrum(noise.grid, coeffs), workers=workers)


def sample_sigma(kernel, grid, rng, workers=None):
    """
    Draw a centred Gaussian field with E[sigma(x) sigma(y)] = K_n(x - y).

    Args:
        kernel (KernelSpec): must have a non-negative multiplier on grid
        grid (TorusGrid):
        rng (RngStream):
        workers (Optional[int]): threads for the transforms

    Returns:
        ScalarField

    Raises:
        KernelError: if some multiplier value is negative
    """
    noise = ScalarField(grid, rng.generator().standard_normal(grid.shape))
    return _synthesize(_amplitude(kernel, grid), noise, workers=workers)


def check_synthesis(kernel, grid):
    """
    Filter a unit impulse and compare its energy with K_n(0); the filtered
    impulse h satisfies sum_z h(z)^2 = Var(sigma(x)).

    Raises:
        NumericalError: on a variance mismatch
    """
    impulse = np.zeros(grid.shape)
    impulse[position_of(grid, (0,) * grid.dim)] = 1.0
    response = _synthesize(_amplitude(kernel, grid), ScalarField(grid, impulse))
    energy = float(np.sum(response.values ** 2))
    expected = float(kernel_table(kernel, grid)[(0,) * grid.dim])
    if abs(energy - expected) > SELF_TEST_RTOL * max(1.0, abs(expected)):
        raise NumericalError(
            f"synthesized variance {energy!r} does not match K_n(0) = {expected!r}"
        )


def sample_many(kernel, grid, seed, replicates, threads=None, workers=None):
    """
    Draw replicates independent fields on streams 0, ..., replicates - 1.

    Args:
        kernel (KernelSpec):
        grid (TorusGrid):
        seed (int):
        replicates (int):
        threads (Optional[int]): size of the worker pool
        workers (Optional[int]): threads per transform

    Returns:
        List[ScalarField]: in stream order
    """
    if replicates < 1:
        raise ValidationError(f"replicates must be positive, got {replicates}")
    if __debug__:
        check_synthesis(kernel, grid)

    def draw(stream_id):
        return sample_sigma(kernel, grid, RngStream(seed, stream_id), workers=workers)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        fields = list(pool.map(draw, range(replicates)))
    LOGGER.info("sampled %d fields on Z_%d^%d", replicates, grid.n, grid.dim)
    return fields


def initial_configuration(sigma):
    """
    s(x) = 1 + sigma(x) - n^{-d} sum_z sigma(z).

    Args:
        sigma (ScalarField):

    Returns:
        SandpileConfig
    """
    values = sigma.values
    s = 1.0 + (values - values.mean())
    return SandpileConfig(sigma.grid, ScalarField(sigma.grid, s), sigma)


def rescaled_sigma(sigma, exponent):
    """
    Multiply every weight by n^exponent; exponent d/2 turns a summable
    kernel's field into the one of the bi-Laplacian limit.

    Args:
        sigma (ScalarField):
        exponent (float):

    Returns:
        ScalarField
    """
    return ScalarField(sigma.grid, sigma.values * float(sigma.grid.n) ** exponent)
