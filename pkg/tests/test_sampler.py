import numpy as np
import pytest
import scipy.stats

from sandpile_odometer import kernels as k
from sandpile_odometer import sampler
from sandpile_odometer.errors import KernelError, ValidationError
from sandpile_odometer.grid import ScalarField, TorusGrid, coordinate_mesh, dft_forward

KERNEL_IDS = ["white noise", "power law +", "power law -", "fractional", "direct"]

# the repulsive power law needs diagonal 10 to stay positive definite in 2D
COVARIANCE_KERNELS = {
    1: [
        k.WhiteNoise(),
        k.PowerLaw(sign=1),
        k.PowerLaw(sign=-1),
        k.FractionalSpectral(0.5),
        k.DirectMultiplier(1.0),
    ],
    2: [
        k.WhiteNoise(),
        k.PowerLaw(sign=1),
        k.PowerLaw(sign=-1, diagonal=10.0),
        k.FractionalSpectral(0.5),
        k.DirectMultiplier(1.0),
    ],
}


def stacked(fields):
    return np.stack([field.values for field in fields])


def test_same_stream_gives_same_field():
    grid = TorusGrid(2, 8)

    first = sampler.sample_sigma(k.PowerLaw(), grid, sampler.RngStream(42, 3))
    second = sampler.sample_sigma(k.PowerLaw(), grid, sampler.RngStream(42, 3))

    assert np.array_equal(first.values, second.values)


def test_streams_are_distinct():
    grid = TorusGrid(2, 8)

    first = sampler.sample_sigma(k.WhiteNoise(), grid, sampler.RngStream(42, 0))
    second = sampler.sample_sigma(k.WhiteNoise(), grid, sampler.RngStream(42, 1))
    third = sampler.sample_sigma(k.WhiteNoise(), grid, sampler.RngStream(43, 0))

    assert not np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, third.values)


def test_rng_stream_rejects_negative_ids():
    with pytest.raises(ValidationError):
        sampler.RngStream(1, -1)


def test_vanishing_multiplier_gives_zero_field():
    grid = TorusGrid(2, 4)

    sigma = sampler.sample_sigma(k.Table({}, default=0.0), grid, sampler.RngStream(0))

    assert not sigma.values.any()


def test_negative_multiplier_is_refused():
    kernel = k.Table({(2,): -1.0, (-2,): -1.0}, default=1.0)

    with pytest.raises(KernelError):
        sampler.sample_sigma(kernel, TorusGrid(1, 8), sampler.RngStream(0))


def test_sample_many_follows_stream_order():
    grid = TorusGrid(1, 8)
    kernel = k.DirectMultiplier(0.5)

    fields = sampler.sample_many(kernel, grid, seed=9, replicates=4, threads=2)

    for stream_id, field in enumerate(fields):
        expected = sampler.sample_sigma(kernel, grid, sampler.RngStream(9, stream_id))
        assert np.array_equal(field.values, expected.values)


def test_sample_many_needs_replicates():
    with pytest.raises(ValidationError):
        sampler.sample_many(k.WhiteNoise(), TorusGrid(1, 4), seed=0, replicates=0)


@pytest.mark.parametrize("dim,n", [(1, 16), (2, 8)])
@pytest.mark.parametrize("position", range(len(KERNEL_IDS)), ids=KERNEL_IDS)
def test_synthesis_self_check(dim, n, position):
    sampler.check_synthesis(COVARIANCE_KERNELS[dim][position], TorusGrid(dim, n))


def test_initial_configuration_centres_weights():
    grid = TorusGrid(1, 2)

    config = sampler.initial_configuration(ScalarField(grid, [1.0, 3.0]))

    assert np.allclose(config.s.values, [0.0, 2.0])
    assert np.array_equal(config.sigma.values, [1.0, 3.0])


def test_initial_configuration_conserves_mass(mc_seed):
    grid = TorusGrid(2, 16)
    sigma = sampler.sample_sigma(k.PowerLaw(), grid, sampler.RngStream(mc_seed))

    config = sampler.initial_configuration(sigma)

    assert abs(np.sum(config.s.values) - grid.total) <= 1e-9 * grid.total


def test_config_rejects_wrong_mass():
    with pytest.raises(ValidationError, match="total mass"):
        sampler.SandpileConfig.from_masses(TorusGrid(1, 4), [1.0, 1.0, 1.0, 2.0])


def test_rescaled_sigma_multiplies_by_power_of_side():
    grid = TorusGrid(2, 4)
    sigma = ScalarField(grid, np.arange(16.0))

    rescaled = sampler.rescaled_sigma(sigma, grid.dim / 2)

    assert np.allclose(rescaled.values, 4 * sigma.values)


def test_white_noise_marginals(mc_seed, mc_tracker):
    grid = TorusGrid(1, 16)
    replicates = 4000

    values = stacked(sampler.sample_many(k.WhiteNoise(), grid, mc_seed, replicates)).ravel()

    count = values.size
    variance = float(np.var(values, ddof=1))
    kurtosis = float(scipy.stats.kurtosis(values))
    assert mc_tracker("white noise variance", variance, 1.0, np.sqrt(2 / (count - 1)), band=4.0)
    assert mc_tracker("white noise kurtosis", kurtosis, 0.0, np.sqrt(24 / count), band=4.0)
    assert abs(variance - 1.0) < 0.05
    assert abs(kurtosis) < 0.15


@pytest.mark.slow
@pytest.mark.parametrize("dim,n", [(1, 16), (2, 8)])
@pytest.mark.parametrize("position", range(len(KERNEL_IDS)), ids=KERNEL_IDS)
def test_empirical_covariance_matches_kernel(dim, n, position, mc_seed, mc_tracker):
    grid = TorusGrid(dim, n)
    kernel = COVARIANCE_KERNELS[dim][position]
    replicates = 20000
    values = stacked(sampler.sample_many(kernel, grid, mc_seed, replicates))
    table = k.kernel_table(kernel, grid)
    axes = tuple(range(1, dim + 1))

    within = []
    for lag in coordinate_mesh(grid).reshape(-1, dim):
        shifted = np.roll(values, tuple(-int(v) for v in lag), axis=axes)
        products = np.mean(values * shifted, axis=axes)
        stderr = float(np.std(products, ddof=1)) / np.sqrt(replicates)
        name = f"covariance at lag {tuple(int(v) for v in lag)}"
        within.append(mc_tracker(name, float(products.mean()), float(table[lag]), stderr, band=3.0))

    assert np.mean(within) >= 0.95


def test_rescaled_summable_field_has_limit_spectrum(mc_seed, mc_tracker):
    grid = TorusGrid(1, 8)
    kernel = k.PowerLaw()
    replicates = 10000
    fields = sampler.sample_many(kernel, grid, mc_seed, replicates)

    energies = np.array([
        abs(dft_forward(sampler.rescaled_sigma(sigma, grid.dim / 2))[(1,)]) ** 2 for sigma in fields
    ])

    expected = grid.total * k.multiplier(kernel, grid, (1,))
    stderr = float(np.std(energies, ddof=1)) / np.sqrt(replicates)
    assert mc_tracker("rescaled spectrum at xi=1", float(energies.mean()), expected, stderr, band=4.0)
    assert abs(energies.mean() / expected - 1) < 0.05
