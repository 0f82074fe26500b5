import math

import numpy as np
import pytest
from scipy.stats import norm

from monotone_ot.convex import DomainDescriptor
from monotone_ot.counterexample import CounterexampleSpec
from monotone_ot.transport import (
    CounterexampleDensity,
    DiscreteMeasure,
    GaussianDensity,
    UniformDensity,
    grid_shape_for,
    quantize_target,
)


def test_uniform_square_four_cells():
    Y = DomainDescriptor.box([0, 0], [1, 1])
    q = quantize_target(UniformDensity(Y), Y, 4, 4.0)
    pts = sorted(map(tuple, np.round(q.points, 14)))
    assert pts == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
    assert np.allclose(q.masses, 0.25, atol=1e-15)


@pytest.mark.parametrize("R", [4.0, 8.0])
def test_gaussian_halves(R):
    q = quantize_target(GaussianDensity(1), DomainDescriptor.full_space(1), 2, R)
    # truncated half-normal mean
    mean = (norm.pdf(0) - norm.pdf(R)) / (norm.cdf(R) - 0.5)
    assert np.allclose(np.sort(q.points[:, 0]), [-mean, mean], atol=1e-12)
    assert np.allclose(q.masses, 0.5, atol=1e-15)
    if R == 8.0:
        assert mean == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)
    assert q.meta["mass_deficit"] == pytest.approx(2 * norm.sf(R), abs=1e-12)


@pytest.mark.parametrize("N, shape", [(64, (8, 8)), (12, (3, 4)), (7, (1, 7))])
def test_grid_shape(N, shape):
    got = grid_shape_for(N, [1.0, 1.0])
    assert sorted(got) == sorted(shape) and math.prod(got) == N


@pytest.mark.parametrize("dim, N", [(1, 5), (2, 64), (3, 27)])
def test_masses_sum_to_one(dim, N):
    q = quantize_target(GaussianDensity(dim), DomainDescriptor.full_space(dim), N, 4.0)
    assert abs(q.masses.sum() - 1) <= 1e-12
    assert np.all(np.abs(q.points) <= 4.0)


def test_lloyd_mode():
    Y = DomainDescriptor.box([0, 0], [1, 1])
    q = quantize_target(UniformDensity(Y), Y, 10, 4.0, seed=3, mode="lloyd")
    assert len(q) == 10 and abs(q.masses.sum() - 1) <= 1e-12
    assert np.all(Y.contains(q.points))


def test_counterexample_cells_use_samples():
    Y = DomainDescriptor.box([-3, -3, -1], [3, 3, 1])
    q = quantize_target(CounterexampleDensity(CounterexampleSpec(3)), Y, 27, 4.0, seed=1)
    assert q.meta["mass_estimator"] == "transported_samples"
    assert abs(q.masses.sum() - 1) <= 1e-12
    # the density is symmetric under x_3 -> -x_3
    top = q.masses[q.points[:, 2] > 0.1].sum()
    bottom = q.masses[q.points[:, 2] < -0.1].sum()
    assert top == pytest.approx(bottom, abs=0.01)


@pytest.mark.parametrize("points, masses", [
    ([[0.0], [0.0]], [0.5, 0.5]),
    ([[0.0], [1.0]], [0.5, 0.4]),
    ([[0.0], [1.0]], [1.0, 0.0]),
])
def test_discrete_measure_validation(points, masses):
    with pytest.raises(ValueError):
        DiscreteMeasure(points, masses)


def test_bad_quantize_arguments():
    with pytest.raises(ValueError):
        quantize_target(GaussianDensity(2), DomainDescriptor.full_space(2), 0, 4.0)
    with pytest.raises(ValueError):
        quantize_target(GaussianDensity(2), DomainDescriptor.full_space(3), 4, 4.0)
