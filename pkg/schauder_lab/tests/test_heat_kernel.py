"""
Tests for the heat.heat_kernel module.
"""

import math

import numpy as np
import pytest

from schauder_lab.errors import DomainError, GridMismatchError
from schauder_lab.heat.heat_kernel import (
    GridSpec,
    KernelEval,
    apply_semigroup,
    convolve_at,
    convolve_gradient_subtracted,
    gradient_stencil,
    kernel,
    kernel_gradient,
    semigroup_gradient,
    smoothing_stencil,
)
from schauder_lab.solution.fields import capped_power_field


def gaussian(s):
    return lambda z: kernel(s, z, 1)


def test_kernel_peak_value():
    assert kernel(0.5, 0.0, 1) == pytest.approx(1.0 / math.sqrt(math.pi))
    assert kernel(0.5, np.zeros(2), 2) == pytest.approx(1.0 / math.pi)


def test_kernel_rejects_nonpositive_time():
    with pytest.raises(DomainError):
        kernel(0.0, 0.0, 1)
    with pytest.raises(DomainError):
        kernel(1.0, 0.0, 3)


def test_kernel_gradient_matches_formula():
    value = kernel_gradient(0.25, [0.3])
    assert value.shape == (1,)
    assert value[0] == pytest.approx(-(0.3 / 0.25) * kernel(0.25, 0.3, 1))


def test_kernel_eval():
    evaluation = KernelEval.at(0.25, [0.1, -0.2])
    assert evaluation.center == (0.1, -0.2)
    assert evaluation.value == pytest.approx(kernel(0.25, np.array([0.1, -0.2]), 2))
    assert evaluation.gradient[0] < 0 < evaluation.gradient[1]


def test_grid_spec_from_spacing(grid_1d):
    assert GridSpec.from_spacing(1, 3.01, 0.02) == grid_1d
    assert grid_1d.spacing == pytest.approx(0.02)
    assert grid_1d.node_index(0.0) == (150,)
    assert grid_1d.node_index(0.2) == (160,)


def test_grid_spec_invariants():
    with pytest.raises(DomainError):
        GridSpec(dimension=1, half_width=1.0, nodes_per_axis=100)
    with pytest.raises(DomainError):
        GridSpec(dimension=3, half_width=1.0, nodes_per_axis=11)
    with pytest.raises(DomainError):
        GridSpec.from_spacing(1, 1.0, 0.3)


def test_grid_spec_rejects_off_node_points(grid_1d):
    with pytest.raises(GridMismatchError):
        grid_1d.node_index(0.011)
    with pytest.raises(GridMismatchError):
        grid_1d.validate_field(np.zeros(300))


def test_grid_spec_dict_round_trip(grid_2d):
    assert GridSpec.from_dict(grid_2d.to_dict()) == grid_2d
    assert grid_2d.points().shape == (61, 61, 2)


def test_stencils_are_normalized():
    spacing = 0.02
    offsets = np.arange(-(smoothing_stencil(0.1, spacing).size // 2), smoothing_stencil(0.1, spacing).size // 2 + 1)
    assert smoothing_stencil(0.1, spacing).sum() == pytest.approx(1.0, abs=1e-14)
    assert np.dot(gradient_stencil(0.1, spacing), offsets * spacing) == pytest.approx(1.0, abs=1e-12)


def test_gradient_stencil_tends_to_central_difference():
    weights = gradient_stencil(1e-300, 0.02)
    assert weights.size == 3
    np.testing.assert_allclose(weights, [-25.0, 0.0, 25.0])


def test_semigroup_conserves_mass(grid_1d):
    field = kernel(0.05, grid_1d.axis, 1)
    smoothed = apply_semigroup(0.2, field, grid_1d)
    assert abs(smoothed.sum() - field.sum()) * grid_1d.spacing < 1e-8


def test_semigroup_of_gaussian_is_gaussian(grid_1d):
    """P_t K(s) = K(t + s)."""
    smoothed = apply_semigroup(0.1, kernel(0.05, grid_1d.axis, 1), grid_1d)
    inside = grid_1d.interior_mask(1.0)
    assert np.max(np.abs(smoothed - kernel(0.15, grid_1d.axis, 1))[inside]) < 1e-6


def test_semigroup_of_gaussian_is_gaussian_2d(grid_2d):
    points = grid_2d.points()
    smoothed = apply_semigroup(0.1, kernel(0.05, points, 2), grid_2d)
    inside = grid_2d.interior_mask(1.0)
    assert np.max(np.abs(smoothed - kernel(0.15, points, 2))[inside]) < 1e-6


def test_semigroup_composition(grid_1d):
    field = capped_power_field(0.5).on_grid(0.0, grid_1d)
    twice = apply_semigroup(0.05, apply_semigroup(0.05, field, grid_1d), grid_1d)
    once = apply_semigroup(0.1, field, grid_1d)
    inside = grid_1d.interior_mask(8.0 * math.sqrt(0.1) + 0.1)
    assert np.max(np.abs(twice - once)[inside]) < 1e-6


def test_semigroup_at_zero_time_is_identity(grid_1d):
    field = np.linspace(-1.0, 1.0, grid_1d.nodes_per_axis)
    np.testing.assert_array_equal(apply_semigroup(0.0, field, grid_1d), field)
    with pytest.raises(DomainError):
        apply_semigroup(-0.1, field, grid_1d)


def test_semigroup_gradient_matches_kernel_gradient(grid_1d):
    gradient = semigroup_gradient(0.1, kernel(0.05, grid_1d.axis, 1), grid_1d)
    assert gradient.shape == (1, 301)
    exact = kernel_gradient(0.15, grid_1d.axis[:, None])[:, 0]
    inside = grid_1d.interior_mask(1.0)
    assert np.max(np.abs(gradient[0] - exact)[inside]) / np.max(np.abs(exact)) < 1e-7


def test_semigroup_gradient_of_linear_field_is_exact(grid_1d):
    gradient = semigroup_gradient(0.05, 2.0 * grid_1d.axis, grid_1d)
    inside = grid_1d.interior_mask(8.0 * math.sqrt(0.05) + 0.1)
    np.testing.assert_allclose(gradient[0][inside], 2.0, rtol=1e-12)


def test_semigroup_gradient_2d(grid_2d):
    points = grid_2d.points()
    gradient = semigroup_gradient(0.1, kernel(0.05, points, 2), grid_2d)
    exact = np.moveaxis(kernel_gradient(0.15, points), -1, 0)
    inside = grid_2d.interior_mask(1.0)
    for axis in range(2):
        assert np.max(np.abs(gradient[axis] - exact[axis])[inside]) / np.max(np.abs(exact)) < 1e-6


def test_anchor_engine_matches_closed_form(grid_1d):
    assert convolve_at(0.1, 0.3, gaussian(0.05), grid_1d) == pytest.approx(kernel(0.15, 0.3, 1), rel=1e-10)
    gradient = convolve_gradient_subtracted(0.1, 0.3, gaussian(0.05), grid_1d, component=0)
    assert gradient == pytest.approx(kernel_gradient(0.15, [0.3])[0], rel=1e-9)


def test_anchor_engine_accepts_gridded_fields(grid_1d):
    field = kernel(0.05, grid_1d.axis, 1)
    value = convolve_at(0.1, 0.2, field, grid_1d)
    assert value == pytest.approx(apply_semigroup(0.1, field, grid_1d)[160])
    gradient = convolve_gradient_subtracted(0.1, 0.2, field, grid_1d)
    assert gradient[0] == pytest.approx(semigroup_gradient(0.1, field, grid_1d)[0, 160])


def test_anchor_engine_at_kink(grid_1d):
    """P_t of min(x_+^a, 1) at the kink, against adaptive quadrature of the same integral."""
    from scipy import integrate

    field = capped_power_field(0.5).at(0.0)
    t = 0.01
    reference, _ = integrate.quad(
        lambda z: kernel(t, -z, 1) * min(z**0.5, 1.0), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200
    )
    reference += integrate.quad(lambda z: kernel(t, -z, 1), 1.0, np.inf)[0]
    assert convolve_at(t, 0.0, field, grid_1d) == pytest.approx(reference, rel=1e-7)


def test_anchor_dimension_mismatch(grid_1d):
    with pytest.raises(GridMismatchError):
        convolve_at(0.1, [0.0, 0.0], gaussian(0.05), grid_1d)


@pytest.mark.parametrize("point", [[0.3], [-0.7], [0.2, -0.4]])
def test_kernel_gradient_matches_central_differences(point):
    t, h = 0.25, 1e-5
    x = np.array(point)
    d = x.size
    gradient = kernel_gradient(t, x)
    for axis in range(d):
        step = np.zeros(d)
        step[axis] = h
        difference = (kernel(t, x + step, d) - kernel(t, x - step, d)) / (2.0 * h)
        assert gradient[axis] == pytest.approx(difference, abs=1e-7)


def test_subtracted_gradient_of_constant_field_is_zero(grid_1d, grid_2d):
    assert convolve_gradient_subtracted(0.1, 0.3, lambda z: np.full(np.shape(z), 2.5), grid_1d, component=0) == 0.0
    values = convolve_gradient_subtracted(0.1, [0.2, -0.4], lambda z: np.full(np.shape(z)[:-1], 2.5), grid_2d)
    np.testing.assert_array_equal(values, [0.0, 0.0])
    np.testing.assert_allclose(semigroup_gradient(0.1, np.full(grid_2d.shape, 2.5), grid_2d), 0.0, atol=1e-14)


def test_subtracted_gradient_of_linear_field_is_one(grid_1d):
    assert convolve_gradient_subtracted(0.01, 0.3, lambda z: np.asarray(z), grid_1d, component=0) == pytest.approx(
        1.0, abs=1e-10
    )


def test_subtracted_gradient_at_kink(grid_1d):
    """d/dx P_t of min(x_+^a, 1) at the kink, against adaptive quadrature."""
    from scipy import integrate

    field = capped_power_field(0.5).at(0.0)
    t = 0.01
    reference, _ = integrate.quad(
        lambda z: (z / t) * kernel(t, z, 1) * min(z**0.5, 1.0), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200
    )
    reference += integrate.quad(lambda z: (z / t) * kernel(t, z, 1), 1.0, np.inf)[0]
    assert convolve_gradient_subtracted(t, 0.0, field, grid_1d, component=0) == pytest.approx(reference, rel=1e-4)


def test_semigroup_keeps_constant_fields(grid_1d, grid_2d):
    np.testing.assert_allclose(apply_semigroup(0.3, np.full(grid_1d.shape, 2.5), grid_1d), 2.5, atol=1e-8)
    np.testing.assert_allclose(apply_semigroup(0.3, np.full(grid_2d.shape, 2.5), grid_2d), 2.5, atol=1e-8)
