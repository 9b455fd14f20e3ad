"""
Tests for the solution.mild_solution module.
"""

import math

import numpy as np
import pytest

from schauder_lab.errors import GridMismatchError, PreconditionError, UnsupportedFormError
from schauder_lab.heat.heat_kernel import GridSpec
from schauder_lab.noise.levy_noise import TimeGrid, sample_noise_path
from schauder_lab.solution.fields import (
    Coefficients,
    GeneralJumpCoefficient,
    JumpCoefficient,
    MarkProfile,
    RandomFactor,
    capped_power_field,
    constant_field,
    linear_field,
    sine_field,
)
from schauder_lab.solution.mild_solution import (
    TERM_ORDER,
    MildOperator,
    PointGradient,
    compose,
    evaluate_gradient,
    evaluate_mild,
    gradient_at,
    moment_bound_p2,
    sample_solutions,
    second_moment_p2,
)


def test_compose_sums_all_terms():
    terms = {name: np.full(3, float(i)) for i, name in enumerate(TERM_ORDER)}
    np.testing.assert_array_equal(compose(terms), np.full(3, 10.0))
    assert terms["initial"][0] == 0.0


def test_constant_f_gives_the_wiener_path(grid_1d, quarter_grid):
    path = sample_noise_path(quarter_grid, None, 1, 0)
    sample = evaluate_mild(0.5, Coefficients(f=constant_field(1.0)), path, grid_1d)
    np.testing.assert_allclose(sample.u, path.wiener_increments[:2].sum(), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(sample.gradient, 0.0)


def test_constant_h_integrates_in_time(grid_1d, quarter_grid):
    path = sample_noise_path(quarter_grid, None, 1, 0)
    coeffs = Coefficients(h=constant_field(2.0), h_factor=RandomFactor(value=3.0))
    sample = evaluate_mild(0.75, coeffs, path, grid_1d)
    np.testing.assert_allclose(sample.u, 3.0 * 2.0 * 0.75, rtol=1e-12)
    np.testing.assert_allclose(sample.terms["h"], sample.u)


def test_constant_g_gives_compensated_poisson(grid_1d, quarter_grid, uniform_levy):
    path = sample_noise_path(quarter_grid, uniform_levy, 2, 0)
    coeffs = Coefficients(g=JumpCoefficient(phi=constant_field(1.0)))
    sample = evaluate_mild(1.0, coeffs, path, grid_1d, uniform_levy)
    np.testing.assert_allclose(sample.u, len(path.jumps) - 2.0, rtol=0, atol=1e-12)


def test_terms_compose_to_the_solution(grid_1d, quarter_grid, uniform_levy):
    coeffs = Coefficients(
        h=sine_field(name="h"),
        f=capped_power_field(0.5, name="f"),
        g=JumpCoefficient(phi=capped_power_field(0.5, shift=-1.0, name="phi")),
        h_factor=RandomFactor(family="normal"),
    )
    for sample in sample_solutions(1.0, coeffs, quarter_grid, grid_1d, uniform_levy, 3, range(3)):
        np.testing.assert_array_equal(compose(sample.terms), sample.u)
        np.testing.assert_array_equal(compose(sample.gradient_terms), sample.gradient)
        assert sample.gradient.shape == (1, 301)


def test_sample_solutions_match_single_paths(grid_1d, quarter_grid, capped_f):
    batch = sample_solutions(0.5, capped_f, quarter_grid, grid_1d, None, 9, [4, 2])
    for index, sample in zip([4, 2], batch):
        single = evaluate_mild(0.5, capped_f, sample_noise_path(quarter_grid, None, 9, index), grid_1d)
        np.testing.assert_array_equal(single.u, sample.u)
    np.testing.assert_array_equal(
        evaluate_gradient(0.5, capped_f, batch[0].path, grid_1d), batch[0].gradient
    )


def test_to_frame_columns(grid_1d, quarter_grid, capped_f):
    sample = evaluate_mild(1.0, capped_f, sample_noise_path(quarter_grid, None, 0, 0), grid_1d)
    frame = sample.to_frame()
    assert list(frame.columns) == [
        "x",
        "u",
        "du_dx1",
        "term_initial",
        "term_drift",
        "term_h",
        "term_f",
        "term_g",
    ]
    assert len(frame) == 301


def test_path_and_operator_grids_must_match(grid_1d, quarter_grid, capped_f):
    operator = MildOperator(1.0, capped_f, TimeGrid(horizon=1.0, steps=8), grid_1d)
    with pytest.raises(GridMismatchError):
        operator.sample(sample_noise_path(quarter_grid, None, 0, 0))


def test_drift_is_not_handled_here(grid_1d, quarter_grid):
    coeffs = Coefficients(f=capped_power_field(0.5), drift=(capped_power_field(0.5),))
    with pytest.raises(PreconditionError):
        evaluate_mild(1.0, coeffs, sample_noise_path(quarter_grid, None, 0, 0), grid_1d)
    with pytest.raises(PreconditionError):
        second_moment_p2(1.0, 0.0, None, coeffs, grid_1d)


def test_jumps_need_a_measure(grid_1d, quarter_grid):
    coeffs = Coefficients(g=JumpCoefficient(phi=constant_field(1.0)))
    with pytest.raises(PreconditionError):
        MildOperator(1.0, coeffs, quarter_grid, grid_1d)


def test_drift_term_integrates_forcing(grid_1d, quarter_grid, capped_f):
    operator = MildOperator(1.0, capped_f, quarter_grid, grid_1d)
    value, gradient = operator.drift_term([np.ones(301)] * 5)
    np.testing.assert_allclose(value, 1.0, rtol=1e-12)
    np.testing.assert_array_equal(gradient, 0.0)
    with pytest.raises(PreconditionError):
        operator.drift_term([np.ones(301)] * 4)


def test_window_start_carries_the_initial_state(grid_1d, quarter_grid):
    operator = MildOperator(1.0, Coefficients(), quarter_grid, grid_1d, window_start=0.5)
    values, _ = operator.terms(
        sample_noise_path(quarter_grid, None, 0, 0), initial=(np.ones(301), np.zeros((1, 301)))
    )
    np.testing.assert_allclose(values["initial"], 1.0, rtol=1e-12)


def test_second_moment_of_sine_forcing(grid_1d):
    """f = sin: grad P_s f = exp(-s/2) cos, so E |grad u(t, 0)|^2 = 1 - exp(-t)."""
    coeffs = Coefficients(f=sine_field())
    t = 0.05
    assert second_moment_p2(t, 0.0, None, coeffs, grid_1d) == pytest.approx(1.0 - math.exp(-t), rel=1e-6)
    expected = (1.0 - math.cos(0.5)) ** 2 * (1.0 - math.exp(-t))
    assert second_moment_p2(t, 0.0, 0.5, coeffs, grid_1d) == pytest.approx(expected, rel=1e-6)


def test_second_moment_is_symmetric(grid_1d, capped_f):
    forward = second_moment_p2(0.25, 0.0, 0.125, capped_f, grid_1d)
    backward = second_moment_p2(0.25, 0.125, 0.0, capped_f, grid_1d)
    assert forward > 0
    assert forward == pytest.approx(backward, rel=1e-8)
    assert second_moment_p2(0.25, 0.3, 0.3, capped_f, grid_1d) == 0.0


def test_second_moment_needs_separable_jumps(grid_1d, uniform_levy):
    coeffs = Coefficients(g=GeneralJumpCoefficient(lambda t, x, v: x * v))
    with pytest.raises(UnsupportedFormError):
        second_moment_p2(0.25, 0.0, None, coeffs, grid_1d, uniform_levy)
    with pytest.raises(UnsupportedFormError):
        PointGradient(1.0, [0.0], coeffs, TimeGrid(horizon=1.0, steps=4), grid_1d, uniform_levy)


def test_moment_bound(uniform_levy):
    coeffs = Coefficients(
        h=constant_field(1.0),
        f=capped_power_field(0.5),
        g=JumpCoefficient(phi=constant_field(0.5)),
        h_factor=RandomFactor(family="normal", std=2.0),
    )
    assert moment_bound_p2(0.5, coeffs, uniform_levy) == pytest.approx(4.0 * 0.25 + 0.5 + 0.5 * 0.25 * 2.0)


def test_point_gradient_matches_grid_engine(grid_1d):
    coeffs = Coefficients(f=sine_field())
    time_grid = TimeGrid(horizon=0.25, steps=4)
    gradients = PointGradient(0.25, [[0.0], [0.5]], coeffs, time_grid, grid_1d).sample(5, [0, 1])
    assert gradients.shape == (2, 2, 1)
    for row, index in enumerate([0, 1]):
        path = sample_noise_path(time_grid, None, 5, index)
        gridded = evaluate_mild(0.25, coeffs, path, grid_1d).gradient[0]
        assert gradients[row, 0, 0] == pytest.approx(gridded[150], abs=1e-6)
        assert gradients[row, 1, 0] == pytest.approx(gridded[175], abs=1e-6)


def test_gradient_at_samples_the_requested_paths(grid_1d):
    coeffs = Coefficients(f=sine_field())
    time_grid = TimeGrid(horizon=0.25, steps=4)
    batch = gradient_at(0.25, [[0.0], [0.5]], coeffs, time_grid, grid_1d, None, 5, [0, 1, 2])
    single = gradient_at(0.25, [[0.0], [0.5]], coeffs, time_grid, grid_1d, None, 5, [2])
    assert batch.shape == (3, 2, 1)
    np.testing.assert_allclose(batch[2], single[0], rtol=0, atol=1e-12)


WIDE = GridSpec(dimension=1, half_width=6.0, nodes_per_axis=601)


def test_linear_f_gives_the_wiener_path_as_gradient():
    time_grid = TimeGrid(horizon=0.25, steps=4)
    path = sample_noise_path(time_grid, None, 4, 0)
    sample = evaluate_mild(0.25, Coefficients(f=linear_field(1.0)), path, WIDE)
    inside = WIDE.interior_mask(8.0 * math.sqrt(0.25) + 0.1)
    wiener = path.wiener_increments.sum()
    np.testing.assert_allclose(sample.gradient[0][inside], wiener, rtol=0, atol=1e-10)
    np.testing.assert_allclose(sample.u[inside], wiener * WIDE.axis[inside], rtol=0, atol=1e-10)


def test_gradient_matches_finite_differences_of_the_solution():
    time_grid = TimeGrid(horizon=0.25, steps=4)
    path = sample_noise_path(time_grid, None, 6, 1)
    coeffs = Coefficients(h=sine_field(name="h"), f=sine_field(amplitude=2.0, name="f"))
    sample = evaluate_mild(0.25, coeffs, path, WIDE)
    differences = np.gradient(sample.u, WIDE.spacing)
    inside = WIDE.interior_mask(8.0 * math.sqrt(0.25) + 0.1)
    np.testing.assert_allclose(sample.gradient[0][inside], differences[inside], rtol=0, atol=1e-3)
    np.testing.assert_array_equal(evaluate_gradient(0.25, coeffs, path, WIDE), sample.gradient)


def test_jump_part_adds_its_isometry_weight(grid_1d, uniform_levy, capped_f):
    forcing_only = second_moment_p2(0.25, 0.0, 0.125, capped_f, grid_1d)
    unit = JumpCoefficient(phi=capped_power_field(0.5)).normalized(uniform_levy)
    assert unit.psi.squared_norm(uniform_levy) == pytest.approx(1.0, rel=1e-10)
    both = Coefficients(f=capped_f.f, g=unit)
    assert second_moment_p2(0.25, 0.0, 0.125, both, grid_1d, uniform_levy) == pytest.approx(
        2.0 * forcing_only, rel=1e-8
    )
    doubled = Coefficients(f=capped_f.f, g=JumpCoefficient(phi=capped_power_field(0.5), psi=MarkProfile(value=2.0)))
    assert second_moment_p2(0.25, 0.0, 0.125, doubled, grid_1d, uniform_levy) == pytest.approx(
        9.0 * forcing_only, rel=1e-8
    )


def test_monte_carlo_gradient_moment_matches_the_isometry(grid_1d, uniform_levy):
    """E |grad u(t, 0)|^2 from sampled paths against the Itô and Poisson isometries."""
    coeffs = Coefficients(
        f=sine_field(name="f"),
        g=JumpCoefficient(phi=sine_field(name="phi")).normalized(uniform_levy),
    )
    t, paths = 0.05, 4000
    exact = second_moment_p2(t, 0.0, None, coeffs, grid_1d, uniform_levy)
    assert exact == pytest.approx(2.0 * (1.0 - math.exp(-t)), rel=1e-6)
    gradients = gradient_at(t, [[0.0]], coeffs, TimeGrid(horizon=t, steps=100), grid_1d, uniform_levy, 11, range(paths))
    squares = gradients[:, 0, 0] ** 2
    std_error = squares.std(ddof=1) / math.sqrt(paths)
    assert abs(squares.mean() - exact) < 5.0 * std_error
