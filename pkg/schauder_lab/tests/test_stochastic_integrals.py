"""
Tests for the noise.stochastic_integrals module.
"""

import numpy as np
import pytest

from schauder_lab.errors import AlignmentError, MarkSupportError, PreconditionError
from schauder_lab.noise.levy_noise import JumpEvents, NoisePath, TimeGrid, sample_noise_path
from schauder_lab.noise.stochastic_integrals import (
    StepIntegrandN,
    StepIntegrandW,
    bound_report,
    check_moment_identity,
    check_moment_suite,
    equality_report,
    ito_integral,
    poisson_integral,
    poisson_integrals,
    poisson_p4_constant,
    poisson_p4_stability,
)

QUARTERS = np.linspace(0.0, 1.0, 5)


def unit_poisson(spec):
    return StepIntegrandN(QUARTERS, ((spec.inner_cutoff, spec.outer_radius),), np.ones((4, 1)))


def test_step_integrand_w_norm_and_combine():
    F = StepIntegrandW(QUARTERS, [1.0, 2.0, 0.0, -1.0])
    assert F.squared_norm() == pytest.approx(0.25 * (1 + 4 + 0 + 1))
    G = F.combine(2.0, StepIntegrandW(QUARTERS, np.ones(4)), -1.0)
    np.testing.assert_allclose(G.values, [1.0, 3.0, -1.0, -3.0])
    with pytest.raises(AlignmentError):
        F.combine(1.0, StepIntegrandW([0.0, 1.0], [1.0]), 1.0)


def test_step_integrand_w_validation():
    with pytest.raises(ValueError):
        StepIntegrandW([0.0, 0.5, 0.4], [1.0, 1.0])
    with pytest.raises(ValueError):
        StepIntegrandW(QUARTERS, [1.0])


def test_ito_integral_is_sum_of_increments(quarter_grid):
    path = sample_noise_path(quarter_grid, None, 0, 0)
    F = StepIntegrandW(QUARTERS, [1.0, 2.0, 0.0, -1.0])
    expected = np.dot(F.values, path.wiener_increments)
    assert ito_integral(F, path) == pytest.approx(expected)


def test_ito_integral_on_finer_grid():
    grid = TimeGrid(horizon=1.0, steps=8)
    path = sample_noise_path(grid, None, 0, 0)
    F = StepIntegrandW([0.0, 0.5, 1.0], [1.0, 3.0])
    increments = path.wiener_increments
    assert ito_integral(F, path) == pytest.approx(increments[:4].sum() + 3.0 * increments[4:].sum())


def test_misaligned_breakpoints_are_rejected(quarter_grid):
    path = sample_noise_path(quarter_grid, None, 0, 0)
    with pytest.raises(AlignmentError):
        ito_integral(StepIntegrandW([0.0, 0.3, 1.0], [1.0, 1.0]), path)


def test_mark_cells_must_be_disjoint_and_nonempty():
    with pytest.raises(MarkSupportError):
        StepIntegrandN(QUARTERS, ((0.5, 0.8), (0.7, 1.0)), np.ones((4, 2)))
    with pytest.raises(MarkSupportError):
        StepIntegrandN(QUARTERS, ((0.6, 0.6),), np.ones((4, 1)))


def test_mark_cells_must_lie_in_support(uniform_levy, quarter_grid):
    H = StepIntegrandN(QUARTERS, ((0.2, 0.8),), np.ones((4, 1)))
    path = sample_noise_path(quarter_grid, uniform_levy, 0, 0)
    with pytest.raises(MarkSupportError):
        poisson_integral(H, path, uniform_levy)


def test_lookup_is_zero_off_the_cells():
    H = StepIntegrandN(QUARTERS, ((0.75, 1.0), (0.5, 0.75)), [[1.0, 2.0]] * 4)
    values = H.lookup(np.array([0.1, 0.1, 0.1, 0.0]), np.array([0.6, 0.8, 0.4, 0.6]))
    np.testing.assert_array_equal(values, [2.0, 1.0, 0.0, 0.0])


def test_poisson_integral_by_hand(uniform_levy, quarter_grid):
    H = StepIntegrandN(QUARTERS, ((0.5, 0.75), (0.75, 1.0)), [[1.0, 2.0]] * 4)
    path = NoisePath(
        time_grid=quarter_grid,
        wiener_increments=np.zeros(4),
        jumps=JumpEvents(np.array([0.1, 0.6]), np.array([0.6, 0.9])),
        master_seed=0,
        path_index=0,
    )
    # jumps charge 1 + 2; the compensator is 1 * (1 * 1 + 2 * 1)
    assert poisson_integral(H, path, uniform_levy) == pytest.approx(0.0)
    assert H.norm(uniform_levy, 2) == pytest.approx(1.0 + 4.0)


def test_poisson_integrals_match_single_path(uniform_levy, quarter_grid):
    H = unit_poisson(uniform_levy)
    paths = [sample_noise_path(quarter_grid, uniform_levy, 4, i) for i in range(6)]
    batched = poisson_integrals(H, [p.jumps for p in paths], uniform_levy)
    single = [poisson_integral(H, p, uniform_levy) for p in paths]
    np.testing.assert_allclose(batched, single, rtol=0, atol=1e-12)


def test_reports():
    samples = np.array([0.9, 1.1, 1.0, 1.0])
    report = equality_report("ito_isometry", samples, 1.0, seed=3, label="unit")
    assert report.passed
    assert report.to_row() == {
        "kind": "ito_isometry",
        "target": 1.0,
        "estimate": pytest.approx(1.0),
        "std_error": pytest.approx(report.std_error),
        "paths": 4,
        "seed": 3,
        "pass": True,
    }
    assert not bound_report("ito_p4_bound", samples + 10.0, 6.0, seed=3).passed


def test_poisson_p4_constant(uniform_levy):
    assert poisson_p4_constant(unit_poisson(uniform_levy), uniform_levy) == pytest.approx(7.0)


def test_poisson_p4_ratio_is_stable_across_seeds(uniform_levy):
    """H = 1, Lambda = 2, t = 1: E I^4 = 2 + 3 * 4 = 14, so the ratio is 7 for every seed."""
    stability = poisson_p4_stability(unit_poisson(uniform_levy), uniform_levy, 20_000, [0, 1, 2])
    assert stability.constant == pytest.approx(7.0)
    assert stability.stable
    for ratio, error in zip(stability.ratios, stability.std_errors):
        assert abs(ratio - 7.0) < 5 * error
    rows = stability.to_rows()
    assert [row["seed"] for row in rows] == [0, 1, 2]
    assert set(rows[0]) == {"seed", "ratio", "std_error", "constant"}


def test_poisson_p4_stability_needs_two_seeds(uniform_levy):
    with pytest.raises(PreconditionError):
        poisson_p4_stability(unit_poisson(uniform_levy), uniform_levy, 20_000, [0])


def test_default_time_grid_follows_uneven_breakpoints():
    """F = 1 on (0, 0.3], 2 on (0.3, 1]: E M^2 = 0.3 + 4 * 0.7."""
    F = StepIntegrandW([0.0, 0.3, 1.0], [1.0, 2.0])
    report = check_moment_identity("ito_isometry", F, None, 20_000, 2)
    assert report.target == pytest.approx(3.1)
    assert abs(report.estimate - 3.1) < 5 * report.std_error


def test_moment_checks_need_enough_paths():
    with pytest.raises(PreconditionError):
        check_moment_identity("ito_isometry", StepIntegrandW(QUARTERS, np.ones(4)), None, 100, 0)


def test_unknown_moment_kind():
    with pytest.raises(ValueError):
        check_moment_identity("skewness", StepIntegrandW(QUARTERS, np.ones(4)), None, 10_000, 0)


def test_ito_isometry_for_unit_integrand():
    """E M^2 = 1 for F = 1 on (0, 1]."""
    report = check_moment_identity("ito_isometry", StepIntegrandW(QUARTERS, np.ones(4)), None, 20_000, 11)
    assert report.target == 1.0
    assert abs(report.estimate - 1.0) < 5 * report.std_error


def test_ito_fourth_moment_bound():
    report = check_moment_identity("ito_p4_bound", StepIntegrandW(QUARTERS, np.ones(4)), None, 20_000, 11)
    assert report.target == 6.0
    assert report.estimate == pytest.approx(3.0, abs=5 * report.std_error)
    assert report.passed
    assert report.ratio == pytest.approx(report.estimate)


def test_poisson_isometry_and_mean(uniform_levy):
    """H = 1, Lambda = 2, t = 1: E I^2 = 2 and E I = 0."""
    H = unit_poisson(uniform_levy)
    isometry = check_moment_identity("poisson_isometry", H, uniform_levy, 20_000, 5)
    assert isometry.target == pytest.approx(2.0)
    assert abs(isometry.estimate - 2.0) < 5 * isometry.std_error
    mean = check_moment_identity("poisson_mean", H, uniform_levy, 20_000, 5)
    assert abs(mean.estimate) < 5 * mean.std_error


def test_poisson_checks_need_a_measure(uniform_levy):
    with pytest.raises(PreconditionError):
        check_moment_identity("poisson_isometry", unit_poisson(uniform_levy), None, 10_000, 0)


def test_moment_suite_rows(uniform_levy):
    reports = check_moment_suite(uniform_levy, 10_000, 0)
    kinds = [r.kind for r in reports]
    assert len(reports) == 17
    assert kinds.count("ito_isometry") == 5
    assert kinds.count("poisson_p4_bound") == 1
    for report in reports:
        if report.kind.endswith("isometry"):
            assert abs(report.estimate - report.target) < 6 * report.std_error
