import math

import numpy as np
import pytest

from app.exceptions import BudgetExceededError, InvalidInputError
from app.models import JumpLaw, Stream, TimeGrid
from app.paths import (
    check_differential_subordination,
    closure_reference_gaussian,
    coarsen,
    constant_path,
    folded_normal_mean,
    from_values,
    inject_joint_jumps,
    inject_jumps,
    interleave,
    interleaved_times,
    make_rng,
    maximal_function,
    quadratic_variation,
    remaining_steps,
    simulate_bessel,
    simulate_brownian,
    simulate_exponential_martingale,
    simulate_ou,
    subordinate_transform,
    subordination_mask,
)
from tests.conftest import JumpSpecFactory, TimeGridFactory


def test_grid_rejects_non_integer_ratio():
    """Teste para t_max que não é múltiplo de dt."""
    with pytest.raises(InvalidInputError):
        TimeGrid(t_max=1.0, dt=0.3)


def test_grid_over_budget(monkeypatch):
    monkeypatch.setenv('MAX_GRID_STEPS', '10')

    with pytest.raises(BudgetExceededError):
        TimeGrid(t_max=1.0, dt=0.01)


def test_streams_are_independent():
    first = make_rng(7, Stream.DRIVER).normal(size=4)
    second = make_rng(7, Stream.JUMPS).normal(size=4)
    again = make_rng((7,), Stream.DRIVER).normal(size=4)

    assert not np.allclose(first, second)
    np.testing.assert_array_equal(first, again)


def test_brownian_is_reproducible(grid):
    first = simulate_brownian(grid, seed=3, paths=5)
    second = simulate_brownian(grid, seed=3, paths=5)

    np.testing.assert_array_equal(first.values, second.values)
    assert first.values.shape == (5, grid.steps + 1, 1)
    assert not first.jump_mask.any()


def test_brownian_terminal_variance():
    """Var(X_T) = variance_rate * T dentro de 3 erros padrão."""
    grid = TimeGridFactory(t_max=1.0, dt=0.1)
    paths = 20_000

    X = simulate_brownian(grid, variance_rate=2.0, seed=1, paths=paths)

    variance = X.values[:, -1, 0].var()
    assert abs(variance - 2.0) < 3 * 2.0 * math.sqrt(2.0 / paths)


def test_brownian_rejects_zero_variance(grid):
    with pytest.raises(InvalidInputError):
        simulate_brownian(grid, variance_rate=0.0)


def test_exponential_martingale_is_positive_with_unit_mean():
    grid = TimeGridFactory(t_max=1.0, dt=0.1)

    X = simulate_exponential_martingale(grid, 0.5, seed=2, paths=20_000)

    assert X.values.min() > 0
    assert X.values[:, -1, 0].mean() == pytest.approx(1.0, abs=0.02)


def test_ou_stays_stationary():
    grid = TimeGridFactory(t_max=2.0, dt=0.5)

    X = simulate_ou(grid, dim=2, seed=4, paths=20_000)

    np.testing.assert_allclose(X.values[:, -1].var(axis=0), 1.0, atol=0.05)


def test_ou_euler_requires_small_step():
    with pytest.raises(InvalidInputError):
        simulate_ou(TimeGrid(t_max=2.0, dt=1.0), exact=False)


def test_bessel_is_nonnegative():
    X = simulate_bessel(TimeGridFactory(), alpha=1.5, seed=5, paths=100)

    assert X.values.min() >= 0


def test_quadratic_variation_of_brownian():
    grid = TimeGridFactory(t_max=1.0, dt=0.01)

    bracket = quadratic_variation(simulate_brownian(grid, seed=6, paths=200))

    assert bracket.values[:, -1].mean() == pytest.approx(1.0, abs=0.03)
    assert not bracket.jumps.any()


def test_interleave_places_left_limits(grid):
    X = simulate_brownian(grid, seed=8, paths=3)
    X = inject_jumps(X, JumpSpecFactory(rate=10.0), seed=8)

    seq = interleave(X)

    assert seq.shape == (3, 2 * grid.steps + 1, 1)
    np.testing.assert_array_equal(seq[:, 1::2], X.pre_jump[:, 1:])
    np.testing.assert_array_equal(seq[:, 2::2], X.values[:, 1:])
    assert interleaved_times(grid)[1] == pytest.approx(grid.dt)
    assert remaining_steps(grid)[0] == grid.steps


def test_transform_is_subordinate(grid):
    """Teste da transformada com multiplicadores sorteados."""
    X = simulate_brownian(grid, dim=2, seed=9, paths=50)
    X = inject_jumps(X, JumpSpecFactory(), seed=9)

    Y = subordinate_transform(X, seed=9, dim_out=3)

    assert check_differential_subordination(X, Y).ok
    assert subordination_mask(X, Y).all()


def test_transform_rejects_large_multiplier(grid):
    X = simulate_brownian(grid, seed=1)

    with pytest.raises(InvalidInputError):
        subordinate_transform(X, multipliers=1.5)


def test_subordination_violation_is_located(grid):
    X = simulate_brownian(grid, seed=10, paths=4)
    Y = from_values(grid, 2.0 * X.values)

    report = check_differential_subordination(X, Y)

    assert not report.ok
    assert report.violations == 4
    assert not subordination_mask(X, Y).any()


def test_joint_jumps_keep_subordination(grid):
    X = simulate_brownian(grid, seed=11, paths=30)
    Y = subordinate_transform(X, seed=11)

    X, Y = inject_joint_jumps(X, Y, JumpSpecFactory(rate=5.0), seed=11)

    assert X.jump_mask.any()
    np.testing.assert_array_equal(X.jump_mask, Y.jump_mask)
    assert check_differential_subordination(X, Y).ok


def test_joint_jumps_reject_lognormal(grid):
    X = simulate_brownian(grid, seed=1)

    with pytest.raises(InvalidInputError):
        inject_joint_jumps(
            X, X, JumpSpecFactory(law=JumpLaw.LOGNORMAL), seed=1
        )


def test_lognormal_jumps_preserve_positivity(grid):
    X = simulate_exponential_martingale(grid, seed=12, paths=20)

    X = inject_jumps(
        X, JumpSpecFactory(rate=10.0, law=JumpLaw.LOGNORMAL), seed=12
    )

    assert X.jump_mask.any()
    assert X.values.min() > 0


def test_jump_budget(monkeypatch, grid):
    monkeypatch.setenv('MAX_EXPECTED_JUMPS', '5')
    X = simulate_brownian(grid, seed=1)

    with pytest.raises(BudgetExceededError):
        inject_jumps(X, JumpSpecFactory(rate=100.0), seed=1)


def test_maximal_function_sees_left_limits(grid):
    X = constant_path(grid, 1.0)
    X.pre_jump[0, 3] = -5.0

    assert maximal_function(X)[0] == 5.0


def test_folded_normal_mean():
    assert folded_normal_mean(np.array([-2.0]), np.array([0.0]))[0] == 2.0
    value = folded_normal_mean(np.array([0.0]), np.array([4.0]))[0]
    assert value == pytest.approx(2.0 * math.sqrt(2.0 / math.pi))


def test_closure_reference_at_start(grid):
    """E|X_T| a partir de zero para o browniano sem saltos."""
    X = simulate_brownian(grid, seed=13)

    reference = closure_reference_gaussian(X, 1.0)

    assert reference[0, 0] == pytest.approx(math.sqrt(2.0 / math.pi))
    assert reference[0, -1] == pytest.approx(abs(X.values[0, -1, 0]))


def test_closure_reference_rejects_rademacher(grid):
    X = simulate_brownian(grid, seed=1)
    spec = JumpSpecFactory(law=JumpLaw.RADEMACHER)

    with pytest.raises(InvalidInputError):
        closure_reference_gaussian(X, 1.0, spec)


def test_coarsen(grid):
    X = simulate_brownian(grid, seed=14, paths=2)

    coarse = coarsen(X, 4)

    assert coarse.grid.steps == grid.steps // 4
    np.testing.assert_array_equal(coarse.values, X.values[:, ::4])
    with pytest.raises(InvalidInputError):
        coarsen(X, 3)
