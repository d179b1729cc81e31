import math

import numpy as np
import pytest

from app.exceptions import InvalidInputError
from app import riesz
from app.models import (
    NEVER,
    Geometry,
    GeometryKind,
    RieszEstimate,
    TimeGrid,
)
from app.riesz import (
    TWO_PI,
    background_hitting_check,
    bin_statistics,
    dimension_free_sweep,
    evaluate,
    fft_riesz_oracle,
    height_sensitivity,
    hitting_probability,
    invariant_measure_check,
    is_mean_zero,
    linearity_residual,
    oracle_bin_means,
    parse_function,
    poisson_extension,
    riesz_estimator,
    riesz_target,
    simulate_background,
    tau_positions,
)

TORUS = Geometry(kind=GeometryKind.TORUS, dim=1)
GAUSS = Geometry(kind=GeometryKind.GAUSS, dim=1)

SMALL_RUN = {
    'y0': 2.0,
    'bins': 8,
    'seed': 3,
    'dt': 0.01,
    't_max': 100.0,
}


@pytest.fixture(scope='module')
def cos_estimate():
    """Execução curta do estimador para cos no círculo."""
    return riesz_estimator(
        TORUS, parse_function('cos', TORUS), paths=4096, **SMALL_RUN
    )


def test_parse_function_terms():
    f = parse_function('cos + 0.5*sin2', TORUS)

    assert [term.kind for term in f.terms] == ['cos', 'sin']
    assert f.terms[1].coefficient == 0.5
    assert f.terms[1].index == (2,)


def test_parse_function_pads_index():
    geom = Geometry(kind=GeometryKind.GAUSS, dim=3)

    f = parse_function('He(1,1)', geom)

    assert f.terms[0].index == (1, 1, 0)


@pytest.mark.parametrize(
    ('text', 'geom'),
    [
        ('He', GAUSS),
        ('cos(1,2)', TORUS),
        ('tan', TORUS),
        ('He2', TORUS),
        ('cos', GAUSS),
    ],
)
def test_parse_function_rejects(text, geom):
    with pytest.raises(InvalidInputError):
        parse_function(text, geom)


def test_unsupported_family_lists_alternatives():
    with pytest.raises(InvalidInputError) as error:
        parse_function('He2', TORUS)

    assert 'Famílias suportadas' in error.value.detail


def test_mean_zero():
    assert is_mean_zero(parse_function('He2', GAUSS))
    assert not is_mean_zero(parse_function('He0', GAUSS))


def test_poisson_extension_decays_by_frequency():
    """Q cos2(x, y) = e^{-2y} cos(2x)."""
    f = parse_function('cos2', TORUS)

    value, grad, dy = poisson_extension(TORUS, f, np.zeros((1, 1)), 1.0)

    assert value[0] == pytest.approx(math.exp(-2.0))
    assert grad[0, 0] == pytest.approx(0.0)
    assert dy[0] == pytest.approx(-2.0 * math.exp(-2.0))
    with pytest.raises(InvalidInputError):
        poisson_extension(TORUS, f, np.zeros((1, 1)), 1.0, a=0.5)


def test_riesz_target_of_cosine():
    x = np.linspace(0.0, TWO_PI, 7)[:, None]

    target = riesz_target(TORUS, parse_function('cos', TORUS), x)

    np.testing.assert_allclose(target[:, 0], -np.sin(x[:, 0]), atol=1e-12)


def test_riesz_target_of_hermite():
    """R He2 = sqrt(2) He1 na medida gaussiana."""
    x = np.linspace(-3.0, 3.0, 7)[:, None]

    target = riesz_target(GAUSS, parse_function('He2', GAUSS), x)

    np.testing.assert_allclose(target[:, 0], math.sqrt(2.0) * x[:, 0])


def test_fft_oracle_turns_cosine_into_minus_sine():
    grid = np.arange(256) * TWO_PI / 256

    oracle = fft_riesz_oracle(np.cos(3.0 * grid) + 0.25)

    np.testing.assert_allclose(oracle[0], -np.sin(3.0 * grid), atol=1e-10)


def test_fft_oracle_in_two_dimensions():
    grid = np.arange(64) * TWO_PI / 64
    x, y = np.meshgrid(grid, grid, indexing='ij')

    oracle = fft_riesz_oracle(np.cos(x + 2.0 * y))

    scale = math.sqrt(5.0)
    np.testing.assert_allclose(
        oracle[0], -np.sin(x + 2.0 * y) / scale, atol=1e-10
    )
    np.testing.assert_allclose(
        oracle[1], -2.0 * np.sin(x + 2.0 * y) / scale, atol=1e-10
    )


def test_oracle_bin_means_match_cell_averages():
    edges = np.linspace(0.0, TWO_PI, 17)

    means = oracle_bin_means(parse_function('cos', TORUS), edges)

    exact = (np.cos(edges[1:]) - np.cos(edges[:-1])) / np.diff(edges)
    assert means.shape == (16, 1)
    np.testing.assert_allclose(means[:, 0], exact, atol=0.02)


def test_bin_statistics():
    coordinate = np.array([0.1, 0.2, 0.9])
    values = np.array([[1.0], [3.0], [5.0]])

    counts, means, stderr = bin_statistics(
        coordinate, values, np.array([0.0, 0.5, 1.0, 1.5])
    )

    assert counts.tolist() == [2, 1, 0]
    np.testing.assert_allclose(means[:, 0], [2.0, 5.0, 0.0])
    np.testing.assert_allclose(stderr[:, 0], [1.0, 0.0, 0.0])


def test_evaluate_hermite():
    values = evaluate(
        parse_function('He2', GAUSS), GAUSS, np.array([[0.0], [2.0]])
    )

    np.testing.assert_allclose(values, [-1.0, 3.0])


def test_estimator_recovers_minus_sine(cos_estimate):
    """Teste do estimador contra o alvo analítico -sin."""
    assert cos_estimate.means.shape == (8, 1)
    assert cos_estimate.counts.sum() <= 4096
    assert cos_estimate.censored_fraction < 0.01
    assert cos_estimate.diagnostics['relative_error'] < 0.5
    assert cos_estimate.diagnostics['fast_forwards'] > 0


def test_estimator_is_reproducible(cos_estimate):
    again = riesz_estimator(
        TORUS, parse_function('cos', TORUS), paths=4096, **SMALL_RUN
    )

    np.testing.assert_array_equal(again.means, cos_estimate.means)


def test_estimator_is_linear():
    """Com a mesma semente, E(f + g) = E(f) + E(g)."""
    residual = linearity_residual(
        TORUS,
        parse_function('cos', TORUS),
        parse_function('0.5*sin2', TORUS),
        paths=500,
        **SMALL_RUN,
    )

    assert residual < 1e-9


def test_estimator_rejects_bessel():
    geom = Geometry(kind=GeometryKind.BESSEL, dim=1, alpha=0.5)

    with pytest.raises(InvalidInputError):
        riesz_estimator(geom, parse_function('0', geom), paths=10)


def test_estimator_rejects_non_centered_function():
    with pytest.raises(InvalidInputError):
        riesz_estimator(GAUSS, parse_function('He0', GAUSS), paths=10)


def test_invariant_measure_check(rng):
    uniform = rng.uniform(0.0, TWO_PI, size=(5000, 1))
    clustered = rng.uniform(0.0, 1.0, size=(5000, 1))

    assert invariant_measure_check(TORUS, uniform).ok
    assert not invariant_measure_check(TORUS, clustered).ok


def test_tau_positions_stay_on_circle():
    positions = tau_positions(TORUS, 2.0, 500, seed=4, dt=0.01, t_max=100)

    assert 0 < len(positions) <= 500
    assert positions.min() >= 0.0
    assert positions.max() < TWO_PI


def test_height_sensitivity_of_identical_runs(cos_estimate):
    scores = height_sensitivity(cos_estimate, cos_estimate)

    assert scores['mean_score'] == 0.0
    assert scores['within_band'] == 1.0


def test_dimension_free_sweep():
    table = dimension_free_sweep(
        GeometryKind.TORUS, [1, 2], paths=1000, weighted=True, **SMALL_RUN
    )

    assert table['dim'].tolist() == [1, 1, 2, 2]
    assert table['weighted'].tolist() == [False, True, False, True]
    assert (table.loc[table['weighted'], 'q_p_lower'] >= 1.0).all()


@pytest.mark.parametrize('noise', [0.0, 0.3])
def test_dimension_free_sweep_ignores_null_components(monkeypatch, noise):
    """Ruído nas componentes 2..d não altera a razão."""
    edges = np.linspace(0.0, TWO_PI, 9)
    centers = 0.5 * (edges[:-1] + edges[1:])

    def fixed_estimate(geom, f, **options):
        means = np.full((8, geom.dim), noise)
        means[:, 0] = np.sin(centers)
        return RieszEstimate(
            edges=edges,
            counts=np.full(8, 1000),
            means=means,
            stderr=np.full((8, geom.dim), 0.01),
            target=means.copy(),
            paths=8000,
            censored_fraction=0.0,
        )

    monkeypatch.setattr(riesz, 'riesz_estimator', fixed_estimate)

    table = dimension_free_sweep(GeometryKind.TORUS, [3], seed=3)

    # ||f||_p amostrado cancela na razão entre ratio e stderr
    r_norm = np.sqrt(np.mean(np.sin(centers) ** 2))
    r_err = 0.01 / math.sqrt(8)
    row = table.iloc[0]
    assert row['ratio'] / row['stderr'] == pytest.approx(
        r_norm / r_err, rel=1e-9
    )


def test_hitting_probability():
    """Com taxa de variância 2, P(tau <= t) = 2 (1 - Phi(y / sqrt(2t)))."""
    assert hitting_probability(1.0, 50.0) == pytest.approx(0.92, abs=0.005)
    assert hitting_probability(1.0, 1.0) == pytest.approx(0.4795, abs=1e-4)


def test_background_matches_hitting_law():
    """Teste da fração absorvida e do congelamento depois de tau."""
    grid = TimeGrid(1.0, 0.01)

    state = simulate_background(TORUS, 1.0, grid, seed=5, paths=4000)

    expected = hitting_probability(1.0, 1.0)
    se = math.sqrt(expected * (1.0 - expected) / 4000)
    assert abs(state.hit.mean() - expected) <= 4.0 * se
    assert state.censored.mean() == pytest.approx(1.0 - state.hit.mean())
    for path in np.flatnonzero(state.hit)[:50]:
        tau = state.tau[path]
        assert (state.height[path, tau:] == 0.0).all()
        assert (state.position[path, tau:] == state.position[path, tau]).all()
        assert state.stepped_time[path] == pytest.approx(tau * grid.dt)
    assert (state.tau[~state.hit] == NEVER).all()
    assert (state.height[~state.hit] > 0.0).all()
    np.testing.assert_allclose(state.stepped_time[~state.hit], 1.0)


def test_background_without_bridge_misses_crossings():
    grid = TimeGrid(1.0, 0.05)
    options = {'seed': 5, 'paths': 2000}

    bridged = simulate_background(TORUS, 1.0, grid, **options)
    plain = simulate_background(TORUS, 1.0, grid, bridge=False, **options)

    assert (plain.hit <= bridged.hit).all()
    assert plain.hit.mean() < bridged.hit.mean()
    assert background_hitting_check(bridged, 1.0, 1.0).ok
    assert not background_hitting_check(plain, 1.0, 1.0).ok


def test_background_rejects_nonpositive_height():
    with pytest.raises(InvalidInputError):
        simulate_background(TORUS, 0.0, TimeGrid(1.0, 0.1))
