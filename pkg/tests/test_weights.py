import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.exceptions import InvalidInputError
from app.models import ApMode
from app.sparse import build_sparse_family_Y
from app.treespace import (
    closure,
    martingale_transform,
    random_martingale,
    random_signs,
    random_tree,
)
from app.weights import (
    ap_characteristic,
    ap_lower_bound_samples,
    ap_node_maximum,
    degenerate_weight_trend,
    doob_constant,
    dual_weight,
    extrapolate_bound,
    random_weight,
    verify_doob_weighted,
    verify_weighted_sparse,
    verify_weighted_sparse_L2,
    weight_martingale,
    weight_process,
    weighted_norm,
)
from tests.conftest import TreeFactory


def linear(A):
    return 8.0 * A


@pytest.fixture
def coin_weight(coin):
    """Peso terminal (2, 1/2) na moeda justa."""
    return weight_process(coin, np.array([2.0, 0.5]), 2.0)


def test_weight_process_validation(coin):
    with pytest.raises(InvalidInputError):
        weight_process(coin, np.ones(3), 2.0)
    with pytest.raises(InvalidInputError):
        weight_process(coin, np.array([1.0, 0.0]), 2.0)
    with pytest.raises(InvalidInputError):
        weight_process(coin, np.ones(2), 1.0)


def test_weight_martingale_and_dual(coin_weight):
    assert weight_martingale(coin_weight).values[0][0, 0] == 1.25
    np.testing.assert_allclose(dual_weight(coin_weight), [0.5, 2.0])


def test_coin_characteristic(coin_weight):
    """Teste de Q_2 = 25/16 na moeda justa."""
    report = ap_characteristic(coin_weight)

    assert report.q_p == pytest.approx(25.0 / 16.0)
    assert report.mode is ApMode.EXACT
    assert report.candidates == 5
    assert ap_node_maximum(coin_weight).attaining == [(0, 0)]


def test_constant_weight_has_unit_characteristic(coin):
    w = weight_process(coin, np.full(2, 3.0), 3.0)

    assert ap_characteristic(w).q_p == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    p=st.floats(1.2, 4.0),
    spread=st.floats(0.0, 2.0),
)
def test_node_maximum_matches_enumeration(seed, p, spread):
    """Propriedade: o máximo nos nós é o supremo sobre todos os T."""
    space = TreeFactory(depth=2)
    w = random_weight(space, np.random.default_rng(seed), p, spread)

    exact = ap_characteristic(w)
    nodes = ap_node_maximum(w)

    assert exact.q_p >= 1.0 - 1e-12
    assert nodes.q_p == pytest.approx(exact.q_p)


def test_sampled_characteristic_is_lower_bound(rng):
    space = random_tree(rng, 4)
    w = random_weight(space, rng, 2.0, 1.5)

    sampled = ap_characteristic(w, exhaustive=False, count=50, seed=3)

    assert sampled.mode is ApMode.SAMPLED
    assert sampled.q_p <= ap_node_maximum(w).q_p + 1e-12


def test_ap_lower_bound_samples():
    report = ap_lower_bound_samples(np.array([2.0, 0.5]), 2.0)

    assert report.q_p == pytest.approx(25.0 / 16.0)
    with pytest.raises(InvalidInputError):
        ap_lower_bound_samples(np.array([1.0, -1.0]), 2.0)


def test_weighted_norm_with_sample_weights():
    value = weighted_norm(np.array([1.0, -3.0]), np.array([2.0, 1.0]), p=2)

    assert value == pytest.approx(np.sqrt(5.5))


def test_doob_constant():
    assert doob_constant(2.0) == pytest.approx(4.0)
    with pytest.raises(InvalidInputError):
        doob_constant(1.0)


def test_extrapolate_bound_reference_value():
    """Extrapolação de N_2(A) = 8A para p = 4 em B = 1."""
    assert extrapolate_bound(linear, 2.0, 4.0, 1.0) == pytest.approx(
        101.3647, abs=1e-4
    )
    assert extrapolate_bound(linear, 2.0, 2.0, 3.0) == 24.0


def test_extrapolate_bound_rejects_small_characteristic():
    with pytest.raises(InvalidInputError):
        extrapolate_bound(linear, 2.0, 3.0, 0.5)


@settings(max_examples=50, deadline=None)
@given(
    p=st.floats(1.1, 6.0),
    low=st.floats(1.0, 50.0),
    factor=st.floats(1.0, 10.0),
)
def test_extrapolate_bound_is_monotone(p, low, factor):
    """Propriedade: N_p(B) não decresce em B."""
    first = extrapolate_bound(linear, 2.0, p, low)
    second = extrapolate_bound(linear, 2.0, p, low * factor)

    assert second >= first * (1.0 - 1e-12)


@pytest.mark.parametrize('p', [1.5, 2.0, 3.0])
def test_weighted_doob_on_random_trees(rng, p):
    for _ in range(20):
        space = random_tree(rng, 4, 3)
        X = random_martingale(space, rng, dim=2)
        w = random_weight(space, rng, p, 1.0)

        report = verify_doob_weighted(space, X, w)

        assert report.ok
        assert report.q_p >= 1.0


@pytest.mark.parametrize('p', [1.5, 2.0, 4.0])
def test_weighted_sparse_on_random_trees(rng, p):
    """Teste de ||S(X)||_{L^p(w)} contra N_p(Q_p) ||X||_{L^p(w)}."""
    for _ in range(20):
        space = random_tree(rng, 4, 3)
        X = random_martingale(space, rng)
        Y = martingale_transform(space, X, random_signs(space, rng))
        family = build_sparse_family_Y(X, Y, space)
        w = random_weight(space, rng, p, 1.0)

        assert verify_weighted_sparse(space, X, family, w).ok


def test_weighted_sparse_l2_requires_p_two(coin):
    X = closure(coin, np.array([1.0, -1.0]))
    family = build_sparse_family_Y(X, X, coin)
    w = weight_process(coin, np.ones(2), 3.0)

    with pytest.raises(InvalidInputError):
        verify_weighted_sparse_L2(coin, X, family, w)


def test_degenerate_weight_trend():
    table = degenerate_weight_trend(max_depth=5)

    assert table['depth'].tolist() == [1, 2, 3, 4, 5]
    assert table['q_p'].is_monotonic_increasing
    assert (table['ratio_sharp'] <= doob_constant(2.0)).all()
