import numpy as np
import pandas as pd
import pytest

from app.exceptions import (
    ConstructionError,
    InvalidInputError,
    SubordinationError,
)
from app.models import (
    NEVER,
    Provenance,
    SparseMode,
    StoppingFamily,
    TreeProcess,
)
from app.paths import (
    closure_reference_gaussian,
    constant_path,
    inject_joint_jumps,
    interleave,
    simulate_brownian,
    subordinate_transform,
)
from app.sparse import (
    build_sparse_family_Y,
    family_table,
    level_mass_report,
    path_sequences,
    refoot,
    sequence_max,
    sparse_family_from_sequences,
    sparse_operator,
    threshold_monotonicity,
    tree_sequences,
    verify_domination,
    verify_inductive_estimate,
    verify_sparsity,
)
from app.treespace import (
    build_tree,
    closure,
    leaf_paths,
    martingale_transform,
    random_martingale,
    random_signs,
    random_tree,
)
from app.weights import sparse_values
from tests.conftest import JumpSpecFactory, TimeGridFactory


@pytest.fixture
def spike():
    """Árvore em que uma folha rara leva X de 2 para 20."""
    space = build_tree(2, [2, 2], [[0.5, 0.5], [0.9, 0.1]])
    X = closure(space, np.array([0.0, 20.0, 0.0, 0.0]))
    return space, X


@pytest.fixture
def mc_pair():
    grid = TimeGridFactory(t_max=1.0, dt=0.02)
    spec = JumpSpecFactory(rate=3.0, scale=0.5)
    X = simulate_brownian(grid, seed=21, paths=2000)
    Y = subordinate_transform(X, seed=21)
    X, Y = inject_joint_jumps(X, Y, spec, seed=21)
    return X, Y, closure_reference_gaussian(X, 1.0, spec)


def test_refoot_contracts_and_vanishes():
    """Teste do re-escalamento r X_T no salto de cruzamento."""
    dx = np.array([[2.0, 0.0]])
    dy = np.array([[1.0, 0.0, 0.0]])
    x_at = np.array([[4.0, 3.0]])

    np.testing.assert_allclose(refoot(dy, dx, x_at), [[2.0, 0.0, 0.0]])
    np.testing.assert_allclose(
        refoot(dy, np.zeros((1, 2)), x_at), [[0.0, 0.0, 0.0]]
    )


def test_coin_has_a_single_level(coin):
    X = closure(coin, np.array([1.0, -1.0]))

    family = build_sparse_family_Y(X, X, coin)

    assert family.level_count == 1
    assert family.stops[:, 0].tolist() == [0, 0]
    np.testing.assert_allclose(sparse_values(family), [1.0, 1.0])


def test_spike_tree_family(spike):
    """Teste de uma família com cruzamento na folha rara."""
    space, X = spike

    family = build_sparse_family_Y(X, X, space)

    assert family.stops.tolist() == [
        [0, NEVER],
        [0, 2],
        [0, NEVER],
        [0, NEVER],
    ]
    np.testing.assert_allclose(family.references[1], [1.0, 20.0])
    np.testing.assert_allclose(family.feet[1, 1], [20.0])
    np.testing.assert_allclose(family.level_masses(), [1.0, 0.05])
    assert verify_sparsity(family).max_ratio == pytest.approx(0.05)


def test_spike_tree_domination(spike):
    space, X = spike
    family = build_sparse_family_Y(X, X, space)
    y = leaf_paths(space, X)

    report = verify_domination(sequence_max(y), sparse_values(family))

    assert report.ok
    assert report.worst_ratio == pytest.approx(2.0)


def test_conditional_operator_matches_references(spike):
    space, X = spike
    family = build_sparse_family_Y(X, X, space)

    S = sparse_operator(
        X.values[-1], family, SparseMode.CONDITIONAL, space
    )

    np.testing.assert_allclose(S.values, sparse_values(family))


def test_conditional_operator_requires_tree(mc_pair):
    X, Y, reference = mc_pair
    family = build_sparse_family_Y(X, Y, reference=reference)

    with pytest.raises(InvalidInputError):
        sparse_operator(X.values[:, -1], family, SparseMode.CONDITIONAL)


def test_rejects_non_subordinate_pair(spike):
    space, X = spike
    Y = TreeProcess(values=tuple(2.0 * v for v in X.values))

    with pytest.raises(SubordinationError):
        build_sparse_family_Y(X, Y, space)


def test_level_budget(coin):
    X = closure(coin, np.array([1.0, -1.0]))

    seqs = tree_sequences(coin, X, X)

    with pytest.raises(ConstructionError):
        sparse_family_from_sequences(seqs, level_budget=0)


def test_random_trees_are_sparse_and_dominated(rng):
    """Esparsidade e dominação exatas em árvores aleatórias."""
    for _ in range(30):
        space = random_tree(rng, 5, 3)
        X = random_martingale(space, rng, dim=2)
        Y = martingale_transform(
            space, X, random_signs(space, rng), rng.uniform(-1, 1)
        )
        family = build_sparse_family_Y(X, Y, space)
        y = leaf_paths(space, Y)

        assert verify_sparsity(family).ok
        assert level_mass_report(family).ok
        assert verify_domination(sequence_max(y), sparse_values(family)).ok
        assert verify_inductive_estimate(y, family).ok


def test_monte_carlo_domination_with_closure_reference(mc_pair):
    X, Y, reference = mc_pair

    family = build_sparse_family_Y(X, Y, reference=reference)
    report = verify_domination(
        sequence_max(interleave(Y)), sparse_values(family)
    )

    assert report.ok
    assert report.violations == 0
    assert level_mass_report(family).ok


def test_monte_carlo_domination_with_sample_reference(mc_pair):
    X, Y, _ = mc_pair

    family = build_sparse_family_Y(X, Y)
    y = interleave(Y)

    assert verify_domination(sequence_max(y), sparse_values(family)).ok
    assert verify_inductive_estimate(y, family).ok


def test_threshold_monotonicity(mc_pair):
    X, Y, reference = mc_pair

    report = threshold_monotonicity(
        path_sequences(X, Y, reference), [2.0, 4.0, 8.0]
    )

    assert report.ok
    assert report.thresholds == [2.0, 4.0, 8.0]


def test_family_table(spike):
    space, X = spike
    family = build_sparse_family_Y(X, X, space)

    table = family_table(family)

    assert isinstance(table, pd.DataFrame)
    assert len(table) == 5
    assert set(table['provenance']) == {'Y'}


def test_monte_carlo_sparsity_notes_binning(mc_pair):
    X, Y, reference = mc_pair
    family = build_sparse_family_Y(X, Y, reference=reference)

    report = verify_sparsity(family)

    assert not report.exact
    assert 'binning' in report.note


def test_zero_process_has_empty_family(grid):
    """X = 0: T^0 nunca ocorre, a família é vazia e S = 0."""
    X = constant_path(grid, 0.0, paths=3)

    family = build_sparse_family_Y(X, X)

    assert family.level_count == 0
    assert family.references.shape == (3, 0)
    S = sparse_operator(interleave(X), family)
    np.testing.assert_array_equal(S.values, np.zeros(3))
    report = verify_sparsity(family)
    assert report.ok
    assert report.max_ratio == 0.0
    assert verify_domination(sequence_max(interleave(X)), S).ok


def test_constant_process_has_single_level(grid):
    X = constant_path(grid, 2.0, paths=3)

    family = build_sparse_family_Y(X, X)

    assert family.stops.tolist() == [[0], [0], [0]]
    S = sparse_operator(interleave(X), family)
    np.testing.assert_allclose(S.values, 2.0)
    report = verify_sparsity(family)
    assert report.ok
    assert report.max_ratio == 0.0


@pytest.mark.parametrize('exact', [True, False])
def test_repeated_stop_violates_sparsity(exact):
    """T^1 = T^0 em todo E_0 dá razão 1 e reprova."""
    paths = 400
    family = StoppingFamily(
        stops=np.zeros((paths, 2), dtype=int),
        references=np.ones((paths, 2)),
        feet=np.zeros((paths, 2, 1)),
        weights=np.full(paths, 1.0 / paths),
        provenance=Provenance.Y,
        nodes=np.zeros((paths, 2), dtype=int) if exact else None,
    )

    report = verify_sparsity(family)

    assert report.ok is False
    assert report.max_ratio == pytest.approx(1.0)
    assert report.witness_level == 0
    assert report.exact is exact
