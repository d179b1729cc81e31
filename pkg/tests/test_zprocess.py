import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.exceptions import InvalidInputError, StabilityError
from app.models import DriftSpec, JumpLaw, ZMode
from app.paths import (
    constant_path,
    from_values,
    inject_jumps,
    interleave,
    simulate_brownian,
    simulate_exponential_martingale,
    subordinate_transform,
)
from app.sparse import level_mass_report, verify_sparsity
from app.treespace import (
    closure,
    martingale_transform,
    random_martingale,
    random_signs,
    random_tree,
)
from app.zprocess import (
    bellman_jump_gap,
    bellman_U,
    bellman_V,
    build_sparse_family_Z,
    build_submartingale,
    drift_operator,
    evolve_Z,
    hypothesis_mask,
    norm_decay_check,
    scale_batch,
    telescoping_report,
    tree_z_sequences,
    verify_z_domination,
    weak_type_experiment,
    z_norm_report,
    z_sequences,
)
from tests.conftest import DriftSpecFactory, JumpSpecFactory, TimeGridFactory


def z_batch(a=0.0, rate=2.0, paths=2000, seed=31, dt=0.02):
    """Submartingal exponencial com saltos log-normais e Z com V = -I."""
    grid = TimeGridFactory(t_max=1.0, dt=dt)
    X = simulate_exponential_martingale(grid, 0.5, seed, paths)
    if rate > 0:
        X = inject_jumps(
            X,
            JumpSpecFactory(rate=rate, law=JumpLaw.LOGNORMAL, scale=0.3),
            seed,
        )
    Y = subordinate_transform(X, seed, dim_out=2)
    sub = build_submartingale(X, a)
    zpath = evolve_Z(
        Y,
        DriftSpecFactory(a=a),
        Y.values[:, 0],
        xtilde0=sub.xtilde.values[:, 0, 0],
    )
    return sub, zpath


def test_bellman_values():
    assert bellman_U(0.2, 0.3) == pytest.approx(0.05)
    assert bellman_U(0.8, 0.5) == pytest.approx(-0.6)
    assert bellman_V(0.2, 0.3) == pytest.approx(-0.4)
    vector = bellman_U(np.array([0.1]), np.array([[0.3, 0.4]]))
    assert vector[0] == pytest.approx(0.24)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(-2, 2),
    y=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
)
def test_bellman_majorization(x, y):
    """Propriedade: V <= U em todo o plano."""
    y = np.array(y)

    assert bellman_V(x, y) <= bellman_U(x, y) + 1e-12


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(0, 0.999),
    u=st.floats(-0.999, 0.999),
    target=st.floats(0, 1),
    k=st.floats(-3, 3),
)
def test_bellman_jump_gap_is_nonpositive(x, u, target, k):
    """Saltos que mantêm x + h em [0, 1] não aumentam U além do QV."""
    y = (1.0 - x) * u

    gap = bellman_jump_gap(x, y, target - x, k)

    assert gap <= 1e-12


def test_jump_gap_vanishes_inside_diamond():
    assert bellman_jump_gap(0.1, 0.1, 0.1, 0.1) == pytest.approx(0.0)


def test_drift_operator_rejects_positive_eigenvalue():
    """Teste para V com autovalor positivo."""
    drift = DriftSpec(dim=2, matrix=np.diag([1.0, -1.0]))

    with pytest.raises(StabilityError):
        drift_operator(drift)


def test_drift_operator_rejects_asymmetric_matrix():
    drift = DriftSpec(dim=2, matrix=np.array([[-1.0, 1.0], [0.0, -1.0]]))

    with pytest.raises(StabilityError):
        drift_operator(drift)


def test_unstable_step_is_rejected(grid):
    Y = constant_path(grid, 0.0)
    drift = DriftSpec(dim=1, matrix=-30.0 * np.eye(1))

    with pytest.raises(StabilityError) as error:
        evolve_Z(Y, drift)

    assert 'dt <' in error.value.detail


def test_evolve_without_drift_follows_driver(grid):
    """Sem deriva, Z = Z_0 + Y - Y_0 inclusive nos saltos."""
    X = simulate_brownian(grid, dim=2, seed=5, paths=10)
    Y = inject_jumps(X, JumpSpecFactory(rate=10.0), seed=5)

    Z = evolve_Z(Y, DriftSpec(dim=2), z0=[1.0, -1.0]).Z

    expected = Y.values - Y.values[:, :1] + np.array([1.0, -1.0])
    np.testing.assert_allclose(Z.values, expected, atol=1e-12)
    np.testing.assert_allclose(
        Z.values - Z.pre_jump, Y.values - Y.pre_jump, atol=1e-12
    )


def test_evolve_rejects_large_start(grid):
    Y = constant_path(grid, [0.0, 0.0])

    with pytest.raises(InvalidInputError):
        evolve_Z(Y, DriftSpecFactory(), z0=[2.0, 0.0], xtilde0=1.0)


def test_evolve_rejects_dimension_mismatch(grid):
    with pytest.raises(InvalidInputError):
        evolve_Z(constant_path(grid, 0.0), DriftSpecFactory(dim=2))


def test_norm_decay(grid):
    report = norm_decay_check(
        DriftSpecFactory(a=0.5), np.array([[1.0, 2.0], [-3.0, 0.5]]), grid
    )

    assert report.ok
    assert report.step is None


def test_submartingale_on_constant_path(grid):
    """X~_k = (1 + a dt)^k quando X = 1."""
    sub = build_submartingale(constant_path(grid, 1.0), a=0.5)

    expected = (1.0 + 0.5 * grid.dt) ** np.arange(grid.steps + 1)
    np.testing.assert_allclose(sub.xtilde.values[0, :, 0], expected)
    assert (np.diff(sub.A.values[0, :, 0]) >= 0).all()


def test_submartingale_rejects_negative_inputs(grid):
    with pytest.raises(InvalidInputError):
        build_submartingale(constant_path(grid, 1.0), a=-0.1)
    with pytest.raises(InvalidInputError):
        build_submartingale(constant_path(grid, -1.0))


@pytest.mark.parametrize('mode', [ZMode.CONTINUOUS, ZMode.JUMP])
@pytest.mark.parametrize('a', [0.0, 0.5])
def test_monte_carlo_z_family(mode, a):
    """Teste da família de Z com referência de fechamento."""
    sub, zpath = z_batch(a=a)

    family = build_sparse_family_Z(sub, zpath, mode=mode)

    assert telescoping_report(family).ok
    assert verify_z_domination(family).ok
    assert family.diagnostics['decay_increase'] <= 1e-9
    assert level_mass_report(family).ok
    assert (family.stops[:, 0] == 0).all()


def test_continuous_domination_reports_literal_bound():
    """A parcela dos cruzamentos na cota encolhe com dt."""
    shares = []
    for dt in (0.04, 0.001):
        sub, zpath = z_batch(rate=0.0, paths=400, dt=dt)
        family = build_sparse_family_Z(
            sub, zpath, mode=ZMode.CONTINUOUS, threshold=2.0
        )

        report = verify_z_domination(family)

        assert report.ok
        assert report.literal_violations is not None
        assert report.literal_worst_ratio >= report.worst_ratio
        shares.append(report.crossing_share)

    assert 0.0 < shares[1] < shares[0] / 2


def test_jump_domination_has_no_literal_fields():
    sub, zpath = z_batch(paths=200)
    family = build_sparse_family_Z(sub, zpath, mode=ZMode.JUMP)

    report = verify_z_domination(family)

    assert report.constant == 8.0
    assert report.literal_violations is None


def test_monte_carlo_z_family_with_sample_reference():
    sub, zpath = z_batch(a=0.5)
    reference = interleave(sub.xtilde)[:, :, 0]

    family = build_sparse_family_Z(
        z_sequences(sub, zpath, reference), mode=ZMode.JUMP
    )

    assert telescoping_report(family).ok
    assert verify_z_domination(family).ok


def test_z_family_requires_z():
    sub, _ = z_batch(paths=10, rate=0.0)

    with pytest.raises(InvalidInputError):
        build_sparse_family_Z(sub)


@pytest.mark.parametrize('mode', [ZMode.CONTINUOUS, ZMode.JUMP])
def test_tree_z_family(rng, mode):
    """Na árvore, telescopagem, dominação e esparsidade são exatas."""
    depth = 4
    drift = DriftSpec(dim=1, a=0.5, matrix=-np.eye(1))
    for _ in range(20):
        space = random_tree(rng, depth, 2)
        X = random_martingale(space, rng, positive=True)
        Y = martingale_transform(
            space,
            X,
            random_signs(space, rng),
            initial_sign=rng.uniform(-1.0, 1.0),
        )
        seqs = tree_z_sequences(space, X, Y, drift, dt=1.0 / (depth + 1))

        family = build_sparse_family_Z(seqs, mode=mode)

        assert telescoping_report(family).ok
        assert verify_z_domination(family).ok
        assert level_mass_report(family).ok
        assert verify_sparsity(family).ok


def test_tree_z_sequences_reject_signed_x(coin):
    X = closure(coin, np.array([-1.0, 1.0]))

    with pytest.raises(InvalidInputError):
        tree_z_sequences(coin, X, X)


def test_weak_type_experiment():
    sub, zpath = z_batch(a=0.5)

    report = weak_type_experiment(sub, zpath, [2.0, 4.0, 8.0])

    assert report.ok
    assert report.excluded == 0
    assert [point.lam for point in report.points] == [2.0, 4.0, 8.0]
    assert report.norm == pytest.approx(
        sub.xtilde.values[:, -1, 0].mean()
    )


def test_hypothesis_mask_flags_non_subordinate_driver(grid):
    X = simulate_exponential_martingale(grid, 0.5, seed=3, paths=5)
    sub = build_submartingale(X)
    Y = from_values(grid, 2.0 * (X.values - 1.0))
    zpath = evolve_Z(Y, DriftSpec(dim=1))

    assert not hypothesis_mask(sub, zpath).any()


def test_scale_batch_keeps_equation():
    """Z / c resolve a equação dirigida por Y / c."""
    sub, zpath = z_batch(paths=20, rate=2.0)

    scaled_sub, scaled = scale_batch(sub, zpath, 4.0)
    again = evolve_Z(
        scaled.driver, zpath.drift, zpath.Z.values[:, 0] / 4.0
    )

    np.testing.assert_allclose(again.Z.values, scaled.Z.values, atol=1e-12)
    np.testing.assert_allclose(
        scaled_sub.xtilde.values, sub.xtilde.values / 4.0
    )
    with pytest.raises(InvalidInputError):
        scale_batch(sub, zpath, 0.0)


def test_z_norm_report():
    report = z_norm_report(np.array([1.0, 2.0]), np.array([1.0, 1.0]))

    assert report.ok
    assert report.rhs == pytest.approx(64.0)
    with pytest.raises(InvalidInputError):
        z_norm_report(np.ones(2), np.ones(2), p=1.0)
