import numpy as np
import pytest
from freezegun import freeze_time

from app.exceptions import InvalidInputError
from app.files import (
    dump_paths,
    path_table,
    read_config_file,
    read_manifest,
    read_tree_file,
    write_family,
    write_manifest,
    write_tree_file,
)
from app.paths import inject_jumps, simulate_brownian
from app.schemas import ExtrapolateConfig
from app.sparse import build_sparse_family_Y
from app.treespace import closure
from tests.conftest import JumpSpecFactory


def test_tree_file_round_trip(skewed_tree, tmp_path):
    """Teste de escrita e leitura do arquivo de árvore."""
    path = write_tree_file(skewed_tree, tmp_path / 'tree.csv')

    space = read_tree_file(path)

    np.testing.assert_allclose(space.leaf_probs, skewed_tree.leaf_probs)
    assert path.read_text().splitlines()[0] == 'level,parent,probability'


def test_tree_file_with_comments(tmp_path):
    path = tmp_path / 'coin.csv'
    path.write_text(
        '# moeda viciada\nlevel,parent,probability\n0,-1,1\n1,0,0.3\n1,0,0.7\n'
    )

    space = read_tree_file(path)

    np.testing.assert_allclose(space.leaf_probs, [0.3, 0.7])


def test_tree_file_missing_columns(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('level,parent\n0,-1\n')

    with pytest.raises(InvalidInputError) as error:
        read_tree_file(path)

    assert 'probability' in error.value.detail


def test_tree_file_not_found(tmp_path):
    with pytest.raises(InvalidInputError):
        read_tree_file(tmp_path / 'nada.csv')


def test_read_config_file(tmp_path):
    path = tmp_path / 'run.conf'
    path.write_text(
        '# weak type\nengine = mc\npaths=1000  # curto\n\nt-max = 2\n'
    )

    assert read_config_file(path) == {
        'engine': 'mc',
        'paths': '1000',
        't_max': '2',
    }


def test_read_config_file_rejects_line_without_equals(tmp_path):
    path = tmp_path / 'run.conf'
    path.write_text('engine mc\n')

    with pytest.raises(InvalidInputError) as error:
        read_config_file(path)

    assert ':1:' in error.value.detail


@freeze_time('2026-01-15 10:30:00')
def test_manifest(tmp_path):
    """O manifesto grava configuração, status e resultados planos."""
    path = write_manifest(
        tmp_path / 'manifest.txt',
        'extrapolate',
        ExtrapolateConfig(p=3.0),
        results={'values': [1.5, 2.0], 'nested': {'levels': 2}},
        failures=['monotone'],
    )

    manifest = read_manifest(path)

    assert manifest['timestamp'] == '2026-01-15T10:30:00'
    assert manifest['status'] == 'fail'
    assert manifest['failures'] == 'monotone'
    assert manifest['config.p'] == '3.0'
    assert manifest['results.values'] == '1.5,2.0'
    assert manifest['results.nested.levels'] == '2'
    assert manifest['settings.SPARSE_THRESHOLD'] == '4.0'
    assert 'versions.numpy' in manifest


def test_path_table(grid):
    X = simulate_brownian(grid, dim=2, seed=3, paths=12)
    X = inject_jumps(X, JumpSpecFactory(rate=10.0), seed=3)

    table = path_table(X)

    assert table['path'].nunique() == 10
    assert len(table) == 10 * (2 * grid.steps + 1)
    assert {'value_0', 'value_1', 'left_limit', 'jump'} <= set(table)
    assert not table.loc[table['left_limit'], 'jump'].any()


def test_dump_paths_and_family(grid, coin, tmp_path):
    X = simulate_brownian(grid, seed=3, paths=2)
    written = dump_paths({'X': X}, tmp_path / 'dump')
    tree_X = closure(coin, np.array([1.0, -1.0]))
    family = build_sparse_family_Y(tree_X, tree_X, coin)

    family_path = write_family(family, tmp_path / 'dump' / 'family_Y.csv')

    assert [path.name for path in written] == ['X.csv']
    assert family_path.read_text().splitlines()[0] == (
        'path,level,stop,reference,provenance'
    )
