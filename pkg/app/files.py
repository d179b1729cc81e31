"""Arquivos de árvore, tabelas CSV, manifestos e despejos de caminhos."""

import csv
import logging
from datetime import datetime
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.exceptions import InvalidInputError
from app.models import CadlagPath, StoppingFamily, TreeSpace
from app.paths import interleave, interleaved_times
from app.settings import Settings
from app.sparse import family_table
from app.treespace import tree_from_nodes

logger = logging.getLogger(__name__)

TREE_COLUMNS = ['level', 'parent', 'probability']
PACKAGES = ['numpy', 'scipy', 'pandas', 'pydantic', 'typer']


def read_tree_file(path: Path) -> TreeSpace:
    """
    Lê uma árvore em texto tabular, uma linha por nó.

    Args:
        path (Path):
            - Arquivo com as colunas `level,parent,probability`; a raiz
              tem nível 0 e pai -1. Linhas iniciadas por # são ignoradas.

    Returns:
        TreeSpace:
            - Espaço filtrado validado.

    Raises:
        InvalidInputError:
            - Arquivo ausente, colunas faltando ou árvore inválida.

    Example:
        level,parent,probability
        0,-1,1
        1,0,0.3
        1,0,0.7
    """
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f'Arquivo de árvore {path} não encontrado.')
    frame = pd.read_csv(path, comment='#', skipinitialspace=True)
    missing = set(TREE_COLUMNS) - set(frame.columns)
    if missing:
        raise InvalidInputError(
            f'Colunas ausentes em {path}: {", ".join(sorted(missing))}.'
        )
    return tree_from_nodes(
        frame['level'].to_numpy(),
        frame['parent'].to_numpy(),
        frame['probability'].to_numpy(),
    )


def write_tree_file(space: TreeSpace, path: Path) -> Path:
    rows = [
        {'level': level, 'parent': int(parent), 'probability': float(prob)}
        for level in range(space.levels + 1)
        for parent, prob in zip(
            space.parents[level], space.transitions[level]
        )
    ]
    return write_table(pd.DataFrame(rows, columns=TREE_COLUMNS), path)


def read_config_file(path: Path) -> dict[str, str]:
    """Arquivo plano `chave = valor`; comentários com #."""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f'Arquivo de configuração {path} ausente.')
    entries = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise InvalidInputError(
                f'{path}:{number}: esperado chave = valor, lido {raw!r}.'
            )
        key, value = (part.strip() for part in line.split('=', 1))
        entries[key.replace('-', '_')] = value
    return entries


def write_table(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        index=False,
        quoting=csv.QUOTE_MINIMAL,
        float_format='%.12g',
        lineterminator='\n',
    )
    logger.info('Tabela gravada em %s (%d linhas).', path, len(frame))
    return path


def _flatten(prefix: str, value) -> list[tuple[str, str]]:
    if isinstance(value, BaseModel):
        value = value.model_dump(mode='json')
    if isinstance(value, dict):
        return [
            item
            for key, inner in value.items()
            for item in _flatten(f'{prefix}.{key}' if prefix else key, inner)
        ]
    if isinstance(value, list | tuple):
        return [(prefix, ','.join(str(item) for item in value))]
    return [(prefix, str(value))]


def _versions() -> dict[str, str]:
    versions = {}
    for package in PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = 'ausente'
    return versions


def write_manifest(
    path: Path,
    command: str,
    config: BaseModel,
    results: dict | None = None,
    failures: list[str] | None = None,
) -> Path:
    """
    Manifesto plano `chave = valor` com configuração, tolerâncias,
    versões dos pacotes e resultados da execução.
    """
    entries = [
        ('command', command),
        ('timestamp', datetime.now().isoformat(timespec='seconds')),
        ('status', 'fail' if failures else 'pass'),
        ('failures', ','.join(failures or [])),
    ]
    entries += _flatten('config', config)
    entries += _flatten('settings', Settings().model_dump(mode='json'))
    entries += _flatten('versions', _versions())
    entries += _flatten('results', results or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(''.join(f'{key} = {value}\n' for key, value in entries))
    return path


def read_manifest(path: Path) -> dict[str, str]:
    return read_config_file(path)


def path_table(path: CadlagPath, max_paths: int = 10) -> pd.DataFrame:
    """Sequência intercalada (caminho, tempo, componentes, salto)."""
    shown = min(path.n_paths, max_paths)
    values = interleave(path)[:shown]
    times = interleaved_times(path.grid)
    positions = np.arange(values.shape[1])
    jump = np.zeros((shown, values.shape[1]), dtype=bool)
    jump[:, 2::2] = path.jump_mask[:shown, 1:]
    frame = pd.DataFrame({
        'path': np.repeat(np.arange(shown), values.shape[1]),
        'time': np.tile(times, shown),
        'left_limit': np.tile(positions % 2 == 1, shown),
        'jump': jump.reshape(-1),
    })
    for component in range(path.dim):
        frame[f'value_{component}'] = values[:, :, component].reshape(-1)
    return frame


def dump_paths(paths: dict[str, CadlagPath], directory: Path) -> list[Path]:
    return [
        write_table(path_table(path), Path(directory) / f'{name}.csv')
        for name, path in paths.items()
    ]


def write_family(family: StoppingFamily, path: Path) -> Path:
    return write_table(family_table(family), path)
