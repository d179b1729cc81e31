"""Baterias `quick` e `acceptance` sobre os executores de experimentos."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from app.commands.experiments import execute
from app.exceptions import InvalidInputError, ToolkitError
from app.files import write_table
from app.settings import Settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Criterion:
    id: str
    command: str
    options: dict = field(default_factory=dict)


ACCEPTANCE = [
    Criterion('1', 'sparsity', {'trials': 10_000, 'depth': 6}),
    Criterion('2-tree', 'dominationY', {'trials': 10_000, 'depth': 6}),
    Criterion(
        '2-mc',
        'dominationY',
        {'engine': 'mc', 'paths': 100_000, 'jump_law': 'normal'},
    ),
    *[
        Criterion(
            f'3-a{a:g}-{"jumps" if rate else "continuous"}',
            'weakType',
            {'paths': 100_000, 'a': a, 'jump_rate': rate},
        )
        for a in (0.0, 0.5)
        for rate in (0.0, 3.0)
    ],
    Criterion(
        '4-continuous',
        'dominationZ',
        {'paths': 100_000, 'mode': 'continuous', 'jump_rate': 0.0},
    ),
    Criterion(
        '4-jumps',
        'dominationZ',
        {'paths': 100_000, 'mode': 'jump', 'jump_rate': 3.0},
    ),
    Criterion('4-tree', 'dominationZ', {'engine': 'tree', 'trials': 2000}),
    Criterion('5', 'sparseWeighted', {'trials': 10_000, 'p': 2.0}),
    Criterion(
        '6', 'doobSweep', {'trials': 1000, 'exponents': [1.5, 2.0, 3.0]}
    ),
    Criterion(
        '7',
        'riesz',
        {
            'geometry': 'torus',
            'f': 'cos',
            'paths': 1_000_000,
            'bins': 64,
            'sensitivity': True,
        },
    ),
    Criterion(
        '8',
        'riesz',
        {
            'geometry': 'gauss',
            'f': 'He2',
            'paths': 1_000_000,
            'bins': 64,
            'tolerance': 0.15,
        },
    ),
    Criterion(
        '9', 'dimSweep', {'geometry': 'torus', 'dims': [1, 2, 4, 8]}
    ),
]

QUICK = [
    Criterion('1', 'sparsity', {'trials': 100, 'depth': 4}),
    Criterion('2-tree', 'dominationY', {'trials': 100, 'depth': 4}),
    Criterion(
        '2-mc',
        'dominationY',
        {'engine': 'mc', 'paths': 2000, 'jump_law': 'normal'},
    ),
    Criterion('3', 'weakType', {'paths': 5000, 'jump_rate': 3.0}),
    Criterion('4', 'dominationZ', {'paths': 2000, 'mode': 'jump'}),
    Criterion(
        '4-tree', 'dominationZ', {'engine': 'tree', 'trials': 50, 'depth': 4}
    ),
    Criterion('5', 'sparseWeighted', {'trials': 100, 'depth': 4}),
    Criterion('6', 'doobSweep', {'trials': 50, 'depth': 4}),
    Criterion('extrapolate', 'extrapolate', {}),
    Criterion(
        '7',
        'riesz',
        {
            'paths': 8192,
            'bins': 16,
            'y0': 2.0,
            'dt': 0.01,
            't_max': 100.0,
            'tolerance': 0.35,
        },
    ),
]

SUITES = {'acceptance': ACCEPTANCE, 'quick': QUICK}


def run_suite(
    name: str, seed: int | None = None, output: Path | None = None
) -> pd.DataFrame:
    """
    Executa uma bateria e grava `suite.csv` com uma linha por critério.

    Erros levantados por um critério são registrados como reprovação
    com a mensagem do erro; os demais critérios continuam.
    """
    if name not in SUITES:
        raise InvalidInputError(
            f'Bateria desconhecida {name!r}; use {" ou ".join(SUITES)}.'
        )
    seed = Settings().SEED if seed is None else seed
    output = Path(output or Settings().OUTPUT_DIR / 'suite' / name)
    rows = []
    for criterion in SUITES[name]:
        started = time.perf_counter()
        target = output / f'{criterion.id}-{criterion.command}'
        try:
            result = execute(
                criterion.command,
                {**criterion.options, 'seed': seed},
                output=target,
            )
            ok, detail = result.ok, ','.join(result.failures)
        except ToolkitError as error:
            ok, detail = False, error.detail
        rows.append({
            'criterion': criterion.id,
            'command': criterion.command,
            'ok': ok,
            'failures': detail,
        })
        logger.info(
            'Critério %s (%s): %s em %.1f s.',
            criterion.id,
            criterion.command,
            'aprovado' if ok else 'reprovado',
            time.perf_counter() - started,
        )
    table = pd.DataFrame(rows)
    write_table(table, output / 'suite.csv')
    return table
