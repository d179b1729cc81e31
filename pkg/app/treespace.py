"""Motor exato de filtrações finitas (árvores com pesos)."""

import itertools
import logging
from collections.abc import Sequence

import numpy as np

from app.exceptions import BudgetExceededError, InvalidInputError
from app.models import NEVER, TreeProcess, TreeSpace, TreeStoppingTime
from app.schemas import SubordinationReport
from app.settings import Settings

logger = logging.getLogger(__name__)


def _check_row(row: np.ndarray, label: str, tol: float) -> None:
    if np.any(row <= 0) or abs(row.sum() - 1.0) > tol:
        raise InvalidInputError(
            f'Linha de transição {label} não é estocástica: '
            f'{row.tolist()}.'
        )


def _assemble(parents: list[np.ndarray], transitions: list[np.ndarray]):
    node_probs = [np.ones(1)]
    for par, trans in zip(parents[1:], transitions[1:]):
        node_probs.append(node_probs[-1][par] * trans)
    total = node_probs[-1].sum()
    if abs(total - 1.0) > Settings().EXACT_TOL * len(node_probs[-1]):
        raise InvalidInputError(
            f'Probabilidades das folhas somam {total}, não 1.'
        )
    return TreeSpace(
        parents=tuple(parents),
        transitions=tuple(transitions),
        node_probs=tuple(node_probs),
    )


def build_tree(
    depth: int,
    branching: Sequence[int] | None = None,
    probs: Sequence[Sequence[float]] | None = None,
) -> TreeSpace:
    """
    Constrói um espaço filtrado finito a partir da tabela de transições.

    Args:
        depth:
            - Número de passos de tempo (0 gera apenas a raiz).
        branching:
            - Número de filhos por nó em cada nível (padrão 2).
        probs:
            - Uma linha por nível (compartilhada pelos nós do nível) ou
              uma linha por nó interno em ordem de largura.

    Returns:
        TreeSpace:
            - Árvore válida com probabilidades das folhas calculadas.

    Raises:
        InvalidInputError:
            - Linha não estocástica, com o índice da linha.
        BudgetExceededError:
            - Profundidade acima de MAX_TREE_DEPTH ou folhas acima de
              MAX_LEAVES.

    Example:
        build_tree(2, [2, 2], [[0.3, 0.7], [0.5, 0.5], [0.2, 0.8]])
        -> leaf_probs = [0.15, 0.15, 0.14, 0.56]
    """
    settings = Settings()
    if depth < 0:
        raise InvalidInputError('A profundidade deve ser não negativa.')
    if depth > settings.MAX_TREE_DEPTH:
        raise BudgetExceededError(
            f'Profundidade {depth} excede o limite de '
            f'{settings.MAX_TREE_DEPTH}.'
        )
    branching = [2] * depth if branching is None else list(branching)
    if len(branching) != depth or any(b < 1 for b in branching):
        raise InvalidInputError(
            'branching deve ter um inteiro positivo por nível.'
        )
    widths = [1]
    for b in branching:
        widths.append(widths[-1] * b)
    if widths[-1] > settings.MAX_LEAVES:
        raise BudgetExceededError(
            f'{widths[-1]} folhas excedem o limite de {settings.MAX_LEAVES}.'
        )

    internal = sum(widths[:-1])
    if probs is None:
        rows = [np.full(b, 1.0 / b) for b in branching]
        per_level = True
    elif len(probs) == depth:
        rows = [np.asarray(row, dtype=float) for row in probs]
        per_level = True
    elif len(probs) == internal:
        rows = [np.asarray(row, dtype=float) for row in probs]
        per_level = False
    else:
        raise InvalidInputError(
            f'probs deve ter {depth} linhas (por nível) ou {internal} '
            '(por nó interno).'
        )

    parents = [np.array([-1])]
    transitions = [np.ones(1)]
    offset = 0
    for level, b in enumerate(branching):
        if per_level:
            row = rows[level]
            if row.shape != (b,):
                raise InvalidInputError(
                    f'Linha {level} deveria ter {b} entradas.'
                )
            _check_row(row, str(level), settings.EXACT_TOL)
            level_trans = np.tile(row, widths[level])
        else:
            level_rows = rows[offset : offset + widths[level]]
            for index, row in enumerate(level_rows):
                if row.shape != (b,):
                    raise InvalidInputError(
                        f'Linha {offset + index} deveria ter {b} entradas.'
                    )
                _check_row(row, str(offset + index), settings.EXACT_TOL)
            level_trans = np.concatenate(level_rows)
            offset += widths[level]
        parents.append(np.repeat(np.arange(widths[level]), b))
        transitions.append(level_trans)
    return _assemble(parents, transitions)


def tree_from_nodes(
    levels: Sequence[int],
    parents: Sequence[int],
    probs: Sequence[float],
) -> TreeSpace:
    """Monta a árvore a partir de linhas (nível, pai, probabilidade)."""
    levels = np.asarray(levels, dtype=int)
    parents = np.asarray(parents, dtype=int)
    probs = np.asarray(probs, dtype=float)
    if levels.size == 0 or np.count_nonzero(levels == 0) != 1:
        raise InvalidInputError('A árvore precisa de exatamente uma raiz.')
    depth = int(levels.max())
    settings = Settings()
    if depth > settings.MAX_TREE_DEPTH:
        raise BudgetExceededError(
            f'Profundidade {depth} excede o limite de '
            f'{settings.MAX_TREE_DEPTH}.'
        )
    level_parents = [np.array([-1])]
    level_trans = [np.ones(1)]
    for level in range(1, depth + 1):
        mask = levels == level
        par, trans = parents[mask], probs[mask]
        width = len(level_parents[-1])
        if par.size == 0 or par.min() < 0 or par.max() >= width:
            raise InvalidInputError(
                f'Nível {level} tem pais inválidos ou está vazio.'
            )
        counts = np.bincount(par, minlength=width)
        if np.any(counts == 0):
            raise InvalidInputError(
                f'Nó sem filhos no nível {level - 1} antes da última '
                'geração.'
            )
        for index in range(width):
            _check_row(
                trans[par == index],
                f'({level - 1}, {index})',
                settings.EXACT_TOL,
            )
        level_parents.append(par)
        level_trans.append(trans)
    if len(level_trans[-1]) > settings.MAX_LEAVES:
        raise BudgetExceededError(
            f'{len(level_trans[-1])} folhas excedem o limite de '
            f'{settings.MAX_LEAVES}.'
        )
    return _assemble(level_parents, level_trans)


def _as_columns(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values[:, None] if values.ndim == 1 else values


def average_up(
    space: TreeSpace, child_level: int, values: np.ndarray
) -> np.ndarray:
    """Média ponderada dos filhos, agrupada por pai."""
    par = space.parents[child_level]
    weights = space.transitions[child_level]
    out = np.zeros((space.width(child_level - 1),) + values.shape[1:])
    shape = (-1,) + (1,) * (values.ndim - 1)
    np.add.at(out, par, weights.reshape(shape) * values)
    return out


def closure(space: TreeSpace, leaf_values: np.ndarray) -> TreeProcess:
    """Martingal de fechamento E[leaf | F_k] em todos os nós."""
    leaf_values = _as_columns(leaf_values)
    if leaf_values.shape[0] != space.n_leaves:
        raise InvalidInputError(
            f'Esperados {space.n_leaves} valores de folha, '
            f'recebidos {leaf_values.shape[0]}.'
        )
    if not np.all(np.isfinite(leaf_values)):
        raise InvalidInputError('Valores de folha devem ser finitos.')
    values = [leaf_values]
    for level in range(space.levels, 0, -1):
        values.append(average_up(space, level, values[-1]))
    return TreeProcess(values=tuple(reversed(values)), martingale=True)


def is_martingale(
    space: TreeSpace, process: TreeProcess, tol: float | None = None
) -> bool:
    tol = Settings().EXACT_TOL if tol is None else tol
    return all(
        np.allclose(
            process.values[level],
            average_up(space, level + 1, process.values[level + 1]),
            rtol=0,
            atol=tol,
        )
        for level in range(space.levels)
    )


def node_paths(space: TreeSpace) -> np.ndarray:
    """Índices dos nós ao longo de cada caminho raiz-folha."""
    columns = [np.arange(space.n_leaves)]
    for level in range(space.levels, 0, -1):
        columns.append(space.parents[level][columns[-1]])
    return np.stack(columns[::-1], axis=1)


def leaf_paths(space: TreeSpace, process: TreeProcess) -> np.ndarray:
    nodes = node_paths(space)
    return np.stack(
        [process.values[k][nodes[:, k]] for k in range(space.levels + 1)],
        axis=1,
    )


def first_stop_levels(space: TreeSpace, T: TreeStoppingTime) -> np.ndarray:
    """Nível de parada de cada folha (NEVER se não para)."""
    nodes = node_paths(space)
    marked = np.stack(
        [T.marks[k][nodes[:, k]] for k in range(space.levels + 1)], axis=1
    )
    return np.where(marked.any(axis=1), marked.argmax(axis=1), NEVER)


def _stop(
    space: TreeSpace, values: tuple[np.ndarray, ...], T: TreeStoppingTime
) -> tuple[np.ndarray, ...]:
    stopped = [T.marks[0].copy()]
    out = [values[0].copy()]
    for level in range(1, space.levels + 1):
        par = space.parents[level]
        inherited = stopped[-1][par]
        out.append(
            np.where(inherited[:, None], out[-1][par], values[level])
        )
        stopped.append(inherited | T.marks[level])
    return tuple(out)


def conditional_expectation(
    space: TreeSpace,
    leaf_values: np.ndarray,
    T: TreeStoppingTime | None = None,
) -> TreeProcess:
    """
    Esperança condicional exata dos valores das folhas.

    Sem T devolve o martingal de fechamento; com T devolve o martingal
    parado E[leaf | F_{T ^ k}], que em cada nó de parada vale a média
    ponderada da subárvore.
    """
    process = closure(space, leaf_values)
    if T is None:
        return process
    return TreeProcess(values=_stop(space, process.values, T), martingale=True)


def stopped_leaf_values(
    space: TreeSpace, process: TreeProcess, T: TreeStoppingTime
) -> np.ndarray:
    """Valor de X_{T ^ L} em cada folha."""
    return _stop(space, process.values, T)[-1]


def _level_signs(space: TreeSpace, signs) -> list[np.ndarray]:
    if np.isscalar(signs):
        return [
            np.full(space.width(k), float(signs)) for k in range(space.levels)
        ]
    out = [np.asarray(row, dtype=float) for row in signs]
    if len(out) != space.levels or any(
        row.shape != (space.width(k),) for k, row in enumerate(out)
    ):
        raise InvalidInputError(
            'signs deve ter um multiplicador por nó interno.'
        )
    return out


def martingale_transform(
    space: TreeSpace,
    X: TreeProcess,
    signs,
    initial_sign: float = 1.0,
) -> TreeProcess:
    """
    Transformada de martingal com multiplicadores previsíveis.

    Args:
        space:
            - Árvore onde X está definido.
        X (TreeProcess):
            - Martingal a transformar.
        signs:
            - Escalar ou um multiplicador por nó interno, por nível;
              o multiplicador do nó v age nos incrementos de v para
              seus filhos.
        initial_sign:
            - Multiplicador de X_0.

    Returns:
        TreeProcess:
            - Y com Y_0 = initial_sign * X_0 e dY = sign * dX.

    Raises:
        InvalidInputError:
            - Se algum multiplicador tiver módulo maior que 1.
    """
    rows = _level_signs(space, signs)
    if abs(initial_sign) > 1 or any(np.any(np.abs(r) > 1) for r in rows):
        raise InvalidInputError(
            'Multiplicadores com módulo maior que 1 quebram a '
            'subordinação.'
        )
    values = [initial_sign * X.values[0]]
    for level in range(1, space.levels + 1):
        par = space.parents[level]
        step = X.values[level] - X.values[level - 1][par]
        values.append(values[-1][par] + rows[level - 1][par][:, None] * step)
    return TreeProcess(values=tuple(values), martingale=X.martingale)


def brackets(space: TreeSpace, process: TreeProcess) -> tuple[np.ndarray, ...]:
    """Colchete discreto [X, X]_k em cada nó."""
    out = [np.sum(process.values[0] ** 2, axis=1)]
    for level in range(1, space.levels + 1):
        par = space.parents[level]
        step = process.values[level] - process.values[level - 1][par]
        out.append(out[-1][par] + np.sum(step**2, axis=1))
    return tuple(out)


def check_tree_subordination(
    space: TreeSpace,
    X: TreeProcess,
    Y: TreeProcess,
    tol: float | None = None,
) -> SubordinationReport:
    """Verifica [X,X] - [Y,Y] não negativo e não decrescente nó a nó."""
    scale = 1.0 + max(float(b.max()) for b in brackets(space, X))
    tol = Settings().NUMERIC_TOL * scale if tol is None else tol
    gaps = [
        np.sum(X.values[0] ** 2, axis=1) - np.sum(Y.values[0] ** 2, axis=1)
    ]
    for level in range(1, space.levels + 1):
        par = space.parents[level]
        dx = X.values[level] - X.values[level - 1][par]
        dy = Y.values[level] - Y.values[level - 1][par]
        gaps.append(np.sum(dx**2, axis=1) - np.sum(dy**2, axis=1))
    worst, worst_level, worst_node, violations = 0.0, None, None, 0
    for level, gap in enumerate(gaps):
        bad = gap < -tol
        violations += int(bad.sum())
        if gap.size and -gap.min() > worst:
            worst = float(-gap.min())
            worst_level, worst_node = level, int(gap.argmin())
    return SubordinationReport(
        ok=violations == 0,
        worst_violation=worst,
        worst_time=None if worst_level is None else float(worst_level),
        worst_path=worst_node,
        violations=violations,
    )


def count_stopping_times(
    space: TreeSpace, max_depth: int | None = None
) -> float:
    """Conta antichains: a(v) = 2 no corte, a(v) = 1 + prod a(filhos)."""
    cap = space.levels if max_depth is None else min(max_depth, space.levels)
    counts = np.full(space.width(cap), 2.0)
    for level in range(cap, 0, -1):
        product = np.ones(space.width(level - 1))
        np.multiply.at(product, space.parents[level], counts)
        counts = 1.0 + product
    return float(counts[0])


def _children(space: TreeSpace, cap: int) -> list[list[np.ndarray]]:
    return [
        [
            np.flatnonzero(space.parents[level + 1] == index)
            for index in range(space.width(level))
        ]
        for level in range(cap)
    ]


def _empty_marks(space: TreeSpace) -> list[np.ndarray]:
    return [
        np.zeros(space.width(k), dtype=bool) for k in range(space.levels + 1)
    ]


def _marks_from_nodes(
    space: TreeSpace, nodes: Sequence[tuple[int, int]]
) -> TreeStoppingTime:
    marks = _empty_marks(space)
    for level, index in nodes:
        marks[level][index] = True
    return TreeStoppingTime(marks=tuple(marks))


def enumerate_stopping_times(
    space: TreeSpace, max_depth: int | None = None
) -> list[TreeStoppingTime]:
    """
    Lista completa dos tempos de parada adaptados (não aleatorizados).

    Inclui o tempo que nunca para. Acima de MAX_STOPPING_TIMES a
    enumeração é recusada; use sample_stopping_times.
    """
    settings = Settings()
    total = count_stopping_times(space, max_depth)
    if total > settings.MAX_STOPPING_TIMES:
        raise BudgetExceededError(
            f'{total:.3g} tempos de parada excedem o limite de '
            f'{settings.MAX_STOPPING_TIMES}; use sample_stopping_times '
            'para um limite inferior.'
        )
    cap = space.levels if max_depth is None else min(max_depth, space.levels)
    children = _children(space, cap)
    options: list[list[tuple]] = [
        [((cap, index),), ()] for index in range(space.width(cap))
    ]
    for level in range(cap - 1, -1, -1):
        options = [
            [((level, index),)]
            + [
                sum(combo, ())
                for combo in itertools.product(
                    *(options[child] for child in children[level][index])
                )
            ]
            for index in range(space.width(level))
        ]
    logger.debug('Enumerados %d tempos de parada.', len(options[0]))
    return [_marks_from_nodes(space, nodes) for nodes in options[0]]


def sample_stopping_times(
    space: TreeSpace,
    count: int | None = None,
    seed: int | None = None,
    max_depth: int | None = None,
) -> list[TreeStoppingTime]:
    """Subconjunto aleatório com semente fixa mais os tempos constantes."""
    settings = Settings()
    count = settings.SAMPLED_STOPPING_TIMES if count is None else count
    rng = np.random.default_rng(settings.SEED if seed is None else seed)
    cap = space.levels if max_depth is None else min(max_depth, space.levels)
    out = []
    for level in range(cap + 1):
        marks = _empty_marks(space)
        marks[level][:] = True
        out.append(TreeStoppingTime(marks=tuple(marks)))
    out.append(_marks_from_nodes(space, []))
    for _ in range(count):
        rate = rng.uniform()
        marks = [
            (rng.random(space.width(k)) < rate) & (k <= cap)
            for k in range(space.levels + 1)
        ]
        out.append(TreeStoppingTime(marks=tuple(marks)))
    return out


def random_tree(
    rng: np.random.Generator, depth: int, max_branching: int = 2
) -> TreeSpace:
    branching = rng.integers(
        min(2, max_branching), max_branching + 1, size=depth
    ).tolist()
    widths = np.cumprod([1, *branching])[:-1]
    rows = []
    for level, b in enumerate(branching):
        for _ in range(int(widths[level])):
            row = rng.dirichlet(np.ones(b)) + 0.05
            rows.append(row / row.sum())
    if depth == 0:
        return build_tree(0)
    return build_tree(depth, branching, rows)


def random_martingale(
    space: TreeSpace,
    rng: np.random.Generator,
    dim: int = 1,
    positive: bool = False,
) -> TreeProcess:
    leaves = rng.normal(size=(space.n_leaves, dim))
    if positive:
        leaves = np.exp(leaves)
    return closure(space, leaves)


def random_signs(
    space: TreeSpace, rng: np.random.Generator
) -> list[np.ndarray]:
    return [
        rng.uniform(-1, 1, size=space.width(k)) for k in range(space.levels)
    ]
