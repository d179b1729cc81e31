"""Famílias esparsas de tempos de parada para o par (X, Y)."""

import logging

import numpy as np
import pandas as pd

from app.exceptions import (
    ConstructionError,
    InvalidInputError,
    SubordinationError,
)
from app.models import (
    NEVER,
    CadlagPath,
    PairSequences,
    Provenance,
    SparseMode,
    SparseValue,
    StoppingFamily,
    TreeProcess,
    TreeSpace,
)
from app.paths import check_differential_subordination, interleave
from app.schemas import (
    DominationReport,
    InductiveReport,
    LevelReport,
    MonotonicityReport,
    SparsityReport,
)
from app.settings import Settings
from app.treespace import (
    check_tree_subordination,
    closure,
    leaf_paths,
    node_paths,
)

logger = logging.getLogger(__name__)


def first_true(condition: np.ndarray) -> np.ndarray:
    """Primeiro índice verdadeiro por linha, NEVER se não houver."""
    found = condition.any(axis=1)
    return np.where(found, condition.argmax(axis=1), NEVER)


def refoot(dy: np.ndarray, dx: np.ndarray, x_at: np.ndarray) -> np.ndarray:
    """
    Aplica r = dY dX^T / |dX|^2 a X_T.

    r é a contração de posto um que leva o salto de X no salto de Y;
    r = 0 quando dX = 0.
    """
    size = np.sum(dx**2, axis=-1)
    scale = np.divide(
        np.sum(dx * x_at, axis=-1),
        size,
        out=np.zeros_like(size),
        where=size > 0,
    )
    return dy * scale[..., None]


def tree_sequences(
    space: TreeSpace, X: TreeProcess, Y: TreeProcess
) -> PairSequences:
    """Caminhos raiz-folha de (X, Y) com |X|_k = E[|X_L| | F_k] exato."""
    x = leaf_paths(space, X)
    norms = np.linalg.norm(X.values[-1], axis=1)
    reference = leaf_paths(space, closure(space, norms))[:, :, 0]
    return PairSequences(
        x=x,
        y=leaf_paths(space, Y),
        reference=reference,
        weights=space.leaf_probs.copy(),
        nodes=node_paths(space),
    )


def path_sequences(
    X: CadlagPath, Y: CadlagPath, reference: np.ndarray | None = None
) -> PairSequences:
    """
    Sequências intercaladas de um lote Monte Carlo.

    Sem `reference`, o limiar usa a amostra |X_t|; com ela (por exemplo
    `closure_reference_gaussian`), usa E[|X_T| | F_t].
    """
    x = interleave(X)
    if reference is None:
        reference = np.linalg.norm(x, axis=2)
    if reference.shape != x.shape[:2]:
        raise InvalidInputError(
            'A referência deve ter uma entrada por posição intercalada.'
        )
    return PairSequences(
        x=x,
        y=interleave(Y),
        reference=np.asarray(reference, dtype=float),
        weights=np.full(X.n_paths, 1.0 / X.n_paths),
    )


def sequence_max(seq: np.ndarray) -> np.ndarray:
    if seq.ndim == 2:
        return np.abs(seq).max(axis=1)
    return np.linalg.norm(seq, axis=2).max(axis=1)


def build_sparse_family_Y(
    X,
    Y,
    space: TreeSpace | None = None,
    reference: np.ndarray | None = None,
    threshold: float | None = None,
    level_budget: int | None = None,
) -> StoppingFamily:
    """
    Constrói a família esparsa {T^j} do par (X, Y).

    T^0 é a primeira posição com |X|_t > 0. Dado T^n, o iterado
    Y^n = r X_{T^n} + (Y - Y_{T^n}) parte do pé re-escalado e T^{n+1} é
    a primeira posição posterior em que |Y^n| ou |X| excede
    threshold * |X|_{T^n}. Cada passo discreto é tratado como salto, de
    modo que r é sempre a contração dY dX^T / |dX|^2 do passo de
    cruzamento.

    Args:
        X, Y:
            - TreeProcess (com `space`) ou CadlagPath (lote Monte Carlo).
        space (TreeSpace):
            - Árvore do motor exato; ausente no Monte Carlo.
        reference:
            - Referência |X|_t no Monte Carlo (padrão: amostra |X_t|).
        threshold:
            - Limiar do cruzamento (padrão SPARSE_THRESHOLD = 4).
        level_budget:
            - Número máximo de níveis (padrão LEVEL_BUDGET).

    Returns:
        StoppingFamily:
            - Índices das posições observadas (níveis da árvore ou
              sequência intercalada).

    Raises:
        SubordinationError:
            - Y não é diferencialmente subordinado a X.
        ConstructionError:
            - O orçamento de níveis foi esgotado.
    """
    settings = Settings()
    threshold = settings.SPARSE_THRESHOLD if threshold is None else threshold
    if space is not None:
        report = check_tree_subordination(space, X, Y)
        seqs = tree_sequences(space, X, Y)
    else:
        report = check_differential_subordination(X, Y)
        seqs = path_sequences(X, Y, reference)
    if not report.ok:
        raise SubordinationError(
            f'Y não é subordinado a X: violação '
            f'{report.worst_violation:.3g} '
            f'no caminho {report.worst_path}, tempo {report.worst_time}.'
        )
    return sparse_family_from_sequences(
        seqs, threshold, level_budget or settings.LEVEL_BUDGET
    )


def sparse_family_from_sequences(
    seqs: PairSequences, threshold: float = 4.0, level_budget: int = 200
) -> StoppingFamily:
    x, y, h = seqs.x, seqs.y, seqs.reference
    paths, length = h.shape
    positions = np.arange(length)
    x_norm = np.linalg.norm(x, axis=2)

    start = first_true(h > 0)
    rows = np.flatnonzero(start != NEVER)
    stops = [start]
    refs = [np.where(start != NEVER, h[np.arange(paths), start], 0.0)]
    feet = [np.zeros((paths, y.shape[2]))]
    feet[0][rows] = y[rows, start[rows]]
    offsets = [np.zeros_like(feet[0])]

    while True:
        current = stops[-1]
        active = current != NEVER
        if not active.any():
            break
        if len(stops) > level_budget:
            raise ConstructionError(
                f'Orçamento de {level_budget} níveis esgotado com '
                f'{int(active.sum())} caminhos ainda ativos.'
            )
        level = np.linalg.norm(y + offsets[-1][:, None, :], axis=2)
        crossing = (
            (np.maximum(level, x_norm) > threshold * refs[-1][:, None])
            & (positions[None, :] > current[:, None])
            & active[:, None]
        )
        nxt = first_true(crossing)
        rows = np.flatnonzero(nxt != NEVER)
        at = nxt[rows]
        foot = np.zeros_like(feet[0])
        foot[rows] = refoot(
            y[rows, at] - y[rows, at - 1],
            x[rows, at] - x[rows, at - 1],
            x[rows, at],
        )
        offset = np.zeros_like(foot)
        offset[rows] = foot[rows] - y[rows, at]
        ref = np.zeros(paths)
        ref[rows] = h[rows, at]
        stops.append(nxt)
        refs.append(ref)
        feet.append(foot)
        offsets.append(offset)

    stops, refs, feet = stops[:-1], refs[:-1], feet[:-1]
    if not stops:
        stops, refs = [np.empty(paths, dtype=int)], [np.empty(paths)]
        feet = [np.empty((paths, y.shape[2]))]
        stop_array = np.empty((paths, 0), dtype=int)
    else:
        stop_array = np.stack(stops, axis=1)
    nodes = None
    if seqs.nodes is not None:
        safe = np.where(stop_array == NEVER, 0, stop_array)
        nodes = np.where(
            stop_array == NEVER,
            NEVER,
            np.take_along_axis(seqs.nodes, safe, axis=1),
        )
    logger.debug('Família Y com %d níveis.', stop_array.shape[1])
    return StoppingFamily(
        stops=stop_array,
        references=np.stack(refs, axis=1)[:, : stop_array.shape[1]],
        feet=np.stack(feet, axis=1)[:, : stop_array.shape[1]],
        weights=seqs.weights,
        provenance=Provenance.Y,
        threshold=threshold,
        nodes=nodes,
    )


def _magnitude(values: np.ndarray, vector_axis: int) -> np.ndarray:
    if values.ndim > vector_axis:
        return np.linalg.norm(values, axis=vector_axis)
    return np.abs(values)


def sparse_operator(
    base: np.ndarray,
    family: StoppingFamily,
    mode: SparseMode = SparseMode.SAMPLE,
    space: TreeSpace | None = None,
) -> SparseValue:
    """
    Operador esparso S = soma_j contribuição_j em E_j.

    No modo `sample`, `base` é a sequência observada (N, M+1[, d]) e a
    contribuição é |base|_{T^j}. No modo `conditional`, `base` são os
    valores nas folhas e a contribuição é E[|base| | F_{T^j}], exata na
    árvore.
    """
    stops = family.stops
    events = family.events
    safe = np.where(events, stops, 0)
    if mode is SparseMode.CONDITIONAL:
        if space is None or family.nodes is None:
            raise InvalidInputError(
                'O modo conditional requer o motor de árvore.'
            )
        base = np.asarray(base, dtype=float)
        norms = _magnitude(base, 1)
        if norms.shape[0] != stops.shape[0]:
            raise InvalidInputError(
                'base deve ter um valor por folha da árvore.'
            )
        projected = closure(space, norms)
        contributions = np.zeros(stops.shape)
        for level, values in enumerate(projected.values):
            hit = events & (stops == level)
            contributions[hit] = values[family.nodes[hit], 0]
    else:
        base = np.asarray(base, dtype=float)
        magnitude = _magnitude(base, 2)
        if magnitude.shape[0] != stops.shape[0] or (
            events.any() and magnitude.shape[1] <= stops.max()
        ):
            raise InvalidInputError(
                'A família e o processo não compartilham a mesma grade.'
            )
        contributions = np.take_along_axis(magnitude, safe, axis=1)
    contributions = np.where(events, contributions, 0.0)
    return SparseValue(
        values=contributions.sum(axis=1), contributions=contributions
    )


def _bins(values: np.ndarray, count: int) -> np.ndarray:
    low, high = values.min(), values.max()
    if high <= low:
        return np.zeros(values.shape, dtype=int)
    edges = np.linspace(low, high, count + 1)
    return np.clip(np.digitize(values, edges[1:-1]), 0, count - 1)


def verify_sparsity(family: StoppingFamily) -> SparsityReport:
    """
    Testa P(A^j e E_{j+1}) <= P(A^j) / 2.

    Na árvore, A^j percorre os átomos (T^j, nó) de F_{T^j}, o que cobre
    toda união mensurável. No Monte Carlo, os átomos são as células de
    uma grade SPARSITY_BINS x SPARSITY_BINS sobre (|X|_{T^j}, T^j), e
    cada célula com n caminhos passa se a razão ficar abaixo de
    1/2 + SIGMA_BAND * sqrt(0.25 / n).
    """
    settings = Settings()
    exact = family.nodes is not None
    events = family.events
    levels = family.level_count
    max_ratio, witness_level, witness_atom = 0.0, None, None
    checked, empty, failed = 0, 0, False
    bins = settings.SPARSITY_BINS

    for j in range(levels):
        inside = events[:, j]
        if not inside.any():
            continue
        successor = (
            events[:, j + 1] if j + 1 < levels else np.zeros_like(inside)
        )
        weights = family.weights[inside]
        if exact:
            keys = family.stops[inside, j].astype(np.int64) * (
                family.nodes.max() + 1
            ) + family.nodes[inside, j]
        else:
            keys = _bins(family.references[inside, j], bins) * bins + _bins(
                family.stops[inside, j].astype(float), bins
            )
            empty += bins * bins - len(np.unique(keys))
        atoms, inverse = np.unique(keys, return_inverse=True)
        mass = np.bincount(inverse, weights=weights)
        hits = np.bincount(inverse, weights=weights * successor[inside])
        ratios = hits / mass
        checked += len(atoms)
        if exact:
            allowed = np.full(len(atoms), 0.5 + settings.EXACT_TOL)
        else:
            counts = np.bincount(inverse)
            allowed = 0.5 + settings.SIGMA_BAND * np.sqrt(0.25 / counts)
        failed = failed or bool(np.any(ratios > allowed))
        worst = int(np.argmax(ratios))
        if ratios[worst] > max_ratio:
            max_ratio = float(ratios[worst])
            witness_level = j
            key = int(atoms[worst])
            witness_atom = (
                f'T={key // (family.nodes.max() + 1)}, '
                f'nó={key % (family.nodes.max() + 1)}'
                if exact
                else f'célula={key}'
            )
    return SparsityReport(
        ok=not failed,
        max_ratio=max_ratio,
        witness_level=witness_level,
        witness_atom=witness_atom,
        atoms_checked=checked,
        empty_atoms=empty,
        exact=exact,
        note=None
        if exact
        else (
            f'Átomos de binning {bins}x{bins} de (|X|_T, T); subfamília '
            'finita de F_T, violações fora dela não são detectadas.'
        ),
    )


def verify_domination(
    ystar: np.ndarray,
    S: SparseValue | np.ndarray,
    constant: float = 8.0,
    tol: np.ndarray | float | None = None,
) -> DominationReport:
    """Y* <= constant * S caminho a caminho."""
    values = S.values if isinstance(S, SparseValue) else np.asarray(S)
    ystar = np.asarray(ystar, dtype=float)
    if ystar.shape != values.shape:
        raise InvalidInputError('Y* e S devem ter um valor por caminho.')
    if tol is None:
        tol = Settings().NUMERIC_TOL * (1.0 + ystar)
    slack = constant * values - ystar
    bad = slack < -tol
    ratios = np.divide(
        ystar, values, out=np.zeros_like(ystar), where=values > 0
    )
    witness = int(np.flatnonzero(bad)[0]) if bad.any() else None
    return DominationReport(
        ok=not bad.any(),
        constant=constant,
        worst_ratio=float(ratios.max()) if ratios.size else 0.0,
        violations=int(bad.sum()),
        witness_path=witness,
        slack=float(slack.min()) if slack.size else 0.0,
    )


def level_mass_report(family: StoppingFamily) -> LevelReport:
    """P(E_{j+1}) <= P(E_j) / 2, exato na árvore e com banda no MC."""
    settings = Settings()
    masses = family.level_masses()
    counts = family.events.sum(axis=0)
    ok, worst = True, 0.0
    for j in range(len(masses) - 1):
        ratio = masses[j + 1] / masses[j]
        worst = max(worst, float(ratio))
        if family.nodes is not None:
            allowed = 0.5 + settings.EXACT_TOL
        else:
            allowed = 0.5 + settings.SIGMA_BAND * np.sqrt(0.25 / counts[j])
        ok = ok and ratio <= allowed
    return LevelReport(
        ok=bool(ok), masses=masses.tolist(), worst_ratio=worst
    )


def verify_inductive_estimate(
    y: np.ndarray, family: StoppingFamily, constant: float = 8.0
) -> InductiveReport:
    """
    Estimativa indutiva Y* <= soma_{j<n} 8 |X|_{T^j} + Y^{n*} em cada n.

    Y^n = Y + (pé_n - Y_{T^n}) a partir de T^n e zero fora de E_n.
    """
    ystar = sequence_max(y)
    positions = np.arange(y.shape[1])
    events = family.events
    safe = np.where(events, family.stops, 0)
    rows = np.arange(y.shape[0])
    partial = np.zeros(y.shape[0])
    worst = -np.inf
    tol = Settings().NUMERIC_TOL * (1.0 + ystar)
    for n in range(family.level_count + 1):
        if n < family.level_count:
            offset = family.feet[:, n] - y[rows, safe[:, n]]
            norms = np.linalg.norm(y + offset[:, None, :], axis=2)
            after = positions[None, :] >= safe[:, n, None]
            tail = np.where(after, norms, 0.0).max(axis=1)
            tail = np.where(events[:, n], tail, 0.0)
        else:
            tail = np.zeros_like(ystar)
        worst = max(worst, float(np.max(ystar - partial - tail - tol)))
        if n < family.level_count:
            partial = partial + constant * np.where(
                events[:, n], family.references[:, n], 0.0
            )
    return InductiveReport(
        ok=worst <= 0, levels=family.level_count, worst_excess=worst
    )


def _as_infinite(stops: np.ndarray) -> np.ndarray:
    return np.where(stops == NEVER, np.inf, stops.astype(float))


def threshold_monotonicity(
    seqs: PairSequences, thresholds: list[float]
) -> MonotonicityReport:
    """
    Compara T^j entre limiares crescentes, caminho a caminho.

    O primeiro cruzamento T^1 é monótono no limiar; níveis mais
    profundos reiniciam de pés distintos e as inversões encontradas são
    apenas contadas.
    """
    thresholds = sorted(thresholds)
    families = [
        sparse_family_from_sequences(seqs, c, Settings().LEVEL_BUDGET)
        for c in thresholds
    ]
    ok, deeper, checked = True, 0, 0
    for low, high in zip(families, families[1:]):
        common = min(low.level_count, high.level_count)
        checked = max(checked, common)
        for j in range(common):
            earlier = _as_infinite(high.stops[:, j]) < _as_infinite(
                low.stops[:, j]
            )
            if j <= 1:
                ok = ok and not earlier.any()
            else:
                deeper += int(earlier.sum())
    return MonotonicityReport(
        ok=ok,
        thresholds=thresholds,
        levels_checked=checked,
        deeper_violations=deeper,
    )


def family_table(family: StoppingFamily) -> pd.DataFrame:
    """Triplas (caminho, nível, índice de parada) para auditoria."""
    paths, levels = np.nonzero(family.events)
    return pd.DataFrame({
        'path': paths,
        'level': levels,
        'stop': family.stops[paths, levels],
        'reference': family.references[paths, levels],
        'provenance': family.provenance.value,
    })
