"""Pesos martingais, característica A_p e estimativas com peso."""

import logging
import math
from collections.abc import Callable

import numpy as np
import pandas as pd

from app.exceptions import BudgetExceededError, InvalidInputError
from app.models import (
    NEVER,
    ApMode,
    StoppingFamily,
    TreeProcess,
    TreeSpace,
    TreeStoppingTime,
    WeightProcess,
)
from app.schemas import ApReport, WeightedReport
from app.settings import Settings
from app.treespace import (
    build_tree,
    closure,
    enumerate_stopping_times,
    first_stop_levels,
    leaf_paths,
    node_paths,
    sample_stopping_times,
)

logger = logging.getLogger(__name__)


def _check_exponent(p: float) -> None:
    if not 1 < p < math.inf:
        raise InvalidInputError(f'p = {p} deve estar em (1, inf).')


def weight_process(
    space: TreeSpace, leaf_weights: np.ndarray, p: float
) -> WeightProcess:
    """Peso w dado pelos valores terminais, estendido por médias."""
    _check_exponent(p)
    leaf_weights = np.asarray(leaf_weights, dtype=float).reshape(-1)
    if leaf_weights.shape[0] != space.n_leaves:
        raise InvalidInputError(
            f'Esperados {space.n_leaves} pesos, '
            f'recebidos {leaf_weights.shape[0]}.'
        )
    if np.any(leaf_weights <= 0) or not np.all(np.isfinite(leaf_weights)):
        raise InvalidInputError('O peso deve ser positivo e finito.')
    return WeightProcess(space=space, leaf_weights=leaf_weights, p=p)


def random_weight(
    space: TreeSpace, rng: np.random.Generator, p: float, spread: float
) -> WeightProcess:
    leaves = np.exp(rng.uniform(-spread, spread, size=space.n_leaves))
    return weight_process(space, leaves, p)


def weight_martingale(w: WeightProcess) -> TreeProcess:
    return closure(w.space, w.leaf_weights)


def dual_weight(w: WeightProcess) -> np.ndarray:
    """u = w^{-1/(p-1)}, de modo que u^p w = u."""
    return w.leaf_weights ** (-1.0 / (w.p - 1.0))


def ap_node_values(w: WeightProcess) -> list[np.ndarray]:
    """w_nó * (u_nó)^{p-1} em cada nó, com u_nó = E[u | nó]."""
    wm = weight_martingale(w).values
    um = closure(w.space, dual_weight(w)).values
    return [
        wm[k][:, 0] * um[k][:, 0] ** (w.p - 1.0)
        for k in range(w.space.levels + 1)
    ]


def _value_at(
    space: TreeSpace, node_values: list[np.ndarray], T: TreeStoppingTime
) -> float:
    levels = first_stop_levels(space, T)
    stopped = levels != NEVER
    if not stopped.any():
        return 1.0
    flat = np.concatenate(node_values)
    offsets = np.cumsum([0] + [len(v) for v in node_values[:-1]])
    rows = np.flatnonzero(stopped)
    nodes = node_paths(space)[rows, levels[rows]]
    value = float(flat[offsets[levels[rows]] + nodes].max())
    # folhas que nunca param contribuem w u^{p-1} = 1
    return value if stopped.all() else max(value, 1.0)


def ap_over_times(
    w: WeightProcess, times: list[TreeStoppingTime]
) -> tuple[float, TreeStoppingTime | None]:
    """Maior ess sup de w_T u_T^{p-1} entre os tempos dados."""
    node_values = ap_node_values(w)
    best, attaining = 1.0, None
    for T in times:
        value = _value_at(w.space, node_values, T)
        if value > best or attaining is None:
            best, attaining = max(best, value), T
    return best, attaining


def ap_characteristic(
    w: WeightProcess,
    exhaustive: bool = True,
    count: int | None = None,
    seed: int | None = None,
) -> ApReport:
    """
    Característica Q_p(w) = sup_T ||w_T u_T^{p-1}||_inf.

    Com `exhaustive`, enumera todos os tempos de parada quando o total
    cabe em MAX_STOPPING_TIMES. Acima disso o supremo é tomado sobre os
    tempos que param num único nó: o ess sup de qualquer T é o máximo
    sobre os nós da sua fronteira, logo esse valor também é exato. Sem
    `exhaustive`, uma amostra de tempos dá apenas um limite inferior.

    Args:
        w (WeightProcess):
            - Peso na árvore e expoente p.
        exhaustive (bool):
            - Modo exato (padrão) ou limite inferior amostrado.
        count, seed:
            - Tamanho e semente da amostra no modo amostrado.

    Returns:
        ApReport:
            - Q_p, modo e os nós (nível, índice) do tempo que o atinge.

    Example:
        Moeda justa de profundidade 1 com w terminal (2, 1/2) e p = 2:
        na raiz E[w] E[1/w] = 25/16, nas folhas o produto é 1, então
        Q_2 = 25/16.
    """
    space = w.space
    if not exhaustive:
        times = sample_stopping_times(space, count=count, seed=seed)
        value, attaining = ap_over_times(w, times)
        logger.warning(
            'Q_p amostrado sobre %d tempos: apenas limite inferior.',
            len(times),
        )
        return ApReport(
            q_p=value,
            p=w.p,
            mode=ApMode.SAMPLED,
            attaining=attaining.nodes if attaining else [],
            candidates=len(times),
        )
    try:
        times = enumerate_stopping_times(space)
    except BudgetExceededError:
        logger.debug('Q_p exato pelos tempos de nó único.')
        return ap_node_maximum(w)
    value, attaining = ap_over_times(w, times)
    return ApReport(
        q_p=value,
        p=w.p,
        mode=ApMode.EXACT,
        attaining=attaining.nodes if attaining else [],
        candidates=len(times),
    )


def ap_node_maximum(w: WeightProcess) -> ApReport:
    """Q_p pelos tempos que param num único nó; igual ao supremo."""
    node_values = ap_node_values(w)
    best = max(
        (float(values.max()), level, int(values.argmax()))
        for level, values in enumerate(node_values)
    )
    return ApReport(
        q_p=max(1.0, best[0]),
        p=w.p,
        mode=ApMode.EXACT,
        attaining=[(best[1], best[2])],
        candidates=sum(len(values) for values in node_values),
    )


def ap_lower_bound_samples(w_terminal: np.ndarray, p: float) -> ApReport:
    """E[w] E[u]^{p-1} a partir de amostras: o tempo T = 0 apenas."""
    _check_exponent(p)
    w_terminal = np.asarray(w_terminal, dtype=float)
    if np.any(w_terminal <= 0):
        raise InvalidInputError('O peso deve ser positivo.')
    u = w_terminal ** (-1.0 / (p - 1.0))
    return ApReport(
        q_p=max(1.0, float(w_terminal.mean() * u.mean() ** (p - 1.0))),
        p=p,
        mode=ApMode.SAMPLED,
        candidates=1,
    )


def weighted_norm(
    values: np.ndarray,
    w: WeightProcess | np.ndarray,
    p: float | None = None,
) -> float:
    """
    (E[|values|^p w])^{1/p}.

    Na árvore `values` tem um valor por folha e a esperança usa as
    probabilidades das folhas; com `w` em array, a média é amostral.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = np.linalg.norm(values, axis=1)
    values = np.abs(values)
    if isinstance(w, WeightProcess):
        p = w.p if p is None else p
        probs, weights = w.space.leaf_probs, w.leaf_weights
    else:
        weights = np.asarray(w, dtype=float)
        probs = np.full(len(values), 1.0 / len(values))
    _check_exponent(p)
    return float(np.sum(probs * values**p * weights) ** (1.0 / p))


def doob_constant(p: float) -> float:
    """C_p = p^{p'} / (p - 1)."""
    _check_exponent(p)
    return p ** (p / (p - 1.0)) / (p - 1.0)


def extrapolate_bound(
    N_r: Callable[[float], float], r: float, p: float, B: float
) -> float:
    """
    Constante N_p(B) extrapolada de uma cota N_r(A) em L^r.

    Para p > r, N_p(B) = 2^{1/r} N_r(2 c_{p'}^{(p-r)/(p-1)} B); para
    p < r, N_p(B) = 2^{(r-1)/r} N_r(2^{r-1} (c_p^{p-r} B)^{(r-1)/(p-1)}),
    com c_q = q^{q'}/(q-1) a constante de Doob.
    """
    _check_exponent(r)
    _check_exponent(p)
    if B < 1:
        raise InvalidInputError('A característica B deve ser >= 1.')
    if p == r:
        return float(N_r(B))
    if p > r:
        dual = p / (p - 1.0)
        argument = 2.0 * doob_constant(dual) ** ((p - r) / (p - 1.0)) * B
        return 2.0 ** (1.0 / r) * float(N_r(argument))
    argument = 2.0 ** (r - 1.0) * (doob_constant(p) ** (p - r) * B) ** (
        (r - 1.0) / (p - 1.0)
    )
    return 2.0 ** ((r - 1.0) / r) * float(N_r(argument))


def sparse_values(family: StoppingFamily) -> np.ndarray:
    """S(X) = soma_j E[|X_L| | F_{T^j}] por caminho."""
    return np.where(family.events, family.references, 0.0).sum(axis=1)


def _report(lhs: float, rhs: float, q_p: float, p: float) -> WeightedReport:
    tol = Settings().NUMERIC_TOL * (1.0 + rhs)
    return WeightedReport(
        ok=lhs <= rhs + tol,
        lhs=lhs,
        rhs=rhs,
        ratio=lhs / rhs if rhs > 0 else 0.0,
        q_p=q_p,
        p=p,
    )


def verify_weighted_sparse(
    space: TreeSpace,
    X: TreeProcess,
    family: StoppingFamily,
    w: WeightProcess,
    q_p: float | None = None,
) -> WeightedReport:
    """
    ||S(X)||_{L^p(w)} <= N_p(Q_p) ||X||_{L^p(w)} na árvore.

    Em p = 2, N_2(A) = 8A; nos demais expoentes a constante é a
    extrapolada a partir de r = 2, com expoente max{1, 1/(p-1)} em Q_p.
    """
    if family.nodes is None:
        raise InvalidInputError('A família deve vir do motor de árvore.')
    q_p = ap_node_maximum(w).q_p if q_p is None else q_p
    lhs = weighted_norm(sparse_values(family), w)
    constant = extrapolate_bound(lambda A: 8.0 * A, 2.0, w.p, q_p)
    rhs = constant * weighted_norm(X.values[-1], w)
    return _report(lhs, rhs, q_p, w.p)


def verify_weighted_sparse_L2(
    space: TreeSpace,
    X: TreeProcess,
    family: StoppingFamily,
    w: WeightProcess,
) -> WeightedReport:
    """||S(X)||_{L^2(w)} <= 8 Q_2(w) ||X||_{L^2(w)}."""
    if w.p != 2:
        raise InvalidInputError('verify_weighted_sparse_L2 exige p = 2.')
    return verify_weighted_sparse(space, X, family, w)


def verify_doob_weighted(
    space: TreeSpace,
    X: TreeProcess,
    w: WeightProcess,
    q_p: float | None = None,
) -> WeightedReport:
    """||X*||_{L^p(w)} <= C_p Q_p^{1/(p-1)} ||X||_{L^p(w)}, exato."""
    q_p = ap_node_maximum(w).q_p if q_p is None else q_p
    xstar = np.linalg.norm(leaf_paths(space, X), axis=2).max(axis=1)
    lhs = weighted_norm(xstar, w)
    rhs = (
        doob_constant(w.p)
        * q_p ** (1.0 / (w.p - 1.0))
        * weighted_norm(X.values[-1], w)
    )
    return _report(lhs, rhs, q_p, w.p)


def degenerate_weight_trend(
    max_depth: int = 8, p: float = 2.0
) -> pd.DataFrame:
    """
    Sonda de expoente com pesos de dois pontos cada vez mais degenerados.

    Na árvore diádica de profundidade n a primeira folha tem peso 4^{-n}
    e as demais peso 1; X é o fechamento de u 1_{primeira folha}. As
    razões ||X*|| / (Q^e ||X||) são reportadas para e = 1/(p-1) e
    e = 1/(2(p-1)); apenas a primeira deve permanecer limitada.
    """
    _check_exponent(p)
    rows = []
    for depth in range(1, max_depth + 1):
        space = build_tree(depth, [2] * depth)
        leaves = np.ones(space.n_leaves)
        leaves[0] = 4.0**-depth
        w = weight_process(space, leaves, p)
        u = dual_weight(w)
        indicator = np.zeros(space.n_leaves)
        indicator[0] = u[0]
        X = closure(space, indicator)
        q_p = ap_node_maximum(w).q_p
        xstar = np.abs(leaf_paths(space, X)[:, :, 0]).max(axis=1)
        ratio = weighted_norm(xstar, w) / weighted_norm(X.values[-1], w)
        rows.append({
            'depth': depth,
            'q_p': q_p,
            'ratio_sharp': ratio / q_p ** (1.0 / (p - 1.0)),
            'ratio_half': ratio / q_p ** (1.0 / (2.0 * (p - 1.0))),
        })
    logger.info('Sonda de pesos degenerados com %d profundidades.', len(rows))
    return pd.DataFrame(rows)
