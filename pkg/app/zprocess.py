"""Semimartingal Z, submartingal X~ = X + A e a família esparsa de Z."""

import logging

import numpy as np

from app.exceptions import (
    ConstructionError,
    InvalidInputError,
    StabilityError,
)
from app.models import (
    NEVER,
    CadlagPath,
    DriftSpec,
    Provenance,
    StoppingFamily,
    SubmartingalePath,
    TimeGrid,
    TreeProcess,
    TreeSpace,
    ZMode,
    ZPath,
    ZSequences,
)
from app.paths import (
    constant_path,
    continuous_increments,
    interleave,
    jump_increments,
    remaining_steps,
    subordination_mask,
)
from app.schemas import (
    DecayReport,
    DominationReport,
    TelescopingReport,
    WeakTypePoint,
    WeakTypeReport,
    WeightedReport,
)
from app.settings import Settings
from app.sparse import first_true, refoot, sequence_max, verify_domination
from app.treespace import closure, leaf_paths, node_paths

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-9


def _validate(matrices: np.ndarray) -> np.ndarray:
    matrices = np.asarray(matrices, dtype=float)
    asymmetry = np.abs(matrices - np.swapaxes(matrices, -1, -2)).max()
    if asymmetry > SYMMETRY_TOL:
        raise StabilityError(
            f'V não é simétrica (assimetria {asymmetry:.3g}).'
        )
    top = np.linalg.eigvalsh(matrices).max()
    if top > SYMMETRY_TOL:
        raise StabilityError(
            f'V deve ser semidefinida negativa; autovalor {top:.3g}.'
        )
    return matrices


def drift_operator(
    drift: DriftSpec, step: int = 0, state: np.ndarray | None = None
) -> np.ndarray:
    """
    Operador G = V - aI do passo `step`.

    Returns:
        np.ndarray:
            - (d, d) para V constante ou por passo; (N, d, d) quando V
              vem de `source(state)`.

    Raises:
        StabilityError:
            - V não simétrica ou com autovalor positivo.
    """
    if drift.source is not None:
        if state is None:
            raise InvalidInputError('DriftSpec com source exige o estado.')
        V = drift.source(np.asarray(state, dtype=float))
    elif drift.matrix is None:
        V = np.zeros((drift.dim, drift.dim))
    else:
        matrix = np.asarray(drift.matrix, dtype=float)
        V = matrix[step] if matrix.ndim == 3 else matrix
    V = _validate(V)
    if V.shape[-1] != drift.dim:
        raise InvalidInputError(
            f'V tem dimensão {V.shape[-1]}, esperada {drift.dim}.'
        )
    return V - drift.a * np.eye(drift.dim)


def check_stability(G: np.ndarray, dt: float) -> None:
    spectral = float(np.abs(np.linalg.eigvalsh(G)).max(initial=0.0))
    if dt * spectral >= 1:
        raise StabilityError(
            f'Euler instável: dt * (a + max|eig V|) = {dt * spectral:.3g}; '
            f'use dt < {1.0 / spectral:.3g}.'
        )


def apply_operator(G: np.ndarray | None, z: np.ndarray) -> np.ndarray:
    if G is None:
        return np.zeros_like(z)
    if G.ndim == 2:
        return z @ G.T
    return np.einsum('nij,nj->ni', G, z)


def _step_operators(
    drift: DriftSpec, grid: TimeGrid, state: np.ndarray | None
) -> list[np.ndarray]:
    varying = drift.source is not None or (
        drift.matrix is not None and np.ndim(drift.matrix) == 3
    )
    if not varying:
        G = drift_operator(drift)
        check_stability(G, grid.dt)
        return [G * grid.dt] * grid.steps
    operators = []
    for k in range(grid.steps):
        G = drift_operator(
            drift, k, None if state is None else state[:, k]
        )
        check_stability(G, grid.dt)
        operators.append(G * grid.dt)
    return operators


def _start_vector(z0, paths: int, dim: int) -> np.ndarray:
    z0 = np.asarray(z0, dtype=float)
    start = np.broadcast_to(z0, (paths, dim)).astype(float)
    return start.copy()


def evolve_Z(
    Y: CadlagPath,
    drift: DriftSpec,
    z0=0.0,
    state: np.ndarray | None = None,
    xtilde0: np.ndarray | None = None,
) -> ZPath:
    """
    Resolve dZ = (V - aI) Z dt + dY por Euler explícito.

    O passo contínuo é Z_{k+1-} = Z_k + dt (V_k - aI) Z_k + (Y_{k+1-} -
    Y_k); o salto de Y em k+1 é somado depois, de modo que delta Z =
    delta Y em todo salto.

    Args:
        Y (CadlagPath):
            - Lote que dirige a equação.
        drift (DriftSpec):
            - Curvatura (V_t, a).
        z0:
            - Z_0, vetor (d,) ou (N, d).
        state:
            - Estado (N, K+1, m) passado a `drift.source`.
        xtilde0:
            - X~_0 por caminho, para exigir |Z_0| <= X~_0.

    Raises:
        StabilityError:
            - dt * (a + max|eig V|) >= 1, ou V inválida.
        InvalidInputError:
            - Dimensões incompatíveis ou |Z_0| > X~_0.
    """
    if drift.dim != Y.dim:
        raise InvalidInputError(
            f'DriftSpec de dimensão {drift.dim} para Y de dimensão {Y.dim}.'
        )
    z = _start_vector(z0, Y.n_paths, Y.dim)
    if xtilde0 is not None:
        bound = np.broadcast_to(np.asarray(xtilde0, float), (Y.n_paths,))
        if np.any(np.linalg.norm(z, axis=1) > bound + Settings().NUMERIC_TOL):
            raise InvalidInputError('|Z_0| deve ser no máximo X~_0.')
    operators = _step_operators(drift, Y.grid, state)
    dyc = continuous_increments(Y)
    dyj = jump_increments(Y)
    values = np.empty_like(Y.values)
    pre_jump = np.empty_like(Y.values)
    values[:, 0] = pre_jump[:, 0] = z
    for k, G in enumerate(operators):
        z = z + apply_operator(G, z) + dyc[:, k]
        pre_jump[:, k + 1] = z
        z = z + dyj[:, k]
        values[:, k + 1] = z
    return ZPath(
        Z=CadlagPath(
            grid=Y.grid,
            values=values,
            pre_jump=pre_jump,
            jump_mask=Y.jump_mask.copy(),
        ),
        driver=Y,
        drift=drift,
        state=state,
    )


def norm_decay_check(
    drift: DriftSpec,
    z0,
    grid: TimeGrid,
    state: np.ndarray | None = None,
) -> DecayReport:
    """|W_t| não crescente para a evolução homogênea W' = (V - aI) W."""
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    zero = constant_path(grid, np.zeros(drift.dim), paths=z0.shape[0])
    W = evolve_Z(zero, drift, z0, state=state).Z.values
    norms = np.linalg.norm(W, axis=2)
    increase = np.diff(norms, axis=1)
    worst = float(increase.max(initial=0.0))
    ok = worst <= Settings().NUMERIC_TOL
    return DecayReport(
        ok=ok,
        worst_increase=worst,
        step=None if ok else int(np.argmax(increase.max(axis=0)) + 1),
    )


def _split(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    size = np.linalg.norm(y, axis=-1) if y.ndim > x.ndim else np.abs(y)
    return np.abs(x), size


def bellman_U(x, y) -> np.ndarray:
    """
    U(x, y) = |y|^2 - |x|^2 dentro do losango |x| + |y| < 1 e
    1 - 2|x| fora dele (fronteira incluída).

    `y` é escalar quando tem a forma de `x` e vetor no último eixo
    quando tem um eixo a mais.
    """
    ax, ay = _split(x, y)
    return np.where(ax + ay < 1, ay**2 - ax**2, 1.0 - 2.0 * ax)


def bellman_V(x, y) -> np.ndarray:
    ax, ay = _split(x, y)
    return np.where(ax + ay < 1, -2.0 * ax, 1.0 - 2.0 * ax)


def bellman_jump_gap(x, y, h, k) -> np.ndarray:
    """
    U(x+h, y+k) - U(x, y) - U_x h - U_y . k - (|k|^2 - h^2).

    Não positivo para x >= 0 e |x| + |y| < 1 sempre que 0 <= x + h <= 1;
    nulo quando o salto permanece no losango.
    """
    x, h = np.asarray(x, dtype=float), np.asarray(h, dtype=float)
    y, k = np.asarray(y, dtype=float), np.asarray(k, dtype=float)
    vector = y.ndim > x.ndim
    dot = np.sum(y * k, axis=-1) if vector else y * k
    k2 = np.sum(k * k, axis=-1) if vector else k * k
    return (
        bellman_U(x + h, y + k)
        - bellman_U(x, y)
        + 2.0 * x * h
        - 2.0 * dot
        - (k2 - h * h)
    )


def build_submartingale(X: CadlagPath, a: float = 0.0) -> SubmartingalePath:
    """
    X~ = X + A com A_k = A_{k-1} + a dt X~_{k-1}.

    O incremento de A em (t_{k-1}, t_k] é conhecido em t_{k-1}, A é
    contínua e não decrescente, e E[X~_K | F_k] = X~_k (1 + a dt)^{K-k}.
    """
    if a < 0:
        raise InvalidInputError('a deve ser não negativo.')
    if X.dim != 1:
        raise InvalidInputError('O submartingal exige X escalar.')
    if X.values.min() < 0 or X.pre_jump.min() < 0:
        raise InvalidInputError('X deve ser não negativo.')
    rate = a * X.grid.dt
    A = np.zeros(X.values.shape[:2])
    for k in range(1, X.grid.steps + 1):
        A[:, k] = A[:, k - 1] * (1.0 + rate) + rate * X.values[:, k - 1, 0]
    return SubmartingalePath(
        X=X,
        A=CadlagPath(
            grid=X.grid,
            values=A[:, :, None],
            pre_jump=A[:, :, None].copy(),
            jump_mask=np.zeros_like(X.jump_mask),
        ),
        a=a,
    )


def hypothesis_mask(sub: SubmartingalePath, zpath: ZPath) -> np.ndarray:
    """Caminhos que satisfazem as hipóteses do par (X~, Z)."""
    tol = Settings().NUMERIC_TOL
    ok = subordination_mask(sub.X, zpath.driver)
    ok &= (np.diff(sub.A.values[:, :, 0], axis=1) >= -tol).all(axis=1)
    ok &= sub.X.values[:, :, 0].min(axis=1) >= -tol
    ok &= sub.X.pre_jump[:, :, 0].min(axis=1) >= -tol
    z0 = np.linalg.norm(zpath.Z.values[:, 0], axis=1)
    ok &= z0 <= sub.xtilde.values[:, 0, 0] + tol
    return ok


def _running_level(sub: SubmartingalePath, zpath: ZPath) -> np.ndarray:
    xt = interleave(sub.xtilde)[:, :, 0]
    return np.linalg.norm(interleave(zpath.Z), axis=2) + xt


def weak_type_experiment(
    sub: SubmartingalePath, zpath: ZPath, lambdas: list[float]
) -> WeakTypeReport:
    """
    Curva P(sup_t |Z_t| + X~_t >= lambda) contra 2 ||X~||_1 / lambda.

    ||X~||_1 é a média amostral de X~ no instante final. Cada lambda
    passa quando p - 3 se(p) <= cota + 3 se(cota). Caminhos que violam
    as hipóteses são excluídos e contados; qualquer exclusão reprova o
    experimento. O diagnóstico E U(X~, Z) é avaliado no primeiro
    instante em que |Z| + X~ >= 1.
    """
    band = Settings().SIGMA_BAND
    keep = hypothesis_mask(sub, zpath)
    excluded = int((~keep).sum())
    if excluded:
        logger.error('%d caminhos violam as hipóteses.', excluded)
    if not keep.any():
        raise ConstructionError('Nenhum caminho satisfaz as hipóteses.')
    level = _running_level(sub, zpath)[keep]
    terminal = sub.xtilde.values[keep, -1, 0]
    n = len(terminal)
    norm = float(terminal.mean())
    spread = float(terminal.std(ddof=1)) if n > 1 else 0.0
    supremum = level.max(axis=1)

    points = []
    for lam in lambdas:
        empirical = float(np.mean(supremum >= lam))
        sigma = float(np.sqrt(empirical * (1.0 - empirical) / n))
        bound = 2.0 * norm / lam
        bound_sigma = 2.0 * spread / np.sqrt(n) / lam
        points.append(
            WeakTypePoint(
                lam=lam,
                empirical=empirical,
                bound=bound,
                sigma=sigma,
                ok=empirical - band * sigma <= bound + band * bound_sigma,
            )
        )

    hit = first_true(level >= 1.0)
    stop = np.where(hit == NEVER, level.shape[1] - 1, hit)
    rows = np.arange(n)
    xt = interleave(sub.xtilde)[keep][rows, stop, 0]
    zt = interleave(zpath.Z)[keep][rows, stop]
    bellman = bellman_U(xt, zt)
    report = WeakTypeReport(
        ok=excluded == 0 and all(point.ok for point in points),
        points=points,
        norm=norm,
        excluded=excluded,
        bellman_mean=float(bellman.mean()),
        bellman_stderr=float(bellman.std() / np.sqrt(n)),
    )
    logger.info(
        'Tipo fraco: %d lambdas, ||X~||_1 = %.4g, E U = %.3g.',
        len(points),
        norm,
        report.bellman_mean,
    )
    return report


def _scaled(path: CadlagPath, factor: float) -> CadlagPath:
    return CadlagPath(
        grid=path.grid,
        values=path.values / factor,
        pre_jump=path.pre_jump / factor,
        jump_mask=path.jump_mask.copy(),
        diagnostics=dict(path.diagnostics),
    )


def scale_batch(
    sub: SubmartingalePath, zpath: ZPath, factor: float
) -> tuple[SubmartingalePath, ZPath]:
    """(X~ / factor, Z / factor); Z continua a solução da equação."""
    if factor <= 0:
        raise InvalidInputError('O fator de escala deve ser positivo.')
    scaled = SubmartingalePath(
        X=_scaled(sub.X, factor), A=_scaled(sub.A, factor), a=sub.a
    )
    return scaled, ZPath(
        Z=_scaled(zpath.Z, factor),
        driver=_scaled(zpath.driver, factor),
        drift=zpath.drift,
        state=zpath.state,
    )


def z_sequences(
    sub: SubmartingalePath,
    zpath: ZPath,
    reference: np.ndarray | None = None,
) -> ZSequences:
    """
    Sequências intercaladas do par (X~, Z) no Monte Carlo.

    A referência padrão é o fechamento exato X~_s (1 + a dt)^{passos
    restantes}. Os subpassos ímpares são saltos e não recebem deriva.
    """
    grid = sub.X.grid
    xtilde = interleave(sub.xtilde)[:, :, 0]
    if reference is None:
        growth = (1.0 + sub.a * grid.dt) ** remaining_steps(grid)
        reference = xtilde * growth[None, :]
    operators = _step_operators(zpath.drift, grid, zpath.state)
    interleaved = []
    for G in operators:
        interleaved.extend([G, None])
    return ZSequences(
        x=interleave(sub.X),
        xtilde=xtilde,
        z=interleave(zpath.Z),
        dy=np.diff(interleave(zpath.driver), axis=1),
        reference=np.asarray(reference, dtype=float),
        operators=interleaved,
        weights=np.full(sub.X.n_paths, 1.0 / sub.X.n_paths),
    )


def _evolve_sequence(
    z0: np.ndarray, dy: np.ndarray, operators: list
) -> np.ndarray:
    out = np.empty((dy.shape[0], dy.shape[1] + 1, dy.shape[2]))
    out[:, 0] = z = z0
    for s, G in enumerate(operators):
        z = z + apply_operator(G, z) + dy[:, s]
        out[:, s + 1] = z
    return out


def tree_z_sequences(
    space: TreeSpace,
    X: TreeProcess,
    Y: TreeProcess,
    drift: DriftSpec | None = None,
    z0=None,
    dt: float = 1.0,
) -> ZSequences:
    """
    Análogo exato na árvore: X~ = X martingal escalar não negativo.

    Cada passo da árvore é um salto com deriva dt (V - aI) aplicada ao
    valor anterior; a referência é o fechamento E[X_L | F_k].
    """
    if X.dim != 1 or min(v.min() for v in X.values) < 0:
        raise InvalidInputError(
            'No motor de árvore X~ deve ser escalar e não negativo.'
        )
    drift = drift or DriftSpec(dim=Y.dim)
    x = leaf_paths(space, X)
    y = leaf_paths(space, Y)
    start = y[:, 0] if z0 is None else _start_vector(z0, len(y), Y.dim)
    operators = []
    for k in range(space.levels):
        G = drift_operator(drift, k)
        check_stability(G, dt)
        operators.append(G * dt)
    dy = np.diff(y, axis=1)
    reference = leaf_paths(space, closure(space, X.values[-1][:, 0]))
    return ZSequences(
        x=x,
        xtilde=x[:, :, 0],
        z=_evolve_sequence(start, dy, operators),
        dy=dy,
        reference=reference[:, :, 0],
        operators=operators,
        weights=space.leaf_probs.copy(),
        nodes=node_paths(space),
    )


def build_sparse_family_Z(
    Xtilde: SubmartingalePath | ZSequences,
    Z: ZPath | None = None,
    mode: ZMode = ZMode.CONTINUOUS,
    threshold: float | None = None,
    level_budget: int | None = None,
) -> StoppingFamily:
    """
    Família esparsa {T^n} de Z com a decomposição Z = soma_n Z~^n.

    T^0 = 0. O nível n parte do pé em T^n e evolui Z~^n pela mesma
    equação, recebendo os incrementos de Y enquanto a janela está
    aberta; T^{n+1} é a primeira posição s > T^n com |Z~^n_s| ou X~_s
    acima de threshold * E[X~ | F_{T^n}]. Fechada a janela, Z~^n segue
    a evolução homogênea. No modo `jump` o cruzamento é dividido por r:
    Z~^n perde r X_s, que vira o pé do nível seguinte; no modo
    `continuous` o pé seguinte é zero.

    Args:
        Xtilde:
            - SubmartingalePath (com `Z`) ou ZSequences já montadas.
        Z (ZPath):
            - Solução de `evolve_Z` no Monte Carlo.
        mode (ZMode):
            - Tratamento do incremento de cruzamento.

    Returns:
        StoppingFamily:
            - Proveniência Z; `diagnostics` traz `crossing` (soma de
              |dY| nos cruzamentos), `level_star`, `z_star`,
              `telescoping_residual` e `decay_increase`.

    Raises:
        ConstructionError:
            - Orçamento de níveis esgotado ou resíduo da telescopagem
              acima de 1e-8 (1 + |Z|).
    """
    settings = Settings()
    threshold = settings.SPARSE_THRESHOLD if threshold is None else threshold
    level_budget = level_budget or settings.LEVEL_BUDGET
    if isinstance(Xtilde, ZSequences):
        seqs = Xtilde
    else:
        if Z is None:
            raise InvalidInputError('Z é obrigatório no Monte Carlo.')
        seqs = z_sequences(Xtilde, Z)

    paths, length = seqs.xtilde.shape
    dim = seqs.z.shape[2]
    rows_all = np.arange(paths)
    h = seqs.reference

    stop = np.zeros(paths, dtype=int)
    foot = seqs.z[:, 0].copy()
    stops, refs, feet, stars = [], [], [], []
    total = np.zeros_like(seqs.z)
    crossing_sum = np.zeros(paths)
    worst_increase = 0.0

    while (stop != NEVER).any():
        if len(stops) >= level_budget:
            raise ConstructionError(
                f'Orçamento de {level_budget} níveis esgotado com '
                f'{int((stop != NEVER).sum())} caminhos ainda ativos.'
            )
        active = stop != NEVER
        ref = np.where(active, h[rows_all, np.where(active, stop, 0)], 0.0)
        limit = threshold * ref
        tilde = np.zeros((paths, dim))
        closed = ~active
        nxt = np.full(paths, NEVER)
        next_foot = np.zeros((paths, dim))
        star = np.zeros(paths)
        previous = np.zeros(paths)
        for s in range(length):
            if s > 0:
                opened = (stop < s) & active & ~closed
                tilde = (
                    tilde
                    + apply_operator(seqs.operators[s - 1], tilde)
                    + np.where(opened[:, None], seqs.dy[:, s - 1], 0.0)
                )
            starting = active & (stop == s)
            tilde[starting] = foot[starting]
            norms = np.linalg.norm(tilde, axis=1)
            cross = (
                active
                & ~closed
                & (stop < s)
                & (np.maximum(norms, seqs.xtilde[:, s]) > limit)
            )
            if cross.any():
                rows = np.flatnonzero(cross)
                nxt[rows] = s
                crossing_sum[rows] += np.linalg.norm(
                    seqs.dy[rows, s - 1], axis=1
                )
                if mode is ZMode.JUMP:
                    split = refoot(
                        seqs.dy[rows, s - 1],
                        seqs.x[rows, s] - seqs.x[rows, s - 1],
                        seqs.x[rows, s],
                    )
                    tilde[rows] -= split
                    next_foot[rows] = split
                norms = np.linalg.norm(tilde, axis=1)
            decaying = closed & active
            worst_increase = max(
                worst_increase,
                float(
                    np.max(norms[decaying] - previous[decaying], initial=0.0)
                ),
            )
            closed = closed | cross
            star = np.maximum(star, norms)
            previous = norms
            total[:, s] += tilde

        stops.append(stop)
        refs.append(ref)
        feet.append(np.where(active[:, None], foot, 0.0))
        stars.append(star)
        stop, foot = nxt, next_foot

    stop_array = (
        np.stack(stops, axis=1)
        if stops
        else np.empty((paths, 0), dtype=int)
    )
    scale = 1.0 + np.linalg.norm(seqs.z, axis=2)
    residual = np.linalg.norm(total - seqs.z, axis=2) / scale
    worst = float(residual.max(initial=0.0))
    if worst > 1e-8:
        path = int(np.unravel_index(np.argmax(residual), residual.shape)[0])
        raise ConstructionError(
            f'Telescopagem falhou: resíduo {worst:.3g} no caminho {path}.'
        )
    nodes = None
    if seqs.nodes is not None:
        safe = np.where(stop_array == NEVER, 0, stop_array)
        nodes = np.where(
            stop_array == NEVER,
            NEVER,
            np.take_along_axis(seqs.nodes, safe, axis=1),
        )
    logger.info(
        'Família Z (%s) com %d níveis; resíduo %.2g.',
        mode.value,
        stop_array.shape[1],
        worst,
    )
    return StoppingFamily(
        stops=stop_array,
        references=np.stack(refs, axis=1) if refs else np.empty((paths, 0)),
        feet=np.stack(feet, axis=1) if feet else np.empty((paths, 0, dim)),
        weights=seqs.weights,
        provenance=Provenance.Z,
        threshold=threshold,
        nodes=nodes,
        diagnostics={
            'mode': mode,
            'crossing': crossing_sum,
            'level_star': (
                np.stack(stars, axis=1) if stars else np.empty((paths, 0))
            ),
            'z_star': sequence_max(seqs.z),
            'telescoping_residual': worst,
            'decay_increase': worst_increase,
        },
    )


def telescoping_report(family: StoppingFamily) -> TelescopingReport:
    residual = family.diagnostics['telescoping_residual']
    return TelescopingReport(
        ok=residual <= Settings().TELESCOPING_TOL, residual=residual
    )


def verify_z_domination(family: StoppingFamily) -> DominationReport:
    """
    Z* <= 8 S(X~) no modo `jump`; Z* <= 4 S(X~) + soma dos |dY| de
    cruzamento no modo `continuous`.

    No modo `continuous` o relatório também traz a cota literal
    Z* <= 4 S(X~): `literal_violations`, `literal_worst_ratio` e
    `crossing_share`, a fração da cota ajustada vinda dos cruzamentos.
    Essa fração é erro de discretização e vai a zero com dt.
    """
    S = np.where(family.events, family.references, 0.0).sum(axis=1)
    diagnostics = family.diagnostics
    zstar = diagnostics['z_star']
    if diagnostics['mode'] is ZMode.JUMP:
        return verify_domination(zstar, S, 2.0 * family.threshold)
    constant = family.threshold
    crossing = diagnostics['crossing']
    literal = verify_domination(zstar, S, constant)
    adjusted = verify_domination(zstar, S + crossing / constant, constant)
    bound = float(np.sum(constant * S + crossing))
    return adjusted.model_copy(
        update={
            'literal_violations': literal.violations,
            'literal_worst_ratio': literal.worst_ratio,
            'crossing_share': (
                float(crossing.sum()) / bound if bound > 0 else 0.0
            ),
        }
    )


def z_norm_report(
    zstar: np.ndarray,
    xtilde_terminal: np.ndarray,
    p: float = 2.0,
    constant: float = 64.0,
    weights: np.ndarray | None = None,
    q_p: float = 1.0,
) -> WeightedReport:
    """
    ||Z*||_{L^p(w)} <= constant * Q_p * ||X~_T||_{L^p(w)}.

    A constante de referência 64 combina a dominação por 8 S(X~) com a
    cota 8 do operador esparso em Q_2 = 1.
    """
    if p <= 1:
        raise InvalidInputError('p deve estar em (1, inf).')
    zstar = np.asarray(zstar, dtype=float)
    w = (
        np.ones_like(zstar)
        if weights is None
        else np.asarray(weights, dtype=float)
    )
    lhs = float(np.mean(w * zstar**p) ** (1.0 / p))
    rhs = float(
        constant * q_p * np.mean(w * np.asarray(xtilde_terminal) ** p)
        ** (1.0 / p)
    )
    return WeightedReport(
        ok=lhs <= rhs,
        lhs=lhs,
        rhs=rhs,
        ratio=lhs / rhs if rhs > 0 else 0.0,
        q_p=q_p,
        p=p,
    )
