"""Motor Monte Carlo de caminhos càdlàg discretizados."""

import logging
import math

import numpy as np
from scipy import stats

from app.exceptions import BudgetExceededError, InvalidInputError
from app.models import (
    BracketPath,
    CadlagPath,
    JumpLaw,
    JumpSpec,
    Stream,
    TimeGrid,
)
from app.schemas import SubordinationReport
from app.settings import Settings

logger = logging.getLogger(__name__)

Seed = int | tuple[int, ...] | None


def make_rng(seed: Seed, stream: Stream) -> np.random.Generator:
    """
    Gerador independente por (semente, fluxo).

    A semente pode ser um inteiro ou uma tupla `(seed, block)`; lotes
    grandes são divididos em blocos e cada bloco recebe o seu próprio
    `SeedSequence`, o que torna o resultado independente da ordem de
    execução.
    """
    if seed is None:
        seed = Settings().SEED
    entropy = list(seed) if isinstance(seed, tuple | list) else [int(seed)]
    return np.random.default_rng(
        np.random.SeedSequence([*entropy, int(stream)])
    )


def from_values(grid: TimeGrid, values: np.ndarray) -> CadlagPath:
    """Caminho sem saltos a partir de valores (N, K+1, d)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.shape[1] != grid.steps + 1:
        raise InvalidInputError(
            f'Esperados {grid.steps + 1} pontos de grade, '
            f'recebidos {values.shape[1]}.'
        )
    return CadlagPath(
        grid=grid,
        values=values,
        pre_jump=values.copy(),
        jump_mask=np.zeros(values.shape[:2], dtype=bool),
    )


def _start(x0, paths: int, dim: int) -> np.ndarray:
    start = np.zeros((paths, dim))
    if x0 is not None:
        start[:] = np.asarray(x0, dtype=float)
    return start


def simulate_brownian(
    grid: TimeGrid,
    dim: int = 1,
    variance_rate: float = 1.0,
    seed: Seed = None,
    paths: int = 1,
    x0=None,
) -> CadlagPath:
    """
    Movimento browniano com incrementos gaussianos exatos.

    Args:
        grid (TimeGrid):
            - Grade uniforme de tempo.
        dim:
            - Dimensão d dos valores.
        variance_rate:
            - Variância por unidade de tempo de cada coordenada; 2
              reproduz o movimento vertical com E[B_t^2] = 2t.
        seed:
            - Semente (ou tupla semente, bloco).
        paths:
            - Número de caminhos do lote.
        x0:
            - Valor inicial (padrão zero).

    Returns:
        CadlagPath:
            - Lote (paths, K+1, dim) sem saltos.

    Raises:
        InvalidInputError:
            - variance_rate <= 0 ou dim < 1.
    """
    if variance_rate <= 0:
        raise InvalidInputError(
            'variance_rate deve ser positivo; use constant_path para o '
            'caminho constante.'
        )
    if dim < 1 or paths < 1:
        raise InvalidInputError('dim e paths devem ser positivos.')
    rng = make_rng(seed, Stream.DRIVER)
    increments = rng.normal(
        scale=math.sqrt(variance_rate * grid.dt),
        size=(paths, grid.steps, dim),
    )
    values = np.empty((paths, grid.steps + 1, dim))
    values[:, 0] = _start(x0, paths, dim)
    values[:, 1:] = values[:, :1] + np.cumsum(increments, axis=1)
    return from_values(grid, values)


def constant_path(grid: TimeGrid, value, paths: int = 1) -> CadlagPath:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    values = np.broadcast_to(
        value, (paths, grid.steps + 1, value.size)
    ).copy()
    return from_values(grid, values)


def simulate_exponential_martingale(
    grid: TimeGrid,
    volatility: float = 1.0,
    seed: Seed = None,
    paths: int = 1,
    x0: float = 1.0,
) -> CadlagPath:
    """Martingal positivo x0 * exp(sigma W_t - sigma^2 t / 2)."""
    if volatility <= 0 or x0 < 0:
        raise InvalidInputError('volatility > 0 e x0 >= 0 são exigidos.')
    rng = make_rng(seed, Stream.DRIVER)
    log_steps = (
        volatility * math.sqrt(grid.dt) * rng.normal(size=(paths, grid.steps))
        - 0.5 * volatility**2 * grid.dt
    )
    values = np.empty((paths, grid.steps + 1))
    values[:, 0] = x0
    values[:, 1:] = x0 * np.exp(np.cumsum(log_steps, axis=1))
    return from_values(grid, values)


def ou_step(
    x: np.ndarray, h, noise: np.ndarray, exact: bool = True
) -> np.ndarray:
    """Passo do OU com gerador Laplaciano - x . gradiente."""
    if exact:
        decay = np.exp(-h)
        return decay * x + np.sqrt(1.0 - decay**2) * noise
    return x - x * h + np.sqrt(2.0 * h) * noise


def simulate_ou(
    grid: TimeGrid,
    dim: int = 1,
    seed: Seed = None,
    paths: int = 1,
    x0=None,
    exact: bool = True,
) -> CadlagPath:
    """
    Ornstein-Uhlenbeck dX = -X dt + sqrt(2) dW, estacionário N(0, I).

    Sem x0, o ponto inicial é sorteado da medida invariante.
    """
    if not exact and grid.dt >= 1:
        raise InvalidInputError('Euler para OU exige dt < 1.')
    rng = make_rng(seed, Stream.DRIVER)
    values = np.empty((paths, grid.steps + 1, dim))
    if x0 is None:
        values[:, 0] = make_rng(seed, Stream.START).normal(size=(paths, dim))
    else:
        values[:, 0] = _start(x0, paths, dim)
    for k in range(grid.steps):
        values[:, k + 1] = ou_step(
            values[:, k], grid.dt, rng.normal(size=(paths, dim)), exact
        )
    return from_values(grid, values)


def bessel_step(
    x: np.ndarray,
    h: float,
    alpha: float,
    rng: np.random.Generator,
    exact: bool = True,
) -> np.ndarray:
    """
    Passo do processo de Bessel com gerador d^2/dx^2 + (2 alpha / x) d/dx.

    O passo exato usa a lei qui-quadrado não central com 2 alpha + 1
    graus de liberdade; o passo de Euler é refletido em zero.
    """
    if exact:
        return np.sqrt(
            2.0
            * h
            * rng.noncentral_chisquare(2 * alpha + 1, x**2 / (2.0 * h))
        )
    drift = 0.0
    if alpha > 0:
        drift = 2.0 * alpha / np.maximum(x, math.sqrt(4.0 * alpha * h))
    return np.abs(
        x + drift * h + math.sqrt(2.0 * h) * rng.normal(size=x.shape)
    )


def simulate_bessel(
    grid: TimeGrid,
    alpha: float,
    seed: Seed = None,
    paths: int = 1,
    x0: float = 1.0,
    exact: bool = True,
) -> CadlagPath:
    if alpha < 0 or x0 < 0:
        raise InvalidInputError('alpha e x0 devem ser não negativos.')
    rng = make_rng(seed, Stream.DRIVER)
    values = np.empty((paths, grid.steps + 1))
    values[:, 0] = x0
    for k in range(grid.steps):
        values[:, k + 1] = bessel_step(
            values[:, k], grid.dt, alpha, rng, exact
        )
    return from_values(grid, values)


def continuous_increments(path: CadlagPath) -> np.ndarray:
    return path.pre_jump[:, 1:] - path.values[:, :-1]


def jump_increments(path: CadlagPath) -> np.ndarray:
    return path.values[:, 1:] - path.pre_jump[:, 1:]


def quadratic_variation(path: CadlagPath) -> BracketPath:
    """
    Colchete [X, X] com [X, X]_0 = |X_0|^2.

    A parte contínua soma os incrementos ao quadrado entre pontos de
    grade e a parte de saltos soma |delta X|^2; `values` é a soma das
    duas.
    """
    paths = path.n_paths
    continuous = np.empty((paths, path.grid.steps + 1))
    continuous[:, 0] = np.sum(path.values[:, 0] ** 2, axis=1)
    continuous[:, 1:] = continuous[:, :1] + np.cumsum(
        np.sum(continuous_increments(path) ** 2, axis=2), axis=1
    )
    jumps = np.zeros_like(continuous)
    jumps[:, 1:] = np.cumsum(
        np.sum(jump_increments(path) ** 2, axis=2), axis=1
    )
    return BracketPath(
        grid=path.grid,
        values=continuous + jumps,
        continuous=continuous,
        jumps=jumps,
    )


def _check_same_grid(X: CadlagPath, Y: CadlagPath) -> None:
    if X.grid != Y.grid or X.n_paths != Y.n_paths:
        raise InvalidInputError(
            'X e Y devem compartilhar a grade e o número de caminhos.'
        )


def _shortfall(
    X: CadlagPath, Y: CadlagPath, tol
) -> tuple[np.ndarray, np.ndarray]:
    _check_same_grid(X, Y)
    steps = np.diff(interleave(X), axis=1)
    y_steps = np.diff(interleave(Y), axis=1)
    first = np.sum(X.values[:, 0] ** 2, axis=1) - np.sum(
        Y.values[:, 0] ** 2, axis=1
    )
    increments = np.sum(steps**2, axis=2) - np.sum(y_steps**2, axis=2)
    if tol is None:
        bracket = quadratic_variation(X).values[:, -1]
        tol = Settings().NUMERIC_TOL * (1.0 + bracket)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), first.shape)

    gap = np.concatenate(
        [first[:, None], first[:, None] + np.cumsum(increments, axis=1)],
        axis=1,
    )
    shortfall = np.maximum(
        np.concatenate([-first[:, None], -increments], axis=1), -gap
    )
    return shortfall, tol


def subordination_mask(
    X: CadlagPath, Y: CadlagPath, tol: float | None = None
) -> np.ndarray:
    """Caminhos em que Y é diferencialmente subordinado a X."""
    shortfall, tol = _shortfall(X, Y, tol)
    return ~(shortfall > tol[:, None]).any(axis=1)


def check_differential_subordination(
    X: CadlagPath, Y: CadlagPath, tol: float | None = None
) -> SubordinationReport:
    """
    Verifica [X,X] - [Y,Y] não negativo e não decrescente.

    A diferença é avaliada na sequência intercalada X_0, X_{1-}, X_1, ...
    de forma que cada salto é testado separadamente do trecho contínuo.
    A tolerância padrão é NUMERIC_TOL * (1 + [X,X]_K) por caminho.
    """
    shortfall, tol = _shortfall(X, Y, tol)
    bad = shortfall > tol[:, None]
    violations = int(bad.any(axis=1).sum())
    worst_path, worst_index = np.unravel_index(
        np.argmax(shortfall), shortfall.shape
    )
    worst = float(max(shortfall[worst_path, worst_index], 0.0))
    return SubordinationReport(
        ok=violations == 0,
        worst_violation=worst,
        worst_time=float(interleaved_times(X.grid)[worst_index]),
        worst_path=int(worst_path),
        violations=violations,
    )


def maximal_function(path: CadlagPath) -> np.ndarray:
    """X* por caminho, incluindo os limites à esquerda."""
    return np.maximum(
        np.linalg.norm(path.values, axis=2).max(axis=1),
        np.linalg.norm(path.pre_jump, axis=2).max(axis=1),
    )


def _free_slot(occupied: np.ndarray, index: int) -> int | None:
    last = len(occupied) - 1
    for offset in range(1, last + 1):
        for slot in (index + offset, index - offset):
            if 1 <= slot <= last and not occupied[slot]:
                return slot
    return None


def _jump_schedule(
    spec: JumpSpec,
    grid: TimeGrid,
    occupied: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    expected = spec.rate * grid.t_max
    limit = Settings().MAX_EXPECTED_JUMPS
    if expected > limit:
        raise BudgetExceededError(
            f'{expected:g} saltos esperados excedem o limite de {limit}.'
        )
    paths = occupied.shape[0]
    counts = rng.poisson(expected, size=paths)
    owner = np.repeat(np.arange(paths), counts)
    index = np.clip(
        np.ceil(rng.uniform(0, grid.t_max, owner.size) / grid.dt),
        1,
        grid.steps,
    ).astype(int)
    order = np.lexsort((index, owner))
    owner, index = owner[order], index[order]

    mask = np.zeros_like(occupied)
    collisions = 0
    for n, k in zip(owner, index):
        if occupied[n, k] or mask[n, k]:
            slot = _free_slot(occupied[n] | mask[n], k)
            if slot is None:
                raise BudgetExceededError(
                    f'Caminho {n} não tem índices livres para saltos.'
                )
            k = slot
            collisions += 1
        mask[n, k] = True
    return mask, collisions


def _amplitudes(
    spec: JumpSpec, count: int, dim: int, rng: np.random.Generator
) -> np.ndarray:
    match spec.law:
        case JumpLaw.NORMAL:
            return spec.scale * rng.normal(size=(count, dim))
        case JumpLaw.RADEMACHER:
            return spec.scale * rng.choice([-1.0, 1.0], size=(count, dim))
        case JumpLaw.LOGNORMAL:
            return np.exp(
                spec.scale * rng.normal(size=(count, dim))
                - 0.5 * spec.scale**2
            )


def _apply(
    path: CadlagPath,
    mask: np.ndarray,
    amplitudes: np.ndarray,
    multiplicative: bool,
    collisions: int,
) -> CadlagPath:
    rows, cols = np.nonzero(mask)
    if multiplicative:
        factors = np.ones_like(path.values)
        factors[rows, cols] = amplitudes
        inclusive = np.cumprod(factors, axis=1)
        values = path.values * inclusive
        pre_jump = path.pre_jump * (inclusive / factors)
    else:
        shifts = np.zeros_like(path.values)
        shifts[rows, cols] = amplitudes
        inclusive = np.cumsum(shifts, axis=1)
        values = path.values + inclusive
        pre_jump = path.pre_jump + (inclusive - shifts)
    diagnostics = dict(path.diagnostics)
    diagnostics['jump_collisions'] = (
        diagnostics.get('jump_collisions', 0) + collisions
    )
    diagnostics['jumps'] = diagnostics.get('jumps', 0) + len(rows)
    return CadlagPath(
        grid=path.grid,
        values=values,
        pre_jump=pre_jump,
        jump_mask=path.jump_mask | mask,
        diagnostics=diagnostics,
    )


def inject_jumps(
    path: CadlagPath, spec: JumpSpec, seed: Seed = None
) -> CadlagPath:
    """
    Acrescenta saltos de Poisson composto em pontos de grade.

    Args:
        path (CadlagPath):
            - Lote de caminhos a receber saltos.
        spec (JumpSpec):
            - Intensidade, lei e escala das amplitudes. A lei
              `lognormal` é multiplicativa com média 1 e preserva a
              positividade; as demais são aditivas.
        seed:
            - Semente (ou tupla semente, bloco).

    Returns:
        CadlagPath:
            - Caminho com saltos; colisões num mesmo índice são movidas
              para o índice livre mais próximo e contadas em
              `diagnostics['jump_collisions']`.

    Raises:
        BudgetExceededError:
            - rate * t_max acima de MAX_EXPECTED_JUMPS.
    """
    if spec.rate == 0:
        return path
    rng = make_rng(seed, Stream.JUMPS)
    mask, collisions = _jump_schedule(spec, path.grid, path.jump_mask, rng)
    amplitudes = _amplitudes(spec, int(mask.sum()), path.dim, rng)
    if collisions:
        logger.debug('%d colisões de saltos realocadas.', collisions)
    return _apply(
        path, mask, amplitudes, spec.law is JumpLaw.LOGNORMAL, collisions
    )


def inject_joint_jumps(
    X: CadlagPath, Y: CadlagPath, spec: JumpSpec, seed: Seed = None
) -> tuple[CadlagPath, CadlagPath]:
    """
    Saltos simultâneos em (X, Y).

    Com `subordination_cap`, cada salto de Y é m * delta X (truncado ou
    completado com zeros na dimensão de Y) com m uniforme em [-1, 1], o
    que garante |delta Y| <= |delta X|. Sem o limite, Y recebe amplitudes
    independentes da mesma lei.
    """
    _check_same_grid(X, Y)
    if spec.law is JumpLaw.LOGNORMAL:
        raise InvalidInputError(
            'Saltos conjuntos exigem uma lei aditiva (normal ou '
            'rademacher).'
        )
    if spec.rate == 0:
        return X, Y
    rng = make_rng(seed, Stream.JUMPS)
    mask, collisions = _jump_schedule(
        spec, X.grid, X.jump_mask | Y.jump_mask, rng
    )
    count = int(mask.sum())
    amplitudes = _amplitudes(spec, count, X.dim, rng)
    if spec.subordination_cap:
        factors = rng.uniform(-1.0, 1.0, size=(count, 1))
        partner = np.zeros((count, Y.dim))
        width = min(X.dim, Y.dim)
        partner[:, :width] = factors * amplitudes[:, :width]
    else:
        partner = _amplitudes(spec, count, Y.dim, rng)
    return (
        _apply(X, mask, amplitudes, False, collisions),
        _apply(Y, mask, partner, False, collisions),
    )


def subordinate_transform(
    X: CadlagPath,
    seed: Seed = None,
    dim_out: int | None = None,
    multipliers: np.ndarray | float | None = None,
) -> CadlagPath:
    """
    Transformada de martingal com multiplicadores previsíveis |m| <= 1.

    Sem `multipliers`, sorteia m uniforme em [-1, 1] por caminho e
    passo, independente para o trecho contínuo e para o salto. A
    coordenada k de Y recebe m * (coordenada k de X), com zeros além de
    dim(X).
    """
    dim_out = X.dim if dim_out is None else dim_out
    shape = (X.n_paths, X.grid.steps + 1)
    if multipliers is None:
        rng = make_rng(seed, Stream.MULTIPLIERS)
        cont = rng.uniform(-1.0, 1.0, size=shape)
        jump = rng.uniform(-1.0, 1.0, size=shape)
    else:
        cont = np.broadcast_to(np.asarray(multipliers, dtype=float), shape)
        jump = cont
    if np.any(np.abs(cont) > 1) or np.any(np.abs(jump) > 1):
        raise InvalidInputError(
            'Multiplicadores com módulo maior que 1 quebram a '
            'subordinação.'
        )

    def project(array: np.ndarray) -> np.ndarray:
        out = np.zeros(array.shape[:-1] + (dim_out,))
        width = min(dim_out, array.shape[-1])
        out[..., :width] = array[..., :width]
        return out

    start = cont[:, 0, None] * project(X.values[:, 0])
    y_cont = cont[:, 1:, None] * project(continuous_increments(X))
    y_jump = jump[:, 1:, None] * project(jump_increments(X))
    values = np.empty((X.n_paths, X.grid.steps + 1, dim_out))
    values[:, 0] = start
    values[:, 1:] = start[:, None] + np.cumsum(y_cont + y_jump, axis=1)
    pre_jump = values.copy()
    pre_jump[:, 1:] -= y_jump
    return CadlagPath(
        grid=X.grid,
        values=values,
        pre_jump=pre_jump,
        jump_mask=X.jump_mask.copy(),
    )


def coarsen(path: CadlagPath, factor: int) -> CadlagPath:
    """Subamostra a grade por um fator inteiro (caminhos sem saltos)."""
    if factor < 1 or path.grid.steps % factor:
        raise InvalidInputError(
            f'O fator {factor} deve dividir os {path.grid.steps} passos.'
        )
    if path.jump_mask.any():
        raise InvalidInputError('coarsen não aceita caminhos com saltos.')
    grid = TimeGrid(t_max=path.grid.t_max, dt=path.grid.dt * factor)
    return from_values(grid, path.values[:, ::factor])


def interleave(path: CadlagPath) -> np.ndarray:
    """Sequência X_0, X_{1-}, X_1, X_{2-}, ... de forma (N, 2K+1, d)."""
    out = np.empty((path.n_paths, 2 * path.grid.steps + 1, path.dim))
    out[:, 0] = path.values[:, 0]
    out[:, 1::2] = path.pre_jump[:, 1:]
    out[:, 2::2] = path.values[:, 1:]
    return out


def interleaved_times(grid: TimeGrid) -> np.ndarray:
    positions = np.arange(2 * grid.steps + 1)
    return np.ceil(positions / 2) * grid.dt


def remaining_steps(grid: TimeGrid) -> np.ndarray:
    """Passos contínuos restantes após cada posição intercalada."""
    positions = np.arange(2 * grid.steps + 1)
    return grid.steps - np.ceil(positions / 2).astype(int)


def folded_normal_mean(x: np.ndarray, variance: np.ndarray) -> np.ndarray:
    """E|x + G| para G ~ N(0, variance), com variance = 0 permitido."""
    x, variance = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(variance, dtype=float)
    )
    out = np.abs(x).astype(float)
    positive = variance > 0
    sd = np.sqrt(variance[positive])
    mean = x[positive]
    out[positive] = sd * math.sqrt(2.0 / math.pi) * np.exp(
        -(mean**2) / (2.0 * variance[positive])
    ) + mean * (1.0 - 2.0 * stats.norm.cdf(-mean / sd))
    return out


def closure_reference_gaussian(
    path: CadlagPath,
    variance_rate: float,
    spec: JumpSpec | None = None,
) -> np.ndarray:
    """
    E[|X_T| | F_s] exato para X escalar browniano com saltos normais.

    Avaliado em cada posição intercalada; o incremento restante é uma
    mistura de Poisson de normais, e E|x + G| segue a média da normal
    dobrada. Na posição X_{k-} o salto do índice k ainda está por vir.
    """
    if path.dim != 1:
        raise InvalidInputError(
            'A referência de fechamento exige X escalar.'
        )
    if spec is not None and spec.rate > 0 and spec.law is not JumpLaw.NORMAL:
        raise InvalidInputError(
            'A referência de fechamento exige saltos de lei normal.'
        )
    grid = path.grid
    seq = interleave(path)[:, :, 0]
    remaining = remaining_steps(grid) * grid.dt
    brownian = variance_rate * remaining
    if spec is None or spec.rate == 0:
        return folded_normal_mean(seq, brownian[None, :])

    positions = np.arange(seq.shape[1])
    jump_time = remaining + np.where(positions % 2 == 1, grid.dt, 0.0)
    top = int(stats.poisson.ppf(1 - 1e-15, spec.rate * grid.t_max)) + 2
    out = np.zeros_like(seq)
    for count in range(top):
        weight = stats.poisson.pmf(count, spec.rate * jump_time)
        out += weight[None, :] * folded_normal_mean(
            seq, (brownian + count * spec.scale**2)[None, :]
        )
    return out
