"""Estimador Monte Carlo do vetor de Riesz e oráculos determinísticos."""

import logging
import math
import re

import numpy as np
import pandas as pd
from numpy.polynomial import hermite_e
from scipy import stats

from app.exceptions import InvalidInputError
from app.models import (
    NEVER,
    BackgroundState,
    DriftSpec,
    Geometry,
    GeometryKind,
    Mode,
    RieszEstimate,
    Stream,
    TargetFunction,
    TimeGrid,
)
from app.paths import Seed, bessel_step, make_rng, ou_step
from app.schemas import CheckResult
from app.settings import Settings
from app.weights import ap_lower_bound_samples
from app.zprocess import apply_operator, check_stability, drift_operator

logger = logging.getLogger(__name__)

STEP_CAP = 0.1
TWO_PI = 2.0 * math.pi

SUPPORTED = {
    GeometryKind.TORUS: ('cos', 'sin'),
    GeometryKind.GAUSS: ('hermite',),
    GeometryKind.BESSEL: (),
}

TERM = re.compile(
    r'^(?:(?P<coef>[-+]?(?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?)\*)?'
    r'(?P<name>cos|sin|He)(?P<index>\d+|\([\d,]+\))?$'
)


def parse_function(text: str, geom: Geometry) -> TargetFunction:
    """
    Lê uma soma finita de modos, por exemplo `cos`, `0.5*sin2`,
    `cos(1,2)` no toro ou `He2 + 3*He(1,1)` em Gauss.

    Índices mais curtos que a dimensão são completados com zeros.
    """
    source = text.replace(' ', '')
    if source in {'0', 'zero'}:
        return TargetFunction(name=text, terms=())
    terms = []
    for chunk in source.split('+'):
        match = TERM.match(chunk)
        if match is None:
            raise InvalidInputError(f'Termo inválido: {chunk!r}.')
        name = match['name']
        kind = 'hermite' if name == 'He' else name
        raw = match['index']
        if raw is None:
            if kind == 'hermite':
                raise InvalidInputError('He exige o grau, por exemplo He2.')
            index = (1,)
        else:
            index = tuple(int(v) for v in raw.strip('()').split(','))
        if len(index) > geom.dim:
            raise InvalidInputError(
                f'Índice {index} maior que a dimensão {geom.dim}.'
            )
        index = index + (0,) * (geom.dim - len(index))
        coefficient = float(match['coef']) if match['coef'] else 1.0
        terms.append(Mode(coefficient=coefficient, kind=kind, index=index))
    function = TargetFunction(name=text, terms=tuple(terms))
    _check_supported(geom, function)
    return function


def _check_supported(geom: Geometry, f: TargetFunction) -> None:
    allowed = SUPPORTED[geom.kind]
    for term in f.terms:
        if term.kind not in allowed:
            names = ', '.join(
                f'{kind.value}: {"/".join(SUPPORTED[kind]) or "nenhuma"}'
                for kind in SUPPORTED
            )
            raise InvalidInputError(
                f'Modo {term.kind} não suportado em {geom.kind.value}. '
                f'Famílias suportadas: {names}.'
            )


def is_mean_zero(f: TargetFunction) -> bool:
    return all(any(term.index) for term in f.terms)


def _hermite(degree: int, x: np.ndarray) -> np.ndarray:
    if degree < 0:
        return np.zeros_like(x)
    coefficients = np.zeros(degree + 1)
    coefficients[degree] = 1.0
    return hermite_e.hermeval(x, coefficients)


def _hermite_mode(
    index: tuple[int, ...], x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    factors = np.stack(
        [_hermite(k, x[:, j]) for j, k in enumerate(index)], axis=1
    )
    value = factors.prod(axis=1)
    grad = np.empty_like(x)
    for j, k in enumerate(index):
        others = np.delete(factors, j, axis=1).prod(axis=1)
        grad[:, j] = k * _hermite(k - 1, x[:, j]) * others
    return value, grad


def _frequency(term: Mode) -> float:
    k = np.asarray(term.index, dtype=float)
    if term.kind == 'hermite':
        return math.sqrt(k.sum())
    return float(np.linalg.norm(k))


def _mode(term: Mode, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if term.kind == 'hermite':
        return _hermite_mode(term.index, x)
    k = np.asarray(term.index, dtype=float)
    phase = x @ k
    if term.kind == 'cos':
        return np.cos(phase), -np.sin(phase)[:, None] * k
    return np.sin(phase), np.cos(phase)[:, None] * k


def poisson_extension(
    geom: Geometry,
    f: TargetFunction,
    x: np.ndarray,
    y: np.ndarray | float,
    a: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Extensão de Poisson Q f(x, y) = e^{-y sqrt(-L)} f(x) modo a modo.

    No toro o modo de frequência k decai por e^{-y|k|}; em Gauss, He_k
    decai por e^{-y sqrt(|k|_1)}.

    Returns:
        tuple:
            - (valor (N,), gradiente horizontal (N, n), derivada em y
              (N,)).
    """
    if a != 0:
        raise InvalidInputError('Apenas a = 0 é suportado nas geometrias.')
    _check_supported(geom, f)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.broadcast_to(np.asarray(y, dtype=float), (x.shape[0],))
    value = np.zeros(x.shape[0])
    grad = np.zeros_like(x)
    dy = np.zeros(x.shape[0])
    for term in f.terms:
        rate = _frequency(term)
        scale = term.coefficient * np.exp(-y * rate)
        mode_value, mode_grad = _mode(term, x)
        value += scale * mode_value
        grad += scale[:, None] * mode_grad
        dy -= rate * scale * mode_value
    return value, grad, dy


def evaluate(f: TargetFunction, geom: Geometry, x: np.ndarray) -> np.ndarray:
    return poisson_extension(geom, f, x, 0.0)[0]


def riesz_target(
    geom: Geometry, f: TargetFunction, x: np.ndarray
) -> np.ndarray:
    """R f = grad (-L)^{-1/2} f analítico, de forma (N, n)."""
    _check_supported(geom, f)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    for term in f.terms:
        rate = _frequency(term)
        if rate == 0:
            continue
        out += term.coefficient / rate * _mode(term, x)[1]
    return out


def geometry_drift(geom: Geometry) -> DriftSpec:
    """(V, a) de cada geometria: 0 no toro, -I em Gauss, -2 alpha/x^2."""
    match geom.kind:
        case GeometryKind.TORUS:
            return DriftSpec(dim=geom.dim)
        case GeometryKind.GAUSS:
            return DriftSpec(dim=geom.dim, matrix=-np.eye(geom.dim))
        case GeometryKind.BESSEL:
            alpha = geom.alpha
            return DriftSpec(
                dim=1,
                source=lambda state: (
                    -2.0 * alpha / np.maximum(state[:, :1] ** 2, 1e-300)
                )[:, :, None],
            )


def sample_invariant(
    geom: Geometry, paths: int, rng: np.random.Generator
) -> np.ndarray:
    match geom.kind:
        case GeometryKind.TORUS:
            return rng.uniform(0.0, TWO_PI, size=(paths, geom.dim))
        case GeometryKind.GAUSS:
            return rng.normal(size=(paths, geom.dim))
        case GeometryKind.BESSEL:
            return np.ones((paths, 1))


def horizontal_step(
    geom: Geometry, x: np.ndarray, h: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Passo exato de B^M: browniano enrolado, OU ou Bessel."""
    h = np.broadcast_to(np.asarray(h, dtype=float), (x.shape[0],))[:, None]
    match geom.kind:
        case GeometryKind.TORUS:
            noise = rng.normal(size=x.shape)
            return np.mod(x + np.sqrt(2.0 * h) * noise, TWO_PI)
        case GeometryKind.GAUSS:
            return ou_step(x, h, rng.normal(size=x.shape))
        case GeometryKind.BESSEL:
            return bessel_step(x, h, geom.alpha, rng)


def _absorbed(
    before: np.ndarray,
    after: np.ndarray,
    h: np.ndarray,
    rng: np.random.Generator,
    bridge: bool,
) -> np.ndarray:
    crossed = after <= 0
    draws = rng.random(size=before.shape)
    if not bridge:
        return crossed
    with np.errstate(over='ignore'):
        chance = np.exp(-np.maximum(before * after, 0.0) / h)
    return crossed | (draws < chance)


def simulate_background(
    geom: Geometry,
    y0: float,
    grid: TimeGrid,
    seed: Seed = None,
    paths: int = 1,
    bridge: bool = True,
) -> BackgroundState:
    """
    Processo de fundo (B^M, B) numa grade fixa até tau = inf{B = 0}.

    B tem taxa de variância 2; com `bridge`, cada passo com B_k, B_{k+1}
    > 0 absorve com probabilidade exp(-B_k B_{k+1} / dt). Depois de tau
    os valores ficam congelados; caminhos sem absorção até t_max são
    censurados.
    """
    if y0 <= 0:
        raise InvalidInputError('y0 deve ser positivo.')
    start = sample_invariant(geom, paths, make_rng(seed, Stream.START))
    driver = make_rng(seed, Stream.DRIVER)
    vertical = make_rng(seed, Stream.VERTICAL)
    absorption = make_rng(seed, Stream.ABSORPTION)
    position = np.empty((paths, grid.steps + 1, start.shape[1]))
    height = np.empty((paths, grid.steps + 1))
    position[:, 0], height[:, 0] = start, y0
    tau = np.full(paths, NEVER)
    h = np.full(paths, grid.dt)
    for k in range(grid.steps):
        alive = tau == NEVER
        step = horizontal_step(geom, position[:, k], h, driver)
        after = height[:, k] + math.sqrt(2.0 * grid.dt) * vertical.normal(
            size=paths
        )
        absorbed = _absorbed(height[:, k], after, h, absorption, bridge)
        position[:, k + 1] = np.where(alive[:, None], step, position[:, k])
        height[:, k + 1] = np.where(
            alive, np.where(absorbed, 0.0, after), height[:, k]
        )
        tau[alive & absorbed] = k + 1
    hit = tau != NEVER
    return BackgroundState(
        start=start,
        position=position,
        height=height,
        tau=tau,
        stepped_time=np.where(hit, tau, grid.steps) * grid.dt,
        hit=hit,
        fast_forwards=np.zeros(paths, dtype=int),
    )


def hitting_probability(y0: float, t_max: float) -> float:
    """P(tau <= t_max) = 2 (1 - Phi(y0 / sqrt(2 t_max))) com taxa 2."""
    return float(2.0 * stats.norm.sf(y0 / math.sqrt(2.0 * t_max)))


def background_hitting_check(
    state: BackgroundState, y0: float, t_max: float
) -> CheckResult:
    """
    Fração absorvida contra a lei exata do primeiro zero de B.

    Com a correção de ponte a absorção na grade tem a lei contínua, logo
    a fração deve ficar a SIGMA_BAND erros-padrão do valor exato. Também
    exige alturas congeladas em 0 a partir de tau.
    """
    n = state.hit.size
    expected = hitting_probability(y0, t_max)
    observed = float(state.hit.mean())
    se = math.sqrt(expected * (1.0 - expected) / n)
    index = np.arange(state.height.shape[1])
    after = state.hit[:, None] & (index[None, :] >= state.tau[:, None])
    frozen = bool((state.height[after] == 0.0).all())
    band = Settings().SIGMA_BAND * se
    return CheckResult(
        name='background_hitting',
        ok=abs(observed - expected) <= band + 1e-12 and frozen,
        detail=(
            f'absorvidos {observed:.4f} contra {expected:.4f} '
            f'(+- {band:.3g}); censurados {1.0 - observed:.4f}'
        ),
    )


def _decay(G: np.ndarray, z: np.ndarray, T: np.ndarray) -> np.ndarray:
    eigenvalues, basis = np.linalg.eigh(G)
    coordinates = z @ basis
    return (coordinates * np.exp(T[:, None] * eigenvalues)) @ basis.T


def _run_block(
    geom: Geometry,
    f: TargetFunction,
    y0: float,
    paths: int,
    seed: tuple[int, int],
    dt: float,
    t_max: float,
    bridge: bool,
    far: float,
    epsilon: float,
) -> dict[str, np.ndarray]:
    G = drift_operator(geometry_drift(geom))
    check_stability(G, STEP_CAP)
    x = sample_invariant(geom, paths, make_rng(seed, Stream.START))
    driver = make_rng(seed, Stream.DRIVER)
    vertical = make_rng(seed, Stream.VERTICAL)
    absorption = make_rng(seed, Stream.ABSORPTION)
    b = np.full(paths, float(y0))
    z = np.zeros((paths, geom.dim))
    stepped = np.zeros(paths)
    forwards = np.zeros(paths, dtype=int)
    alive = np.ones(paths, dtype=bool)
    hit = np.zeros(paths, dtype=bool)

    while alive.any():
        idx = np.flatnonzero(alive)
        bb = b[idx]
        h = np.minimum(np.maximum(dt, (epsilon * bb) ** 2), STEP_CAP)
        _, grad, _ = poisson_extension(geom, f, x[idx], bb)
        db = np.sqrt(2.0 * h) * vertical.normal(size=len(idx))
        z[idx] += h[:, None] * apply_operator(G, z[idx]) + grad * db[:, None]
        x[idx] = horizontal_step(geom, x[idx], h, driver)
        after = bb + db
        absorbed = _absorbed(bb, after, h, absorption, bridge)
        stepped[idx] += h
        b[idx] = np.where(absorbed, 0.0, after)
        hit[idx[absorbed]] = True
        alive[idx[absorbed]] = False

        above = idx[~absorbed & (after > far)]
        if above.size:
            # retorno exato a far; o termo em dY da excursão é truncado
            gap = b[above] - far
            T = np.atleast_1d(
                stats.levy.rvs(scale=gap**2 / 2.0, random_state=vertical)
            )
            x[above] = horizontal_step(geom, x[above], T, driver)
            z[above] = _decay(G, z[above], T)
            b[above] = far
            forwards[above] += 1
        alive &= stepped < t_max

    return {
        'position': x,
        'z': z,
        'hit': hit,
        'stepped': stepped,
        'forwards': forwards,
    }


def _bin_edges(geom: Geometry, bins: int, sample: np.ndarray) -> np.ndarray:
    if geom.kind is GeometryKind.TORUS:
        return np.linspace(0.0, TWO_PI, bins + 1)
    edges = stats.norm.ppf(np.linspace(0.0, 1.0, bins + 1))
    edges[0] = min(sample.min(initial=0.0), -8.0)
    edges[-1] = max(sample.max(initial=0.0), 8.0)
    return edges


def bin_statistics(
    coordinate: np.ndarray, values: np.ndarray, edges: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contagem, média e erro padrão por célula, componente a componente."""
    bins = len(edges) - 1
    labels = np.clip(np.digitize(coordinate, edges[1:-1]), 0, bins - 1)
    frame = pd.DataFrame(values).assign(bin=labels)
    grouped = frame.groupby('bin')
    means = grouped.mean().reindex(range(bins), fill_value=0.0)
    spread = grouped.std(ddof=1).reindex(range(bins)).fillna(0.0)
    counts = grouped.size().reindex(range(bins), fill_value=0)
    stderr = spread.div(np.sqrt(counts.clip(lower=1)), axis=0)
    return counts.to_numpy(), means.to_numpy(), stderr.to_numpy()


def riesz_estimator(
    geom: Geometry,
    f: TargetFunction,
    y0: float = 8.0,
    paths: int = 100_000,
    bins: int | None = None,
    seed: int | None = None,
    dt: float = 1e-3,
    t_max: float = 400.0,
    bridge: bool = True,
    far_height: float | None = None,
    epsilon: float = 0.05,
) -> RieszEstimate:
    """
    Estima R f(x) = -2 E[Z_tau | B^M_tau = x] por células.

    Y_t = int grad_x Q f(B^M_s, B_s) dB_s usa só o incremento vertical;
    Z segue dZ = (V - aI) Z dt + dY com passos h = min(max(dt,
    (epsilon B)^2), STEP_CAP). Excursões acima de `far_height` (padrão
    y0) são avançadas de uma vez: o tempo de retorno e o núcleo de B^M
    são exatos, mas Z só recebe o decaimento homogêneo e a integral de
    grad_x Q f na excursão é descartada. Como esse gradiente decai como
    e^{-lambda B}, com lambda a menor frequência de f, o avanço é uma
    truncagem de ordem e^{-lambda far}. A censura conta apenas o tempo
    passo a passo.

    Args:
        geom (Geometry):
            - Toro ou Gauss.
        f (TargetFunction):
            - Combinação de modos com média zero.
        paths:
            - Caminhos, simulados em blocos de BLOCK_SIZE.
        bins:
            - Células da primeira coordenada (padrão RIESZ_BINS).

    Returns:
        RieszEstimate:
            - Médias, erros padrão, contagens e o alvo analítico médio
              em cada célula.

    Raises:
        InvalidInputError:
            - Geometria de Bessel, f fora da família ou com média
              diferente de zero.
    """
    settings = Settings()
    if geom.kind is GeometryKind.BESSEL:
        raise InvalidInputError(
            'O estimador de Riesz está disponível no toro e em Gauss.'
        )
    _check_supported(geom, f)
    if not is_mean_zero(f):
        raise InvalidInputError('f deve ter média zero sob a medida.')
    if y0 <= 0:
        raise InvalidInputError('y0 deve ser positivo.')
    seed = settings.SEED if seed is None else seed
    bins = bins or settings.RIESZ_BINS
    far = y0 if far_height is None else far_height

    blocks = []
    for block, start in enumerate(range(0, paths, settings.BLOCK_SIZE)):
        size = min(settings.BLOCK_SIZE, paths - start)
        blocks.append(
            _run_block(
                geom,
                f,
                y0,
                size,
                (seed, block),
                dt,
                t_max,
                bridge,
                far,
                epsilon,
            )
        )
        logger.debug('Bloco %d concluído (%d caminhos).', block, size)
    merged = {
        key: np.concatenate([block[key] for block in blocks])
        for key in blocks[0]
    }
    hit = merged['hit']
    position = merged['position'][hit]
    deposits = -2.0 * merged['z'][hit]
    edges = _bin_edges(geom, bins, position[:, 0])
    counts, means, stderr = bin_statistics(position[:, 0], deposits, edges)
    _, target, _ = bin_statistics(
        position[:, 0], riesz_target(geom, f, position), edges
    )
    censored = float(1.0 - hit.mean())
    estimate = RieszEstimate(
        edges=edges,
        counts=counts,
        means=means,
        stderr=stderr,
        target=target,
        paths=paths,
        censored_fraction=censored,
        min_hits=settings.MIN_BIN_HITS,
        diagnostics={
            'fast_forwards': float(merged['forwards'].mean()),
            'mean_stepped_time': float(merged['stepped'].mean()),
        },
    )
    estimate.diagnostics['low_confidence_fraction'] = float(
        estimate.low_confidence.mean()
    )
    estimate.diagnostics['relative_error'] = relative_l2_error(estimate)
    if not estimate.usable:
        logger.warning(
            'Fração censurada %.3g acima de %.3g: execução inutilizável.',
            censored,
            settings.MAX_CENSORED_FRACTION,
        )
    if estimate.low_confidence.any():
        logger.warning(
            '%d células com menos de %d acertos.',
            int(estimate.low_confidence.sum()),
            settings.MIN_BIN_HITS,
        )
    logger.info(
        'Riesz em %s: %d caminhos, erro relativo %.3g.',
        geom.kind.value,
        paths,
        estimate.diagnostics['relative_error'],
    )
    return estimate


def relative_l2_error(
    estimate: RieszEstimate, reference: np.ndarray | None = None
) -> float:
    """Erro L^2 relativo entre células, ponderado pelas contagens."""
    reference = estimate.target if reference is None else reference
    reference = np.asarray(reference, dtype=float).reshape(
        estimate.means.shape
    )
    weights = estimate.counts / max(estimate.counts.sum(), 1)
    error = np.sum(weights[:, None] * (estimate.means - reference) ** 2)
    scale = np.sum(weights[:, None] * reference**2)
    return float(np.sqrt(error / scale)) if scale > 0 else float('nan')


def fft_riesz_oracle(f_samples: np.ndarray) -> np.ndarray:
    """
    Vetor de Riesz por FFT numa grade periódica de [0, 2 pi)^n.

    Cada componente multiplica os coeficientes por i xi_j / |xi| (zero
    em xi = 0), de modo que cos vira -sin. A média é removida.

    Returns:
        np.ndarray:
            - Forma (n, *f_samples.shape).
    """
    f_samples = np.asarray(f_samples, dtype=float)
    mean = float(f_samples.mean())
    if abs(mean) > Settings().EXACT_TOL:
        logger.warning('Média %.3g removida antes do oráculo.', mean)
    coefficients = np.fft.fftn(f_samples - mean)
    frequencies = np.meshgrid(
        *[np.fft.fftfreq(size, d=1.0 / size) for size in f_samples.shape],
        indexing='ij',
    )
    modulus = np.sqrt(sum(xi**2 for xi in frequencies))
    safe = np.where(modulus > 0, modulus, 1.0)
    return np.stack([
        np.real(np.fft.ifftn(1j * xi / safe * coefficients))
        for xi in frequencies
    ])


def oracle_bin_means(
    f: TargetFunction, edges: np.ndarray, points: int = 1024
) -> np.ndarray:
    """Médias do oráculo FFT por célula no toro de dimensão 1."""
    grid = np.arange(points) * TWO_PI / points
    geom = Geometry(kind=GeometryKind.TORUS, dim=1)
    values = fft_riesz_oracle(evaluate(f, geom, grid[:, None]))[0]
    return bin_statistics(grid, values[:, None], edges)[1]


def invariant_measure_check(
    geom: Geometry, positions: np.ndarray, bins: int = 32
) -> CheckResult:
    """Teste qui-quadrado da lei de B^M_tau contra a medida invariante."""
    coordinate = np.asarray(positions, dtype=float)[:, 0]
    n = len(coordinate)
    if geom.kind is GeometryKind.TORUS:
        edges = np.linspace(0.0, TWO_PI, bins + 1)
        expected = np.full(bins, n / bins)
    else:
        edges = stats.norm.ppf(np.linspace(0.0, 1.0, bins + 1))
        expected = np.full(bins, n / bins)
    labels = np.clip(np.digitize(coordinate, edges[1:-1]), 0, bins - 1)
    observed = np.bincount(labels, minlength=bins)
    chi2 = float(stats.chisquare(observed, expected).statistic)
    dof = bins - 1
    score = (chi2 - dof) / math.sqrt(2.0 * dof)
    return CheckResult(
        name='invariant_measure',
        ok=score <= Settings().SIGMA_BAND,
        detail=f'chi2={chi2:.2f} gl={dof} z={score:.2f}',
    )


def tau_positions(
    geom: Geometry,
    y0: float,
    paths: int,
    seed: int | None = None,
    dt: float = 1e-3,
    t_max: float = 400.0,
) -> np.ndarray:
    """Posições B^M_tau dos caminhos absorvidos, com f nula."""
    seed = Settings().SEED if seed is None else seed
    result = _run_block(
        geom,
        TargetFunction(name='0', terms=()),
        y0,
        paths,
        (seed, 0),
        dt,
        t_max,
        True,
        y0,
        0.05,
    )
    return result['position'][result['hit']]


def height_sensitivity(
    base: RieszEstimate, doubled: RieszEstimate
) -> dict[str, float]:
    """Diferença entre alturas y0 e 2 y0 em unidades de erro padrão."""
    pooled = np.sqrt(base.stderr**2 + doubled.stderr**2)
    usable = (pooled > 0) & ~base.low_confidence[:, None]
    scores = np.abs(base.means - doubled.means)[usable] / pooled[usable]
    return {
        'mean_score': float(scores.mean()) if scores.size else 0.0,
        'max_score': float(scores.max()) if scores.size else 0.0,
        'within_band': float(np.mean(scores <= Settings().SIGMA_BAND))
        if scores.size
        else 1.0,
    }


def linearity_residual(
    geom: Geometry, f: TargetFunction, g: TargetFunction, **options
) -> float:
    """
    max |E(f + g) - E(f) - E(g)| entre células com números comuns.

    As trajetórias não dependem de f, então com a mesma semente o
    estimador é linear até o arredondamento.
    """
    total = TargetFunction(
        name=f'{f.name} + {g.name}', terms=f.terms + g.terms
    )
    both = riesz_estimator(geom, total, **options)
    first = riesz_estimator(geom, f, **options)
    second = riesz_estimator(geom, g, **options)
    return float(np.max(np.abs(both.means - first.means - second.means)))


def _lp_from_bins(
    estimate: RieszEstimate, p: float, component: int = 0
) -> tuple[float, float]:
    # só a componente não nula; as demais somariam apenas ruído
    weights = estimate.counts / max(estimate.counts.sum(), 1)
    size = np.abs(estimate.means[:, component])
    norm = float(np.sum(weights * size**p) ** (1.0 / p))
    if norm == 0:
        return 0.0, 0.0
    stderr = estimate.stderr[:, component]
    derivative = weights * size ** (p - 1.0) / norm ** (p - 1.0)
    return norm, float(np.sqrt(np.sum((derivative * stderr) ** 2)))


def _binned_profile(
    geom: Geometry, f: TargetFunction, edges: np.ndarray, seed, size=2**16
) -> np.ndarray:
    sample = sample_invariant(geom, size, make_rng(seed, Stream.WEIGHTS))
    values = evaluate(f, geom, sample)[:, None]
    return bin_statistics(sample[:, 0], values, edges)[1][:, 0]


def dimension_free_sweep(
    kind: GeometryKind,
    dims: list[int],
    f_text: str = 'cos',
    p: float = 2.0,
    paths: int = 100_000,
    seed: int | None = None,
    weighted: bool = False,
    **options,
) -> pd.DataFrame:
    """
    Razões ||R f||_p / ||f||_p por dimensão para um perfil fixo.

    f depende só da primeira coordenada, então a razão exata não depende
    da dimensão e as componentes 2..d de R f são nulas: só a primeira
    entra na norma, sem o piso de ruído das outras. Com `weighted`,
    acrescenta uma linha qualitativa com o peso w(x) = 1 + cos(x_1)/2 e o
    limite inferior amostrado de Q_p.
    """
    settings = Settings()
    rows = []
    for dim in dims:
        geom = Geometry(kind=kind, dim=dim)
        f = parse_function(f_text, geom)
        estimate = riesz_estimator(geom, f, paths=paths, seed=seed, **options)
        centers = estimate.centers
        f_values = _binned_profile(geom, f, estimate.edges, seed)
        weights = estimate.counts / max(estimate.counts.sum(), 1)
        f_norm = float(np.sum(weights * np.abs(f_values) ** p) ** (1 / p))
        r_norm, r_err = _lp_from_bins(estimate, p)
        flagged = (
            estimate.low_confidence.mean()
            > settings.MAX_LOW_CONFIDENCE_FRACTION
        )
        row = {
            'dim': dim,
            'p': p,
            'ratio': r_norm / f_norm if f_norm > 0 else float('nan'),
            'stderr': r_err / f_norm if f_norm > 0 else float('nan'),
            'flagged': bool(flagged),
            'weighted': False,
        }
        rows.append(row)
        if weighted:
            w = 1.0 + 0.5 * np.cos(centers)
            num = np.sum(weights * w * np.abs(estimate.means[:, 0]) ** p)
            den = np.sum(weights * w * np.abs(f_values) ** p)
            rows.append({
                **row,
                'ratio': float((num / den) ** (1 / p)),
                'stderr': float('nan'),
                'weighted': True,
                'q_p_lower': ap_lower_bound_samples(w, p).q_p,
            })
    return pd.DataFrame(rows)
