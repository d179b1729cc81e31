"""Um executor por comando; cada um devolve checagens e tabelas."""

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.exceptions import ConstructionError, InvalidInputError
from app.files import (
    dump_paths,
    read_tree_file,
    write_family,
    write_manifest,
    write_table,
)
from app.models import (
    CadlagPath,
    DriftSpec,
    Engine,
    Geometry,
    GeometryKind,
    JumpLaw,
    JumpSpec,
    StoppingFamily,
    Stream,
    TimeGrid,
)
from app.paths import (
    closure_reference_gaussian,
    inject_joint_jumps,
    inject_jumps,
    interleave,
    make_rng,
    simulate_brownian,
    simulate_exponential_martingale,
    subordinate_transform,
)
from app.riesz import (
    background_hitting_check,
    dimension_free_sweep,
    height_sensitivity,
    oracle_bin_means,
    parse_function,
    relative_l2_error,
    riesz_estimator,
    simulate_background,
)
from app.schemas import (
    ApSweepConfig,
    CheckResult,
    DimSweepConfig,
    DominationYConfig,
    DominationZConfig,
    DoobSweepConfig,
    ExtrapolateConfig,
    RieszConfig,
    RunConfig,
    SparseWeightedConfig,
    SparsityConfig,
    SweepRow,
    TreeRunConfig,
    WeakTypeConfig,
)
from app.settings import Settings
from app.sparse import (
    build_sparse_family_Y,
    level_mass_report,
    sequence_max,
    verify_domination,
    verify_inductive_estimate,
    verify_sparsity,
)
from app.treespace import (
    leaf_paths,
    martingale_transform,
    random_martingale,
    random_signs,
    random_tree,
)
from app.weights import (
    ap_characteristic,
    ap_node_maximum,
    degenerate_weight_trend,
    extrapolate_bound,
    random_weight,
    sparse_values,
    verify_doob_weighted,
    verify_weighted_sparse,
)
from app.zprocess import (
    bellman_U,
    bellman_V,
    build_sparse_family_Z,
    build_submartingale,
    evolve_Z,
    telescoping_report,
    tree_z_sequences,
    verify_z_domination,
    weak_type_experiment,
    z_sequences,
)

logger = logging.getLogger(__name__)

SAMPLED_TIMES = 200
STOPPING_TIMES = 'adaptados, não aleatorizados'


@dataclass
class RunResult:
    command: str
    checks: list[CheckResult]
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    paths: dict[str, CadlagPath] = field(default_factory=dict)
    families: dict[str, StoppingFamily] = field(default_factory=dict)
    output: Path | None = None

    @property
    def ok(self) -> bool:
        return all(check.ok for check in self.checks)

    @property
    def failures(self) -> list[str]:
        return [check.name for check in self.checks if not check.ok]


@dataclass(frozen=True)
class Command:
    name: str
    config: type[RunConfig]
    runner: Callable[[RunConfig], RunResult]


COMMANDS: dict[str, Command] = {}


def command(name: str, config: type[RunConfig]):
    def register(runner):
        COMMANDS[name] = Command(name=name, config=config, runner=runner)
        return runner

    return register


def _seed(config: RunConfig) -> int:
    return Settings().SEED if config.seed is None else config.seed


def _trees(config: TreeRunConfig, rng: np.random.Generator):
    fixed = (
        read_tree_file(config.tree_file)
        if config.tree_file is not None
        else None
    )
    for _ in range(config.trials):
        yield fixed or random_tree(rng, config.depth, config.max_branching)


def _tree_pair(config: TreeRunConfig, rng: np.random.Generator):
    for space in _trees(config, rng):
        X = random_martingale(space, rng)
        Y = martingale_transform(space, X, random_signs(space, rng))
        yield space, X, Y


def _count_check(name: str, table: pd.DataFrame, column: str) -> CheckResult:
    bad = int((~table['ok']).sum())
    return CheckResult(
        name=name,
        ok=bad == 0,
        detail=(
            f'{bad} de {len(table)} violações; '
            f'{column} máximo {table[column].max():.6g}'
        ),
    )


def _report_check(name: str, report, detail: str) -> CheckResult:
    return CheckResult(name=name, ok=report.ok, detail=detail)


def _mc_pair(
    config: SparsityConfig, seed: int, law: JumpLaw
) -> tuple[CadlagPath, CadlagPath, np.ndarray | None]:
    """Browniano com transformada subordinada e saltos conjuntos."""
    grid = TimeGrid(config.t_max, config.dt)
    spec = JumpSpec(
        rate=config.jump_rate,
        law=law,
        scale=config.jump_scale,
        subordination_cap=True,
    )
    X = simulate_brownian(grid, seed=seed, paths=config.paths)
    Y = subordinate_transform(X, seed=seed)
    X, Y = inject_joint_jumps(X, Y, spec, seed)
    reference = None
    if spec.rate == 0 or law is JumpLaw.NORMAL:
        reference = closure_reference_gaussian(X, 1.0, spec)
    return X, Y, reference


@command('sparsity', SparsityConfig)
def run_sparsity(config: SparsityConfig) -> RunResult:
    seed = _seed(config)
    if config.engine is Engine.MC:
        X, Y, reference = _mc_pair(config, seed, JumpLaw.NORMAL)
        family = build_sparse_family_Y(X, Y, reference=reference)
        report = verify_sparsity(family)
        levels = level_mass_report(family)
        return RunResult(
            command='sparsity',
            checks=[
                _report_check(
                    'sparsity',
                    report,
                    f'razão máxima {report.max_ratio:.4g} em '
                    f'{report.atoms_checked} células',
                ),
                _report_check(
                    'level_masses',
                    levels,
                    f'pior razão {levels.worst_ratio:.4g}',
                ),
            ],
            tables={
                'levels': pd.DataFrame({
                    'level': range(len(levels.masses)),
                    'mass': levels.masses,
                })
            },
            results={'seed': seed, 'note': report.note or ''},
            paths={'X': X, 'Y': Y},
            families={'family_Y': family},
        )

    rng = make_rng(seed, Stream.TREES)
    rows = []
    for trial, (space, X, Y) in enumerate(_tree_pair(config, rng)):
        family = build_sparse_family_Y(X, Y, space)
        report = verify_sparsity(family)
        levels = level_mass_report(family)
        rows.append({
            'trial': trial,
            'leaves': space.n_leaves,
            'levels': family.level_count,
            'max_ratio': report.max_ratio,
            'witness_level': report.witness_level,
            'ok': report.ok and levels.ok,
        })
    table = pd.DataFrame(rows)
    logger.info('Esparsidade exata em %d árvores.', len(table))
    return RunResult(
        command='sparsity',
        checks=[_count_check('sparsity', table, 'max_ratio')],
        tables={'trials': table},
        results={'seed': seed, 'trials': len(table)},
    )


@command('dominationY', DominationYConfig)
def run_domination_y(config: DominationYConfig) -> RunResult:
    seed = _seed(config)
    if config.engine is Engine.MC:
        X, Y, reference = _mc_pair(config, seed, config.jump_law)
        family = build_sparse_family_Y(X, Y, reference=reference)
        y = interleave(Y)
        report = verify_domination(
            sequence_max(y), sparse_values(family), config.constant
        )
        inductive = verify_inductive_estimate(y, family, config.constant)
        return RunResult(
            command='dominationY',
            checks=[
                _report_check(
                    'domination',
                    report,
                    f'{report.violations} violações; Y*/S máximo '
                    f'{report.worst_ratio:.4g}',
                ),
                _report_check(
                    'inductive_estimate',
                    inductive,
                    f'excesso máximo {inductive.worst_excess:.3g}',
                ),
            ],
            results={
                'seed': seed,
                'reference': 'sample' if reference is None else 'closure',
                'worst_ratio': report.worst_ratio,
                'slack': report.slack,
            },
            paths={'X': X, 'Y': Y},
            families={'family_Y': family},
        )

    rng = make_rng(seed, Stream.TREES)
    rows = []
    for trial, (space, X, Y) in enumerate(_tree_pair(config, rng)):
        family = build_sparse_family_Y(X, Y, space)
        y = leaf_paths(space, Y)
        report = verify_domination(
            sequence_max(y), sparse_values(family), config.constant
        )
        inductive = verify_inductive_estimate(y, family, config.constant)
        rows.append({
            'trial': trial,
            'levels': family.level_count,
            'worst_ratio': report.worst_ratio,
            'violations': report.violations,
            'ok': report.ok and inductive.ok,
        })
    table = pd.DataFrame(rows)
    return RunResult(
        command='dominationY',
        checks=[_count_check('domination', table, 'worst_ratio')],
        tables={'trials': table},
        results={'seed': seed, 'trials': len(table)},
    )


def _z_batch(config: WeakTypeConfig, seed: int):
    """Submartingal exponencial, transformada subordinada e Z com V = -I."""
    grid = TimeGrid(config.t_max, config.dt)
    X = simulate_exponential_martingale(
        grid, config.volatility, seed, config.paths
    )
    if config.jump_rate > 0:
        spec = JumpSpec(
            rate=config.jump_rate,
            law=JumpLaw.LOGNORMAL,
            scale=config.jump_scale,
        )
        X = inject_jumps(X, spec, seed)
    Y = subordinate_transform(X, seed, dim_out=config.dim)
    sub = build_submartingale(X, config.a)
    drift = DriftSpec(
        dim=config.dim, a=config.a, matrix=-np.eye(config.dim)
    )
    zpath = evolve_Z(
        Y, drift, Y.values[:, 0], xtilde0=sub.xtilde.values[:, 0, 0]
    )
    return sub, zpath


def _bellman_majorization(seed: int, size: int = 100_000) -> CheckResult:
    rng = make_rng(seed, Stream.WEIGHTS)
    x = rng.uniform(-2.0, 2.0, size=size)
    y = rng.uniform(-2.0, 2.0, size=(size, 2))
    gap = float(np.max(bellman_V(x, y) - bellman_U(x, y)))
    return CheckResult(
        name='bellman_majorization',
        ok=gap <= Settings().EXACT_TOL,
        detail=f'max(V - U) = {gap:.3g}',
    )


@command('weakType', WeakTypeConfig)
def run_weak_type(config: WeakTypeConfig) -> RunResult:
    if config.engine is not Engine.MC:
        raise InvalidInputError('weakType roda apenas com --engine mc.')
    seed = _seed(config)
    sub, zpath = _z_batch(config, seed)
    report = weak_type_experiment(sub, zpath, config.lambdas)
    if report.excluded:
        raise ConstructionError(
            f'{report.excluded} caminhos violam as hipóteses do '
            'experimento de tipo fraco.'
        )
    curve = pd.DataFrame([point.model_dump() for point in report.points])
    failing = curve.loc[~curve['ok'], 'lam'].tolist()
    return RunResult(
        command='weakType',
        checks=[
            CheckResult(
                name='weak_type',
                ok=report.ok,
                detail=(
                    f'lambdas reprovados: {failing}'
                    if failing
                    else f'||X~||_1 = {report.norm:.4g}'
                ),
            ),
            _bellman_majorization(seed),
        ],
        tables={'curve': curve},
        results={
            'seed': seed,
            'norm': report.norm,
            'bellman_mean': report.bellman_mean,
            'bellman_stderr': report.bellman_stderr,
        },
        paths={'Xtilde': sub.xtilde, 'Y': zpath.driver, 'Z': zpath.Z},
    )


def _z_checks(
    family: StoppingFamily, exact: bool, halving: bool
) -> list[CheckResult]:
    domination = verify_z_domination(family)
    telescoping = telescoping_report(family)
    decay = family.diagnostics['decay_increase']
    detail = (
        f'{domination.violations} violações; constante '
        f'{domination.constant:g}'
    )
    if domination.literal_violations is not None:
        detail += (
            f'; cota literal: {domination.literal_violations} violações, '
            f'razão {domination.literal_worst_ratio:.4g}, cruzamentos '
            f'{domination.crossing_share:.3g} da cota'
        )
    checks = [
        _report_check('domination', domination, detail),
        _report_check(
            'telescoping',
            telescoping,
            f'resíduo relativo {telescoping.residual:.3g}',
        ),
        CheckResult(
            name='decay',
            ok=decay <= Settings().NUMERIC_TOL,
            detail=f'maior aumento {decay:.3g}',
        ),
    ]
    if halving:
        levels = level_mass_report(family)
        checks.append(
            _report_check(
                'level_masses', levels, f'pior razão {levels.worst_ratio:.4g}'
            )
        )
    if exact:
        sparsity = verify_sparsity(family)
        checks.append(
            _report_check(
                'sparsity',
                sparsity,
                f'razão máxima {sparsity.max_ratio:.4g}',
            )
        )
    return checks


@command('dominationZ', DominationZConfig)
def run_domination_z(config: DominationZConfig) -> RunResult:
    seed = _seed(config)
    if config.engine is Engine.MC:
        sub, zpath = _z_batch(config, seed)
        reference = None
        if config.reference == 'sample':
            reference = interleave(sub.xtilde)[:, :, 0]
        seqs = z_sequences(sub, zpath, reference)
        family = build_sparse_family_Z(seqs, mode=config.mode)
        checks = _z_checks(
            family, exact=False, halving=config.reference == 'closure'
        )
        literal = verify_z_domination(family).model_dump(
            include={
                'literal_violations',
                'literal_worst_ratio',
                'crossing_share',
            },
            exclude_none=True,
        )
        return RunResult(
            command='dominationZ',
            checks=checks,
            results={
                'seed': seed,
                'levels': family.level_count,
                'telescoping_residual': family.diagnostics[
                    'telescoping_residual'
                ],
                **literal,
            },
            paths={'Xtilde': sub.xtilde, 'Y': zpath.driver, 'Z': zpath.Z},
            families={'family_Z': family},
        )

    rng = make_rng(seed, Stream.TREES)
    drift = DriftSpec(dim=1, a=config.a, matrix=-np.eye(1))
    rows = []
    for trial in range(config.trials):
        space = random_tree(rng, config.depth, config.max_branching)
        X = random_martingale(space, rng, positive=True)
        Y = martingale_transform(
            space,
            X,
            random_signs(space, rng),
            initial_sign=rng.uniform(-1.0, 1.0),
        )
        seqs = tree_z_sequences(
            space, X, Y, drift, dt=1.0 / (config.depth + 1)
        )
        family = build_sparse_family_Z(seqs, mode=config.mode)
        checks = _z_checks(family, exact=True, halving=True)
        rows.append({
            'trial': trial,
            'levels': family.level_count,
            'residual': family.diagnostics['telescoping_residual'],
            'failed': ','.join(c.name for c in checks if not c.ok),
            'ok': all(c.ok for c in checks),
        })
    table = pd.DataFrame(rows)
    return RunResult(
        command='dominationZ',
        checks=[_count_check('domination_z', table, 'residual')],
        tables={'trials': table},
        results={'seed': seed, 'trials': len(table)},
    )


@command('apSweep', ApSweepConfig)
def run_ap_sweep(config: ApSweepConfig) -> RunResult:
    seed = _seed(config)
    rng = make_rng(seed, Stream.TREES)
    tol = Settings().NUMERIC_TOL
    rows = []
    for trial, space in enumerate(_trees(config, rng)):
        w = random_weight(space, rng, config.p, config.weight_spread)
        report = ap_characteristic(w, exhaustive=config.exhaustive)
        exact = ap_node_maximum(w).q_p
        lower = ap_characteristic(
            w, exhaustive=False, count=SAMPLED_TIMES, seed=seed + trial
        )
        agrees = (
            abs(report.q_p - exact) <= tol * exact
            if config.exhaustive
            else report.q_p <= exact + tol
        )
        rows.append({
            'trial': trial,
            'p': config.p,
            'q_p': report.q_p,
            'q_p_sampled': lower.q_p,
            'q_p_nodes': exact,
            'mode': report.mode.value,
            'candidates': report.candidates,
            'ok': bool(
                report.q_p >= 1.0 - tol
                and lower.q_p <= exact + tol
                and agrees
            ),
        })
    table = pd.DataFrame(rows)
    trend = degenerate_weight_trend(p=config.p)
    return RunResult(
        command='apSweep',
        checks=[_count_check('ap_characteristic', table, 'q_p')],
        tables={'trials': table, 'degenerate': trend},
        results={
            'seed': seed,
            'trials': len(table),
            'stopping_times': STOPPING_TIMES,
        },
    )


@command('doobSweep', DoobSweepConfig)
def run_doob_sweep(config: DoobSweepConfig) -> RunResult:
    seed = _seed(config)
    rng = make_rng(seed, Stream.TREES)
    rows = []
    for trial, space in enumerate(_trees(config, rng)):
        X = random_martingale(space, rng)
        for p in config.exponents:
            w = random_weight(space, rng, p, config.weight_spread)
            report = verify_doob_weighted(space, X, w)
            row = SweepRow(trial=trial, **report.model_dump(exclude={'ok'}))
            rows.append({**row.model_dump(), 'ok': report.ok})
    table = pd.DataFrame(rows)
    checks = [
        _count_check(f'doob_p{p:g}', table[table['p'] == p], 'ratio')
        for p in config.exponents
    ]
    return RunResult(
        command='doobSweep',
        checks=checks,
        tables={'trials': table},
        results={
            'seed': seed,
            'trials': config.trials,
            'stopping_times': STOPPING_TIMES,
        },
    )


@command('sparseWeighted', SparseWeightedConfig)
def run_sparse_weighted(config: SparseWeightedConfig) -> RunResult:
    seed = _seed(config)
    rng = make_rng(seed, Stream.TREES)
    rows = []
    for trial, (space, X, Y) in enumerate(_tree_pair(config, rng)):
        family = build_sparse_family_Y(X, Y, space)
        w = random_weight(space, rng, config.p, config.weight_spread)
        report = verify_weighted_sparse(space, X, family, w)
        row = SweepRow(trial=trial, **report.model_dump(exclude={'ok'}))
        rows.append({**row.model_dump(), 'ok': report.ok})
    table = pd.DataFrame(rows)
    return RunResult(
        command='sparseWeighted',
        checks=[_count_check('weighted_sparse', table, 'ratio')],
        tables={'trials': table},
        results={
            'seed': seed,
            'trials': len(table),
            'stopping_times': STOPPING_TIMES,
        },
    )


@command('extrapolate', ExtrapolateConfig)
def run_extrapolate(config: ExtrapolateConfig) -> RunResult:
    def base(A: float) -> float:
        return config.base_constant * A

    grid = config.b * 2.0 ** np.arange(6)
    values = [extrapolate_bound(base, config.r, config.p, B) for B in grid]
    table = pd.DataFrame({'b': grid, 'n_p': values})
    monotone = bool(np.all(np.diff(values) >= 0))
    return RunResult(
        command='extrapolate',
        checks=[
            CheckResult(
                name='monotone_in_b',
                ok=monotone,
                detail=f'N_p({config.b:g}) = {values[0]:.6g}',
            )
        ],
        tables={'curve': table},
        results={'n_p': values[0]},
    )


def _estimate_table(estimate, oracle: np.ndarray | None) -> pd.DataFrame:
    frame = pd.DataFrame({
        'left': estimate.edges[:-1],
        'right': estimate.edges[1:],
        'center': estimate.centers,
        'count': estimate.counts,
        'low_confidence': estimate.low_confidence,
    })
    for j in range(estimate.means.shape[1]):
        frame[f'estimate_{j}'] = estimate.means[:, j]
        frame[f'stderr_{j}'] = estimate.stderr[:, j]
        frame[f'target_{j}'] = estimate.target[:, j]
    if oracle is not None:
        frame['oracle_0'] = oracle[:, 0]
    return frame


def _riesz_options(config: RieszConfig, seed: int) -> dict:
    return {
        'y0': config.y0,
        'bins': config.bins,
        'seed': seed,
        'dt': config.dt,
        't_max': config.t_max,
        'bridge': config.bridge,
        'far_height': config.far_height,
        'epsilon': config.epsilon,
    }


@command('riesz', RieszConfig)
def run_riesz(config: RieszConfig) -> RunResult:
    settings = Settings()
    seed = _seed(config)
    geom = Geometry(kind=config.geometry, dim=config.n, alpha=config.alpha)
    f = parse_function(config.f, geom)
    options = _riesz_options(config, seed)
    estimate = riesz_estimator(geom, f, paths=config.paths, **options)
    error = estimate.diagnostics['relative_error']
    low = estimate.diagnostics['low_confidence_fraction']
    checks = [
        CheckResult(
            name='censoring',
            ok=estimate.usable,
            detail=f'fração censurada {estimate.censored_fraction:.3g}',
        ),
        CheckResult(
            name='low_confidence',
            ok=low <= settings.MAX_LOW_CONFIDENCE_FRACTION,
            detail=f'fração de células sinalizadas {low:.3g}',
        ),
        CheckResult(
            name='target_error',
            ok=error <= config.tolerance,
            detail=f'erro L2 relativo {error:.4g}',
        ),
    ]
    results = {'seed': seed, 'relative_error': error, **estimate.diagnostics}
    tables = {}
    if config.hitting_paths:
        # horizonte ~1 e altura <= 1 para que a absorção seja frequente
        height = min(config.y0, 1.0)
        grid = TimeGrid(config.dt * max(1, round(1.0 / config.dt)), config.dt)
        state = simulate_background(
            geom, height, grid, seed, config.hitting_paths, config.bridge
        )
        hitting = background_hitting_check(state, height, grid.t_max)
        results['background_hit_fraction'] = float(state.hit.mean())
        tables['background'] = pd.DataFrame({
            'path': np.arange(state.hit.size),
            'tau': state.tau,
            'hit': state.hit,
            'stepped_time': state.stepped_time,
        })
        if config.bridge:
            checks.append(hitting)
    oracle = None
    if geom.kind is GeometryKind.TORUS and geom.dim == 1:
        oracle = oracle_bin_means(f, estimate.edges)
        oracle_error = relative_l2_error(estimate, oracle)
        results['oracle_error'] = oracle_error
        checks.append(
            CheckResult(
                name='oracle_error',
                ok=oracle_error <= config.tolerance,
                detail=f'erro L2 relativo ao oráculo {oracle_error:.4g}',
            )
        )
        logger.info('Erro relativo ao oráculo FFT: %.4g.', oracle_error)
    if config.sensitivity:
        far = config.far_height
        doubled = riesz_estimator(
            geom,
            f,
            paths=config.paths,
            **{
                **options,
                'y0': 2.0 * config.y0,
                'far_height': None if far is None else 2.0 * far,
            },
        )
        shift = height_sensitivity(estimate, doubled)
        results.update({f'height_{k}': v for k, v in shift.items()})
        checks.append(
            CheckResult(
                name='height_sensitivity',
                ok=shift['mean_score'] <= 1.0,
                detail=f'deslocamento médio {shift["mean_score"]:.3g} se',
            )
        )
    return RunResult(
        command='riesz',
        checks=checks,
        tables={'bins': _estimate_table(estimate, oracle), **tables},
        results=results,
    )


@command('dimSweep', DimSweepConfig)
def run_dim_sweep(config: DimSweepConfig) -> RunResult:
    seed = _seed(config)
    options = _riesz_options(config, seed)
    options.pop('seed')
    table = dimension_free_sweep(
        config.geometry,
        config.dims,
        config.f,
        config.p,
        config.paths,
        seed,
        config.weighted,
        **options,
    )
    plain = table[~table['weighted']]
    top = plain.loc[plain['ratio'].idxmax()]
    bottom = plain.loc[plain['ratio'].idxmin()]
    spread = float(top['ratio'] - bottom['ratio'])
    pooled = float(np.hypot(top['stderr'], bottom['stderr']))
    band = Settings().SIGMA_BAND
    return RunResult(
        command='dimSweep',
        checks=[
            CheckResult(
                name='dimension_free',
                ok=spread <= band * pooled,
                detail=(
                    f'variação {spread:.4g} contra {band:g} x {pooled:.3g}'
                ),
            ),
            CheckResult(
                name='flagged_dimensions',
                ok=not plain['flagged'].any(),
                detail=f'{int(plain["flagged"].sum())} dimensões sinalizadas',
            ),
        ],
        tables={'sweep': table},
        results={'seed': seed, 'spread': spread, 'pooled_stderr': pooled},
    )


def resolve(name: str) -> Command:
    if name not in COMMANDS:
        raise InvalidInputError(
            f'Comando desconhecido {name!r}; disponíveis: '
            f'{", ".join(COMMANDS)}.'
        )
    return COMMANDS[name]


def parse_config(spec: Command, raw: dict) -> RunConfig:
    """Valida `raw` contra o esquema do comando, nomeando a chave ruim."""
    try:
        return spec.config.model_validate(raw)
    except ValidationError as error:
        first = error.errors()[0]
        key = '.'.join(str(part) for part in first['loc'])
        accepted = ', '.join(
            f'--{name.replace("_", "-")}' for name in spec.config.model_fields
        )
        raise InvalidInputError(
            f'Parâmetro inválido --{key.replace("_", "-")} para '
            f'{spec.name}: {first["msg"]}. Aceitos: {accepted}.'
        ) from error


def execute(name: str, raw: dict, output: Path | None = None) -> RunResult:
    """
    Valida, executa e grava as saídas de um comando.

    Args:
        name (str):
            - Nome do comando, como em COMMANDS.
        raw (dict):
            - Parâmetros planos (valores em texto são convertidos).
        output (Path):
            - Diretório de saída; o padrão é `config.output` ou
              OUTPUT_DIR/<comando>.

    Returns:
        RunResult:
            - Checagens, tabelas e o diretório onde tudo foi gravado.

    Raises:
        InvalidInputError:
            - Comando desconhecido ou parâmetro rejeitado pelo esquema.
    """
    spec = resolve(name)
    config = parse_config(spec, raw)
    started = time.perf_counter()
    result = spec.runner(config)
    seconds = time.perf_counter() - started
    output = Path(
        output or config.output or Settings().OUTPUT_DIR / spec.name
    )
    for table_name, frame in result.tables.items():
        write_table(frame, output / f'{table_name}.csv')
    if config.dump_paths is not None:
        dump_paths(result.paths, config.dump_paths)
        for family_name, family in result.families.items():
            write_family(family, config.dump_paths / f'{family_name}.csv')
    write_manifest(
        output / 'manifest.txt',
        spec.name,
        config,
        results={**result.results, 'seconds': round(seconds, 3)},
        failures=result.failures,
    )
    result.output = output
    logger.info(
        '%s: %s em %.1f s.',
        spec.name,
        'aprovado' if result.ok else 'reprovado',
        seconds,
    )
    return result
