from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from app.exceptions import BudgetExceededError, InvalidInputError
from app.settings import Settings

NEVER = -1


class Engine(Enum):
    TREE = 'tree'
    MC = 'mc'


class JumpLaw(Enum):
    NORMAL = 'normal'
    RADEMACHER = 'rademacher'
    LOGNORMAL = 'lognormal'


class SparseMode(Enum):
    SAMPLE = 'sample'
    CONDITIONAL = 'conditional'


class Provenance(Enum):
    Y = 'Y'
    Z = 'Z'


class ZMode(Enum):
    CONTINUOUS = 'continuous'
    JUMP = 'jump'


class ApMode(Enum):
    EXACT = 'exact'
    SAMPLED = 'sampled-lower-bound'


class GeometryKind(Enum):
    TORUS = 'torus'
    GAUSS = 'gauss'
    BESSEL = 'bessel'


class Stream(IntEnum):
    DRIVER = 0
    JUMPS = 1
    MULTIPLIERS = 2
    VERTICAL = 3
    START = 4
    ABSORPTION = 5
    TREES = 6
    STOPPING = 7
    WEIGHTS = 8


@dataclass(frozen=True)
class TreeSpace:
    """Espaço filtrado finito: árvore enraizada com probabilidades.

    Cada nível k guarda, por nó, o índice do pai no nível k-1, a
    probabilidade de transição a partir do pai e a probabilidade do nó.
    O nível 0 é a raiz (pai -1, transição 1).
    """

    parents: tuple[np.ndarray, ...]
    transitions: tuple[np.ndarray, ...]
    node_probs: tuple[np.ndarray, ...]

    @property
    def levels(self) -> int:
        return len(self.parents) - 1

    @property
    def leaf_probs(self) -> np.ndarray:
        return self.node_probs[-1]

    @property
    def n_leaves(self) -> int:
        return len(self.node_probs[-1])

    def width(self, level: int) -> int:
        return len(self.parents[level])


@dataclass(frozen=True)
class TreeProcess:
    values: tuple[np.ndarray, ...]
    martingale: bool = False

    @property
    def dim(self) -> int:
        return self.values[0].shape[1]


@dataclass(frozen=True)
class TreeStoppingTime:
    """Marcadores por nó; o caminho para no primeiro nó marcado."""

    marks: tuple[np.ndarray, ...]

    @property
    def nodes(self) -> list[tuple[int, int]]:
        return [
            (level, int(index))
            for level, mask in enumerate(self.marks)
            for index in np.flatnonzero(mask)
        ]


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise InvalidInputError('dt e t_max devem ser positivos.')
        steps = round(self.t_max / self.dt)
        if abs(steps * self.dt - self.t_max) > 1e-9 * self.t_max:
            raise InvalidInputError(
                f't_max/dt = {self.t_max / self.dt} não é inteiro.'
            )
        limit = Settings().MAX_GRID_STEPS
        if steps > limit:
            raise BudgetExceededError(
                f'Grade com {steps} passos excede o limite de {limit}.'
            )

    @property
    def steps(self) -> int:
        return round(self.t_max / self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


@dataclass
class CadlagPath:
    """Lote de caminhos càdlàg discretizados numa grade comum.

    `values[n, k]` é o valor pós-salto; `pre_jump[n, k]` é o limite à
    esquerda, igual a `values[n, k]` fora dos saltos.
    """

    grid: TimeGrid
    values: np.ndarray
    pre_jump: np.ndarray
    jump_mask: np.ndarray
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def jumps(self, path: int = 0) -> list[tuple[int, np.ndarray]]:
        return [
            (int(k), self.pre_jump[path, k])
            for k in np.flatnonzero(self.jump_mask[path])
        ]


@dataclass
class BracketPath:
    grid: TimeGrid
    values: np.ndarray
    continuous: np.ndarray
    jumps: np.ndarray


@dataclass(frozen=True)
class JumpSpec:
    rate: float
    law: JumpLaw = JumpLaw.NORMAL
    scale: float = 1.0
    subordination_cap: bool = False

    def __post_init__(self):
        if self.rate < 0 or self.scale < 0:
            raise InvalidInputError('rate e scale devem ser não negativos.')


@dataclass
class StoppingFamily:
    """Tempos de parada T^0 <= T^1 <= ... por caminho (NEVER = infinito).

    Índices referem-se à sequência observada do motor: níveis da árvore
    ou a sequência intercalada X_0, X_{1-}, X_1, ... no Monte Carlo.
    """

    stops: np.ndarray
    references: np.ndarray
    feet: np.ndarray
    weights: np.ndarray
    provenance: Provenance
    threshold: float = 4.0
    nodes: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def events(self) -> np.ndarray:
        return self.stops != NEVER

    @property
    def level_count(self) -> int:
        return self.stops.shape[1]

    def level_masses(self) -> np.ndarray:
        return self.weights @ self.events


@dataclass
class SparseValue:
    values: np.ndarray
    contributions: np.ndarray


@dataclass
class DriftSpec:
    """Dados de curvatura (V_t, a) da EDO dZ = (V - aI)Z dt + dY.

    `matrix` é constante (d, d) ou por passo (K, d, d); `source` mapeia o
    estado (N, m) em matrizes (N, d, d).
    """

    dim: int
    a: float = 0.0
    matrix: np.ndarray | None = None
    source: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class SubmartingalePath:
    X: CadlagPath
    A: CadlagPath
    a: float = 0.0

    @property
    def xtilde(self) -> CadlagPath:
        return CadlagPath(
            grid=self.X.grid,
            values=self.X.values + self.A.values,
            pre_jump=self.X.pre_jump + self.A.pre_jump,
            jump_mask=self.X.jump_mask,
        )


@dataclass
class ZPath:
    Z: CadlagPath
    driver: CadlagPath
    drift: DriftSpec
    state: np.ndarray | None = None


@dataclass(frozen=True)
class WeightProcess:
    space: TreeSpace
    leaf_weights: np.ndarray
    p: float


@dataclass(frozen=True)
class Geometry:
    kind: GeometryKind
    dim: int = 1
    alpha: float = 0.0


@dataclass(frozen=True)
class Mode:
    """Um termo c * trig(k.x) no toro ou c * He_k(x) em Gauss."""

    coefficient: float
    kind: str
    index: tuple[int, ...]


@dataclass(frozen=True)
class TargetFunction:
    name: str
    terms: tuple[Mode, ...]


@dataclass
class BackgroundState:
    start: np.ndarray
    position: np.ndarray
    height: np.ndarray
    tau: np.ndarray
    stepped_time: np.ndarray
    hit: np.ndarray
    fast_forwards: np.ndarray

    @property
    def censored(self) -> np.ndarray:
        return ~self.hit


@dataclass
class RieszEstimate:
    edges: np.ndarray
    counts: np.ndarray
    means: np.ndarray
    stderr: np.ndarray
    target: np.ndarray
    paths: int
    censored_fraction: float
    min_hits: int = 100
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def low_confidence(self) -> np.ndarray:
        return self.counts < self.min_hits

    @property
    def usable(self) -> bool:
        return self.censored_fraction <= Settings().MAX_CENSORED_FRACTION


@dataclass
class PairSequences:
    """Sequências observadas de (X, Y) com a referência |X|_t.

    No motor de árvore cada linha é um caminho raiz-folha com peso igual
    à probabilidade da folha; no Monte Carlo é a sequência intercalada
    de um caminho com peso 1/N.
    """

    x: np.ndarray
    y: np.ndarray
    reference: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]


@dataclass
class ZSequences:
    """Entradas da construção esparsa de Z sobre a sequência observada.

    `operators[s]` é (V - aI) dt do subpasso s -> s+1, ou None quando o
    subpasso é um salto (sem deriva).
    """

    x: np.ndarray
    xtilde: np.ndarray
    z: np.ndarray
    dy: np.ndarray
    reference: np.ndarray
    operators: list
    weights: np.ndarray
    nodes: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.xtilde.shape[0]
