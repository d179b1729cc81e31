from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.models import ApMode, Engine, GeometryKind, JumpLaw, ZMode


class Report(BaseModel):
    ok: bool


class SubordinationReport(Report):
    worst_violation: float = 0.0
    worst_time: float | None = None
    worst_path: int | None = None
    violations: int = 0


class SparsityReport(Report):
    max_ratio: float
    witness_level: int | None = None
    witness_atom: str | None = None
    atoms_checked: int = 0
    empty_atoms: int = 0
    exact: bool = True
    note: str | None = None


class DominationReport(Report):
    constant: float
    worst_ratio: float
    violations: int = 0
    witness_path: int | None = None
    slack: float = 0.0
    literal_violations: int | None = None
    literal_worst_ratio: float | None = None
    crossing_share: float | None = None


class LevelReport(Report):
    masses: list[float]
    worst_ratio: float


class InductiveReport(Report):
    levels: int
    worst_excess: float


class MonotonicityReport(Report):
    thresholds: list[float]
    levels_checked: int
    deeper_violations: int = 0


class DecayReport(Report):
    worst_increase: float
    step: int | None = None


class TelescopingReport(Report):
    residual: float
    witness_path: int | None = None


class WeakTypePoint(BaseModel):
    lam: float
    empirical: float
    bound: float
    sigma: float
    ok: bool


class WeakTypeReport(Report):
    points: list[WeakTypePoint]
    norm: float
    excluded: int = 0
    bellman_mean: float = 0.0
    bellman_stderr: float = 0.0


class ApReport(BaseModel):
    q_p: float
    p: float
    mode: ApMode
    attaining: list[tuple[int, int]] = []
    candidates: int = 0


class WeightedReport(Report):
    lhs: float
    rhs: float
    ratio: float
    q_p: float
    p: float


class SweepRow(BaseModel):
    trial: int
    p: float
    q_p: float
    lhs: float
    rhs: float
    ratio: float


class CheckResult(BaseModel):
    name: str
    ok: bool
    detail: str = ''


class RunConfig(BaseModel):
    """Configuração comum a todos os comandos."""

    model_config = ConfigDict(extra='forbid')

    seed: int | None = None
    output: Path | None = None
    dump_paths: Path | None = None


class TreeRunConfig(RunConfig):
    engine: Engine = Engine.TREE
    trials: int = Field(default=200, ge=1)
    depth: int = Field(default=6, ge=0, le=12)
    max_branching: int = Field(default=2, ge=1, le=4)
    tree_file: Path | None = None


class SparsityConfig(TreeRunConfig):
    paths: int = Field(default=20_000, ge=1)
    t_max: float = Field(default=1.0, gt=0)
    dt: float = Field(default=0.01, gt=0)
    jump_rate: float = Field(default=3.0, ge=0)
    jump_scale: float = Field(default=0.5, ge=0)


class DominationYConfig(SparsityConfig):
    jump_law: JumpLaw = JumpLaw.RADEMACHER
    constant: float = 8.0


class WeakTypeConfig(RunConfig):
    engine: Engine = Engine.MC
    paths: int = Field(default=20_000, ge=1)
    t_max: float = Field(default=1.0, gt=0)
    dt: float = Field(default=0.01, gt=0)
    a: float = Field(default=0.0, ge=0)
    dim: int = Field(default=2, ge=1)
    volatility: float = Field(default=1.0, gt=0)
    jump_rate: float = Field(default=0.0, ge=0)
    jump_scale: float = Field(default=0.3, ge=0)
    lambdas: list[float] = [0.5, 1.0, 2.0, 4.0, 8.0]

    @field_validator('lambdas', mode='before')
    @classmethod
    def split_lambdas(cls, value):
        if isinstance(value, str):
            return [float(item) for item in value.split(',') if item]
        return value


class DominationZConfig(WeakTypeConfig):
    mode: ZMode = ZMode.CONTINUOUS
    reference: str = Field(default='closure', pattern='^(closure|sample)$')
    trials: int = Field(default=200, ge=1)
    depth: int = Field(default=6, ge=1, le=12)
    max_branching: int = Field(default=2, ge=1, le=4)


class ApSweepConfig(TreeRunConfig):
    p: float = Field(default=2.0, gt=1)
    weight_spread: float = Field(default=2.0, gt=0)
    exhaustive: bool = True


class DoobSweepConfig(TreeRunConfig):
    exponents: list[float] = [1.5, 2.0, 3.0]
    weight_spread: float = Field(default=2.0, gt=0)

    @field_validator('exponents', mode='before')
    @classmethod
    def split_exponents(cls, value):
        if isinstance(value, str):
            return [float(item) for item in value.split(',') if item]
        return value


class SparseWeightedConfig(TreeRunConfig):
    p: float = Field(default=2.0, gt=1)
    weight_spread: float = Field(default=2.0, gt=0)


class ExtrapolateConfig(RunConfig):
    r: float = Field(default=2.0, gt=1)
    p: float = Field(default=4.0, gt=1)
    b: float = Field(default=1.0, ge=1)
    base_constant: float = Field(default=8.0, gt=0)


class RieszConfig(RunConfig):
    geometry: GeometryKind = GeometryKind.TORUS
    n: int = Field(default=1, ge=1)
    alpha: float = Field(default=0.0, ge=0)
    f: str = 'cos'
    paths: int = Field(default=100_000, ge=1)
    y0: float = Field(default=8.0, gt=0)
    dt: float = Field(default=1e-3, gt=0)
    t_max: float = Field(default=400.0, gt=0)
    bins: int | None = Field(default=None, ge=2)
    bridge: bool = True
    far_height: float | None = None
    epsilon: float = Field(default=0.05, gt=0)
    tolerance: float = Field(default=0.1, gt=0)
    sensitivity: bool = False
    hitting_paths: int = Field(default=2000, ge=0)


class DimSweepConfig(RieszConfig):
    dims: list[int] = [1, 2, 4, 8]
    p: float = Field(default=2.0, gt=1)
    weighted: bool = False

    @field_validator('dims', mode='before')
    @classmethod
    def split_dims(cls, value):
        if isinstance(value, str):
            return [int(item) for item in value.split(',') if item]
        return value
