import factory
import numpy as np
import pytest
from typer.testing import CliRunner

from app.models import DriftSpec, JumpLaw, JumpSpec, TimeGrid
from app.treespace import build_tree


class TimeGridFactory(factory.Factory):
    """Fábrica de grades uniformes curtas."""

    class Meta:
        model = TimeGrid

    t_max = 1.0
    dt = 0.05


class JumpSpecFactory(factory.Factory):
    class Meta:
        model = JumpSpec

    rate = 3.0
    law = JumpLaw.NORMAL
    scale = 0.5
    subordination_cap = True


class DriftSpecFactory(factory.Factory):
    """Curvatura do OU: V = -I com decaimento a."""

    class Meta:
        model = DriftSpec

    dim = 2
    a = 0.0
    matrix = factory.LazyAttribute(lambda o: -np.eye(o.dim))


class TreeFactory(factory.Factory):
    """Árvore diádica uniforme."""

    class Meta:
        model = build_tree

    depth = 2
    branching = factory.LazyAttribute(lambda o: [2] * o.depth)
    probs = None


@pytest.fixture(autouse=True)
def isolated_output(monkeypatch, tmp_path):
    """Direciona OUTPUT_DIR para um diretório temporário."""
    monkeypatch.setenv('OUTPUT_DIR', str(tmp_path / 'results'))
    return tmp_path / 'results'


@pytest.fixture
def cli():
    """Executor da CLI em processo."""
    return CliRunner()


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def coin():
    """Moeda justa de um passo."""
    return build_tree(1, [2], [[0.5, 0.5]])


@pytest.fixture
def skewed_tree():
    """Árvore de dois níveis com linhas por nó interno."""
    return build_tree(2, [2, 2], [[0.3, 0.7], [0.5, 0.5], [0.2, 0.8]])


@pytest.fixture
def grid():
    return TimeGridFactory()
