import pathlib

import numpy as np
import pytest

from smjls import load_system
from smjls.model import ModeMatrices, SystemDef

DATA = pathlib.Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def contractive_path() -> pathlib.Path:
    return DATA / "two_mode_contractive.json"


@pytest.fixture(scope="session")
def graph_path() -> pathlib.Path:
    return DATA / "graph_constrained.json"


@pytest.fixture(scope="session")
def contractive_system(contractive_path):
    """Two 3-state modes, two transition kernels, unconstrained switching."""
    return load_system(contractive_path)


@pytest.fixture(scope="session")
def graph_system(graph_path):
    """Stability-only fixture whose switching follows a three-edge graph."""
    return load_system(graph_path)


@pytest.fixture(scope="session")
def damped_system(contractive_system):
    """Heavily damped variant: fast mixing makes short storage memories work."""
    modes = tuple(
        ModeMatrices(0.7 * md.A, md.B, 0.5 * md.C, 0.5 * md.D)
        for md in contractive_system.modes
    )
    return SystemDef(
        modes,
        contractive_system.transitions,
        contractive_system.switching,
        contractive_system.p0,
    )


@pytest.fixture(scope="session")
def brl_certificate(contractive_system):
    """The window-1 contractiveness certificate, solved once per session."""
    from smjls import certify

    result = certify(contractive_system, "brl", 1)
    assert isinstance(result, tuple), f"expected feasibility, got {result}"
    M, cert = result
    assert M == 1
    return cert


@pytest.fixture(scope="session")
def stability_certificate(graph_system):
    """The window-1 stability certificate for the graph-constrained system."""
    from smjls import certify

    result = certify(graph_system, "stability", 2)
    assert isinstance(result, tuple), f"expected feasibility, got {result}"
    M, cert = result
    assert M == 1
    return cert


def random_stochastic(rng: np.random.Generator, size: int, positive: bool = True):
    """Row-stochastic matrix; strictly positive entries unless disabled."""
    alpha = np.ones(size) if positive else rng.uniform(0.2, 2.0, size)
    return rng.dirichlet(alpha, size=size)
