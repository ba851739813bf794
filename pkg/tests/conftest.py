import pytest

from ovals.evolve import evolve, fit_extinction, init_sphere
from ovals.experiment import ExperimentConfig, simulate
from ovals.soliton import solve_bowl


def spheroid_config(a, b=1.0, N=512, **kw):
    return ExperimentConfig(n=2, initial={"kind": "spheroid", "a": a, "b": b}, N=N, **kw)


@pytest.fixture(scope="session")
def run_2to1():
    return simulate(spheroid_config(2.0))


@pytest.fixture(scope="session")
def run_4to1():
    return simulate(spheroid_config(4.0))


@pytest.fixture(scope="session")
def run_4to1_coarse():
    return simulate(spheroid_config(4.0, N=256))


@pytest.fixture(scope="session")
def run_43to1_coarse():
    return simulate(spheroid_config(4.3, N=256))


@pytest.fixture(scope="session")
def sphere_run():
    run = evolve(init_sphere(2, 1.0, 512))
    run.T = fit_extinction(run).T
    return run


@pytest.fixture(scope="session")
def bowl2():
    return solve_bowl(2)


@pytest.fixture(scope="session")
def bowl3():
    return solve_bowl(3)


@pytest.fixture(scope="session")
def bowl2_long():
    return solve_bowl(2, rho_max=200.0)
