import numpy as np
import pytest

from kahlergg.construction import build_construction
from kahlergg.profiles import Interval
from kahlergg.surfaces import (build_sphere_surface, build_torus_surface,
                               gamma_constant, gamma_cos)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture()
def announce():
    def _announce(num: int, label: str, ok: bool, detail: str) -> None:
        line = f"[criterion {num}] {'PASS' if ok else 'FAIL'}  {label}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)

    return _announce

H_SCALE = float(np.pi * np.sqrt(6.0))      # makes the torus Chern integral exactly 1
SPHERE_RADIUS = float(np.sqrt(0.625))      # makes the sphere Chern integral exactly 1


@pytest.fixture(scope="session")
def interval():
    return Interval(0.0, 1.0)


@pytest.fixture(scope="session")
def torus_data(interval):
    surface, a = build_torus_surface(H_SCALE, gamma_cos(3.0, 0.5), interval, 2.0)
    return build_construction(interval, a, surface)


@pytest.fixture(scope="session")
def torus_inf_data(interval):
    surface, a = build_torus_surface(H_SCALE, gamma_constant("inf"), interval, 2.0)
    return build_construction(interval, a, surface)


@pytest.fixture(scope="session")
def sphere_data(interval):
    gammas = {"south": gamma_constant(3.0), "north": gamma_constant(3.0)}
    surface, a = build_sphere_surface(SPHERE_RADIUS, gammas, interval, 2.0)
    return build_construction(interval, a, surface)


@pytest.fixture(scope="session")
def torus_subject(torus_data):
    from kahlergg.verify import subject_from_construction
    return subject_from_construction(torus_data)


@pytest.fixture(scope="session")
def fs_subject():
    from kahlergg.verify import subject_from_fs
    return subject_from_fs()
