import numpy as np
import pytest

from mshem.cases import load_case_text
from mshem.cpf import CpfConfig, trace_cpf
from mshem.network import build_admittance, parse_case
from mshem.powerflow import LoadingDirection
from mshem.tracer import TracerConfig, trace_pv


@pytest.fixture(scope="session")
def case2():
    return parse_case(load_case_text("case2.m"))


@pytest.fixture(scope="session")
def case39():
    return parse_case(load_case_text("case39.m"))


@pytest.fixture(scope="session")
def y2(case2):
    return build_admittance(case2)


@pytest.fixture(scope="session")
def y39(case39):
    return build_admittance(case39)


@pytest.fixture(scope="session")
def dir2(case2):
    return LoadingDirection.proportional(case2)


@pytest.fixture(scope="session")
def dir39(case39):
    return LoadingDirection.proportional(case39)


@pytest.fixture(scope="session")
def curve2(case2, y2, dir2):
    return trace_pv(case2, y2, dir2, TracerConfig())


@pytest.fixture(scope="session")
def curve39(case39, y39, dir39):
    return trace_pv(case39, y39, dir39, TracerConfig())


@pytest.fixture(scope="session")
def cpf2(case2, y2, dir2):
    return trace_cpf(case2, y2, dir2, CpfConfig())


@pytest.fixture(scope="session")
def cpf39(case39, y39, dir39):
    return trace_cpf(case39, y39, dir39, CpfConfig())


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
