import pytest

from poischain import get_system


@pytest.fixture(scope="session")
def su2():
    return get_system("su2")


@pytest.fixture(scope="session")
def jordan_schwinger():
    return get_system("jordan_schwinger")


@pytest.fixture(scope="session")
def sb2c():
    return get_system("sb2c_deformed")


@pytest.fixture(scope="session")
def triangular():
    return get_system("triangular")
