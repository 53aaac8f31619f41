import pytest

from noisyaloha.model import FiniteModel, PoissonModel

# (lambda, eps) scenarios used across test modules
EX1 = (0.02, 0.4)
EX3 = (0.005, 0.3)


@pytest.fixture
def ex1_finite():
    lam, eps = EX1
    return FiniteModel.matching_rate(2, lam, eps, 0)


@pytest.fixture
def ex1_poisson():
    lam, eps = EX1
    return PoissonModel(lam, eps, 0)
