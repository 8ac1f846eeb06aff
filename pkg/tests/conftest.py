import pytest

from viewrace.model import GameConfig, PlayerParams, threshold_profile

X_STAR = 0.23


@pytest.fixture
def fig2():
    return GameConfig.symmetric(10, lam=100.0, gamma=70.0, p=100.0)


@pytest.fixture
def fig2_profile():
    return threshold_profile([X_STAR] * 10)


@pytest.fixture
def degenerate():
    return GameConfig.symmetric(4, lam=50.0, gamma=70.0, p=100.0)


@pytest.fixture
def sorted_gamma():
    return GameConfig((PlayerParams(100.0, 70.0, 1.0), PlayerParams(100.0, 60.0, 1.0)))
