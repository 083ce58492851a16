import pytest

from duopoly_escapes.market import MarketParams


@pytest.fixture
def params():
    return MarketParams()
