"""Session-scoped economies and plans shared across test modules.

Building a plan derives punishment thresholds (LPs plus a couple of
bisections), so the expensive ones are cached here once per session.
"""

import pytest

from netfolk.fixtures import economy
from netfolk.strategy import build_plan


@pytest.fixture(scope="session")
def ring4():
    return economy("contribution-ring-4")


@pytest.fixture(scope="session")
def ring4_plan(ring4):
    return build_plan(ring4.game, ring4.net, ring4.v, 0.95)


@pytest.fixture(scope="session")
def ring5():
    return economy("contribution-ring-5")


@pytest.fixture(scope="session")
def ring5_plan(ring5):
    return build_plan(ring5.game, ring5.net, ring5.v, 0.95)


@pytest.fixture(scope="session")
def chorded6():
    return economy("contribution-chorded-6")


@pytest.fixture(scope="session")
def chorded6_plan(chorded6):
    return build_plan(chorded6.game, chorded6.net, chorded6.v, 0.95)


@pytest.fixture(scope="session")
def theta8():
    return economy("contribution-theta-8")


@pytest.fixture(scope="session")
def theta8_plan(theta8):
    return build_plan(theta8.game, theta8.net, theta8.v, 0.95)


@pytest.fixture(scope="session")
def ring12():
    return economy("contribution-ring-12")


@pytest.fixture(scope="session")
def ring12_plan(ring12):
    return build_plan(ring12.game, ring12.net, ring12.v, 0.95)


@pytest.fixture(scope="session")
def web():
    return economy("contribution-web")


@pytest.fixture(scope="session")
def web_plan(web):
    return build_plan(web.game, web.net, web.v, 0.95)


@pytest.fixture(scope="session")
def square():
    return economy("matched-bonus-square")


@pytest.fixture(scope="session")
def square_plan(square):
    # high enough that realized-draw compensation always stays feasible
    return build_plan(square.game, square.net, square.v, 0.99)
