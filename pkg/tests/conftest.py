import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anthrokit.fixture import capsule_person, ngon_prism, unit_cube


@pytest.fixture(scope="session")
def capsule():
    return capsule_person()


@pytest.fixture(scope="session")
def capsule_lowres():
    return capsule_person(segments=20, rings=30)


@pytest.fixture(scope="session")
def cube_with_landmarks():
    return unit_cube()


@pytest.fixture(scope="session")
def prism64():
    return ngon_prism(64, 0.15, 1.0)
