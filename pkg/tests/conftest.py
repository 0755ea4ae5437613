import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_profile():
    from stvaudit.ballots import parse_blt

    data = (FIXTURES / "almond_earn_2012_synthetic.blt").read_bytes()
    return parse_blt(data)
