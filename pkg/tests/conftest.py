import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def golden_entries():
    return json.loads((FIXTURES / "golden.json").read_text())
