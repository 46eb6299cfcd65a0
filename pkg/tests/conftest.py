import pytest

from opdsim import generate_dataset

CANONICAL_SEED = 42


@pytest.fixture(scope="session")
def dataset42():
    """The canonical cohort most tests share; generated once per session."""
    return generate_dataset(CANONICAL_SEED)
