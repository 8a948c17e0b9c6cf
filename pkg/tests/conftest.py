import pytest

from kolmosphere.numkernels import seeded_rng


@pytest.fixture
def rng():
    return seeded_rng(12345)


def random_vectors(space, count, rng):
    """Complex Gaussian coefficient vectors, one per row."""
    return rng.standard_normal((count, space.dim)) + 1j * rng.standard_normal((count, space.dim))
