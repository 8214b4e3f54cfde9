import pytest

from synth_mnist import write_digit_files


@pytest.fixture(scope="session")
def mnist_files(tmp_path_factory):
    """IDX image/label paths for the rendered 0-vs-1 digit set."""
    directory = tmp_path_factory.mktemp("idx")
    return write_digit_files(directory, count=4200, seed=123)
