import numpy as np
import pytest

from flim.synthetic import generate_fixture


@pytest.fixture(scope="session")
def blob_project(tmp_path_factory):
    """Small synthetic project shared by service/CLI tests."""
    root = tmp_path_factory.mktemp("blobs")
    return generate_fixture(root, n_images=6, n_train=2, size=64, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
