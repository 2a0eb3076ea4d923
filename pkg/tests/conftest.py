import pytest

from helpers import make_block_dataset, write_idx_tree


@pytest.fixture(scope="session")
def synthetic_idx_root(tmp_path_factory):
    """IDX file tree with a small learnable synthetic dataset under mnist/."""
    root = tmp_path_factory.mktemp("idxdata")
    train = make_block_dataset(25, seed=1)
    test = make_block_dataset(5, seed=2, split="test")
    write_idx_tree(root, "mnist", train, test)
    return root


@pytest.fixture
def synthetic_data_env(synthetic_idx_root, monkeypatch):
    monkeypatch.setenv("ALEXBENCH_DATA_DIR", str(synthetic_idx_root))
    return synthetic_idx_root
