import pytest

from mvintent import model as M
from mvintent import simulator as S


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small synthetic dataset for fast end-to-end tests."""
    config = S.SyntheticConfig(
        n_items=600,
        view_dims=(12, 10, 8),
        class_counts=(4, 3, 2),
        shared_latent_dim=6,
        seed=11,
    )
    return S.generate_synthetic(config)


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_dataset):
    config = M.ModelConfig(
        views=list(tiny_dataset.views),
        aligned_dim=8,
        shared_dim=8,
        aligned_hidden=8,
        loss_weights=M.LossWeights(lambda2=0.002),
        epochs=8,
        seed=11,
    )
    return M.train(tiny_dataset, config).checkpoint


@pytest.fixture(scope="session")
def tiny_index(tiny_dataset, tiny_checkpoint):
    return S.build_index(tiny_dataset, tiny_checkpoint)


@pytest.fixture(scope="session")
def tiny_protocol():
    return S.SimProtocol(collections_per_config=5, size_min=3, size_max=6, k=20, seed=11)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tiny_dataset, tmp_path_factory):
    from mvintent.dataio import save_dataset

    path = tmp_path_factory.mktemp("tinydata")
    save_dataset(tiny_dataset, path)
    return path


@pytest.fixture(scope="session")
def tiny_checkpoint_path(tiny_checkpoint, tmp_path_factory):
    from mvintent.dataio import save_checkpoint

    path = tmp_path_factory.mktemp("tinyckpt") / "checkpoint.mvdc"
    save_checkpoint(tiny_checkpoint, path)
    return path
