import numpy as np
import pytest

from dpan import features as feat
from dpan import simulate


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """3 devices x 2 mild conditions x 3 patterns x 3 repeats = 54 images."""
    root = tmp_path_factory.mktemp("small_ds")
    conditions = [simulate.ENV_IDEAL, simulate.EnvCondition(30.0, simulate.VOLTAGE_NOMINAL)]
    return simulate.generate_dataset(
        root, m=3, conditions=conditions, repeats=3, seed=1234, export_hex=True
    )


@pytest.fixture(scope="session")
def small_weights():
    return feat.init_weights(feat.ExtractorConfig(0.125, feat.SeededRandom(11)))


@pytest.fixture(scope="session")
def small_features(small_dataset, small_weights):
    phen = [small_dataset.load_phenotype(r) for r in small_dataset.records]
    X = feat.extract_many(small_weights, phen)
    y = np.array([r.device_id for r in small_dataset.records])
    return X, y
