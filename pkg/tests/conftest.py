import numpy as np
import pytest

from qcnnlab.data import load_idx, make_binary, split
from qcnnlab.synthetic import make_synthetic_dir


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("digits")
    make_synthetic_dir(out, num_per_class=120, seed=12345)
    return out


@pytest.fixture(scope="session")
def small_splits(data_dir):
    """160/40/40 stratified splits of the 240-sample synthetic corpus."""
    raw = load_idx(data_dir / "train-images-idx3-ubyte",
                   data_dir / "train-labels-idx1-ubyte")
    ds = make_binary(raw, 0, 7, 10, seed=7)
    tr, va, te = split(ds, (160 / 240, 40 / 240, 40 / 240))
    return tr.samples, va.samples, te.samples


@pytest.fixture(scope="session")
def trained_theta(small_splits):
    """A briefly trained 45-parameter vector for evaluation-path tests."""
    from qcnnlab.circuit import reference_plan
    from qcnnlab.training import TrainConfig, train

    train_set, val_set, _ = small_splits
    plan, _ = reference_plan()
    rng = np.random.default_rng(11)
    theta0 = rng.uniform(0, 2 * np.pi, plan.total_parameters)
    _, theta, _ = train(TrainConfig(epochs=2, seed=11), plan, train_set,
                        val_set, theta0)
    return theta
