import numpy as np
import pytest

from deepfaith.data import synth_linear
from deepfaith.models import AdditiveModel, TargetedModel, train_model
from deepfaith.perturb import RemovalStrategy


def one_based(perm):
    """Convert a 1-based ordering (as written in worked examples) to 0-based."""
    return np.asarray(perm, dtype=int) - 1


def additive_task(n, seed, bias=0.5):
    """Additive two-class model whose removal effect is sum(c_i * x_i) over removed i.

    With a zero baseline and x, c >= 0 the target probability stays within
    [bias, bias + sum(c * x)] so the prediction never flips when bias >= 0.5
    and the total stays below 0.5.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 1.0, size=n)
    c = rng.uniform(0.0, 1.0, size=n)
    c *= rng.uniform(0.1, 0.45) / (c @ x)
    model = AdditiveModel(bias, c)
    return model, TargetedModel(model, 1), x[:, None], c, RemovalStrategy.zeros(n)


@pytest.fixture(scope="session")
def linear_task():
    ds, coefs = synth_linear(8, 1000, seed=0)
    model = train_model(ds, "mlp", {"epochs": 100}, seed=0)
    return ds, coefs, model, RemovalStrategy(ds.train_mean())
