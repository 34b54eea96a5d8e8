import numpy as np
import pytest

from hsiseg import rbm


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rbm(rng, n_visible, n_hidden, scale=1.0):
    """A dense random RBM with weights and biases of order `scale`."""
    model = rbm.RbmModel(
        weights=rng.normal(0.0, scale, (n_visible, n_hidden)),
        visible_bias=rng.normal(0.0, scale, n_visible),
        hidden_bias=rng.normal(0.0, scale, n_hidden),
    )
    return model


@pytest.fixture
def small_rbm(rng):
    return random_rbm(rng, 4, 3)
