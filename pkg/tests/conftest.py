import numpy as np
import pytest

from ghostflare.models.classifier import Classifier, build_default
from ghostflare.models.dataset import CLASS_NAMES
from ghostflare.models.layers import Conv2D, Dense, Flatten, MaxPool, ReLU
from ghostflare.optics.channel import ChannelParams
from ghostflare.utils.numkit import RngStream


def random_model(seed=0, size=8, classes=5) -> Classifier:
    """conv 4@3x3 -> relu -> maxpool 2 -> flatten -> dense, on size x size images."""
    stream = RngStream(seed)
    conv = Conv2D(stream.substream(0).uniform(-0.5, 0.5, (3, 3, 3, 4)), stream.substream(1).uniform(-0.1, 0.1, 4))
    pooled = (size - 2) // 2
    flat = pooled * pooled * 4
    dense = Dense(stream.substream(2).uniform(-0.5, 0.5, (flat, classes)), stream.substream(3).uniform(-0.1, 0.1, classes))
    return Classifier([conv, ReLU(), MaxPool(2), Flatten(), dense], (size, size, 3))


def linear_model(weights, bias=None, shape=(1, 1, 3)) -> Classifier:
    """Flatten followed by one dense layer."""
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.zeros(weights.shape[1]) if bias is None else np.asarray(bias, dtype=np.float64)
    return Classifier([Flatten(), Dense(weights, bias)], shape)


@pytest.fixture
def reference_params():
    return ChannelParams()


@pytest.fixture
def faint_params():
    """A weak flare so perceived images stay inside [0, 1]."""
    return ChannelParams(rho=0.002)


@pytest.fixture
def tiny_model():
    return random_model()


@pytest.fixture
def sign_model():
    """Untrained default network on 16x16 images with the eight sign classes."""
    return build_default(RngStream(3), 16, 16, list(CLASS_NAMES))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
