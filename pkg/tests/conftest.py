import numpy as np
import pytest

from hydrovrb import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def available_backends():
    out = ["python"]
    try:
        kernels.get_backend("compiled")
    except ImportError:
        pass
    else:
        out.append("compiled")
    return out


@pytest.fixture(params=available_backends())
def backend(request):
    return kernels.get_backend(request.param)


def random_unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
