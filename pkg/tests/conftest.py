import numpy as np
import pytest

from infoflow import _kernels_py, nn
from infoflow.env import World

try:
    from infoflow import _kernels as _compiled
except ImportError:  # pragma: no cover - extension not built
    _compiled = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
if _compiled is not None:
    BACKENDS.insert(0, pytest.param(_compiled, id="compiled"))


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per kernel implementation."""
    monkeypatch.setattr(nn, "kernels", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def world():
    return World()


class FreeSpace:
    """Exact dynamics of an empty arena, f(s, a) = s + a."""

    def __call__(self, s, a):
        return np.asarray(s, dtype=np.float64) + np.asarray(a, dtype=np.float64)


class TrueStep:
    """Oracle forward model: the environment's own step function."""

    def __init__(self, world):
        self.world = world

    def __call__(self, s, a):
        s = np.asarray(s, dtype=np.float64)
        if s.ndim == 1:
            return self.world.step(s, a)
        return self.world.step_many(s, a)


class Constant:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)

    def __call__(self, s, *rest):
        s = np.asarray(s)
        return np.broadcast_to(self.value, s.shape).copy()
