import numpy as np
import pytest

from kwslite import (
    ArchSpec,
    Context,
    Conv,
    Dense,
    Flatten,
    LowRank,
    Pool,
    SoftmaxOut,
    Stride,
    validate,
)
from kwslite.errors import ShapeError


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_window(rng, arch, scale=1.0):
    return (scale * rng.standard_normal((arch.input_t, arch.input_f))).astype(np.float32)


def random_arch(rng, max_convs=2):
    """A small random-but-valid layer stack for property-style tests."""
    for _ in range(200):
        left = int(rng.integers(2, 10))
        right = int(rng.integers(1, 6))
        layers = []
        n_convs = int(rng.integers(1, max_convs + 1))
        for _ in range(n_convs):
            layers.append(
                Conv(
                    int(rng.integers(1, 6)),
                    int(rng.integers(1, 9)),
                    int(rng.integers(1, 7)),
                    Stride(int(rng.integers(1, 3)), int(rng.integers(1, 3))),
                    Pool(int(rng.integers(1, 3)), int(rng.integers(1, 4))),
                )
            )
        layers.append(Flatten())
        if rng.random() < 0.5:
            layers.append(LowRank(int(rng.integers(1, 13))))
        for _ in range(int(rng.integers(0, 3))):
            layers.append(Dense(int(rng.integers(1, 25))))
        layers.append(SoftmaxOut(int(rng.integers(2, 7))))
        arch = ArchSpec("random", Context(left, right), tuple(layers))
        try:
            validate(arch)
        except ShapeError:
            continue
        return arch
    raise AssertionError("could not sample a valid architecture in 200 tries")
