import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sd(rng, shape):
    """Random signed-digit arrays in {-1, 0, 1}."""
    return rng.integers(-1, 2, size=shape).astype(np.int8)


def small_net(K, N, q, M=2):
    """Tiny conv(+pool) chain; one or two levels."""
    from olfuse.network import LayerKind, LayerSpec, NetworkSpec

    if q == 1:
        layers = (LayerSpec(LayerKind.CONV, K, 1, N, K + 5, M, True),)
    else:
        ifm = 3 * K + 1
        layers = (
            LayerSpec(LayerKind.CONV, K, 1, N, ifm, M, True),
            LayerSpec(LayerKind.POOL, 2, 2, M, ifm - K + 1),
            LayerSpec(LayerKind.CONV, K, 1, M, K + 1, M, True),
        )
    return NetworkSpec(f"k{K}n{N}q{q}", layers)


SMALL_CONFIGS = [(k, nch, q) for k in (1, 3, 5) for nch in (1, 3) for q in (1, 2)]
