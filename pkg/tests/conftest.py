import numpy as np
import pytest

from cloudup.network import NetConfig


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def tiny_net():
    """Smallest useful network: fast forward passes in property loops."""
    return NetConfig(embed_dim=6, edge_widths=(6,), graph_k=4, k=4, rmax=8,
                     query_dim=6, value_dim=6, weight_hidden=(8,),
                     offset_hidden=(6,))


def random_cloud(rng, n, spread=1.0):
    return spread * rng.normal(size=(n, 3))
