from __future__ import annotations

import numpy as np
import pytest

from smstree.cli import default_curves_path
from smstree.copulas.families import BivariateCopula
from smstree.curves import load_curves
from smstree.empirical import Dataset


@pytest.fixture(scope="session")
def default_curves():
    """The bundled gaussian/gumbel/clayton curves (default priors, step 0.01)."""
    return load_curves(default_curves_path())


def copula_dataset(family, theta, m, seed, names=("X", "Y")):
    """Two standard-normal-marginal columns joined by one copula."""
    from scipy import special

    uv = BivariateCopula(family, theta).sample(m, seed)
    return Dataset(names, special.ndtri(uv))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
