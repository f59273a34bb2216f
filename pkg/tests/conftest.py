"""Shared fixtures: small systems whose dimensions are known in closed form."""
import json
import math

import numpy as np
import pytest

from affdim.ifs import IFSSpec, validate
from affdim.randomness import PerturbationField, make_distribution

LOG3_LOG2 = math.log(3) / math.log(2)
CARPET_DIM = 1.0 + math.log(5 / 2) / math.log(3)


def build(maps):
    return validate(IFSSpec.from_maps(maps))


@pytest.fixture
def sierpinski():
    half = [[0.5, 0.0], [0.0, 0.5]]
    return build([(half, [0.0, 0.0]), (half, [0.5, 0.0]), (half, [0.25, 0.5])])


@pytest.fixture
def carpet():
    """Five copies of diag(1/2, 1/3), dimension 1 + log(5/2)/log 3."""
    t = [[0.5, 0.0], [0.0, 1.0 / 3.0]]
    return build([(t, [0.0, 0.0]), (t, [0.5, 0.0]), (t, [0.0, 1 / 3]),
                  (t, [0.5, 1 / 3]), (t, [0.25, 2 / 3])])


@pytest.fixture
def two_diagonal():
    return build([([[0.5, 0.0], [0.0, 0.5]], [0.0, 0.0]),
                  ([[0.3, 0.0], [0.0, 0.3]], [0.6, 0.0])])


@pytest.fixture
def interval():
    """Two halvings whose attractor is [0, 1] x {0}."""
    half = [[0.5, 0.0], [0.0, 0.5]]
    return build([(half, [0.0, 0.0]), (half, [0.5, 0.0])])


@pytest.fixture
def gaussian_field():
    return PerturbationField(seed=11, dist=make_distribution("gaussian", 2, sigma=0.05))


@pytest.fixture
def still_field():
    """The unperturbed system."""
    return PerturbationField(seed=0, dist=make_distribution("uniform-ball", 2, radius=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_contraction(rng, d, low=0.1, high=0.95):
    a = rng.normal(size=(d, d))
    return a * rng.uniform(low, high) / np.linalg.norm(a, 2)


@pytest.fixture
def write_config(tmp_path):
    """Write a run config dict to a temp file and return its path."""
    def _write(doc, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return _write


SIERPINSKI_MAPS = [
    {"matrix": [[0.5, 0.0], [0.0, 0.5]], "translation": [0.0, 0.0]},
    {"matrix": [[0.5, 0.0], [0.0, 0.5]], "translation": [0.5, 0.0]},
    {"matrix": [[0.5, 0.0], [0.0, 0.5]], "translation": [0.25, 0.5]},
]
