import numpy as np
import pytest

import strandfield as sf


@pytest.fixture(scope="session")
def scalp():
    return sf.canonical_scalp()


@pytest.fixture(scope="session")
def tube_field():
    """Single straight strand along +Y baked at 64^3 in a fixed box."""
    pts = np.stack([np.zeros(50), np.linspace(-0.1, 0.1, 50), np.zeros(50)],
                   axis=1).astype(np.float32)
    model = sf.HairModel([sf.Strand(pts)])
    aabb = np.array([[-0.15, -0.15, -0.15], [0.15, 0.15, 0.15]])
    field = sf.bake_field(model, sf.GridSpec(resolution=(64, 64, 64), aabb=aabb))
    return model, field


def straight_line_strand(n=11, length=0.1, axis=1):
    pts = np.zeros((n, 3), dtype=np.float32)
    pts[:, axis] = np.linspace(0.0, length, n)
    return sf.Strand(pts)
