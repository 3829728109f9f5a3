import numpy as np
import pytest

from lattice_ohm.disorder import DisorderSpec, sample_realization
from lattice_ohm.lattice_fields import build_box
from lattice_ohm.onebody import diagonalize, hamiltonian


def make_eig(d=1, half_side=6, lam=1.0, seed=0, index=0):
    spec = DisorderSpec(lam=lam, master_seed=seed)
    box = build_box(d, half_side)
    real = sample_realization(spec, box, index)
    return diagonalize(hamiltonian(box, real, spec))


@pytest.fixture(scope="session")
def eig1():
    """Disordered chain of 13 sites."""
    return make_eig(1, 6, 1.0, seed=3)


@pytest.fixture(scope="session")
def eig2():
    """Disordered 5x5 square patch."""
    return make_eig(2, 2, 0.7, seed=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
