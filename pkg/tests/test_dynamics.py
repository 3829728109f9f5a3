import numpy as np
import pytest
import scipy.linalg

from lattice_ohm.disorder import DisorderSpec, sample_realization
from lattice_ohm.dynamics import evolve, evolve_symbol, padded_half_side
from lattice_ohm.errors import CheckpointError, ContractError
from lattice_ohm.lattice_fields import Pulse, SpatialProfile, VectorPotential, build_box
from lattice_ohm.onebody import diagonalize, fermi_symbol, hamiltonian


@pytest.fixture(scope="module")
def chain():
    spec = DisorderSpec(master_seed=5)
    box = build_box(1, 6)
    return box, spec, sample_realization(spec, box, 0)


def _vp(eta=0.5):
    return VectorPotential(Pulse.bump_derivative(0.0, 1.0), SpatialProfile("indicator", 1), [1.0], 3.0, eta)


def test_field_free_evolution_is_exact(chain):
    box, spec, real = chain
    run = evolve(box, real, spec, None, 0.0, 1.0, 0.1, [0.5])
    h = hamiltonian(box, real, spec).entries
    assert np.allclose(run.unitary(1.0), scipy.linalg.expm(-1j * h), atol=1e-12)
    assert np.allclose(run.unitary(0.5), scipy.linalg.expm(-0.5j * h), atol=1e-12)


def test_equilibrium_state_is_stationary_without_field(chain):
    box, spec, real = chain
    d0 = fermi_symbol(diagonalize(hamiltonian(box, real, spec)), 1.0)
    run = evolve(box, real, spec, None, 0.0, 2.0, 0.25)
    assert np.allclose(evolve_symbol(d0, run, 2.0).entries, d0.entries, atol=1e-12)


def test_midpoint_scheme_is_second_order(chain):
    box, spec, real = chain
    ref = evolve(box, real, spec, _vp(), 0.0, 1.0, 1e-3).unitary(1.0)
    errs = [np.abs(evolve(box, real, spec, _vp(), 0.0, 1.0, dt).unitary(1.0) - ref).max() for dt in (0.04, 0.02)]
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)


def test_driven_evolution_is_unitary(chain):
    box, spec, real = chain
    run = evolve(box, real, spec, _vp(2.0), 0.0, 1.0, 0.01, [0.3, 0.7])
    assert run.drift < 1e-12
    for u in run.unitaries:
        assert np.allclose(u.conj().T @ u, np.eye(box.n), atol=1e-12)
    assert len(run.unitaries) == 4


def test_checkpoints_are_validated(chain):
    box, spec, real = chain
    with pytest.raises(CheckpointError):
        evolve(box, real, spec, None, 0.0, 1.0, 0.1, [1.5])
    run = evolve(box, real, spec, None, 0.0, 1.0, 0.1)
    with pytest.raises(CheckpointError):
        run.unitary(0.5)
    with pytest.raises(ContractError):
        evolve(box, real, spec, None, 1.0, 0.0, 0.1)


def test_padded_half_side_grows_with_duration_and_dimension():
    assert padded_half_side(4, 1.0, 0.0, 1) == 4
    assert padded_half_side(4, 0.5, 1.0, 2) == 2 + 12


def test_zero_duration_and_zero_field(chain):
    box, spec, real = chain
    run = evolve(box, real, spec, _vp(), 0.5, 0.5, 0.1)
    assert np.array_equal(run.unitary(0.5), np.eye(box.n))
    free = evolve(box, real, spec, _vp(0.0), 0.0, 1.0, 0.05)
    h = hamiltonian(box, real, spec).entries
    assert np.allclose(free.unitary(1.0), scipy.linalg.expm(-1j * h), atol=1e-9)


def test_symbol_evolution_preserves_the_spectrum(chain):
    box, spec, real = chain
    d0 = fermi_symbol(diagonalize(hamiltonian(box, real, spec)), 1.0)
    run = evolve(box, real, spec, _vp(1.0), 0.0, 1.0, 0.01)
    assert np.allclose(evolve_symbol(d0, run, 1.0).spectrum(), d0.spectrum(), atol=1e-9)
