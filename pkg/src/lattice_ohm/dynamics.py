"""Non-autonomous one-particle evolution and the Liouville flow of the symbol.

The propagator is advanced with the exponential midpoint rule

    U <- exp(-i dt H(t + dt/2)) U,

which is the second-order Magnus integrator.  Whenever the vector potential
is constant over a step (before and after the pulse, or between pulses) the
step exponential is reused.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .disorder import DisorderSpec, Realization
from .errors import CheckpointError, ContractError, NumericalError
from .lattice_fields import Box, VectorPotential
from .onebody import PeierlsHamiltonian, Symbol

DRIFT_ABORT = 1e-6


@dataclass(frozen=True, eq=False)
class EvolutionRun:
    box: Box
    realization: Realization | None
    spec: DisorderSpec | None
    vp: VectorPotential | None
    t0: float
    t_end: float
    dt: float
    times: np.ndarray
    unitaries: tuple
    drift: float
    hamiltonian: PeierlsHamiltonian

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 0.5 * self.dt + 1e-12:
            raise CheckpointError(f"no checkpoint at t={t}")
        return i

    def unitary(self, t: float) -> np.ndarray:
        return self.unitaries[self.index_of(t)]


def padded_half_side(l_field: float, support_radius: float, duration: float, d: int) -> int:
    """Box half-side large enough that nothing reaches the boundary during the run."""
    return int(math.ceil(l_field * support_radius)) + int(math.ceil(6 * d * max(duration, 0.0)))


def _step(h: np.ndarray, dt: float) -> np.ndarray:
    w, v = scipy.linalg.eigh(h)
    return (v * np.exp(-1j * dt * w)) @ v.conj().T


def evolve(box: Box, realization: Realization | None, spec: DisorderSpec | None,
           vp: VectorPotential | None, t0: float, t_end: float, dt: float,
           checkpoint_times: Sequence[float] = (), mu: float = 0.0) -> EvolutionRun:
    """Propagate from ``t0`` to ``t_end``; store ``U_{t,t0}`` at ``t0``, ``t_end`` and the requested times."""
    if not t_end >= t0:
        raise ContractError("t_end must be >= t0")
    if not dt > 0:
        raise ContractError("dt must be positive")
    ph = PeierlsHamiltonian(box, realization, spec, vp, mu)
    n_steps = int(math.ceil((t_end - t0) / dt - 1e-9))
    h = (t_end - t0) / n_steps if n_steps > 0 else dt
    wanted = {0, n_steps}
    for t in checkpoint_times:
        if t < t0 - 1e-12 or t > t_end + 1e-12:
            raise CheckpointError(f"checkpoint {t} outside [{t0}, {t_end}]")
        wanted.add(int(round((t - t0) / h)) if n_steps > 0 else 0)
    u = np.eye(box.n, dtype=complex)
    stored = {0: u.copy()}
    cache_key, cache_step = None, None
    drift = 0.0
    eye = np.eye(box.n)
    for k in range(1, n_steps + 1):
        tm = t0 + (k - 0.5) * h
        key = 0.0 if ph.field_is_off(tm) else float(vp.pulse.primitive(tm))
        if key != cache_key:
            step = _step(ph.matrix(tm), h)
            # only keep exponentials of steps where the field is frozen
            if vp is None or float(vp.pulse.values(tm)) == 0.0:
                cache_key, cache_step = key, step
            else:
                cache_key, cache_step = None, None
        else:
            step = cache_step
        u = step @ u
        if k in wanted:
            dev = float(np.abs(u.conj().T @ u - eye).max())
            drift = max(drift, dev)
            if dev > DRIFT_ABORT:
                raise NumericalError(f"unitarity drift {dev:.3e} at t={t0 + k * h}")
            stored[k] = u.copy()
    keys = sorted(stored)
    times = np.array([t0 + k * h for k in keys])
    return EvolutionRun(box, realization, spec, vp, float(t0), float(t_end), float(h), times,
                        tuple(stored[k] for k in keys), drift, ph)


def evolve_symbol(d0: Symbol, run: EvolutionRun, t: float) -> Symbol:
    """``d_t = U_{t,t0} d0 U_{t,t0}^dagger``."""
    u = run.unitary(t)
    return Symbol(u @ d0.entries @ u.conj().T)
