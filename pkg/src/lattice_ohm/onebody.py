"""One-particle operators on a box: Laplacian, Peierls Hamiltonian, spectra.

Conventions
-----------
* ``laplacian``: ``2d`` on the diagonal, ``-1`` between nearest neighbours
  inside the box (open boundary).
* Peierls coupling: ``<e_x, H e_y> = -exp(i int_x^y A . dl)`` for
  neighbouring ``x, y``.
* The quasi-free state with symbol ``d`` satisfies
  ``rho(a*(f) a(g)) = <g, d f>``, hence ``rho(a*_x a_y) = d[y, x]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .disorder import DisorderSpec, Realization
from .errors import CapacityError, ContractError, GeometryError, NumericalError
from .lattice_fields import Box, VectorPotential, nearest_bonds

EIGEN_CAP = 2500
CLUSTER_GAP = 1e-9


@dataclass(frozen=True, eq=False)
class HermitianOp:
    box: Box
    entries: np.ndarray

    def __post_init__(self):
        m = self.entries
        scale = max(np.abs(m).max(initial=0.0), 1e-300)
        if np.abs(m - m.conj().T).max(initial=0.0) > 1e-12 * scale:
            raise ContractError("operator is not Hermitian")

    @property
    def norm_max(self) -> float:
        return float(np.abs(self.entries).max(initial=0.0))


@dataclass(frozen=True, eq=False)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    box: Box
    norm_max: float

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.eigenvectors)

    def matrix(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass(frozen=True, eq=False)
class Symbol:
    """One-particle density matrix ``0 <= d <= 1``."""

    entries: np.ndarray

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def check(self, tol: float = 1e-10) -> None:
        m = self.entries
        if np.abs(m - m.conj().T).max(initial=0.0) > tol:
            raise NumericalError("symbol is not Hermitian")
        ev = self.spectrum()
        if ev.min(initial=0.0) < -tol or ev.max(initial=0.0) > 1 + tol:
            raise NumericalError(f"symbol spectrum outside [0,1]: [{ev.min()}, {ev.max()}]")


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------
def _forward_bonds(box: Box):
    """Each unordered interior bond once, as (tail, head) with head = tail + e_k."""
    bonds = nearest_bonds(box, "interior")
    fwd = (bonds.heads - bonds.tails).sum(axis=1) == 1
    tails, heads = bonds.tails[fwd], bonds.heads[fwd]
    return tails, heads, box.indices(tails), box.indices(heads)


def laplacian(box: Box, mu: float = 0.0) -> HermitianOp:
    """Open-boundary discrete Laplacian, optionally shifted by a constant ``mu``."""
    h = np.zeros((box.n, box.n))
    h[np.diag_indices(box.n)] = 2.0 * box.d + mu
    _, _, it, ih = _forward_bonds(box)
    h[it, ih] = -1.0
    h[ih, it] = -1.0
    return HermitianOp(box, h)


def peierls_phase(vp: VectorPotential, t: float, bond) -> complex:
    """``exp(i int_0^1 A(t, a*y + (1-a)*x) . (y - x) da)`` for ``bond = (x, y)``."""
    x = np.asarray(bond[0])[None, :]
    y = np.asarray(bond[1])[None, :]
    return complex(np.exp(1j * vp.bond_line_integrals(t, x, y)[0]))


class PeierlsHamiltonian:
    """Time-dependent ``Delta^{A(t)} + lam V`` with the bond geometry precomputed."""

    def __init__(self, box: Box, realization: Realization | None, spec: DisorderSpec | None,
                 vp: VectorPotential | None = None, mu: float = 0.0):
        if realization is not None and realization.box is not box:
            if realization.box.d != box.d or realization.box.l != box.l:
                raise GeometryError("realization was sampled on a different box")
        self.box = box
        self.vp = vp
        static = laplacian(box, mu).entries.copy()
        if realization is not None and spec is not None:
            static[np.diag_indices(box.n)] += spec.lam * realization.values
        self.static = static
        self.tails, self.heads, self.it, self.ih = _forward_bonds(box)
        if vp is not None:
            if vp.d != box.d:
                raise ContractError("field and box dimension disagree")
            proj = (self.heads - self.tails) @ vp.direction
            self._weight = -vp.eta * proj * vp.bond_profile(self.tails, self.heads)
            self._active = np.nonzero(self._weight != 0.0)[0]
        else:
            self._weight = np.zeros(len(self.it))
            self._active = np.zeros(0, dtype=int)

    def line_integrals(self, t: float) -> np.ndarray:
        """Line integral of A along every forward bond (tail -> head)."""
        if self.vp is None:
            return np.zeros(len(self.it))
        return self._weight * float(self.vp.pulse.primitive(t))

    def field_is_off(self, t: float) -> bool:
        return self.vp is None or self._active.size == 0 or float(self.vp.pulse.primitive(t)) == 0.0

    def hopping_perturbation(self, t: float) -> np.ndarray:
        """``W_t = Delta^{A(t)} - Delta`` as a dense matrix."""
        w = np.zeros((self.box.n, self.box.n), dtype=complex)
        if self.field_is_off(t):
            return w
        a = self._active
        theta = self.line_integrals(t)[a]
        # <e_x, Delta^A e_y> = -exp(i int_x^y A), x = tail, y = head
        val = -(np.exp(1j * theta) - 1.0)
        w[self.it[a], self.ih[a]] = val
        w[self.ih[a], self.it[a]] = np.conj(val)
        return w

    def matrix(self, t: float | None = None) -> np.ndarray:
        if t is None or self.field_is_off(t):
            return self.static
        return self.static + self.hopping_perturbation(t)


def hamiltonian(box: Box, realization: Realization | None, spec: DisorderSpec | None,
                vp: VectorPotential | None = None, t: float = 0.0, mu: float = 0.0) -> HermitianOp:
    """Anderson Hamiltonian, Peierls-coupled to ``vp`` at time ``t`` if given."""
    return HermitianOp(box, PeierlsHamiltonian(box, realization, spec, vp, mu).matrix(t if vp else None))


# ---------------------------------------------------------------------------
# spectral engine
# ---------------------------------------------------------------------------
def _fix_cluster_basis(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(vecs) (columns)."""
    n, k = vecs.shape
    if k == 1:
        v = vecs[:, 0]
        j = int(np.argmax(np.abs(v)))
        ph = v[j] / abs(v[j])
        return (v / ph)[:, None]
    # Gram-Schmidt of the projected coordinate vectors P e_j = vecs @ conj(vecs[j]),
    # carried out in the k-dimensional coefficient space.
    chosen: list[np.ndarray] = []
    for j in range(n):
        c = vecs[j].conj().copy()
        for q in chosen:
            c = c - q * (q.conj() @ c)
        for q in chosen:  # re-orthogonalise once for stability
            c = c - q * (q.conj() @ c)
        nrm = np.linalg.norm(c)
        if nrm > 1e-3:
            chosen.append(c / nrm)
            if len(chosen) == k:
                break
    if len(chosen) < k:  # pragma: no cover - cannot happen for an orthonormal block
        raise NumericalError("degenerate-cluster basis fixing failed")
    return vecs @ np.stack(chosen, axis=1)


def diagonalize(h: HermitianOp | np.ndarray, box: Box | None = None, cap: int = EIGEN_CAP) -> EigenSystem:
    """Dense eigendecomposition with a reproducible basis in degenerate clusters."""
    if isinstance(h, HermitianOp):
        box, m = h.box, h.entries
    else:
        m = np.asarray(h)
    n = m.shape[0]
    if n > cap:
        raise CapacityError(f"matrix dimension {n} exceeds eigensolver cap {cap}")
    if np.iscomplexobj(m) and np.abs(m.imag).max(initial=0.0) == 0.0:
        m = m.real
    try:
        evals, evecs = scipy.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    # split into clusters and fix the basis of each
    breaks = np.nonzero(np.diff(evals) >= CLUSTER_GAP)[0] + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [n]])
    fixed = np.empty_like(evecs)
    for a, b in zip(starts, ends):
        fixed[:, a:b] = _fix_cluster_basis(evecs[:, a:b])
        if b - a > 1:
            evals[a:b] = evals[a:b].mean()
    norm = float(np.abs(m).max(initial=0.0))
    residual = float(np.abs(m @ fixed - fixed * evals).max(initial=0.0))
    if residual > 1e-10 * max(1.0, norm):
        raise NumericalError(f"eigen-residual {residual:.3e} exceeds tolerance")
    return EigenSystem(evals, fixed, residual, box, norm)


def fermi_function(kappa, beta: float, alpha: float = 0.0):
    """``F_alpha^beta(kappa) = exp(alpha*kappa) / (1 + exp(beta*kappa))``, overflow-free."""
    k = np.asarray(kappa, dtype=float)
    pos = k > 0
    with np.errstate(over="ignore", under="ignore"):
        kp = np.where(pos, k, 0.0)
        kn = np.where(pos, 0.0, k)
        out_pos = np.exp((alpha - beta) * kp) / (1.0 + np.exp(-beta * kp))
        out_neg = np.exp(alpha * kn) / (1.0 + np.exp(beta * kn))
    return np.where(pos, out_pos, out_neg)


def operator_function(eig: EigenSystem, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """``V f(Lambda) V^dagger`` as a dense matrix."""
    vals = np.asarray(f(eig.eigenvalues))
    if not np.all(np.isfinite(vals)):
        raise NumericalError("function is not finite on the spectrum")
    v = eig.eigenvectors
    return (v * vals) @ v.conj().T


def occupations(eig: EigenSystem, beta: float) -> np.ndarray:
    if not beta > 0:
        raise ContractError(f"inverse temperature must be positive, got {beta}")
    return fermi_function(eig.eigenvalues, beta)


def fermi_symbol(eig: EigenSystem, beta: float) -> Symbol:
    """Equilibrium symbol ``(1 + exp(beta H))^{-1}``."""
    f = occupations(eig, beta)
    return Symbol(operator_function(eig, lambda _: f))


def propagator(eig: EigenSystem, t: float) -> np.ndarray:
    """``exp(-i t H)``."""
    v = eig.eigenvectors
    return (v * np.exp(-1j * t * eig.eigenvalues)) @ v.conj().T
