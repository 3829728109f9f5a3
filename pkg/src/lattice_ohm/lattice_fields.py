"""Lattice boxes, nearest-neighbour bonds and the external field model.

Sites of the box ``[-l, l]^d`` are stored as integer rows in lexicographic
order, so that the flat index of a site is its mixed-radix number with base
``2l + 1``.  Bonds are ordered pairs ``(x, y)`` with ``|x - y| = 1``.

The field is kept in Weyl gauge.  A pulse ``E(t)`` with primitive
``P(t) = int_{-inf}^t E(s) ds`` and a spatial profile ``psi`` give

    E_A(t, x) = eta * w * psi(x / l) * E(t)
    A(t, x)   = -eta * w * psi(x / l) * P(t)

so that ``E_A = -dA/dt`` and the field seen by the charges points along
``+w`` while the pulse is positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import CapacityError, ContractError, GeometryError

MAX_SITES = 20000
SEGMENT_NODES = 32
AC_RELATIVE_TOL = 1e-10


# ---------------------------------------------------------------------------
# boxes and bonds
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Box:
    """The cube ``[-l, l]^d`` of Z^d with a lexicographic site index."""

    d: int
    l: int
    sites: np.ndarray

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    @property
    def side(self) -> int:
        return 2 * self.l + 1

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts)
        return np.all(np.abs(pts) <= self.l, axis=-1)

    def indices(self, pts) -> np.ndarray:
        """Flat indices of an array of sites (last axis = coordinates)."""
        pts = np.asarray(pts, dtype=np.int64)
        if pts.shape[-1] != self.d:
            raise ContractError(f"expected points in Z^{self.d}, got shape {pts.shape}")
        if not np.all(self.contains(pts)):
            bad = pts[~self.contains(pts)]
            raise GeometryError(f"site(s) outside box of half-side {self.l}: {bad[:3].tolist()}")
        shifted = pts + self.l
        weights = self.side ** np.arange(self.d - 1, -1, -1, dtype=np.int64)
        return shifted @ weights

    def index(self, site: Sequence[int]) -> int:
        return int(self.indices(np.asarray(site)[None, :])[0])

    def __repr__(self) -> str:
        return f"Box(d={self.d}, l={self.l}, n={self.n})"


def build_box(d: int, l: int, cap: int = MAX_SITES) -> Box:
    """Build ``[-l, l]^d``; raises :class:`CapacityError` above ``cap`` sites."""
    if int(d) != d or d < 1:
        raise ContractError(f"dimension must be a positive integer, got {d}")
    if int(l) != l or l < 1:
        raise ContractError(f"half-side must be a positive integer, got {l}")
    d, l = int(d), int(l)
    count = (2 * l + 1) ** d
    if count > cap:
        raise CapacityError(f"box d={d}, l={l} has {count} sites > cap {cap}")
    axis = np.arange(-l, l + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    sites = np.stack([g.ravel() for g in grids], axis=1)
    sites.setflags(write=False)
    return Box(d=d, l=l, sites=sites)


@dataclass(frozen=True, eq=False)
class BondList:
    """Ordered nearest-neighbour bonds ``tails[i] -> heads[i]``."""

    box: Box
    mode: str
    tails: np.ndarray
    heads: np.ndarray

    def __len__(self) -> int:
        return self.tails.shape[0]

    def pairs(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return [(tuple(int(v) for v in a), tuple(int(v) for v in b))
                for a, b in zip(self.tails, self.heads)]


def nearest_bonds(box: Box, mode: str = "interior") -> BondList:
    """Ordered bonds with both ends in ``box`` (interior) or at least one (crossing)."""
    if mode not in ("interior", "crossing"):
        raise ContractError(f"unknown bond mode {mode!r}")
    tails, heads = [], []
    eye = np.eye(box.d, dtype=np.int64)
    for k in range(box.d):
        for sgn in (1, -1):
            nb = box.sites + sgn * eye[k]
            inside = box.contains(nb)
            tails.append(box.sites[inside])
            heads.append(nb[inside])
            if mode == "crossing":
                # outward bonds and their reversed partners
                tails.append(box.sites[~inside])
                heads.append(nb[~inside])
                tails.append(nb[~inside])
                heads.append(box.sites[~inside])
    t = np.concatenate(tails)
    h = np.concatenate(heads)
    order = np.lexsort(tuple(np.concatenate([t, h], axis=1).T[::-1]))
    t, h = t[order], h[order]
    t.setflags(write=False)
    h.setflags(write=False)
    return BondList(box=box, mode=mode, tails=t, heads=h)


def _check_unit_bonds(tails: np.ndarray, heads: np.ndarray) -> None:
    step = np.abs(heads - tails).sum(axis=-1)
    if np.any(step != 1):
        raise ContractError("bond endpoints must be nearest neighbours (distance exactly 1)")


# ---------------------------------------------------------------------------
# the standard mollifier and its primitive
# ---------------------------------------------------------------------------
def bump(u):
    """``exp(1 - 1/(1-u^2))`` on (-1, 1), zero outside; peak value 1 at u=0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def bump_derivative(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    q = 1.0 - ui * ui
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * ui / (q * q))
    return out


@lru_cache(maxsize=None)
def _bump_primitive_spline() -> CubicHermiteSpline:
    # cumulative integral on a fine grid with 8-node Gauss-Legendre per cell,
    # then Hermite interpolation using the exact derivative (the bump itself)
    grid = np.linspace(-1.0, 1.0, 4001)
    x, wts = np.polynomial.legendre.leggauss(SEGMENT_NODES)
    a, b = grid[:-1], grid[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    cells = (bump(mid[:, None] + half[:, None] * x[None, :]) * wts).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    return CubicHermiteSpline(grid, cum, bump(grid))


def bump_integral(u):
    """``int_{-1}^{u} bump``; equals ``bump_integral(1)`` for u >= 1."""
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    return _bump_primitive_spline()(u)


BUMP_MASS = float(bump_integral(1.0))


# ---------------------------------------------------------------------------
# pulses
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class _Piece:
    kind: str            # "bump" | "bump_derivative"
    amplitude: float
    center: float
    halfwidth: float


@dataclass(frozen=True, eq=False)
class Pulse:
    """Temporal profile of the electric field.

    ``values(t)`` is the field amplitude, ``primitive(t)`` its integral from
    ``-inf``.  Use the classmethod constructors rather than the raw init.
    """

    kind: str
    t0: float
    t_end: float
    pieces: tuple = ()
    table: tuple | None = None   # (times, values, cumulative) for tabulated pulses
    ac: bool = field(default=False)

    # -- constructors ----------------------------------------------------
    @classmethod
    def _make(cls, kind, pieces=(), table=None, t0=None, t_end=None):
        if table is not None:
            t0, t_end = float(table[0][0]), float(table[0][-1])
        elif t0 is None:
            t0 = min(p.center - p.halfwidth for p in pieces)
            t_end = max(p.center + p.halfwidth for p in pieces)
        tmp = cls(kind=kind, t0=t0, t_end=t_end, pieces=tuple(pieces), table=table)
        scale = np.max(np.abs(tmp.primitive(np.linspace(t0, t_end, 2001))))
        ac = bool(abs(float(tmp.primitive(t_end))) <= max(1e-12, 1e-12 * scale))
        object.__setattr__(tmp, "ac", ac)
        return tmp

    @classmethod
    def bump(cls, t0: float, t_end: float, amplitude: float = 1.0) -> "Pulse":
        """Nonnegative smooth bump on [t0, t_end] with peak ``amplitude`` (not AC)."""
        _check_support(t0, t_end)
        piece = _Piece("bump", float(amplitude), 0.5 * (t0 + t_end), 0.5 * (t_end - t0))
        return cls._make("bump", (piece,))

    @classmethod
    def bump_derivative(cls, t0: float, t_end: float, amplitude: float = 1.0) -> "Pulse":
        """Derivative (in the rescaled variable) of a bump on [t0, t_end]: an AC pulse."""
        _check_support(t0, t_end)
        piece = _Piece("bump_derivative", float(amplitude), 0.5 * (t0 + t_end), 0.5 * (t_end - t0))
        return cls._make("bump_derivative", (piece,))

    @classmethod
    def superpose(cls, pulses: Sequence["Pulse"]) -> "Pulse":
        """Sum of mollifier pulses."""
        pieces = []
        for p in pulses:
            if p.table is not None:
                raise ContractError("tabulated pulses cannot be superposed")
            pieces.extend(p.pieces)
        kinds = {pc.kind for pc in pieces}
        kind = kinds.pop() if len(kinds) == 1 else "mixed"
        return cls._make(kind, tuple(pieces))

    @classmethod
    def tabulated(cls, times, values) -> "Pulse":
        """Piecewise-linear field through the given samples, zero outside."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ContractError("tabulated pulse needs matching 1-d arrays of length >= 2")
        if np.any(np.diff(times) <= 0):
            raise ContractError("tabulated pulse times must be strictly increasing")
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))])
        return cls._make("tabulated", table=(times, values, cum))

    @classmethod
    def random_ac(cls, rng: np.random.Generator, t0: float, t_end: float, n_terms: int = 3) -> "Pulse":
        """Random superposition of bump derivatives inside [t0, t_end]."""
        _check_support(t0, t_end)
        span = t_end - t0
        pieces = []
        for j in range(n_terms):
            hw = span * rng.uniform(0.15, 0.5)
            c = rng.uniform(t0 + hw, t_end - hw)
            pieces.append(_Piece("bump_derivative", float(rng.normal()), float(c), float(hw)))
        # pin the support to the requested window
        return cls._make("bump_derivative", tuple(pieces), t0=t0, t_end=t_end)

    # -- evaluation --------------------------------------------------------
    def values(self, t):
        t = np.asarray(t, dtype=float)
        if self.table is not None:
            times, vals, _ = self.table
            return np.interp(t, times, vals, left=0.0, right=0.0)
        out = np.zeros_like(t)
        for p in self.pieces:
            u = (t - p.center) / p.halfwidth
            out = out + p.amplitude * (bump(u) if p.kind == "bump" else bump_derivative(u))
        return out

    def primitive(self, t):
        t = np.asarray(t, dtype=float)
        if self.table is not None:
            times, vals, cum = self.table
            tc = np.clip(t, times[0], times[-1])
            i = np.clip(np.searchsorted(times, tc, side="right") - 1, 0, times.size - 2)
            h = tc - times[i]
            slope = (vals[i + 1] - vals[i]) / (times[i + 1] - times[i])
            out = cum[i] + vals[i] * h + 0.5 * slope * h * h
            return np.where(t <= times[0], 0.0, out)
        out = np.zeros_like(t)
        for p in self.pieces:
            u = (t - p.center) / p.halfwidth
            if p.kind == "bump":
                out = out + p.amplitude * p.halfwidth * bump_integral(u)
            else:
                out = out + p.amplitude * p.halfwidth * bump(u)
        return out

    def to_dict(self) -> dict:
        if self.table is not None:
            return {"kind": "tabulated", "times": self.table[0].tolist(), "values": self.table[1].tolist()}
        return {"kind": self.kind, "t0": self.t0, "t_end": self.t_end,
                "pieces": [vars(p) for p in self.pieces]}


def _check_support(t0, t_end):
    if not (np.isfinite(t0) and np.isfinite(t_end) and t_end > t0):
        raise ContractError(f"pulse support must satisfy t0 < t_end, got [{t0}, {t_end}]")


def check_ac(pulse: Pulse, n_grid: int = 4001) -> float:
    """Field-off time: smallest t after which the primitive stays below tolerance.

    The tolerance is ``1e-10 * max |primitive|``.  Returns ``inf`` if the
    primitive does not return to zero at the end of the support.
    """
    grid = np.linspace(pulse.t0, pulse.t_end, n_grid)
    prim = np.abs(pulse.primitive(grid))
    peak = prim.max()
    if peak == 0.0:
        return float(pulse.t0)
    tol = AC_RELATIVE_TOL * peak
    if prim[-1] > tol:
        return math.inf
    above = np.nonzero(prim > tol)[0]
    if above.size == 0:
        return float(pulse.t0)
    i = above[-1]
    f = lambda s: abs(float(pulse.primitive(s))) - tol
    return float(brentq(f, grid[i], grid[i + 1], xtol=1e-14))


# ---------------------------------------------------------------------------
# spatial profiles
# ---------------------------------------------------------------------------
@lru_cache(maxsize=None)
def _bump_profile_constant() -> float:
    # psi_1(u) = c * bump(2u) with int psi_1^2 = 1
    x, w = np.polynomial.legendre.leggauss(200)
    return 1.0 / math.sqrt(0.5 * float((bump(x) ** 2 * w).sum()))


@dataclass(frozen=True)
class SpatialProfile:
    """Separable profile: unit-cube indicator on [-1,1]^d or a smooth bump on [-1/2,1/2]^d."""

    kind: str
    d: int

    def __post_init__(self):
        if self.kind not in ("indicator", "bump"):
            raise ContractError(f"unknown profile kind {self.kind!r}")

    @property
    def normalization(self) -> float:
        """``int psi(x)^2 d^d x``."""
        return 2.0 ** self.d if self.kind == "indicator" else 1.0

    @property
    def support_radius(self) -> float:
        return 1.0 if self.kind == "indicator" else 0.5

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "indicator":
            return np.all(np.abs(x) <= 1.0, axis=-1).astype(float)
        c = _bump_profile_constant()
        return np.prod(c * bump(2.0 * x), axis=-1)


# ---------------------------------------------------------------------------
# vector potential
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class VectorPotential:
    pulse: Pulse
    profile: SpatialProfile
    direction: np.ndarray
    scale: float
    eta: float
    t1: float = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.direction, dtype=float).ravel()
        if w.size != self.profile.d:
            raise ContractError("direction and profile dimension disagree")
        nrm = np.linalg.norm(w)
        if nrm == 0:
            raise ContractError("direction must be nonzero")
        w = w / nrm
        w.setflags(write=False)
        object.__setattr__(self, "direction", w)
        if self.scale <= 0:
            raise ContractError("scale must be positive")
        object.__setattr__(self, "t1", check_ac(self.pulse) if self.pulse.ac else math.inf)

    @property
    def d(self) -> int:
        return self.profile.d

    def with_eta(self, eta: float) -> "VectorPotential":
        return VectorPotential(self.pulse, self.profile, self.direction, self.scale, eta)

    def potential(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        amp = -self.eta * float(self.pulse.primitive(t)) * self.profile(x / self.scale)
        return amp[..., None] * self.direction

    def bond_profile(self, tails, heads, nodes: int = SEGMENT_NODES) -> np.ndarray:
        """Segment average ``int_0^1 psi((a*y + (1-a)*x)/l) da`` per bond."""
        tails = np.atleast_2d(np.asarray(tails, dtype=float))
        heads = np.atleast_2d(np.asarray(heads, dtype=float))
        _check_unit_bonds(tails, heads)
        x, w = np.polynomial.legendre.leggauss(nodes)
        alpha = 0.5 * (x + 1.0)
        pts = alpha[None, :, None] * heads[:, None, :] + (1 - alpha)[None, :, None] * tails[:, None, :]
        return 0.5 * (self.profile(pts / self.scale) * w).sum(axis=1)

    def bond_line_integrals(self, t, tails, heads, nodes: int = SEGMENT_NODES) -> np.ndarray:
        """``int_0^1 A(t, a*y+(1-a)*x) . (y-x) da`` for arrays of bonds."""
        tails = np.atleast_2d(tails)
        heads = np.atleast_2d(heads)
        proj = (np.asarray(heads) - np.asarray(tails)) @ self.direction
        return -self.eta * float(self.pulse.primitive(t)) * proj * self.bond_profile(tails, heads, nodes)


def electric_field(vp: VectorPotential, t: float, x) -> np.ndarray:
    """``E_A(t, x) = -dA/dt = eta * w * psi(x/l) * E(t)``."""
    x = np.asarray(x, dtype=float)
    amp = vp.eta * float(vp.pulse.values(t)) * vp.profile(x / vp.scale)
    return amp[..., None] * vp.direction


def integrated_bond_field(vp: VectorPotential, t: float, bond, nodes: int = SEGMENT_NODES) -> float:
    """``int_0^1 E_A(t, a*x2 + (1-a)*x1) . (x2 - x1) da`` for ``bond = (x1, x2)``."""
    x1 = np.asarray(bond[0], dtype=float)[None, :]
    x2 = np.asarray(bond[1], dtype=float)[None, :]
    g = vp.bond_profile(x1, x2, nodes)
    return float(vp.eta * float(vp.pulse.values(t)) * ((x2 - x1) @ vp.direction)[0] * g[0])
