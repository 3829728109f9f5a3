"""i.i.d. random potentials with reproducible seeding and ensemble statistics.

Each realization is drawn from a PCG64 stream keyed by
``(master_seed, realization_index)``.  Uniform variates are consumed in
*shell order* -- sites sorted by sup-norm, then lexicographically -- and
pushed through the inverse CDF of the chosen distribution.  Since the box
``[-l, l]^d`` consists exactly of the shells ``0..l``, enlarging the box
extends a realization instead of reshuffling it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, LatticeOhmError
from .lattice_fields import Box, build_box

DISTRIBUTIONS = ("uniform", "two-point", "tabulated")
ICDF_NODES = 4097


@dataclass(frozen=True, eq=False)
class DisorderSpec:
    """Distribution of the on-site potential, coupling and master seed.

    ``two-point`` puts mass ``p`` on ``points[0]`` and ``1-p`` on
    ``points[1]``; ``tabulated`` takes a density sampled on ``grid``.
    """

    distribution: str = "uniform"
    lam: float = 1.0
    master_seed: int = 0
    points: tuple = (-1.0, 1.0)
    p: float = 0.5
    grid: tuple | None = None
    density: tuple | None = None
    _icdf: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ContractError(f"unknown distribution {self.distribution!r}")
        if not (self.lam >= 0):
            raise ContractError(f"coupling must be >= 0, got {self.lam}")
        if self.distribution == "two-point":
            if any(abs(v) > 1 for v in self.points) or not (0 <= self.p <= 1):
                raise ContractError("two-point support must lie in [-1, 1] and p in [0, 1]")
        if self.distribution == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            rho = np.asarray(self.density, dtype=float)
            if g.ndim != 1 or g.shape != rho.shape or g.size < 2:
                raise ContractError("tabulated density needs matching grid and values")
            if g[0] < -1 or g[-1] > 1 or np.any(np.diff(g) <= 0) or np.any(rho < 0):
                raise ContractError("tabulated density must be nonnegative on an increasing grid in [-1, 1]")
            # the density is piecewise linear between nodes; refine so the inverse CDF
            # (linear between fine nodes) stays accurate for coarse tables
            fine = np.unique(np.concatenate([g, np.linspace(g[0], g[-1], ICDF_NODES)]))
            rho_f = np.interp(fine, g, rho)
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho_f[1:] + rho_f[:-1]) * np.diff(fine))])
            if cdf[-1] <= 0:
                raise ContractError("tabulated density has zero mass")
            object.__setattr__(self, "_icdf", (cdf / cdf[-1], fine))

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        if self.distribution == "uniform":
            return 2.0 * u - 1.0
        if self.distribution == "two-point":
            return np.where(u < self.p, float(self.points[0]), float(self.points[1]))
        cdf, g = self._icdf
        return np.interp(u, cdf, g)

    def to_dict(self) -> dict:
        out = {"distribution": self.distribution, "lambda": self.lam, "master_seed": self.master_seed}
        if self.distribution == "two-point":
            out.update(points=list(self.points), p=self.p)
        if self.distribution == "tabulated":
            out.update(grid=list(self.grid), density=list(self.density))
        return out


@dataclass(frozen=True, eq=False)
class Realization:
    values: np.ndarray        # potential per site, in box index order
    master_seed: int
    index: int
    box: Box

    def at(self, site) -> float:
        return float(self.values[self.box.index(site)])


def _shell_order(box: Box) -> np.ndarray:
    sup = np.abs(box.sites).max(axis=1)
    keys = tuple(box.sites.T[::-1]) + (sup,)
    return np.lexsort(keys)


def sample_realization(spec: DisorderSpec, box: Box, index: int) -> Realization:
    if index < 0:
        raise ContractError("realization index must be >= 0")
    rng = np.random.Generator(np.random.PCG64([int(spec.master_seed) & (2**64 - 1), int(index)]))
    u = rng.random(box.n)
    vals = np.empty(box.n)
    vals[_shell_order(box)] = spec.inverse_cdf(u)
    vals.setflags(write=False)
    return Realization(values=vals, master_seed=spec.master_seed, index=int(index), box=box)


def _pairwise_sum(stack: np.ndarray) -> np.ndarray:
    """Sum along axis 0 by a fixed binary tree (independent of arrival order)."""
    while stack.shape[0] > 1:
        if stack.shape[0] % 2:
            stack = np.concatenate([stack, np.zeros_like(stack[:1])])
        stack = stack[0::2] + stack[1::2]
    return stack[0]


def ensemble_stats(samples: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise mean and standard error of the mean."""
    arr = np.asarray(samples, dtype=float)
    n = arr.shape[0]
    if n < 2:
        raise ContractError("need at least two samples for a standard error")
    mean = _pairwise_sum(arr) / n
    var = _pairwise_sum((arr - mean) ** 2) / (n - 1)
    return mean, np.sqrt(var / n)


class RealizationFailure(LatticeOhmError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"estimator failed on realization {index}: {cause!r}")
        self.index = index


def map_realizations(fn: Callable[[int], object], n: int, workers: int = 1) -> list:
    """Evaluate ``fn(i)`` for ``i in range(n)``; results are returned in index order."""

    def wrapped(i):
        try:
            return fn(i)
        except LatticeOhmError as exc:
            if isinstance(exc, RealizationFailure):
                raise
            raise RealizationFailure(i, exc) from exc
        except Exception as exc:  # noqa: BLE001 - report the realization index
            raise RealizationFailure(i, exc) from exc

    if workers <= 1:
        return [wrapped(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(wrapped, range(n)))


def ensemble_mean(estimator: Callable[[Realization], object], spec: DisorderSpec, box: Box,
                  N: int, workers: int = 1):
    """Mean and standard error of ``estimator`` over realizations ``0..N-1``."""
    if N < 2:
        raise ContractError("ensemble needs N >= 2")
    samples = map_realizations(lambda i: estimator(sample_realization(spec, box, i)), N, workers)
    return ensemble_stats(samples)


def loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def self_averaging_diagnostic(observable: Callable[[Realization, Box], float], spec: DisorderSpec,
                              l_list: Sequence[int], N: int, d: int = 1, workers: int = 1):
    """Variance of a spatially averaged observable across realizations versus box size.

    Returns ``(rows, slope)`` where each row is ``(l, volume, mean, variance)``
    and ``slope`` is the log-log slope of variance against volume (``nan``
    when some variance vanishes).
    """
    if N < 10:
        raise ContractError("self-averaging diagnostic needs N >= 10")
    if any(b <= a for a, b in zip(l_list, l_list[1:])):
        raise ContractError("l_list must be strictly increasing")
    rows = []
    for l in l_list:
        box = build_box(d, l)
        vals = np.asarray(map_realizations(
            lambda i: float(observable(sample_realization(spec, box, i), box)), N, workers))
        rows.append((int(l), box.n, float(vals.mean()), float(vals.var(ddof=1))))
    vols = [r[1] for r in rows]
    variances = [r[3] for r in rows]
    slope = loglog_slope(vols, variances) if min(variances) > 0 else math.nan
    return rows, slope
