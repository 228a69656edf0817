"""Geometry of the d-dimensional discrete torus with periodic boundaries.

Sites carry centered integer coordinates: for odd side length L each
coordinate lies in [-(L-1)/2, (L-1)/2], for even L in (-L/2, L/2].  A site
maps to a flat index by row-major order over axes, ascending coordinate,
so the flat index doubles as the lexicographic rank of the coordinate
vector (the default total order on sites).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class Step:
    """One lattice hop: a unit move along `axis` with the given sign."""

    axis: int
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError(f"step sign must be +1 or -1, got {self.sign}")
        if self.axis < 0:
            raise ValueError(f"step axis must be nonnegative, got {self.axis}")


@dataclass(frozen=True)
class TorusGeometry:
    """Torus of side L in dimension d with centered coordinates."""

    d: int
    L: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.L < 2:
            raise ValueError(f"side length must be >= 2, got {self.L}")

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def n_edges(self) -> int:
        # one edge slot per (site, axis); for L = 2 this is a multigraph
        return self.d * self.n_sites

    @property
    def cmin(self) -> int:
        return -((self.L - 1) // 2)

    @property
    def cmax(self) -> int:
        return self.cmin + self.L - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    def contains(self, coords) -> bool:
        c = np.asarray(coords, dtype=np.int64)
        return c.shape == (self.d,) and bool(
            np.all(c >= self.cmin) and np.all(c <= self.cmax)
        )

    def require_site(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        if not self.contains(c):
            raise ValueError(f"coordinates {coords!r} outside torus d={self.d} L={self.L}")
        return c

    def wrap_step(self, site, step: Step) -> np.ndarray:
        """Move one lattice unit, wrapping by 1-L across the boundary."""
        c = self.require_site(site).copy()
        if step.axis >= self.d:
            raise ValueError(f"step axis {step.axis} out of range for d={self.d}")
        moved = c[step.axis] + step.sign
        if self.cmin <= moved <= self.cmax:
            c[step.axis] = moved
        else:
            c[step.axis] = c[step.axis] + step.sign * (1 - self.L)
        return c

    def site_index(self, coords) -> int:
        """Flat index of a site: row-major over axes, ascending coordinate."""
        c = self.require_site(coords)
        idx = 0
        for a in range(self.d):
            idx = idx * self.L + int(c[a] - self.cmin)
        return idx

    def index_site(self, index: int) -> np.ndarray:
        """Inverse of site_index."""
        if not 0 <= index < self.n_sites:
            raise ValueError(f"site index {index} out of range [0, {self.n_sites})")
        c = np.empty(self.d, dtype=np.int64)
        rem = int(index)
        for a in range(self.d - 1, -1, -1):
            rem, off = divmod(rem, self.L)
            c[a] = off + self.cmin
        return c

    def coords_table(self) -> np.ndarray:
        """(n_sites, d) int32 array of centered coordinates, by flat index."""
        return _coords_table(self.d, self.L)

    def offsets_table(self) -> np.ndarray:
        """(n_sites, d) int32 array of per-axis index offsets coord - cmin."""
        return _offsets_table(self.d, self.L)

    def neighbor_table(self) -> np.ndarray:
        """(n_sites, 2d) int32 neighbor flat indices.

        Direction slot 2*axis is the +1 step, 2*axis + 1 the -1 step.
        """
        return _neighbor_table(self.d, self.L)

    def norm_sq_table(self) -> np.ndarray:
        """(n_sites,) int64 squared Euclidean norms of the coordinates."""
        return _norm_sq_table(self.d, self.L)

    def displacement_index_table(self) -> np.ndarray:
        """(L, L) int32 table: per-axis index offset of the wrapped difference.

        For sites u, v with per-axis offsets iu, iv, the wrapped displacement
        v - u has flat index sum_axis stride_a * table[iu_a, iv_a].
        """
        return _displacement_table(self.L, self.cmin)


def euclid_norm(site) -> float:
    """Euclidean norm of a coordinate vector."""
    c = np.asarray(site, dtype=np.float64)
    return float(np.sqrt(np.sum(c * c)))


@lru_cache(maxsize=64)
def _offsets_table(d: int, L: int) -> np.ndarray:
    n = L**d
    out = np.empty((n, d), dtype=np.int32)
    idx = np.arange(n, dtype=np.int64)
    for a in range(d - 1, -1, -1):
        idx, off = np.divmod(idx, L)
        out[:, a] = off
    return out


@lru_cache(maxsize=64)
def _coords_table(d: int, L: int) -> np.ndarray:
    cmin = -((L - 1) // 2)
    return (_offsets_table(d, L) + np.int32(cmin)).astype(np.int32)


@lru_cache(maxsize=64)
def _neighbor_table(d: int, L: int) -> np.ndarray:
    n = L**d
    grid = np.arange(n, dtype=np.int32).reshape((L,) * d)
    out = np.empty((n, 2 * d), dtype=np.int32)
    for a in range(d):
        # +1 step: the neighbor of position i along axis a sits at i+1 mod L
        out[:, 2 * a] = np.roll(grid, -1, axis=a).reshape(-1)
        out[:, 2 * a + 1] = np.roll(grid, 1, axis=a).reshape(-1)
    return out


@lru_cache(maxsize=64)
def _norm_sq_table(d: int, L: int) -> np.ndarray:
    c = _coords_table(d, L).astype(np.int64)
    return np.sum(c * c, axis=1)


@lru_cache(maxsize=64)
def _displacement_table(L: int, cmin: int) -> np.ndarray:
    iu, iv = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    return ((iv - iu - cmin) % L).astype(np.int32)
