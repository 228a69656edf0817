"""Random-length loop-erased random walk on the torus.

The driving simple random walk is erased chronologically: stepping onto a
site already on the erased path truncates the path back to that site's
first occurrence.  The walk runs until the erased path length first
equals the drawn target N (every intermediate length is visited on the
way up, so the stopping time is well defined), and the two-point function
counts each site of the final path once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError
from .lattice import TorusGeometry
from .lengths import WalkLengthLaw
from .rlrw import OccupationField
from .rng import derive_stream, next_below, stream_array


@dataclass
class ErasedPath:
    """Self-avoiding path from the origin, stored as flat site indices."""

    geom: TorusGeometry
    sites: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.sites:
            self.sites = [self.geom.site_index(np.zeros(self.geom.d, dtype=int))]

    @property
    def length(self) -> int:
        return len(self.sites) - 1

    @property
    def tip(self) -> int:
        return self.sites[-1]

    def coords(self) -> np.ndarray:
        return np.array([self.geom.index_site(i) for i in self.sites])

    def is_self_avoiding(self) -> bool:
        return len(set(self.sites)) == len(self.sites)


def loop_erase_step(path: ErasedPath, next_site) -> ErasedPath:
    """Append a neighbor of the tip, erasing the loop if it closes one."""
    geom = path.geom
    nxt = geom.site_index(next_site)
    if nxt not in geom.neighbor_table()[path.tip]:
        raise ValueError(f"{np.asarray(next_site).tolist()} is not a neighbor of the path tip")
    sites = list(path.sites)
    if nxt in sites:
        sites = sites[: sites.index(nxt) + 1]
    else:
        sites.append(nxt)
    return ErasedPath(geom, sites)


@njit(cache=True, nogil=True)
def _lerw_single_kernel(nbr, target, origin, state_arr, path, pos_in_path):
    """Drive one erased path to the target length; returns (length, SRW steps)."""
    two_d = nbr.shape[1]
    state = state_arr[0]
    path[0] = origin
    pos_in_path[origin] = 0
    k = 0
    steps = 0
    while k < target:
        state, j = next_below(state, two_d)
        nxt = nbr[path[k], j]
        steps += 1
        p = pos_in_path[nxt]
        if p >= 0:
            for t in range(p + 1, k + 1):
                pos_in_path[path[t]] = -1
            k = p
        else:
            k += 1
            path[k] = nxt
            pos_in_path[nxt] = k
    state_arr[0] = state
    return k, steps


@njit(cache=True, nogil=True)
def _lerw_batch_kernel(nbr, targets, origin, state_arr, occ_sum):
    """Accumulate final-path occupancy over a batch of samples."""
    n_sites = nbr.shape[0]
    two_d = nbr.shape[1]
    pos_in_path = np.full(n_sites, -1, np.int64)
    path = np.empty(n_sites, np.int64)
    state = state_arr[0]
    total_steps = 0
    for w in range(targets.shape[0]):
        target = targets[w]
        path[0] = origin
        pos_in_path[origin] = 0
        k = 0
        while k < target:
            state, j = next_below(state, two_d)
            nxt = nbr[path[k], j]
            total_steps += 1
            p = pos_in_path[nxt]
            if p >= 0:
                for t in range(p + 1, k + 1):
                    pos_in_path[path[t]] = -1
                k = p
            else:
                k += 1
                path[k] = nxt
                pos_in_path[nxt] = k
        for t in range(k + 1):
            occ_sum[path[t]] += 1
            pos_in_path[path[t]] = -1
    state_arr[0] = state
    return total_steps


def _draw_targets(law: WalkLengthLaw, n: int, n_sites: int, rng) -> tuple[np.ndarray, int]:
    """Draw lengths, resampling draws that cannot fit a self-avoiding path."""
    targets = np.asarray(law.sample(rng, size=n), dtype=np.int64)
    rejected = 0
    for _ in range(1000):
        bad = targets >= n_sites
        n_bad = int(bad.sum())
        if n_bad == 0:
            return targets, rejected
        rejected += n_bad
        targets[bad] = np.asarray(law.sample(rng, size=n_bad), dtype=np.int64)
    raise ConfigError(
        f"law {law.describe()} keeps drawing lengths >= {n_sites} sites; "
        "a self-avoiding path cannot be that long"
    )


def sample_rllerw(geom: TorusGeometry, law: WalkLengthLaw, seed: int = 0) -> ErasedPath:
    """Draw one loop-erased path whose length first reaches N ~ law."""
    rng = np.random.default_rng(derive_stream(seed, 0x3E, 0))
    targets, _ = _draw_targets(law, 1, geom.n_sites, rng)
    nbr = geom.neighbor_table()
    origin = geom.site_index(np.zeros(geom.d, dtype=int))
    state = stream_array(seed, 0x4E, 0)
    path = np.empty(geom.n_sites, dtype=np.int64)
    pos = np.full(geom.n_sites, -1, dtype=np.int64)
    k, _ = _lerw_single_kernel(nbr, int(targets[0]), origin, state, path, pos)
    return ErasedPath(geom, [int(s) for s in path[: k + 1]])


def mc_two_point_rllerw(
    geom: TorusGeometry,
    law: WalkLengthLaw,
    samples_per_replica: int,
    replicas: int = 1,
    seed: int = 0,
) -> OccupationField:
    """Monte Carlo estimate of the loop-erased two-point function.

    Each sample contributes one visit per site of its final path, so the
    per-site occupancy is Bernoulli and the field total is exactly the
    sample-mean of N + 1.

    Draws with N >= site count are rejected and redrawn (a self-avoiding
    path cannot be longer); note that targets approaching the maximal
    self-avoiding length are reached astronomically slowly, so the law's
    mean should sit well below the box's typical loop-erased length.
    """
    if samples_per_replica < 1 or replicas < 1:
        raise ValueError("need at least one sample and one replica")
    n = geom.n_sites
    nbr = geom.neighbor_table()
    origin = geom.site_index(np.zeros(geom.d, dtype=int))
    occ = np.zeros(n, dtype=np.int64)
    rejected = 0
    total_steps = 0
    mean_target = 0.0
    for r in range(replicas):
        rng = np.random.default_rng(derive_stream(seed, 0x3E, r))
        targets, rej = _draw_targets(law, samples_per_replica, n, rng)
        rejected += rej
        mean_target += float(targets.sum())
        state = stream_array(seed, 0x4E, r)
        total_steps += _lerw_batch_kernel(nbr, targets, origin, state, occ)
    total = samples_per_replica * replicas
    p = occ / total
    stderr = np.sqrt(p * (1.0 - p) / total)
    return OccupationField(
        kind="torus",
        d=geom.d,
        side=geom.L,
        cmin=geom.cmin,
        data=p.reshape(geom.shape),
        law_desc=law.describe(),
        stderr=stderr.reshape(geom.shape),
        n_samples=total,
        meta={
            "replicas": replicas,
            "samples_per_replica": samples_per_replica,
            "seed": seed,
            "rejected_draws": rejected,
            "srw_steps_per_sample": total_steps / total,
            "mean_target": mean_target / total,
        },
    )
