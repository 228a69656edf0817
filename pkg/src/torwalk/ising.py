"""Ising model via the worm algorithm on the high-temperature graphs.

Configurations are edge subsets weighted by z^|A| with z = tanh(1/T),
carrying an ordered defect pair (u, v); u = v marks the all-even sector.
One update picks a defect endpoint and a uniform incident edge slot,
toggles it with the Metropolis ratio z (create) or 1/z (delete) and moves
that endpoint; in the all-even sector a relocation move teleports the
defect pair to a uniform site.  Tracking the defect pair as an ordered
pair makes the proposal symmetric, so the chain is in detailed balance
with z^|A| on its state space.  The displacement histogram of v - u,
normalized by its u = v count, estimates the spin-spin correlation, and
its sum the susceptibility.

The walk length attached to a configuration is the length of the greedy
edge-self-avoiding trail joining the defects: from the lex-smaller defect
repeatedly take the smallest-ranked neighbor reachable through an
occupied untraversed edge slot; degree parity makes the trail halt at the
other defect.  Edge slots are indexed site * d + axis for the edge from
site along +axis, which for L = 2 yields the doubled-edge multigraph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .lattice import TorusGeometry
from .parallel import run_replicas
from .rlrw import OccupationField
from .rng import next_below, next_float, stream_array
from .saw import ChainObservables, _merge_replicas

# ---------------------------------------------------------------------------
# configuration state


@dataclass
class HighTempConfig:
    """Edge occupancy plus the ordered defect pair (u, v)."""

    geom: TorusGeometry
    z: float
    edge_occ: np.ndarray
    defects: np.ndarray

    @classmethod
    def empty(cls, geom: TorusGeometry, z: float) -> "HighTempConfig":
        if not 0.0 < z < 1.0:
            raise ValueError(f"high-temperature weight needs 0 < z < 1, got {z}")
        origin = geom.site_index(np.zeros(geom.d, dtype=int))
        return cls(
            geom=geom,
            z=z,
            edge_occ=np.zeros(geom.n_edges, dtype=np.uint8),
            defects=np.array([origin, origin], dtype=np.int64),
        )

    @classmethod
    def from_edges(cls, geom: TorusGeometry, z: float, edges) -> "HighTempConfig":
        """Build from (site_coords, axis) pairs; defects are inferred."""
        cfg = cls.empty(geom, z)
        for coords, axis in edges:
            cfg.edge_occ[geom.site_index(coords) * geom.d + axis] ^= 1
        deg = _degrees(geom, cfg.edge_occ)
        odd = np.nonzero(deg % 2)[0]
        if len(odd) == 0:
            pass
        elif len(odd) == 2:
            cfg.defects[:] = odd
        else:
            raise ValueError(f"edge set has {len(odd)} odd-degree vertices, need 0 or 2")
        return cfg

    @property
    def in_even_sector(self) -> bool:
        return bool(self.defects[0] == self.defects[1])

    def parity_ok(self) -> bool:
        """Degree parity invariant: odd exactly at distinct defects."""
        deg = _degrees(self.geom, self.edge_occ)
        odd = set(np.nonzero(deg % 2)[0].tolist())
        if self.in_even_sector:
            return odd == set()
        return odd == {int(self.defects[0]), int(self.defects[1])}


def _degrees(geom: TorusGeometry, edge_occ) -> np.ndarray:
    deg = np.zeros(geom.n_sites, dtype=np.int64)
    nbr = geom.neighbor_table()
    sites = np.arange(geom.n_sites)
    for axis in range(geom.d):
        occ = edge_occ[sites * geom.d + axis]
        deg += occ
        np.add.at(deg, nbr[:, 2 * axis], occ)
    return deg


# ---------------------------------------------------------------------------
# greedy trail


def _sorted_neighbor_slots(geom: TorusGeometry, order=None):
    """Neighbors and their edge slots per site, sorted by the site order.

    order maps site index to its rank; default is the flat (lexicographic)
    index itself.
    """
    n, d = geom.n_sites, geom.d
    nbr = geom.neighbor_table()
    slots = np.empty((n, 2 * d), dtype=np.int64)
    sites = np.arange(n, dtype=np.int64)
    for axis in range(d):
        slots[:, 2 * axis] = sites * d + axis
        slots[:, 2 * axis + 1] = nbr[:, 2 * axis + 1].astype(np.int64) * d + axis
    rank = np.arange(n, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
    key = rank[nbr.astype(np.int64)]
    perm = np.argsort(key, axis=1, kind="stable")
    rows = np.arange(n)[:, None]
    return nbr[rows, perm].astype(np.int64), slots[rows, perm], rank


@njit(cache=True, nogil=True)
def _trail_kernel(edge_occ, edge_stamp, stamp, start, sorted_nbr, sorted_slot, max_steps):
    """Greedy trail walk; marks traversed slots with the given stamp.

    Returns (length, final site), or (-1, -1) if max_steps is exceeded
    (which signals a broken parity invariant).
    """
    two_d = sorted_nbr.shape[1]
    c = start
    length = 0
    while length <= max_steps:
        nxt = -1
        for j in range(two_d):
            s = sorted_slot[c, j]
            if edge_occ[s] == 1 and edge_stamp[s] != stamp:
                edge_stamp[s] = stamp
                nxt = sorted_nbr[c, j]
                break
        if nxt < 0:
            return length, c
        c = nxt
        length += 1
    return -1, -1


def ising_trail_length(cfg: HighTempConfig, order=None, return_path: bool = False):
    """Length of the deterministic greedy trail joining the defects.

    Zero in the all-even sector.  With return_path=True also returns the
    visited site sequence (for fixture verification).
    """
    if cfg.in_even_sector:
        return (0, [int(cfg.defects[0])]) if return_path else 0
    sorted_nbr, sorted_slot, rank = _sorted_neighbor_slots(cfg.geom, order)
    u, v = int(cfg.defects[0]), int(cfg.defects[1])
    start, target = (u, v) if rank[u] < rank[v] else (v, u)
    stamp = np.int64(1)
    edge_stamp = np.zeros(cfg.geom.n_edges, dtype=np.int64)
    if not return_path:
        length, end = _trail_kernel(
            cfg.edge_occ, edge_stamp, stamp, start, sorted_nbr, sorted_slot, cfg.geom.n_edges
        )
        if length < 0 or end != target:
            raise RuntimeError("trail did not terminate at the other defect; parity broken")
        return length
    # python re-walk recording the sequence
    path = [start]
    c = start
    seen = set()
    while True:
        nxt = None
        for j in range(2 * cfg.geom.d):
            s = int(sorted_slot[c, j])
            if cfg.edge_occ[s] == 1 and s not in seen:
                seen.add(s)
                nxt = int(sorted_nbr[c, j])
                break
        if nxt is None:
            break
        path.append(nxt)
        c = nxt
        if len(path) > cfg.geom.n_edges + 1:
            raise RuntimeError("trail exceeded the edge count; parity broken")
    if c != target:
        raise RuntimeError("trail did not terminate at the other defect; parity broken")
    return len(path) - 1, path


# ---------------------------------------------------------------------------
# worm chain


@njit(cache=True, nogil=True)
def _worm_kernel(
    nbr,
    offs,
    dtab,
    strides,
    d,
    z,
    steps,
    state_arr,
    edge_occ,
    defects,
    measure,
    disp_hist,
    sweep_steps,
    trail_series,
    sorted_nbr,
    sorted_slot,
    edge_stamp,
    stamp_arr,
):
    """Advance the worm; returns (accepted toggles, relocations, measures, c2 measures)."""
    n_sites, two_d = nbr.shape
    p_reloc = 1.0 / (two_d + 1.0)
    state = state_arr[0]
    u = defects[0]
    v = defects[1]
    stamp = stamp_arr[0]
    n_acc = 0
    n_rel = 0
    n_meas = 0
    n_c2 = 0
    for s in range(steps):
        state, r = next_float(state)
        if r < p_reloc:
            if u == v:
                state, site = next_below(state, n_sites)
                u = site
                v = site
                n_rel += 1
        else:
            state, pick = next_below(state, 2)
            e = u if pick == 0 else v
            state, j = next_below(state, two_d)
            w = nbr[e, j]
            axis = j >> 1
            if j & 1 == 0:
                slot = e * d + axis
            else:
                slot = w * d + axis
            if edge_occ[slot] == 1:
                ratio = 1.0 / z
            else:
                ratio = z
            ok = True
            if ratio < 1.0:
                state, a = next_float(state)
                ok = a < ratio
            if ok:
                edge_occ[slot] ^= 1
                if pick == 0:
                    u = w
                else:
                    v = w
                n_acc += 1
        if measure:
            idx = 0
            for a in range(d):
                idx += strides[a] * dtab[offs[u, a], offs[v, a]]
            disp_hist[idx] += 1
            if sweep_steps > 0 and s % sweep_steps == 0:
                if u == v:
                    trail_series[n_meas] = 0.0
                else:
                    stamp += 1
                    start = u if u < v else v
                    target = v if u < v else u
                    tl, end = _trail_kernel(
                        edge_occ, edge_stamp, stamp, start, sorted_nbr, sorted_slot,
                        edge_occ.shape[0],
                    )
                    if tl < 0 or end != target:
                        # parity invariant broken; signal with a poison value
                        trail_series[n_meas] = -1.0
                    else:
                        trail_series[n_meas] = tl
                    n_c2 += 1
                n_meas += 1
    defects[0] = u
    defects[1] = v
    state_arr[0] = state
    stamp_arr[0] = stamp
    return n_acc, n_rel, n_meas, n_c2


@dataclass
class WormChain:
    """Worm state plus its RNG stream; step() advances the chain."""

    geom: TorusGeometry
    z: float
    seed: int = 0

    def __post_init__(self):
        self.cfg = HighTempConfig.empty(self.geom, self.z)
        self._nbr = self.geom.neighbor_table()
        self._offs = self.geom.offsets_table()
        self._dtab = self.geom.displacement_index_table()
        d = self.geom.d
        self._strides = np.array(
            [self.geom.L ** (d - 1 - a) for a in range(d)], dtype=np.int64
        )
        self._sorted_nbr, self._sorted_slot, _ = _sorted_neighbor_slots(self.geom)
        self._edge_stamp = np.zeros(self.geom.n_edges, dtype=np.int64)
        self._stamp = np.array([0], dtype=np.int64)
        self._state = stream_array(self.seed, 0x15, 0)
        self._null_hist = np.zeros(1, dtype=np.int64)
        self._null_series = np.zeros(1, dtype=np.float64)

    def step(self, n: int = 1):
        _worm_kernel(
            self._nbr, self._offs, self._dtab, self._strides, self.geom.d, self.z,
            n, self._state, self.cfg.edge_occ, self.cfg.defects, False,
            self._null_hist, 0, self._null_series, self._sorted_nbr,
            self._sorted_slot, self._edge_stamp, self._stamp,
        )
        return self

    def run(self, steps: int, sweep_steps: int | None = None):
        if sweep_steps is None:
            sweep_steps = max(1, self.geom.n_sites // (2 * self.geom.d))
        disp_hist = np.zeros(self.geom.n_sites, dtype=np.int64)
        n_meas_max = steps // sweep_steps + 1
        trail_series = np.zeros(n_meas_max, dtype=np.float64)
        n_acc, n_rel, n_meas, n_c2 = _worm_kernel(
            self._nbr, self._offs, self._dtab, self._strides, self.geom.d, self.z,
            steps, self._state, self.cfg.edge_occ, self.cfg.defects, True,
            disp_hist, sweep_steps, trail_series, self._sorted_nbr,
            self._sorted_slot, self._edge_stamp, self._stamp,
        )
        series = trail_series[:n_meas]
        if np.any(series < 0):
            raise RuntimeError("degree-parity invariant broken during trail measurement")
        return WormRun(
            steps=steps,
            end_hist=disp_hist,
            len_series=series,
            n_accept=n_acc,
            n_reloc=n_rel,
            n_c2_meas=n_c2,
            sweep_steps=sweep_steps,
        )


@dataclass
class WormRun:
    steps: int
    end_hist: np.ndarray  # defect displacement histogram; origin bin = even sector
    len_series: np.ndarray  # trail length at sweep cadence, zero in the even sector
    n_accept: int
    n_reloc: int
    n_c2_meas: int
    sweep_steps: int


def run_worm(
    geom: TorusGeometry,
    z: float,
    steps: int,
    burn_in: int | None = None,
    replicas: int = 8,
    seed: int = 0,
    sweep_steps: int | None = None,
) -> ChainObservables:
    """Equilibrate and measure independent worm chains.

    mean_len is the sweep-cadence average of the greedy trail length with
    the even sector contributing zero; the conditional mean given two
    distinct defects lands in meta["mean_len_conditional"].
    """
    if burn_in is None:
        burn_in = max(steps // 10, 1000)
    from .saw import derive_chain_seed

    def one(r):
        chain = WormChain(geom, z, seed=derive_chain_seed(seed, geom.L, z, r))
        chain.step(burn_in)
        return chain.run(steps, sweep_steps=sweep_steps)

    runs = run_replicas(one, replicas)
    cond_sum = sum(float(run.len_series.sum()) for run in runs)
    cond_n = sum(run.n_c2_meas for run in runs)
    extras = {
        "steps": steps,
        "burn_in": burn_in,
        "sweep_steps": runs[0].sweep_steps,
        "accepted": sum(r.n_accept for r in runs),
        "relocations": sum(r.n_reloc for r in runs),
        "mean_len_conditional": cond_sum / cond_n if cond_n else 0.0,
        "c2_fraction": cond_n / sum(len(r.len_series) for r in runs),
    }
    obs = _merge_replicas(geom, runs, f"ising_worm(z={z:g})", seed, extras)
    return obs


# ---------------------------------------------------------------------------
# exact small-torus oracles


def gibbs_two_point(geom: TorusGeometry, z: float) -> np.ndarray:
    """Brute-force spin sums: correlation of the origin spin with every site.

    Enumerates all 2^n spin configurations; n is capped at 20.
    """
    n = geom.n_sites
    if n > 20:
        raise ValueError(f"spin enumeration needs <= 20 sites, got {n}")
    beta = np.arctanh(z)
    nbr = geom.neighbor_table()
    configs = np.arange(1 << n, dtype=np.uint32)
    spins = ((configs[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8) * 2 - 1
    energy = np.zeros(len(configs))
    for site in range(n):
        for axis in range(geom.d):
            energy += spins[:, site] * spins[:, nbr[site, 2 * axis]]
    w = np.exp(beta * energy)
    zsum = w.sum()
    origin = geom.site_index(np.zeros(geom.d, dtype=int))
    corr = np.array([(w * spins[:, origin] * spins[:, x]).sum() / zsum for x in range(n)])
    return corr.reshape(geom.shape)


@njit(cache=True, nogil=True)
def _coset_sums_kernel(
    masks, base, zpow, pop16, want_trail, sorted_nbr, sorted_slot, n_edges, start, target
):
    """Gray-code sweep of base xor span(masks): returns (sum z^|A|, sum z^|A| T(A)).

    Trails are walked on the bitmask directly when want_trail is set.
    """
    m = masks.shape[0]
    cur = base
    edge_occ = np.zeros(n_edges, dtype=np.uint8)
    edge_stamp = np.zeros(n_edges, dtype=np.int64)
    for e in range(n_edges):
        if (cur >> np.uint64(e)) & np.uint64(1):
            edge_occ[e] = 1
    w_sum = 0.0
    wt_sum = 0.0
    stamp = np.int64(0)
    total = np.int64(1) << m
    gray_prev = np.uint64(0)
    for i in range(total):
        if i > 0:
            g = np.uint64(i) ^ (np.uint64(i) >> np.uint64(1))
            flip_word = g ^ gray_prev
            gray_prev = g
            # exactly one generator flips
            b = np.uint64(0)
            while (flip_word >> b) & np.uint64(1) == 0:
                b += np.uint64(1)
            cur = cur ^ masks[b]
            mask_b = masks[b]
            for e in range(n_edges):
                if (mask_b >> np.uint64(e)) & np.uint64(1):
                    edge_occ[e] ^= 1
        pc = (
            pop16[cur & np.uint64(0xFFFF)]
            + pop16[(cur >> np.uint64(16)) & np.uint64(0xFFFF)]
            + pop16[(cur >> np.uint64(32)) & np.uint64(0xFFFF)]
            + pop16[(cur >> np.uint64(48)) & np.uint64(0xFFFF)]
        )
        w = zpow[pc]
        w_sum += w
        if want_trail:
            stamp += 1
            tl, end = _trail_kernel(
                edge_occ, edge_stamp, stamp, start, sorted_nbr, sorted_slot, n_edges
            )
            wt_sum += w * tl
    return w_sum, wt_sum


@dataclass
class WormEnumeration:
    """Exact worm-measure sums for a small torus."""

    g: np.ndarray  # correlation per displacement, origin bin 1
    chi: float
    mean_trail: float  # even sector contributes zero
    mean_trail_conditional: float
    even_weight: float  # n_sites * sum over all-even configs
    odd_weight: float  # 2 * sum over defect pairs


def ht_enumerate(geom: TorusGeometry, z: float, want_trail: bool = True) -> WormEnumeration:
    """Exact enumeration over the high-temperature configuration space.

    All-even edge sets form the cycle space of the torus graph; sets with
    defects (u, v) are a coset of it.  Both are swept with a Gray code
    over the fundamental-cycle generators, so the cost is
    (#pairs + 1) * 2^(cycle rank).
    """
    n, d = geom.n_sites, geom.d
    n_edges = geom.n_edges
    if n_edges > 62:
        raise ValueError(f"enumeration needs <= 62 edge slots, got {n_edges}")
    nbr = geom.neighbor_table()

    # spanning tree by BFS on sites; non-tree slots generate the cycle space
    parent_site = np.full(n, -1, dtype=np.int64)
    parent_slot = np.full(n, -1, dtype=np.int64)
    order = [0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    tree_slots = set()
    head = 0
    while head < len(order):
        site = order[head]
        head += 1
        for axis in range(d):
            for j, other in ((2 * axis, nbr[site, 2 * axis]), (2 * axis + 1, nbr[site, 2 * axis + 1])):
                slot = site * d + axis if j % 2 == 0 else int(other) * d + axis
                if not seen[other]:
                    seen[other] = True
                    parent_site[other] = site
                    parent_slot[other] = slot
                    tree_slots.add(slot)
                    order.append(int(other))
    assert seen.all()

    def path_mask(a: int, b: int) -> int:
        # xor of tree-edge slots along the a->root and b->root paths
        mask = 0
        depth = {}
        x = a
        dx = 0
        while x != 0:
            depth[x] = dx
            x = int(parent_site[x])
            dx += 1
        # climb b until meeting a's ancestor chain
        mask_a = 0
        mask_b = 0
        x = b
        while x != 0 and x not in depth:
            mask_b ^= 1 << int(parent_slot[x])
            x = int(parent_site[x])
        meet = x
        x = a
        while x != meet:
            mask_a ^= 1 << int(parent_slot[x])
            x = int(parent_site[x])
        return mask_a ^ mask_b

    generators = []
    for slot in range(n_edges):
        if slot in tree_slots:
            continue
        site, axis = divmod(slot, d)
        other = int(nbr[site, 2 * axis])
        generators.append(np.uint64((1 << slot) ^ path_mask(site, other)))
    masks = np.array(generators, dtype=np.uint64)
    assert len(masks) == n_edges - n + 1

    pop16 = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.int64)
    zpow = z ** np.arange(n_edges + 1, dtype=np.float64)
    sorted_nbr, sorted_slot, _ = _sorted_neighbor_slots(geom)

    z0, _ = _coset_sums_kernel(
        masks, np.uint64(0), zpow, pop16, False, sorted_nbr, sorted_slot, n_edges, 0, 0
    )

    offs = geom.offsets_table()
    dtab = geom.displacement_index_table()
    strides = np.array([geom.L ** (d - 1 - a) for a in range(d)], dtype=np.int64)
    g_hist = np.zeros(n, dtype=np.float64)
    wt_total = 0.0
    w2_total = 0.0
    for u in range(n):
        for v in range(u + 1, n):
            base = np.uint64(path_mask(u, v))
            w2, wt = _coset_sums_kernel(
                masks, base, zpow, pop16, want_trail, sorted_nbr, sorted_slot, n_edges, u, v
            )
            w2_total += 2.0 * w2
            wt_total += 2.0 * wt
            idx_uv = 0
            idx_vu = 0
            for a in range(d):
                idx_uv += strides[a] * dtab[offs[u, a], offs[v, a]]
                idx_vu += strides[a] * dtab[offs[v, a], offs[u, a]]
            g_hist[idx_uv] += w2
            g_hist[idx_vu] += w2

    even_weight = n * z0
    g = g_hist / (n * z0)
    origin = geom.site_index(np.zeros(d, dtype=int))
    g[origin] = 1.0
    denom = even_weight + w2_total
    return WormEnumeration(
        g=g.reshape(geom.shape),
        chi=float(g.sum()),
        mean_trail=float(wt_total / denom),
        mean_trail_conditional=float(wt_total / w2_total) if w2_total else 0.0,
        even_weight=float(even_weight),
        odd_weight=float(w2_total),
    )
