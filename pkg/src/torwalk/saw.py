"""Variable-length self-avoiding walk at fugacity z on the torus.

The ensemble weights a walk from the origin by z^length.  Sampling uses
the Berretti-Sokal update: propose appending a uniform neighbor of the
tip (rejected if occupied, accepted with min(1, 2dz)) or deleting the tip
(accepted with min(1, 1/(2dz))), each with probability 1/2, which is in
detailed balance with the ensemble.  A lifted variant replaces the coin
by a direction variable that flips on rejection; its skew detailed
balance leaves the same marginal invariant and is validated against the
reversible chain.

The endpoint histogram normalized by its origin count estimates the
two-point function (the only walk ending at the origin is the empty one,
so g(0) = 1), the susceptibility is its sum, and the mean walk length is
the stationary time average of the length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .fss import RadialProfile, blocked_errors, radial_bin
from .lattice import TorusGeometry
from .parallel import run_replicas
from .rlrw import OccupationField
from .rng import next_below, next_float, stream_array


@njit(cache=True, nogil=True)
def _bs_chain_kernel(
    nbr,
    z,
    steps,
    state_arr,
    path,
    occ,
    k_arr,
    lifted,
    sigma_arr,
    measure,
    end_hist,
    len_hist,
    len_series,
    thin,
    up_flow,
    down_flow,
):
    """Advance the chain; optionally accumulate per-step measurements.

    Returns (accepted appends, accepted deletes, direction flips).
    """
    n_sites, two_d = nbr.shape
    p_app = min(1.0, two_d * z)
    p_del = min(1.0, 1.0 / (two_d * z))
    state = state_arr[0]
    k = k_arr[0]
    sigma = sigma_arr[0]
    n_app = 0
    n_del = 0
    n_flip = 0
    for s in range(steps):
        if lifted:
            grow = sigma > 0
        else:
            state, u = next_float(state)
            grow = u < 0.5
        moved = False
        if grow:
            state, j = next_below(state, two_d)
            w = nbr[path[k], j]
            if occ[w] == 0:
                state, v = next_float(state)
                if v < p_app:
                    k += 1
                    path[k] = w
                    occ[w] = 1
                    n_app += 1
                    moved = True
                    if measure:
                        up_flow[k - 1] += 1
        else:
            if k > 0:
                state, v = next_float(state)
                if v < p_del:
                    occ[path[k]] = 0
                    k -= 1
                    n_del += 1
                    moved = True
                    if measure:
                        down_flow[k] += 1
        if lifted and not moved:
            sigma = -sigma
            n_flip += 1
        if measure:
            end_hist[path[k]] += 1
            len_hist[k] += 1
            if thin > 0 and s % thin == 0:
                len_series[s // thin] = k
    state_arr[0] = state
    k_arr[0] = k
    sigma_arr[0] = sigma
    return n_app, n_del, n_flip


@dataclass
class SawChain:
    """Walk state plus the derived RNG stream; step() advances the chain."""

    geom: TorusGeometry
    z: float
    seed: int = 0
    lifted: bool = False

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError(f"fugacity must be > 0, got {self.z}")
        n = self.geom.n_sites
        self._nbr = self.geom.neighbor_table()
        self.path = np.zeros(n, dtype=np.int64)
        self.path[0] = self.geom.site_index(np.zeros(self.geom.d, dtype=int))
        self.occ = np.zeros(n, dtype=np.uint8)
        self.occ[self.path[0]] = 1
        self._k = np.array([0], dtype=np.int64)
        self._sigma = np.array([1], dtype=np.int64)
        self._state = stream_array(self.seed, 0x5A, 0)
        self._null = np.zeros(1, dtype=np.int64)
        self._nullf = np.zeros(1, dtype=np.float64)

    @property
    def length(self) -> int:
        return int(self._k[0])

    @property
    def tip(self) -> int:
        return int(self.path[self.length])

    def step(self, n: int = 1):
        _bs_chain_kernel(
            self._nbr, self.z, n, self._state, self.path, self.occ, self._k,
            self.lifted, self._sigma, False, self._null, self._null, self._nullf,
            0, self._null, self._null,
        )
        return self

    def run(self, steps: int, thin: int = 1):
        """Advance with measurements; returns a SawRun."""
        n = self.geom.n_sites
        end_hist = np.zeros(n, dtype=np.int64)
        len_hist = np.zeros(n, dtype=np.int64)
        n_series = steps // thin + (1 if steps % thin else 0) if thin > 0 else 0
        len_series = np.zeros(max(n_series, 1), dtype=np.float64)
        up_flow = np.zeros(n, dtype=np.int64)
        down_flow = np.zeros(n, dtype=np.int64)
        n_app, n_del, n_flip = _bs_chain_kernel(
            self._nbr, self.z, steps, self._state, self.path, self.occ, self._k,
            self.lifted, self._sigma, True, end_hist, len_hist, len_series,
            thin, up_flow, down_flow,
        )
        return SawRun(
            steps=steps,
            end_hist=end_hist,
            len_hist=len_hist,
            len_series=len_series[:n_series],
            up_flow=up_flow,
            down_flow=down_flow,
            n_append=n_app,
            n_delete=n_del,
            n_flip=n_flip,
        )


@dataclass
class SawRun:
    steps: int
    end_hist: np.ndarray
    len_hist: np.ndarray
    len_series: np.ndarray
    up_flow: np.ndarray
    down_flow: np.ndarray
    n_append: int
    n_delete: int
    n_flip: int


@dataclass
class ChainObservables:
    """Merged estimators from independent replicas of one chain."""

    g_field: OccupationField
    profile: RadialProfile
    chi: float
    chi_err: float
    mean_len: float
    mean_len_err: float
    tau_int: float
    meta: dict = field(default_factory=dict)


def _merge_replicas(geom, runs, law_desc, seed, extras=None):
    """Endpoint/defect histograms to g estimates with replica-scatter errors."""
    R = len(runs)
    n = geom.n_sites
    origin = geom.site_index(np.zeros(geom.d, dtype=int))
    g_rep = np.empty((R, n))
    chi_rep = np.empty(R)
    len_rep = np.empty(R)
    for i, run in enumerate(runs):
        h0 = run.end_hist[origin]
        if h0 == 0:
            raise RuntimeError(
                "no visits to the empty/diagonal state; cannot normalize g"
            )
        g_rep[i] = run.end_hist / h0
        chi_rep[i] = run.steps / h0
        len_rep[i] = run.len_series.mean()
    g_mean = g_rep.mean(axis=0)
    g_err = g_rep.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(n)
    field_ = OccupationField(
        kind="torus",
        d=geom.d,
        side=geom.L,
        cmin=geom.cmin,
        data=g_mean.reshape(geom.shape),
        law_desc=law_desc,
        stderr=g_err.reshape(geom.shape),
        n_samples=sum(r.steps for r in runs),
        meta={"replicas": R, "seed": seed},
    )
    taus = []
    for run in runs:
        if len(run.len_series) >= 1000:
            taus.append(blocked_errors(run.len_series).tau_int)
    tau = float(np.mean(taus)) if taus else float("nan")
    obs = ChainObservables(
        g_field=field_,
        profile=radial_bin(field_),
        chi=float(chi_rep.mean()),
        chi_err=float(chi_rep.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0,
        mean_len=float(len_rep.mean()),
        mean_len_err=float(len_rep.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0,
        tau_int=tau,
        meta=extras or {},
    )
    return obs


def run_saw(
    geom: TorusGeometry,
    z: float,
    steps: int,
    burn_in: int | None = None,
    replicas: int = 8,
    seed: int = 0,
    lifted: bool = False,
    thin: int | None = None,
) -> ChainObservables:
    """Equilibrate and measure independent Berretti-Sokal chains.

    steps counts measured updates per replica; thin sets the length-series
    cadence (default: one sweep of 2d z-ish moves, capped so the series
    stays long enough for blocking).
    """
    if burn_in is None:
        burn_in = max(steps // 10, 1000)
    if thin is None:
        thin = max(1, min(steps // 4096, geom.n_sites // (2 * geom.d)))

    def one(r):
        chain = SawChain(geom, z, seed=derive_chain_seed(seed, geom.L, z, r), lifted=lifted)
        chain.step(burn_in)
        return chain.run(steps, thin=thin)

    runs = run_replicas(one, replicas)
    extras = {
        "lifted": lifted,
        "steps": steps,
        "burn_in": burn_in,
        "thin": thin,
        "flips": sum(r.n_flip for r in runs),
        "accepted": sum(r.n_append + r.n_delete for r in runs),
        "len_hist": np.sum([r.len_hist for r in runs], axis=0),
        "up_flow": np.sum([r.up_flow for r in runs], axis=0),
        "down_flow": np.sum([r.down_flow for r in runs], axis=0),
    }
    return _merge_replicas(geom, runs, f"saw(z={z:g})", seed, extras)


def derive_chain_seed(seed: int, L: int, z: float, replica: int) -> int:
    """Documented stream rule: fold (L, fugacity bits, replica) into the seed."""
    from .rng import derive_stream, float_key

    return derive_stream(seed, L, float_key(z), replica)


@njit(cache=True, nogil=True)
def _saw_enum_kernel(nbr, origin, zpows, max_len, counts, end_weight):
    """Exhaustive depth-first enumeration of self-avoiding walks.

    Accumulates per-length walk counts and the z-weighted endpoint sums
    for every walk of length <= max_len.
    """
    n_sites, two_d = nbr.shape
    path = np.empty(max_len + 1, np.int64)
    choice = np.zeros(max_len + 1, np.int64)
    occ = np.zeros(n_sites, np.uint8)
    path[0] = origin
    occ[origin] = 1
    counts[0] += 1.0
    end_weight[origin] += zpows[0]
    depth = 0
    while True:
        if depth < max_len and choice[depth] < two_d:
            j = choice[depth]
            choice[depth] += 1
            w = nbr[path[depth], j]
            if occ[w] == 0:
                depth += 1
                path[depth] = w
                occ[w] = 1
                choice[depth] = 0
                counts[depth] += 1.0
                end_weight[w] += zpows[depth]
        else:
            if depth == 0:
                break
            occ[path[depth]] = 0
            depth -= 1


@dataclass
class SawEnumeration:
    """Exact truncated ensemble sums from exhaustive enumeration."""

    counts: np.ndarray  # number of SAWs per length
    end_weight: np.ndarray  # sum of z^len over walks ending at each site
    z: float
    max_len: int
    tail_bound: float  # bound on the weight of longer walks

    @property
    def partition(self) -> float:
        return float(np.sum(self.counts * self.z ** np.arange(len(self.counts))))

    def length_distribution(self) -> np.ndarray:
        w = self.counts * self.z ** np.arange(len(self.counts))
        return w / w.sum()

    def g_exact(self, geom: TorusGeometry) -> np.ndarray:
        return self.end_weight.reshape(geom.shape).copy()

    def chi(self) -> float:
        return float(self.end_weight.sum())


def enumerate_saw_weights(geom: TorusGeometry, z: float, max_len: int) -> SawEnumeration:
    """Exact z-weighted SAW sums by exhaustive enumeration up to max_len.

    The discarded longer-walk weight is bounded by extending every maximal
    enumerated walk with at most 2d-1 choices per step.
    """
    if max_len >= geom.n_sites:
        max_len = geom.n_sites - 1
    origin = geom.site_index(np.zeros(geom.d, dtype=int))
    counts = np.zeros(max_len + 1, dtype=np.float64)
    end_weight = np.zeros(geom.n_sites, dtype=np.float64)
    zpows = z ** np.arange(max_len + 1, dtype=np.float64)
    _saw_enum_kernel(geom.neighbor_table(), origin, zpows, max_len, counts, end_weight)
    growth = (2 * geom.d - 1) * z
    if growth < 1.0 and max_len < geom.n_sites - 1:
        tail = counts[max_len] * zpows[max_len] * growth / (1.0 - growth)
    elif max_len >= geom.n_sites - 1:
        tail = 0.0
    else:
        tail = np.inf
    return SawEnumeration(
        counts=counts, end_weight=end_weight, z=z, max_len=max_len, tail_bound=float(tail)
    )
