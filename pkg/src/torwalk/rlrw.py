"""Random-length random walk two-point functions.

Three evaluation routes share the OccupationField container:

* ``mc_two_point``: unbiased Monte Carlo visit counts on the torus.
* ``exact_two_point``: dense dynamic programming on the torus, iterating
  the one-step convolution and accumulating tail-weighted occupation.
* ``exact_two_point_infinite``: the same walk on the infinite lattice,
  evaluated on a large absorbing box.  Beyond a switch index the exact
  step distribution is replaced by the Gaussian local-limit kernel; the
  switch sits deep enough in the diffusive regime that the certified
  error bound (local-CLT constant, kernel step differences, leaked mass,
  truncated tails) stays far below the plateau scale being measured.

``plateau_discrepancy`` subtracts the two exact fields and rescales by
L^d / mean walk length, the combination whose large-L limit the torus
analysis pins down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .asymptotics import LOCAL_CLT_CONSTANT, gaussian_pn_step_bound
from .errors import ResourceLimit
from .lattice import TorusGeometry
from .lengths import WalkLengthLaw
from .rng import derive_stream, next_below, stream_array

# default memory guards (number of sites in a dense field)
MAX_TORUS_SITES = 50_000_000
MAX_BOX_SITES = 30_000_000


@dataclass
class OccupationField:
    """Per-site expected visits, plus enough metadata to audit them.

    kind "torus" wraps coordinates; kind "box" is a centered cube of the
    infinite lattice with absorbing boundary.  ``stderr`` is per-site for
    Monte Carlo fields; exact fields carry a scalar ``error_bound``
    (truncation + leak + completion) instead.
    """

    kind: str
    d: int
    side: int
    cmin: int
    data: np.ndarray
    law_desc: str
    stderr: np.ndarray | None = None
    n_samples: int | None = None
    error_bound: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.n_samples is None

    def value(self, coords) -> float:
        idx = tuple(int(c) - self.cmin for c in np.atleast_1d(coords))
        return float(self.data[idx])

    def total(self) -> float:
        return float(self.data.sum())

    def coords_grid(self) -> np.ndarray:
        """(n_sites, d) coordinates in flat (row-major) order."""
        axes = [np.arange(self.cmin, self.cmin + self.side)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def flat_stderr(self) -> np.ndarray:
        if self.stderr is not None:
            return self.stderr.reshape(-1)
        return np.full(self.data.size, self.error_bound)


def _tail_stop(law: WalkLengthLaw, tail_cut: float) -> int:
    """Smallest n with P(N >= n) < tail_cut."""
    if not 0.0 < tail_cut < 1.0:
        raise ValueError(f"tail_cut must lie in (0, 1), got {tail_cut}")
    cap = law.support_max + 1 if law.support_max is not None else None
    if cap is not None and law.tail(cap - 1) >= tail_cut:
        return cap
    hi = 1
    while law.tail(hi) >= tail_cut:
        hi *= 2
        if cap is not None and hi >= cap:
            hi = cap
            break
    lo = hi // 2
    while lo < hi:
        mid = (lo + hi) // 2
        if law.tail(mid) < tail_cut:
            hi = mid
        else:
            lo = mid + 1
    return hi


@njit(cache=True, nogil=True)
def _dp_nbr_kernel(nbr, tails, origin, absorbing):
    """Tail-weighted occupation via a neighbor-table one-step convolution.

    With absorbing=True, entries of nbr equal to -1 drop mass; returns
    (field, tail-weighted leaked mass).
    """
    n_sites, two_d = nbr.shape
    q = np.zeros(n_sites)
    q2 = np.zeros(n_sites)
    out = np.zeros(n_sites)
    q[origin] = 1.0
    out[origin] = tails[0]
    leak_err = 0.0
    for n in range(1, tails.shape[0]):
        t = tails[n]
        mass = 0.0
        if absorbing:
            for i in range(n_sites):
                acc = 0.0
                for j in range(two_d):
                    k = nbr[i, j]
                    if k >= 0:
                        acc += q[k]
                v = acc / two_d
                q2[i] = v
                out[i] += t * v
                mass += v
            leak_err += t * (1.0 - mass)
        else:
            for i in range(n_sites):
                acc = 0.0
                for j in range(two_d):
                    acc += q[nbr[i, j]]
                v = acc / two_d
                q2[i] = v
                out[i] += t * v
        q, q2 = q2, q
    return out, leak_err


@njit(cache=True, nogil=True)
def _dp_torus_mixing_kernel(nbr, tails, origin, parity, bipartite, rel_tol):
    """Torus convolution with an early exit once the walk has mixed.

    For even side lengths the walk is bipartite and the step distribution
    converges to 2/n_sites on the parity class of the step index; for odd
    sides it converges to 1/n_sites everywhere.  Once the in-class
    deviation falls below rel_tol the remaining tail-weighted sum is a
    closed form handled by the caller.  Returns (field, last step index
    included, relative deviation at exit).
    """
    n_sites, two_d = nbr.shape
    q = np.zeros(n_sites)
    q2 = np.zeros(n_sites)
    out = np.zeros(n_sites)
    q[origin] = 1.0
    out[origin] = tails[0]
    target = 2.0 / n_sites if bipartite else 1.0 / n_sites
    n_exit = tails.shape[0] - 1
    dev_exit = -1.0
    for n in range(1, tails.shape[0]):
        t = tails[n]
        for i in range(n_sites):
            acc = 0.0
            for j in range(two_d):
                acc += q[nbr[i, j]]
            v = acc / two_d
            q2[i] = v
            out[i] += t * v
        q, q2 = q2, q
        if n % 32 == 0:
            dev = 0.0
            cls = n % 2
            for i in range(n_sites):
                if not bipartite or parity[i] == cls:
                    a = abs(q[i] - target)
                    if a > dev:
                        dev = a
            if dev < rel_tol * target:
                n_exit = n
                dev_exit = dev
                break
    return out, n_exit, dev_exit


@njit(cache=True, nogil=True)
def _dp_box3_kernel(tails, S):
    """d=3 absorbing-box evolution on a zero-padded cube of side S (odd)."""
    P = S + 2
    c = S // 2 + 1
    q = np.zeros((P, P, P))
    q2 = np.zeros((P, P, P))
    out = np.zeros((P, P, P))
    q[c, c, c] = 1.0
    out[c, c, c] = tails[0]
    leak_err = 0.0
    for n in range(1, tails.shape[0]):
        t = tails[n]
        mass = 0.0
        for i in range(1, S + 1):
            for j in range(1, S + 1):
                for k in range(1, S + 1):
                    v = (
                        q[i - 1, j, k]
                        + q[i + 1, j, k]
                        + q[i, j - 1, k]
                        + q[i, j + 1, k]
                        + q[i, j, k - 1]
                        + q[i, j, k + 1]
                    ) / 6.0
                    q2[i, j, k] = v
                    out[i, j, k] += t * v
                    mass += v
        leak_err += t * (1.0 - mass)
        q, q2 = q2, q
    return out, leak_err


def exact_two_point(geom: TorusGeometry, law: WalkLengthLaw, tail_cut: float = 1e-12) -> OccupationField:
    """Exact torus two-point function by dynamic programming.

    Accumulates P(N >= n) times the n-step distribution until the tail
    drops below tail_cut; once the step distribution has mixed to its
    uniform (per parity class, for even L) limit the remaining sum
    collapses to a closed form.  The discarded mass and the deviation at
    the mixing exit feed the reported error bound.
    """
    if geom.n_sites > MAX_TORUS_SITES:
        raise ResourceLimit(
            f"torus with {geom.n_sites} sites exceeds the dense-field budget"
        )
    n_stop = _tail_stop(law, tail_cut)
    tails = np.asarray(law.tail(np.arange(n_stop)), dtype=np.float64)
    origin = geom.site_index(np.zeros(geom.d, dtype=int))
    bipartite = geom.L % 2 == 0
    parity = (np.sum(np.abs(geom.coords_table()), axis=1) % 2).astype(np.int8)
    data, n_exit, dev_exit = _dp_torus_mixing_kernel(
        geom.neighbor_table(), tails, origin, parity, bipartite, 1e-13
    )
    bound = float(law.tail_sum_from(n_stop))
    if n_exit < n_stop - 1:
        # closed-form remainder: tails beyond n_exit hit the mixed profile
        rest = np.arange(n_exit + 1, n_stop)
        rest_tails = np.asarray(law.tail(rest), dtype=np.float64)
        if bipartite:
            # site x receives the steps n with n + |x|_1 even
            s = np.array(
                [rest_tails[rest % 2 == 0].sum(), rest_tails[rest % 2 == 1].sum()]
            )
            data = data + (2.0 / geom.n_sites) * s[parity]
        else:
            data = data + rest_tails.sum() / geom.n_sites
        bound += float(dev_exit) * float(rest_tails.sum())
    return OccupationField(
        kind="torus",
        d=geom.d,
        side=geom.L,
        cmin=geom.cmin,
        data=data.reshape(geom.shape) if data.ndim == 1 else data,
        law_desc=law.describe(),
        error_bound=bound,
        meta={
            "tail_cut": tail_cut,
            "n_steps": n_stop - 1,
            "mixing_exit": int(n_exit),
            "mean_len": law.mean(),
        },
    )


def _box_neighbor_table(d: int, R: int) -> np.ndarray:
    side = 2 * R + 1
    n = side**d
    grid = np.arange(n, dtype=np.int32).reshape((side,) * d)
    out = np.empty((n, 2 * d), dtype=np.int32)
    for a in range(d):
        plus = np.full_like(grid, -1)
        minus = np.full_like(grid, -1)
        sl_to = [slice(None)] * d
        sl_from = [slice(None)] * d
        sl_to[a], sl_from[a] = slice(0, side - 1), slice(1, side)
        plus[tuple(sl_to)] = grid[tuple(sl_from)]
        sl_to[a], sl_from[a] = slice(1, side), slice(0, side - 1)
        minus[tuple(sl_to)] = grid[tuple(sl_from)]
        out[:, 2 * a] = plus.reshape(-1)
        out[:, 2 * a + 1] = minus.reshape(-1)
    return out


def _gaussian_completion(law, d, n_lo, n_hi, rsq, tail_cut):
    """Tail-kernel sum for steps n in [n_lo, n_hi] on squared radii rsq.

    Returns (per-rsq values, certified error bound) for approximating
    sum tail(n) p_n(x) by half the tail-weighted Gaussian kernel.
    """
    pref = 2.0 * (d / (2.0 * np.pi)) ** (d / 2.0)
    comp = np.zeros(len(rsq))
    sum_tail_pow = 0.0  # sum tail(n) n^{-d/2-1}
    sum_step = 0.0  # sum tail(n) |kernel step difference| bound
    for lo in range(n_lo, n_hi + 1, 8192):
        hi = min(lo + 8191, n_hi)
        ns = np.arange(lo, hi + 1, dtype=np.float64)
        tails = np.asarray(law.tail(ns), dtype=np.float64)
        kern = pref * ns ** (-d / 2.0)
        comp += np.exp(-np.outer(rsq, 0.5 * d / ns)) @ (0.5 * tails * kern)
        sum_tail_pow += float(np.sum(tails * ns ** (-d / 2.0 - 1.0)))
        sum_step += float(np.sum(tails * gaussian_pn_step_bound(ns, d)))
    beyond = law.tail_sum_from(n_hi + 1)
    head = float(law.tail(n_lo)) * pref * n_lo ** (-d / 2.0)
    err = (
        LOCAL_CLT_CONSTANT * sum_tail_pow  # local CLT deviation
        + 0.5 * (2.0 * head + sum_step)  # parity averaging of the kernel
        + beyond * pref * n_hi ** (-d / 2.0) * (1.0 + LOCAL_CLT_CONSTANT / n_hi)
    )
    return comp, float(err)


def exact_two_point_infinite(
    d: int,
    law: WalkLengthLaw,
    box_radius: int | None = None,
    tail_cut: float = 1e-12,
    gauss_switch: int | None = None,
    crop_radius: int | None = None,
) -> OccupationField:
    """Infinite-lattice two-point function on a centered box.

    Dynamic programming with absorbing boundary up to ``gauss_switch``
    steps (default: capped at 1000), then a Gaussian-kernel completion
    for the remaining tail.  The reported error bound collects leaked
    mass, tail truncation and the completion's certified error.
    """
    n_stop = _tail_stop(law, tail_cut)
    if gauss_switch is None:
        gauss_switch = 1000
    dp_top = min(n_stop - 1, int(gauss_switch))

    if box_radius is None:
        # contain dp_top-step walks: 4.5 per-axis standard deviations
        box_radius = int(np.ceil(4.5 * np.sqrt(max(dp_top, 1) / d))) + 2
    mean = law.mean()
    side = 2 * box_radius + 1
    if side**d > MAX_BOX_SITES:
        raise ResourceLimit(
            f"absorbing box side {side}^{d} exceeds the dense-field budget"
        )

    tails = np.asarray(law.tail(np.arange(dp_top + 1)), dtype=np.float64)
    if d == 3:
        padded, leak_err = _dp_box3_kernel(tails, side)
        data = padded[1:-1, 1:-1, 1:-1].copy()
    else:
        origin = (side**d) // 2
        flat, leak_err = _dp_nbr_kernel(_box_neighbor_table(d, box_radius), tails, origin, True)
        data = flat.reshape((side,) * d)

    if crop_radius is not None:
        if crop_radius > box_radius:
            raise ValueError("crop_radius cannot exceed box_radius")
        lo, hi = box_radius - crop_radius, box_radius + crop_radius + 1
        data = data[(slice(lo, hi),) * d].copy()
        radius = crop_radius
    else:
        radius = box_radius

    bound = float(leak_err) + float(law.tail_sum_from(n_stop))
    if leak_err > 1e-5 * (mean + 1.0):
        import warnings

        warnings.warn(
            f"absorbing box radius {box_radius} leaks tail-weighted mass "
            f"{leak_err:.3e} (mean length {mean:.3g}); enlarge the box or "
            "loosen expectations",
            RuntimeWarning,
            stacklevel=2,
        )
    if dp_top < n_stop - 1:
        axes = [np.arange(-radius, radius + 1)] * d
        mesh = np.meshgrid(*axes, indexing="ij")
        rsq_grid = sum(m.astype(np.float64) ** 2 for m in mesh)
        rsq, inverse = np.unique(rsq_grid.reshape(-1), return_inverse=True)
        comp, comp_err = _gaussian_completion(law, d, dp_top + 1, n_stop - 1, rsq, tail_cut)
        data = data + comp[inverse].reshape(data.shape)
        bound += comp_err

    return OccupationField(
        kind="box",
        d=d,
        side=2 * radius + 1,
        cmin=-radius,
        data=data,
        law_desc=law.describe(),
        error_bound=bound,
        meta={
            "tail_cut": tail_cut,
            "dp_steps": dp_top,
            "gauss_steps": max(0, n_stop - 1 - dp_top),
            "box_radius": box_radius,
            "leak_error": float(leak_err),
            "mean_len": mean,
        },
    )


@njit(cache=True, nogil=True)
def _rlrw_mc_kernel(nbr, lengths, origin, state_arr, visit_sum, visit_sumsq, max_len):
    n_sites, two_d = nbr.shape
    scratch = np.zeros(n_sites, np.int64)
    touched = np.empty(max_len + 1, np.int64)
    state = state_arr[0]
    for w in range(lengths.shape[0]):
        pos = origin
        scratch[origin] = 1
        touched[0] = origin
        n_t = 1
        for _ in range(lengths[w]):
            state, j = next_below(state, two_d)
            pos = nbr[pos, j]
            if scratch[pos] == 0:
                touched[n_t] = pos
                n_t += 1
            scratch[pos] += 1
        for t in range(n_t):
            site = touched[t]
            c = scratch[site]
            visit_sum[site] += c
            visit_sumsq[site] += c * c
            scratch[site] = 0
    state_arr[0] = state


def mc_two_point(
    geom: TorusGeometry,
    law: WalkLengthLaw,
    walks_per_replica: int,
    replicas: int = 1,
    seed: int = 0,
) -> OccupationField:
    """Monte Carlo estimate of the torus two-point function.

    Each walk draws its length, runs the wrapped walk from the origin and
    adds one visit per step (origin counted at step zero).  Replicas use
    disjoint derived streams and merge in fixed order.
    """
    if walks_per_replica < 1 or replicas < 1:
        raise ValueError("need at least one walk and one replica")
    n = geom.n_sites
    nbr = geom.neighbor_table()
    origin = geom.site_index(np.zeros(geom.d, dtype=int))
    visit_sum = np.zeros(n, dtype=np.int64)
    visit_sumsq = np.zeros(n, dtype=np.int64)
    for r in range(replicas):
        lengths_rng = np.random.default_rng(derive_stream(seed, 0x1E, r))
        lengths = np.asarray(law.sample(lengths_rng, size=walks_per_replica), dtype=np.int64)
        state = stream_array(seed, 0x2E, r)
        _rlrw_mc_kernel(nbr, lengths, origin, state, visit_sum, visit_sumsq, int(lengths.max()))
    total = walks_per_replica * replicas
    mean = visit_sum / total
    var = np.maximum(visit_sumsq / total - mean**2, 0.0)
    stderr = np.sqrt(var / total)
    return OccupationField(
        kind="torus",
        d=geom.d,
        side=geom.L,
        cmin=geom.cmin,
        data=mean.reshape(geom.shape),
        law_desc=law.describe(),
        stderr=stderr.reshape(geom.shape),
        n_samples=total,
        meta={"replicas": replicas, "walks_per_replica": walks_per_replica, "seed": seed},
    )


@dataclass
class PlateauComparison:
    """Torus-minus-infinite difference, rescaled by L^d / mean length."""

    delta: np.ndarray
    ratio: np.ndarray
    norms: np.ndarray
    bound: float
    mean_len: float
    L: int
    d: int

    def ratio_within(self, radius: float) -> np.ndarray:
        return self.ratio[self.norms <= radius]


def plateau_discrepancy(
    torus_field: OccupationField, infinite_field: OccupationField, law: WalkLengthLaw
) -> PlateauComparison:
    """Per-site difference of the torus and infinite-lattice fields.

    The returned ratio is delta * L^d / mean(N); the combined error bound
    of both inputs is rescaled the same way.
    """
    if torus_field.kind != "torus" or infinite_field.kind != "box":
        raise ValueError("expected a torus field and a box field")
    if torus_field.d != infinite_field.d:
        raise ValueError("dimension mismatch between fields")
    d, L = torus_field.d, torus_field.side
    tmax = max(abs(torus_field.cmin), abs(torus_field.cmin + L - 1))
    if tmax > -infinite_field.cmin:
        raise ValueError("infinite-lattice field does not cover the torus box")
    coords = torus_field.coords_grid()
    off = coords - infinite_field.cmin
    flat_box = infinite_field.data[tuple(off[:, a] for a in range(d))]
    delta = torus_field.flat() - flat_box
    mean = law.mean()
    scale = L**d / mean
    bound = (torus_field.error_bound + infinite_field.error_bound) * scale
    norms = np.sqrt(np.sum(coords.astype(np.float64) ** 2, axis=1))
    return PlateauComparison(
        delta=delta.reshape(torus_field.data.shape),
        ratio=(delta * scale).reshape(torus_field.data.shape),
        norms=norms.reshape(torus_field.data.shape),
        bound=float(bound),
        mean_len=mean,
        L=L,
        d=d,
    )


def fold_to_torus(box_field: OccupationField, geom: TorusGeometry) -> np.ndarray:
    """Wrap a box field onto the torus by summing over periodic images."""
    if box_field.d != geom.d:
        raise ValueError("dimension mismatch")
    coords = box_field.coords_grid()
    wrapped = (coords - geom.cmin) % geom.L
    flat_idx = np.zeros(len(coords), dtype=np.int64)
    for a in range(geom.d):
        flat_idx = flat_idx * geom.L + wrapped[:, a]
    out = np.zeros(geom.n_sites)
    np.add.at(out, flat_idx, box_field.flat())
    return out.reshape(geom.shape)
