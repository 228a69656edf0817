"""Walk-length laws: the random step budget N driving the walk models.

Every law is supported on the nonnegative integers and exposes exact tail
probabilities P(N >= n); the exact evaluators consume tails directly, so
their accuracy is auditable.  Continuous laws (half-normal, exponential)
are rounded to the nearest integer and keep a sub-unit mean bias that is
documented rather than corrected.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special, stats


@dataclass(frozen=True)
class ScalingLimitF:
    """Tail-limit function F(t) = lim P(N_L / a_L^2 >= t).

    kind "constant": F = c0 below t_max, 0 beyond; kind "exp_tail":
    F(t) = exp(-rate * t).
    """

    kind: str
    c0: float = 1.0
    rate: float = 1.0
    t_max: float = np.inf

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "constant":
            out = np.where(t < self.t_max, self.c0, 0.0)
        elif self.kind == "exp_tail":
            out = np.exp(-self.rate * t)
        else:
            raise ValueError(f"unknown scaling-limit kind {self.kind!r}")
        return out if out.ndim else float(out)


class WalkLengthLaw:
    """Base interface: sampling, exact mean, tails, truncation sums."""

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def tail(self, n):
        """P(N >= n), exact, vectorized over n."""
        raise NotImplementedError

    def tail_sum_from(self, n0: int) -> float:
        """sum_{m >= n0} P(N >= m); reported as truncation bound."""
        raise NotImplementedError

    @property
    def support_max(self) -> int | None:
        return None

    def scaling_limit(self, a_sq: float) -> ScalingLimitF | None:
        """Limit of P(N / a_sq >= t) when known in closed form, else None."""
        return None

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Deterministic(WalkLengthLaw):
    n0: int

    def __post_init__(self):
        if self.n0 < 0 or int(self.n0) != self.n0:
            raise ValueError(f"deterministic length must be integer >= 0, got {self.n0}")

    def mean(self) -> float:
        return float(self.n0)

    def sample(self, rng, size=None):
        if size is None:
            return int(self.n0)
        return np.full(size, self.n0, dtype=np.int64)

    def tail(self, n):
        n = np.asarray(n)
        out = np.where(n <= self.n0, 1.0, 0.0)
        return out if out.ndim else float(out)

    def tail_sum_from(self, n0: int) -> float:
        return float(max(0, self.n0 - n0 + 1))

    @property
    def support_max(self):
        return int(self.n0)

    def scaling_limit(self, a_sq):
        return ScalingLimitF("constant", c0=1.0, t_max=self.n0 / a_sq)

    def describe(self) -> str:
        return f"deterministic(n0={self.n0})"


@dataclass(frozen=True)
class Geometric(WalkLengthLaw):
    """Geometric on {0,1,2,...} with P(N=k) = p(1-p)^k, p = 1/(1+mean)."""

    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"geometric mean must be > 0, got {self.m}")

    @property
    def p(self) -> float:
        return 1.0 / (1.0 + self.m)

    @property
    def r(self) -> float:
        # survival ratio P(N >= n+1) / P(N >= n)
        return self.m / (1.0 + self.m)

    def mean(self) -> float:
        return float(self.m)

    def sample(self, rng, size=None):
        out = rng.geometric(self.p, size=size) - 1
        return int(out) if size is None else out.astype(np.int64)

    def tail(self, n):
        n = np.asarray(n, dtype=np.float64)
        out = np.exp(n * np.log(self.r))
        return out if out.ndim else float(out)

    def tail_sum_from(self, n0: int) -> float:
        return float(self.r**n0 * (1.0 + self.m))

    def scaling_limit(self, a_sq):
        return ScalingLimitF("exp_tail", rate=a_sq / self.m)

    def describe(self) -> str:
        return f"geometric(mean={self.m:g})"


@dataclass(frozen=True)
class HalfNormal(WalkLengthLaw):
    """|Normal(0, sigma)| rounded to nearest integer, sigma = mean*sqrt(pi/2)."""

    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"half-normal mean must be > 0, got {self.m}")

    @property
    def sigma(self) -> float:
        return self.m * np.sqrt(np.pi / 2.0)

    def mean(self) -> float:
        return self._mean

    @cached_property
    def _mean(self) -> float:
        return float(np.sum(self.tail(np.arange(1, self._n_top))))

    @cached_property
    def _n_top(self) -> int:
        # erfc argument ~ 9.5 puts the tail below 1e-40
        return int(np.ceil(9.5 * self.sigma * np.sqrt(2.0))) + 2

    def sample(self, rng, size=None):
        out = np.rint(np.abs(rng.normal(0.0, self.sigma, size=size)))
        return int(out) if size is None else out.astype(np.int64)

    def tail(self, n):
        n = np.asarray(n, dtype=np.float64)
        out = special.erfc((n - 0.5) / (self.sigma * np.sqrt(2.0)))
        out = np.where(n <= 0, 1.0, out)
        return out if out.ndim else float(out)

    def tail_sum_from(self, n0: int) -> float:
        if n0 >= self._n_top:
            return 0.0
        return float(np.sum(self.tail(np.arange(max(n0, 1), self._n_top)))) + (
            1.0 if n0 <= 0 else 0.0
        )

    def describe(self) -> str:
        return f"half_normal(mean={self.m:g})"


@dataclass(frozen=True)
class DiscretizedExponential(WalkLengthLaw):
    """Exponential with the given mean, rounded to nearest integer."""

    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"exponential mean must be > 0, got {self.m}")

    def mean(self) -> float:
        # exact mean of the rounded variable
        return float(np.exp(-0.5 / self.m) / -np.expm1(-1.0 / self.m))

    def sample(self, rng, size=None):
        out = np.rint(rng.exponential(self.m, size=size))
        return int(out) if size is None else out.astype(np.int64)

    def tail(self, n):
        n = np.asarray(n, dtype=np.float64)
        out = np.exp(-(n - 0.5) / self.m)
        out = np.where(n <= 0, 1.0, out)
        return out if out.ndim else float(out)

    def tail_sum_from(self, n0: int) -> float:
        base = 1.0 if n0 <= 0 else 0.0
        n0 = max(n0, 1)
        return float(base + np.exp(-(n0 - 0.5) / self.m) / -np.expm1(-1.0 / self.m))

    def scaling_limit(self, a_sq):
        return ScalingLimitF("exp_tail", rate=a_sq / self.m)

    def describe(self) -> str:
        return f"discretized_exponential(mean={self.m:g})"


@dataclass(frozen=True)
class CompleteGraphSaw(WalkLengthLaw):
    """Length of a SAW on the complete graph K_n at fugacity z.

    Distributed as n-1-X with X ~ Poisson(1/z) conditioned on X <= n-1.
    Tails use the regularized-gamma Poisson CDF, stable for n ~ 1e5.
    """

    n_sites: int
    z: float

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"complete graph needs >= 1 sites, got {self.n_sites}")
        if not self.z > 0:
            raise ValueError(f"fugacity must be > 0, got {self.z}")

    @property
    def lam(self) -> float:
        return 1.0 / self.z

    @property
    def _kmax(self) -> int:
        return self.n_sites - 1

    @cached_property
    def _cdf_kmax(self) -> float:
        return float(stats.poisson.cdf(self._kmax, self.lam))

    def mean(self) -> float:
        if self._kmax == 0:
            return 0.0
        return float(
            self._kmax - self.lam * stats.poisson.cdf(self._kmax - 1, self.lam) / self._cdf_kmax
        )

    def sample(self, rng, size=None):
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        x = rng.poisson(self.lam, size=n)
        bad = x > self._kmax
        while np.any(bad):
            x[bad] = rng.poisson(self.lam, size=int(bad.sum()))
            bad = x > self._kmax
        out = (self._kmax - x).astype(np.int64)
        return int(out[0]) if scalar else out.reshape(size)

    def tail(self, n):
        n = np.asarray(n)
        out = np.where(
            n <= 0,
            1.0,
            np.where(
                n > self._kmax,
                0.0,
                stats.poisson.cdf(self._kmax - n, self.lam) / self._cdf_kmax,
            ),
        )
        return out if out.ndim else float(out)

    def tail_sum_from(self, n0: int) -> float:
        if n0 > self._kmax:
            return 0.0
        ns = np.arange(max(n0, 0), self._kmax + 1)
        return float(np.sum(self.tail(ns)))

    @property
    def support_max(self):
        return self._kmax

    def describe(self) -> str:
        return f"complete_graph_saw(n={self.n_sites}, z={self.z:g})"


_VARIANTS = {
    "deterministic": lambda p: Deterministic(int(p["n0"])),
    "geometric": lambda p: Geometric(float(p["mean"])),
    "half_normal": lambda p: HalfNormal(float(p["mean"])),
    "discretized_exponential": lambda p: DiscretizedExponential(float(p["mean"])),
    "complete_graph_saw": lambda p: CompleteGraphSaw(int(p["n_sites"]), float(p["z"])),
}


def law_from_config(spec: dict) -> WalkLengthLaw:
    """Build a law from a config mapping {"variant": name, ...params}."""
    spec = dict(spec)
    try:
        variant = spec.pop("variant")
    except KeyError:
        raise ValueError("law config needs a 'variant' key") from None
    try:
        builder = _VARIANTS[variant]
    except KeyError:
        raise ValueError(
            f"unknown law variant {variant!r}; known: {sorted(_VARIANTS)}"
        ) from None
    try:
        return builder(spec)
    except KeyError as e:
        raise ValueError(f"law variant {variant!r} missing parameter {e}") from None


def empirical_scaling_tail(law: WalkLengthLaw, a_sq: float, rng, n_samples: int = 100_000):
    """Empirical tail of N / a_sq: returns (t values, empirical F)."""
    draws = np.sort(law.sample(rng, size=n_samples)) / a_sq
    f = 1.0 - np.arange(n_samples) / n_samples
    return draws, f
