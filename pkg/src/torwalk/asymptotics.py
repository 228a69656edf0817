"""Closed-form predictions and numerical bound checkers.

Covers the Gaussian local-limit kernel for the simple random walk, exact
n-step probabilities, the scaling-limit integral for two-point functions,
the additive plateau value on the torus, exhaustive/numeric verification
of the inequalities used by the torus-vs-infinite-lattice analysis, and
the exponent predictions for critical and pseudocritical runs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import integrate, special

from .errors import ResourceLimit, VerificationFailure

# ---------------------------------------------------------------------------
# Gaussian kernel and exact walk probabilities


def gaussian_pn(n, x, d: int):
    """Gaussian local-limit kernel 2 (d / 2 pi n)^{d/2} exp(-|x|^2 d / 2n).

    Approximates the n-step probability of the simple random walk at x on
    the sites of matching parity (the factor 2 accounts for the parity
    constraint).  Vectorized over n.
    """
    n = np.asarray(n, dtype=np.float64)
    xsq = float(np.dot(np.asarray(x, dtype=np.float64), np.asarray(x, dtype=np.float64)))
    out = 2.0 * (d / (2.0 * np.pi * n)) ** (d / 2.0) * np.exp(-xsq * d / (2.0 * n))
    return out if out.ndim else float(out)


def gaussian_pn_step_bound(n, d: int):
    """Bound on |gaussian_pn(n, x) - gaussian_pn(n+1, x)|, uniform in x."""
    n = np.asarray(n, dtype=np.float64)
    out = (d / (2.0 * np.pi)) ** (d / 2.0) * (d + 2.0) * n ** (-1.0 - d / 2.0)
    return out if out.ndim else float(out)


_MAX_COMPOSITIONS = 20_000_000


def srw_pn_exact(n: int, x, d: int) -> float:
    """Exact n-step probability P(S_n = x) for the SRW on Z^d.

    Decomposes the walk over per-axis step budgets; each term is evaluated
    in log space, so the result is accurate to roundoff.  Zero whenever
    n + |x|_1 is odd or |x|_1 > n.
    """
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (d,):
        raise ValueError(f"x must have length d={d}, got shape {x.shape}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    ax = np.abs(x)
    l1 = int(ax.sum())
    if l1 > n or (n + l1) % 2 == 1:
        return 0.0
    if n == 0:
        return 1.0
    if d == 1:
        k = (n + int(x[0])) // 2
        return float(np.exp(_log_comb(n, k) - n * np.log(2.0)))
    if comb(n + d - 1, d - 1) > _MAX_COMPOSITIONS:
        raise ResourceLimit(f"srw_pn_exact(n={n}, d={d}): too many step compositions")
    parts = _compositions(n, d)
    ok = np.all(parts >= ax[None, :], axis=1) & np.all((parts - ax[None, :]) % 2 == 0, axis=1)
    parts = parts[ok]
    if parts.size == 0:
        return 0.0
    nf = parts.astype(np.float64)
    # multinomial over axes times the per-axis one-dimensional walk term
    logs = special.gammaln(n + 1) - np.sum(special.gammaln(nf + 1), axis=1) - n * np.log(2.0 * d)
    k = (parts + x[None, :]) // 2
    logs += np.sum(
        special.gammaln(nf + 1)
        - special.gammaln(k + 1.0)
        - special.gammaln(nf - k + 1.0),
        axis=1,
    )
    top = logs.max()
    return float(np.exp(top) * np.sum(np.exp(logs - top)))


def _log_comb(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _compositions(n: int, d: int) -> np.ndarray:
    """All length-d compositions of n (stars and bars), shape (count, d)."""
    bars = np.array(
        list(itertools.combinations(range(n + d - 1), d - 1)), dtype=np.int64
    ).reshape(-1, d - 1)
    lo = np.concatenate([np.full((bars.shape[0], 1), -1, dtype=np.int64), bars], axis=1)
    hi = np.concatenate([bars, np.full((bars.shape[0], 1), n + d - 1, dtype=np.int64)], axis=1)
    return hi - lo - 1


# ---------------------------------------------------------------------------
# Scaling-limit integral and plateau value


def constant_limit_value(c0: float, d: int) -> float:
    """Closed form of the scaling-limit integral for a constant tail limit."""
    return c0 * np.pi ** (-d / 2.0) * (d / 2.0) * special.gamma(d / 2.0 - 1.0)


def limit_integral(F, d: int, xi: float, abs_tol: float = 1e-10) -> float:
    """pi^{-d/2} (d/2) * integral_0^inf s^{d/2-2} e^{-s} F(d xi^2 / 2s) ds.

    F is any nonincreasing tail-limit function; the integrand's s^{d/2-2}
    endpoint singularity (integrable for d >= 3) is removed by the s = u^2
    substitution on [0, 1].
    """
    if d < 3:
        raise ValueError(f"the scaling-limit integral needs d >= 3, got {d}")
    if xi < 0:
        raise ValueError(f"xi must be >= 0, got {xi}")

    arg = lambda s: np.inf if s == 0.0 else d * xi * xi / (2.0 * s)

    def integrand(s):
        return s ** (d / 2.0 - 2.0) * np.exp(-s) * float(F(arg(s)))

    def integrand_sub(u):
        # s = u^2 on [0, 1]; ds = 2u du
        s = u * u
        return 2.0 * u ** (d - 3.0) * np.exp(-s) * float(F(arg(s)))

    # a jump of F (finite-domain constant limits) lands at a known s
    breaks = []
    t_max = getattr(F, "t_max", np.inf)
    if np.isfinite(t_max) and t_max > 0 and xi > 0:
        breaks.append(d * xi * xi / (2.0 * t_max))

    val = err = 0.0
    pieces_low = sorted([b for b in breaks if b < 1.0])
    lo = 0.0
    for b in pieces_low + [1.0]:
        v, e = integrate.quad(integrand_sub, np.sqrt(lo), np.sqrt(b), epsabs=abs_tol / 8, epsrel=1e-12, limit=200)
        val += v
        err += e
        lo = b
    pieces_high = sorted([b for b in breaks if b >= 1.0])
    lo = 1.0
    for b in pieces_high:
        v, e = integrate.quad(integrand, lo, b, epsabs=abs_tol / 8, epsrel=1e-12, limit=200)
        val += v
        err += e
        lo = b
    v, e = integrate.quad(integrand, lo, np.inf, epsabs=abs_tol / 8, epsrel=1e-12, limit=200)
    val += v
    err += e
    if err > abs_tol:
        raise VerificationFailure(
            f"limit_integral quadrature residual {err:.3e} exceeds tolerance {abs_tol:.1e}"
        )
    return float(np.pi ** (-d / 2.0) * (d / 2.0) * val)


def torus_limit_value(F, d: int, xi: float, alpha: float = 1.0, abs_tol: float = 1e-10) -> float:
    """Rescaled torus two-point limit: scaling-limit integral + alpha xi^{d-2}.

    alpha is the plateau amplitude (mean walk length = alpha L^{d/2}
    convention); alpha = 0 recovers the infinite-lattice value.
    """
    return limit_integral(F, d, xi, abs_tol=abs_tol) + alpha * xi ** (d - 2.0)


# ---------------------------------------------------------------------------
# Theta sums


def theta_sum(a: float, d: int) -> tuple[float, float]:
    """sum_{z in Z^d, z != 0} exp(-a |z|^2), with a truncation bound.

    Returns (value, bound); the per-axis sum truncates once terms drop
    below 1e-16 relative and the discarded tail is bounded analytically.
    """
    if not a > 0:
        raise ValueError(f"theta sum needs a > 0, got {a}")
    zmax = int(np.ceil(np.sqrt(37.0 / a))) + 1
    k = np.arange(1, zmax + 1)
    one = 1.0 + 2.0 * float(np.sum(np.exp(-a * k * k)))
    # remainder of the one-dimensional sum, geometrically dominated
    r1 = 2.0 * np.exp(-a * (zmax + 1) ** 2) / -np.expm1(-a * (2 * zmax + 3))
    value = one**d - 1.0
    bound = d * (one + r1) ** (d - 1) * r1
    return float(value), float(bound)


# ---------------------------------------------------------------------------
# Bound checkers


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    counterexample: str | None = None

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" [{self.counterexample}]" if self.counterexample else ""
        return f"{status} {self.name}{extra}"


def check_image_norm_sandwich(d_max: int = 3, L_max: int = 8, z_inf_max: int = 3) -> CheckResult:
    """Exhaustive check of (1/2)|z| L <= |x + zL| <= 2d |z| L.

    x runs over the centered torus box, z over nonzero integer offsets with
    |z|_inf <= z_inf_max.
    """
    worst = None
    for d in range(1, d_max + 1):
        rng1 = np.arange(-z_inf_max, z_inf_max + 1)
        zs = np.array(list(itertools.product(rng1, repeat=d)), dtype=np.float64)
        zs = zs[np.any(zs != 0, axis=1)]
        znorm = np.linalg.norm(zs, axis=1)
        for L in range(2, L_max + 1):
            cmin = -((L - 1) // 2)
            xs = np.array(
                list(itertools.product(range(cmin, cmin + L), repeat=d)), dtype=np.float64
            )
            shifted = xs[:, None, :] + zs[None, :, :] * L
            norms = np.linalg.norm(shifted, axis=2)
            lower = 0.5 * znorm[None, :] * L
            upper = 2.0 * d * znorm[None, :] * L
            bad = (norms < lower - 1e-12) | (norms > upper + 1e-12)
            if np.any(bad):
                i, j = np.argwhere(bad)[0]
                worst = f"d={d} L={L} x={xs[i].astype(int).tolist()} z={zs[j].astype(int).tolist()}"
                return CheckResult("image-norm sandwich", False, counterexample=worst)
    return CheckResult(
        "image-norm sandwich",
        True,
        details={"d_max": d_max, "L_max": L_max, "z_inf_max": z_inf_max},
    )


def check_theta_two_sided(a_values=(0.1, 1.0, 10.0), d_values=(1, 2, 3, 4, 5)) -> CheckResult:
    """Two-sided bound on the nonzero-offset theta sum.

    Lower: [sqrt(pi/a) erfc(sqrt(a))]^d - 1; upper: (pi/a)^{d/2}
    (1 + sqrt(a/pi))^d.
    """
    rows = []
    for d in d_values:
        for a in a_values:
            s, bnd = theta_sum(a, d)
            lower = (np.sqrt(np.pi / a) * special.erfc(np.sqrt(a))) ** d - 1.0
            upper = (np.pi / a) ** (d / 2.0) * (1.0 + np.sqrt(a / np.pi)) ** d
            ok = (lower - bnd <= s) and (s <= upper + bnd)
            rows.append((d, a, s, lower, upper, ok))
            if not ok:
                return CheckResult(
                    "theta-sum two-sided bound",
                    False,
                    counterexample=f"d={d} a={a}: {s:.6g} not in [{lower:.6g}, {upper:.6g}]",
                )
    return CheckResult("theta-sum two-sided bound", True, details={"cases": len(rows)})


def check_theta_envelope(d_values=(1, 2, 3, 4, 5), a_grid=None) -> CheckResult:
    """Envelope constants for the theta sum against a^{-d/2} scalings.

    The two constants are existential; this fits the tightest constants on
    a grid of a values and checks they are finite and positive.
    """
    if a_grid is None:
        a_grid = np.geomspace(1e-3, 5.0, 40)
    consts = {}
    for d in d_values:
        uppers, lowers = [], []
        for a in a_grid:
            s, _ = theta_sum(float(a), d)
            uppers.append(s * a ** (d / 2.0))
            # integral_{sqrt(a)}^inf e^{-d s^2} s^{d-1} ds via the upper gamma
            tail = 0.5 * d ** (-d / 2.0) * special.gamma(d / 2.0) * special.gammaincc(d / 2.0, d * a)
            lowers.append(s / (a ** (-d / 2.0) * tail))
        c_up = float(np.max(uppers))
        c_lo = float(np.min(lowers))
        consts[d] = (c_lo, c_up)
        if not (np.isfinite(c_up) and np.isfinite(c_lo) and c_lo > 0 and c_up > 0):
            return CheckResult(
                "theta-sum envelope constants",
                False,
                counterexample=f"d={d}: c_lower={c_lo}, c_upper={c_up}",
            )
    return CheckResult("theta-sum envelope constants", True, details={"constants": consts})


def check_gaussian_step_delta(n_max: int = 1000, y_sq_max: int = 400, d_values=(1, 2, 3, 4, 5)) -> CheckResult:
    """Grid check of the one-step difference bound on the Gaussian kernel."""
    ns = np.arange(1, n_max + 1, dtype=np.float64)
    ysq = np.arange(0, y_sq_max + 1, dtype=np.float64)
    for d in d_values:
        pref = 2.0 * (d / (2.0 * np.pi)) ** (d / 2.0)
        a = pref * ns[:, None] ** (-d / 2.0) * np.exp(-ysq[None, :] * d / (2.0 * ns[:, None]))
        b = pref * (ns[:, None] + 1) ** (-d / 2.0) * np.exp(
            -ysq[None, :] * d / (2.0 * (ns[:, None] + 1))
        )
        bound = gaussian_pn_step_bound(ns, d)[:, None]
        bad = np.abs(a - b) > bound * (1 + 1e-12)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            return CheckResult(
                "gaussian kernel step difference",
                False,
                counterexample=f"d={d} n={int(ns[i])} |y|^2={int(ysq[j])}",
            )
    return CheckResult(
        "gaussian kernel step difference",
        True,
        details={"n_max": n_max, "y_sq_max": y_sq_max, "d_values": list(d_values)},
    )


def local_clt_deviations(d: int = 3, n_lo: int = 10, n_hi: int = 200, xs=None):
    """|p_n(x) - gaussian_pn(n, x)| n^{d/2+1} over a grid, parity-matched.

    Returns (n values, per-n maximum of the scaled deviation).
    """
    if xs is None:
        xs = [np.zeros(d, dtype=int), np.eye(d, dtype=int)[0], np.ones(d, dtype=int)]
    ns = np.arange(n_lo, n_hi + 1)
    out = np.full(len(ns), -np.inf)
    for i, n in enumerate(ns):
        for x in xs:
            l1 = int(np.abs(x).sum())
            if (n + l1) % 2 == 1:
                continue
            dev = abs(srw_pn_exact(int(n), x, d) - gaussian_pn(int(n), x, d))
            out[i] = max(out[i], dev * float(n) ** (d / 2.0 + 1.0))
    keep = np.isfinite(out)
    return ns[keep], out[keep]


def check_local_clt(d: int = 3, n_lo: int = 10, n_hi: int = 200, c_cap: float = 3.0) -> CheckResult:
    """The scaled local-CLT error stays bounded (and stable) on the grid."""
    ns, devs = local_clt_deviations(d, n_lo, n_hi)
    sup = float(devs.max())
    late = devs[ns >= (n_lo + n_hi) // 2]
    stable = float(late.max()) <= sup + 1e-12
    passed = bool(sup <= c_cap and stable)
    return CheckResult(
        "local CLT error bound",
        passed,
        details={"sup_scaled_deviation": sup, "cap": c_cap, "d": d, "n_range": [n_lo, n_hi]},
        counterexample=None if passed else f"sup {sup:.4g} exceeds cap {c_cap}",
    )


# constant used by the far-tail completion of the infinite-lattice evaluator;
# check_local_clt certifies the measured deviation stays below it
LOCAL_CLT_CONSTANT = 3.0


# ---------------------------------------------------------------------------
# Exponent predictions


@dataclass(frozen=True)
class ScalingPrediction:
    mean_len_exponent: float
    chi_exponent: float
    plateau_exponent: float
    collapse_exponent: float


def predict_scaling(regime: str, d: int, lam: float | None = None) -> ScalingPrediction:
    """Predicted exponents for critical or pseudocritical runs.

    regime "critical": mean length and susceptibility scale as L^{d/2};
    regime "pseudocritical" with approach exponent lam: both scale as
    L^{min(lam, d/2)}.  The plateau of the two-point function sits at
    L^{mu - d} and profiles collapse in |x| / L^{(d - mu)/(d - 2)}, with
    mu the effective mean-length exponent.
    """
    if d < 3:
        raise ValueError(f"predictions need d >= 3, got {d}")
    if regime == "critical":
        mu = d / 2.0
    elif regime == "pseudocritical":
        if lam is None or lam <= 0:
            raise ValueError("pseudocritical regime needs lam > 0")
        mu = min(lam, d / 2.0)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return ScalingPrediction(
        mean_len_exponent=mu,
        chi_exponent=mu,
        plateau_exponent=mu - d,
        collapse_exponent=(d - mu) / (d - 2.0),
    )


def bounds_report(quick: bool = True) -> list[CheckResult]:
    """Run the full checker suite; quick mode trims the grids."""
    if quick:
        return [
            check_image_norm_sandwich(d_max=2, L_max=6, z_inf_max=2),
            check_theta_two_sided(a_values=(0.1, 1.0, 10.0), d_values=(1, 2, 3)),
            check_theta_envelope(d_values=(1, 3)),
            check_gaussian_step_delta(n_max=200, y_sq_max=100, d_values=(1, 3, 5)),
            check_local_clt(n_hi=80),
        ]
    return [
        check_image_norm_sandwich(),
        check_theta_two_sided(),
        check_theta_envelope(),
        check_gaussian_step_delta(),
        check_local_clt(),
    ]
