"""Statistical post-processing: radial profiles, error estimation, fits.

Radial binning groups sites by exact squared distance (loss-free and
reproducible); time-series errors come from logarithmic blocking with the
integrated autocorrelation time estimated by self-consistent windowing;
exponent fits use damped least squares on the three-parameter form
Y = a L^b + c with a log-log initialization and an L_min scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .rlrw import OccupationField


@dataclass
class RadialProfile:
    """Binned two-point function by Euclidean distance from the origin."""

    r: np.ndarray  # bin distance, sqrt of the exact squared norm
    g: np.ndarray
    stderr: np.ndarray
    multiplicity: np.ndarray  # sites per bin
    L: int = 0
    d: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.r)


def radial_bin(field: OccupationField) -> RadialProfile:
    """Average a field over exact |x|^2 classes.

    The hyperoctahedral symmetrization is implicit: a class average is the
    orbit average plus averaging over distinct orbits sharing |x|^2.
    Errors combine per-site standard errors of the contributing sites.
    """
    coords = field.coords_grid().astype(np.int64)
    rsq = np.sum(coords * coords, axis=1)
    values = field.flat()
    errs = field.flat_stderr()
    uniq, inverse = np.unique(rsq, return_inverse=True)
    mult = np.bincount(inverse)
    g = np.bincount(inverse, weights=values) / mult
    # independent per-site errors: stderr of the class mean
    var = np.bincount(inverse, weights=errs**2) / mult**2
    return RadialProfile(
        r=np.sqrt(uniq.astype(np.float64)),
        g=g,
        stderr=np.sqrt(var),
        multiplicity=mult,
        L=field.side,
        d=field.d,
        meta={"law": field.law_desc, "kind": field.kind},
    )


@dataclass
class BlockedStats:
    mean: float
    stderr: float
    tau_int: float
    converged: bool
    n: int
    blocking_sigmas: np.ndarray


def _autocorr_tau(x: np.ndarray, window_factor: float = 6.0) -> float:
    """Integrated autocorrelation time by self-consistent windowing.

    tau(W) = 1/2 + sum_{t<=W} rho(t); picks the smallest W >= window_factor
    * tau(W).  Returns 0.5 for uncorrelated data.
    """
    n = len(x)
    xc = x - x.mean()
    var = float(np.mean(xc * xc))
    if var == 0.0:
        return 0.5
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / np.arange(n, 0, -1)
    rho = acov / acov[0]
    tau = 0.5
    for w in range(1, n // 2):
        tau = 0.5 + float(np.sum(rho[1 : w + 1]))
        if w >= window_factor * tau:
            break
    return max(tau, 1e-3)


def blocked_errors(series, window_factor: float = 6.0, min_blocks: int = 16) -> BlockedStats:
    """Mean, blocking-plateau standard error and autocorrelation time.

    Pair-averages the series level by level; the plateau of the per-level
    naive errors estimates the true error of the mean.  If the estimate is
    still rising when fewer than min_blocks blocks remain, the largest-
    block value is returned with converged=False.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) < 1000:
        raise ValueError("blocked_errors needs a 1-d series of length >= 1000")
    mean = float(x.mean())
    tau = _autocorr_tau(x, window_factor)
    sigmas = []
    dsigmas = []
    level = x
    while len(level) >= min_blocks:
        m = len(level)
        s = float(level.std(ddof=1)) / np.sqrt(m)
        sigmas.append(s)
        dsigmas.append(s / np.sqrt(2.0 * (m - 1)))
        if m % 2 == 1:
            level = level[:-1]
        level = 0.5 * (level[0::2] + level[1::2])
    sigmas = np.array(sigmas)
    dsigmas = np.array(dsigmas)
    converged = False
    stderr = sigmas[-1]
    for k in range(len(sigmas) - 1):
        # plateau: the next level no longer grows beyond its own uncertainty
        if sigmas[k + 1] <= sigmas[k] + dsigmas[k + 1]:
            # a short window past the knee; deeper levels are noise-dominated
            stderr = float(np.max(sigmas[k : k + 3]))
            converged = True
            break
    if sigmas[0] == 0.0:
        stderr, converged = 0.0, True
    return BlockedStats(
        mean=mean,
        stderr=float(stderr),
        tau_int=float(tau),
        converged=converged,
        n=len(x),
        blocking_sigmas=sigmas,
    )


@dataclass
class FitResult:
    a: float
    b: float
    c: float
    err_a: float
    err_b: float
    err_c: float
    chi2_per_dof: float
    n_points: int
    L_min: int
    converged: bool

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "err_a": self.err_a,
            "err_b": self.err_b,
            "err_c": self.err_c,
            "chi2_per_dof": self.chi2_per_dof,
            "n_points": self.n_points,
            "L_min": self.L_min,
            "converged": self.converged,
        }


def power_law_fit(points, L_min: int = 0, fix_c: bool = False) -> FitResult:
    """Weighted least-squares fit of Y = a L^b + c.

    points: iterable of (L, Y, err) with err > 0.  Initialization comes
    from a log-log fit of Y minus its smallest value, with a fallback grid
    over b; parameter errors are the covariance at the optimum.
    """
    pts = np.array([[L, y, e] for (L, y, e) in points if L >= L_min], dtype=np.float64)
    need = 3 if fix_c else 4
    if len(pts) < need:
        raise ValueError(f"need at least {need} points with L >= {L_min}, got {len(pts)}")
    L, Y, E = pts[:, 0], pts[:, 1], pts[:, 2]
    if np.any(E <= 0):
        raise ValueError("all point errors must be positive")

    sign = 1.0 if Y[np.argmax(L)] >= Y[np.argmin(L)] else -1.0
    c0 = 0.0 if fix_c else float(Y.min() if sign > 0 else Y.max()) * 0.9
    with np.errstate(all="ignore"):
        resid = sign * (Y - c0)
        ok = resid > 0
        if ok.sum() >= 2:
            slope, logsa = np.polyfit(np.log(L[ok]), np.log(resid[ok]), 1)
            a0, b0 = sign * float(np.exp(logsa)), float(slope)
        else:
            a0, b0 = sign * max(abs(Y).max(), 1e-12), 1.0

    def residuals(p):
        if fix_c:
            a, b = p
            c = 0.0
        else:
            a, b, c = p
        return (a * L**b + c - Y) / E

    best = None
    starts = [(a0, b0, c0)]
    for b_try in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
        a_try = float(np.sum(Y * L**b_try / E**2) / np.sum(L ** (2 * b_try) / E**2))
        starts.append((a_try, b_try, 0.0))
    for a_s, b_s, c_s in starts:
        p0 = [a_s, b_s] if fix_c else [a_s, b_s, c_s]
        try:
            sol = optimize.least_squares(residuals, p0, method="lm", max_nfev=500 * (len(p0) + 1))
        except Exception:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not np.all(np.isfinite(best.x)):
        raise RuntimeError("power-law fit did not converge from any start")

    dof = max(len(L) - len(best.x), 1)
    chi2 = 2.0 * best.cost
    jac = best.jac
    try:
        cov = np.linalg.inv(jac.T @ jac)
        errs = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        errs = np.full(len(best.x), np.nan)
    if fix_c:
        a, b = best.x
        c, ec = 0.0, 0.0
        ea, eb = errs
    else:
        a, b, c = best.x
        ea, eb, ec = errs
    return FitResult(
        a=float(a),
        b=float(b),
        c=float(c),
        err_a=float(ea),
        err_b=float(eb),
        err_c=float(ec),
        chi2_per_dof=float(chi2 / dof),
        n_points=len(L),
        L_min=int(L.min()),
        converged=bool(best.success),
    )


def scan_power_law_fit(points, chi2_threshold: float = 1.5, fix_c: bool = False):
    """Repeat the fit dropping small systems until chi2/dof <= threshold.

    Returns (FitResult, L_min used); if no cut reaches the threshold the
    best-chi2 fit is returned with its own L_min.
    """
    Ls = sorted({p[0] for p in points})
    best = None
    for lmin in Ls:
        remaining = [p for p in points if p[0] >= lmin]
        if len(remaining) < (3 if fix_c else 4):
            break
        fit = power_law_fit(points, L_min=lmin, fix_c=fix_c)
        if fit.chi2_per_dof <= chi2_threshold:
            return fit, int(lmin)
        if best is None or fit.chi2_per_dof < best[0].chi2_per_dof:
            best = (fit, int(lmin))
    if best is None:
        raise ValueError("not enough points for any fit window")
    return best


@dataclass
class CollapseSeries:
    """One system size's profile in collapse variables."""

    L: int
    y: np.ndarray  # |x| / L^kappa
    Y: np.ndarray  # |x|^{d-2} g
    err: np.ndarray


def collapse(profiles, d: int, mu: float, r_min: float = 0.0) -> list[CollapseSeries]:
    """Transform per-L radial profiles to collapse coordinates.

    The collapse exponent is kappa = (d - mu) / (d - 2); bins with r <
    max(r_min, 1) are dropped (the origin bin carries no scaling
    information and the first shells are dominated by lattice artifacts).
    """
    if d < 3:
        raise ValueError("collapse needs d >= 3")
    if not 0 < mu < d:
        raise ValueError(f"mean-length exponent must lie in (0, d), got {mu}")
    kappa = (d - mu) / (d - 2.0)
    out = []
    for prof in profiles:
        keep = prof.r >= max(r_min, 1.0)
        r = prof.r[keep]
        out.append(
            CollapseSeries(
                L=prof.L,
                y=r / prof.L**kappa,
                Y=r ** (d - 2.0) * prof.g[keep],
                err=r ** (d - 2.0) * prof.stderr[keep],
            )
        )
    return out


@dataclass
class CollapseQuality:
    rmsd: float  # root mean squared difference of overlapping points
    err: float  # propagated error on the same points
    n_overlap: int

    @property
    def ratio(self) -> float:
        return self.rmsd / self.err if self.err > 0 else np.inf


def collapse_metric(series_a: CollapseSeries, series_b: CollapseSeries) -> CollapseQuality:
    """Interpolated mismatch of two collapse series over their overlap.

    Series b is linearly interpolated (in log-log coordinates) onto the a
    points inside the overlapping y range and vice versa; the mismatch is
    quoted together with the propagated statistical error so callers can
    compare like with like.
    """
    sq_sum, err_sum, count = 0.0, 0.0, 0
    for s1, s2 in ((series_a, series_b), (series_b, series_a)):
        lo = max(s1.y.min(), s2.y.min())
        hi = min(s1.y.max(), s2.y.max())
        mask = (s1.y >= lo) & (s1.y <= hi) & (s1.Y > 0)
        pos = s2.Y > 0
        if mask.sum() == 0 or pos.sum() < 2:
            continue
        ly = np.log(s2.y[pos])
        interp = np.exp(np.interp(np.log(s1.y[mask]), ly, np.log(s2.Y[pos])))
        ierr = np.interp(np.log(s1.y[mask]), ly, s2.err[pos])
        sq_sum += float(np.sum((s1.Y[mask] - interp) ** 2))
        err_sum += float(np.sum(s1.err[mask] ** 2 + ierr**2))
        count += int(mask.sum())
    if count == 0:
        return CollapseQuality(rmsd=np.nan, err=np.nan, n_overlap=0)
    return CollapseQuality(
        rmsd=float(np.sqrt(sq_sum / count)), err=float(np.sqrt(err_sum / count)), n_overlap=count
    )


def fit_reference_shape(series_list, d: int):
    """Fit the collapsed data to flat + power: Y(y) = A + B y^{d-2}.

    Returns (A, B) from a weighted linear least-squares over all series.
    """
    ys = np.concatenate([s.y for s in series_list])
    Ys = np.concatenate([s.Y for s in series_list])
    Es = np.concatenate([np.maximum(s.err, 1e-12) for s in series_list])
    X = np.stack([np.ones_like(ys), ys ** (d - 2.0)], axis=1)
    w = 1.0 / Es
    coef, *_ = np.linalg.lstsq(X * w[:, None], Ys * w, rcond=None)
    return float(coef[0]), float(coef[1])
