import numpy as np
import pytest

from torwalk.fss import (
    CollapseSeries,
    RadialProfile,
    blocked_errors,
    collapse,
    collapse_metric,
    fit_reference_shape,
    power_law_fit,
    radial_bin,
    scan_power_law_fit,
)
from torwalk.lattice import TorusGeometry
from torwalk.lengths import Deterministic
from torwalk.rlrw import OccupationField, exact_two_point


def make_field(d, L, data, stderr=None):
    g = TorusGeometry(d, L)
    return OccupationField(
        kind="torus",
        d=d,
        side=L,
        cmin=g.cmin,
        data=data,
        law_desc="synthetic",
        stderr=stderr,
        n_samples=None if stderr is None else 1,
    )


def test_radial_bin_delta_field():
    f = exact_two_point(TorusGeometry(2, 5), Deterministic(0))
    prof = radial_bin(f)
    assert prof.r[0] == 0.0 and prof.g[0] == 1.0
    assert np.all(prof.g[1:] == 0.0)


def test_radial_bin_constant_field():
    d, L = 2, 4
    f = make_field(d, L, np.full((L, L), 0.37))
    prof = radial_bin(f)
    np.testing.assert_allclose(prof.g, 0.37)


def test_radial_bin_distance_classes_d2_L4():
    # coordinates in {-1,0,1,2}: squared norms {0,1,2,4,5,8}
    f = make_field(2, 4, np.zeros((2, 4, 4))[0])
    prof = radial_bin(f)
    np.testing.assert_allclose(prof.r**2, [0, 1, 2, 4, 5, 8], atol=1e-12)
    assert prof.multiplicity.sum() == 16


def test_radial_bin_preserves_total():
    rng = np.random.default_rng(3)
    data = rng.random((5, 5, 5))
    f = make_field(3, 5, data)
    prof = radial_bin(f)
    assert np.sum(prof.g * prof.multiplicity) == pytest.approx(data.sum(), rel=1e-13)


def test_blocked_errors_iid():
    rng = np.random.default_rng(11)
    n = 2**16
    stats = blocked_errors(rng.normal(size=n))
    assert stats.converged
    assert abs(stats.tau_int - 0.5) < 0.1
    assert stats.stderr == pytest.approx(1.0 / np.sqrt(n), rel=0.12)


def test_blocked_errors_ar1():
    rng = np.random.default_rng(17)
    rho, n = 0.9, 2**18
    eps = rng.normal(size=n)
    x = np.empty(n)
    x[0] = eps[0]
    for t in range(1, n):
        x[t] = rho * x[t - 1] + np.sqrt(1 - rho**2) * eps[t]
    stats = blocked_errors(x)
    tau_true = (1 + rho) / (2 * (1 - rho))  # 9.5
    assert abs(stats.tau_int - tau_true) / tau_true < 0.15
    # blocking stderr should agree with the tau-based error within ~20%
    expected = np.sqrt(2 * tau_true / n)
    assert stats.stderr == pytest.approx(expected, rel=0.25)
    assert stats.converged


def test_blocked_errors_constant_series():
    stats = blocked_errors(np.full(5000, 3.2))
    assert stats.stderr <= 1e-12 and stats.mean == pytest.approx(3.2, rel=1e-15)


def test_blocked_errors_validation():
    with pytest.raises(ValueError):
        blocked_errors(np.ones(10))


def test_power_law_fit_noiseless():
    Ls = np.array([8, 12, 16, 24, 32, 48], dtype=float)
    Y = 2.0 * Ls**2.5 + 3.0
    fit = power_law_fit([(L, y, 1e-6) for L, y in zip(Ls, Y)])
    assert fit.a == pytest.approx(2.0, abs=1e-6)
    assert fit.b == pytest.approx(2.5, abs=1e-6)
    assert fit.c == pytest.approx(3.0, abs=1e-4)
    assert fit.converged


def test_power_law_fit_scale_equivariance():
    Ls = np.array([6, 8, 12, 16, 24], dtype=float)
    rng = np.random.default_rng(5)
    Y = 1.7 * Ls**1.8 + 0.4 + rng.normal(0, 0.01, len(Ls))
    pts = [(L, y, 0.01) for L, y in zip(Ls, Y)]
    f1 = power_law_fit(pts)
    s = 10.0
    f2 = power_law_fit([(L, s * y, s * 0.01) for L, y in zip(Ls, Y)])
    assert f2.a == pytest.approx(s * f1.a, rel=1e-7)
    assert f2.b == pytest.approx(f1.b, abs=1e-9)
    assert f2.c == pytest.approx(s * f1.c, rel=1e-6, abs=1e-9)


def test_power_law_fit_fixed_c_matches_loglog():
    Ls = np.array([4, 8, 16, 32], dtype=float)
    Y = 0.7 * Ls**2.2
    fit = power_law_fit([(L, y, 1e-9) for L, y in zip(Ls, Y)], fix_c=True)
    slope, loga = np.polyfit(np.log(Ls), np.log(Y), 1)
    assert fit.b == pytest.approx(slope, abs=1e-9)
    assert fit.a == pytest.approx(np.exp(loga), rel=1e-9)
    assert fit.c == 0.0


def test_power_law_fit_coverage():
    # 100 synthetic repeats at 1% noise: the 3-sigma interval on b should
    # cover the truth in at least 99 of them
    rng = np.random.default_rng(42)
    Ls = np.array([8, 12, 16, 24, 32, 48, 64], dtype=float)
    truth = 2.5
    hits = 0
    for _ in range(100):
        Y = 2.0 * Ls**truth + 3.0
        noisy = Y + rng.normal(0, 0.01 * Y)
        fit = power_law_fit([(L, y, 0.01 * yt) for L, y, yt in zip(Ls, noisy, Y)])
        if abs(fit.b - truth) <= 3.0 * fit.err_b:
            hits += 1
    assert hits >= 99


def test_power_law_fit_validation():
    with pytest.raises(ValueError, match="at least"):
        power_law_fit([(8, 1.0, 0.1), (16, 2.0, 0.1)])
    with pytest.raises(ValueError, match="positive"):
        power_law_fit([(8, 1.0, 0.0), (12, 1.5, 0.1), (16, 2.0, 0.1), (24, 3.0, 0.1)])


def test_scan_power_law_fit():
    # a strong small-L correction forces the scan to drop the first size
    Ls = np.array([4, 8, 12, 16, 24, 32], dtype=float)
    Y = 2.0 * Ls**2.0 + 3.0
    Y[0] *= 1.5
    pts = [(L, y, 0.01 * y) for L, y in zip(Ls, Y)]
    fit, lmin = scan_power_law_fit(pts)
    assert lmin == 8
    assert fit.chi2_per_dof <= 1.5
    assert fit.b == pytest.approx(2.0, abs=0.02)


def synthetic_profile(d, L, mu, a0=0.1, b0=2.0, noise=0.0, rng=None):
    kappa = (d - mu) / (d - 2.0)
    r = np.arange(1.0, np.floor(L / 2.0) * np.sqrt(d) + 1.0)
    y = r / L**kappa
    g = r ** (2.0 - d) * (a0 + b0 * y**3)
    err = np.maximum(1e-3 * g, 1e-15)
    if rng is not None and noise > 0:
        g = g + rng.normal(0, noise * g)
        err = noise * g
    return RadialProfile(
        r=r, g=g, stderr=err, multiplicity=np.ones_like(r, dtype=int), L=L, d=d
    )


def test_collapse_identical_profiles_metric_zero():
    prof = synthetic_profile(5, 16, 2.5)
    series = collapse([prof, prof], 5, 2.5)
    q = collapse_metric(series[0], series[1])
    assert q.rmsd <= 1e-12


def test_collapse_synthetic_reference_shape():
    d, mu = 5, 2.5
    profs = [synthetic_profile(d, L, mu) for L in (16, 32)]
    series = collapse(profs, d, mu, r_min=2.0)
    q = collapse_metric(series[0], series[1])
    # exact transform of the exact ansatz: only interpolation error remains
    assert q.rmsd <= 2.0 * q.err
    A, B = fit_reference_shape(series, d)
    assert A == pytest.approx(0.1, rel=0.05)
    assert B == pytest.approx(2.0, rel=0.05)
    assert B / A > 0


def test_collapse_wrong_exponent_fails():
    d = 5
    profs = [synthetic_profile(d, L, 2.5) for L in (16, 32)]
    good = collapse(profs, d, 2.5, r_min=2.0)
    bad = collapse(profs, d, 2.0, r_min=2.0)
    q_good = collapse_metric(good[0], good[1])
    q_bad = collapse_metric(bad[0], bad[1])
    assert q_bad.ratio > 5.0
    assert q_bad.rmsd > 10 * q_good.rmsd


def test_collapse_validation():
    prof = synthetic_profile(5, 16, 2.5)
    with pytest.raises(ValueError):
        collapse([prof], 2, 1.0)
    with pytest.raises(ValueError):
        collapse([prof], 5, 6.0)


def test_collapse_no_overlap_reported():
    a = CollapseSeries(L=8, y=np.array([0.1, 0.2]), Y=np.array([1.0, 2.0]), err=np.array([0.1, 0.1]))
    b = CollapseSeries(L=16, y=np.array([5.0, 6.0]), Y=np.array([1.0, 2.0]), err=np.array([0.1, 0.1]))
    q = collapse_metric(a, b)
    assert q.n_overlap == 0 and np.isnan(q.rmsd)


def test_collapse_transform_invertible():
    d, mu, L = 5, 2.5, 16
    prof = synthetic_profile(d, L, mu)
    (series,) = collapse([prof], d, mu)
    kappa = (d - mu) / (d - 2.0)
    r_back = series.y * L**kappa
    g_back = series.Y * r_back ** (2.0 - d)
    keep = prof.r >= 1.0
    np.testing.assert_allclose(r_back, prof.r[keep], rtol=1e-12)
    np.testing.assert_allclose(g_back, prof.g[keep], rtol=1e-12)
