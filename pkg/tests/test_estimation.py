import dataclasses
import math

import numpy as np
import pytest
from scipy.optimize import least_squares

from twistnoon.errors import DomainError, FitError
from twistnoon.estimation import (
    FringeFit, angular_uncertainty, angular_uncertainty_arrays, crb_check,
    detection_probability, fisher_information, fit_fringe, fit_fringe_arrays, fit_hom_dip,
    fit_period, scaling_report, sensitivity_table, theory_sensitivity,
)
from twistnoon.experiment_sim import (
    LossModel, ScanConfig, ScanDataset, SourceModel, hom_scan, simulate_scan,
)

from oracles import central_difference

K = math.pi / 180
IDEAL = LossModel(coincidence_window_ns=0.0)


def fringe(phi_deg, A, c, D, n, ell):
    return A / 2 * (1 - np.cos(2 * n * ell * np.deg2rad(phi_deg) - c)) + D


def poisson_exact(angles, mu, reps=26):
    """Repetitions at mu +/- s with sample variance exactly mu."""
    mu = np.asarray(mu, float)
    s = np.sqrt(mu * (reps - 1) / reps)
    signs = np.where(np.arange(reps) % 2 == 0, 1.0, -1.0)
    return ScanDataset(angles, mu[:, None] + s[:, None] * signs[None, :], 0.0, False)


def u_grid_angles(n, ell, points=41, periods=2.0):
    return np.rad2deg(np.linspace(0, 2 * math.pi * periods, points) / (2 * n * ell))


def test_noiseless_recovery():
    ang = np.linspace(0, 180, 41)
    y = fringe(ang, 100, 0.3, 2, 1, 1)
    fit = fit_fringe_arrays(ang, y, np.zeros_like(y), 25, 1, 1)
    assert fit.A == pytest.approx(100, rel=1e-6)
    assert fit.c == pytest.approx(0.3, rel=1e-6)
    assert fit.D == pytest.approx(2, rel=1e-6)
    assert fit.visibility == pytest.approx(100 / 104, rel=1e-6)


def test_ideal_n2_ell10_visibility():
    cfg = ScanConfig(n_photons=2, ell=10, integration_time_s=1.0, repetitions=25)
    ds = simulate_scan(cfg, np.linspace(0, 18, 41), IDEAL, SourceModel(pair_rate=4e4), seed=1)
    fit = fit_fringe(ds, 2, 10)
    assert fit.A + fit.D == pytest.approx(1e4, rel=0.01)
    assert fit.visibility + 3 * fit.visibility_se >= 0.997
    assert 0 < fit.visibility <= 1


def test_matches_scipy_least_squares():
    rng = np.random.default_rng(4)
    ang = np.linspace(0, 90, 30)
    truth = fringe(ang, 800, -1.0, 30, 2, 1)
    counts = rng.poisson(truth, size=(25, ang.size)).T
    ds = ScanDataset(ang, counts, 0.0, False)
    fit = fit_fringe(ds, 2, 1)
    sigma = np.sqrt(np.maximum(ds.variance, np.maximum(1, ds.mean)) / 25)
    ref = least_squares(lambda p: (fringe(ang, *p, 2, 1) - ds.mean) / sigma, [700, -0.8, 20],
                        bounds=([0, -np.inf, 0], np.inf), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    np.testing.assert_allclose([fit.A, fit.c, fit.D], ref.x, rtol=1e-7)


def test_gradient_optimality():
    rng = np.random.default_rng(8)
    for n, ell in [(1, 1), (2, 5), (1, 100)]:
        ang = u_grid_angles(n, ell)
        counts = rng.poisson(fringe(ang, 500, 0.7, 10, n, ell), size=(25, ang.size)).T
        fit = fit_fringe(ScanDataset(ang, counts, 0.0, False), n, ell)
        assert fit.gradient_ratio < 1e-8


def test_pull_calibration():
    rng = np.random.default_rng(2024)
    ang = np.linspace(0, 180, 24, endpoint=False)
    truth = np.array([1000.0, 0.3, 20.0])
    mu = fringe(ang, *truth, 1, 1)
    pulls = []
    for _ in range(500):
        counts = rng.poisson(mu, size=(25, ang.size)).T
        ds = ScanDataset(ang, counts, 0.0, False)
        fit = fit_fringe(ds, 1, 1, check_period=False)
        est = np.array([fit.A, fit.c, fit.D])
        pulls.append((truth - est) / fit.se)
    mean_abs = np.mean(np.abs(pulls), axis=0)
    assert np.all(np.abs(mean_abs - math.sqrt(2 / math.pi)) < 3 / math.sqrt(500))


def test_degree_radian_bit_identity():
    rng = np.random.default_rng(3)
    ang = np.linspace(0, 3.6, 37)
    counts = rng.poisson(fringe(ang, 300, 1.1, 4, 1, 100), size=(25, ang.size)).T
    ds = ScanDataset(ang, counts, 0.0, False)
    fd = fit_fringe_arrays(ang, ds.mean, ds.variance, 25, 1, 100, unit="deg")
    fr = fit_fringe_arrays(np.deg2rad(ang), ds.mean, ds.variance, 25, 1, 100, unit="rad")
    assert fd.visibility == fr.visibility
    assert (fd.A, fd.c, fd.D) == (fr.A, fr.c, fr.D)
    ud = angular_uncertainty_arrays(ang, ds.std, fd, "deg")
    ur = angular_uncertainty_arrays(np.deg2rad(ang), ds.std, fr, "rad")
    np.testing.assert_array_equal(ud.delta_phi_deg, ur.delta_phi_deg)


def test_coverage_and_aliasing_errors():
    ang = np.linspace(0, 90, 7)
    with pytest.raises(DomainError):
        fit_fringe_arrays(ang, np.ones(7), np.ones(7), 25, 1, 1)
    with pytest.raises(DomainError):
        fit_fringe_arrays(np.linspace(0, 60, 10), np.ones(10), np.ones(10), 25, 1, 1)
    # N=2 fringe analysed with an N=1 prior: period off by 50%
    ang = np.linspace(0, 180, 61)
    y = fringe(ang, 1000, 0.0, 10, 2, 1)
    with pytest.raises(FitError, match="period"):
        fit_fringe_arrays(ang, y, y, 25, 1, 1)


@pytest.mark.parametrize("n, ell", [(1, 1), (2, 1), (1, 10), (2, 10), (1, 100), (2, 100)])
def test_fitted_period(n, ell):
    cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=0.2, repetitions=25)
    ds = simulate_scan(cfg, u_grid_angles(n, ell, 61, 3), IDEAL, SourceModel(), seed=n * 1000 + ell)
    pf = fit_period(ds, n, ell)
    assert pf.period_deg == pytest.approx(180 / (n * ell), rel=0.01)


# -- Fisher -------------------------------------------------------------------

def make_fit(A, c, D, n, ell):
    return FringeFit(A, c, D, np.eye(3), A / (A + 2 * D), 0.0, n, ell, 0.0, 1, 0.0, 0)


def test_fisher_derivative_matches_finite_difference():
    fit = make_fit(240.0, 0.4, 20.0, 2, 3)
    eta = 0.3
    phi_deg = np.linspace(0, 30, 301)
    fc = fisher_information(fit, eta, phi_deg)
    h = 1e-6

    def p1(phi_rad):
        return detection_probability(fit, eta, phi_rad)[0]

    phi = np.deg2rad(phi_deg)
    dp1 = central_difference(p1, phi, h)
    np.testing.assert_allclose(fc.dP1, dp1, rtol=1e-6, atol=1e-6 * np.max(np.abs(dp1)))
    F_fd = dp1 ** 2 / p1(phi) + dp1 ** 2 / (1 - p1(phi))
    ok = ~fc.flagged
    np.testing.assert_allclose(fc.F[ok], F_fd[ok], rtol=1e-6, atol=1e-6 * np.nanmax(fc.F))


def test_fisher_ideal_constant():
    fit = make_fit(500.0, 0.0, 0.0, 2, 5)
    fc = fisher_information(fit, 1.0, np.linspace(0.3, 8.7, 50))
    ok = ~fc.flagged
    np.testing.assert_allclose(fc.F[ok], (2 * 2 * 5) ** 2, rtol=1e-9)
    np.testing.assert_allclose(fc.F_per_deg2[ok], (2 * 2 * 5 * K) ** 2, rtol=1e-9)
    # the dark fringe itself is singular and flagged
    assert fisher_information(fit, 1.0, [0.0, 9.0]).flagged.all()


def test_mt_from_paper_efficiency():
    fit = make_fit(200.0, 0.0, 60.0, 1, 1)
    fc = fisher_information(fit, LossModel.paper_single_photon(), [10.0])
    assert fc.M_T == pytest.approx(18018.0, abs=0.5)
    assert fc.eta == pytest.approx(0.026 * 0.75 * 0.74)


def test_fisher_nonnegative_random():
    rng = np.random.default_rng(12)
    for _ in range(10_000):
        fit = make_fit(rng.uniform(1, 1e4), rng.uniform(-4, 4), rng.uniform(0, 1e3),
                       int(rng.integers(1, 3)), int(rng.integers(1, 101)))
        F = fisher_information(fit, rng.uniform(1e-4, 1), rng.uniform(0, 180, 3)).F
        assert np.all(F[np.isfinite(F)] >= 0)


def test_fisher_rejects_bad_eta():
    with pytest.raises(DomainError):
        fisher_information(make_fit(1, 0, 0, 1, 1), 1.5, [1.0])


# -- angular uncertainty ------------------------------------------------------

def test_delta_phi_matches_poisson_curve():
    n, ell, A, c, D = 1, 2, 2000.0, 0.2, 40.0
    ang = u_grid_angles(n, ell, 49)
    ds = poisson_exact(ang, fringe(ang, A, c, D, n, ell))
    fit = fit_fringe(ds, n, ell)
    unc = angular_uncertainty(ds, fit)
    u = 2 * n * ell * np.deg2rad(ang) - c
    analytic = np.sqrt(fringe(ang, A, c, D, n, ell)) / (A * n * ell * K * np.abs(np.sin(u)))
    half = np.argmin(np.abs(np.cos(u)))
    assert unc.delta_phi_deg[half] == pytest.approx(analytic[half], rel=0.10)
    ok = unc.usable
    np.testing.assert_allclose(unc.delta_phi_deg[ok], analytic[ok], rtol=1e-3)


def test_delta_phi_monte_carlo():
    n, ell = 2, 1
    ang = u_grid_angles(n, ell, 41)
    cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=0.05, repetitions=25)
    ds = simulate_scan(cfg, ang, IDEAL, SourceModel(), seed=77)
    fit = fit_fringe(ds, n, ell)
    unc = angular_uncertainty(ds, fit)
    poisson = np.sqrt(fit.model(ang)) / (fit.A * n * ell * K * unc.abs_sin)
    mid = unc.usable & (np.abs(np.cos(fit.phase(np.deg2rad(ang)))) < 0.5)
    assert np.median(unc.delta_phi_deg[mid] / poisson[mid]) == pytest.approx(1.0, rel=0.10)


def test_doubling_ell_halves_delta_phi():
    out = []
    for ell in (5, 10):
        ang = u_grid_angles(1, ell, 33)
        ds = poisson_exact(ang, fringe(ang, 900, 0.5, 25, 1, ell))
        unc = angular_uncertainty(ds, fit_fringe(ds, 1, ell))
        out.append(unc.delta_phi_deg)
    ok = np.isfinite(out[0]) & np.isfinite(out[1])
    np.testing.assert_allclose(out[1][ok] / out[0][ok], 0.5, rtol=1e-6)


def test_extremum_flagged():
    ang = np.linspace(0, 180, 37)  # includes the dark and bright fringes exactly
    ds = poisson_exact(ang, fringe(ang, 400, 0.0, 10, 1, 1))
    unc = angular_uncertainty(ds, fit_fringe(ds, 1, 1))
    for a in (0.0, 90.0, 180.0):
        i = int(np.argmin(np.abs(ang - a)))
        assert not unc.usable[i] and np.isnan(unc.delta_phi_deg[i])


# -- Cramer-Rao ---------------------------------------------------------------

def crb_run(x=1.0, seed=5, reps=1000):
    n, ell = 2, 1
    loss = LossModel.paper_two_photon(coincidence_window_ns=0.0)
    cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=50.0, repetitions=reps)
    ang = u_grid_angles(n, ell, 41)
    ds = simulate_scan(cfg, ang, loss, SourceModel(indistinguishability=x), seed=seed)
    fit = fit_fringe(ds, n, ell)
    return ds, fit, loss


def test_crb_attained_on_ideal_data():
    ds, fit, loss = crb_run()
    fc = fisher_information(fit, loss, ds.angles_deg)
    rep = crb_check(fc, angular_uncertainty(ds, fit), fit)
    assert 0.8 <= rep.median_midpoint <= 1.05
    assert rep.fraction_within > 0.9
    assert np.all(np.isnan(rep.ratio[~angular_uncertainty(ds, fit).usable]))


def test_crb_binomial_limit_unit_ratio():
    cfg = ScanConfig(n_photons=1, ell=3, integration_time_s=1.0, repetitions=1000, statistics="binomial")
    ang = u_grid_angles(1, 3, 41)
    ds = simulate_scan(cfg, ang, IDEAL, SourceModel(pair_rate=2000), seed=3)
    fit = fit_fringe(ds, 1, 3)
    rep = crb_check(fisher_information(fit, 1.0, ang), angular_uncertainty(ds, fit), fit)
    assert rep.median_midpoint == pytest.approx(1.0, abs=0.05)


def test_crb_reduced_visibility_below_ideal_bound():
    ds, fit, loss = crb_run(x=0.9, seed=6)
    ideal = dataclasses.replace(fit, A=fit.A + fit.D, D=0.0)
    rep = crb_check(fisher_information(ideal, loss, ds.angles_deg), angular_uncertainty(ds, fit), fit)
    assert rep.median_midpoint < 0.95


def test_crb_empty_overlap():
    fit = make_fit(100, 0, 1, 1, 1)
    ang = np.linspace(0, 180, 10)
    ds = poisson_exact(ang, fringe(ang, 100, 0, 1, 1, 1))
    with pytest.raises(DomainError):
        crb_check(fisher_information(fit, 0.5, ang + 0.5), angular_uncertainty(ds, fit))


# -- sensitivity --------------------------------------------------------------

def ideal_runs(ells, ns=(1, 2), reps=400, seed=0):
    runs = []
    for n in ns:
        for ell in ells:
            cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=0.1, repetitions=reps)
            ang = u_grid_angles(n, ell, 41)
            ds = simulate_scan(cfg, ang, IDEAL, SourceModel(), seed=seed + 100 * n + ell)
            runs.append((ds, fit_fringe(ds, n, ell)))
    return runs


def test_sensitivity_scaling():
    table = sensitivity_table(ideal_runs([1, 2, 3, 5, 10, 25, 50, 100]))
    rep = scaling_report(table)
    for n in (1, 2):
        assert rep.slopes[n] == pytest.approx(1.0, abs=0.05)
    assert rep.mean_ratio == pytest.approx(2.0, abs=0.1)
    assert len(table.points) == 16 * 4


def test_sensitivity_normalization_count_invariant():
    n, ell = 1, 4
    ang = u_grid_angles(n, ell, 41)
    sens = []
    for scale in (1, 4):
        ds = poisson_exact(ang, scale * fringe(ang, 500, 0.1, 5, n, ell))
        sens.append(sensitivity_table([(ds, fit_fringe(ds, n, ell))]).run_sensitivity()[(n, ell)])
    assert sens[1] == pytest.approx(sens[0], rel=0.01)


def test_sensitivity_warns_on_few_points():
    ang = np.linspace(0, 180, 8, endpoint=False)
    ds = poisson_exact(ang, fringe(ang, 100, 0, 5, 1, 1))
    fit = fit_fringe(ds, 1, 1)
    # zero out the spread at most angles so they become unusable
    raw = np.array(ds.raw_counts)
    raw[2:] = raw[2:].mean(axis=1, keepdims=True)
    ds2 = ScanDataset(ang, raw, 0.0, False)
    with pytest.warns(UserWarning):
        table = sensitivity_table([(ds2, fit)])
    assert table.warnings and len(table.points) < 4


def test_theory_curve():
    assert theory_sensitivity(1, 1, visibility=1 - 1e-12) == pytest.approx(2 * K, rel=1e-3)
    s1, s2 = theory_sensitivity(1, 10), theory_sensitivity(2, 10)
    assert s2 / s1 == pytest.approx(2.0, rel=1e-12)
    assert 0.95 * 20 * K < s1 < 20 * K


# -- HOM ----------------------------------------------------------------------

def test_hom_dip_fit():
    src = SourceModel()
    delays = np.linspace(-800, 800, 41)
    ds = hom_scan(delays, src, IDEAL, integration_time_s=1.0, repetitions=25, seed=4)
    dip = fit_hom_dip(ds)
    assert dip.visibility >= 0.99
    assert abs(dip.center_fs) < 5
    assert dip.sigma_fs == pytest.approx(src.coherence_sigma_fs, rel=0.02)
    assert int(np.argmin(dip.model(delays))) == 20


def test_hom_dip_partial_indistinguishability():
    # a constant x < 1 scales the dip depth
    delays = np.linspace(-800, 800, 41)
    ds = hom_scan(delays, SourceModel(), IDEAL, repetitions=25, seed=4)
    raw = ds.raw_counts.astype(float)
    base = raw[[0, -1]].mean()
    mixed = 0.976 * raw + 0.024 * base
    dip = fit_hom_dip(ScanDataset(delays, mixed, 0.0, False))
    assert dip.visibility == pytest.approx(0.976, abs=0.01)
