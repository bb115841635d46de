"""Fringe fitting, Fisher information, angular uncertainty and sensitivity scaling.

The fringe model in radians is::

    y(phi) = A/2 * (1 - cos(2 N ell phi - c)) + D

Angles are degrees at the boundary and radians internally.  Per-angle
weights are the reciprocal of the sample variance of the mean, with the
variance floored at max(1, mean) so that angles where every repetition
agrees cannot get infinite weight.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitError
from .experiment_sim import LossModel, ScanDataset
from .lsq import levenberg_marquardt

SIN_FLOOR = 1e-3
P_EDGE = 1e-12
ALIAS_TOLERANCE = 0.30
THEORY_VISIBILITY = 0.9999
N_C_STARTS = 12


def _floored_variance(mean, variance):
    return np.maximum(variance, np.maximum(1.0, mean))


def _wrap(c: float) -> float:
    return float(math.remainder(c, 2 * math.pi))


@dataclass(frozen=True)
class FringeFit:
    A: float
    c: float
    D: float
    covariance: np.ndarray
    visibility: float
    visibility_se: float
    n_photons: int
    ell: int
    chi2: float
    dof: int
    gradient_ratio: float
    iterations: int

    @property
    def omega(self) -> float:
        """Angular frequency in rad^-1 of rotation angle."""
        return 2.0 * self.n_photons * self.ell

    @property
    def period_deg(self) -> float:
        return 180.0 / (self.n_photons * abs(self.ell))

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def phase(self, phi_rad) -> np.ndarray:
        return self.omega * np.asarray(phi_rad, float) - self.c

    def model_rad(self, phi_rad) -> np.ndarray:
        return self.A / 2 * (1 - np.cos(self.phase(phi_rad))) + self.D

    def model(self, phi_deg) -> np.ndarray:
        return self.model_rad(np.deg2rad(phi_deg))

    def to_json(self) -> dict:
        se = self.se
        return {
            "N": self.n_photons, "ell": self.ell,
            "A": self.A, "c_rad": self.c, "D": self.D,
            "A_se": float(se[0]), "c_se": float(se[1]), "D_se": float(se[2]),
            "covariance": self.covariance.tolist(),
            "visibility": self.visibility, "visibility_se": self.visibility_se,
            "period_deg": self.period_deg, "chi2": self.chi2, "dof": self.dof,
        }


def _fringe_parts(params, phi, omega):
    A, c, D = params
    u = omega * phi - c
    g = (1 - np.cos(u)) / 2
    return A * g + D, g, -A / 2 * np.sin(u)


def _visibility(A, D, cov):
    denom = A + 2 * D
    vis = A / denom
    grad = np.array([2 * D / denom ** 2, 0.0, -2 * A / denom ** 2])
    return vis, math.sqrt(max(float(grad @ cov @ grad), 0.0))


def _check_coverage(phi, omega):
    if phi.size < 8:
        raise DomainError(f"need at least 8 angles, got {phi.size}")
    if np.any(np.diff(phi) <= 0):
        raise DomainError("angles must be strictly increasing")
    period = 2 * math.pi / abs(omega)
    step = float(np.mean(np.diff(phi)))
    if phi[-1] - phi[0] + step < period * (1 - 1e-9):
        raise DomainError("angles must span at least one full fringe period")


def _fit_fixed_period(phi, y, sigma, omega):
    def residual(p):
        return (_fringe_parts(p, phi, omega)[0] - y) / sigma

    def jacobian(p):
        _, g, dc = _fringe_parts(p, phi, omega)
        return np.column_stack([g, dc, np.ones_like(phi)]) / sigma[:, None]

    span = max(float(y.max() - y.min()), 1e-9)
    base = max(float(y.min()), 0.0)
    lower = np.array([1e-12 * span, -np.inf, 0.0])
    best = None
    for scale in (1.0, 0.5, 2.0):
        for c0 in np.linspace(-math.pi, math.pi, N_C_STARTS, endpoint=False):
            res = levenberg_marquardt(residual, jacobian, [span * scale, c0, base], lower)
            if best is None or (res.converged and not best.converged) or \
                    (res.converged == best.converged and res.cost < best.cost):
                best = res
        if best.converged:
            return best
    raise FitError(f"fringe fit did not converge after bounded restarts "
                   f"(best cost {best.cost:.6g})", best_cost=best.cost)


def fit_fringe_arrays(angles, mean, variance, repetitions: int, n_photons: int, ell: int,
                      unit: str = "deg", check_period: bool = True) -> FringeFit:
    """Weighted fixed-period fit to per-angle means.  ``unit`` is "deg" or "rad"."""
    if unit not in ("deg", "rad"):
        raise DomainError(f"unit must be 'deg' or 'rad', got {unit!r}")
    if ell == 0:
        raise DomainError("ell must be non-zero")
    angles = np.asarray(angles, float)
    phi = np.deg2rad(angles) if unit == "deg" else angles
    y = np.asarray(mean, float)
    omega = 2.0 * n_photons * ell
    _check_coverage(phi, omega)
    sigma = np.sqrt(_floored_variance(y, np.asarray(variance, float)) / repetitions)
    if check_period:
        free = _fit_period_rad(phi, y, sigma, omega)
        deviation = abs(free[0] / abs(omega) - 1)
        if deviation > ALIAS_TOLERANCE:
            raise FitError(f"fitted period deviates {100 * deviation:.0f}% from the "
                           f"{math.degrees(math.pi / abs(omega)):.6g} deg prior (aliasing?)",
                           best_cost=free[1])
    res = _fit_fixed_period(phi, y, sigma, omega)
    J = res.jacobian
    cov = np.linalg.pinv(J.T @ J)
    cov = (cov + cov.T) / 2
    A, c, D = res.x
    vis, vis_se = _visibility(A, D, cov)
    return FringeFit(float(A), _wrap(c), float(D), cov, float(vis), vis_se, int(n_photons),
                     int(ell), 2 * res.cost, y.size - 3, res.gradient_ratio, res.iterations)


def fit_fringe(dataset: ScanDataset, n_photons: int, ell: int, check_period: bool = True) -> FringeFit:
    return fit_fringe_arrays(dataset.angles_deg, dataset.mean, dataset.variance,
                             dataset.repetitions, n_photons, ell, "deg", check_period)


# -- free-period fit ----------------------------------------------------------

def _periodogram(phi, y, sigma, omegas):
    w = 1 / sigma
    best = (np.inf, None)
    for om in omegas:
        X = np.column_stack([np.ones_like(phi), np.cos(om * phi), np.sin(om * phi)]) * w[:, None]
        coef, *_ = np.linalg.lstsq(X, y * w, rcond=None)
        chi2 = float(np.sum((X @ coef - y * w) ** 2))
        if chi2 < best[0]:
            best = (chi2, (om, coef))
    return best[1]


def _fit_period_rad(phi, y, sigma, omega0):
    """Returns (omega, cost, covariance) for a fit with the frequency free."""
    omega0 = abs(omega0)
    span = float(phi[-1] - phi[0])
    d_om = math.pi / (4 * span)
    n = int(min(20000, max(50, math.ceil(3.75 * omega0 / d_om))))
    om, coef = _periodogram(phi, y, sigma, np.linspace(0.25 * omega0, 4 * omega0, n))
    amp = math.hypot(coef[1], coef[2])
    # a + b cos + s sin = (a + amp) - 2 amp (1 - cos(om phi - c))/2 with c = atan2(-s, -b)
    c0 = math.atan2(-coef[2], -coef[1])

    def residual(p):
        A, c, D, w = p
        return (A / 2 * (1 - np.cos(w * phi - c)) + D - y) / sigma

    def jacobian(p):
        A, c, D, w = p
        u = w * phi - c
        return np.column_stack([(1 - np.cos(u)) / 2, -A / 2 * np.sin(u), np.ones_like(phi),
                                A / 2 * np.sin(u) * phi]) / sigma[:, None]

    start = [2 * amp, c0, max(coef[0] - amp, 0.0), om]
    res = levenberg_marquardt(residual, jacobian, start, [0.0, -np.inf, 0.0, 1e-12])
    J = res.jacobian
    return float(res.x[3]), res.cost, np.linalg.pinv(J.T @ J), res


@dataclass(frozen=True)
class PeriodFit:
    period_deg: float
    period_se_deg: float
    A: float
    D: float


def fit_period(dataset: ScanDataset, n_photons: int, ell: int) -> PeriodFit:
    """Fit with the fringe period free, seeded by a periodogram over 0.25-4x the prior."""
    phi = dataset.angles_rad
    y = dataset.mean
    sigma = np.sqrt(_floored_variance(y, dataset.variance) / dataset.repetitions)
    om, _, cov, res = _fit_period_rad(phi, y, sigma, 2.0 * n_photons * ell)
    period = 2 * math.pi / om
    period_se = 2 * math.pi / om ** 2 * math.sqrt(max(cov[3, 3], 0.0))
    return PeriodFit(math.degrees(period), math.degrees(period_se), float(res.x[0]), float(res.x[2]))


# -- Fisher information -------------------------------------------------------

@dataclass(frozen=True)
class FisherCurve:
    phi_deg: np.ndarray
    P1: np.ndarray
    dP1: np.ndarray       # per radian
    F: np.ndarray         # rad^-2, nan where flagged
    flagged: np.ndarray
    M_T: float
    eta: float

    @property
    def F_per_deg2(self) -> np.ndarray:
        return self.F * (math.pi / 180) ** 2

    @property
    def bound(self) -> np.ndarray:
        """M_T * F in rad^-2: the largest attainable 1/Var."""
        return self.M_T * self.F


def detection_probability(fit: FringeFit, eta: float, phi_rad):
    """P1 of the two-outcome model and its analytic derivative with respect to phi (rad)."""
    u = fit.phase(phi_rad)
    scale = eta / (fit.A + fit.D)
    p1 = scale * (fit.A / 2 * (1 - np.cos(u)) + fit.D)
    dp1 = scale * fit.A / 2 * np.sin(u) * fit.omega
    return p1, dp1


def fisher_information(fit: FringeFit, loss: LossModel | float, phi_grid_deg,
                       n_photons: int | None = None) -> FisherCurve:
    """F = sum_i (dP_i/dphi)^2 / P_i over detection and non-detection, with M_T = (A+D)/eta."""
    if isinstance(loss, LossModel):
        eta = loss.eta(n_photons or fit.n_photons)
    else:
        eta = float(loss)
    if not 0 < eta <= 1:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    phi_deg = np.asarray(phi_grid_deg, float)
    p1, dp1 = detection_probability(fit, eta, np.deg2rad(phi_deg))
    flagged = (p1 <= P_EDGE) | (p1 >= 1 - P_EDGE)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = dp1 ** 2 / p1 + dp1 ** 2 / (1 - p1)
    F = np.where(flagged, np.nan, F)
    return FisherCurve(phi_deg, p1, dp1, F, flagged, (fit.A + fit.D) / eta, eta)


# -- angular uncertainty ------------------------------------------------------

@dataclass(frozen=True)
class UncertaintyCurve:
    phi_deg: np.ndarray
    delta_m: np.ndarray
    abs_sin: np.ndarray
    delta_phi_deg: np.ndarray   # nan where not usable
    usable: np.ndarray

    @property
    def delta_phi_rad(self) -> np.ndarray:
        return np.deg2rad(self.delta_phi_deg)


def angular_uncertainty_arrays(angles, delta_m, fit: FringeFit, unit: str = "deg") -> UncertaintyCurve:
    """Propagate the per-angle count spread through the fitted fringe slope."""
    angles = np.asarray(angles, float)
    phi = np.deg2rad(angles) if unit == "deg" else angles
    delta_m = np.asarray(delta_m, float)
    s = np.abs(np.sin(fit.phase(phi)))
    usable = (s >= SIN_FLOOR) & (delta_m > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dphi_rad = delta_m / (fit.A * fit.n_photons * abs(fit.ell) * s)
    dphi = np.where(usable, np.rad2deg(dphi_rad), np.nan)
    return UncertaintyCurve(np.rad2deg(phi), delta_m, s, dphi, usable)


def angular_uncertainty(dataset: ScanDataset, fit: FringeFit) -> UncertaintyCurve:
    return angular_uncertainty_arrays(dataset.angles_deg, dataset.std, fit)


# -- Cramer-Rao comparison ----------------------------------------------------

@dataclass(frozen=True)
class CRBReport:
    phi_deg: np.ndarray
    inverse_variance: np.ndarray   # rad^-2
    bound: np.ndarray              # M_T F, rad^-2
    ratio: np.ndarray              # 1 / (Var M_T F), nan where excluded
    midpoint: np.ndarray
    median_midpoint: float
    fraction_within: float
    tolerance: float

    def to_json(self) -> dict:
        return {"median_midpoint_ratio": self.median_midpoint,
                "fraction_within_tolerance": self.fraction_within,
                "tolerance": self.tolerance,
                "n_midpoints": int(np.count_nonzero(self.midpoint & np.isfinite(self.ratio)))}


def crb_check(fisher: FisherCurve, unc: UncertaintyCurve, fit: FringeFit | None = None,
              tolerance: float = 0.1, midpoint_band: float = 0.5) -> CRBReport:
    """Compare measured 1/Var with M_T F on the shared angle grid.

    Midpoints are angles whose fringe phase has |cos u| <= ``midpoint_band``
    (the half-height region of the fringe); ``fit`` defaults to the one the
    Fisher curve was built from and only sets the phase.
    """
    common, fi, ui = np.intersect1d(np.round(fisher.phi_deg, 12), np.round(unc.phi_deg, 12),
                                    return_indices=True)
    if common.size == 0:
        raise DomainError("Fisher and uncertainty grids do not overlap")
    var = unc.delta_phi_rad[ui] ** 2
    bound = fisher.bound[fi]
    ok = unc.usable[ui] & ~fisher.flagged[fi] & np.isfinite(bound) & (bound > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_var = np.where(ok, 1 / var, np.nan)
        ratio = np.where(ok, inv_var / bound, np.nan)
    if fit is not None:
        cos_u = np.abs(np.cos(fit.phase(np.deg2rad(common))))
    else:
        cos_u = np.sqrt(np.clip(1 - unc.abs_sin[ui] ** 2, 0, 1))
    mid = cos_u <= midpoint_band
    sel = ratio[mid & ok]
    median = float(np.median(sel)) if sel.size else float("nan")
    used = ratio[ok]
    frac = float(np.mean(used <= 1 + tolerance)) if used.size else float("nan")
    return CRBReport(common, inv_var, bound, ratio, mid, median, frac, tolerance)


# -- sensitivity --------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityPoint:
    n_photons: int
    ell: int
    phi_at_best: float
    delta_phi: float
    normalized_sensitivity: float

    def __post_init__(self):
        if not self.delta_phi > 0:
            raise DomainError("delta_phi must be positive")


@dataclass
class SensitivityTable:
    points: list[SensitivityPoint] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def run_sensitivity(self) -> dict[tuple[int, int], float]:
        """Mean normalized sensitivity of the best points for each (N, ell)."""
        groups: dict[tuple[int, int], list[float]] = {}
        for p in self.points:
            groups.setdefault((p.n_photons, p.ell), []).append(p.normalized_sensitivity)
        return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def sensitivity_table(runs, n_best: int = 4) -> SensitivityTable:
    """``runs`` is an iterable of (dataset, fit).  Keeps the ``n_best`` smallest Δφ per run,
    each normalized by sqrt(A+D)/A."""
    table = SensitivityTable()
    for dataset, fit in runs:
        unc = angular_uncertainty(dataset, fit)
        idx = np.flatnonzero(unc.usable)
        if idx.size < n_best:
            msg = f"N={fit.n_photons} ell={fit.ell}: only {idx.size} usable points"
            warnings.warn(msg)
            table.warnings.append(msg)
        best = idx[np.argsort(unc.delta_phi_deg[idx], kind="stable")[:n_best]]
        norm = math.sqrt(fit.A + fit.D) / fit.A
        for i in sorted(best):
            dphi = float(unc.delta_phi_deg[i])
            table.points.append(SensitivityPoint(fit.n_photons, fit.ell, float(unc.phi_deg[i]),
                                                 dphi, 1.0 / (dphi / norm)))
    return table


def theory_sensitivity(n_photons: int, ell: int, visibility: float = THEORY_VISIBILITY,
                       n_grid: int = 200_001) -> float:
    """Best normalized sensitivity (1/deg) of a Poisson-limited fringe with the given visibility."""
    d_over_a = (1 - visibility) / (2 * visibility)
    u = np.linspace(1e-9, math.pi, n_grid)
    fit_u = (1 - np.cos(u)) / 2 + d_over_a
    k = math.pi / 180
    sens = n_photons * abs(ell) * k * np.abs(np.sin(u)) * np.sqrt((1 + d_over_a) / fit_u)
    return float(sens.max())


@dataclass(frozen=True)
class ScalingReport:
    slopes: dict[int, float]
    ratios: dict[int, float]

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(list(self.ratios.values()))) if self.ratios else float("nan")

    def to_json(self) -> dict:
        return {"slope_by_N": {str(k): v for k, v in self.slopes.items()},
                "ratio_N2_N1_by_ell": {str(k): v for k, v in self.ratios.items()},
                "mean_ratio": self.mean_ratio}


def scaling_report(table: SensitivityTable) -> ScalingReport:
    """Log-log slope of sensitivity against ell per N, and the N=2/N=1 ratio at shared ell."""
    per_run = table.run_sensitivity()
    slopes = {}
    for n in sorted({k[0] for k in per_run}):
        ells = sorted(ell for (m, ell) in per_run if m == n)
        if len(ells) >= 2:
            x = np.log([abs(e) for e in ells])
            y = np.log([per_run[(n, e)] for e in ells])
            slopes[n] = float(np.polyfit(x, y, 1)[0])
    ratios = {ell: per_run[(2, ell)] / per_run[(1, ell)]
              for (n, ell) in per_run if n == 1 and (2, ell) in per_run}
    return ScalingReport(slopes, dict(sorted(ratios.items())))


# -- HOM dip ------------------------------------------------------------------

@dataclass(frozen=True)
class DipFit:
    baseline: float
    visibility: float
    center_fs: float
    sigma_fs: float
    covariance: np.ndarray
    chi2: float

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def model(self, delay_fs) -> np.ndarray:
        t = np.asarray(delay_fs, float)
        return self.baseline * (1 - self.visibility * np.exp(-(t - self.center_fs) ** 2
                                                             / (2 * self.sigma_fs ** 2)))

    def to_json(self) -> dict:
        se = self.se
        return {"baseline": self.baseline, "baseline_se": float(se[0]),
                "visibility": self.visibility, "visibility_se": float(se[1]),
                "center_fs": self.center_fs, "center_se_fs": float(se[2]),
                "sigma_fs": self.sigma_fs, "sigma_se_fs": float(se[3]), "chi2": self.chi2}


def fit_hom_dip(dataset: ScanDataset) -> DipFit:
    """Gaussian dip B (1 - V exp(-(t - t0)^2 / (2 s^2))) fitted to the per-delay means."""
    t = dataset.axis
    y = dataset.mean
    if t.size < 5:
        raise DomainError("need at least 5 delays for a dip fit")
    sigma = np.sqrt(_floored_variance(y, dataset.variance) / dataset.repetitions)

    def parts(p):
        B, V, t0, s = p
        e = np.exp(-(t - t0) ** 2 / (2 * s ** 2))
        return B * (1 - V * e), e

    def residual(p):
        return (parts(p)[0] - y) / sigma

    def jacobian(p):
        B, V, t0, s = p
        _, e = parts(p)
        return np.column_stack([1 - V * e, -B * e, -B * V * e * (t - t0) / s ** 2,
                                -B * V * e * (t - t0) ** 2 / s ** 3]) / sigma[:, None]

    B0 = float(np.max(y))
    i0 = int(np.argmin(y))
    V0 = 1 - max(float(y[i0]), 0.0) / B0 if B0 > 0 else 0.5
    half = t[y < B0 * (1 - V0 / 2)]
    s0 = max((half.max() - half.min()) / 2.355, np.min(np.diff(t))) if half.size > 1 else (t[-1] - t[0]) / 10
    res = levenberg_marquardt(residual, jacobian, [B0, V0, float(t[i0]), s0],
                              [1e-12, 0.0, -np.inf, 1e-9])
    if not res.converged:
        raise FitError(f"dip fit did not converge (cost {res.cost:.6g})", best_cost=res.cost)
    J = res.jacobian
    cov = np.linalg.pinv(J.T @ J)
    B, V, t0, s = res.x
    return DipFit(float(B), float(V), float(t0), float(abs(s)), (cov + cov.T) / 2, 2 * res.cost)
