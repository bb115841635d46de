"""Small bounded Levenberg-Marquardt solver for weighted least squares.

Residuals are assumed already divided by their standard errors.  Bounds are
handled by projection: variables sitting on a bound whose descent direction
points outward are frozen for that step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LSQResult:
    x: np.ndarray
    cost: float
    residuals: np.ndarray
    jacobian: np.ndarray
    iterations: int
    converged: bool
    gradient_ratio: float


def projected_gradient(x, g, lower, upper) -> np.ndarray:
    pg = g.copy()
    at_lower = (x <= lower) & (g > 0)
    at_upper = (x >= upper) & (g < 0)
    pg[at_lower | at_upper] = 0.0
    return pg


def gradient_ratio(r, jac, pg) -> float:
    """|projected gradient| relative to |J|_F * max(|r|, 1)."""
    scale = np.linalg.norm(jac) * max(np.linalg.norm(r), 1.0)
    return float(np.linalg.norm(pg) / scale) if scale > 0 else 0.0


def levenberg_marquardt(fun, jac, x0, lower=None, upper=None, max_iter: int = 500,
                        gtol: float = 1e-12, xtol: float = 1e-15) -> LSQResult:
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    x = np.clip(x, lower, upper)
    r = fun(x)
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    J = jac(x)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        pg = projected_gradient(x, g, lower, upper)
        if gradient_ratio(r, J, pg) <= gtol:
            converged = True
            break
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        H = J.T @ J
        Hf = H[np.ix_(free, free)]
        diag = np.maximum(np.diag(Hf), 1e-300)
        stepped = False
        while lam < 1e20:
            try:
                dx_free = np.linalg.solve(Hf + lam * np.diag(diag), -g[free])
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            dx = np.zeros(n)
            dx[free] = dx_free
            x_new = np.clip(x + dx, lower, upper)
            r_new = fun(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                small = np.linalg.norm(x_new - x) <= xtol * (np.linalg.norm(x) + xtol)
                x, r, cost = x_new, r_new, cost_new
                J = jac(x)
                lam = max(lam / 10, 1e-12)
                stepped = True
                break
            lam *= 10
        if not stepped or small:
            # no further decrease possible at working precision
            break
    pg = projected_gradient(x, J.T @ r, lower, upper)
    ratio = gradient_ratio(r, J, pg)
    return LSQResult(x, cost, r, J, it, converged or ratio <= 1e-8, ratio)
