"""Acceptance gate: the twelve end-to-end criteria at their stated tolerances.

Each criterion prints one ``PASS``/``FAIL`` line (also when pytest captures
output).  Run standalone with ``python tests/test_acceptance.py`` or through
pytest with ``pytest tests/test_acceptance.py -v``.
"""

import hashlib
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from twistnoon import cli
from twistnoon.estimation import (
    angular_uncertainty, crb_check, fisher_information, fit_fringe, fit_hom_dip, fit_period,
    scaling_report, sensitivity_table,
)
from twistnoon.experiment_sim import (
    LossModel, ScanConfig, SourceModel, WitnessConfig, coincidence_probability, hom_scan,
    simulate_scan, witness_scan,
)
from twistnoon.fock_core import (
    TwoModeFockState, analytic_prediction, hadamard_mub, lift_and_apply, lift_matrix, make_noon,
    projection_state, rotation_entries,
)
from twistnoon.mode_fields import mub_overlap_matrix

ALL_ELLS = (1, 2, 3, 5, 10, 25, 50, 100)
IDEAL = LossModel(coincidence_window_ns=0.0)
SEED = cli.DEFAULT_SEED


def u_grid(n, ell, points=41, periods=2.0):
    return np.rad2deg(np.linspace(0, 2 * math.pi * periods, points) / (2 * n * ell))


def paper_loss(n):
    return LossModel.paper_single_photon() if n == 1 else LossModel.paper_two_photon()


def crit_01():
    target = np.array([-1, 0, 1]) / math.sqrt(2)  # [|0,2>, |1,1>, |2,0>]
    start = TwoModeFockState.basis(1, 1, 1)
    h = hadamard_mub()
    lift_and_apply(h, start)
    times = []
    for _ in range(5):
        t0 = time.perf_counter()
        out = lift_and_apply(h, start)
        times.append(time.perf_counter() - t0)
    err = float(np.max(np.abs(out.amplitudes - target)))
    rt = min(times)
    return err < 1e-12 and rt < 1e-3, f"max error {err:.1e} (< 1e-12), runtime {rt * 1e3:.3f} ms (< 1 ms)"


def crit_02():
    m = 1000
    phis = np.linspace(0, 2 * math.pi, 721)
    t0 = time.perf_counter()
    worst = 0.0
    for n in (1, 2):
        for ell in ALL_ELLS:
            start = make_noon(n, ell, 0.0).amplitudes
            psi0 = projection_state(n, ell).amplitudes
            p = np.abs((lift_matrix(rotation_entries(ell, phis), n) @ start) @ np.conj(psi0)) ** 2
            expected = analytic_prediction(m, n, ell).expectation(phis)
            worst = max(worst, float(np.max(np.abs(m * p - expected))))
    rt = time.perf_counter() - t0
    return worst < 1e-10 and rt < 1.0, f"max abs error {worst:.1e} over 16 (N, ell) x 721 points (M={m}), runtime {rt:.3f} s"


def crit_03():
    n, ell, m, reps = 2, 1, 100_000, 100
    rng = np.random.default_rng(np.random.SeedSequence(SEED))
    pred = analytic_prediction(m, n, ell)
    phis = np.linspace(0.02, math.pi / (n * ell) - 0.02, 20)
    t0 = time.perf_counter()
    worst = 0.0
    for phi in phis:
        state = lift_and_apply(rotation_entries(ell, [phi])[0], make_noon(n, ell, 0.0))
        p = abs(np.vdot(projection_state(n, ell).amplitudes, state.amplitudes)) ** 2
        counts = np.array([np.count_nonzero(rng.random(m) < p) for _ in range(reps)])
        var = pred.variance(phi)
        se = var * math.sqrt(2 / (reps - 1))
        worst = max(worst, abs(counts.var(ddof=1) - var) / se)
    rt = time.perf_counter() - t0
    return worst < 5 and rt < 10, f"worst deviation {worst:.2f} SE (< 5) at 20 points, M=1e5, {reps} reps, runtime {rt:.1f} s"


def crit_04():
    t0 = time.perf_counter()
    vals = {}
    for n in (1, 2):
        for ell in (1, 10, 100):
            cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=0.1, repetitions=1000)
            ang = u_grid(n, ell)
            ds = simulate_scan(cfg, ang, IDEAL, SourceModel(), seed=SEED + 10 * n + ell)
            fit = fit_fringe(ds, n, ell)
            unc = angular_uncertainty(ds, fit)
            p_max = float(np.max(coincidence_probability(n, ell, np.linspace(0, math.pi / ell, 2001),
                                                         "orthogonal")))
            m = 1e5 * 0.1 * IDEAL.eta(n) * p_max
            best = float(np.nanmin(unc.delta_phi_rad))
            vals[(n, ell)] = best * 2 * math.sqrt(m) * n * ell
    rt = time.perf_counter() - t0
    ok = all(0.9 <= v <= 1.1 for v in vals.values()) and rt < 120
    detail = ", ".join(f"N{n}l{ell}={v:.3f}" for (n, ell), v in vals.items())
    return ok, f"best dphi*2sqrt(M)N*ell in [0.9, 1.1]: {detail}; runtime {rt:.1f} s"


def crit_05():
    worst = 0.0
    for n in (1, 2):
        for ell in ALL_ELLS:
            cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=cli.run_time(n, ell), repetitions=25)
            ds = simulate_scan(cfg, u_grid(n, ell, 61, 3), paper_loss(n), SourceModel(),
                               seed=SEED + 100 * n + ell)
            pf = fit_period(ds, n, ell)
            worst = max(worst, abs(pf.period_deg / (180 / (n * ell)) - 1))
    return worst < 0.01, f"worst relative period error {worst:.2e} (< 1e-2) over 16 (N, ell), paper efficiencies"


def crit_06():
    ok = True
    worst_steps = 0.0
    for n in (1, 2):
        for ell in ALL_ELLS:
            phi = np.linspace(0, math.pi / (n * ell), 721)
            step = phi[1] - phi[0]
            a = coincidence_probability(n, ell, phi, "orthogonal")
            b = coincidence_probability(n, ell, phi, "identical")
            d1 = abs(phi[np.argmax(a)] - phi[np.argmin(b)]) / step
            d2 = abs(phi[np.argmin(a)] - phi[np.argmax(b)]) / step
            worst_steps = max(worst_steps, d1, d2)
            ok &= d1 <= 1 + 1e-9 and d2 <= 1 + 1e-9
    # the same holds for fits to simulated scans: phases differ by pi
    fits = []
    for scheme in ("orthogonal", "identical"):
        cfg = ScanConfig(n_photons=2, ell=10, scheme=scheme, integration_time_s=3.0, repetitions=25)
        ds = simulate_scan(cfg, u_grid(2, 10), paper_loss(2), SourceModel(), seed=SEED)
        fits.append(fit_fringe(ds, 2, 10))
    dc = abs(math.remainder(fits[0].c - fits[1].c, 2 * math.pi))
    ok &= abs(dc - math.pi) < 0.05
    return ok, f"extrema offset <= {worst_steps:.2f} grid steps (<= 1); fitted phase difference {dc:.4f} rad (pi)"


def crit_07():
    t0 = time.perf_counter()
    ratios, medians = [], []
    for n in (1, 2):
        for ell in (1, 100):
            loss = paper_loss(n)
            cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=cli.run_time(n, ell), repetitions=1000)
            ds = simulate_scan(cfg, u_grid(n, ell), loss, SourceModel(), seed=SEED + 1000 * n + ell)
            fit = fit_fringe(ds, n, ell)
            rep = crb_check(fisher_information(fit, loss, ds.angles_deg), angular_uncertainty(ds, fit), fit)
            sel = rep.ratio[rep.midpoint & np.isfinite(rep.ratio)]
            ratios.extend(sel.tolist())
            medians.append(rep.median_midpoint)
    rt = time.perf_counter() - t0
    ratios = np.array(ratios)
    ok = bool(np.all((ratios >= 0.7) & (ratios <= 1.1))) and rt < 300
    return ok, (f"{ratios.size} midpoint crosses, 1/Var / (M_T F) in [{ratios.min():.3f}, {ratios.max():.3f}] "
                f"(within [0.7, 1.1]); medians {', '.join(f'{m:.3f}' for m in medians)}; runtime {rt:.1f} s")


def crit_08():
    runs = []
    for n in (1, 2):
        for ell in ALL_ELLS:
            cfg = ScanConfig(n_photons=n, ell=ell, integration_time_s=0.1, repetitions=1000)
            ds = simulate_scan(cfg, u_grid(n, ell), IDEAL, SourceModel(), seed=SEED + 10_000 * n + ell)
            runs.append((ds, fit_fringe(ds, n, ell)))
    rep = scaling_report(sensitivity_table(runs))
    ok = all(abs(s - 1) <= 0.05 for s in rep.slopes.values())
    ok &= all(abs(r - 2) <= 0.1 for r in rep.ratios.values())
    slopes = ", ".join(f"N={n}: {s:.4f}" for n, s in rep.slopes.items())
    ratios = [f"{r:.3f}" for r in rep.ratios.values()]
    return ok, f"slopes {slopes} (1 +/- 0.05); N2/N1 ratios {min(ratios)}..{max(ratios)} (2 +/- 0.1)"


def crit_09():
    delays = np.linspace(-800, 800, 41)
    ds = hom_scan(delays, SourceModel(), IDEAL, integration_time_s=1.0, repetitions=25, seed=SEED)
    dip = fit_hom_dip(ds)
    raw_min = float(delays[np.argmin(ds.mean)])
    ok = dip.visibility >= 0.99 and raw_min == 0.0 and abs(dip.center_fs) < (delays[1] - delays[0]) / 2
    ref = fit_hom_dip(hom_scan(delays, SourceModel(indistinguishability=0.976), IDEAL,
                               integration_time_s=1.0, repetitions=25, seed=SEED))
    return ok, (f"ideal dip visibility {dip.visibility:.4f} (>= 0.99), center {dip.center_fs:.1f} fs, "
                f"lowest point at {raw_min:.0f} fs; x=0.976 gives {ref.visibility:.3f}")


def crit_10():
    noon = witness_scan(WitnessConfig(state="noon", pairs_per_setting=None), SEED)
    prod = witness_scan(WitnessConfig(state="product", pairs_per_setting=None), SEED)
    noon_s = witness_scan(WitnessConfig(state="noon"), SEED)
    prod_s = witness_scan(WitnessConfig(state="product"), SEED)
    ok = abs(noon.w - 3) <= 0.01 and abs(noon_s.w - 3) <= 0.01 and prod.w <= 1 + 1e-12
    return ok, (f"N00N w={noon.w:.4f} (sampled {noon_s.w:.4f}), separable w={prod.w:.4f} "
                f"(sampled {prod_s.w:.3f} +/- {prod_s.w_se:.3f})")


def crit_11():
    worst = 0.0
    for ell in (1, 10, 100):
        worst = max(worst, float(np.max(np.abs(mub_overlap_matrix(ell) - hadamard_mub().entries))))
    return worst < 1e-3, f"max entry deviation {worst:.1e} (< 1e-3) for ell in (1, 10, 100) on the 1024^2 grid"


def _digest(directory: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def crit_12():
    runs = [
        ["scan"],
        ["scan", "--N", "2", "--ell", "100"],
        ["fisher", "--N", "2", "--ell", "10"],
        ["sensitivity", "--set", "ells=[1,10]"],
        ["hom"],
        ["holo", "--set", "width=256", "--set", "height=256"],
        ["noon-verify"],
    ]
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for i, argv in enumerate(runs):
            a, b, c = tmp / f"{i}a", tmp / f"{i}b", tmp / f"{i}c"
            codes = [cli.main(argv + ["--out", str(a)]), cli.main(argv + ["--out", str(b)]),
                     cli.main([argv[0], "--config", str(a / "config.json"), "--out", str(c)])]
            ok &= codes == [0, 0, 0] and _digest(a) == _digest(b) == _digest(c)
    return ok, f"{len(runs)} CLI runs regenerated bit-identically (repeat and from stored config)"


CRITERIA = {
    1: ("Bunching identity", crit_01),
    2: ("Expectation oracle", crit_02),
    3: ("Variance oracle", crit_03),
    4: ("Scaling law", crit_04),
    5: ("Fringe periods", crit_05),
    6: ("Peak/trough flip", crit_06),
    7: ("Fisher/CRB", crit_07),
    8: ("Sensitivity scaling", crit_08),
    9: ("HOM dip", crit_09),
    10: ("Witness", crit_10),
    11: ("MUB field check", crit_11),
    12: ("Determinism", crit_12),
}


def _line(num, name, passed, detail):
    return f"[acceptance {num:2d}] {'PASS' if passed else 'FAIL'} {name}: {detail}"


@pytest.mark.parametrize("num", sorted(CRITERIA))
def test_criterion(num, capsys):
    name, func = CRITERIA[num]
    passed, detail = func()
    with capsys.disabled():
        print("\n" + _line(num, name, passed, detail))
    assert passed, detail


if __name__ == "__main__":
    failed = 0
    for num, (name, func) in sorted(CRITERIA.items()):
        passed, detail = func()
        failed += not passed
        print(_line(num, name, passed, detail), flush=True)
    sys.exit(1 if failed else 0)
