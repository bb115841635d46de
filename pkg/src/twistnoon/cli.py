"""Command-line front end: simulate, fit and export reproducible run directories.

Every command resolves its configuration (defaults, then ``--config`` JSON,
then ``--set key=value`` and flag overrides), writes the fully resolved
``config.json`` next to its outputs, and derives all randomness from the
stored seed.  Rerunning with ``--config <out>/config.json`` regenerates the
same bytes.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, FitError, ResolutionError
from .estimation import (
    THEORY_VISIBILITY, angular_uncertainty, crb_check, fisher_information, fit_fringe,
    fit_hom_dip, scaling_report, sensitivity_table, theory_sensitivity,
)
from .experiment_sim import (
    LossModel, ScanConfig, SourceModel, hom_scan, simulate_scan,
)
from .fock_core import (
    ModeUnitary, TwoModeFockState, analytic_prediction, hadamard_mub, lift_and_apply,
    lift_matrix, make_noon, projection_probability, projection_state, rotation_entries,
)
from .mode_fields import (
    GridSpec, HologramSpec, export_hologram, mub_overlap_matrix, synth_oam, synth_petal,
)

log = logging.getLogger("twistnoon")

DEFAULT_SEED = 20170
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# integration times per (N, ell) used for the rotation scans, seconds
RUN_TIMES = {1: {1: 2.0, 10: 1.0, 100: 2.0}, 2: {1: 3.0, 10: 3.0, 100: 8.0}}

SCAN_DEFAULTS = {
    "N": 1,
    "ell": 1,
    "scheme": "orthogonal",
    "angles_deg": None,
    "n_angles": 41,
    "periods": 2.0,
    "integration_time_s": None,
    "repetitions": 25,
    "pair_rate": 1.0e5,
    "indistinguishability": 1.0,
    "loss": "paper",
    "channel_eta": None,
    "detector_eta": None,
    "coincidence_window_ns": None,
    "dark_rate": 0.0,
    "subtract_accidentals": True,
    "statistics": "poisson",
    "seed": DEFAULT_SEED,
}

FISHER_DEFAULTS = {**SCAN_DEFAULTS, "fisher_points": 721, "crb_tolerance": 0.1}

SENSITIVITY_DEFAULTS = {
    **{k: v for k, v in SCAN_DEFAULTS.items() if k not in ("N", "ell", "angles_deg")},
    "Ns": [1, 2],
    "ells": [1, 2, 3, 5, 10, 25, 50, 100],
    "n_best": 4,
    "theory_visibility": THEORY_VISIBILITY,
}

HOM_DEFAULTS = {
    "delays_fs": None,
    "delay_min_fs": -600.0,
    "delay_max_fs": 600.0,
    "n_delays": 41,
    "integration_time_s": 1.0,
    "repetitions": 25,
    "pair_rate": 1.0e5,
    "indistinguishability": 1.0,
    "coherence_sigma_fs": None,
    "loss": "paper",
    "channel_eta": None,
    "detector_eta": None,
    "coincidence_window_ns": None,
    "dark_rate": 0.0,
    "subtract_accidentals": True,
    "seed": DEFAULT_SEED,
}

HOLO_DEFAULTS = {
    "ell": 2,
    "mode": "M1",
    "width": 1024,
    "height": 1024,
    "radius_mm": 2.0,
    "grating_period": 8.0,
    "phase_depth": 2 * math.pi,
    "masking": "none",
    "format": "png",
}

NOON_DEFAULTS = {"seed": DEFAULT_SEED, "n_random": 200, "grid_points": 721}


# -- config plumbing ----------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_raw(defaults: dict, config_path, sets, flags: dict) -> dict:
    cfg = copy.deepcopy(defaults)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be a JSON object")
        cfg.update(loaded)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError("set", f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = _parse_value(value)
    cfg.update({k: v for k, v in flags.items() if v is not None})
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    return cfg


def _num(cfg, key, kind=float, nonneg=False):
    value = cfg[key]
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if kind is int and out != value:
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if not math.isfinite(out):
        raise ConfigError(key, f"must be finite, got {value!r}")
    if nonneg and out < 0:
        raise ConfigError(key, f"must be non-negative, got {value!r}")
    return out


def _int_list(cfg, key):
    value = cfg[key]
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a non-empty list")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ConfigError(key, f"expected integers, got {v!r}")
        out.append(int(v))
    return out


def run_time(n: int, ell: int) -> float:
    """Integration time for the scan: tabulated values, nearest tabulated ell otherwise."""
    table = RUN_TIMES[n]
    key = min(table, key=lambda e: (abs(math.log(abs(ell) / e)), e))
    return table[key]


def _resolve_loss(cfg: dict, n: int):
    preset = cfg["loss"]
    if preset not in ("paper", "ideal"):
        raise ConfigError("loss", f"must be 'paper' or 'ideal', got {preset!r}")
    if preset == "paper":
        base = LossModel.paper_single_photon() if n == 1 else LossModel.paper_two_photon()
        fill = {"channel_eta": base.channel_eta, "detector_eta": list(base.detector_eta),
                "coincidence_window_ns": 1.0}
    else:
        fill = {"channel_eta": 1.0, "detector_eta": [1.0, 1.0], "coincidence_window_ns": 0.0}
    for key, value in fill.items():
        if cfg.get(key) is None:
            cfg[key] = value
    det = cfg["detector_eta"]
    if not isinstance(det, list) or len(det) != 2:
        raise ConfigError("detector_eta", "expected a list of two efficiencies")
    return LossModel(channel_eta=_num(cfg, "channel_eta"), detector_eta=tuple(det),
                     coincidence_window_ns=_num(cfg, "coincidence_window_ns", nonneg=True),
                     dark_or_accidental_rate=_num(cfg, "dark_rate", nonneg=True))


def _check_choice(cfg, key, choices):
    if cfg[key] not in choices:
        raise ConfigError(key, f"must be one of {sorted(choices)}, got {cfg[key]!r}")


def _u_grid(n, ell, n_angles, periods):
    period = 180.0 / (n * abs(ell))
    return [float(a) for a in np.linspace(0.0, periods * period, n_angles)]


def resolve_scan(cfg: dict):
    """Fill every derived value in place; return (ScanConfig, angles, LossModel, SourceModel)."""
    n = _num(cfg, "N", int)
    ell = _num(cfg, "ell", int)
    if n not in (1, 2):
        raise ConfigError("N", f"must be 1 or 2, got {n}")
    if ell == 0:
        raise ConfigError("ell", "must be a non-zero integer")
    _check_choice(cfg, "scheme", {"orthogonal", "identical"})
    _check_choice(cfg, "statistics", {"poisson", "binomial"})
    if cfg["angles_deg"] is None:
        n_angles = _num(cfg, "n_angles", int, nonneg=True)
        cfg["angles_deg"] = _u_grid(n, ell, n_angles, _num(cfg, "periods", nonneg=True))
    if not isinstance(cfg["angles_deg"], list):
        raise ConfigError("angles_deg", "expected a list of angles in degrees")
    angles = np.array([float(a) for a in cfg["angles_deg"]])
    if angles.size < 8 or np.any(np.diff(angles) <= 0):
        raise ConfigError("angles_deg", "need at least 8 strictly increasing angles")
    if cfg["integration_time_s"] is None:
        cfg["integration_time_s"] = run_time(n, ell)
    loss = _resolve_loss(cfg, n)
    source = SourceModel(pair_rate=_num(cfg, "pair_rate", nonneg=True),
                         indistinguishability=_num(cfg, "indistinguishability"))
    scan = ScanConfig(n_photons=n, ell=ell, scheme=cfg["scheme"],
                      integration_time_s=_num(cfg, "integration_time_s", nonneg=True),
                      repetitions=_num(cfg, "repetitions", int),
                      subtract_accidentals=bool(cfg["subtract_accidentals"]),
                      statistics=cfg["statistics"])
    _num(cfg, "seed", int)
    return scan, angles, loss, source


# -- output helpers -----------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, payload) -> Path:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(f"not serializable: {type(o).__name__}")

    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=default,
                               allow_nan=True) + "\n")
    return path


def _prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("out", f"cannot create {out}: {exc}") from exc
    return out


# -- commands -----------------------------------------------------------------

def _scan_and_fit(cfg, seed=None):
    scan, angles, loss, source = resolve_scan(cfg)
    ds = simulate_scan(scan, angles, loss, source, cfg["seed"] if seed is None else seed)
    fit = fit_fringe(ds, scan.n_photons, scan.ell)
    return ds, fit, loss


def _write_scan_outputs(out: Path, ds, fit):
    ds.write(out / "scan.csv", out / "scan.json")
    write_json(out / "fit.json", fit.to_json())
    write_csv(out / "fringe.csv", ["angle_deg", "mean", "std", "model"],
              zip(ds.angles_deg, ds.mean, ds.std, fit.model(ds.angles_deg)))


def cmd_scan(cfg: dict, out: Path) -> dict:
    ds, fit, _ = _scan_and_fit(cfg)
    write_json(out / "config.json", cfg)
    _write_scan_outputs(out, ds, fit)
    log.info("visibility %.6f +/- %.6f", fit.visibility, fit.visibility_se)
    return {"visibility": fit.visibility, "visibility_se": fit.visibility_se}


def cmd_fisher(cfg: dict, out: Path) -> dict:
    ds, fit, loss = _scan_and_fit(cfg)
    n_points = _num(cfg, "fisher_points", int, nonneg=True)
    write_json(out / "config.json", cfg)
    _write_scan_outputs(out, ds, fit)
    grid = np.linspace(ds.angles_deg[0], ds.angles_deg[-1], n_points)
    curve = fisher_information(fit, loss, grid)
    write_csv(out / "fisher_curve.csv", ["angle_deg", "P1", "F_rad2", "F_times_MT", "flagged"],
              zip(grid, curve.P1, curve.F, curve.bound, curve.flagged))
    # Poisson-limited uncertainty implied by the fit, degrees
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.abs(np.sin(fit.phase(np.deg2rad(grid))))
        theory = np.rad2deg(np.sqrt(fit.model(grid)) / (fit.A * fit.n_photons * abs(fit.ell) * s))
    theory = np.where(s >= 1e-3, theory, np.nan)
    write_csv(out / "uncertainty_curve.csv", ["angle_deg", "delta_phi_deg"], zip(grid, theory))
    unc = angular_uncertainty(ds, fit)
    at_data = fisher_information(fit, loss, ds.angles_deg)
    rep = crb_check(at_data, unc, fit, tolerance=_num(cfg, "crb_tolerance", nonneg=True))
    write_csv(out / "crosses.csv",
              ["angle_deg", "inverse_variance_rad2", "bound_rad2", "ratio", "midpoint",
               "delta_phi_deg", "usable"],
              zip(ds.angles_deg, rep.inverse_variance, rep.bound, rep.ratio, rep.midpoint,
                  unc.delta_phi_deg, unc.usable))
    summary = {"M_T": curve.M_T, "eta": curve.eta, "crb": rep.to_json(),
               "n_flagged_fisher": int(curve.flagged.sum()),
               "n_unusable_uncertainty": int((~unc.usable).sum())}
    write_json(out / "crb.json", summary)
    return summary


def _sensitivity_run(task):
    cfg, n, ell, seed = task
    run_cfg = {k: copy.deepcopy(v) for k, v in cfg.items() if k in SCAN_DEFAULTS}
    run_cfg.update({"N": n, "ell": ell, "angles_deg": None, "seed": seed})
    ds, fit, _ = _scan_and_fit(run_cfg)
    return ds, fit, run_cfg


def cmd_sensitivity(cfg: dict, out: Path, workers: int = 1) -> dict:
    ns = _int_list(cfg, "Ns")
    ells = _int_list(cfg, "ells")
    seed = _num(cfg, "seed", int)
    n_best = _num(cfg, "n_best", int, nonneg=True)
    vis = _num(cfg, "theory_visibility")
    pairs = [(n, ell) for n in ns for ell in ells]
    children = np.random.SeedSequence(seed).spawn(len(pairs))
    tasks = [(cfg, n, ell, int(child.generate_state(1)[0])) for (n, ell), child in zip(pairs, children)]
    # validate once up front so config errors surface before any work
    probe = {k: v for k, v in cfg.items() if k in SCAN_DEFAULTS}
    probe.update({"N": ns[0], "ell": ells[0], "angles_deg": None})
    resolve_scan(probe)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sensitivity_run, tasks))
    else:
        results = [_sensitivity_run(t) for t in tasks]
    write_json(out / "config.json", cfg)
    write_json(out / "runs.json", [r[2] for r in results])
    results = [(ds, fit) for ds, fit, _ in results]
    table = sensitivity_table(results, n_best=n_best)
    write_csv(out / "sensitivity.csv",
              ["N", "ell", "angle_deg", "delta_phi_deg", "normalized_sensitivity_per_deg"],
              ((p.n_photons, p.ell, p.phi_at_best, p.delta_phi, p.normalized_sensitivity)
               for p in table.points))
    write_csv(out / "fits.csv", ["N", "ell", "A", "c_rad", "D", "visibility", "visibility_se"],
              ((f.n_photons, f.ell, f.A, f.c, f.D, f.visibility, f.visibility_se)
               for _, f in results))
    write_csv(out / "theory.csv", ["N", "ell", "normalized_sensitivity_per_deg"],
              ((n, ell, theory_sensitivity(n, ell, vis)) for n, ell in pairs))
    rep = scaling_report(table)
    summary = {**rep.to_json(), "warnings": table.warnings, "theory_visibility": vis}
    write_json(out / "scaling.json", summary)
    return summary


def cmd_hom(cfg: dict, out: Path) -> dict:
    if cfg["delays_fs"] is None:
        n = _num(cfg, "n_delays", int, nonneg=True)
        cfg["delays_fs"] = [float(d) for d in np.linspace(_num(cfg, "delay_min_fs"),
                                                           _num(cfg, "delay_max_fs"), n)]
    if not isinstance(cfg["delays_fs"], list) or not cfg["delays_fs"]:
        raise ConfigError("delays_fs", "expected a non-empty list of delays in fs")
    delays = np.array([float(d) for d in cfg["delays_fs"]])
    if cfg["coherence_sigma_fs"] is None:
        cfg["coherence_sigma_fs"] = SourceModel().coherence_sigma_fs
    loss = _resolve_loss(cfg, 2)
    source = SourceModel(pair_rate=_num(cfg, "pair_rate", nonneg=True),
                         indistinguishability=_num(cfg, "indistinguishability"),
                         coherence_sigma_fs=_num(cfg, "coherence_sigma_fs", nonneg=True))
    ds = hom_scan(delays, source, loss, _num(cfg, "integration_time_s", nonneg=True),
                  _num(cfg, "repetitions", int), _num(cfg, "seed", int),
                  bool(cfg["subtract_accidentals"]))
    dip = fit_hom_dip(ds)
    write_json(out / "config.json", cfg)
    ds.write(out / "hom.csv", out / "hom.json")
    write_json(out / "dip_fit.json", dip.to_json())
    write_csv(out / "dip_curve.csv", ["delay_fs", "mean", "std", "model"],
              zip(ds.axis, ds.mean, ds.std, dip.model(ds.axis)))
    return dip.to_json()


def cmd_holo(cfg: dict, out: Path) -> dict:
    ell = _num(cfg, "ell", int)
    _check_choice(cfg, "mode", {"M1", "M2", "+", "-"})
    _check_choice(cfg, "masking", {"none", "carve"})
    _check_choice(cfg, "format", {"png", "pgm"})
    try:
        grid = GridSpec(_num(cfg, "width", int), _num(cfg, "height", int), _num(cfg, "radius_mm"))
        spec = HologramSpec(grating_period=_num(cfg, "grating_period"),
                            phase_depth=_num(cfg, "phase_depth"), amplitude_masking=cfg["masking"])
    except (DomainError, ResolutionError) as exc:
        raise ConfigError("grid", str(exc)) from exc
    try:
        if cfg["mode"] in ("M1", "M2"):
            field = synth_petal(ell, cfg["mode"], grid)
        else:
            field = synth_oam(ell if cfg["mode"] == "+" else -ell, grid)
    except (DomainError, ResolutionError) as exc:
        raise ConfigError("ell", str(exc)) from exc
    write_json(out / "config.json", cfg)
    path = export_hologram(field, spec, out / f"hologram.{cfg['format']}")
    overlaps = mub_overlap_matrix(abs(ell), grid)
    err = float(np.max(np.abs(overlaps - hadamard_mub().entries)))
    report = {"file": path.name, "max_deviation_from_hadamard": err,
              "overlap_re": overlaps.real, "overlap_im": overlaps.imag}
    write_json(out / "mub_overlap.json", report)
    return {"file": path.name, "max_deviation_from_hadamard": err}


def noon_checks(cfg: dict) -> dict:
    """Fock-engine invariant suite; returns named (value, threshold, passed) records."""
    rng = np.random.default_rng(np.random.SeedSequence(_num(cfg, "seed", int)))
    results = {}
    out = lift_and_apply(hadamard_mub(), TwoModeFockState.basis(1, 1, 1)).amplitudes
    target = np.array([-1, 0, 1]) / math.sqrt(2)
    results["bunching_identity"] = (float(np.max(np.abs(out - target))), 1e-12)
    worst_norm = worst_comp = 0.0
    for _ in range(_num(cfg, "n_random", int, nonneg=True)):
        n = int(rng.integers(1, 9))
        us = []
        for _ in range(2):
            z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            q, r = np.linalg.qr(z)
            us.append(ModeUnitary(q * (np.diag(r) / np.abs(np.diag(r)))))
        v = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
        s = TwoModeFockState(n, v / np.linalg.norm(v), 1)
        worst_norm = max(worst_norm, abs(lift_and_apply(us[0], s).norm - 1))
        one = lift_and_apply(us[0] @ us[1], s).amplitudes
        two = lift_and_apply(us[0], lift_and_apply(us[1], s)).amplitudes
        worst_comp = max(worst_comp, float(np.max(np.abs(one - two))))
    results["norm_preservation"] = (worst_norm, 1e-12)
    results["composition"] = (worst_comp, 1e-10)
    phis = np.linspace(0, 2 * math.pi, _num(cfg, "grid_points", int, nonneg=True))
    worst = 0.0
    m = 1000
    for n in (1, 2):
        for ell in (1, 2, 3, 5, 10, 25, 50, 100):
            start = make_noon(n, ell, 0.0).amplitudes
            target = projection_state(n, ell).amplitudes
            amps = lift_matrix(rotation_entries(ell, phis), n) @ start
            p = np.abs(amps @ np.conj(target)) ** 2
            worst = max(worst, float(np.max(np.abs(m * p - analytic_prediction(m, n, ell).expectation(phis)))))
    results["expectation_oracle"] = (worst, 1e-10)
    results["projection_self"] = (abs(projection_probability(make_noon(2, 3, 0.4), make_noon(2, 3, 0.4)) - 1), 1e-12)
    return {k: {"value": v, "threshold": t, "passed": bool(v < t)} for k, (v, t) in results.items()}


def cmd_noon_verify(cfg: dict, out: Path | None) -> dict:
    checks = noon_checks(cfg)
    out_amp = lift_and_apply(hadamard_mub(), TwoModeFockState.basis(1, 1, 1)).amplitudes
    print("H2 |1,1> = " + " ".join(f"{a.real:+.12f}{a.imag:+.12f}j" for a in out_amp[::-1])
          + "  (|2,0>, |1,1>, |0,2>)")
    for name, rec in checks.items():
        status = "PASS" if rec["passed"] else "FAIL"
        print(f"{status} {name}: {rec['value']:.3e} < {rec['threshold']:.0e}")
    if out is not None:
        write_json(out / "config.json", cfg)
        write_json(out / "noon_verify.json", checks)
    if not all(rec["passed"] for rec in checks.values()):
        raise FitError("Fock-engine invariant check failed")
    return checks


# -- argument parsing ---------------------------------------------------------

def _common(p, out_default: str | None = None):
    p.add_argument("--config", help="JSON config file (e.g. a previous run's config.json)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key; VALUE is parsed as JSON when possible")
    p.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--out", default=out_default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistnoon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("scan", "simulate a rotation scan and fit the fringe"),
                           ("fisher", "scan, Fisher information and Cramer-Rao comparison")):
        p = sub.add_parser(name, help=helptext)
        _common(p, f"out/{name}")
        p.add_argument("--N", type=int, dest="N")
        p.add_argument("--ell", type=int)
        p.add_argument("--scheme", choices=["orthogonal", "identical"])
        p.add_argument("--reps", type=int, dest="repetitions")
        p.add_argument("--time", type=float, dest="integration_time_s")
        p.add_argument("--loss", choices=["paper", "ideal"])

    p = sub.add_parser("sensitivity", help="sweep ell and N, report sensitivity scaling")
    _common(p, "out/sensitivity")
    p.add_argument("--ells", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--loss", choices=["paper", "ideal"])
    p.add_argument("--workers", type=int, default=1, help="worker threads (output is independent of this)")

    p = sub.add_parser("hom", help="simulate and fit a two-photon delay dip")
    _common(p, "out/hom")
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--x", type=float, dest="indistinguishability")
    p.add_argument("--loss", choices=["paper", "ideal"])

    p = sub.add_parser("holo", help="export a hologram and report sampled MUB overlaps")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default="out/holo")
    p.add_argument("--ell", type=int)
    p.add_argument("--mode", choices=["M1", "M2", "+", "-"])
    p.add_argument("--format", choices=["png", "pgm"])

    p = sub.add_parser("noon-verify", help="run the Fock-engine invariant checks")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None)
    return parser


COMMANDS = {
    "scan": (SCAN_DEFAULTS, ("N", "ell", "scheme", "repetitions", "integration_time_s", "loss", "seed")),
    "fisher": (FISHER_DEFAULTS, ("N", "ell", "scheme", "repetitions", "integration_time_s", "loss", "seed")),
    "sensitivity": (SENSITIVITY_DEFAULTS, ("ells", "repetitions", "loss", "seed")),
    "hom": (HOM_DEFAULTS, ("repetitions", "indistinguishability", "loss", "seed")),
    "holo": (HOLO_DEFAULTS, ("ell", "mode", "format")),
    "noon-verify": (NOON_DEFAULTS, ("seed",)),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    defaults, flag_keys = COMMANDS[args.command]
    flags = {k: getattr(args, k, None) for k in flag_keys}
    try:
        cfg = resolve_raw(defaults, args.config, args.set, flags)
        out = _prepare_out(args.out) if args.out else None
        if args.command == "scan":
            result = cmd_scan(cfg, out)
        elif args.command == "fisher":
            result = cmd_fisher(cfg, out)
        elif args.command == "sensitivity":
            result = cmd_sensitivity(cfg, out, max(1, args.workers))
        elif args.command == "hom":
            result = cmd_hom(cfg, out)
        elif args.command == "holo":
            result = cmd_holo(cfg, out)
        else:
            cmd_noon_verify(cfg, out)
            return EXIT_OK
    except (ConfigError, DomainError, ResolutionError) as exc:
        print(f"twistnoon: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"twistnoon: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(result, sort_keys=True, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
