"""Stochastic simulation of the two-photon OAM N00N experiment.

Pipeline: a photon pair is structured into the two petal modes M1/M2 and
overlapped into one path (bunching turns this into the N00N state), the
field is rotated, a second beamsplitter splits the pair and each arm is
projected onto a petal structure.  Single-photon runs use one heralded
photon and one projection.  Detection is lossy and Poissonian, with
accidental coincidences from uncorrelated singles.

Partial distinguishability enters as the scalar ``x`` that weights the
two-photon interference term::

    P = x * P_indistinguishable + (1 - x) * P_distinguishable

Both terms are evaluated in Fock space with :mod:`twistnoon.fock_core`.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .fock_core import (
    ModeKind, ModeLabel, TwoModeFockState, basis_unitary, lift_matrix, rotation_entries,
)

SPEED_OF_LIGHT = 299_792_458.0


def coherence_sigma_fs(bandwidth_nm: float = 3.0, wavelength_nm: float = 810.0) -> float:
    """Gaussian-delay width of the two-photon overlap for a transform-limited filter.

    The filter FWHM (in wavelength) is converted to a spectral intensity
    standard deviation in angular frequency; the overlap of two delayed copies
    then falls as exp(-sigma_w^2 tau^2), i.e. exp(-tau^2 / (2 s^2)) with
    s = 1 / (sqrt(2) sigma_w).
    """
    fwhm_hz = SPEED_OF_LIGHT * bandwidth_nm * 1e-9 / (wavelength_nm * 1e-9) ** 2
    sigma_w = 2 * math.pi * fwhm_hz / (2 * math.sqrt(2 * math.log(2)))
    return 1e15 / (math.sqrt(2) * sigma_w)


COHERENCE_SIGMA_FS = coherence_sigma_fs()


class ProjectionScheme(enum.Enum):
    ORTHOGONAL = "orthogonal"
    IDENTICAL = "identical"


@dataclass(frozen=True)
class SourceModel:
    pair_rate: float = 1.0e5
    indistinguishability: float = 1.0
    delay_fs: float | None = None
    coherence_sigma_fs: float = COHERENCE_SIGMA_FS
    heralded: bool = True

    def __post_init__(self):
        if self.pair_rate < 0:
            raise ConfigError("pair_rate", "must be non-negative")
        if not 0.0 <= self.indistinguishability <= 1.0:
            raise ConfigError("indistinguishability", "must lie in [0, 1]")
        if self.coherence_sigma_fs <= 0:
            raise ConfigError("coherence_sigma_fs", "must be positive")

    def x_at(self, delay_fs) -> np.ndarray:
        """Gaussian overlap versus delay, scaled by the zero-delay indistinguishability."""
        gauss = np.exp(-np.asarray(delay_fs, float) ** 2 / (2 * self.coherence_sigma_fs ** 2))
        return self.indistinguishability * gauss

    @property
    def x(self) -> float:
        if self.delay_fs is None:
            return float(self.indistinguishability)
        return float(self.x_at(self.delay_fs))


@dataclass(frozen=True)
class LossModel:
    channel_eta: float = 1.0
    detector_eta: tuple[float, float] = (1.0, 1.0)
    coincidence_window_ns: float = 1.0
    dark_or_accidental_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "detector_eta", tuple(float(v) for v in self.detector_eta))
        if not 0 < self.channel_eta <= 1:
            raise ConfigError("channel_eta", f"must lie in (0, 1], got {self.channel_eta}")
        if len(self.detector_eta) != 2 or not all(0 < v <= 1 for v in self.detector_eta):
            raise ConfigError("detector_eta", f"needs two values in (0, 1], got {self.detector_eta}")
        if self.coincidence_window_ns < 0 or self.dark_or_accidental_rate < 0:
            raise ConfigError("coincidence_window_ns", "window and dark rate must be non-negative")

    def eta(self, n_photons: int) -> float:
        """Total detection efficiency: both detectors see the event, the channel is passed N times."""
        d1, d2 = self.detector_eta
        return self.channel_eta ** n_photons * d1 * d2

    @classmethod
    def paper_single_photon(cls, **kw) -> "LossModel":
        return cls(channel_eta=0.026, detector_eta=(0.75, 0.74), **kw)

    @classmethod
    def paper_two_photon(cls, **kw) -> "LossModel":
        return cls(channel_eta=0.0201, detector_eta=(0.74, 0.75), **kw)


# -- Fock-space outcome probabilities -----------------------------------------

def _mode(kind: ModeKind, ell: int) -> np.ndarray:
    return ModeLabel(kind, ell).coordinates()


def _perp(v: np.ndarray) -> np.ndarray:
    return np.array([-np.conj(v[1]), np.conj(v[0])])


def _rotated_states(state: TwoModeFockState, phis) -> np.ndarray:
    """Amplitudes of ``state`` after rotation by each angle, shape (len(phis), N+1)."""
    mats = lift_matrix(rotation_entries(state.ell, phis), state.n_photons)
    return mats @ state.amplitudes


def _single_probs(photon: np.ndarray, phis, ell, proj: np.ndarray) -> np.ndarray:
    """|<proj|R(phi) photon>|^2 using the N=1 Fock representation."""
    state = TwoModeFockState(1, np.array([photon[1], photon[0]]), ell)
    rotated = _rotated_states(state, phis)
    target = np.array([proj[1], proj[0]])
    return np.abs(rotated @ np.conj(target)) ** 2


def _pair_probs(amplitudes: np.ndarray, ell, proj_a, proj_b) -> np.ndarray:
    """Joint arm probability for bunched-path pairs after the splitting beamsplitter.

    ``amplitudes`` has shape (..., 3).  Only orthogonal or identical arm
    projections occur in this scheme.
    """
    overlap_ab = abs(np.vdot(proj_a, proj_b))
    if overlap_ab > 1 - 1e-12:
        basis = basis_unitary(proj_a, _perp(proj_a))
        in_basis = amplitudes @ lift_matrix(basis.dagger().entries, 2).T
        return np.abs(in_basis[..., 2]) ** 2 / 2
    if overlap_ab < 1e-12:
        basis = basis_unitary(proj_a, proj_b)
        in_basis = amplitudes @ lift_matrix(basis.dagger().entries, 2).T
        return np.abs(in_basis[..., 1]) ** 2 / 4
    raise DomainError("arm projections must be identical or orthogonal")


def pair_arm_probability(ell, phis, photon_a, photon_b, proj_a, proj_b, x) -> np.ndarray:
    """P(arm A in ``proj_a``, arm B in ``proj_b``) for one pair sharing a path.

    Includes the 1/2 post-selection on one photon per arm.  ``photon_a`` and
    ``photon_b`` are the prepared single-photon modes; ``x`` is their
    indistinguishability.
    """
    phis = np.atleast_1d(np.asarray(phis, float))
    # a_a^dag (b0 a_a^dag + b1 a_perp^dag)|0> = sqrt(2) b0 |2,0> + b1 |1,1> in the (a, perp) modes
    frame = basis_unitary(photon_a, _perp(photon_a))
    b0, b1 = np.vdot(photon_a, photon_b), np.vdot(_perp(photon_a), photon_b)
    start = np.array([0.0, b1, math.sqrt(2) * b0], dtype=complex)
    start /= np.linalg.norm(start)
    state = TwoModeFockState(2, lift_matrix(frame.entries, 2) @ start, ell)
    indist = _pair_probs(_rotated_states(state, phis), ell, proj_a, proj_b)
    pa_a = _single_probs(photon_a, phis, ell, proj_a)
    pa_b = _single_probs(photon_a, phis, ell, proj_b)
    pb_a = _single_probs(photon_b, phis, ell, proj_a)
    pb_b = _single_probs(photon_b, phis, ell, proj_b)
    dist = 0.25 * (pa_a * pb_b + pb_a * pa_b)
    return x * indist + (1 - x) * dist


def coincidence_probability(n_photons: int, ell: int, phi, scheme: ProjectionScheme | str,
                            x: float = 1.0):
    """Detection probability per prepared state at rotation ``phi`` (radians).

    N = 1: heralded photon prepared in M1, projected onto M2 (orthogonal) or
    M1 (identical).  N = 2: photons prepared in M1 and M2 and overlapped; arm
    A projects onto M1 and arm B onto M2 (orthogonal) or M1 (identical).
    """
    scheme = ProjectionScheme(scheme)
    if int(ell) != ell or ell == 0:
        raise DomainError(f"ell must be a non-zero integer, got {ell!r}")
    if not 0 <= x <= 1:
        raise DomainError(f"indistinguishability must lie in [0, 1], got {x}")
    scalar = np.ndim(phi) == 0
    m1, m2 = _mode(ModeKind.PETAL_M1, ell), _mode(ModeKind.PETAL_M2, ell)
    if n_photons == 1:
        proj = m2 if scheme is ProjectionScheme.ORTHOGONAL else m1
        p = _single_probs(m1, np.atleast_1d(np.asarray(phi, float)), ell, proj)
    elif n_photons == 2:
        proj_b = m2 if scheme is ProjectionScheme.ORTHOGONAL else m1
        p = pair_arm_probability(ell, phi, m1, m2, m1, proj_b, x)
    else:
        raise DomainError(f"splitting combinatorics implemented for N <= 2, got N={n_photons}")
    p = np.clip(p, 0.0, 1.0)
    return float(p[0]) if scalar else p


# -- datasets -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScanDataset:
    """Repeated counts at each scan point.

    ``raw_counts`` has shape (n_points, repetitions).  ``accidentals`` is the
    expected accidental count per repetition at each point; when
    ``accidentals_subtracted`` is set, :attr:`counts` has it removed.
    """

    axis: np.ndarray
    raw_counts: np.ndarray
    accidentals: np.ndarray
    accidentals_subtracted: bool
    config: dict = field(default_factory=dict)
    axis_name: str = "angle_deg"

    def __post_init__(self):
        axis = np.array(self.axis, dtype=float)
        raw = np.array(self.raw_counts)
        acc = np.broadcast_to(np.array(self.accidentals, dtype=float), axis.shape).copy()
        if raw.ndim != 2 or raw.shape[0] != axis.size:
            raise DomainError(f"raw_counts must have shape (n_points, reps), got {raw.shape}")
        if np.any(np.diff(axis) <= 0):
            raise DomainError(f"{self.axis_name} values must be strictly increasing")
        if np.any(raw < 0):
            raise DomainError("counts must be non-negative")
        for arr in (axis, raw, acc):
            arr.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "raw_counts", raw)
        object.__setattr__(self, "accidentals", acc)

    @property
    def angles_deg(self) -> np.ndarray:
        return self.axis

    @property
    def angles_rad(self) -> np.ndarray:
        return np.deg2rad(self.axis)

    @property
    def repetitions(self) -> int:
        return self.raw_counts.shape[1]

    @property
    def counts(self) -> np.ndarray:
        c = self.raw_counts.astype(float)
        if self.accidentals_subtracted:
            c = c - self.accidentals[:, None]
        return c

    @property
    def mean(self) -> np.ndarray:
        return self.counts.mean(axis=1)

    @property
    def variance(self) -> np.ndarray:
        return self.counts.var(axis=1, ddof=1)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def write(self, csv_path, json_path=None) -> tuple[Path, Path]:
        """CSV rows (axis value, rep_index, raw counts) plus a JSON sidecar."""
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.axis_name, "rep_index", "counts"])
            for value, row in zip(self.axis, self.raw_counts):
                for rep, c in enumerate(row):
                    w.writerow([repr(float(value)), rep, int(c)])
        sidecar = {
            "axis_name": self.axis_name,
            "accidentals_subtracted": bool(self.accidentals_subtracted),
            "accidentals_per_rep": [float(a) for a in self.accidentals],
            "config": self.config,
        }
        json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        return csv_path, json_path

    @classmethod
    def read(cls, csv_path, json_path=None) -> "ScanDataset":
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        meta = json.loads(json_path.read_text())
        rows = {}
        with csv_path.open() as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.setdefault(float(rec[meta["axis_name"]]), {})[int(rec["rep_index"])] = int(rec["counts"])
        axis = sorted(rows)
        raw = np.array([[rows[a][r] for r in sorted(rows[a])] for a in axis], dtype=np.int64)
        return cls(np.array(axis), raw, np.array(meta["accidentals_per_rep"]),
                   bool(meta["accidentals_subtracted"]), meta["config"], meta["axis_name"])


@dataclass(frozen=True)
class ScanConfig:
    n_photons: int = 1
    ell: int = 1
    scheme: ProjectionScheme = ProjectionScheme.ORTHOGONAL
    integration_time_s: float = 2.0
    repetitions: int = 25
    subtract_accidentals: bool = True
    statistics: str = "poisson"

    def __post_init__(self):
        object.__setattr__(self, "scheme", ProjectionScheme(self.scheme))
        if self.n_photons not in (1, 2):
            raise ConfigError("n_photons", f"must be 1 or 2, got {self.n_photons}")
        if int(self.ell) != self.ell or self.ell == 0:
            raise ConfigError("ell", f"must be a non-zero integer, got {self.ell}")
        if self.integration_time_s <= 0:
            raise ConfigError("integration_time_s", "must be positive")
        if self.repetitions < 2:
            raise ConfigError("repetitions", "need at least 2 repetitions for a variance")
        if self.statistics not in ("poisson", "binomial"):
            raise ConfigError("statistics", "must be 'poisson' or 'binomial'")


def _jsonable(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def singles_rates(n_photons: int, loss: LossModel, source: SourceModel) -> tuple[float, float]:
    """Mean singles rate at the two detectors feeding the coincidence counter.

    For heralded runs the first detector is the herald.  Projections onto a
    petal structure pass half the photons on average; for pairs each arm gets
    one of the two photons half of the time.
    """
    d1, d2 = loss.detector_eta
    dark = loss.dark_or_accidental_rate
    if n_photons == 1:
        return source.pair_rate * d1 + dark, source.pair_rate * loss.channel_eta * d2 / 2 + dark
    arm = source.pair_rate * loss.channel_eta / 2
    return arm * d1 + dark, arm * d2 + dark


def _draw(rng, mean, reps, statistics, trials=None):
    if statistics == "binomial":
        return rng.binomial(trials, min(max(mean / trials, 0.0), 1.0), size=reps)
    return rng.poisson(mean, size=reps)


def _counts_from_rates(rates, acc_per_rep, reps, seed, statistics="poisson", trials=None):
    children = np.random.SeedSequence(seed).spawn(len(rates))
    raw = np.empty((len(rates), reps), dtype=np.int64)
    for i, (mean, child) in enumerate(zip(rates, children)):
        rng = np.random.default_rng(child)
        signal = _draw(rng, mean, reps, statistics, trials)
        accidental = rng.poisson(acc_per_rep, size=reps) if acc_per_rep > 0 else 0
        raw[i] = signal + accidental
    return raw


def simulate_scan(config: ScanConfig, angles_deg, loss: LossModel, source: SourceModel,
                  seed: int) -> ScanDataset:
    """Counts per integration window at each rotation angle, one RNG stream per angle."""
    if seed is None:
        raise ConfigError("seed", "a seed is mandatory")
    angles = np.asarray(angles_deg, dtype=float)
    if angles.size == 0:
        raise ConfigError("angles_deg", "empty angle list")
    eta = loss.eta(config.n_photons)
    if eta <= 0:
        raise ConfigError("loss", "total efficiency must be positive")
    x = source.x
    p = coincidence_probability(config.n_photons, config.ell, np.deg2rad(angles), config.scheme, x)
    trials = source.pair_rate * config.integration_time_s
    mean_signal = eta * trials * np.atleast_1d(p)
    if np.any(mean_signal < 0):
        raise ConfigError("rates", "negative detection rate")
    s1, s2 = singles_rates(config.n_photons, loss, source)
    acc_per_rep = s1 * s2 * loss.coincidence_window_ns * 1e-9 * config.integration_time_s
    n_trials = int(round(trials)) if config.statistics == "binomial" else None
    raw = _counts_from_rates(mean_signal, acc_per_rep, config.repetitions, seed,
                             config.statistics, n_trials)
    resolved = {
        "scan": _jsonable(asdict(config)),
        "loss": _jsonable(asdict(loss)),
        "source": _jsonable(asdict(source)),
        "seed": int(seed),
        "eta_total": eta,
        "indistinguishability": x,
        "accidental_rate_per_s": s1 * s2 * loss.coincidence_window_ns * 1e-9,
        "expected_trials_per_rep": trials,
    }
    return ScanDataset(angles, raw, np.full(angles.shape, acc_per_rep),
                       config.subtract_accidentals, resolved, "angle_deg")


def hom_probability(x) -> np.ndarray:
    """Coincidence probability with arms projected on +1 and -1 OAM (pair prepared as M1, M2)."""
    ell = 1
    m1, m2 = _mode(ModeKind.PETAL_M1, ell), _mode(ModeKind.PETAL_M2, ell)
    plus, minus = _mode(ModeKind.OAM_PLUS, ell), _mode(ModeKind.OAM_MINUS, ell)
    x = np.atleast_1d(np.asarray(x, float))
    indist = pair_arm_probability(ell, 0.0, m1, m2, plus, minus, 1.0)[0]
    dist = pair_arm_probability(ell, 0.0, m1, m2, plus, minus, 0.0)[0]
    return x * indist + (1 - x) * dist


def hom_scan(delays_fs, source: SourceModel, loss: LossModel, integration_time_s: float = 1.0,
             repetitions: int = 50, seed: int = 0, subtract_accidentals: bool = True) -> ScanDataset:
    """Coincidences versus source delay for the bunched pair projected onto +ell / -ell."""
    delays = np.asarray(delays_fs, dtype=float)
    if delays.size == 0:
        raise ConfigError("delays_fs", "empty delay list")
    if repetitions < 2:
        raise ConfigError("repetitions", "need at least 2 repetitions")
    x = source.x_at(delays)
    eta = loss.eta(2)
    mean_signal = eta * source.pair_rate * integration_time_s * hom_probability(x)
    s1, s2 = singles_rates(2, loss, source)
    acc_per_rep = s1 * s2 * loss.coincidence_window_ns * 1e-9 * integration_time_s
    raw = _counts_from_rates(mean_signal, acc_per_rep, repetitions, seed)
    resolved = {
        "loss": _jsonable(asdict(loss)),
        "source": _jsonable(asdict(source)),
        "integration_time_s": integration_time_s,
        "repetitions": repetitions,
        "seed": int(seed),
        "eta_total": eta,
        "coherence_sigma_fs": source.coherence_sigma_fs,
    }
    return ScanDataset(delays, raw, np.full(delays.shape, acc_per_rep), subtract_accidentals,
                       resolved, "delay_fs")


# -- entanglement witness -----------------------------------------------------

@dataclass(frozen=True)
class WitnessConfig:
    """``state``: "noon" (bunched M1/M2 pair), "product" (+ell and -ell photons) or
    "dephased" (N00N with its coherence removed).  ``dephasing`` mixes the N00N
    state with the dephased one.  ``pairs_per_setting=None`` disables sampling."""

    ell: int = 1
    state: str = "noon"
    indistinguishability: float | None = None
    dephasing: float = 0.0
    pairs_per_setting: float | None = 1.0e4

    def __post_init__(self):
        if self.state not in ("noon", "product", "dephased"):
            raise ConfigError("state", f"unknown state {self.state!r}")
        if not 0 <= self.dephasing <= 1:
            raise ConfigError("dephasing", "must lie in [0, 1]")

    @property
    def x(self) -> float:
        if self.indistinguishability is not None:
            return float(self.indistinguishability)
        return 0.0 if self.state == "product" else 1.0


@dataclass(frozen=True)
class WitnessResult:
    w: float
    w_se: float
    w_expected: float
    correlations: np.ndarray
    correlations_expected: np.ndarray
    counts: np.ndarray


def witness_bases(ell: int):
    s = 1 / math.sqrt(2)
    return {
        "oam": (np.array([1, 0], complex), np.array([0, 1], complex)),
        "petal": (_mode(ModeKind.PETAL_M1, ell), _mode(ModeKind.PETAL_M2, ell)),
        "circular": (np.array([s, 1j * s]), np.array([s, -1j * s])),
    }


def _joint_table(cfg: WitnessConfig, b0, b1) -> np.ndarray:
    """4 joint arm probabilities P(A=b_i, B=b_j) for one basis."""
    ell = cfg.ell
    if cfg.state == "product":
        photons = (_mode(ModeKind.OAM_PLUS, ell), _mode(ModeKind.OAM_MINUS, ell))
    else:
        photons = (_mode(ModeKind.PETAL_M1, ell), _mode(ModeKind.PETAL_M2, ell))
    basis = (b0, b1)
    table = np.zeros((2, 2))
    dephase = 1.0 if cfg.state == "dephased" else cfg.dephasing
    for i in range(2):
        for j in range(2):
            dist = pair_arm_probability(ell, 0.0, *photons, basis[i], basis[j], 0.0)[0]
            coherent = pair_arm_probability(ell, 0.0, *photons, basis[i], basis[j], 1.0)[0]
            if cfg.state == "product":
                bunched = coherent
            else:
                # dephased N00N: equal mixture of |2,0> and |0,2> in the OAM basis
                mixed = 0.0
                for n_plus in (2, 0):
                    amps = TwoModeFockState.basis(n_plus, 2 - n_plus, ell).amplitudes
                    mixed += 0.5 * _pair_probs(amps, ell, basis[i], basis[j])
                bunched = (1 - dephase) * coherent + dephase * mixed
            table[i, j] = cfg.x * bunched + (1 - cfg.x) * dist
    return table


def _correlation(table) -> float:
    total = table.sum()
    if total <= 0:
        return 0.0
    return float((table[0, 0] + table[1, 1] - table[0, 1] - table[1, 0]) / total)


def witness_scan(cfg: WitnessConfig, seed: int) -> WitnessResult:
    """Sum over the three MUBs of the absolute two-photon correlation.

    Ideal N00N states reach 3; separable states cannot exceed 1.
    """
    bases = witness_bases(cfg.ell)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    exp_corr, corr, ses, counts = [], [], [], []
    for b0, b1 in bases.values():
        table = _joint_table(cfg, b0, b1)
        exp_corr.append(_correlation(table))
        if cfg.pairs_per_setting is None:
            counts.append(table)
            corr.append(exp_corr[-1])
            ses.append(0.0)
            continue
        c = rng.poisson(cfg.pairs_per_setting * table)
        counts.append(c)
        e = _correlation(c)
        corr.append(e)
        ses.append(math.sqrt(max(1 - e * e, 0.0) / max(c.sum(), 1)))
    corr = np.array(corr)
    return WitnessResult(
        w=float(np.sum(np.abs(corr))),
        w_se=float(math.sqrt(sum(s * s for s in ses))),
        w_expected=float(np.sum(np.abs(exp_corr))),
        correlations=corr,
        correlations_expected=np.array(exp_corr),
        counts=np.array(counts),
    )
