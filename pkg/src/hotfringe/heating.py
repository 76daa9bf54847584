"""Laser heating stage Monte Carlo.

Photon absorption across a row of focused Gaussian laser beams,
radiative cooling in the gaps and the drift to the interferometer,
thermally activated ionization losses, ion-yield thermometry and the
two-parameter heating fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import physics
from .physics import EmissionModel, HeatCapacity, K_BOLTZMANN_EV

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


def molecule_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible stream for one molecule.

    Streams are keyed by (master seed, molecule index) with a Philox
    counter generator, so ensembles are order- and thread-independent.
    """
    key = np.array([master_seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class LaserBeam:
    """One focused Gaussian heating beam."""

    power_w: float
    waist_um: float = 40.0
    wavelength_nm: float = 514.5

    def __post_init__(self):
        if self.power_w < 0.0:
            raise ValueError("beam power must be >= 0")
        if self.waist_um <= 0.0:
            raise ValueError("beam waist must be > 0")

    @property
    def waist_m(self) -> float:
        return self.waist_um * 1e-6

    @property
    def photon_energy_ev(self) -> float:
        return physics.photon_energy_ev(self.wavelength_nm)


@dataclass(frozen=True)
class IonizationModel:
    """Thermally activated ionization with an effective Arrhenius law."""

    prefactor_per_s: float = 5e9
    activation_ev: float = 7.6

    def __post_init__(self):
        if self.prefactor_per_s <= 0.0 or self.activation_ev <= 0.0:
            raise ValueError("Arrhenius parameters must be positive")

    def rate_per_s(self, t_kelvin):
        """Ionization rate A * exp(-E_a / k_B T); zero at T = 0."""
        t = np.asarray(t_kelvin, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0.0
        out[pos] = self.prefactor_per_s * np.exp(
            -self.activation_ev / (K_BOLTZMANN_EV * t[pos]))
        return float(out) if np.ndim(t_kelvin) == 0 else out


@dataclass(frozen=True)
class HeatingStageConfig:
    """Beam-grid geometry and loss model of the heating stage."""

    beams: tuple[LaserBeam, ...]
    beam_spacing_mm: float = 0.3
    drift_to_interferometer_cm: float = 7.2
    triplet_sigma_cm2: float = 2e-17
    ionization: IonizationModel = field(default_factory=IonizationModel)
    # optional transverse geometry, both off by default: a uniform molecule
    # height spread (half-width) and a static beam-axis offset
    height_spread_um: float = 0.0
    beam_offset_um: float = 0.0

    def __post_init__(self):
        if not (1 <= len(self.beams) <= 16):
            raise ValueError("between 1 and 16 beams supported")
        if self.beam_spacing_mm <= 0.0:
            raise ValueError("beam spacing must be > 0")
        if self.drift_to_interferometer_cm < 0.0:
            raise ValueError("drift distance must be >= 0")
        if self.triplet_sigma_cm2 < 0.0:
            raise ValueError("absorption cross-section must be >= 0")

    @classmethod
    def uniform(cls, power_w: float, n_beams: int = 16, **kwargs) -> "HeatingStageConfig":
        """Stage with n identical beams at the given power."""
        return cls(beams=tuple(LaserBeam(power_w) for _ in range(n_beams)), **kwargs)

    def with_power(self, power_w: float) -> "HeatingStageConfig":
        """Copy of this stage with every beam set to the given power."""
        return replace(self, beams=tuple(replace(b, power_w=power_w)
                                         for b in self.beams))

    @property
    def spacing_m(self) -> float:
        return self.beam_spacing_mm * 1e-3

    @property
    def drift_m(self) -> float:
        return self.drift_to_interferometer_cm * 1e-2


@dataclass(frozen=True)
class VelocityDistribution:
    """Gaussian beam-velocity distribution (mean and relative spread).

    ``truncate_sigma`` rejects draws beyond that many standard
    deviations; the gravitational height delimiters select a bounded
    velocity class, so the presets use a truncated distribution.
    """

    mean_mps: float
    rel_spread: float = 0.15
    truncate_sigma: float = math.inf

    def __post_init__(self):
        if self.mean_mps <= 0.0:
            raise ValueError("mean velocity must be > 0")
        if self.rel_spread < 0.0:
            raise ValueError("relative spread must be >= 0")
        if self.truncate_sigma <= 0.0:
            raise ValueError("truncation must be > 0 sigma")

    def sample(self, rng) -> float:
        if self.rel_spread == 0.0:
            return self.mean_mps
        sd = self.rel_spread * self.mean_mps
        while True:
            v = rng.normal(self.mean_mps, sd)
            if v > 0.0 and abs(v - self.mean_mps) <= self.truncate_sigma * sd:
                return v


@dataclass
class TemperatureTrajectory:
    """Sampled internal-energy path of one molecule.

    Times are seconds on the interferometer clock: negative inside the
    heating stage, 0 at the interferometer entrance, positive during the
    grating transit once extended.  Energy jumps up only at beam
    crossings and decreases in between.
    """

    velocity_mps: float
    times_s: np.ndarray
    energies_ev: np.ndarray
    survived: bool = True
    ionized_in_stage: bool = False
    survival_prob: float = 1.0
    photons_absorbed: int = 0

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float)
        self.energies_ev = np.asarray(self.energies_ev, dtype=float)
        if self.times_s.size != self.energies_ev.size or self.times_s.size < 1:
            raise ValueError("times and energies must be matching non-empty arrays")
        if np.any(np.diff(self.times_s) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")

    def energy_at(self, t_s):
        """Internal energy in eV at time(s) t, linear between samples."""
        return np.interp(t_s, self.times_s, self.energies_ev)

    @property
    def entry_energy_ev(self) -> float:
        """Energy at the interferometer entrance (t = 0)."""
        return float(self.energy_at(0.0))

    @property
    def peak_energy_ev(self) -> float:
        return float(np.max(self.energies_ev))


def mean_absorbed_photons(beam: LaserBeam, velocity_mps: float,
                          sigma_cm2: float) -> float:
    """Mean photons absorbed in one axial crossing of a Gaussian beam.

    Line integral of sigma * I(x) / E_photon along the beam diameter:
    n = sigma * P * sqrt(2/pi) / (w * v * E_photon).
    """
    if velocity_mps <= 0.0:
        raise ValueError("velocity must be > 0")
    sigma_m2 = sigma_cm2 * 1e-4
    e_photon_j = beam.photon_energy_ev * physics.EV
    return (sigma_m2 * beam.power_w * math.sqrt(2.0 / math.pi)
            / (beam.waist_m * velocity_mps * e_photon_j))


def _segment_hazard(model: EmissionModel, ionization: IonizationModel,
                    energy_ev: float, duration_s: float,
                    warped: bool = False) -> float:
    """Ionization hazard integral over one free-cooling segment.

    Gauss-Legendre in t for short gaps; for long drifts the substitution
    t = duration * s^2 concentrates nodes at the hot start where the
    Arrhenius rate spikes.
    """
    if duration_s <= 0.0:
        return 0.0
    if warped:
        s = 0.5 * (_GL16_X + 1.0)
        dts = duration_s * s * s
        w = duration_s * s * _GL16_W  # includes the ds Jacobian 2s * (1/2)
    else:
        dts = 0.5 * duration_s * (_GL8_X + 1.0)
        w = 0.5 * duration_s * _GL8_W
    t_k = model.temperature_k(model.cool_energy(energy_ev, dts))
    return float(np.dot(w, ionization.rate_per_s(t_k)))


def _cooling_samples(duration_s: float, n: int) -> np.ndarray:
    """Sample offsets for one cooling segment, denser at the hot start."""
    if n <= 2:
        return np.array([duration_s])
    u = np.linspace(0.0, 1.0, n)[1:]
    return duration_s * u ** 2


def traverse_stage(velocity_mps: float, cfg: HeatingStageConfig,
                   initial_energy_ev: float, rng,
                   model: EmissionModel | None = None,
                   fluence_factor: float | None = None) -> TemperatureTrajectory:
    """Monte Carlo pass of one molecule through the heating stage.

    Per beam, draws Poisson-distributed photon absorptions around the
    Gaussian-fluence mean; cools radiatively over each gap and over the
    drift to the interferometer; accumulates the ionization hazard
    continuously.  The returned trajectory ends exactly at t = 0, the
    interferometer entrance.
    """
    if velocity_mps <= 0.0:
        raise ValueError("velocity must be > 0")
    model = model or EmissionModel()

    # Draw order per molecule is fixed: ionization threshold, transverse
    # offset (when enabled), then one Poisson count per beam.
    hazard_threshold = rng.exponential(1.0)
    factor = fluence_factor
    if factor is None:
        if cfg.height_spread_um > 0.0:
            y_um = rng.uniform(-cfg.height_spread_um, cfg.height_spread_um)
        else:
            y_um = 0.0
        y_um += cfg.beam_offset_um
        w_um = cfg.beams[0].waist_um
        factor = math.exp(-2.0 * (y_um / w_um) ** 2) if y_um != 0.0 else 1.0

    n_beams = len(cfg.beams)
    gap_s = cfg.spacing_m / velocity_mps
    drift_s = cfg.drift_m / velocity_mps
    t_entry_offset = (n_beams - 1) * gap_s + drift_s  # first beam at -offset

    t_cursor = -t_entry_offset  # current beam position on the clock
    times = [t_cursor]
    energies = [initial_energy_ev]
    e = initial_energy_ev
    hazard = 0.0
    hazard_at_grid_end = 0.0
    photons = 0

    for k, beam in enumerate(cfg.beams):
        n_k = int(rng.poisson(factor * mean_absorbed_photons(
            beam, velocity_mps, cfg.triplet_sigma_cm2)))
        if n_k > 0:
            photons += n_k
            e_post = e + n_k * beam.photon_energy_ev
            times.append(np.nextafter(t_cursor, math.inf))
            energies.append(e_post)
            e = e_post
        is_drift = k == n_beams - 1
        if is_drift:
            # D1 collects over the beam grid plus the trailing half gap
            hazard_at_grid_end = hazard + _segment_hazard(
                model, cfg.ionization, e, min(0.5 * gap_s, drift_s))
        seg = drift_s if is_drift else gap_s
        hazard += _segment_hazard(model, cfg.ionization, e, seg, warped=is_drift)
        dts = _cooling_samples(seg, 24 if is_drift else 8)
        seg_e = np.atleast_1d(model.cool_energy(e, dts))
        times.extend(t_cursor + dts)
        energies.extend(seg_e)
        e = float(seg_e[-1])
        t_cursor = times[-1]

    times[-1] = 0.0  # land exactly on the interferometer clock origin
    survived = hazard_threshold > hazard
    ionized_in_stage = hazard_threshold <= hazard_at_grid_end
    return TemperatureTrajectory(
        velocity_mps=velocity_mps,
        times_s=np.array(times),
        energies_ev=np.array(energies),
        survived=bool(survived),
        ionized_in_stage=bool(ionized_in_stage),
        survival_prob=float(math.exp(-hazard)),
        photons_absorbed=photons,
    )


def extend_through_transit(traj: TemperatureTrajectory, transit_s: float,
                           model: EmissionModel | None = None,
                           n_samples: int = 48) -> TemperatureTrajectory:
    """Continue a trajectory by free radiative cooling over the transit.

    Appends samples covering (0, transit]; the result spans the full
    interferometer window required by the visibility operations.
    """
    model = model or EmissionModel()
    if traj.times_s[-1] != 0.0:
        raise ValueError("trajectory must end at the interferometer entrance")
    dts = _cooling_samples(transit_s, n_samples)
    e = model.cool_energy(traj.entry_energy_ev, dts)
    return TemperatureTrajectory(
        velocity_mps=traj.velocity_mps,
        times_s=np.concatenate([traj.times_s, dts]),
        energies_ev=np.concatenate([traj.energies_ev, np.atleast_1d(e)]),
        survived=traj.survived,
        ionized_in_stage=traj.ionized_in_stage,
        survival_prob=traj.survival_prob,
        photons_absorbed=traj.photons_absorbed,
    )


def ionization_survival(times_s, energies_ev, ionization: IonizationModel,
                        heat_capacity: HeatCapacity | None = None) -> float:
    """Survival probability over a sampled trajectory segment.

    exp(-integral of A exp(-E_a / k_B T(t)) dt), trapezoid over the given
    samples; lies in (0, 1] and is multiplicative over concatenation.
    """
    cv = heat_capacity or HeatCapacity()
    t_k = np.asarray(energies_ev, dtype=float) / cv.ev_per_k
    rates = ionization.rate_per_s(t_k)
    hazard = float(np.trapezoid(rates, np.asarray(times_s, dtype=float)))
    return math.exp(-hazard)


@dataclass(frozen=True)
class IonYield:
    """D1-style in-stage ion yield with its Monte Carlo standard error."""

    fraction: float
    standard_error: float
    n_molecules: int


def d1_ion_yield(cfg: HeatingStageConfig, velocities: VelocityDistribution,
                 n: int, seed: int = 0,
                 model: EmissionModel | None = None) -> IonYield:
    """Monte Carlo fraction of molecules ionized over the beam grid."""
    if n < 1:
        raise ValueError("need at least one molecule")
    model = model or EmissionModel()
    e0 = model.energy_ev(900.0)
    hits = 0
    for i in range(n):
        rng = molecule_rng(seed, i)
        v = velocities.sample(rng)
        traj = traverse_stage(v, cfg, e0, rng, model)
        hits += int(traj.ionized_in_stage)
    frac = hits / n
    se = math.sqrt(max(frac * (1.0 - frac), 1.0 / n) / n)
    return IonYield(fraction=frac, standard_error=se, n_molecules=n)


def _expected_stage_ion_prob(cfg: HeatingStageConfig, velocity_mps: float,
                             n: int, seed: int, model: EmissionModel,
                             oven_t_k: float = 900.0) -> float:
    """Smooth in-stage ionization probability (averaged hazard, not flags)."""
    e0 = model.energy_ev(oven_t_k)
    n_beams = len(cfg.beams)
    gap_s = cfg.spacing_m / velocity_mps
    acc = 0.0
    for i in range(n):
        rng = molecule_rng(seed, i)
        rng.exponential(1.0)  # keep the stream layout of traverse_stage
        factor = 1.0
        if cfg.height_spread_um > 0.0:
            y_um = rng.uniform(-cfg.height_spread_um, cfg.height_spread_um)
            y_um += cfg.beam_offset_um
            factor = math.exp(-2.0 * (y_um / cfg.beams[0].waist_um) ** 2)
        e = e0
        hazard = 0.0
        for k, beam in enumerate(cfg.beams):
            n_k = rng.poisson(factor * mean_absorbed_photons(
                beam, velocity_mps, cfg.triplet_sigma_cm2))
            e += n_k * beam.photon_energy_ev
            if k < n_beams - 1:
                hazard += _segment_hazard(model, cfg.ionization, e, gap_s)
                e = float(model.cool_energy(e, gap_s))
            else:
                hazard += _segment_hazard(model, cfg.ionization, e,
                                          min(0.5 * gap_s, cfg.drift_m / velocity_mps))
        acc += 1.0 - math.exp(-hazard)
    return acc / n


class FitError(RuntimeError):
    """Raised when the heating-parameter fit cannot make progress."""


@dataclass(frozen=True)
class HeatingFit:
    sigma_cm2: float
    prefactor_per_s: float
    residual: float


def load_ion_yield_observations(path) -> np.ndarray:
    """Read rows (power_w, velocity_mps, yield, yield_err); '#' comments."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 4:
                raise ValueError(f"expected four columns, got: {raw.rstrip()!r}")
            rows.append([float(p) for p in parts])
    return np.array(rows, dtype=float)


def fit_heating_params(observed, base_cfg: HeatingStageConfig,
                       model: EmissionModel | None = None, seed: int = 0,
                       n_molecules: int = 128, coarse: int = 7, refine: int = 5,
                       rounds: int = 2,
                       sigma_bounds_cm2: tuple[float, float] = (2e-18, 2e-16),
                       prefactor_bounds: tuple[float, float] = (2.5e8, 1e11),
                       ) -> HeatingFit:
    """Fit (triplet cross-section, Arrhenius prefactor) to ion-yield data.

    Coarse-to-fine log-grid search minimizing the sum of squared
    log-yield residuals; common random numbers across candidates keep the
    objective smooth.  Needs at least four observations spanning two
    powers and two velocities.
    """
    obs = np.asarray(observed, dtype=float)
    if obs.ndim != 2 or obs.shape[1] < 3:
        raise ValueError("observations must be rows (power, velocity, yield[, err])")
    if obs.shape[0] < 4 or np.unique(obs[:, 0]).size < 2 \
            or np.unique(obs[:, 1]).size < 2:
        raise ValueError("need >= 4 observations spanning >= 2 powers "
                         "and >= 2 velocities")
    model = model or EmissionModel()
    floor = 1e-7

    def objective(sigma_cm2: float, a_ion: float) -> float:
        cfg = replace(base_cfg, triplet_sigma_cm2=sigma_cm2,
                      ionization=replace(base_cfg.ionization,
                                         prefactor_per_s=a_ion))
        total = 0.0
        for j, row in enumerate(obs):
            p, v, y = row[0], row[1], row[2]
            sim = _expected_stage_ion_prob(cfg.with_power(p), v, n_molecules,
                                           seed + 7919 * j, model)
            total += (math.log(max(sim, floor)) - math.log(max(y, floor))) ** 2
        return total

    lo = np.log([sigma_bounds_cm2[0], prefactor_bounds[0]])
    hi = np.log([sigma_bounds_cm2[1], prefactor_bounds[1]])
    best = None
    n_grid = coarse
    for _ in range(rounds + 1):
        sig_grid = np.exp(np.linspace(lo[0], hi[0], n_grid))
        a_grid = np.exp(np.linspace(lo[1], hi[1], n_grid))
        values = np.empty((n_grid, n_grid))
        for i, s in enumerate(sig_grid):
            for j, a in enumerate(a_grid):
                values[i, j] = objective(s, a)
        i, j = np.unravel_index(np.argmin(values), values.shape)
        best = (sig_grid[i], a_grid[j], float(values[i, j]))
        if float(values.max() - values.min()) < 1e-12:
            raise FitError("flat objective: observations do not constrain the fit")
        # shrink the window around the incumbent for the next round
        span = (hi - lo) / (n_grid - 1) * 2.0
        center = np.log([best[0], best[1]])
        lo = np.maximum(center - span, np.log([sigma_bounds_cm2[0],
                                               prefactor_bounds[0]]))
        hi = np.minimum(center + span, np.log([sigma_bounds_cm2[1],
                                               prefactor_bounds[1]]))
        n_grid = refine
    return HeatingFit(sigma_cm2=best[0], prefactor_per_s=best[1],
                      residual=best[2])
