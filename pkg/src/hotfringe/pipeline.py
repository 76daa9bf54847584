"""Experiment orchestration.

Scenario presets and runners, configuration ingestion, deterministic
ensemble Monte Carlo, detector weighting and CSV emission.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import heating, interferometer, physics
from .heating import (HeatingStageConfig, IonizationModel, LaserBeam,
                      TemperatureTrajectory, VelocityDistribution,
                      molecule_rng)
from .interferometer import InterferometerGeometry
from .physics import CrossSectionTable, EmissionModel, HeatCapacity

THREADS_ENV_VAR = "HOTFRINGE_THREADS"
_CSV_FMT = "%.9g"


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class DetectorModel:
    """Ionizing detection laser behind the third grating.

    Arrhenius-form thermal ionization probability on arrival energy:
    the beam deposits a fixed fluence-integral energy on top of the
    arrival energy, and the molecule ionizes at the stage's effective
    Arrhenius rate during the beam dwell.  Qualitative: it drives the
    count-rate trend and only mildly re-weights the visibility average.
    """

    power_w: float = 15.0
    waist_um: float = 6.6
    wavelength_nm: float = 488.0
    activation_ev: float | None = None  # None: the stage's activation energy
    enabled: bool = True

    def beam_deposit_ev(self, velocity_mps: float, sigma_cm2: float) -> float:
        """Fluence-integral energy picked up crossing the beam, in eV."""
        beam = LaserBeam(self.power_w, waist_um=self.waist_um,
                         wavelength_nm=self.wavelength_nm)
        n = heating.mean_absorbed_photons(beam, velocity_mps, sigma_cm2)
        return n * beam.photon_energy_ev

    def detection_probability(self, arrival_energy_ev: float,
                              velocity_mps: float, model: EmissionModel,
                              ionization: IonizationModel,
                              sigma_cm2: float) -> float:
        """Ionization probability for one molecule entering the beam."""
        if not self.enabled:
            return 1.0
        if self.activation_ev is not None:
            ionization = replace(ionization, activation_ev=self.activation_ev)
        e = arrival_energy_ev + self.beam_deposit_ev(velocity_mps, sigma_cm2)
        t_det = float(model.temperature_k(e))
        dwell_s = self.waist_um * 1e-6 * math.sqrt(math.pi / 2.0) / velocity_mps
        hazard = float(ionization.rate_per_s(t_det)) * dwell_s
        return 1.0 - math.exp(-hazard)


@dataclass(frozen=True)
class EmissionSettings:
    """Emission-model inputs carried by an experiment configuration."""

    cv_kb: float = 202.0
    cross_section_file: str | None = None
    visible_band_nm: tuple[float, float] = (400.0, 800.0)

    def build_model(self) -> EmissionModel:
        table = (CrossSectionTable.from_file(self.cross_section_file)
                 if self.cross_section_file else None)
        return EmissionModel(cross_section=table,
                             heat_capacity=HeatCapacity(self.cv_kb),
                             visible_band_nm=self.visible_band_nm)


@dataclass(frozen=True)
class ExperimentConfig:
    """One scenario: heating stage, interferometer, sweep and seeds."""

    name: str
    heating: HeatingStageConfig
    geometry: InterferometerGeometry = field(default_factory=InterferometerGeometry)
    velocity: VelocityDistribution = field(
        default_factory=lambda: VelocityDistribution(190.0, 0.15))
    powers_w: tuple[float, ...] = (0.0,)
    ensemble_size: int = 2000
    master_seed: int = 1
    baseline_visibility: float | None = None
    oven_temperature_k: float = 900.0
    detector: DetectorModel = field(default_factory=DetectorModel)
    emission: EmissionSettings = field(default_factory=EmissionSettings)
    scan_powers_w: tuple[float, ...] = ()

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ConfigError("ensemble size must be >= 1")
        if any(p < 0.0 for p in self.powers_w) or not self.powers_w:
            raise ConfigError("power sweep must be non-empty with powers >= 0")
        if self.oven_temperature_k <= 0.0:
            raise ConfigError("oven temperature must be > 0")


@dataclass(frozen=True)
class ResultRow:
    power_w: float
    mean_entry_temperature_k: float
    visibility: float
    visibility_se: float
    relative_count_rate: float
    mean_visible_photons: float


@dataclass(frozen=True)
class PowerDiagnostics:
    power_w: float
    max_stage_temperature_k: float
    mean_survival: float
    mean_detection_probability: float
    survived_fraction: float


@dataclass
class ResultTable:
    rows: list[ResultRow]

    COLUMNS = ("power_w", "mean_entry_temperature_k", "visibility",
               "visibility_se", "relative_count_rate", "mean_visible_photons")

    def __post_init__(self):
        for row in self.rows:
            if not (0.0 <= row.visibility <= 1.0):
                raise ValueError("visibility out of [0, 1]")
        if any(b.power_w < a.power_w for a, b in zip(self.rows, self.rows[1:])):
            raise ValueError("rows must be ordered by power")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.COLUMNS) + "\n")
        for r in self.rows:
            buf.write(",".join(_CSV_FMT % getattr(r, c) for c in self.COLUMNS)
                      + "\n")
        return buf.getvalue()


@dataclass
class ScenarioResult:
    config: ExperimentConfig
    table: ResultTable
    diagnostics: list[PowerDiagnostics]
    files: dict[str, str]


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV_VAR, "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"bad {THREADS_ENV_VAR} value: {env!r}") from exc
    return 1


@dataclass
class _MoleculeBatch:
    trajectories: list[TemperatureTrajectory]
    entry_t: np.ndarray
    peak_t: np.ndarray
    weights: np.ndarray
    survival: np.ndarray
    detection: np.ndarray


def _simulate_batch(indices, stage: HeatingStageConfig, cfg: ExperimentConfig,
                    model: EmissionModel) -> _MoleculeBatch:
    geo = cfg.geometry
    e0 = model.energy_ev(cfg.oven_temperature_k)
    trajs = []
    entry_t = np.empty(len(indices))
    peak_t = np.empty(len(indices))
    survival = np.empty(len(indices))
    detection = np.empty(len(indices))
    for j, i in enumerate(indices):
        rng = molecule_rng(cfg.master_seed, i)
        v = cfg.velocity.sample(rng)
        traj = heating.traverse_stage(v, stage, e0, rng, model)
        transit = 2.0 * geo.grating_separation_m / v
        traj = heating.extend_through_transit(traj, transit, model)
        trajs.append(traj)
        entry_t[j] = model.temperature_k(traj.entry_energy_ev)
        peak_t[j] = model.temperature_k(traj.peak_energy_ev)
        survival[j] = traj.survival_prob
        detection[j] = cfg.detector.detection_probability(
            float(traj.energies_ev[-1]), v, model, stage.ionization,
            stage.triplet_sigma_cm2)
    weights = survival * detection
    return _MoleculeBatch(trajs, entry_t, peak_t, weights, survival, detection)


def _run_power(power_w: float, cfg: ExperimentConfig, model: EmissionModel,
               n_threads: int) -> tuple[ResultRow, PowerDiagnostics,
                                        list[TemperatureTrajectory], np.ndarray]:
    stage = cfg.heating.with_power(power_w)
    chunks = [range(a, min(a + 64, cfg.ensemble_size))
              for a in range(0, cfg.ensemble_size, 64)]
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            batches = list(pool.map(
                lambda idx: _simulate_batch(idx, stage, cfg, model), chunks))
    else:
        batches = [_simulate_batch(idx, stage, cfg, model) for idx in chunks]

    trajs = [t for b in batches for t in b.trajectories]
    entry_t = np.concatenate([b.entry_t for b in batches])
    peak_t = np.concatenate([b.peak_t for b in batches])
    weights = np.concatenate([b.weights for b in batches])
    survival = np.concatenate([b.survival for b in batches])
    detection = np.concatenate([b.detection for b in batches])

    if np.all(weights <= 0.0):
        weights = np.ones_like(weights)
    res = interferometer.ensemble_visibility(
        trajs, cfg.geometry, model, weights=weights,
        baseline_v0=cfg.baseline_visibility)
    row = ResultRow(power_w=power_w,
                    mean_entry_temperature_k=float(entry_t.mean()),
                    visibility=res.visibility,
                    visibility_se=res.standard_error,
                    relative_count_rate=float(weights.mean()),
                    mean_visible_photons=res.mean_visible_photons)
    diag = PowerDiagnostics(
        power_w=power_w,
        max_stage_temperature_k=float(peak_t.max()),
        mean_survival=float(survival.mean()),
        mean_detection_probability=float(detection.mean()),
        survived_fraction=float(np.mean([t.survived for t in trajs])))
    return row, diag, trajs, weights


def run_scenario(cfg: ExperimentConfig, threads: int | None = None) -> ScenarioResult:
    """Run the power sweep of one scenario.

    Deterministic for a given (config, master seed) regardless of thread
    count: every molecule owns a counter-based RNG stream keyed by its
    index, and reductions are fixed-order.
    """
    n_threads = _resolve_threads(threads)
    model = cfg.emission.build_model()
    rows, diags = [], []
    for p in cfg.powers_w:
        row, diag, _, _ = _run_power(p, cfg, model, n_threads)
        rows.append(row)
        diags.append(diag)
    base_rate = rows[0].relative_count_rate if rows else 1.0
    if base_rate > 0.0:
        rows = [replace(r, relative_count_rate=r.relative_count_rate / base_rate)
                for r in rows]
    table = ResultTable(rows)
    files = {f"{cfg.name}_visibility.csv": table.to_csv_text()}
    return ScenarioResult(config=cfg, table=table, diagnostics=diags, files=files)


def export_spectrum(temperatures_k, model: EmissionModel | None = None,
                    scenario_name: str = "fig3") -> dict[str, str]:
    """CSV of the spectral emission rate per temperature.

    Long format rows (temperature_k, wavelength_nm, rate photons/(s nm))
    on the model's refined wavelength grid.
    """
    model = model or EmissionModel()
    grid = model._density_grid()
    buf = io.StringIO()
    buf.write("temperature_k,wavelength_nm,spectral_rate_per_s_nm\n")
    for t in temperatures_k:
        rates = (np.zeros_like(grid) if t <= 0.0
                 else np.atleast_1d(model.spectral_rate_lambda(grid, float(t))))
        for lam, r in zip(grid, rates):
            buf.write(",".join(_CSV_FMT % v for v in (t, lam, r)) + "\n")
    return {f"{scenario_name}_spectrum.csv": buf.getvalue()}


def export_fringe_scan(cfg: ExperimentConfig, power_w: float,
                       threads: int | None = None, n_points: int = 256,
                       ) -> tuple[dict[str, str], float]:
    """Third-grating scan of the ensemble-averaged pattern at one power.

    Emits (x_position_nm, normalized_counts) over one grating period with
    detection weighting; the extracted visibility 2|C1/C0| equals the
    sweep table's value for the same power and seed.
    """
    n_threads = _resolve_threads(threads)
    model = cfg.emission.build_model()
    _, _, trajs, weights = _run_power(power_w, cfg, model, n_threads)
    coeffs = interferometer.ensemble_coefficients(
        trajs, cfg.geometry, model, weights=weights,
        baseline_v0=cfg.baseline_visibility)
    xs = np.linspace(0.0, cfg.geometry.grating_period_nm, n_points,
                     endpoint=False)
    w = interferometer.fringe_pattern(coeffs, xs)
    w_norm = w / w.mean()
    buf = io.StringIO()
    buf.write("x_position_nm,normalized_counts\n")
    for x, val in zip(xs, w_norm):
        buf.write(_CSV_FMT % x + "," + _CSV_FMT % val + "\n")
    label = ("%g" % power_w).replace(".", "p")
    name = f"{cfg.name}_scan_{label}W.csv"
    return {name: buf.getvalue()}, coeffs.visibility()


# ---------------------------------------------------------------------------
# Presets: built-in scenarios encoding the experimental arrangements
# ---------------------------------------------------------------------------

# Calibrated preset constants (see scripts/calibrate_cross_section.py):
# the static laser-axis alignment offset of the two measured
# arrangements, the effective Arrhenius activation energies of the
# stage loss and of the detection process, and the velocity-class
# truncation imposed by the height delimiters.
PRESET_BEAM_OFFSET_UM = 31.0
PRESET_STAGE_ACTIVATION_EV = 5.6
PRESET_DETECTOR_ACTIVATION_EV = 6.6
PRESET_VELOCITY_TRUNCATION_SIGMA = 1.75


def _preset_stage(n_beams: int) -> HeatingStageConfig:
    return HeatingStageConfig(
        beams=tuple(LaserBeam(0.0, waist_um=40.0, wavelength_nm=514.5)
                    for _ in range(n_beams)),
        beam_spacing_mm=0.3,
        drift_to_interferometer_cm=7.2,
        triplet_sigma_cm2=2e-17,
        ionization=IonizationModel(prefactor_per_s=5e9,
                                   activation_ev=PRESET_STAGE_ACTIVATION_EV),
        beam_offset_um=PRESET_BEAM_OFFSET_UM,
    )


def _preset_velocity(mean_mps: float) -> VelocityDistribution:
    return VelocityDistribution(mean_mps, 0.15,
                                truncate_sigma=PRESET_VELOCITY_TRUNCATION_SIGMA)


def _preset_detector() -> DetectorModel:
    return DetectorModel(activation_ev=PRESET_DETECTOR_ACTIVATION_EV)


def fig4a_config(seed: int = 1, ensemble_size: int = 2000) -> ExperimentConfig:
    """190 m/s beam, 16 heating beams, 50 um central height delimiter."""
    return ExperimentConfig(
        name="fig4a",
        heating=_preset_stage(16),
        velocity=_preset_velocity(190.0),
        powers_w=(0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.0,
                  8.0, 9.0, 10.0, 10.5),
        ensemble_size=ensemble_size,
        master_seed=seed,
        baseline_visibility=0.47,
        detector=_preset_detector(),
    )


def fig4b_config(seed: int = 1, ensemble_size: int = 2000) -> ExperimentConfig:
    """100 m/s beam, 10 heating beams, 150 um height delimiter."""
    return ExperimentConfig(
        name="fig4b",
        heating=_preset_stage(10),
        velocity=_preset_velocity(100.0),
        powers_w=(0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0,
                  8.0, 10.0),
        ensemble_size=ensemble_size,
        master_seed=seed,
        baseline_visibility=0.19,
        detector=_preset_detector(),
    )


def fig2_config(seed: int = 1, ensemble_size: int = 2000) -> ExperimentConfig:
    """Fringe scans at the four published heating powers, 190 m/s."""
    cfg = fig4a_config(seed=seed, ensemble_size=ensemble_size)
    return replace(cfg, name="fig2", powers_w=(0.0, 3.0, 6.0, 10.5),
                   scan_powers_w=(0.0, 3.0, 6.0, 10.5))


FIG3_TEMPERATURES_K = (2000.0, 2500.0, 3000.0)

PRESET_BUILDERS = {
    "fig2": fig2_config,
    "fig4a": fig4a_config,
    "fig4b": fig4b_config,
}

SCENARIO_NAMES = ("fig2", "fig3", "fig4a", "fig4b", "custom")


def run_named_scenario(scenario: str, seed: int | None = None,
                       threads: int | None = None,
                       config: ExperimentConfig | None = None,
                       ensemble_size: int | None = None) -> ScenarioResult:
    """Dispatch a named scenario (presets or a custom configuration)."""
    if scenario == "custom":
        if config is None:
            raise ConfigError("scenario 'custom' requires a configuration")
        cfg = config
        if seed is not None:
            cfg = replace(cfg, master_seed=seed)
        if ensemble_size is not None:
            cfg = replace(cfg, ensemble_size=ensemble_size)
        return run_scenario(cfg, threads=threads)
    if scenario == "fig3":
        model = (config.emission.build_model() if config is not None
                 else EmissionModel())
        files = export_spectrum(FIG3_TEMPERATURES_K, model)
        dummy = ExperimentConfig(name="fig3", heating=_preset_stage(16),
                                 powers_w=(0.0,), ensemble_size=1)
        return ScenarioResult(config=dummy, table=ResultTable([]),
                              diagnostics=[], files=files)
    if scenario not in PRESET_BUILDERS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of "
                          f"{', '.join(SCENARIO_NAMES)}")
    kwargs = {}
    if seed is not None:
        kwargs["seed"] = seed
    if ensemble_size is not None:
        kwargs["ensemble_size"] = ensemble_size
    cfg = PRESET_BUILDERS[scenario](**kwargs)
    result = run_scenario(cfg, threads=threads)
    for p in cfg.scan_powers_w:
        files, _ = export_fringe_scan(cfg, p, threads=threads)
        result.files.update(files)
    return result


# ---------------------------------------------------------------------------
# Configuration ingestion (YAML document with nested sections)
# ---------------------------------------------------------------------------

def _take(section: dict, key: str, default=None, required=False):
    if key in section:
        return section.pop(key)
    if required:
        raise ConfigError(f"missing required key {key!r}")
    return default


def _expect_empty(section: dict, where: str):
    if section:
        raise ConfigError(f"unknown keys in {where}: {sorted(section)}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed YAML document."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration document must be a mapping")
    doc = dict(doc)

    hsec = dict(_take(doc, "heating", {}) or {})
    beam_sec = dict(_take(hsec, "beam", {}) or {})
    beam = LaserBeam(power_w=0.0,
                     waist_um=float(_take(beam_sec, "waist_um", 40.0)),
                     wavelength_nm=float(_take(beam_sec, "wavelength_nm", 514.5)))
    _expect_empty(beam_sec, "heating.beam")
    ion_sec = dict(_take(hsec, "ionization", {}) or {})
    ionization = IonizationModel(
        prefactor_per_s=float(_take(ion_sec, "prefactor_per_s", 5e9)),
        activation_ev=float(_take(ion_sec, "activation_ev", 7.6)))
    _expect_empty(ion_sec, "heating.ionization")
    try:
        stage = HeatingStageConfig(
            beams=tuple(beam for _ in range(int(_take(hsec, "n_beams", 16)))),
            beam_spacing_mm=float(_take(hsec, "beam_spacing_mm", 0.3)),
            drift_to_interferometer_cm=float(
                _take(hsec, "drift_to_interferometer_cm", 7.2)),
            triplet_sigma_cm2=float(_take(hsec, "triplet_sigma_cm2", 2e-17)),
            ionization=ionization,
            height_spread_um=float(_take(hsec, "height_spread_um", 0.0)),
            beam_offset_um=float(_take(hsec, "beam_offset_um", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"heating: {exc}") from exc
    _expect_empty(hsec, "heating")

    gsec = dict(_take(doc, "geometry", {}) or {})
    try:
        geometry = InterferometerGeometry(
            grating_period_nm=float(_take(gsec, "grating_period_nm", 991.0)),
            slit_width_nm=float(_take(gsec, "slit_width_nm", 475.0)),
            grating_separation_m=float(_take(gsec, "grating_separation_m", 0.38)),
            molecule_mass_kg=float(_take(gsec, "molecule_mass_kg",
                                         physics.C70_MASS_KG)))
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    _expect_empty(gsec, "geometry")

    vsec = dict(_take(doc, "velocity", {}) or {})
    try:
        truncate = _take(vsec, "truncate_sigma", None)
        velocity = VelocityDistribution(
            mean_mps=float(_take(vsec, "mean_mps", 190.0)),
            rel_spread=float(_take(vsec, "rel_spread", 0.15)),
            truncate_sigma=math.inf if truncate is None else float(truncate))
    except ValueError as exc:
        raise ConfigError(f"velocity: {exc}") from exc
    _expect_empty(vsec, "velocity")

    dsec = dict(_take(doc, "detector", {}) or {})
    det_ea = _take(dsec, "activation_ev", None)
    detector = DetectorModel(
        power_w=float(_take(dsec, "power_w", 15.0)),
        waist_um=float(_take(dsec, "waist_um", 6.6)),
        wavelength_nm=float(_take(dsec, "wavelength_nm", 488.0)),
        activation_ev=None if det_ea is None else float(det_ea),
        enabled=bool(_take(dsec, "enabled", True)))
    _expect_empty(dsec, "detector")

    esec = dict(_take(doc, "emission", {}) or {})
    band = _take(esec, "visible_band_nm", [400.0, 800.0])
    if not (isinstance(band, (list, tuple)) and len(band) == 2):
        raise ConfigError("emission.visible_band_nm must be [low, high]")
    emission = EmissionSettings(
        cv_kb=float(_take(esec, "cv_kb", 202.0)),
        cross_section_file=_take(esec, "cross_section_file", None),
        visible_band_nm=(float(band[0]), float(band[1])))
    _expect_empty(esec, "emission")

    powers = _take(doc, "powers_w", [0.0], required=False)
    if not isinstance(powers, (list, tuple)):
        raise ConfigError("powers_w must be a list")
    baseline = _take(doc, "baseline_visibility", None)
    scan_powers = _take(doc, "scan_powers_w", []) or []

    try:
        cfg = ExperimentConfig(
            name=str(_take(doc, "name", "custom")),
            heating=stage,
            geometry=geometry,
            velocity=velocity,
            powers_w=tuple(float(p) for p in powers),
            ensemble_size=int(_take(doc, "ensemble_size", 2000)),
            master_seed=int(_take(doc, "seed", 1)),
            baseline_visibility=None if baseline is None else float(baseline),
            oven_temperature_k=float(_take(doc, "oven_temperature_k", 900.0)),
            detector=detector,
            emission=emission,
            scan_powers_w=tuple(float(p) for p in scan_powers),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _expect_empty(doc, "the top level")
    return cfg


def config_from_yaml(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    return config_from_dict(doc)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_yaml(fh.read())


def write_files(files: dict[str, str], out_dir) -> list[str]:
    """Write named CSV payloads under a directory; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, text in sorted(files.items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths.append(path)
    return paths
