"""Pydantic request/response models of the simulation service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from .. import pipeline


class BeamSpec(BaseModel):
    waist_um: float = 40.0
    wavelength_nm: float = 514.5


class IonizationSpec(BaseModel):
    prefactor_per_s: float = 5e9
    activation_ev: float = 7.6


class HeatingSpec(BaseModel):
    n_beams: int = 16
    beam: BeamSpec = Field(default_factory=BeamSpec)
    beam_spacing_mm: float = 0.3
    drift_to_interferometer_cm: float = 7.2
    triplet_sigma_cm2: float = 2e-17
    ionization: IonizationSpec = Field(default_factory=IonizationSpec)
    height_spread_um: float = 0.0
    beam_offset_um: float = 0.0


class GeometrySpec(BaseModel):
    grating_period_nm: float = 991.0
    slit_width_nm: float = 475.0
    grating_separation_m: float = 0.38


class VelocitySpec(BaseModel):
    mean_mps: float = 190.0
    rel_spread: float = 0.15
    truncate_sigma: float | None = None


class DetectorSpec(BaseModel):
    power_w: float = 15.0
    waist_um: float = 6.6
    wavelength_nm: float = 488.0
    activation_ev: float | None = None
    enabled: bool = True


class EmissionSpec(BaseModel):
    cv_kb: float = 202.0
    cross_section_file: str | None = None
    visible_band_nm: tuple[float, float] = (400.0, 800.0)


class ExperimentSpec(BaseModel):
    """Wire form of a custom experiment configuration."""

    name: str = "custom"
    heating: HeatingSpec = Field(default_factory=HeatingSpec)
    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    velocity: VelocitySpec = Field(default_factory=VelocitySpec)
    detector: DetectorSpec = Field(default_factory=DetectorSpec)
    emission: EmissionSpec = Field(default_factory=EmissionSpec)
    powers_w: list[float] = [0.0]
    scan_powers_w: list[float] = []
    ensemble_size: int = 2000
    seed: int = 1
    baseline_visibility: float | None = None
    oven_temperature_k: float = 900.0

    def to_document(self) -> dict:
        doc = self.model_dump()
        if doc["velocity"]["truncate_sigma"] is None:
            del doc["velocity"]["truncate_sigma"]
        return doc

    def to_config(self) -> pipeline.ExperimentConfig:
        return pipeline.config_from_dict(self.to_document())


class SimulateRequest(BaseModel):
    scenario: str = "fig4a"
    seed: int | None = None
    threads: int | None = None
    ensemble_size: int | None = None
    experiment: ExperimentSpec | None = None


class ResultRowModel(BaseModel):
    power_w: float
    mean_entry_temperature_k: float
    visibility: float
    visibility_se: float
    relative_count_rate: float
    mean_visible_photons: float


class SimulateResponse(BaseModel):
    scenario: str
    rows: list[ResultRowModel]
    files: dict[str, str]


class SpectrumRequest(BaseModel):
    temperatures_k: list[float] = list(pipeline.FIG3_TEMPERATURES_K)
    experiment: ExperimentSpec | None = None


class SpectrumResponse(BaseModel):
    files: dict[str, str]


class ScanRequest(BaseModel):
    scenario: str = "fig4a"
    power_w: float = 0.0
    seed: int | None = None
    threads: int | None = None
    ensemble_size: int | None = None
    experiment: ExperimentSpec | None = None


class ScanResponse(BaseModel):
    scenario: str
    power_w: float
    visibility: float
    files: dict[str, str]


class IonYieldObservation(BaseModel):
    power_w: float
    velocity_mps: float
    ion_yield: float
    yield_err: float = 0.0


class FitRequest(BaseModel):
    observations: list[IonYieldObservation]
    experiment: ExperimentSpec | None = None
    seed: int = 0
    n_molecules: int = 128


class FitResponse(BaseModel):
    sigma_cm2: float
    prefactor_per_s: float
    residual: float


class HealthResponse(BaseModel):
    status: str
    version: str
    scenarios: list[str]
