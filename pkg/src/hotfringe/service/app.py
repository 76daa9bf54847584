"""FastAPI wrapper around the simulation pipeline.

The CLI is a thin client of these endpoints; run the service standalone
with ``hotfringe serve`` or ``uvicorn hotfringe.service.app:app``.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__, heating, pipeline
from .schemas import (ExperimentSpec, FitRequest, FitResponse, HealthResponse,
                      ResultRowModel, ScanRequest, ScanResponse,
                      SimulateRequest, SimulateResponse, SpectrumRequest,
                      SpectrumResponse)


def _experiment_config(spec: ExperimentSpec | None):
    if spec is None:
        return None
    try:
        return spec.to_config()
    except pipeline.ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="hotfringe",
                  description="Talbot-Lau decoherence by thermal photon "
                              "emission: simulation service",
                  version=__version__)

    @app.get("/api/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__,
                              scenarios=list(pipeline.SCENARIO_NAMES))

    @app.post("/api/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        cfg = _experiment_config(req.experiment)
        try:
            result = pipeline.run_named_scenario(
                req.scenario, seed=req.seed, threads=req.threads,
                config=cfg, ensemble_size=req.ensemble_size)
        except pipeline.ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        rows = [ResultRowModel(**r.__dict__) for r in result.table.rows]
        return SimulateResponse(scenario=req.scenario, rows=rows,
                                files=result.files)

    @app.post("/api/spectrum", response_model=SpectrumResponse)
    def spectrum(req: SpectrumRequest) -> SpectrumResponse:
        cfg = _experiment_config(req.experiment)
        model = cfg.emission.build_model() if cfg else None
        if any(t < 0.0 for t in req.temperatures_k):
            raise HTTPException(status_code=422,
                                detail="temperatures must be >= 0 K")
        files = pipeline.export_spectrum(req.temperatures_k, model)
        return SpectrumResponse(files=files)

    @app.post("/api/scan", response_model=ScanResponse)
    def scan(req: ScanRequest) -> ScanResponse:
        if req.scenario == "custom":
            cfg = _experiment_config(req.experiment)
            if cfg is None:
                raise HTTPException(status_code=422,
                                    detail="scenario 'custom' requires "
                                           "an experiment section")
        elif req.scenario in pipeline.PRESET_BUILDERS:
            kwargs = {}
            if req.seed is not None:
                kwargs["seed"] = req.seed
            if req.ensemble_size is not None:
                kwargs["ensemble_size"] = req.ensemble_size
            cfg = pipeline.PRESET_BUILDERS[req.scenario](**kwargs)
        else:
            raise HTTPException(status_code=422,
                                detail=f"unknown scenario {req.scenario!r}")
        try:
            files, visibility = pipeline.export_fringe_scan(
                cfg, req.power_w, threads=req.threads)
        except pipeline.ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return ScanResponse(scenario=req.scenario, power_w=req.power_w,
                            visibility=visibility, files=files)

    @app.post("/api/fit", response_model=FitResponse)
    def fit(req: FitRequest) -> FitResponse:
        cfg = _experiment_config(req.experiment)
        stage = cfg.heating if cfg else pipeline.fig4a_config().heating
        model = cfg.emission.build_model() if cfg else None
        obs = [[o.power_w, o.velocity_mps, o.ion_yield, o.yield_err]
               for o in req.observations]
        try:
            result = heating.fit_heating_params(
                obs, stage, model=model, seed=req.seed,
                n_molecules=req.n_molecules)
        except (ValueError, heating.FitError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return FitResponse(sigma_cm2=result.sigma_cm2,
                           prefactor_per_s=result.prefactor_per_s,
                           residual=result.residual)

    return app


app = create_app()
