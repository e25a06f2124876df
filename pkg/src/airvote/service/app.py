"""FastAPI service exposing the analytics and simulation endpoints.

The service is stateless: every request carries its full configuration and
master seed, so identical requests return identical payloads.  Error
mapping: invalid configuration -> 400 (or 422 from schema validation),
capacity limits -> 413, anything else -> 500.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, analysis, learning, montecarlo, relay
from ..config import ExperimentConfig, sweep_presets, train_presets
from ..errors import CapacityError, ConfigError
from ..montecarlo import CSV_COLUMNS, ExperimentRecord
from ..rng import SCOPE_BENCH, derive_seed, substream
from . import models as m

_NSNR_NOTE = (
    "nsnr is the ratio-of-means limit; nsnr_mc averages the per-realization "
    "ratio and sits above it for small populations. Reported effective "
    "participation rates from other sources may differ; both estimators are "
    "returned so the discrepancy stays visible."
)


def _record_model(rec: ExperimentRecord) -> m.RecordModel:
    return m.RecordModel(**rec.as_dict())


def _manifest(kind, cfg: ExperimentConfig, seed, trials=None, preset=None, provenance=None):
    return m.ManifestModel(
        tool="airvote",
        version=__version__,
        kind=kind,
        preset=preset,
        master_seed=seed,
        trials=trials,
        config_sha256=cfg.sha256(),
        provenance=provenance or {},
        config=cfg.as_dict(),
        columns=list(CSV_COLUMNS) if kind == "sweep" else list(learning.METRIC_COLUMNS),
    )


def _aggregator_for(label: str, cfg: ExperimentConfig):
    scheme, selector = montecarlo.parse_scheme_label(label)
    if scheme == "ideal":
        return learning.IdealAggregator()
    if scheme == "aircomp_pc":
        return learning.AircompAggregator(cfg.cell)
    layout = cfg.cluster.layout()
    if layout.num_users != cfg.votes.K:
        raise ConfigError(
            f"cluster layout covers {layout.num_users} users but votes.K={cfg.votes.K}"
        )
    return learning.ClusterAggregator(cfg.cell, layout, selector or cfg.cluster.selector)


def create_app() -> FastAPI:
    app = FastAPI(
        title="airvote",
        version=__version__,
        description="Analytics and Monte Carlo service for one-bit over-the-air majority voting",
    )

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(CapacityError)
    async def _capacity_error(request: Request, exc: CapacityError):
        return JSONResponse(status_code=413, content={"detail": str(exc)})

    @app.get("/health", response_model=m.HealthResponse)
    def health() -> m.HealthResponse:
        return m.HealthResponse(status="ok", version=__version__)

    @app.post("/snr", response_model=m.SnrResponse)
    def snr(req: m.SnrRequest) -> m.SnrResponse:
        cell = req.cell.to_core()
        noise_free = analysis.nsnr_large_k(cell)
        headline = analysis.nsnr_large_k(cell, req.K) if req.K else noise_free
        resp = m.SnrResponse(
            nsnr=headline,
            nsnr_noise_free=noise_free,
            e_sqrt_path_loss=analysis.e_sqrt_path_loss(cell),
            e_path_loss=analysis.e_path_loss(cell),
            alpha_flagged=cell.alpha_flagged,
            note=_NSNR_NOTE,
        )
        if req.K:
            resp.K_eff = round(req.K * headline)
            if req.p_loc is not None:
                margin = 2.0 * req.p_loc - 1.0
                resp.snr_d = margin * margin * req.K * headline
            if req.mc_draws > 0:
                mean, se = analysis.nsnr_monte_carlo(cell, req.K, req.mc_draws, req.seed)
                resp.nsnr_mc = mean
                resp.nsnr_mc_se = se
        return resp

    @app.post("/failprob", response_model=m.FailprobResponse)
    def failprob(req: m.FailprobRequest) -> m.FailprobResponse:
        cfg = req.config.to_core()
        scheme, selector = montecarlo.parse_scheme_label(req.scheme)
        params = cfg.mc_params(with_layout=scheme == "cluster")
        if selector is not None:
            params = replace(params, selector=selector)
        trials = req.trials if req.trials is not None else cfg.mc.trials
        seed = req.seed if req.seed is not None else cfg.mc.seed
        threads = req.threads if req.threads is not None else cfg.mc.threads
        records = montecarlo.sweep(
            [req.scheme], "p_loc", [params.p_loc], params, trials, seed,
            threads=threads, batch_size=cfg.mc.batch_size,
        )
        return m.FailprobResponse(record=_record_model(records[0]))

    @app.post("/sweep", response_model=m.SweepResponse)
    def sweep(req: m.SweepRequest) -> m.SweepResponse:
        provenance: dict[str, str] = {}
        preset_name = None
        if req.preset is not None:
            presets = sweep_presets()
            if req.preset not in presets:
                raise ConfigError(
                    f"unknown preset {req.preset!r}; available: {sorted(presets)}"
                )
            preset = presets[req.preset]
            preset_name = preset.name
            cfg = preset.config
            schemes = list(preset.schemes)
            axis, values = preset.axis, list(preset.values)
            trials = req.trials if req.trials is not None else preset.trials
            provenance = dict(preset.provenance)
        else:
            if not (req.schemes and req.axis and req.values):
                raise ConfigError("sweep needs a preset or schemes + axis + values")
            cfg = (req.config or m.ExperimentModel()).to_core()
            schemes, axis, values = req.schemes, req.axis, list(req.values)
            trials = req.trials if req.trials is not None else cfg.mc.trials
        seed = req.seed if req.seed is not None else cfg.mc.seed
        base = cfg.mc_params(with_layout=any(s.startswith("cluster") for s in schemes))
        records = montecarlo.sweep(
            schemes, axis, values, base, trials, seed,
            threads=req.threads, batch_size=cfg.mc.batch_size,
        )
        manifest = _manifest("sweep", cfg, seed, trials, preset_name, provenance)
        return m.SweepResponse(manifest=manifest, records=[_record_model(r) for r in records])

    @app.post("/relay-bench", response_model=m.RelayBenchResponse)
    def relay_bench(req: m.RelayBenchRequest) -> m.RelayBenchResponse:
        if req.instances < 1:
            raise ConfigError(f"instances must be >= 1, got {req.instances}")
        cell = req.cell.to_core()
        layout = relay.ClusterLayout(C=req.C, K_C=max(req.L, 1), L=req.L)
        gen = substream(req.seed, SCOPE_BENCH)
        objectives = {sel: np.empty(req.instances) for sel in relay.SELECTORS}
        optimal = {sel: 0 for sel in relay.SELECTORS}
        sandwich_violations = 0
        for i in range(req.instances):
            gains = relay.draw_relay_gains(gen, layout, cell)
            per = {sel: relay.select(gains, sel).objective for sel in relay.SELECTORS}
            best = per["exhaustive"]
            for sel, obj in per.items():
                objectives[sel][i] = obj
                if obj >= best - 1e-12:
                    optimal[sel] += 1
            if not (
                per["strongest"] <= per["greedy-exact"] + 1e-12
                and per["greedy-exact"] <= best + 1e-12
            ):
                sandwich_violations += 1
        rows = []
        best_all = objectives["exhaustive"]
        for sel in relay.SELECTORS:
            gaps = best_all - objectives[sel]
            rows.append(
                m.RelayBenchRow(
                    selector=sel,
                    mean_objective=float(objectives[sel].mean()),
                    frac_optimal=optimal[sel] / req.instances,
                    mean_gap_to_exhaustive=float(gaps.mean()),
                    max_gap_to_exhaustive=float(gaps.max()),
                )
            )
        return m.RelayBenchResponse(
            instances=req.instances, rows=rows, sandwich_violations=sandwich_violations
        )

    @app.post("/train", response_model=m.TrainResponse)
    def train(req: m.TrainRequest) -> m.TrainResponse:
        provenance: dict[str, str] = {}
        preset_name = None
        if req.preset is not None:
            presets = train_presets()
            if req.preset not in presets:
                raise ConfigError(
                    f"unknown preset {req.preset!r}; available: {sorted(presets)}"
                )
            preset = presets[req.preset]
            preset_name = preset.name
            cfg = preset.config
            schemes = list(req.schemes or preset.schemes)
            seeds = list(req.seeds or preset.seeds)
            provenance = dict(preset.provenance)
        else:
            cfg = (req.config or m.ExperimentModel()).to_core()
            schemes = list(req.schemes or ["ideal"])
            seeds = list(req.seeds or [cfg.train.seed])
        tc = cfg.train
        runs = []
        for seed in seeds:
            task_seed = derive_seed(seed, SCOPE_BENCH, 0)
            if tc.task == "xor":
                task = learning.make_xor_blobs_task(
                    num_users=cfg.votes.K,
                    n_per_user=tc.n_per_user,
                    n_features=tc.n_features,
                    test_size=tc.test_size,
                    master_seed=task_seed,
                    batch_size=tc.batch_size,
                    n_hidden=tc.n_hidden,
                )
            else:
                task = learning.make_blobs_task(
                    num_users=cfg.votes.K,
                    n_per_user=tc.n_per_user,
                    n_features=tc.n_features,
                    separation=tc.separation,
                    test_size=tc.test_size,
                    master_seed=task_seed,
                    model=tc.model,
                    batch_size=tc.batch_size,
                    n_hidden=tc.n_hidden,
                )
            for label in schemes:
                aggregator = _aggregator_for(label, cfg)
                result = learning.train(task, aggregator, tc.rounds, tc.eta, seed)
                runs.append(
                    m.TrainRunModel(
                        scheme=aggregator.name,
                        seed=seed,
                        rounds=tc.rounds,
                        final_test_accuracy=result.final_test_accuracy,
                        final_train_loss=result.final_train_loss,
                        metrics=[m.RoundMetricsModel(**row) for row in result.metrics]
                        if req.include_metrics
                        else [],
                    )
                )
        manifest = _manifest("train", cfg, seeds[0], None, preset_name, provenance)
        return m.TrainResponse(manifest=manifest, runs=runs)

    @app.post("/validate", response_model=m.ValidateResponse)
    def validate(req: m.ValidateRequest) -> m.ValidateResponse:
        from ..validate import run_validation_suite

        results = run_validation_suite(req.seed)
        return m.ValidateResponse(
            all_passed=all(r.passed for r in results),
            results=[m.CheckModel(name=r.name, passed=r.passed, detail=r.detail) for r in results],
        )

    return app
