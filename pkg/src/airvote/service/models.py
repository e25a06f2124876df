"""Pydantic request/response models for the HTTP service.

Request validation is strict (unknown fields rejected) and mirrors the
experiment config file section by section, so a YAML config maps 1:1 onto a
request body.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..channel import CellConfig
from ..config import ClusterConfig, ExperimentConfig, McConfig, TrainConfig, VotesConfig


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CellModel(StrictModel):
    R_m: float = 1000.0
    r0_m: float = 10.0
    alpha: float = 3.0
    P_dBW: float = -20.0
    M: int = 1000
    N0_dBm: float = -80.0

    def to_core(self) -> CellConfig:
        return CellConfig(**self.model_dump())


class VotesModel(StrictModel):
    K: int = 54
    p_loc: float = 0.55

    def to_core(self) -> VotesConfig:
        return VotesConfig(**self.model_dump())


class ClusterModel(StrictModel):
    C: int = 6
    K_C: int = 9
    L: int = 3
    selector: str = "greedy-exact"

    def to_core(self) -> ClusterConfig:
        return ClusterConfig(**self.model_dump())


class McModel(StrictModel):
    trials: int = 200_000
    seed: int = 7
    threads: int = 1
    batch_size: int = 65536
    channel_mode: str = "redraw"

    def to_core(self) -> McConfig:
        return McConfig(**self.model_dump())


class TrainModel(StrictModel):
    task: str = "blobs"
    model: str = "logistic"
    n_features: int = 64
    n_hidden: int = 64
    rounds: int = 300
    eta: float = 1e-3
    batch_size: int = 16
    n_per_user: int = 40
    test_size: int = 2000
    separation: float = 3.0
    seed: int = 1

    def to_core(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class ExperimentModel(StrictModel):
    cell: CellModel = Field(default_factory=CellModel)
    votes: VotesModel = Field(default_factory=VotesModel)
    cluster: ClusterModel = Field(default_factory=ClusterModel)
    mc: McModel = Field(default_factory=McModel)
    train: TrainModel = Field(default_factory=TrainModel)

    def to_core(self) -> ExperimentConfig:
        return ExperimentConfig(
            cell=self.cell.to_core(),
            votes=self.votes.to_core(),
            cluster=self.cluster.to_core(),
            mc=self.mc.to_core(),
            train=self.train.to_core(),
        )

    @classmethod
    def from_core(cls, cfg: ExperimentConfig) -> "ExperimentModel":
        return cls.model_validate(cfg.as_dict())


class HealthResponse(StrictModel):
    status: str
    version: str


class SnrRequest(StrictModel):
    cell: CellModel = Field(default_factory=CellModel)
    K: int | None = 54
    p_loc: float | None = 0.55
    mc_draws: int = 0
    seed: int = 0


class SnrResponse(StrictModel):
    nsnr: float
    nsnr_noise_free: float
    e_sqrt_path_loss: float
    e_path_loss: float
    snr_d: float | None = None
    K_eff: int | None = None
    nsnr_mc: float | None = None
    nsnr_mc_se: float | None = None
    alpha_flagged: bool = False
    note: str = ""


class McEstimateModel(StrictModel):
    trials: int
    failures: int
    q_hat: float
    ci95_lo: float
    ci95_hi: float


class RecordModel(StrictModel):
    scheme: str
    K: int
    C: int
    K_C: int
    L: int
    P_s_dBW: float
    N0_dBm: float
    alpha: float
    R_over_r0: float
    p_loc: float
    trials: int
    failures: int
    q_hat: float
    ci95_lo: float
    ci95_hi: float
    chernoff: float
    nsnr: float
    K_eff: int
    seed: int


class FailprobRequest(StrictModel):
    scheme: str = "aircomp_pc"
    config: ExperimentModel = Field(default_factory=ExperimentModel)
    trials: int | None = None
    seed: int | None = None
    threads: int | None = None


class FailprobResponse(StrictModel):
    record: RecordModel


class ManifestModel(StrictModel):
    tool: str
    version: str
    kind: str
    preset: str | None = None
    master_seed: int
    trials: int | None = None
    config_sha256: str
    provenance: dict[str, str] = {}
    config: dict
    columns: list[str] = []


class SweepRequest(StrictModel):
    preset: str | None = None
    schemes: list[str] | None = None
    axis: str | None = None
    values: list[float] | None = None
    config: ExperimentModel | None = None
    trials: int | None = None
    seed: int | None = None
    threads: int = 1


class SweepResponse(StrictModel):
    manifest: ManifestModel
    records: list[RecordModel]


class RelayBenchRequest(StrictModel):
    C: int = 3
    L: int = 1
    instances: int = 1000
    seed: int = 0
    cell: CellModel = Field(default_factory=CellModel)


class RelayBenchRow(StrictModel):
    selector: str
    mean_objective: float
    frac_optimal: float
    mean_gap_to_exhaustive: float
    max_gap_to_exhaustive: float


class RelayBenchResponse(StrictModel):
    instances: int
    rows: list[RelayBenchRow]
    sandwich_violations: int


class RoundMetricsModel(StrictModel):
    round: int
    scheme: str
    train_loss: float
    test_acc: float
    mean_p_loc: float
    failure_fraction: float


class TrainRequest(StrictModel):
    preset: str | None = None
    schemes: list[str] | None = None
    seeds: list[int] | None = None
    config: ExperimentModel | None = None
    include_metrics: bool = True


class TrainRunModel(StrictModel):
    scheme: str
    seed: int
    rounds: int
    final_test_accuracy: float
    final_train_loss: float
    metrics: list[RoundMetricsModel] = []


class TrainResponse(StrictModel):
    manifest: ManifestModel
    runs: list[TrainRunModel]


class ValidateRequest(StrictModel):
    seed: int = 0


class CheckModel(StrictModel):
    name: str
    passed: bool
    detail: str


class ValidateResponse(StrictModel):
    all_passed: bool
    results: list[CheckModel]
