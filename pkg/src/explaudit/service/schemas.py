"""Request/response models for the audit service.

Every endpoint works on server-local artifact paths: requests name input
files and an output directory, responses return the paths written plus the
headline numbers, so clients stay thin and large arrays never cross the
wire.
"""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator


class ColumnSpec(BaseModel):
    name: str
    kind: str
    role: str = "feature"


class DatasetSource(BaseModel):
    """Where the raw data comes from: a bundled fixture or a CSV file."""

    fixture: str | None = None
    rows: int | None = None
    missing_rate: float = 0.0
    csv: str | None = None
    schema_columns: list[ColumnSpec] | None = None
    sensitive: list[str] | None = None
    target_positive: str | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _one_source(self):
        if (self.fixture is None) == (self.csv is None):
            raise ValueError("exactly one of 'fixture' or 'csv' is required")
        if self.csv is not None and not self.schema_columns:
            raise ValueError("'csv' sources need 'schema_columns'")
        if self.csv is not None and not self.sensitive:
            raise ValueError("'csv' sources need 'sensitive' specs")
        return self


class PrepRequest(BaseModel):
    source: DatasetSource
    out_dir: str
    split_seed: int = 0


class SplitSizes(BaseModel):
    target_train: int
    aux_attack_train: int
    aux_attack_test: int


class PrepResponse(BaseModel):
    bundle: str
    n_rows: int
    n_features: int
    n_dropped_rows: int
    sizes: SplitSizes
    sensitive_attributes: list[str]
    screening: list[dict]


class TrainRequest(BaseModel):
    bundle: str
    out_dir: str
    architecture: str = "default"
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 48
    l2_lambda: float = 0.0
    seed: int = 0


class TrainResponse(BaseModel):
    model_path: str
    train_accuracy: float
    test_accuracy: float
    train_seconds: float
    final_loss: float
    parameter_count: int


class DpTrainRequest(BaseModel):
    bundle: str
    out_dir: str
    architecture: str = "default"
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 48
    seed: int = 0
    l2_clip: float = 1.0
    delta: float = 1e-6
    noise_multiplier: float | None = None
    target_epsilon: float | None = Field(
        default=None, description="calibrate the noise multiplier to this budget"
    )

    @model_validator(mode="after")
    def _one_budget(self):
        if (self.noise_multiplier is None) == (self.target_epsilon is None):
            raise ValueError(
                "exactly one of 'noise_multiplier' or 'target_epsilon' is required"
            )
        return self


class PrivacySpentModel(BaseModel):
    epsilon: float
    delta: float
    steps: int
    sampling_rate: float
    noise_multiplier: float
    non_private: bool


class DpTrainResponse(BaseModel):
    model_path: str
    train_accuracy: float
    test_accuracy: float
    train_seconds: float
    privacy: PrivacySpentModel


class SynthRequest(BaseModel):
    bundle: str
    out_dir: str
    n_rows: int | None = None
    seed: int = 0


class SynthResponse(BaseModel):
    synthetic_csv: str
    diagnostics_json: str
    data_validity: float
    data_structure: float
    n_rows: int
    ms_per_record: float


class ExplainRequest(BaseModel):
    bundle: str
    model_path: str
    out_dir: str
    method: str = "ig"
    split: str = Field(
        default="aux_all",
        description="target_train | aux_attack_train | aux_attack_test | aux_all",
    )
    seed: int = 0
    params: dict = Field(default_factory=dict)


class ExplainResponse(BaseModel):
    explanation_csv: str
    sidecar_json: str
    method: str
    n_records: int
    n_features: int
    ms_per_record: float


class PerturbRequest(BaseModel):
    explanation_csv: str
    out_dir: str
    family: str = "gaussian"
    calibration: str = "dp"
    epsilon: float = 1.0
    delta: float = 1e-6
    random_scale_low: float = 0.5
    random_scale_high: float = 1.5
    seed: int = 0


class PerturbResponse(BaseModel):
    explanation_csv: str
    sidecar_json: str
    variant: str
    ms_per_record: float


class AttackRequest(BaseModel):
    explanation_csv: str
    bundle: str
    attribute: str
    out_dir: str | None = None
    repetitions: int = 5


class AttackMetricsModel(BaseModel):
    precision: float
    recall: float
    f1: float
    attack_success: float


class AttackResponse(BaseModel):
    attribute: str
    repetitions: int
    mean: AttackMetricsModel
    random_guess: float
    coin_guess: float
    per_repetition: list[dict]
    report_json: str | None = None


class MetricsRequest(BaseModel):
    explanation_csv: str
    bundle: str
    model_path: str
    out_dir: str | None = None
    params: dict = Field(default_factory=dict)
    seed: int = 0


class MetricsResponse(BaseModel):
    method: str
    faithfulness_correlation: float
    faithfulness_estimate: float
    sufficiency: float
    n_records: int
    report_json: str | None = None


class RunRequest(BaseModel):
    config_path: str | None = None
    config: dict | None = None
    out_dir: str | None = None

    @model_validator(mode="after")
    def _one_config(self):
        if (self.config_path is None) == (self.config is None):
            raise ValueError("exactly one of 'config_path' or 'config' is required")
        return self


class RunResponse(BaseModel):
    report_csv: str
    report_json: str
    summary_csv: str
    n_cells: int
    n_failed: int
    failed_keys: list[str]
    seconds: float


class SummarizeRequest(BaseModel):
    report_json: str
    out_dir: str | None = None


class SummarizeResponse(BaseModel):
    summary_csv: str
    rows: list[dict]


class HealthResponse(BaseModel):
    status: str
    version: str
