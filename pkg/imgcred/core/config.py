import json
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from imgcred.core.errors import UsageError
from imgcred.schemas.boost_schemas import EpsilonPolicy, InitStrategy, VoteRange
from imgcred.schemas.metrics_schemas import Arm
from imgcred.schemas.model_schemas import FeatureLayer
from imgcred.schemas.pattern_schemas import ScoreMethod


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrainConfig(_Section):
    # (rate, epochs) pairs; the source training protocol steps 0.01 -> 0.001 -> 0.0001
    learning_rate_schedule: list[tuple[float, int]] = [(0.01, 10), (0.001, 5)]
    batch_size: int = Field(default=32, ge=1)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=5e-4, ge=0.0)
    dropout: bool = True
    seed: int = 0
    last_layer_lr_multiplier: float = Field(default=1.0, gt=0.0)
    # full-batch logistic regression
    max_epochs: int = Field(default=2000, ge=0)
    tolerance: float = Field(default=1e-8, gt=0.0)
    augment_flips: bool = False

    @field_validator("learning_rate_schedule")
    @classmethod
    def check_schedule(cls, schedule):
        for rate, epochs in schedule:
            if rate <= 0:
                raise ValueError(f"learning rate must be > 0, got {rate}")
            if epochs < 1:
                raise ValueError(f"epochs must be >= 1, got {epochs}")
        return schedule

    @property
    def total_epochs(self) -> int:
        return sum(epochs for _, epochs in self.learning_rate_schedule)


class BoostConfig(_Section):
    iterations: int = Field(default=5, ge=1)
    init_strategy: InitStrategy = InitStrategy.FINETUNE_BASED
    epsilon_floor: float = Field(default=1e-6, gt=0.0, lt=0.5)
    epsilon_policy_on_half: EpsilonPolicy = EpsilonPolicy.HALT_KEEP_PREVIOUS
    epsilon_clamp: float = Field(default=0.499, gt=0.0, lt=0.5)
    vote_range: VoteRange = VoteRange.ALL_ITERATIONS


class ShiftSpec(_Section):
    aux_size: int = Field(default=2000, ge=1)
    target_train_size: int = Field(default=100, ge=1)
    test_size: int = Field(default=1000, ge=1)
    dim: int = Field(default=20, ge=2)
    separation: float = Field(default=2.0, gt=0.0)
    # explicit target class-conditional Gaussians; defaults are +-separation/2 on axis 0, identity covariance
    class_means: Optional[list[list[float]]] = None
    class_covariances: Optional[list[list[list[float]]]] = None
    mean_shift: Optional[list[float]] = None
    mean_shift_sigma: float = 1.0
    rotation_degrees: float = 25.0
    aux_label_noise_rate: float = Field(default=0.2, ge=0.0, lt=0.5)
    seed: int = 0
    render_images: bool = False
    render_text: bool = True
    image_size: int = Field(default=16, ge=4)

    @model_validator(mode="after")
    def check_shapes(self):
        if self.class_means is not None:
            if len(self.class_means) != 2 or any(len(mu) != self.dim for mu in self.class_means):
                raise ValueError(f"class_means must be two vectors of length {self.dim}")
        if self.class_covariances is not None:
            if len(self.class_covariances) != 2:
                raise ValueError("class_covariances needs one matrix per class")
            for cov in self.class_covariances:
                if len(cov) != self.dim or any(len(row) != self.dim for row in cov):
                    raise ValueError(f"covariances must be {self.dim}x{self.dim}")
        if self.mean_shift is not None and len(self.mean_shift) != self.dim:
            raise ValueError(f"mean_shift must have length {self.dim}")
        return self


class BovwConfig(_Section):
    k: int = Field(default=256, ge=1)
    grid_step: int = Field(default=8, ge=1)
    patch: int = Field(default=16, ge=4)
    max_iters: int = Field(default=100, ge=1)

    @field_validator("patch")
    @classmethod
    def patch_splits_into_cells(cls, value):
        if value % 4:
            raise ValueError("patch must be a multiple of 4 (4x4 spatial cells)")
        return value


class DedupConfig(_Section):
    planes: int = Field(default=64, ge=1)
    threshold: int = Field(default=0, ge=0)
    min_side: int = Field(default=32, ge=1)
    max_aspect: float = Field(default=4.0, ge=1.0)

    @model_validator(mode="after")
    def threshold_in_range(self):
        if self.threshold > self.planes:
            raise ValueError("threshold must lie in [0, planes]")
        return self


class PatternConfig(_Section):
    max_n: int = Field(default=3, ge=1, le=3)
    method: ScoreMethod = ScoreMethod.CHI2
    top_k: int = Field(default=50, ge=1)
    min_df: int = Field(default=2, ge=1)


class NetworkConfig(_Section):
    shape: Literal["desk", "alexnet"] = "desk"
    input_size: int = Field(default=32, ge=4)
    channels: int = Field(default=1, ge=1)
    fc_dim: int = Field(default=64, ge=1)
    init_std: float = Field(default=0.01, gt=0.0)


class ComparisonConfig(_Section):
    arms: list[Arm] = list(Arm)
    base_learner: Literal["logreg", "convnet"] = "logreg"
    feature_layer: FeatureLayer = FeatureLayer.FC6
    layers: list[FeatureLayer] = [FeatureLayer.C5_POOLED, FeatureLayer.FC6]
    max_workers: int = Field(default=1, ge=1)


class PathsConfig(_Section):
    manifest: Optional[Path] = None
    lexicons: Optional[Path] = None
    patterns: Optional[Path] = None
    model: Optional[Path] = None
    external_model: Optional[Path] = None
    output_dir: Optional[Path] = None


class RunConfig(BaseSettings):
    model_config = SettingsConfigDict(extra="forbid")

    paths: PathsConfig = PathsConfig()
    train: TrainConfig = TrainConfig()
    boost: BoostConfig = BoostConfig()
    shift: ShiftSpec = ShiftSpec()
    bovw: BovwConfig = BovwConfig()
    dedup: DedupConfig = DedupConfig()
    patterns: PatternConfig = PatternConfig()
    network: NetworkConfig = NetworkConfig()
    comparison: ComparisonConfig = ComparisonConfig()
    seed: int = 0

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # environment variables are never consulted
        return (init_settings,)


def _deep_merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        elif isinstance(value, dict):
            merged[key] = _deep_merge({}, value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: Optional[Path] = None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Defaults < config file < overrides (command-line flags)."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(values, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
    values = _deep_merge(values, overrides or {})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e}")


def dump_run_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
