import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..models.schemas import FeatureConfig, ModelConfig, PipelineConfig, TrainingConfig

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """
    Application settings and configuration
    """

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    LOG_LEVEL: str = "INFO"
    CONFIG_PATH: Optional[str] = None

    # Serving; unset falls back to paths.model_path of the config file
    MODEL_PATH: Optional[str] = None
    HOST: str = "127.0.0.1"
    PORT: int = 8000
    MAX_UPLOAD_SIZE: int = 64 * 1024 * 1024

    WORKERS: int = 1


settings = Settings()


class ConfigError(ValueError):
    pass


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data_dir: str = "data"
    features_path: str = "data/features.csv"
    model_path: str = "models/model.json"
    reports_dir: str = "reports"


class AppConfig(BaseModel):
    """
    Full pipeline configuration: JSON file values overridden by CLI flags.
    """

    model_config = ConfigDict(extra="forbid")

    feature: FeatureConfig = Field(default_factory=FeatureConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    def pipeline_config(self) -> PipelineConfig:
        """
        Pipeline settings with the shared feature config.
        """
        return self.pipeline.model_copy(update={"feature": self.feature})


def _set_dotted(target: Dict[str, Any], dotted_key: str, value: Any) -> None:
    node = target
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def load_app_config(
    path: Union[str, Path, None] = None, overrides: Optional[Dict[str, Any]] = None
) -> AppConfig:
    """
    Build the configuration. Precedence: overrides > file > defaults.

    Args:
        path: optional JSON config file
        overrides: dotted keys such as ``"training.epochs"``; None values are skipped

    Returns:
        Validated configuration
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"Config file {path} must contain a JSON object")

    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(raw, key, value)

    try:
        return AppConfig.model_validate(raw)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        raise ConfigError(f"Invalid configuration: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}") from e
