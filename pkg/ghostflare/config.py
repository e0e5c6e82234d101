import json
import logging
import os
from pathlib import Path
from typing import Optional, Type, TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from ghostflare.exceptions import ConfigError

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


class Config:
    """
    Process-wide settings resolved from the environment (and a `.env` file).

    Attributes:
        verbose (bool): Emit debug logging.
        seed (Optional[int]): Master seed from GHOSTFLARE_SEED, when set.
        threads (int): Default worker count for parallel evaluation.
        out_dir (str): Default directory for generated artifacts.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        load_dotenv()
        self.verbose = _env_flag("GHOSTFLARE_VERBOSE")
        self.seed = _env_int("GHOSTFLARE_SEED", None)
        self.threads = _env_int("GHOSTFLARE_THREADS", 1)
        self.out_dir = os.getenv("GHOSTFLARE_OUT_DIR", "out")

    def resolve_seed(self, seed: Optional[int], fallback: int = 0) -> int:
        """--seed, then GHOSTFLARE_SEED, then `fallback` (usually a config file value)."""
        if seed is not None:
            return seed
        return fallback if self.seed is None else self.seed

    def resolve_threads(self, threads: Optional[int]) -> int:
        threads = self.threads if threads is None else threads
        if threads < 1:
            raise ConfigError(f"--threads must be >= 1 (got {threads})")
        return threads

    def resolve_out_dir(self, out_dir: Optional[str]) -> Path:
        path = Path(out_dir or self.out_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be an integer (got {raw!r})") from exc


def _env_flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() in ("1", "true", "yes", "on")


def load_model(model_cls: Type[ModelT], path) -> ModelT:
    """Load and validate a pydantic model from a JSON file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    try:
        return model_cls.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"Invalid {model_cls.__name__} in {path}: {exc}") from exc


def save_model(model: BaseModel, path) -> None:
    Path(path).write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")


def load_section(model_cls: Type[ModelT], path, section: str) -> ModelT:
    """Load one section of a combined config file; a missing section yields defaults."""
    if path is None:
        return model_cls()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    try:
        return model_cls.model_validate(data.get(section, {}))
    except ValidationError as exc:
        raise ConfigError(f"Invalid '{section}' section in {path}: {exc}") from exc
