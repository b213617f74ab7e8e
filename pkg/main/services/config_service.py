# main/services/config_service.py
"""
Загрузка и проверка конфигурации прогона.

Порядок применения: TOML файл, затем LLM_GATEWAY_URL из окружения
(только если mock не задан), затем флаги командной строки.
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Mapping, Optional

import tomli
import tomli_w
from django.conf import settings
from pydantic import ValidationError

from ..benchmarks import get_task_schema
from ..exceptions import ConfigError
from ..schemas.pipeline_schemas import RunConfig

logger = logging.getLogger(__name__)

SNAPSHOT_NAME = "config.snapshot.toml"
HASH_NAME = "config.sha256"

# Пути, которые разрешаются относительно директории файла конфигурации
_PATH_KEYS = (
    ("corpus", "train_dir"),
    ("corpus", "test_dir"),
    ("gateway", "mock_script"),
    ("gateway", "cache_dir"),
    ("export", "vocab_path"),
)


def _resolve_paths(data: dict, base: Path) -> None:
    for section, key in _PATH_KEYS:
        value = data.get(section, {}).get(key)
        if value:
            data[section][key] = str((base / value).resolve())
    if data.get("run_dir"):
        data["run_dir"] = str((base / data["run_dir"]).resolve())


def _apply_overrides(data: dict, overrides: Mapping[str, object]) -> None:
    gateway = data.setdefault("gateway", {})
    selection = data.setdefault("selection", {})

    if overrides.get("n_s") is not None:
        selection["n_s"] = overrides["n_s"]
    if overrides.get("seed") is not None:
        selection["seed"] = overrides["seed"]
    if overrides.get("parallelism") is not None:
        gateway["parallelism"] = overrides["parallelism"]
    if overrides.get("gateway_url"):
        gateway["url"] = overrides["gateway_url"]
        gateway.pop("mock", None)
    if overrides.get("mock"):
        gateway["mock"] = str(overrides["mock"]).replace("-", "_")
        gateway.pop("url", None)
    if overrides.get("run_dir"):
        data["run_dir"] = str(Path(overrides["run_dir"]).resolve())


def build_config(data: dict) -> RunConfig:
    """
    Проверяет словарь конфигурации.

    Raises:
        ConfigError: Ошибка валидации или неизвестный бенчмарк
    """
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Некорректная конфигурация: {e}") from e
    get_task_schema(config.task.benchmark_id)
    return config


def load_config(path, overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """
    Читает TOML конфигурацию и применяет переопределения.

    Args:
        path: Путь к TOML файлу
        overrides: n_s, seed, gateway_url, mock, parallelism, run_dir

    Returns:
        RunConfig: Проверенная конфигурация с абсолютными путями

    Raises:
        ConfigError: Файл не найден, битый TOML или ошибка валидации
    """
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomli.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"Файл конфигурации не найден: {path}") from None
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"Битый TOML в {path}: {e}") from e

    _resolve_paths(data, path.resolve().parent)

    gateway = data.setdefault("gateway", {})
    env_url = getattr(settings, "LLM_GATEWAY_URL", "")
    if env_url and not gateway.get("mock"):
        logger.info("Адрес сервера генерации взят из LLM_GATEWAY_URL")
        gateway["url"] = env_url
    gateway.setdefault("timeout", float(getattr(settings, "LLM_GATEWAY_TIMEOUT", 120.0)))

    _apply_overrides(data, overrides or {})
    if not data.get("run_dir"):
        data["run_dir"] = str(Path(settings.WEAKLABEL_RUNS_DIR) / path.stem)
    return build_config(data)


def config_hash(config: RunConfig) -> str:
    """SHA-256 канонического JSON конфигурации (без run_dir)."""
    payload = json.dumps(config.snapshot_data(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_snapshot(config: RunConfig, run_dir) -> str:
    """Пишет config.snapshot.toml и config.sha256, возвращает хэш."""
    run_dir = Path(run_dir)
    digest = config_hash(config)
    (run_dir / SNAPSHOT_NAME).write_text(tomli_w.dumps(config.snapshot_data()), encoding="utf-8")
    (run_dir / HASH_NAME).write_text(digest + "\n", encoding="utf-8")
    return digest


def load_snapshot(run_dir) -> RunConfig:
    """
    Восстанавливает конфигурацию прогона из снапшота.

    Raises:
        ConfigError: Снапшот отсутствует или его хэш не совпадает с config.sha256
    """
    run_dir = Path(run_dir)
    snapshot = run_dir / SNAPSHOT_NAME
    if not snapshot.exists():
        raise ConfigError(f"В {run_dir} нет {SNAPSHOT_NAME}: продолжить прогон нельзя")

    data = tomli.loads(snapshot.read_text(encoding="utf-8"))
    data["run_dir"] = str(run_dir.resolve())
    config = build_config(data)

    stored = (run_dir / HASH_NAME).read_text(encoding="utf-8").strip() if (run_dir / HASH_NAME).exists() else ""
    if stored != config_hash(config):
        raise ConfigError(f"Снапшот конфигурации в {run_dir} изменён после запуска (хэш не совпадает)")
    return config


def check_drift(run_dir, config_path) -> None:
    """
    Raises:
        ConfigError: Конфигурация в config_path отличается от снапшота прогона
    """
    snapshot = load_snapshot(run_dir)
    current = load_config(config_path, {"run_dir": str(run_dir)})
    if config_hash(current) != config_hash(snapshot):
        raise ConfigError(f"Конфигурация {config_path} отличается от снапшота прогона {run_dir}")
