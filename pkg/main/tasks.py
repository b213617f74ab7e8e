"""
Celery задачи для фоновых прогонов пайплайна.

Содержит задачи для:
- Полного прогона по TOML конфигурации
- Продолжения прерванного прогона
"""
import logging

from celery import shared_task

from .services import config_service, pipeline_service

logger = logging.getLogger(__name__)


@shared_task
def run_pipeline_task(config_path: str, overrides: dict = None):
    """
    Полный прогон пайплайна в фоне.

    Args:
        config_path: Путь к TOML конфигурации
        overrides: Переопределения (n_s, seed, gateway_url, mock, parallelism, run_dir)

    Returns:
        dict: RunReport в JSON-виде (результат задачи сериализуется в json)
    """
    logger.info(f"--- ЗАПУСК ПАЙПЛАЙНА: {config_path} ---")
    config = config_service.load_config(config_path, overrides or {})
    report = pipeline_service.run_pipeline(config)
    if report.failed_stage is not None:
        logger.error(f"Прогон {report.run_dir} остановлен: {report.failed_stage.error}")
    return report.model_dump(mode="json")


@shared_task
def resume_run_task(run_dir: str):
    """
    Продолжает прогон с первого незавершённого этапа.

    Returns:
        dict: RunReport в JSON-виде
    """
    logger.info(f"--- ПРОДОЛЖЕНИЕ ПРОГОНА: {run_dir} ---")
    report = pipeline_service.resume(run_dir)
    return report.model_dump(mode="json")
