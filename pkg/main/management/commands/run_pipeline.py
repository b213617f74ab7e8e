"""
Команда полного прогона пайплайна.

    python manage.py run_pipeline --config run.toml --n-s 3 --mock echo-gold
"""
from django.core.management.base import BaseCommand, CommandError

from ...exceptions import ConfigError
from ...services import config_service, pipeline_service


class Command(BaseCommand):
    help = "Запускает все этапы пайплайна weak supervision по TOML конфигурации"

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="Путь к TOML конфигурации")
        parser.add_argument("--n-s", dest="n_s", type=int, help="Размер gold-подмножества")
        parser.add_argument("--seed", type=int, help="Зерно отбора примеров и разбиений")
        parser.add_argument("--gateway-url", dest="gateway_url", help="Адрес completions-сервера")
        parser.add_argument(
            "--mock",
            choices=["echo-gold", "fixed", "file-scripted", "fault-inject"],
            help="Mock-бэкенд вместо сервера",
        )
        parser.add_argument("--parallelism", type=int, help="Максимум одновременных запросов")
        parser.add_argument("--run-dir", dest="run_dir", help="Директория прогона")

    def handle(self, *args, **options):
        overrides = {key: options.get(key) for key in ("n_s", "seed", "gateway_url", "mock", "parallelism", "run_dir")}
        try:
            config = config_service.load_config(options["config"], overrides)
            report = pipeline_service.run_pipeline(config)
        except ConfigError as e:
            raise CommandError(str(e), returncode=2)

        for stage in report.stages:
            self.stdout.write(f"{stage.name:<13} {stage.status.value:<10} {stage.duration_s:.2f} s")
        for flag in report.flags:
            self.stdout.write(self.style.WARNING(flag))

        failed = report.failed_stage
        if failed is not None:
            raise CommandError(failed.error, returncode=3)
        self.stdout.write(self.style.SUCCESS(f"Прогон завершён: {report.run_dir}"))
