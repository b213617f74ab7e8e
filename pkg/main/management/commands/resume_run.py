"""
Команда продолжения прерванного прогона.

    python manage.py resume_run runs/fixture-2018 [--config run.toml]
"""
from django.core.management.base import BaseCommand, CommandError

from ...exceptions import ConfigError
from ...services import pipeline_service


class Command(BaseCommand):
    help = "Продолжает прогон с первого незавершённого этапа"

    def add_arguments(self, parser):
        parser.add_argument("run_dir", help="Директория прогона")
        parser.add_argument("--config", help="Проверить, что конфигурация не изменилась")

    def handle(self, *args, **options):
        try:
            report = pipeline_service.resume(options["run_dir"], options.get("config"))
        except ConfigError as e:
            raise CommandError(str(e), returncode=2)

        for stage in report.stages:
            self.stdout.write(f"{stage.name:<13} {stage.status.value:<10} {stage.duration_s:.2f} s")

        failed = report.failed_stage
        if failed is not None:
            raise CommandError(failed.error, returncode=3)
        self.stdout.write(self.style.SUCCESS(f"Прогон завершён: {report.run_dir}"))
