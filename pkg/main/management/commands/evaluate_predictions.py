"""
Команда оценки предсказаний против корпуса прогона.

    python manage.py evaluate_predictions runs/fixture-2018 preds.jsonl --mode both
"""
from django.core.management.base import BaseCommand, CommandError

from ...exceptions import ConfigError, EvaluationError
from ...schemas.eval_schemas import MatchMode
from ...services import pipeline_service


class Command(BaseCommand):
    help = "Считает strict / lenient micro F1 и пишет reports/eval_<mode>.csv|json"

    def add_arguments(self, parser):
        parser.add_argument("run_dir")
        parser.add_argument("predictions", help="JSON-Lines или BIO файл предсказаний")
        parser.add_argument("--mode", choices=["strict", "lenient", "both"], default="both")

    def handle(self, *args, **options):
        modes = [MatchMode.STRICT, MatchMode.LENIENT] if options["mode"] == "both" else [MatchMode(options["mode"])]
        for mode in modes:
            try:
                report = pipeline_service.evaluate_predictions(options["run_dir"], options["predictions"], mode)
            except ConfigError as e:
                raise CommandError(str(e), returncode=2)
            except EvaluationError as e:
                raise CommandError(str(e), returncode=3)
            micro = report.micro
            self.stdout.write(
                f"{mode.value}: P={micro.precision:.4f} R={micro.recall:.4f} F1={micro.f1:.4f} "
                f"(tp={micro.tp} fp={micro.fp} fn={micro.fn})"
            )
