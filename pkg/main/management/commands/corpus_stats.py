"""
Команда сводной статистики корпуса.

    python manage.py corpus_stats main/fixtures/corpus_2018 --benchmark 2018 --output stats.csv
"""
from django.core.management.base import BaseCommand, CommandError

from ...benchmarks import get_task_schema
from ...exceptions import ConfigError, CorpusParseError
from ...services.corpus_service import CorpusService, stats_rows, write_stats_csv


class Command(BaseCommand):
    help = "Печатает статистику аннотированного корпуса и пишет CSV"

    def add_arguments(self, parser):
        parser.add_argument("directory", help="Директория с парами <id>.txt / <id>.ann")
        parser.add_argument("--benchmark", default="2018", choices=["2012", "2014", "2018"])
        parser.add_argument("--output", help="Путь к CSV отчёту")

    def handle(self, *args, **options):
        try:
            corpus = CorpusService.load_corpus(options["directory"], get_task_schema(options["benchmark"]))
            stats = CorpusService.corpus_stats(corpus)
        except ConfigError as e:
            raise CommandError(str(e), returncode=2)
        except CorpusParseError as e:
            raise CommandError(str(e), returncode=3)

        for label, value in stats_rows(stats):
            self.stdout.write(f"{label}: {value}")
        if options.get("output"):
            write_stats_csv({"gold": stats}, options["output"])
            self.stdout.write(self.style.SUCCESS(f"CSV записан: {options['output']}"))
