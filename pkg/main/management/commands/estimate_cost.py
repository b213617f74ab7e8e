"""
Команда оценки стоимости инференса.

Без директории прогона печатает только FLOPs; с ней строит регрессию по
задержкам weak-label этапа и проецирует GPU-время.
"""
from django.core.management.base import BaseCommand, CommandError

from ...exceptions import CostModelError
from ...repository.run_directory import RunDirectory
from ...schemas.cost_schemas import DecoderCostSpec
from ...services.cost_service import ENCODER_FLOPS_PER_SENTENCE, TARGET_NOTES, CostService, render_summary
from ...services.postprocessing_service import read_weak_label_set


class Command(BaseCommand):
    help = "FLOPs декодера против энкодера и проекция GPU-времени"

    def add_arguments(self, parser):
        preset = DecoderCostSpec.llama2_13b()
        parser.add_argument("--run-dir", dest="run_dir")
        parser.add_argument("--n-params", dest="n_params", type=int, default=preset.n_params)
        parser.add_argument("--n-layer", dest="n_layer", type=int, default=preset.n_layer)
        parser.add_argument("--n-ctx", dest="n_ctx", type=int, default=preset.n_ctx)
        parser.add_argument("--d-attn", dest="d_attn", type=int, default=preset.d_attn)
        parser.add_argument("--n-tokens-out", dest="n_tokens_out", type=int, default=preset.n_tokens_out)
        parser.add_argument("--target-notes", dest="target_notes", type=int, default=TARGET_NOTES)
        parser.add_argument("--encoder-flops", dest="encoder_flops", type=int, default=ENCODER_FLOPS_PER_SENTENCE)
        parser.add_argument("--seed", type=int, default=0)

    def handle(self, *args, **options):
        spec = DecoderCostSpec(
            n_params=options["n_params"], n_layer=options["n_layer"], n_ctx=options["n_ctx"],
            d_attn=options["d_attn"], n_tokens_out=options["n_tokens_out"],
        )
        latencies = []
        if options.get("run_dir"):
            directory = RunDirectory(options["run_dir"])
            if not directory.weak_labels_path.exists():
                raise CommandError(f"В {directory.root} нет weak разметки", returncode=2)
            weak = read_weak_label_set(directory.weak_labels_path)
            latencies = [(r.note_id, r.latency) for r in weak.results]

        try:
            report = CostService.build_report(
                spec, latencies, target_notes=options["target_notes"],
                seed=options["seed"], encoder_flops=options["encoder_flops"],
            )
        except CostModelError as e:
            raise CommandError(str(e), returncode=3)

        for line in render_summary(report):
            self.stdout.write(line)
