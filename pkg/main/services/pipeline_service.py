# main/services/pipeline_service.py
"""
Оркестрация пайплайна weak supervision.

Этапы: ingest -> select -> sft-export -> weak-label -> stats -> train-export -> cost.
Каждый этап читает входы из директории прогона и пишет туда свои
артефакты, поэтому прогон можно продолжить с любого незавершённого этапа.
"""
import json
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from ..benchmarks import get_task_schema
from ..exceptions import ConfigError, StageError
from ..repository.run_directory import RunDirectory
from ..schemas.cost_schemas import DecoderCostSpec
from ..schemas.corpus_schemas import Note
from ..schemas.eval_schemas import EvalReport, MatchMode
from ..schemas.gateway_schemas import GenerationRequest, MockMode, MockScript
from ..schemas.pipeline_schemas import RunConfig, RunReport, StageReport, StageStatus
from ..schemas.prompt_schemas import PromptTemplate
from .config_service import check_drift, config_hash, load_snapshot, write_snapshot
from .corpus_service import CorpusService, read_corpus_jsonl, write_corpus_jsonl, write_stats_csv
from .cost_service import CostService, cost_report_json, write_cost_report
from .evaluation_service import EvaluationService, gold_by_note, load_predictions, write_eval_report
from .export_service import ExportService
from .llm_service import LLMGateway, build_gold_lookup
from .postprocessing_service import (
    PostprocessingService,
    read_weak_label_set,
    write_weak_label_set,
)
from .prompt_service import PromptService, read_template, write_template
from .subset_service import SubsetService, read_selection_manifest, write_selection_manifest
from .tokenizer_service import WordPieceVocab

logger = logging.getLogger(__name__)

STAGES = ("ingest", "select", "sft-export", "weak-label", "stats", "train-export", "cost")

# Этап перезапускается при resume, если нет его маркера или перезапущена зависимость
DEPENDENCIES: Dict[str, Tuple[str, ...]] = {
    "ingest": (),
    "select": ("ingest",),
    "sft-export": ("select",),
    "weak-label": ("sft-export", "select"),
    "stats": ("weak-label", "ingest"),
    "train-export": ("weak-label", "select"),
    "cost": ("weak-label",),
}


class PipelineService:
    """
    Выполняет этапы пайплайна для одной конфигурации и директории прогона.

    Attributes:
        config: Конфигурация прогона
        run_dir: Репозиторий директории прогона
        gateway_factory: Фабрика LLMGateway (подменяется в тестах)
    """

    def __init__(self, config: RunConfig, run_dir: RunDirectory,
                 gateway_factory: Optional[Callable[[RunConfig, List[Note], RunDirectory], LLMGateway]] = None):
        self.config = config
        self.run_dir = run_dir
        self.schema = get_task_schema(config.task.benchmark_id)
        self.gateway_factory = gateway_factory or build_gateway
        self._handlers = {
            "ingest": self._ingest,
            "select": self._select,
            "sft-export": self._sft_export,
            "weak-label": self._weak_label,
            "stats": self._stats,
            "train-export": self._train_export,
            "cost": self._cost,
        }

    # --- чтение промежуточных артефактов ---

    def _train_corpus(self) -> List[Note]:
        return read_corpus_jsonl(self.run_dir.train_corpus_path)

    def _selection(self):
        return read_selection_manifest(self.run_dir.selection_path)

    def _weak_set(self):
        return read_weak_label_set(self.run_dir.weak_labels_path, self.run_dir.weak_summary_path)

    # --- этапы ---

    def _ingest(self) -> dict:
        train = CorpusService.load_corpus(self.config.corpus.train_dir, self.schema)
        write_corpus_jsonl(train, self.run_dir.train_corpus_path)
        summary = {
            "train_notes": len(train),
            "train_sentences": sum(len(n.sentences) for n in train),
            "train_entities": sum(len(n.gold_entities) for n in train),
            "crossing_entities": sum(len(n.crossing_entities()) for n in train),
        }
        if self.config.corpus.test_dir:
            test = CorpusService.load_corpus(self.config.corpus.test_dir, self.schema)
            write_corpus_jsonl(test, self.run_dir.test_corpus_path)
            summary["test_notes"] = len(test)
        return summary

    def _select(self) -> dict:
        selection = SubsetService.select_gold_subset(self._train_corpus(), self.config.selection.n_s)
        write_selection_manifest(selection, self.run_dir.selection_path)
        return json.loads(self.run_dir.selection_path.read_text(encoding="utf-8"))

    def _sft_export(self) -> dict:
        corpus = {n.note_id: n for n in self._train_corpus()}
        selection = self._selection()
        gold_notes = [corpus[i] for i in selection.gold_ids]

        examples = PromptService.sample_few_shot(
            gold_notes, self.config.task.few_shot_k, self.config.selection.seed,
            require_entities=self.config.task.require_entities,
        )
        template = PromptTemplate.for_task(self.schema, examples)
        write_template(template, self.run_dir.sft_dir)

        manifest = PromptService.export_sft_dataset(gold_notes, template, self.run_dir.sft_dir / "sft.jsonl")
        self.run_dir.write_json(self.run_dir.sft_dir / "manifest.json", manifest.model_dump(mode="json"))
        return {"records": manifest.record_count, "examples": len(examples), "template_digest": manifest.template_digest}

    def _weak_label(self) -> dict:
        corpus = self._train_corpus()
        notes = {n.note_id: n for n in corpus}
        selection = self._selection()
        template = read_template(self.run_dir.sft_dir)

        items = [(note_id, sentence) for note_id in selection.weak_ids for sentence in notes[note_id].sentences]
        params = GenerationRequest(
            model_id=self.config.gateway.model_id,
            prompt="",
            max_new_tokens=self.config.gateway.max_new_tokens,
            top_k=self.config.gateway.top_k,
        )
        gateway = self.gateway_factory(self.config, corpus, self.run_dir)
        results = gateway.run_batch(
            [sentence.text for _, sentence in items], template, params, self.config.gateway.parallelism
        )

        provenance = {
            "model_id": params.model_id,
            "template_digest": PromptService.template_digest(template),
            "params": {"max_new_tokens": params.max_new_tokens, "top_k": params.top_k, "stop": list(params.stop)},
        }
        weak = PostprocessingService.distill_batch(items, results, self.schema, provenance)
        summary = write_weak_label_set(weak, self.run_dir.weak_labels_path, self.run_dir.weak_summary_path)

        data = summary.model_dump(mode="json")
        if summary.sentences and summary.failed_sentences == summary.sentences:
            logger.warning("Пост-обработка не удалась ни для одного предложения")
            data["flag"] = "all sentences failed"
        return data

    def _stats(self) -> dict:
        corpus = self._train_corpus()
        selection = self._selection()
        sections = {"gold": CorpusService.corpus_stats(corpus)}
        if selection.weak_ids:
            weak_notes = [n for n in corpus if n.note_id in set(selection.weak_ids)]
            sections["weak"] = CorpusService.corpus_stats(weak_notes, self._weak_set())
        write_stats_csv(sections, self.run_dir.reports_dir / "stats.csv")
        return {name: stats.model_dump(mode="json") for name, stats in sections.items()}

    def _train_export(self) -> dict:
        export = self.config.export
        vocab = WordPieceVocab.from_file(export.vocab_path)
        corpus = self._train_corpus()
        selection = self._selection()
        manifest = ExportService.export_stage_datasets(
            corpus, self._weak_set(), selection, self.config.task.benchmark_id, selection.n_s, vocab,
            self.run_dir.export_dir, variant=export.variant, model_label=export.model_label,
            include_failed=export.include_failed, max_tokens=export.max_tokens, seed=self.config.selection.seed,
        )
        ExportService.export_baseline_manifest(
            corpus, selection, self.config.task.benchmark_id, vocab, self.run_dir.export_dir,
            max_tokens=export.max_tokens, seed=self.config.selection.seed,
        )
        return manifest.model_dump(mode="json")

    def _cost(self) -> dict:
        cost = self.config.cost
        spec = DecoderCostSpec(
            n_params=cost.n_params, n_layer=cost.n_layer, n_ctx=cost.n_ctx,
            d_attn=cost.d_attn, n_tokens_out=cost.n_tokens_out,
        )
        latencies = [(r.note_id, r.latency) for r in self._weak_set().results]
        report = CostService.build_report(
            spec, latencies, target_notes=cost.target_notes, sample_sizes=cost.sample_sizes,
            seed=self.config.selection.seed, encoder_flops=cost.encoder_flops,
        )
        write_cost_report(report, self.run_dir.reports_dir / "cost.json")
        return cost_report_json(report)

    # --- описания пропущенных этапов ---

    def _describe(self, stage: str) -> dict:
        artifacts = {
            "select": self.run_dir.selection_path,
            "sft-export": self.run_dir.sft_dir / "manifest.json",
            "weak-label": self.run_dir.weak_summary_path,
            "train-export": self.run_dir.export_dir / "manifest.json",
            "cost": self.run_dir.reports_dir / "cost.json",
        }
        path = artifacts.get(stage)
        data = self.run_dir.read_json(path) if path else None
        if stage == "weak-label" and data:
            return data.get("summary", {})
        return data or {}

    # --- запуск ---

    def run(self, resume: bool = False) -> RunReport:
        """
        Выполняет этапы по порядку.

        Args:
            resume: Пропускать этапы с маркером, если их зависимости не перезапускались

        Returns:
            RunReport: Упавший этап останавливает последующие, отчёт сохраняется
        """
        self.run_dir.ensure_layout()
        digest = config_hash(self.config)
        if not resume:
            for stage in STAGES:
                self.run_dir.clear_marker(stage)
            write_snapshot(self.config, self.run_dir.root)

        report = RunReport(run_dir=str(self.run_dir.root), config_hash=digest)
        rerun = set()
        logger.info(f"Запуск пайплайна в {self.run_dir.root} (resume={resume})")

        for stage in STAGES:
            needs_run = (
                not resume
                or not self.run_dir.is_done(stage)
                or any(dep in rerun for dep in DEPENDENCIES[stage])
            )
            if not needs_run:
                logger.info(f"Этап {stage}: пропущен (есть маркер)")
                report.stages.append(StageReport(name=stage, status=StageStatus.SKIPPED, summary=self._describe(stage)))
                continue

            self.run_dir.clear_marker(stage)
            started = time.perf_counter()
            logger.info(f"Этап {stage}: старт")
            try:
                summary = self._handlers[stage]()
            except Exception as e:
                error = StageError(stage, str(e))
                logger.exception(f"{error}")
                report.stages.append(StageReport(
                    name=stage, status=StageStatus.FAILED,
                    duration_s=time.perf_counter() - started, error=str(error),
                ))
                break
            self.run_dir.mark_done(stage)
            rerun.add(stage)
            duration = time.perf_counter() - started
            logger.info(f"Этап {stage}: завершён за {duration:.2f} с")
            report.stages.append(StageReport(
                name=stage, status=StageStatus.COMPLETED, duration_s=duration, summary=summary,
            ))

        self._fill_sections(report, resume)
        self.run_dir.write_json(self.run_dir.run_report_path, report.model_dump(mode="json"))
        return report

    def _fill_sections(self, report: RunReport, resume: bool) -> None:
        sections = {"select": "selection", "weak-label": "weak_labels", "train-export": "export", "cost": "cost"}
        for stage_report in report.stages:
            field = sections.get(stage_report.name)
            if field and stage_report.status != StageStatus.FAILED:
                setattr(report, field, stage_report.summary)
            if stage_report.summary.get("flag"):
                report.flags.append(f"{stage_report.name}: {stage_report.summary['flag']}")
        if resume:
            previous = self.run_dir.read_json(self.run_dir.run_report_path) or {}
            report.evaluations = previous.get("evaluations", {})


def build_gateway(config: RunConfig, corpus: List[Note], run_dir: RunDirectory) -> LLMGateway:
    """Создаёт LLMGateway по секции [gateway]."""
    gateway = config.gateway
    cache_dir = Path(gateway.cache_dir) if gateway.cache_dir else run_dir.cache_dir

    mock = None
    if gateway.mock is not None:
        script = {}
        if gateway.mock == MockMode.FILE_SCRIPTED:
            script = json.loads(Path(gateway.mock_script).read_text(encoding="utf-8"))
        mock = MockScript(
            mode=gateway.mock,
            fault_rate=gateway.fault_rate,
            seed=config.selection.seed,
            text=gateway.mock_text,
            script=script,
            latency=gateway.mock_latency,
        )

    lookup = build_gold_lookup(corpus) if gateway.mock in (MockMode.ECHO_GOLD, MockMode.FAULT_INJECT) else None
    return LLMGateway(
        base_url=gateway.url,
        mock=mock,
        cache_dir=cache_dir,
        timeout=gateway.timeout,
        gold_lookup=lookup,
    )


def run_pipeline(config: RunConfig, gateway_factory=None) -> RunReport:
    """
    Полный прогон в config.run_dir.

    Raises:
        ConfigError: Не указан run_dir
    """
    if not config.run_dir:
        raise ConfigError("Не задан run_dir (ни в конфигурации, ни флагом --run-dir)")
    return PipelineService(config, RunDirectory(config.run_dir), gateway_factory).run(resume=False)


def resume(run_dir, config_path=None, gateway_factory=None) -> RunReport:
    """
    Продолжает прогон с первого незавершённого этапа.

    Raises:
        ConfigError: Нет снапшота или конфигурация изменилась
    """
    config = load_snapshot(run_dir)
    if config_path is not None:
        check_drift(run_dir, config_path)
    return PipelineService(config, RunDirectory(run_dir), gateway_factory).run(resume=True)


def evaluate_predictions(run_dir, predictions_file, mode: MatchMode) -> EvalReport:
    """
    Оценивает предсказания против тестового корпуса прогона (или обучающего,
    если тестовый не задан) и пишет reports/eval_<mode>.csv|json.

    Raises:
        EvaluationError: Предсказания для заметок, которых нет в корпусе
    """
    directory = RunDirectory(run_dir)
    corpus_path = directory.test_corpus_path if directory.test_corpus_path.exists() else directory.train_corpus_path
    if not corpus_path.exists():
        raise ConfigError(f"В {directory.root} нет корпуса: сначала выполните этап ingest")
    corpus = read_corpus_jsonl(corpus_path)

    mode = MatchMode(mode)
    predictions = load_predictions(predictions_file, {n.note_id: n.text for n in corpus})
    report = EvaluationService.micro_scores(gold_by_note(corpus), predictions, mode)

    directory.reports_dir.mkdir(parents=True, exist_ok=True)
    write_eval_report(
        report,
        directory.reports_dir / f"eval_{mode.value}.csv",
        directory.reports_dir / f"eval_{mode.value}.json",
    )

    run_report = directory.read_json(directory.run_report_path)
    if run_report is not None:
        run_report.setdefault("evaluations", {})[mode.value] = report.to_json()
        directory.write_json(directory.run_report_path, run_report)
    return report
