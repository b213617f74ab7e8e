# main/services/cost_service.py
"""
Модель стоимости инференса.

- FLOPs декодера: N_tokens * (2N + 2 * n_layer * n_ctx * d_attn), целочисленно
- Линейная регрессия GPU-времени от числа заметок (OLS)
- Проекция на целевой корпус и сравнение с энкодером
"""
import json
import logging
import random
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import CostModelError
from ..schemas.cost_schemas import (
    CostReport,
    CostSample,
    DecoderCostSpec,
    GpuTimeProjection,
    LatencySummary,
    LinearFit,
)

logger = logging.getLogger(__name__)

ENCODER_FLOPS_PER_SENTENCE = 44_000_000_000
TARGET_NOTES = 59_652
MIN_SAMPLE_NOTES = 50
MAX_SAMPLE_NOTES = 500


def render_duration(seconds: float) -> str:
    """'{h} h {m} m' меньше суток, '{d} days {h} h {m} m' иначе."""
    total_minutes = int(round(seconds / 60.0))
    days, rest = divmod(total_minutes, 24 * 60)
    hours, minutes = divmod(rest, 60)
    if days:
        return f"{days} days {hours} h {minutes} m"
    return f"{hours} h {minutes} m"


class CostService:
    """FLOPs, OLS и проекции. Все методы чистые."""

    @staticmethod
    def decoder_flops(spec: DecoderCostSpec) -> int:
        """Точное целочисленное значение формулы FLOPs на одно предложение."""
        return spec.n_tokens_out * (2 * spec.n_params + 2 * spec.n_layer * spec.n_ctx * spec.d_attn)

    @staticmethod
    def fit_linear(samples: Sequence[CostSample]) -> LinearFit:
        """
        OLS: gpu_seconds = intercept + slope * note_count.

        Raises:
            CostModelError: Меньше двух замеров или все note_count одинаковы
        """
        if len(samples) < 2:
            raise CostModelError(f"Для регрессии нужно минимум 2 замера, получено {len(samples)}")
        x = np.array([s.note_count for s in samples], dtype=float)
        y = np.array([s.gpu_seconds for s in samples], dtype=float)
        if np.all(x == x[0]):
            raise CostModelError("Вырожденный дизайн: у всех замеров одинаковое число заметок")

        design = np.c_[np.ones(x.shape[0]), x]
        (intercept, slope), *_ = np.linalg.lstsq(design, y, rcond=None)

        residuals = y - (intercept + slope * x)
        ss_res = float(residuals @ residuals)
        ss_tot = float(((y - y.mean()) ** 2).sum())
        if ss_tot == 0.0:
            r_squared = 1.0 if np.isclose(ss_res, 0.0) else 0.0
        else:
            r_squared = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))

        return LinearFit(intercept=float(intercept), slope=float(slope), r_squared=r_squared)

    @staticmethod
    def project_gpu_time(fit: LinearFit, target_notes: int) -> GpuTimeProjection:
        """
        Проекция GPU-времени на target_notes заметок.

        Отрицательное значение обрезается до нуля с предупреждением.
        """
        if target_notes < 0:
            raise CostModelError(f"target_notes должно быть >= 0, получено {target_notes}")
        seconds = fit.predict(target_notes)
        clamped = seconds < 0
        if clamped:
            logger.warning(f"Отрицательная проекция {seconds:.2f} с для {target_notes} заметок: обрезано до 0")
            seconds = 0.0
        return GpuTimeProjection(notes=target_notes, seconds=seconds, human=render_duration(seconds), clamped=clamped)

    @staticmethod
    def default_sample_sizes(available: int) -> List[int]:
        """Равномерно от 50 до 500 (не больше доступного), либо 1..n при n < 50."""
        if available <= 0:
            return []
        if available < MIN_SAMPLE_NOTES:
            return list(range(1, available + 1))
        upper = min(MAX_SAMPLE_NOTES, available)
        sizes = np.linspace(MIN_SAMPLE_NOTES, upper, num=10)
        return sorted({int(round(s)) for s in sizes})

    @staticmethod
    def note_seconds(latencies: Sequence[Tuple[str, Optional[float]]]) -> Dict[str, float]:
        """
        Суммирует задержки предложений по заметкам.

        Заметки, у которых хоть одно предложение без задержки, пропускаются с предупреждением.
        """
        totals: Dict[str, float] = {}
        broken = set()
        for note_id, latency in latencies:
            if latency is None:
                broken.add(note_id)
                continue
            totals[note_id] = totals.get(note_id, 0.0) + latency
        if broken:
            logger.warning(f"Нет задержки у {len(broken)} заметок: {', '.join(sorted(broken))}; они пропущены")
        return {note_id: seconds for note_id, seconds in totals.items() if note_id not in broken}

    @staticmethod
    def collect_latency_samples(latencies: Sequence[Tuple[str, Optional[float]]],
                                sample_sizes: Optional[Sequence[int]] = None,
                                seed: int = 0) -> List[CostSample]:
        """
        Замеры (k заметок -> суммарные секунды) по случайным подвыборкам заметок.

        Args:
            latencies: Пары (note_id, задержка предложения или None)
            sample_sizes: Размеры подвыборок; по умолчанию default_sample_sizes
            seed: Зерно генератора подвыборок

        Returns:
            list[CostSample]: По одному замеру на размер; размеры больше числа
            заметок пропускаются с предупреждением
        """
        per_note = CostService.note_seconds(latencies)
        note_ids = sorted(per_note)
        sizes = list(sample_sizes) if sample_sizes else CostService.default_sample_sizes(len(note_ids))

        rng = random.Random(seed)
        samples = []
        for size in sizes:
            if size > len(note_ids):
                logger.warning(f"Размер выборки {size} больше числа заметок ({len(note_ids)}): пропущен")
                continue
            chosen = rng.sample(note_ids, size)
            samples.append(CostSample(note_count=size, gpu_seconds=sum(per_note[n] for n in chosen)))
        return samples

    @staticmethod
    def summarize_note_latencies(seconds: Sequence[float]) -> LatencySummary:
        values = np.asarray(list(seconds), dtype=float)
        if values.size == 0:
            return LatencySummary(notes=0, median=0.0, q1=0.0, q3=0.0)
        q1, median, q3 = np.percentile(values, [25, 50, 75])
        return LatencySummary(notes=int(values.size), median=float(median), q1=float(q1), q3=float(q3))

    @staticmethod
    def encoder_fit(llm_fit: LinearFit, llm_flops: int, encoder_flops: int) -> LinearFit:
        """Линия энкодера: LLM регрессия, масштабированная отношением FLOPs на предложение."""
        if llm_flops <= 0:
            raise CostModelError("FLOPs LLM на предложение должны быть > 0 для масштабирования")
        ratio = encoder_flops / llm_flops
        return LinearFit(intercept=llm_fit.intercept * ratio, slope=llm_fit.slope * ratio,
                         r_squared=llm_fit.r_squared)

    @staticmethod
    def compare_projections(llm_fit: LinearFit, encoder_fit: LinearFit,
                            target_notes: int = TARGET_NOTES) -> Dict[str, GpuTimeProjection]:
        """Две линии сравнения: LLM и энкодер на одном и том же корпусе."""
        return {
            "llm": CostService.project_gpu_time(llm_fit, target_notes),
            "encoder": CostService.project_gpu_time(encoder_fit, target_notes),
        }

    @staticmethod
    def build_report(spec: DecoderCostSpec, latencies: Sequence[Tuple[str, Optional[float]]],
                     target_notes: int = TARGET_NOTES, sample_sizes: Optional[Sequence[int]] = None,
                     seed: int = 0, encoder_flops: int = ENCODER_FLOPS_PER_SENTENCE) -> CostReport:
        """
        Полный отчёт стоимости. Если данных для регрессии нет, fit и projection пусты.
        """
        warnings = []
        per_note = CostService.note_seconds(latencies)
        samples = CostService.collect_latency_samples(latencies, sample_sizes, seed)

        flops = CostService.decoder_flops(spec)
        fit = projection = encoder_projection = None
        try:
            fit = CostService.fit_linear(samples)
            if flops > 0:
                lines = CostService.compare_projections(
                    fit, CostService.encoder_fit(fit, flops, encoder_flops), target_notes,
                )
                projection, encoder_projection = lines["llm"], lines["encoder"]
            else:
                projection = CostService.project_gpu_time(fit, target_notes)
            if projection.clamped:
                warnings.append("projection clamped to 0")
        except CostModelError as e:
            logger.warning(f"Регрессия стоимости не построена: {e}")
            warnings.append(str(e))

        return CostReport(
            flops_per_sentence=flops,
            encoder_flops_per_sentence=encoder_flops,
            spec=spec,
            samples=tuple(samples),
            fit=fit,
            projection=projection,
            encoder_projection=encoder_projection,
            note_latency=CostService.summarize_note_latencies(per_note.values()),
            warnings=warnings,
        )


def cost_report_json(report: CostReport) -> dict:
    """JSON отчёта: flops_per_sentence, samples, fit {intercept, slope, r2}, projection."""
    return {
        "flops_per_sentence": report.flops_per_sentence,
        "encoder_flops_per_sentence": report.encoder_flops_per_sentence,
        "spec": report.spec.model_dump(),
        "samples": [s.model_dump() for s in report.samples],
        "fit": None if report.fit is None else {
            "intercept": report.fit.intercept, "slope": report.fit.slope, "r2": report.fit.r_squared,
        },
        "projection": None if report.projection is None else report.projection.model_dump(),
        "encoder_projection": (
            None if report.encoder_projection is None else report.encoder_projection.model_dump()
        ),
        "note_latency": None if report.note_latency is None else report.note_latency.model_dump(),
        "warnings": report.warnings,
        "data_origin": report.data_origin,
    }


def write_cost_report(report: CostReport, path) -> None:
    Path(path).write_text(json.dumps(cost_report_json(report), indent=2) + "\n", encoding="utf-8")


def render_summary(report: CostReport) -> List[str]:
    """Две строки сводки: FLOPs LLM против энкодера и проекция GPU-времени."""
    ratio = report.flops_per_sentence / report.encoder_flops_per_sentence if report.encoder_flops_per_sentence else 0
    first = (
        f"FLOPs per sentence: LLM {report.flops_per_sentence:.3e} vs encoder "
        f"{report.encoder_flops_per_sentence:.3e} ({ratio:.1f}x)"
    )
    if report.projection is None:
        second = "GPU time projection: not available (not enough latency samples)"
    else:
        second = (
            f"GPU time projection for {report.projection.notes} notes: {report.projection.human} "
            f"(slope {report.fit.slope:.2f} s/note, r2 {report.fit.r_squared:.3f})"
        )
        if report.encoder_projection is not None:
            second += f"; encoder {report.encoder_projection.human}"
    return [first, second]
