import json
import random
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from main.exceptions import CostModelError
from main.schemas.cost_schemas import CostSample, DecoderCostSpec, LinearFit
from main.services.cost_service import (
    CostService,
    render_duration,
    render_summary,
    write_cost_report,
)


def _samples(points):
    return [CostSample(note_count=x, gpu_seconds=y) for x, y in points]


class DecoderFlopsTests(SimpleTestCase):

    def test_llama2_13b_constants(self):
        self.assertEqual(CostService.decoder_flops(DecoderCostSpec.llama2_13b()), 3_348_838_481_920)

    def test_zero_tokens(self):
        spec = DecoderCostSpec.llama2_13b().model_copy(update={"n_tokens_out": 0})
        self.assertEqual(CostService.decoder_flops(spec), 0)


class FitLinearTests(SimpleTestCase):

    def test_exact_line(self):
        fit = CostService.fit_linear(_samples([(50, 130.0), (100, 230.0), (200, 430.0)]))
        self.assertAlmostEqual(fit.intercept, 30.0)
        self.assertAlmostEqual(fit.slope, 2.0)
        self.assertAlmostEqual(fit.r_squared, 1.0)

    def test_noisy_points_keep_ols_properties(self):
        rng = random.Random(8)
        points = [(x, 5.0 + 1.5 * x + rng.uniform(-3, 3)) for x in range(10, 200, 10)]
        fit = CostService.fit_linear(_samples(points))

        residuals = [y - fit.predict(x) for x, y in points]
        self.assertAlmostEqual(sum(residuals), 0.0, places=6)
        self.assertAlmostEqual(sum(r * x for r, (x, _) in zip(residuals, points)), 0.0, places=4)
        self.assertTrue(0.0 <= fit.r_squared <= 1.0)
        self.assertAlmostEqual(fit.slope, 1.5, places=1)

    def test_degenerate_inputs(self):
        with self.assertRaises(CostModelError):
            CostService.fit_linear(_samples([(10, 1.0)]))
        with self.assertRaises(CostModelError):
            CostService.fit_linear(_samples([(10, 1.0), (10, 2.0), (10, 3.0)]))

    def test_negative_projection_is_clamped(self):
        fit = LinearFit(intercept=-100.0, slope=1.0, r_squared=1.0)
        with self.assertLogs("main.services.cost_service", level="WARNING"):
            projection = CostService.project_gpu_time(fit, 10)
        self.assertEqual((projection.seconds, projection.clamped, projection.human), (0.0, True, "0 h 0 m"))

    def test_projection(self):
        fit = LinearFit(intercept=0.0, slope=3.0, r_squared=1.0)
        projection = CostService.project_gpu_time(fit, 59_652)
        self.assertEqual(projection.seconds, 178_956.0)
        self.assertEqual(projection.human, "2 days 1 h 43 m")

    def test_compare_projections(self):
        llm = LinearFit(intercept=0.0, slope=3.0, r_squared=1.0)
        encoder = LinearFit(intercept=0.0, slope=0.01, r_squared=1.0)
        lines = CostService.compare_projections(llm, encoder, 6000)
        self.assertEqual(lines["llm"].human, "5 h 0 m")
        self.assertEqual(lines["encoder"].human, "0 h 1 m")


class RenderDurationTests(SimpleTestCase):

    def test_cases(self):
        cases = [
            (0, "0 h 0 m"),
            (5 * 3600 + 7 * 60, "5 h 7 m"),
            (2 * 86400 + 3 * 3600 + 4 * 60, "2 days 3 h 4 m"),
            (59 * 60 + 40, "1 h 0 m"),
            (86400, "1 days 0 h 0 m"),
        ]
        for seconds, expected in cases:
            with self.subTest(seconds=seconds):
                self.assertEqual(render_duration(seconds), expected)


class LatencySamplingTests(SimpleTestCase):
    LATENCIES = [(f"n{i}", 1.0 + i % 3) for i in range(12)] + [(f"n{i}", 0.5) for i in range(12)]

    def test_default_sample_sizes(self):
        self.assertEqual(CostService.default_sample_sizes(0), [])
        self.assertEqual(CostService.default_sample_sizes(4), [1, 2, 3, 4])
        self.assertEqual(CostService.default_sample_sizes(1000), list(range(50, 501, 50)))
        sizes = CostService.default_sample_sizes(120)
        self.assertEqual((sizes[0], sizes[-1]), (50, 120))

    def test_note_seconds_sums_sentences(self):
        totals = CostService.note_seconds([("a", 1.0), ("a", 0.5), ("b", 2.0), ("c", None), ("c", 4.0)])
        self.assertEqual(totals, {"a": 1.5, "b": 2.0})

    def test_sampling_is_deterministic(self):
        first = CostService.collect_latency_samples(self.LATENCIES, [2, 5, 12], seed=3)
        self.assertEqual(CostService.collect_latency_samples(self.LATENCIES, [2, 5, 12], seed=3), first)
        self.assertEqual([s.note_count for s in first], [2, 5, 12])
        self.assertEqual(first[-1].gpu_seconds, sum(1.0 + i % 3 for i in range(12)) + 6.0)

    def test_oversized_sample_is_skipped(self):
        with self.assertLogs("main.services.cost_service", level="WARNING"):
            samples = CostService.collect_latency_samples(self.LATENCIES, [3, 40])
        self.assertEqual([s.note_count for s in samples], [3])


class CostReportTests(SimpleTestCase):

    def test_report_and_summary(self):
        latencies = [(f"n{i}", 2.0) for i in range(7)]
        report = CostService.build_report(
            DecoderCostSpec.llama2_13b(), latencies, target_notes=600, sample_sizes=range(1, 8),
        )
        self.assertAlmostEqual(report.fit.slope, 2.0)
        self.assertAlmostEqual(report.projection.seconds, 1200.0)
        self.assertEqual(report.projection.human, "0 h 20 m")
        self.assertAlmostEqual(report.encoder_projection.seconds, 1200.0 * 44e9 / 3_348_838_481_920, places=6)
        self.assertEqual(report.note_latency.median, 2.0)

        lines = render_summary(report)
        self.assertEqual(len(lines), 2)
        self.assertIn("0 h 20 m", lines[1])
        self.assertTrue(lines[1].endswith("; encoder 0 h 0 m"))

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, "cost.json")
            write_cost_report(report, path)
            payload = json.loads(path.read_text(encoding="utf-8"))
        self.assertEqual(payload["flops_per_sentence"], 3_348_838_481_920)
        self.assertEqual(len(payload["samples"]), 7)
        self.assertAlmostEqual(payload["fit"]["slope"], 2.0)
        self.assertEqual(payload["encoder_projection"]["human"], "0 h 0 m")

    def test_report_without_regression(self):
        with self.assertLogs("main.services.cost_service", level="WARNING"):
            report = CostService.build_report(DecoderCostSpec.llama2_13b(), [("n0", 1.0)])
        self.assertIsNone(report.fit)
        self.assertIsNone(report.projection)
        self.assertIsNone(report.encoder_projection)
        self.assertTrue(report.warnings)
        self.assertIn("not available", render_summary(report)[1])

    def test_encoder_line_scales_llm_fit_by_flops_ratio(self):
        fit = LinearFit(intercept=10.0, slope=4.0, r_squared=0.9)
        encoder = CostService.encoder_fit(fit, llm_flops=400, encoder_flops=100)
        self.assertEqual((encoder.intercept, encoder.slope, encoder.r_squared), (2.5, 1.0, 0.9))
        with self.assertRaises(CostModelError):
            CostService.encoder_fit(fit, llm_flops=0, encoder_flops=100)
