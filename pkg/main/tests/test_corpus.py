import math
import random
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from main.benchmarks import get_task_schema
from main.exceptions import CorpusParseError
from main.schemas.corpus_schemas import Entity, EntitySource, Note
from main.schemas.llm_answers_schemas import WeakLabelResult, WeakLabelSet, WeakLabelStatus
from main.services.corpus_service import (
    CorpusService,
    read_corpus_jsonl,
    read_text_file,
    stats_rows,
    summarize_counts,
    write_corpus_jsonl,
    write_stats_csv,
)

from . import CORPUS_2018_DIR

SCHEMA_2018 = get_task_schema("2018")


def _quantile(values, q):
    ordered = sorted(values)
    position = (len(ordered) - 1) * q
    lo, hi = math.floor(position), math.ceil(position)
    return ordered[lo] + (ordered[hi] - ordered[lo]) * (position - lo)


class ParseStandoffTests(SimpleTestCase):
    TEXT = "Lasix 20 mg daily.\n"

    def test_parses_and_sorts_entities(self):
        ann = (
            "T2\tStrength 6 11\t20 mg\n"
            "T1\tDrug 0 5\tLasix\n"
            "R1\tStrength-Drug Arg1:T2 Arg2:T1\n"
            "#1\tAnnotatorNotes T1\tbrand\n"
        )
        note = CorpusService.parse_standoff(self.TEXT, ann, "n1")

        self.assertEqual(note.note_id, "n1")
        self.assertEqual([e.text for e in note.gold_entities], ["Lasix", "20 mg"])
        self.assertEqual(note.gold_entities[0].key, (0, 5, "Drug"))
        self.assertTrue(all(e.source == EntitySource.GOLD for e in note.gold_entities))
        self.assertFalse(note.is_segmented)

    def test_duplicate_id_reports_line(self):
        ann = "T1\tDrug 0 5\tLasix\nT1\tStrength 6 11\t20 mg\n"
        with self.assertRaises(CorpusParseError) as ctx:
            CorpusService.parse_standoff(self.TEXT, ann, "n1")
        self.assertEqual(ctx.exception.line_no, 2)

    def test_rejects_discontinuous_span(self):
        with self.assertRaises(CorpusParseError) as ctx:
            CorpusService.parse_standoff(self.TEXT, "T1\tDrug 0 2;3 5\tLa ix\n", "n1")
        self.assertIn("разрывные", str(ctx.exception))

    def test_rejects_offsets_outside_text(self):
        with self.assertRaises(CorpusParseError):
            CorpusService.parse_standoff(self.TEXT, "T1\tDrug 0 500\tLasix\n", "n1")

    def test_rejects_surface_mismatch(self):
        with self.assertRaises(CorpusParseError) as ctx:
            CorpusService.parse_standoff(self.TEXT, "T1\tDrug 0 5\tLasik\n", "n1")
        self.assertEqual(ctx.exception.line_no, 1)

    def test_serialize_then_parse_restores_note(self):
        for note in CorpusService.load_corpus(CORPUS_2018_DIR, SCHEMA_2018):
            text, ann = CorpusService.serialize_standoff(note)
            restored = CorpusService.parse_standoff(text, ann, note.note_id)
            self.assertEqual(restored.gold_entities, note.gold_entities)


class SegmentSentencesTests(SimpleTestCase):

    def test_terminators_and_blank_lines(self):
        note = Note(note_id="n", text="Take aspirin. Then rest!\n\nNo more?  Done")
        sentences = CorpusService.segment_sentences(note).sentences

        self.assertEqual([s.text for s in sentences], ["Take aspirin.", "Then rest!", "No more?", "Done"])
        self.assertEqual([(s.start, s.end) for s in sentences], [(0, 13), (14, 24), (26, 34), (36, 40)])
        self.assertEqual([s.index for s in sentences], [0, 1, 2, 3])

    def test_gaps_are_whitespace_only(self):
        rng = random.Random(7)
        alphabet = "ab .!?\n\t"
        for _ in range(300):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
            sentences = CorpusService.segment_sentences(Note(note_id="n", text=text)).sentences
            covered = 0
            for sentence in sentences:
                self.assertEqual(text[covered:sentence.start].strip(), "")
                self.assertEqual(sentence.text, sentence.text.strip())
                self.assertTrue(sentence.text)
                covered = sentence.end
            self.assertEqual(text[covered:].strip(), "")

    def test_text_without_boundaries_is_one_sentence(self):
        sentences = CorpusService.segment_sentences(Note(note_id="n", text="no terminator here")).sentences
        self.assertEqual(len(sentences), 1)
        self.assertEqual(sentences[0].text, "no terminator here")

    def test_whitespace_note_has_no_sentences(self):
        self.assertEqual(CorpusService.segment_sentences(Note(note_id="n", text="  \n ")).sentences, ())

    def test_crossing_entity_is_counted_and_logged(self):
        text = "Take as. Needed now"
        entity = Entity(start=5, end=15, text="as. Needed", entity_type="Frequency")
        with self.assertLogs("main.services.corpus_service", level="WARNING"):
            note = CorpusService.segment_sentences(Note(note_id="n", text=text, gold_entities=(entity,)))
        self.assertEqual(note.crossing_entities(), [entity])
        self.assertEqual(note.sentence_entities(0), [])


class LoadCorpusTests(SimpleTestCase):

    def test_fixture_corpus(self):
        corpus = CorpusService.load_corpus(CORPUS_2018_DIR, SCHEMA_2018)

        self.assertEqual([n.note_id for n in corpus], [f"note_{i:02d}" for i in range(1, 11)])
        self.assertEqual(sum(len(n.gold_entities) for n in corpus), 107)
        self.assertEqual(sum(len(n.sentences) for n in corpus), 38)
        self.assertEqual(sum(len(n.crossing_entities()) for n in corpus), 0)

        note = corpus[0]
        self.assertEqual(note.gold_entities[0].text, "Lasix")
        self.assertIn(("Three (3)", "Dosage"), [(e.text, e.entity_type) for e in note.gold_entities])

    def test_unpaired_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, "a.txt").write_text("Lasix", encoding="utf-8")
            with self.assertRaises(CorpusParseError) as ctx:
                CorpusService.load_corpus(tmp, SCHEMA_2018)
            self.assertIn("a.ann", str(ctx.exception))

    def test_empty_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CorpusParseError):
                CorpusService.load_corpus(tmp, SCHEMA_2018)

    def test_unknown_entity_type(self):
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, "a.txt").write_text("Lasix", encoding="utf-8")
            Path(tmp, "a.ann").write_text("T1\tMedication 0 5\tLasix\n", encoding="utf-8")
            with self.assertRaises(CorpusParseError) as ctx:
                CorpusService.load_corpus(tmp, SCHEMA_2018)
            self.assertIn("Medication", str(ctx.exception))

    def test_crlf_offsets_are_preserved(self):
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, "a.txt").write_bytes(b"Lasix\r\n20 mg")
            Path(tmp, "a.ann").write_bytes(b"T1\tStrength 7 12\t20 mg\r\n")
            note = CorpusService.load_corpus(tmp, SCHEMA_2018)[0]
            self.assertEqual(note.gold_entities[0].key, (7, 12, "Strength"))
            self.assertEqual(read_text_file(Path(tmp, "a.txt")), "Lasix\r\n20 mg")


class CorpusStatsTests(SimpleTestCase):

    def test_summary_matches_oracle(self):
        rng = random.Random(11)
        for _ in range(1000):
            values = [rng.randint(0, 20) for _ in range(rng.randint(1, 30))]
            summary = summarize_counts(values)
            mean = sum(values) / len(values)
            sd = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))

            self.assertAlmostEqual(summary.median, _quantile(values, 0.5))
            self.assertAlmostEqual(summary.q1, _quantile(values, 0.25))
            self.assertAlmostEqual(summary.q3, _quantile(values, 0.75))
            self.assertAlmostEqual(summary.mean, mean)
            self.assertAlmostEqual(summary.sd, sd)

    def test_empty_counts(self):
        self.assertEqual(summarize_counts([]).median, 0.0)

    def test_fixture_stats(self):
        stats = CorpusService.corpus_stats(CorpusService.load_corpus(CORPUS_2018_DIR, SCHEMA_2018))

        self.assertEqual(stats.note_count, 10)
        self.assertEqual(stats.sentence_count, 38)
        self.assertEqual(stats.total_entities, 107)
        self.assertEqual(stats.per_note.median, 12.5)
        self.assertEqual(stats.crossing_entities, 0)
        self.assertIsNone(stats.failed_sentence_pct)
        self.assertEqual(sum(stats.per_type.values()), 107)

    def test_empty_corpus(self):
        with self.assertRaises(CorpusParseError):
            CorpusService.corpus_stats([])

    def test_weak_stats_count_failed_sentences(self):
        corpus = CorpusService.load_corpus(CORPUS_2018_DIR, SCHEMA_2018)
        note = corpus[1]
        results = []
        for sentence in note.sentences:
            failed = sentence.index == 0
            results.append(WeakLabelResult(
                note_id=note.note_id,
                sentence_index=sentence.index,
                status=WeakLabelStatus.FAILED if failed else WeakLabelStatus.OK,
                entities=() if failed else tuple(note.sentence_entities(sentence.index)),
            ))
        stats = CorpusService.corpus_stats([note], WeakLabelSet(results=tuple(results)))

        self.assertEqual(stats.note_count, 1)
        self.assertEqual(stats.sentence_count, len(note.sentences))
        self.assertAlmostEqual(stats.failed_sentence_pct, 100.0 / len(note.sentences))
        self.assertEqual(stats.total_entities, len(note.gold_entities) - len(note.sentence_entities(0)))

    def test_stats_csv_marks_data_origin(self):
        stats = CorpusService.corpus_stats(CorpusService.load_corpus(CORPUS_2018_DIR, SCHEMA_2018))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, "stats.csv")
            write_stats_csv({"gold": stats}, path)
            lines = path.read_text(encoding="utf-8").splitlines()

        self.assertEqual(lines[0], "Features,gold")
        self.assertEqual(lines[-1], "data_origin,non-paper data")
        self.assertIn("Entities per note, median [Q1, Q3]", dict(stats_rows(stats)))


class CorpusJsonlTests(SimpleTestCase):

    def test_write_then_read(self):
        corpus = CorpusService.load_corpus(CORPUS_2018_DIR, SCHEMA_2018)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, "train.jsonl")
            write_corpus_jsonl(corpus, path)
            self.assertEqual(read_corpus_jsonl(path), corpus)

    def test_broken_line_reports_number(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, "train.jsonl")
            path.write_text('{"note_id": "a", "text": "x"}\n{broken\n', encoding="utf-8")
            with self.assertRaises(CorpusParseError) as ctx:
                read_corpus_jsonl(path)
            self.assertEqual(ctx.exception.line_no, 2)
