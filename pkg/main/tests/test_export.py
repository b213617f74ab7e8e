import random
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from main.benchmarks import MEDICATION_TYPES, get_task_schema
from main.exceptions import ExportError
from main.schemas.corpus_schemas import Entity, EntitySource, Sentence
from main.schemas.export_schemas import BioExample, SubwordToken
from main.schemas.llm_answers_schemas import WeakLabelResult, WeakLabelSet, WeakLabelStatus
from main.services.corpus_service import CorpusService
from main.services.export_service import (
    ExportService,
    check_bio_wellformed,
    lookup_hyperparameters,
    read_bio_file,
    read_manifest,
    resolve_overlaps,
    run_names,
    stage_hyperparameters,
    write_bio_file,
)
from main.services.subset_service import SubsetService
from main.services.tokenizer_service import TokenizerService, WordPieceVocab

from . import CORPUS_2018_DIR, VOCAB_PATH

VOCAB = WordPieceVocab.from_file(VOCAB_PATH)


def _sentence(text: str, start: int = 0, index: int = 0) -> Sentence:
    return Sentence(index=index, start=start, end=start + len(text), text=text)


def _bio(sentence: Sentence, entities, max_tokens=256) -> BioExample:
    tokens = TokenizerService.tokenize_subwords(sentence.text, VOCAB)
    return ExportService.to_bio("n1", sentence, tokens, entities, max_tokens)


def _weak_from_gold(corpus, note_ids, failed=()):
    results = []
    for note in corpus:
        if note.note_id not in note_ids:
            continue
        for sentence in note.sentences:
            if (note.note_id, sentence.index) in failed:
                results.append(WeakLabelResult(
                    note_id=note.note_id, sentence_index=sentence.index, status=WeakLabelStatus.FAILED,
                ))
                continue
            entities = tuple(
                e.model_copy(update={"source": EntitySource.WEAK}) for e in note.sentence_entities(sentence.index)
            )
            results.append(WeakLabelResult(
                note_id=note.note_id, sentence_index=sentence.index,
                status=WeakLabelStatus.OK if entities else WeakLabelStatus.EMPTY, entities=entities,
            ))
    return WeakLabelSet(results=tuple(results))


class TokenizerTests(SimpleTestCase):

    def test_greedy_longest_match(self):
        vocab = WordPieceVocab(["un", "##aff", "##able", "u", "##n"])
        self.assertEqual(
            TokenizerService.wordpiece("unaffable", vocab),
            [("un", 0, 2), ("##aff", 2, 5), ("##able", 5, 9)],
        )

    def test_fixture_vocab_examples(self):
        tokens = TokenizerService.tokenize_subwords("Lasix 20 mg daily.", VOCAB)
        self.assertEqual(
            [t.text for t in tokens],
            ["L", "##a", "##s", "##i", "##x", "2", "##0", "mg", "daily", "##."],
        )
        self.assertEqual([t.is_continuation for t in tokens][:6], [False, True, True, True, True, False])
        self.assertEqual((tokens[7].start, tokens[7].end), (9, 11))

    def test_unknown_words_become_one_unk(self):
        tokens = TokenizerService.tokenize_subwords("aé " + "a" * 101, VOCAB)
        self.assertEqual([(t.text, t.start, t.end) for t in tokens], [("[UNK]", 0, 2), ("[UNK]", 3, 104)])

    def test_pieces_tile_every_word(self):
        rng = random.Random(17)
        alphabet = "abcXYZ0123.,:()- \n\t"
        for _ in range(1000):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
            tokens = TokenizerService.tokenize_subwords(text, VOCAB)
            self.assertEqual("".join(text[t.start:t.end] for t in tokens), "".join(text.split()))
            for token in tokens:
                self.assertEqual(text[token.start:token.end].split(), [text[token.start:token.end]])

    def test_vocab_errors(self):
        with self.assertRaises(ExportError):
            WordPieceVocab([])
        with self.assertRaises(ExportError):
            WordPieceVocab.from_file(Path("/nonexistent/vocab.txt"))


class BioConversionTests(SimpleTestCase):
    SENTENCE = _sentence("Lasix 20 mg daily.", start=100)

    def test_to_bio(self):
        example = _bio(self.SENTENCE, [
            Entity(start=100, end=105, text="Lasix", entity_type="Drug"),
            Entity(start=106, end=111, text="20 mg", entity_type="Strength"),
        ])
        self.assertEqual(example.tags, (
            "B-Drug", "I-Drug", "I-Drug", "I-Drug", "I-Drug",
            "B-Strength", "I-Strength", "I-Strength", "O", "O",
        ))
        self.assertFalse(example.truncated)
        self.assertEqual((example.dropped_overlap, example.dropped_truncated), (0, 0))

    def test_overlaps_keep_longest(self):
        example = _bio(self.SENTENCE, [
            Entity(start=109, end=111, text="mg", entity_type="Form"),
            Entity(start=106, end=111, text="20 mg", entity_type="Strength"),
        ])
        self.assertEqual(example.dropped_overlap, 1)
        self.assertEqual(example.tags[5:8], ("B-Strength", "I-Strength", "I-Strength"))

    def test_resolve_overlaps(self):
        entities = [
            Entity(start=0, end=5, text="Lasix", entity_type="Drug"),
            Entity(start=3, end=8, text="ix 20", entity_type="Strength"),
            Entity(start=6, end=8, text="20", entity_type="Strength"),
        ]
        kept, dropped = resolve_overlaps(entities)
        self.assertEqual([e.text for e in kept], ["Lasix", "20"])
        self.assertEqual(dropped, 1)

    def test_truncation_drops_cut_entities(self):
        example = _bio(self.SENTENCE, [
            Entity(start=100, end=105, text="Lasix", entity_type="Drug"),
            Entity(start=106, end=111, text="20 mg", entity_type="Strength"),
        ], max_tokens=3)
        self.assertTrue(example.truncated)
        self.assertEqual(len(example.tokens), 3)
        self.assertEqual(example.tags, ("O", "O", "O"))
        self.assertEqual(example.dropped_truncated, 2)

    def test_whitespace_entity_is_counted_as_tokenless(self):
        example = _bio(self.SENTENCE, [
            Entity(start=100, end=105, text="Lasix", entity_type="Drug"),
            Entity(start=105, end=106, text=" ", entity_type="Strength"),
        ])
        self.assertEqual(example.tags[:6], ("B-Drug", "I-Drug", "I-Drug", "I-Drug", "I-Drug", "O"))
        self.assertEqual(
            (example.dropped_no_tokens, example.dropped_overlap, example.dropped_truncated), (1, 0, 0),
        )

    def test_random_round_trips(self):
        rng = random.Random(21)
        for _ in range(1000):
            words = ["".join(rng.choice("abcxyz019") for _ in range(rng.randint(1, 6)))
                     for _ in range(rng.randint(1, 12))]
            offset = rng.randint(0, 50)
            text = " ".join(words)
            sentence = _sentence(text, start=offset)

            starts = [sum(len(w) + 1 for w in words[:i]) for i in range(len(words))]
            entities, i = [], 0
            while i < len(words):
                if rng.random() < 0.4:
                    j = min(len(words), i + rng.randint(1, 3))
                    start, end = starts[i], starts[j - 1] + len(words[j - 1])
                    entities.append(Entity(
                        start=offset + start, end=offset + end, text=text[start:end],
                        entity_type=rng.choice(MEDICATION_TYPES),
                    ))
                    i = j
                else:
                    i += 1

            example = _bio(sentence, entities)
            self.assertTrue(check_bio_wellformed(example.tags))
            self.assertEqual(
                [e.key for e in ExportService.from_bio(example)],
                [e.key for e in entities],
            )

    def test_orphan_inside_tag_starts_entity(self):
        tokens = tuple(SubwordToken(text=c, start=i * 2, end=i * 2 + 1) for i, c in enumerate("abcd"))
        example = BioExample(
            note_id="n", sentence_index=0, sentence_start=10, sentence_text="a b c d",
            tokens=tokens, tags=("I-Drug", "I-Drug", "O", "I-Form"),
        )
        decoded = ExportService.from_bio(example)
        self.assertEqual([(e.start, e.end, e.text, e.entity_type) for e in decoded],
                         [(10, 13, "a b", "Drug"), (16, 17, "d", "Form")])

    def test_wellformedness(self):
        self.assertTrue(check_bio_wellformed(["B-X", "I-X", "O", "B-Y"]))
        self.assertFalse(check_bio_wellformed(["O", "I-X"]))
        self.assertFalse(check_bio_wellformed(["B-X", "I-Y"]))


class HyperparameterCatalogTests(SimpleTestCase):
    ROWS = [
        ("2012", "Bert_gold10", 0.2, 2),
        ("2012", "Bert_gold100%", 0.2, 32),
        ("2012", "Bert_gold3", 0.34, 1),
        ("2014", "llama2-13B_Bert_gold0", 0.2, 32),
        ("2014", "llama2-13B_Bert_gold3", 0.34, 1),
        ("2014", "llama2-13B_Bert_gold3_ws", 0.2, 32),
        ("2014", "llama2-13B_Bert_gold50", 0.2, 2),
        ("2018", "llama2-13B_gold3_Bert_gold3", 0.34, 1),
        ("2018", "llama2-13B_gold5_Bert_gold5", 0.2, 2),
        ("2018", "llama2-13B_gold50_Bert_gold50_ws", 0.2, 32),
    ]

    def test_rows(self):
        for benchmark, run_name, ratio, batch in self.ROWS:
            with self.subTest(run=run_name):
                row = lookup_hyperparameters(benchmark, run_name)
                self.assertEqual((row.validation_ratio, row.batch_size), (ratio, batch))
                self.assertEqual((row.input_token_length, row.learning_rate), (256, 2e-6))

    def test_missing_row(self):
        with self.assertRaises(ExportError):
            lookup_hyperparameters("2018", "Bert_gold7")

    def test_rule_outside_catalog(self):
        with self.assertLogs("main.services.export_service", level="WARNING"):
            row = stage_hyperparameters("2018", "llama2-13B_gold7_Bert_gold7", 7, "gold")
        self.assertEqual((row.validation_ratio, row.batch_size), (0.2, 2))

    def test_run_names(self):
        self.assertEqual(run_names("sft", 3), ("llama2-13B_gold3_Bert_gold3_ws", "llama2-13B_gold3_Bert_gold3"))
        self.assertEqual(run_names("compact", 5), ("llama2-13B_Bert_gold5_ws", "llama2-13B_Bert_gold5"))
        with self.assertRaises(ExportError):
            run_names("other", 3)


class StageExportTests(SimpleTestCase):

    def setUp(self):
        self.corpus = CorpusService.load_corpus(CORPUS_2018_DIR, get_task_schema("2018"))
        self.selection = SubsetService.select_gold_subset(self.corpus, 3)

    def test_two_stage_manifest(self):
        weak = _weak_from_gold(self.corpus, self.selection.weak_ids, failed={("note_02", 0)})
        with tempfile.TemporaryDirectory() as tmp:
            manifest = ExportService.export_stage_datasets(
                self.corpus, weak, self.selection, "2018", 3, VOCAB, tmp,
            )
            self.assertTrue(Path(tmp, "weak.bio").exists())
            self.assertEqual(read_manifest(Path(tmp, "manifest.json")), manifest)

        self.assertEqual([s.name for s in manifest.stages], ["weak", "gold"])
        weak_stage, gold_stage = manifest.stages
        self.assertEqual(weak_stage.run_name, "llama2-13B_gold3_Bert_gold3_ws")
        self.assertEqual(weak_stage.sentence_count, 23)
        self.assertEqual(len(weak_stage.validation_notes), 1)
        self.assertEqual(gold_stage.run_name, "llama2-13B_gold3_Bert_gold3")
        self.assertEqual(gold_stage.hyperparameters.batch_size, 1)
        self.assertEqual(gold_stage.sentence_count, 14)
        self.assertEqual(len(gold_stage.validation_notes), 1)
        self.assertEqual(manifest.excluded_failed_sentences, 1)
        self.assertEqual((manifest.early_stop_patience, manifest.checkpoint_selection), (8, "best-validation"))

    def test_failed_sentences_can_be_kept_as_outside(self):
        weak = _weak_from_gold(self.corpus, self.selection.weak_ids, failed={("note_02", 0)})
        with tempfile.TemporaryDirectory() as tmp:
            manifest = ExportService.export_stage_datasets(
                self.corpus, weak, self.selection, "2018", 3, VOCAB, tmp, include_failed=True,
            )
        self.assertEqual(manifest.stage("weak").sentence_count, 24)
        self.assertEqual(manifest.excluded_failed_sentences, 0)

    def test_missing_weak_results(self):
        weak = _weak_from_gold(self.corpus, self.selection.weak_ids[1:])
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ExportError) as ctx:
                ExportService.export_stage_datasets(self.corpus, weak, self.selection, "2018", 3, VOCAB, tmp)
        self.assertIn(self.selection.weak_ids[0], str(ctx.exception))

    def test_baseline_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = ExportService.export_baseline_manifest(self.corpus, self.selection, "2018", VOCAB, tmp)
            self.assertTrue(Path(tmp, "baseline_gold.bio").exists())
        self.assertEqual(manifest.variant, "baseline")
        self.assertEqual(manifest.stages[0].run_name, "Bert_gold3")
        self.assertEqual(manifest.stages[0].hyperparameters.validation_ratio, 0.34)


class BioFileTests(SimpleTestCase):

    def test_write_then_read_restores_gold(self):
        corpus = CorpusService.load_corpus(CORPUS_2018_DIR, get_task_schema("2018"))
        texts = {n.note_id: n.text for n in corpus}
        examples = ExportService.gold_examples(corpus, VOCAB)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, "gold.bio")
            write_bio_file(examples, path)
            restored = read_bio_file(path, texts)

        self.assertEqual(len(restored), len(examples))
        decoded = {}
        for example in restored:
            decoded.setdefault(example.note_id, []).extend(ExportService.from_bio(example))
        for note in corpus:
            self.assertEqual([e.key for e in decoded.get(note.note_id, [])], [e.key for e in note.gold_entities])

    def test_read_errors_report_line(self):
        cases = [
            "L\t0\t1\tO\n",
            "-DOCSTART- unknown\n",
            "-DOCSTART- a\n\nL\t0\t1\n",
            "-DOCSTART- a\n\nL\t0\t1\tX-Drug\n",
            "-DOCSTART- a\n\nL\t0\t99\tO\n",
        ]
        with tempfile.TemporaryDirectory() as tmp:
            for content in cases:
                with self.subTest(content=content):
                    path = Path(tmp, "bad.bio")
                    path.write_text(content, encoding="utf-8")
                    with self.assertRaises(ExportError) as ctx:
                        read_bio_file(path, {"a": "Lasix"})
                    self.assertIsNotNone(ctx.exception.line_no)
