import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase
from pydantic import ValidationError

from main.benchmarks import BUILTIN_SCHEMAS, get_task_schema
from main.exceptions import ConfigError, PromptError
from main.schemas.corpus_schemas import Entity
from main.schemas.prompt_schemas import FewShotExample, PromptTemplate
from main.services.corpus_service import CorpusService, read_text_file
from main.services.prompt_service import (
    PromptService,
    read_template,
    serialize_labels,
    write_template,
)
from main.services.subset_service import SubsetService

from . import CORPUS_2018_DIR, FIXTURES_DIR

SCHEMA_2018 = get_task_schema("2018")


def _golden_template() -> PromptTemplate:
    payload = json.loads((FIXTURES_DIR / "golden" / "examples_2018.json").read_text(encoding="utf-8"))
    examples = [
        FewShotExample(sentence_text=item["sentence_text"], entities=tuple(tuple(e) for e in item["entities"]))
        for item in payload
    ]
    return PromptTemplate.for_task(SCHEMA_2018, examples)


def _gold_notes():
    corpus = CorpusService.load_corpus(CORPUS_2018_DIR, SCHEMA_2018)
    selection = SubsetService.select_gold_subset(corpus, 3)
    return [n for n in corpus if n.note_id in selection.gold_ids]


class BenchmarkSchemaTests(SimpleTestCase):

    def test_builtin_type_sets(self):
        self.assertEqual(BUILTIN_SCHEMAS["2012"].entity_types, ("EVENT", "TIMEX3"))
        self.assertEqual(len(BUILTIN_SCHEMAS["2014"].entity_types), 23)
        self.assertEqual(len(BUILTIN_SCHEMAS["2018"].entity_types), 9)
        self.assertIn(" - h. LOCATION_LOCATION-OTHER", BUILTIN_SCHEMAS["2014"].instruction)

    def test_unknown_benchmark(self):
        with self.assertRaises(ConfigError):
            get_task_schema("2010")


class RenderTemplateTests(SimpleTestCase):

    def test_matches_golden_prompt(self):
        expected = read_text_file(FIXTURES_DIR / "golden" / "prompt_2018.txt")
        self.assertEqual(PromptService.render_template(_golden_template()), expected)

    def test_inst_count_and_prefix(self):
        template = _golden_template()
        sentence = "Metoprolol 25 mg daily for hypertension."
        prompt = PromptService.render_inference_prompt(template, sentence)

        self.assertEqual(prompt.count("[/INST]"), 2 + len(template.examples))
        self.assertTrue(prompt.startswith(PromptService.render_head(template)))
        self.assertTrue(prompt.endswith(f"<s>[INST] {sentence} [/INST]"))

    def test_zero_shot_prompt(self):
        template = PromptTemplate.for_task(SCHEMA_2018)
        prompt = PromptService.render_inference_prompt(template, "Aspirin daily.")
        self.assertEqual(prompt.count("[/INST]"), 2)
        self.assertIn("Sure, I'd be happy to help! </s>", prompt)

    def test_rejects_special_tokens_and_empty_input(self):
        template = _golden_template()
        for sentence in ("", "stop [INST] here", "end [/INST]", "<<SYS>> hi", "bye <</SYS>>"):
            with self.subTest(sentence=sentence):
                with self.assertRaises(PromptError):
                    PromptService.render_inference_prompt(template, sentence)

    def test_example_entities_must_be_substrings(self):
        with self.assertRaises(ValidationError):
            FewShotExample(sentence_text="Aspirin daily.", entities=(("Lasix", "Drug"),))

    def test_serialize_labels_format(self):
        self.assertEqual(serialize_labels([]), "[]")
        self.assertEqual(
            serialize_labels([("Lasix", "Drug"), ("20 mg", "Strength")]),
            '[{"entity": "Lasix", "entity_type": "Drug"}, {"entity": "20 mg", "entity_type": "Strength"}]',
        )
        self.assertEqual(serialize_labels([("é", "Drug")]), '[{"entity": "é", "entity_type": "Drug"}]')

    def test_template_json_round_trip(self):
        template = _golden_template()
        with tempfile.TemporaryDirectory() as tmp:
            write_template(template, tmp)
            self.assertEqual(read_template(tmp), template)
            self.assertEqual(Path(tmp, "template.txt").read_text(encoding="utf-8"),
                             PromptService.render_template(template))


class SampleFewShotTests(SimpleTestCase):

    def test_deterministic_and_distinct(self):
        notes = _gold_notes()
        first = PromptService.sample_few_shot(notes, 8, seed=0)
        second = PromptService.sample_few_shot(list(reversed(notes)), 8, seed=0)

        self.assertEqual(first, second)
        self.assertEqual(len({e.sentence_text for e in first}), 8)

    def test_require_entities(self):
        examples = PromptService.sample_few_shot(_gold_notes(), 5, seed=1, require_entities=True)
        self.assertTrue(all(e.entities for e in examples))

    def test_not_enough_sentences(self):
        with self.assertRaises(PromptError):
            PromptService.sample_few_shot(_gold_notes(), 100, seed=0)

    def test_zero_examples(self):
        self.assertEqual(PromptService.sample_few_shot(_gold_notes(), 0, seed=0), [])


class SftExportTests(SimpleTestCase):

    def test_record_completion(self):
        template = PromptTemplate.for_task(SCHEMA_2018)
        gold = [Entity(start=0, end=7, text="Aspirin", entity_type="Drug")]
        record = PromptService.render_sft_record(template, "Aspirin daily.", gold)

        self.assertTrue(record.prompt.endswith("<s>[INST] Aspirin daily. [/INST]"))
        self.assertEqual(record.completion, '[{"entity": "Aspirin", "entity_type": "Drug"}] </s>')

    def test_record_rejects_missing_entity(self):
        template = PromptTemplate.for_task(SCHEMA_2018)
        gold = [Entity(start=0, end=5, text="Lasix", entity_type="Drug")]
        with self.assertRaises(PromptError):
            PromptService.render_sft_record(template, "Aspirin daily.", gold)

    def test_export_is_deterministic(self):
        notes = _gold_notes()
        template = PromptTemplate.for_task(SCHEMA_2018, PromptService.sample_few_shot(notes, 8, seed=0))
        with tempfile.TemporaryDirectory() as tmp:
            first = PromptService.export_sft_dataset(notes, template, Path(tmp, "a.jsonl"))
            second = PromptService.export_sft_dataset(list(reversed(notes)), template, Path(tmp, "b.jsonl"))

            self.assertEqual(Path(tmp, "a.jsonl").read_bytes(), Path(tmp, "b.jsonl").read_bytes())
            lines = Path(tmp, "a.jsonl").read_text(encoding="utf-8").splitlines()

        self.assertEqual(first, second)
        self.assertEqual(first.record_count, 14)
        self.assertEqual(len(lines), 14)
        self.assertEqual(first.note_ids, ("note_01", "note_03", "note_10"))
        self.assertEqual((first.lr, first.schedule, first.weight_decay), (2e-5, "cosine", 0.1))
        self.assertEqual((first.seq_len, first.epochs, first.batch_size), (4096, 2, 1))
        self.assertTrue(all(json.loads(line)["completion"].endswith(" </s>") for line in lines))

    def test_export_rejects_empty_subset(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(PromptError):
                PromptService.export_sft_dataset([], PromptTemplate.for_task(SCHEMA_2018), Path(tmp, "x.jsonl"))
