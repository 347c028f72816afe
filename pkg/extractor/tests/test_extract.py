"""Extraction driver tests: corpus reading, records, manifest, skip path."""

import json

import pytest

from spanextract import extract as ex
from spanextract.spanfile import read_records, record_errors, validate_path


def write_corpus(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return str(path)


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "corpus.jsonl", [
        {"sample_id": "s1", "prompt": "the hare ran", "response": "the tortoise won"},
        {"sample_id": "s2", "prompt": "a fox saw a crow", "response": "he wanted the cheese"},
        {"sample_id": "s3", "prompt": "the red fox", "response": "the old mat"},
    ])


class TestReadCorpus:
    def test_round_trip(self, corpus):
        samples = ex.read_corpus(corpus)
        assert [s.sample_id for s in samples] == ["s1", "s2", "s3"]

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"sample_id": "a", "prompt": "x", "response": "y"}\nnot json\n')
        with pytest.raises(ValueError, match=r":2: invalid JSON"):
            ex.read_corpus(str(path))

    def test_unknown_field_rejected(self, tmp_path):
        path = write_corpus(tmp_path / "c.jsonl",
                            [{"sample_id": "a", "prompt": "x", "response": "y", "lang": "en"}])
        with pytest.raises(ValueError, match=r":1: unknown fields \['lang'\]"):
            ex.read_corpus(path)

    def test_missing_field_rejected(self, tmp_path):
        path = write_corpus(tmp_path / "c.jsonl", [{"sample_id": "a", "prompt": "x"}])
        with pytest.raises(ValueError, match="missing field"):
            ex.read_corpus(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_corpus(tmp_path / "c.jsonl", [
            {"sample_id": "a", "prompt": "x", "response": "y"},
            {"sample_id": "a", "prompt": "p", "response": "q"},
        ])
        with pytest.raises(ValueError, match="duplicate sample_id 'a'"):
            ex.read_corpus(path)

    def test_empty_corpus_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        with pytest.raises(ValueError, match="corpus is empty"):
            ex.read_corpus(str(path))


class TestAnnotateSample:
    def test_sides_chunked_independently(self):
        rec, skipped = ex.annotate_sample(
            ex.CorpusSample("s", "the hare ran", "the tortoise won"))
        assert not skipped
        assert rec.text == "the hare ran | the tortoise won"
        boundary_lo = len("the hare ran")          # separator starts here
        boundary_hi = boundary_lo + len(ex.SEPARATOR)
        for s, e in rec.words:
            assert e <= boundary_lo or s >= boundary_hi
        for s, e, _ in rec.phrases:
            assert e <= boundary_lo or s >= boundary_hi

    def test_separator_is_not_a_word(self):
        rec, _ = ex.annotate_sample(ex.CorpusSample("s", "a cat", "a dog"))
        assert rec.text == "a cat | a dog"
        texts = [rec.text[s:e] for s, e in rec.words]
        assert texts == ["a", "cat", "a", "dog"]

    def test_empty_sides_give_empty_span_lists(self):
        rec, skipped = ex.annotate_sample(ex.CorpusSample("s", "", ""))
        assert not skipped
        assert rec.text == ex.SEPARATOR
        assert rec.words == [] and rec.phrases == []

    def test_records_are_contract_valid(self):
        rec, _ = ex.annotate_sample(
            ex.CorpusSample("s", "a small mouse ran over the face of the lion",
                            "and woke the great beast from his sleep"))
        assert record_errors(rec) == []


class TestExtractCorpus:
    def test_output_order_matches_input(self, corpus, tmp_path):
        out = str(tmp_path / "spans.jsonl")
        ex.extract_corpus(corpus, out)
        assert [r.sample_id for r in read_records(out)] == ["s1", "s2", "s3"]

    def test_manifest_counts_match_file(self, corpus, tmp_path):
        out = str(tmp_path / "spans.jsonl")
        manifest = ex.extract_corpus(corpus, out)
        records = read_records(out)
        assert manifest.chunker == "rulechunk/1.0"
        assert manifest.samples == len(records) == 3
        assert manifest.words == sum(len(r.words) for r in records)
        assert manifest.nps == sum(1 for r in records for *_, l in r.phrases if l == "NP")
        assert manifest.vps == sum(1 for r in records for *_, l in r.phrases if l == "VP")
        assert manifest.skipped == 0
        on_disk = json.load(open(ex.manifest_path(out)))
        assert on_disk == {"corpus": corpus, "output": out, "chunker": "rulechunk/1.0",
                           "samples": 3, "words": manifest.words, "nps": manifest.nps,
                           "vps": manifest.vps, "skipped": 0}

    def test_no_verb_sample_has_empty_vp_list(self, corpus, tmp_path):
        out = str(tmp_path / "spans.jsonl")
        ex.extract_corpus(corpus, out)
        rec = read_records(out)[2]  # "the red fox | the old mat"
        labels = {lab for *_, lab in rec.phrases}
        assert labels == {"NP"}

    def test_chunker_failure_emits_words_only(self, corpus, tmp_path, monkeypatch):
        def boom(text, base=0):
            raise RuntimeError("no parse")

        monkeypatch.setattr(ex, "chunk_segment", boom)
        out = str(tmp_path / "spans.jsonl")
        manifest = ex.extract_corpus(corpus, out)
        assert manifest.skipped == 3
        assert manifest.nps == manifest.vps == 0
        records = read_records(out)
        assert [r.sample_id for r in records] == ["s1", "s2", "s3"]
        rec = records[0]
        assert rec.phrases == []
        assert [rec.text[s:e] for s, e in rec.words] == \
            ["the", "hare", "ran", "the", "tortoise", "won"]

    def test_extract_output_validates(self, corpus, tmp_path):
        out = str(tmp_path / "spans.jsonl")
        ex.extract_corpus(corpus, out)
        assert validate_path(out).ok
