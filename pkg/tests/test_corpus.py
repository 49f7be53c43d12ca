import json

import pytest

from muse.corpus import (
    CorpusConfig,
    CpcEntry,
    drop_leaf_level,
    load_corpus,
    load_cpc_taxonomy,
)
from muse.errors import DuplicateId, MalformedRecord


def write_corpus(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def record(i, cpc=("A45B",)):
    return {"id": f"D{i:03d}", "title": f"Widget {i}", "abstract": "Does things.",
            "cpc_ids": list(cpc)}


class TestLoadCorpus:
    def test_section_filter_excludes_chemistry(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_corpus(path, [record(1, cpc=["C07K14/00"]), record(2, cpc=["A45B"])])
        docs = load_corpus(path, CorpusConfig(allowed_sections=frozenset("ABF")))
        assert [d.id for d in docs] == ["D002"]

    def test_unbounded_keeps_all_in_input_order(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_corpus(path, [record(i) for i in range(10)])
        docs = load_corpus(path, CorpusConfig(allowed_sections=frozenset("ABF")))
        assert [d.id for d in docs] == [f"D{i:03d}" for i in range(10)]

    def test_sampling_deterministic_for_seed(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_corpus(path, [record(i) for i in range(100)])
        cfg = CorpusConfig(allowed_sections=frozenset("ABF"), sample_size=10,
                           seed=17)
        first = load_corpus(path, cfg)
        second = load_corpus(path, cfg)
        assert [d.id for d in first] == [d.id for d in second]
        assert len(first) == 10
        other = load_corpus(path, CorpusConfig(
            allowed_sections=frozenset("ABF"), sample_size=10, seed=18))
        assert [d.id for d in first] != [d.id for d in other]

    def test_sample_preserves_input_order(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_corpus(path, [record(i) for i in range(50)])
        docs = load_corpus(path, CorpusConfig(
            allowed_sections=frozenset("ABF"), sample_size=20, seed=3))
        ids = [d.id for d in docs]
        assert ids == sorted(ids)

    def test_doc_without_cpc_excluded_when_filtering(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_corpus(path, [record(1, cpc=()), record(2)])
        docs = load_corpus(path, CorpusConfig(allowed_sections=frozenset("A")))
        assert [d.id for d in docs] == ["D002"]
        # no filtering: kept
        docs = load_corpus(path, CorpusConfig())
        assert len(docs) == 2

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_corpus(path, [record(1), record(1)])
        with pytest.raises(DuplicateId):
            load_corpus(path, CorpusConfig())

    @pytest.mark.parametrize("bad", [
        "not json",
        '{"id": 5, "title": "x", "abstract": ""}',
        '{"id": "a", "title": "", "abstract": ""}',
        '{"id": "a", "title": "x", "abstract": "", "cpc_ids": "A45B"}',
    ])
    def test_malformed_records(self, tmp_path, bad):
        path = tmp_path / "c.jsonl"
        path.write_text(bad + "\n", encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_corpus(path, CorpusConfig())


class TestTaxonomy:
    def test_row_parsing(self, tmp_path):
        path = tmp_path / "cpc.tsv"
        path.write_text("A45B\t4\tWalking sticks; umbrellas\n", encoding="utf-8")
        entries = load_cpc_taxonomy(path)
        assert entries == [CpcEntry(id="A45B", title="Walking sticks; umbrellas",
                                    level=4)]
        assert entries[0].section == "A"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "cpc.tsv"
        path.write_text("", encoding="utf-8")
        assert load_cpc_taxonomy(path) == []

    def test_bad_section_letter(self, tmp_path):
        path = tmp_path / "cpc.tsv"
        path.write_text("Z01\t2\tnope\n", encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_cpc_taxonomy(path)

    def test_bad_level(self, tmp_path):
        path = tmp_path / "cpc.tsv"
        path.write_text("A01\tx\ttitle\n", encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_cpc_taxonomy(path)


class TestDropLeafLevel:
    def entries(self, levels):
        return [CpcEntry(id=f"A{i:02d}", title=f"t{i}", level=lv)
                for i, lv in enumerate(levels)]

    def test_max_level_removed(self):
        out = drop_leaf_level(self.entries([2, 4, 7, 4, 7]))
        assert [e.level for e in out] == [2, 4, 4]

    def test_single_level_leaves_nothing(self):
        assert drop_leaf_level(self.entries([3, 3, 3])) == []

    def test_mixed_eight_entries_two_at_max(self):
        out = drop_leaf_level(self.entries([1, 2, 2, 3, 5, 5, 8, 8]))
        assert len(out) == 6

    def test_never_removes_below_max(self):
        entries = self.entries([1, 2, 5, 5, 3])
        kept = drop_leaf_level(entries)
        assert all(e in kept for e in entries if e.level < 5)
