import pytest

from muse.annotate import (
    MechanismTag,
    PromptConfig,
    PurposeTag,
    assign_mechanisms,
    build_purpose_prompt,
    extract_purposes,
    filter_mechanism_titles,
    load_tags,
    normalize_tag_text,
    parse_purpose_completion,
    save_tags,
    span_display_map,
    split_cpc_titles,
)
from muse.corpus import CpcEntry, Document
from muse.providers import (
    FakeCompletionProvider,
    FakeEmbeddingProvider,
    FakeMechanismClassifier,
)
from muse.vectors import cosine


def doc(doc_id="D1", title="Jet engine gearbox", abstract="", cpc=("F01D",)):
    return Document(id=doc_id, title=title, abstract=abstract,
                    cpc_ids=tuple(cpc))


class TestPurposeParsing:
    def test_lead_in_stripped(self):
        out = parse_purpose_completion(
            "The purpose of the patent is to provide a method for reducing "
            "the speed of a jet engine.")
        assert out == ["provide a method for reducing the speed of a jet engine"]

    def test_multi_sentence_completion(self):
        out = parse_purpose_completion("Cool a room. Dry the air.")
        assert out == ["cool a room", "dry the air"]

    def test_normalization(self):
        assert normalize_tag_text("  Cool   A Room!! ") == "cool a room"
        assert len(normalize_tag_text("x" * 500)) <= 200

    def test_duplicates_collapse(self):
        assert parse_purpose_completion("Cool a room. Cool a room.") == ["cool a room"]


class TestExtractPurposes:
    def test_fake_provider_echoes_description(self):
        d = doc(title="Personal cooler", abstract="A system for cooling a person.")
        tags = extract_purposes(d, FakeCompletionProvider())
        assert [t.text for t in tags] == ["personal cooler",
                                          "a system for cooling a person"]
        assert all(t.doc_id == "D1" for t in tags)
        assert [t.id for t in tags] == ["D1:p0", "D1:p1"]

    def test_empty_completion_not_fatal(self, caplog):
        class Silent:
            def complete(self, prompt, max_tokens=256, temperature=0.0):
                return "   "

        assert extract_purposes(doc(), Silent()) == []

    def test_deterministic(self):
        d = doc(title="Rotary pump", abstract="Moves fluid.")
        fake = FakeCompletionProvider()
        assert extract_purposes(d, fake) == extract_purposes(d, fake)

    def test_prompt_shape(self):
        cfg = PromptConfig()
        prompt = build_purpose_prompt(doc(title="Widget", abstract="Does X."), cfg)
        blocks = [b for b in prompt.split("\n\n") if b.strip()]
        assert len(blocks) == 5  # 3 shots + header + instruction
        assert blocks[-1].splitlines()[0] == "Widget. Does X."
        assert prompt.count("The purpose of the patent is to") == 3

    def test_instruction_needs_slot(self):
        with pytest.raises(ValueError):
            PromptConfig(instruction="no slot here")


class TestSplitCpcTitles:
    def entry(self, title, cpc_id="A45B", level=4):
        return CpcEntry(id=cpc_id, title=title, level=level)

    def test_semicolon_split(self):
        out = split_cpc_titles([self.entry("Walking sticks; umbrellas")])
        assert out == [("A45B", "walking sticks"), ("A45B", "umbrellas")]

    def test_single_span_lowercased(self):
        assert split_cpc_titles([self.entry("Air-humidification")]) == \
            [("A45B", "air-humidification")]

    def test_or_split(self):
        out = split_cpc_titles([self.entry("Heating; cooling; or ventilating")])
        assert [s for _, s in out] == ["heating", "cooling", "ventilating"]

    def test_display_map_keeps_case(self):
        display = span_display_map([self.entry("Air-humidification")])
        assert display[("A45B", "air-humidification")] == "Air-humidification"


class TestFilterMechanismTitles:
    def test_keyword_fake(self):
        spans = [("A1", "heat-exchange apparatus"), ("A2", "history of umbrellas")]
        kept = filter_mechanism_titles(spans, FakeMechanismClassifier(), 0.5)
        assert kept == [("A1", "heat-exchange apparatus")]

    def test_zero_threshold_keeps_all(self):
        spans = [("A1", "x"), ("A2", "y")]
        assert filter_mechanism_titles(spans, FakeMechanismClassifier(), 0.0) == spans

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            filter_mechanism_titles([], FakeMechanismClassifier(), 1.5)


class TestAssignMechanisms:
    def test_singleton_candidate_kept_regardless(self):
        emb = FakeEmbeddingProvider(dim=64, seed=0)
        tags = assign_mechanisms(doc(cpc=("F01D",)),
                                 {"F01D": ["totally unrelated span"]}, emb)
        assert [t.text for t in tags] == ["totally unrelated span"]

    def test_no_cpc_ids_empty(self):
        emb = FakeEmbeddingProvider(dim=64, seed=0)
        assert assign_mechanisms(doc(cpc=()), {"F01D": ["x"]}, emb) == []

    def test_most_similar_span_wins(self):
        emb = FakeEmbeddingProvider(dim=256, seed=0)
        d = doc(title="Jet engine gearbox", cpc=("F16H",))
        spans = ["speed-changing mechanisms", "walking sticks"]
        tags = assign_mechanisms(d, {"F16H": spans}, emb)
        vecs = emb.embed([d.title] + spans)
        sims = [cosine(vecs[0], vecs[i + 1]) for i in range(2)]
        best = max(sims)
        expected = min(s for s, c in zip(spans, sims) if c == best)
        assert [t.text for t in tags] == [expected] == ["speed-changing mechanisms"]

    def test_output_bounded_by_cpc_count(self):
        emb = FakeEmbeddingProvider(dim=64, seed=0)
        d = doc(cpc=("A1", "A1", "B2", "C3"))
        tags = assign_mechanisms(d, {"A1": ["x"], "B2": ["y"]}, emb)
        assert len(tags) <= len(set(d.cpc_ids))
        assert [t.cpc_id for t in tags] == ["A1", "B2"]

    def test_display_casing_attached(self):
        emb = FakeEmbeddingProvider(dim=64, seed=0)
        d = doc(cpc=("F24F6",))
        tags = assign_mechanisms(d, {"F24F6": ["air-humidification"]}, emb,
                                 display_by_span={("F24F6", "air-humidification"):
                                                  "Air-humidification"})
        assert tags[0].display == "Air-humidification"


class TestTagPersistence:
    def test_round_trip(self, tmp_path):
        purposes = [PurposeTag(id="d1:p0", doc_id="d1", text="cool a room")]
        mechanisms = [MechanismTag(id="d1:m0", doc_id="d1", cpc_id="F24F6",
                                   text="air-humidification",
                                   display="Air-humidification")]
        save_tags(purposes, mechanisms, tmp_path / "tags.jsonl")
        p2, m2 = load_tags(tmp_path / "tags.jsonl")
        assert p2 == purposes
        assert m2 == mechanisms

    def test_byte_deterministic(self, tmp_path):
        purposes = [PurposeTag(id="d1:p0", doc_id="d1", text="x")]
        save_tags(purposes, [], tmp_path / "a.jsonl")
        save_tags(purposes, [], tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
