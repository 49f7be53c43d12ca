import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muse.errors import (
    AuthFailure,
    EmptyText,
    ProviderMalformedResponse,
    ProviderUnavailable,
)
from muse.providers import (
    CachedEmbeddingProvider,
    FakeCompletionProvider,
    FakeEmbeddingProvider,
    FakeEntailmentProvider,
    FakeMechanismClassifier,
    HttpConfig,
    LiveCompletionProvider,
    LiveEmbeddingProvider,
    LiveEntailmentProvider,
    fake_providers,
    providers_from_env,
)
from stub_server import StubEndpoint

FAST_HTTP = HttpConfig(backoff_base=0.001, backoff_cap=0.002, timeout=5.0)


class TestFakeEmbedding:
    def test_identical_texts_identical_vectors(self):
        emb = FakeEmbeddingProvider(dim=64, seed=0)
        v = emb.embed(["cool a room", "cool a room"])
        assert np.array_equal(v[0], v[1])

    def test_unit_norm(self):
        emb = FakeEmbeddingProvider(dim=32, seed=5)
        v = emb.embed(["protect plants", "one two three four five six"])
        assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-9)

    def test_disjoint_tokens_low_cosine(self):
        emb = FakeEmbeddingProvider(dim=256, seed=1)
        v = emb.embed(["alpha beta gamma delta", "epsilon zeta eta theta"])
        assert float(v[0] @ v[1]) < 0.3

    def test_empty_text_raises(self):
        emb = FakeEmbeddingProvider(dim=16, seed=0)
        with pytest.raises(EmptyText):
            emb.embed([""])
        with pytest.raises(EmptyText):
            emb.embed(["the a of"])  # stop words only

    def test_seed_changes_vectors(self):
        a = FakeEmbeddingProvider(dim=64, seed=1).embed(["cool a room"])
        b = FakeEmbeddingProvider(dim=64, seed=2).embed(["cool a room"])
        assert not np.array_equal(a, b)


class TestFakeEntailment:
    def setup_method(self):
        self.ent = FakeEntailmentProvider()

    def test_subset_hypothesis_scores_one(self):
        s = self.ent.score("I want to protect plants from the sun",
                           "I want to protect plants")
        assert s == 1.0

    def test_disjoint_scores_zero(self):
        assert self.ent.score("seal a leak", "cool a room") == 0.0

    @given(st.text(alphabet="abcdefg hij", min_size=1).filter(str.strip))
    @settings(max_examples=50)
    def test_identity_scores_one(self, text):
        assert self.ent.score(text, text) == 1.0

    def test_partial_overlap(self):
        # hypothesis tokens {cooling, room}; premise shares {cooling}
        s = self.ent.score("I want cooling fast", "I want cooling a room")
        assert s == pytest.approx(0.5)

    def test_empty_raises(self):
        with pytest.raises(EmptyText):
            self.ent.score("", "x")

    @given(st.text(alphabet="abc def", min_size=1).filter(str.strip),
           st.text(alphabet="abc def", min_size=1).filter(str.strip))
    @settings(max_examples=50)
    def test_score_in_unit_interval(self, p, h):
        assert 0.0 <= self.ent.score(p, h) <= 1.0


class TestFakeCompletion:
    def test_echoes_final_block_first_line(self):
        fake = FakeCompletionProvider()
        out = fake.complete("intro text\n\nsecond block\nmore\n\nFinal line here\nquestion?")
        assert out == "ABSTRACT: Final line here"

    def test_deterministic(self):
        fake = FakeCompletionProvider()
        prompt = "a\n\nb\nc"
        assert fake.complete(prompt) == fake.complete(prompt)

    def test_max_tokens_truncates(self):
        fake = FakeCompletionProvider()
        out = fake.complete("one two three four five", max_tokens=3)
        assert out == "ABSTRACT: one two"


class TestFakeClassifier:
    @pytest.mark.parametrize("title,score", [
        ("heat-exchange apparatus", 1.0),
        ("history of umbrellas", 0.0),
        ("locking mechanism", 1.0),
        ("walking sticks", 0.0),
    ])
    def test_keyword_rule(self, title, score):
        assert FakeMechanismClassifier().score(title) == score


class TestLiveAdapters:
    def test_retry_two_transient_failures_then_success(self):
        script = [(500, {}), (503, {}),
                  (200, {"vectors": [[1.0, 0.0, 0.0, 0.0]]})]
        with StubEndpoint(script) as stub:
            emb = LiveEmbeddingProvider(stub.url, dim=4, http=FAST_HTTP)
            out = emb.embed(["hello"])
            assert len(stub.requests) == 3
            assert np.allclose(out[0], [1, 0, 0, 0])

    def test_gives_up_after_three_attempts(self):
        with StubEndpoint([(500, {})]) as stub:
            emb = LiveEmbeddingProvider(stub.url, dim=4, http=FAST_HTTP)
            with pytest.raises(ProviderUnavailable):
                emb.embed(["hello"])
            assert len(stub.requests) == 3

    def test_wrong_vector_length_is_malformed(self):
        with StubEndpoint([(200, {"vectors": [[1.0, 0.0]]})]) as stub:
            emb = LiveEmbeddingProvider(stub.url, dim=4, http=FAST_HTTP)
            with pytest.raises(ProviderMalformedResponse):
                emb.embed(["hello"])

    def test_batching_respects_batch_size(self):
        def body(payload):
            return {"vectors": [[1.0, 0.0] for _ in payload["texts"]]}
        with StubEndpoint([(200, body)]) as stub:
            cfg = HttpConfig(backoff_base=0.001, batch_size=32)
            emb = LiveEmbeddingProvider(stub.url, dim=2, http=cfg)
            emb.embed([f"text {i}" for i in range(64)])
            assert len(stub.requests) == 2
            assert all(len(r["texts"]) == 32 for r in stub.requests)

    def test_auth_failure_not_retried(self):
        with StubEndpoint([(401, {})]) as stub:
            emb = LiveEmbeddingProvider(stub.url, dim=2, http=FAST_HTTP)
            with pytest.raises(AuthFailure):
                emb.embed(["x"])
            assert len(stub.requests) == 1

    def test_entailment_wire_format(self):
        def body(payload):
            assert payload["pairs"][0]["premise"] == "p"
            return {"scores": [0.75]}
        with StubEndpoint([(200, body)]) as stub:
            ent = LiveEntailmentProvider(stub.url, http=FAST_HTTP)
            assert ent.score("p", "h") == 0.75

    def test_entailment_score_out_of_range_is_malformed(self):
        with StubEndpoint([(200, {"scores": [1.5]})]) as stub:
            ent = LiveEntailmentProvider(stub.url, http=FAST_HTTP)
            with pytest.raises(ProviderMalformedResponse):
                ent.score("p", "h")

    def test_completion_roundtrip_and_audit(self, tmp_path):
        audit = tmp_path / "audit.jsonl"
        with StubEndpoint([(200, {"text": "a fine sentence"})]) as stub:
            llm = LiveCompletionProvider(stub.url, http=FAST_HTTP,
                                         audit_path=audit)
            assert llm.complete("prompt") == "a fine sentence"
        assert "a fine sentence" in audit.read_text()


class TestEmbeddingCache:
    def test_cache_hits_skip_inner(self, tmp_path):
        calls = []

        class Counting:
            dim = 8

            def embed(self, texts):
                calls.append(list(texts))
                return FakeEmbeddingProvider(dim=8, seed=0).embed(texts)

        cache = CachedEmbeddingProvider(Counting(), tmp_path / "emb.jsonl")
        a = cache.embed(["x y", "z w"])
        b = cache.embed(["z w", "x y"])
        assert np.array_equal(a[0], b[1])
        assert len(calls) == 1

    def test_cache_persists_across_instances(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        inner = FakeEmbeddingProvider(dim=8, seed=0)
        first = CachedEmbeddingProvider(inner, path).embed(["alpha beta"])

        class Exploding:
            dim = 8

            def embed(self, texts):
                raise AssertionError("cache miss")

        second = CachedEmbeddingProvider(Exploding(), path).embed(["alpha beta"])
        assert np.array_equal(first, second)


class TestWiring:
    def test_fake_mode_default(self, monkeypatch):
        monkeypatch.delenv("MUSE_PROVIDER_MODE", raising=False)
        assert providers_from_env().mode == "fake"

    def test_live_mode_requires_endpoints(self, monkeypatch):
        monkeypatch.setenv("MUSE_PROVIDER_MODE", "live")
        monkeypatch.delenv("MUSE_EMBED_ENDPOINT", raising=False)
        with pytest.raises(ValueError):
            providers_from_env()

    def test_live_mode_wires_endpoints(self, monkeypatch):
        for var in ("EMBED", "NLI", "LLM", "CLS"):
            monkeypatch.setenv(f"MUSE_{var}_ENDPOINT", f"http://x/{var.lower()}")
        monkeypatch.setenv("MUSE_API_KEY", "secret")
        ps = providers_from_env(mode="live")
        assert ps.embedding.endpoint == "http://x/embed"
        assert ps.entailment.auth == "secret"

    def test_fake_set_is_complete(self):
        ps = fake_providers()
        assert ps.embedding.dim == 256
        assert ps.entailment.score("a b", "a b") == 1.0
