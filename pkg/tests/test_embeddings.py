import json
import threading

import httpx
import pytest

from costaudit.errors import DimensionMismatchError, EmbeddingError, OfflineMissError
from costaudit.predict import EmbeddingCache, EmbeddingProvider, content_hash

URL = "http://embed.test/v1/embeddings"


def fake_vector(text, dim=3):
    return [float(len(text)), float(sum(map(ord, text)) % 97), float(dim)][:dim]


class Server:
    def __init__(self, fail_first=0, status=500, dim=3):
        self.calls = 0
        self.fail_first = fail_first
        self.status = status
        self.dim = dim
        self.lock = threading.Lock()
        self.auth = []

    def __call__(self, request):
        with self.lock:
            self.calls += 1
            n = self.calls
        self.auth.append(request.headers.get("authorization"))
        if n <= self.fail_first:
            return httpx.Response(self.status)
        text = json.loads(request.content)["input"]
        return httpx.Response(200, json={"data": [{"embedding": fake_vector(text, self.dim)}]})


def provider(tmp_path, server, **kw):
    kw.setdefault("backoff_base", 0)
    return EmbeddingProvider(tmp_path / "cache.tsv", endpoint_url=URL, transport=httpx.MockTransport(server), **kw)


def test_fetch_populates_cache_then_hits(tmp_path, monkeypatch):
    monkeypatch.setenv("COSTAUDIT_EMBEDDING_API_KEY", "sekret")
    srv = Server()
    p = provider(tmp_path, srv)
    v = p.get("hello")
    assert v == tuple(fake_vector("hello"))
    assert p.get("hello") == v and srv.calls == 1
    assert srv.auth == ["Bearer sekret"]
    again = provider(tmp_path, srv)
    assert again.get("hello") == v and again.network_calls == 0
    line = (tmp_path / "cache.tsv").read_text().strip().split("\t")
    assert line[0] == content_hash("hello") and line[1] == "3"


def test_offline_miss_names_hash(tmp_path):
    p = EmbeddingProvider(tmp_path / "c.tsv", offline=True)
    with pytest.raises(OfflineMissError, match=content_hash("nope")):
        p.get("nope")


def test_retries_then_succeeds(tmp_path):
    srv = Server(fail_first=2, status=429)
    p = provider(tmp_path, srv, max_attempts=3)
    assert p.get("x") == tuple(fake_vector("x"))
    assert p.network_calls == 3


def test_retry_exhaustion(tmp_path):
    p = provider(tmp_path, Server(fail_first=10), max_attempts=2)
    with pytest.raises(EmbeddingError, match="after 2 attempts"):
        p.get("x")


def test_auth_failure_not_retried(tmp_path):
    srv = Server(fail_first=10, status=401)
    with pytest.raises(EmbeddingError, match="credentials"):
        provider(tmp_path, srv).get("x")
    assert srv.calls == 1


def test_dimension_drift(tmp_path):
    provider(tmp_path, Server(dim=3)).get("a")
    with pytest.raises(DimensionMismatchError):
        provider(tmp_path, Server(dim=2)).get("b")


def test_corrupt_cache_line(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("abc\t3\t1.0,2.0\n")
    with pytest.raises(DimensionMismatchError):
        EmbeddingCache(path)
    path.write_text("garbage\n")
    with pytest.raises(EmbeddingError, match="malformed"):
        EmbeddingCache(path)


def test_concurrent_get_many_writes_whole_lines(tmp_path):
    srv = Server()
    p = provider(tmp_path, srv, max_in_flight=8)
    texts = [f"text {i}" for i in range(40)] * 2
    out = p.get_many(texts)
    assert len(out) == 40 and srv.calls == 40
    reloaded = EmbeddingCache(tmp_path / "cache.tsv")
    assert len(reloaded) == 40
    assert all(reloaded.get(content_hash(t)) == v for t, v in out.items())


def test_identical_texts_identical_vectors(tmp_path):
    p = provider(tmp_path, Server())
    assert p.get("same") is p.get("same")


def test_no_endpoint_configured(tmp_path, monkeypatch):
    monkeypatch.delenv("COSTAUDIT_EMBEDDING_URL", raising=False)
    with pytest.raises(EmbeddingError, match="no embedding endpoint"):
        EmbeddingProvider(tmp_path / "c.tsv").get("x")
