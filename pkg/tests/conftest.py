import http.server
import json
import threading

import pytest

from trapkit.experiment import ToyExperimentConfig, run_toy_experiment
from trapkit.provider import TokenSequence
from trapkit.toylm import BuiltinProvider, train


@pytest.fixture(scope="session")
def bigram_aaaa():
    """Order-2, alpha=1 model trained on the single document 'aaaa'."""
    return train(["aaaa"], order=2, alpha=1.0)[-1]


@pytest.fixture(scope="session")
def trained_provider():
    """A small trained builtin provider with non-trivial statistics."""
    docs = ["the cat sat on the mat " * 20,
            "a quick brown fox jumps over the lazy dog " * 15,
            "numbers 0123456789 and punctuation ,.;! appear here " * 10]
    return train(docs, order=3, alpha=0.5, seed=7)[-1].provider()


class _Handler(http.server.BaseHTTPRequestHandler):
    """Minimal wire-protocol server over a builtin provider, for client tests."""

    provider = None
    fail_next = {"count": 0}  # induced 500s for retry tests

    def log_message(self, *args):
        pass

    def _reply(self, code, payload):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.fail_next["count"] > 0:
            self.fail_next["count"] -= 1
            self._reply(500, {"error": "induced failure"})
            return
        length = int(self.headers["Content-Length"])
        req = json.loads(self.rfile.read(length))
        p = self.provider
        try:
            if self.path == "/v1/tokenize":
                ids = p.tokenize(req["text"]).ids
                self._reply(200, {"ids": list(ids), "provider_id": p.provider_id})
            elif self.path == "/v1/detokenize":
                self._reply(200, {"text": p.detokenize(req["ids"])})
            elif self.path == "/v1/logprobs":
                toks = TokenSequence(tuple(req["ids"]), p.provider_id)
                ctx = None
                if req.get("context_ids"):
                    ctx = TokenSequence(tuple(req["context_ids"]), p.provider_id)
                scores = p.score(toks, ctx)
                self._reply(200, {"logprobs": list(scores.logprobs)})
            elif self.path == "/v1/sample":
                prompt = TokenSequence(tuple(req["prompt_ids"]), p.provider_id)
                out = p.sample(prompt, req["max_new"], req["top_k"],
                               req["temperature"], req["seed"])
                self._reply(200, {"ids": list(out.ids),
                                  "text": p.detokenize(out.ids)})
            else:
                self._reply(400, {"error": f"unknown path {self.path}"})
        except Exception as exc:  # provider-side input errors -> 400
            self._reply(400, {"error": str(exc)})


@pytest.fixture(scope="session")
def wire_server(trained_provider):
    """(endpoint URL, handler class) of an in-process protocol server."""
    handler = _Handler
    handler.provider = trained_provider
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", handler
    server.shutdown()


@pytest.fixture(scope="session")
def toy_result():
    """The full desk-scale experiment used by the acceptance criteria.

    Trained once per session and shared; returns (result, elapsed seconds).
    """
    import time
    t0 = time.perf_counter()
    res = run_toy_experiment(ToyExperimentConfig())
    return res, time.perf_counter() - t0
