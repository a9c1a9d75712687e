"""Shared fixtures: deterministic games, the adversarial ensemble fixture, and
an in-process stub HTTP server so every live-API code path runs offline."""

from __future__ import annotations

import hashlib
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from promptshap.config import ApiConfig
from promptshap.ensemble import Mode, PredictionMatrix, ValidationSet
from promptshap.game import GameSpec
from promptshap.rng import SplitMix64

STUB_KEY = "test-key-123"
LETTERS = "ABCDE"


# ---------------------------------------------------------------------------
# deterministic games


def glove_utility(coalition) -> float:
    members = set(coalition.indices())
    return 1.0 if 0 in members and (1 in members or 2 in members) else 0.0


@pytest.fixture
def glove_game() -> GameSpec:
    return GameSpec(n=3, utility=glove_utility)


def random_table_game(n: int, seed: int) -> GameSpec:
    """Utility read from a seeded table over all 2^n masks, values in [0, 1)."""
    rng = SplitMix64(seed)
    table = [rng.uniform() for _ in range(1 << n)]

    def utility(coalition) -> float:
        return table[coalition.mask]

    return GameSpec(n=n, utility=utility, u_empty=table[0])


def make_adversarial_fixture():
    """Six prompts over four instances: c0-c2 always right, x0-x2 always wrong.

    Majority vote with the abstain tie rule gives utility 1 whenever correct
    prompts outnumber adversarial ones and 0 otherwise, including the full
    3-vs-3 set.
    """
    golds = (0, 1, 0, 1)
    instance_ids = tuple(f"q{i}" for i in range(len(golds)))
    validation = ValidationSet(instances=tuple(zip(instance_ids, golds)), num_labels=2)
    rows = [list(golds)] * 3 + [[1 - g for g in golds]] * 3
    matrix = PredictionMatrix(
        prompt_ids=("c0", "c1", "c2", "x0", "x1", "x2"),
        instance_ids=instance_ids,
        mode=Mode.HARD_LABEL,
        num_labels=2,
        hard=np.array(rows, dtype=np.int64),
    )
    return matrix, validation


@pytest.fixture
def adversarial_fixture():
    return make_adversarial_fixture()


# ---------------------------------------------------------------------------
# stub OpenAI-compatible server
#
# Chat answers are a deterministic function of the prompt content: with
# h = count of "[HELPFUL]" markers, m = count of "[MISLEADING]" markers, and
# k parsed from the question's "[k=N]" tag, the reply is correct iff
# h - m > (k mod 3) - 1, else the next letter after gold (cyclic A-E).
# Embeddings are sha256-derived, so identical texts embed identically.


class StubState:
    def __init__(self):
        self.chat_requests = 0
        self.embed_requests = 0
        self.fail_next = 0          # serve this many HTTP 500s before succeeding
        self.malformed_chat = False
        self.short_embedding_row = False
        self.embedding_dim = 8


class _StubHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _send(self, code: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        state = self.server.state
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send(400, {"error": {"message": "bad json"}})
            return
        if self.headers.get("Authorization", "") != f"Bearer {STUB_KEY}":
            self._send(401, {"error": {"message": "invalid api key"}})
            return
        if self.path == "/v1/chat/completions":
            state.chat_requests += 1
            if state.fail_next > 0:
                state.fail_next -= 1
                self._send(500, {"error": {"message": "transient failure"}})
                return
            if state.malformed_chat:
                self._send(200, {"unexpected": "shape"})
                return
            content = body["messages"][-1]["content"]
            helpful = content.count("[HELPFUL]")
            misleading = content.count("[MISLEADING]")
            k_tags = re.findall(r"\[k=(\d+)\]", content)
            k = int(k_tags[-1]) if k_tags else 0
            gold_tags = re.findall(r"\[gold=([A-E])\]", content)
            gold = gold_tags[-1] if gold_tags else "A"
            if helpful - misleading > (k % 3) - 1:
                answer = gold
            else:
                answer = LETTERS[(LETTERS.index(gold) + 1) % len(LETTERS)]
            self._send(200, {
                "choices": [
                    {"message": {"role": "assistant", "content": f"The answer is ({answer})."}}
                ]
            })
        elif self.path == "/v1/embeddings":
            state.embed_requests += 1
            data = []
            for idx, text in enumerate(body["input"]):
                digest = hashlib.sha256(text.encode("utf-8")).digest()
                vec = [round(b / 255.0 - 0.5, 6) for b in digest[: state.embedding_dim]]
                if state.short_embedding_row and idx == 0:
                    vec = vec[:-1]
                data.append({"object": "embedding", "index": idx, "embedding": vec})
            self._send(200, {"object": "list", "data": data})
        else:
            self._send(404, {"error": {"message": "no such route"}})


@pytest.fixture(scope="session")
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.state = StubState()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


@pytest.fixture
def stub(stub_server, monkeypatch):
    """Fresh stub state and a valid credential in the environment."""
    stub_server.state = StubState()
    monkeypatch.setenv("PROMPTSHAP_API_KEY", STUB_KEY)
    return stub_server


@pytest.fixture
def stub_api(stub) -> ApiConfig:
    host, port = stub.server_address
    return ApiConfig(
        base_url=f"http://{host}:{port}",
        model="stub-chat",
        embeddings_model="stub-embed",
        backoff_base=0.01,
        timeout=10.0,
    )


def stub_manifest_rows():
    """Five prompts for the augmentation pipeline: three helpful, two misleading."""
    return [
        {"id": "h0", "text": "Worked example one. [HELPFUL]", "rationale": True},
        {"id": "h1", "text": "Worked example two. [HELPFUL]", "rationale": True},
        {"id": "h2", "text": "Worked example three. [HELPFUL]", "rationale": False},
        {"id": "m0", "text": "Confusing example one. [MISLEADING]", "rationale": False},
        {"id": "m1", "text": "Confusing example two. [MISLEADING]", "rationale": False},
    ]


def stub_question_rows():
    """Six questions of stepped difficulty [k=0..5]; gold letters cycle A-D."""
    return [
        {"id": f"v{k}", "question": f"Question [k={k}] pick [gold={LETTERS[k % 4]}]",
         "gold": LETTERS[k % 4]}
        for k in range(6)
    ]
