"""HTTP client for live coalition utilities and prompt embeddings.

Talks to an OpenAI-compatible endpoint (``POST /v1/chat/completions`` and
``POST /v1/embeddings``). The credential is read from the environment
variable ``PROMPTSHAP_API_KEY`` only, never from configuration files, and
its absence is reported before any network traffic.

Coalitions are sets, but few-shot order changes model output, so exemplars
are always serialized in ascending manifest-index order. That makes the
utility a well-defined set function and lets the response cache key on a
digest of the exact payload fields.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import requests

from .cache import ResponseCache
from .coalition import Coalition
from .config import ApiConfig, Task
from .errors import (
    ConsistencyError,
    CredentialError,
    PreconditionError,
    ProtocolError,
    TransportError,
)
from .jsonio import read_jsonl
from .learning import EmbeddingMatrix, load_embeddings

API_KEY_ENV = "PROMPTSHAP_API_KEY"

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class PromptEntry:
    prompt_id: str
    text: str
    rationale_included: bool = False


@dataclass(frozen=True)
class PromptManifest:
    prompts: tuple[PromptEntry, ...]

    def __post_init__(self):
        ids = [p.prompt_id for p in self.prompts]
        if len(set(ids)) != len(ids):
            raise ConsistencyError("manifest prompt ids must be unique")
        for p in self.prompts:
            if not p.text:
                raise ConsistencyError(f"manifest prompt {p.prompt_id!r} has empty text")

    @property
    def n(self) -> int:
        return len(self.prompts)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.prompt_id for p in self.prompts)

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(p.text for p in self.prompts)


def load_manifest(path: str) -> PromptManifest:
    entries = []
    for row in read_jsonl(path):
        entries.append(
            PromptEntry(
                prompt_id=str(row["id"]),
                text=str(row["text"]),
                rationale_included=bool(row.get("rationale", False)),
            )
        )
    return PromptManifest(prompts=tuple(entries))


@dataclass(frozen=True)
class Question:
    question_id: str
    question: str
    gold: str


def load_questions(path: str) -> tuple[Question, ...]:
    rows = read_jsonl(path)
    out = tuple(
        Question(question_id=str(r["id"]), question=str(r["question"]), gold=str(r["gold"]))
        for r in rows
    )
    ids = [q.question_id for q in out]
    if len(set(ids)) != len(ids):
        raise ConsistencyError(f"{path}: question ids must be unique")
    return out


@dataclass(frozen=True)
class CompletionRequest:
    question: str
    model: str
    exemplars: tuple[str, ...] = ()
    temperature: float = 0.0
    max_tokens: int = 256
    coalition: Optional[Coalition] = None


def build_completion_request(manifest: PromptManifest, coalition: Coalition,
                             question: str, api: ApiConfig) -> CompletionRequest:
    if coalition.n != manifest.n:
        raise ConsistencyError(
            f"coalition is over {coalition.n} players but the manifest has {manifest.n}"
        )
    # ascending manifest index: the canonical exemplar order
    exemplars = tuple(manifest.prompts[i].text for i in coalition.indices())
    return CompletionRequest(
        question=question,
        model=api.model,
        exemplars=exemplars,
        temperature=api.temperature,
        max_tokens=api.max_tokens,
        coalition=coalition,
    )


def request_digest(req: CompletionRequest) -> str:
    payload = json.dumps(
        {
            "exemplars": list(req.exemplars),
            "max_tokens": req.max_tokens,
            "model": req.model,
            "question": req.question,
            "temperature": req.temperature,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _get_api_key() -> str:
    key = os.environ.get(API_KEY_ENV, "")
    if not key:
        raise CredentialError(
            f"set the {API_KEY_ENV} environment variable to use the live API",
            env_var=API_KEY_ENV,
        )
    return key


def complete(req: CompletionRequest, cache: ResponseCache, api: ApiConfig) -> str:
    digest = request_digest(req)
    hit = cache.get(digest)
    if hit is not None:
        return hit
    key = _get_api_key()
    if not api.base_url:
        raise PreconditionError("api.base_url is not configured")
    content = "\n\n".join([*req.exemplars, req.question])
    body = {
        "model": req.model,
        "messages": [{"role": "user", "content": content}],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    url = api.base_url.rstrip("/") + "/v1/chat/completions"
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    last_status = None
    last_error = None
    for attempt in range(api.attempts):
        if attempt:
            time.sleep(api.backoff_base * 2 ** (attempt - 1))
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=api.timeout)
        except requests.RequestException as exc:
            last_status, last_error = None, str(exc)
            continue
        if resp.status_code in (401, 403):
            raise CredentialError(
                f"endpoint rejected the credential (HTTP {resp.status_code})",
                status=resp.status_code,
            )
        if resp.status_code in _RETRYABLE_STATUS:
            last_status, last_error = resp.status_code, resp.text[:200]
            continue
        if resp.status_code != 200:
            raise ProtocolError(
                f"unexpected HTTP {resp.status_code} from chat completions",
                status=resp.status_code,
            )
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat completion body: {exc}") from exc
        if not isinstance(text, str):
            raise ProtocolError("chat completion content is not a string")
        cache.put(digest, text)
        return text
    raise TransportError(
        f"chat completion failed after {api.attempts} attempts",
        last_status=last_status,
        last_error=last_error,
    )


_MC_PATTERN = re.compile(r"\b([A-Ea-e])\b")
_DATE_PATTERN = re.compile(r"\b(\d{2}/\d{2}/\d{4})\b")
_NUMERIC_PATTERN = re.compile(r"-?\d+(?:\.\d+)?")
_THOUSANDS = re.compile(r"(?<=\d),(?=\d)")


def extract_answer(text: str, task: Task) -> Optional[str]:
    """Pull the final answer out of free-form model text; None if unparseable."""
    if task is Task.MULTIPLE_CHOICE:
        matches = _MC_PATTERN.findall(text)
        return matches[-1].upper() if matches else None
    if task is Task.DATE:
        matches = _DATE_PATTERN.findall(text)
        return matches[-1] if matches else None
    matches = _NUMERIC_PATTERN.findall(_THOUSANDS.sub("", text))
    return matches[-1] if matches else None


def augmentation_utility(manifest: PromptManifest, questions: Sequence[Question],
                         task: Task, cache: ResponseCache, api: ApiConfig):
    """Coalition -> mean answer accuracy over the question set.

    The empty coalition runs zero-shot, so this oracle defines its own U(empty).
    A transport error aborts the whole coalition evaluation; partial accuracies
    never escape.
    """
    if not questions:
        raise PreconditionError("augmentation utility needs at least one question")

    def oracle(coalition: Coalition) -> float:
        correct = 0
        for q in questions:
            req = build_completion_request(manifest, coalition, q.question, api)
            text = complete(req, cache, api)
            answer = extract_answer(text, task)
            if answer is not None and answer == q.gold:
                correct += 1
        return correct / len(questions)

    return oracle


def embed(texts: Sequence[str], api: ApiConfig, ids: Optional[Sequence[str]] = None,
          unit_norm: bool = False, embeddings_path: Optional[str] = None) -> np.ndarray:
    """One vector per input text, order preserved.

    With ``embeddings_path`` the vectors come from a precomputed file keyed by
    id (no network); otherwise each distinct text is embedded once over HTTP
    and duplicates share the result.
    """
    texts = list(texts)
    if embeddings_path is not None:
        if ids is None:
            raise PreconditionError("precomputed embeddings need prompt ids to select rows")
        matrix = load_embeddings(embeddings_path).select(list(ids))
        vectors = matrix.vectors.copy()
    else:
        if not texts:
            return np.zeros((0, 0), dtype=np.float64)
        key = _get_api_key()
        if not api.base_url:
            raise PreconditionError("api.base_url is not configured")
        unique = list(dict.fromkeys(texts))
        url = api.base_url.rstrip("/") + "/v1/embeddings"
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        body = {"model": api.embeddings_model, "input": unique}
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=api.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"embeddings request failed: {exc}") from exc
        if resp.status_code in (401, 403):
            raise CredentialError(
                f"endpoint rejected the credential (HTTP {resp.status_code})",
                status=resp.status_code,
            )
        if resp.status_code != 200:
            raise ProtocolError(
                f"unexpected HTTP {resp.status_code} from embeddings",
                status=resp.status_code,
            )
        try:
            data = resp.json()["data"]
            rows = [None] * len(unique)
            for item in data:
                rows[int(item["index"])] = [float(v) for v in item["embedding"]]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed embeddings body: {exc}") from exc
        if any(r is None for r in rows):
            raise ProtocolError("embeddings response is missing rows")
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise ProtocolError(f"inconsistent embedding dimensions: {sorted(dims)}")
        by_text = dict(zip(unique, rows))
        vectors = np.array([by_text[t] for t in texts], dtype=np.float64)
    if unit_norm:
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0):
            raise ProtocolError("cannot unit-normalize a zero embedding vector")
        vectors = vectors / norms[:, None]
    return vectors


def embedding_matrix_for(manifest: PromptManifest, api: ApiConfig,
                         unit_norm: bool = False,
                         embeddings_path: Optional[str] = None) -> EmbeddingMatrix:
    vectors = embed(
        manifest.texts,
        api,
        ids=manifest.ids,
        unit_norm=unit_norm,
        embeddings_path=embeddings_path,
    )
    return EmbeddingMatrix(prompt_ids=manifest.ids, vectors=vectors)
