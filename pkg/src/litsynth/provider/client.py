"""Uniform gateway to generation and embedding services.

One ``Provider`` serves three modes: ``live`` (call the backend), ``record``
(call the backend and log every exchange), and ``replay`` (serve recorded
responses with no backend at all). Structured completions are parsed,
schema-validated, and automatically repaired up to a per-request budget.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import httpx
import jsonschema
import numpy as np

from ..errors import ProviderError, ProviderTransportError, StructuredOutputError, TemplateError
from .templates import TEMPLATES, PromptTemplate, render_template
from .transcript import RECORD, REPLAY, Transcript, embedding_fingerprint, request_fingerprint

logger = logging.getLogger(__name__)

LIVE = "live"
DEFAULT_EMBEDDING_MODEL = "all-MiniLM-L6-v2"

_FENCE_RE = re.compile(r"^```[A-Za-z0-9_-]*[ \t]*\n(.*?)\n?```\s*$", re.DOTALL)


@dataclass(frozen=True)
class ModelProfile:
    name: str
    model: str
    reasoning_effort: str | None = None
    temperature: float | None = None

    def key(self) -> dict:
        return {
            "name": self.name,
            "model": self.model,
            "reasoning_effort": self.reasoning_effort,
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    variables: Mapping[str, str]
    model_profile: ModelProfile
    max_repair_attempts: int = 1
    # Appended to the rendered prompt; not part of the request fingerprint.
    repair_context: str | None = None
    # Per-request tightening of the template's shape (e.g. exact item counts).
    expected_shape: Mapping[str, object] | None = None

    def __post_init__(self):
        if self.max_repair_attempts < 0:
            raise ValueError("max_repair_attempts must be >= 0")


def strip_code_fence(text: str) -> str:
    """Remove a single wrapping code fence; non-fenced content is untouched."""
    match = _FENCE_RE.match(text.strip())
    return match.group(1) if match else text


def validate_shape(value: Any, schema: Mapping[str, object]) -> list[str]:
    validator = jsonschema.Draft202012Validator(schema)
    return sorted(f"{err.json_path}: {err.message}" for err in validator.iter_errors(value))


def _repair_preamble(violations: Sequence[str]) -> str:
    bullets = "\n".join(f"- {v}" for v in violations)
    return (
        "Your previous response did not satisfy the required output format:\n"
        f"{bullets}\n"
        "Return only a corrected response that follows the required format exactly."
    )


class HttpBackend:
    """Live backend speaking to OpenAI-compatible chat and embeddings endpoints."""

    def __init__(
        self,
        chat_endpoint: str,
        embeddings_endpoint: str,
        api_key: str = "",
        timeout: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.chat_endpoint = chat_endpoint
        self.embeddings_endpoint = embeddings_endpoint
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, prompt: str, profile: ModelProfile) -> str:
        payload: dict = {
            "model": profile.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if profile.temperature is not None:
            payload["temperature"] = profile.temperature
        if profile.reasoning_effort is not None:
            payload["reasoning_effort"] = profile.reasoning_effort
        try:
            response = self._client.post(self.chat_endpoint, json=payload, headers=self._headers)
            response.raise_for_status()
            return response.json()["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise ProviderTransportError(f"completion request failed: {exc}") from exc

    def embed(self, texts: Sequence[str], model: str) -> list[list[float]]:
        try:
            response = self._client.post(
                self.embeddings_endpoint,
                json={"model": model, "input": list(texts)},
                headers=self._headers,
            )
            response.raise_for_status()
            data = sorted(response.json()["data"], key=lambda item: item["index"])
            return [item["embedding"] for item in data]
        except httpx.HTTPError as exc:
            raise ProviderTransportError(f"embedding request failed: {exc}") from exc


class ScriptedBackend:
    """Callable-driven backend for tests and offline fixture recording."""

    def __init__(self, complete=None, embed=None):
        self._complete = complete
        self._embed = embed

    def complete(self, prompt: str, profile: ModelProfile) -> str:
        if self._complete is None:
            raise ProviderTransportError("no completion script configured")
        return self._complete(prompt, profile)

    def embed(self, texts: Sequence[str], model: str) -> list[list[float]]:
        if self._embed is None:
            raise ProviderTransportError("no embedding script configured")
        return self._embed(texts, model)


class Provider:
    def __init__(
        self,
        mode: str = LIVE,
        *,
        backend=None,
        transcript: Transcript | None = None,
        templates: Mapping[str, PromptTemplate] | None = None,
        embedding_model: str = DEFAULT_EMBEDDING_MODEL,
    ):
        if mode not in (LIVE, RECORD, REPLAY):
            raise ValueError(f"unknown provider mode {mode!r}")
        if mode in (LIVE, RECORD) and backend is None:
            raise ValueError(f"{mode} mode requires a backend")
        if mode in (RECORD, REPLAY) and transcript is None:
            raise ValueError(f"{mode} mode requires a transcript")
        self.mode = mode
        self.backend = backend
        self.transcript = transcript
        self.templates = dict(templates if templates is not None else TEMPLATES)
        self.embedding_model = embedding_model

    def _template(self, template_id: str) -> PromptTemplate:
        try:
            return self.templates[template_id]
        except KeyError:
            raise TemplateError(f"unknown template {template_id!r}") from None

    def complete_raw(self, request: CompletionRequest) -> str:
        template = self._template(request.template_id)
        fingerprint = request_fingerprint(
            request.template_id, request.variables, request.model_profile.key()
        )
        if self.mode == REPLAY:
            return self.transcript.lookup(fingerprint)
        prompt = render_template(template, request.variables)
        if request.repair_context:
            prompt = f"{prompt}\n\n{request.repair_context}"
        raw = self.backend.complete(prompt, request.model_profile)
        if self.mode == RECORD:
            self.transcript.record(fingerprint, request.template_id, raw)
        return raw

    def complete_structured(self, request: CompletionRequest) -> Any:
        """Complete, parse, and validate; re-request with a repair preamble on failure."""
        template = self._template(request.template_id)
        schema = request.expected_shape or template.expected_shape
        current = request
        attempts_left = request.max_repair_attempts
        while True:
            raw = self.complete_raw(current)
            text = strip_code_fence(raw)
            try:
                value = json.loads(text)
            except json.JSONDecodeError as exc:
                violations = [f"response is not valid JSON: {exc}"]
            else:
                violations = validate_shape(value, schema)
                if not violations:
                    return value
            if attempts_left <= 0:
                raise StructuredOutputError(
                    f"structured output for {request.template_id!r} failed validation: "
                    + "; ".join(violations),
                    raw_text=raw,
                    violations=violations,
                )
            attempts_left -= 1
            logger.info(
                "repairing %s output (%d violation(s), %d attempt(s) left)",
                request.template_id,
                len(violations),
                attempts_left,
            )
            current = replace(request, repair_context=_repair_preamble(violations))

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        """Embed texts into unit-norm vectors, one per text, all the same dimension."""
        if not texts:
            return []
        for text in texts:
            if not isinstance(text, str) or not text:
                raise ValueError("texts must be non-empty strings")
        if self.mode == REPLAY:
            vectors = [
                json.loads(self.transcript.lookup(embedding_fingerprint(self.embedding_model, t)))
                for t in texts
            ]
            self._check_dims(vectors)
            return vectors
        vectors = self._normalize(self.backend.embed(list(texts), self.embedding_model))
        if self.mode == RECORD:
            for text, vector in zip(texts, vectors):
                self.transcript.record(
                    embedding_fingerprint(self.embedding_model, text),
                    "__embed__",
                    json.dumps(vector),
                )
        return vectors

    @staticmethod
    def _check_dims(vectors: list[list[float]]) -> None:
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise ProviderError(f"embedding dimensions disagree: {sorted(dims)}")

    @staticmethod
    def _normalize(vectors) -> list[list[float]]:
        arr = np.asarray(vectors, dtype=float)
        if arr.ndim != 2:
            raise ProviderError("embedding backend returned ragged or non-2d vectors")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(norms == 0):
            raise ProviderError("embedding backend returned a zero-norm vector")
        normalized = arr / norms[:, None]
        return [[float(x) for x in row] for row in normalized]

    def fan_out(
        self, requests: Sequence[CompletionRequest], concurrency_limit: int
    ) -> list[Any]:
        """Run structured completions in parallel, bounded by ``concurrency_limit``.

        Results come back in request order; a failed request leaves its
        exception in the corresponding slot instead of raising.
        """
        if concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if not requests:
            return []
        results: list[Any] = [None] * len(requests)
        with ThreadPoolExecutor(max_workers=concurrency_limit) as executor:
            futures = [executor.submit(self.complete_structured, r) for r in requests]
            for index, future in enumerate(futures):
                try:
                    results[index] = future.result()
                except Exception as exc:  # noqa: BLE001 - per-slot isolation is the contract
                    results[index] = exc
        return results
