"""Uniform interface to chat-completion model backends.

A backend turns a :class:`CompletionRequest` into completions and can
optionally report the probabilities of caller-supplied candidate tokens at
the next response position, which is the minimal capability the step-scoring
path needs. Real backends speak an OpenAI-compatible wire protocol over
HTTP; the deterministic mock lives in :mod:`steplab.mock`.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Protocol, runtime_checkable

import httpx

from .errors import CapabilityError, ConfigError, ContractError, TransportError
from .records import canonical_json, content_hash

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Message:
    """One chat message; ``image`` is an opaque reference forwarded verbatim."""

    role: str
    text: str
    image: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "text": self.text, "image": self.image}


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_new_tokens: int = 1024
    n: int = 1
    want_token_probs: bool = False
    candidate_tokens: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ContractError("request needs n >= 1")
        if self.temperature < 0:
            raise ContractError("temperature must be >= 0")
        if self.max_new_tokens < 1:
            raise ContractError("max_new_tokens must be >= 1")
        if not self.messages:
            raise ContractError("request needs at least one message")

    def fingerprint(self) -> str:
        payload = {
            "messages": [m.to_dict() for m in self.messages],
            "temperature": self.temperature,
            "max_new_tokens": self.max_new_tokens,
            "n": self.n,
            "want_token_probs": self.want_token_probs,
            "candidate_tokens": list(self.candidate_tokens or ()),
        }
        return content_hash(payload)


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str = "stop"
    token_probs: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if self.token_probs is not None:
            for token, prob in self.token_probs.items():
                if not 0.0 <= prob <= 1.0:
                    raise ContractError(f"probability for token {token!r} out of [0, 1]")


@runtime_checkable
class Backend(Protocol):
    """Minimal backend surface every critic and policy caller relies on."""

    name: str
    supports_token_probs: bool
    supports_slot_probs: bool

    def complete(self, request: CompletionRequest) -> list[Completion]:
        ...

    def slot_token_probs(self, request: CompletionRequest) -> list[dict[str, float]]:
        """Candidate-token probabilities at every placeholder assistant turn."""
        ...


@dataclass
class EndpointConfig:
    """Connection settings for an OpenAI-compatible chat-completion endpoint."""

    base_url: str
    model: str
    api_key: str = ""
    max_in_flight: int = 8
    max_attempts: int = 5
    backoff_base: float = 0.5
    backoff_cap: float = 30.0
    timeout: float = 120.0

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EndpointConfig:
        if "base_url" not in data or "model" not in data:
            raise ConfigError("endpoint config needs base_url and model")
        api_key = data.get("api_key", "")
        env_name = data.get("api_key_env")
        if env_name:
            api_key = os.environ.get(env_name, api_key)
        return cls(
            base_url=str(data["base_url"]).rstrip("/"),
            model=data["model"],
            api_key=api_key,
            max_in_flight=int(data.get("max_in_flight", 8)),
            max_attempts=int(data.get("max_attempts", 5)),
            backoff_base=float(data.get("backoff_base", 0.5)),
            backoff_cap=float(data.get("backoff_cap", 30.0)),
            timeout=float(data.get("timeout", 120.0)),
        )


class OpenAIChatBackend:
    """OpenAI-compatible chat-completions client with bounded in-flight requests.

    Transport failures and 5xx responses are retried with exponential backoff
    up to ``max_attempts``; exhaustion raises :class:`TransportError` carrying
    the attempt count so resumable jobs can surface it.
    """

    supports_slot_probs = False

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.name = f"openai:{config.model}"
        self.supports_token_probs = True
        self._semaphore = threading.Semaphore(config.max_in_flight)
        self._client = httpx.Client(
            timeout=config.timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {config.api_key}"} if config.api_key else {},
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, request: CompletionRequest) -> list[Completion]:
        payload = self._payload(request)
        url = f"{self.config.base_url}/chat/completions"
        data = self._post_with_retry(url, payload)
        choices = data.get("choices", [])
        if len(choices) != request.n:
            raise TransportError(
                f"backend returned {len(choices)} choices, expected {request.n}", attempts=1
            )
        completions = []
        for choice in choices:
            token_probs = None
            if request.want_token_probs:
                token_probs = self._first_token_probs(choice, request.candidate_tokens)
            completions.append(
                Completion(
                    text=choice.get("message", {}).get("content", "") or "",
                    finish_reason=choice.get("finish_reason", "stop") or "stop",
                    token_probs=token_probs,
                )
            )
        return completions

    def slot_token_probs(self, request: CompletionRequest) -> list[dict[str, float]]:
        raise CapabilityError(self.name, "multi-slot probability readout")

    def _payload(self, request: CompletionRequest) -> dict[str, Any]:
        messages: list[dict[str, Any]] = []
        for message in request.messages:
            if message.image:
                content: Any = [
                    {"type": "image_url", "image_url": {"url": message.image}},
                    {"type": "text", "text": message.text},
                ]
            else:
                content = message.text
            messages.append({"role": message.role, "content": content})
        payload: dict[str, Any] = {
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
            "n": request.n,
        }
        if request.want_token_probs:
            payload["logprobs"] = True
            payload["top_logprobs"] = 20
        return payload

    def _post_with_retry(self, url: str, payload: dict[str, Any]) -> dict[str, Any]:
        last_error = "no attempt made"
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                with self._semaphore:
                    response = self._client.post(url, json=payload)
                if response.status_code < 400:
                    return response.json()
                if response.status_code < 500:
                    raise ConfigError(
                        f"backend rejected request ({response.status_code}): {response.text[:200]}"
                    )
                last_error = f"server error {response.status_code}"
            except (httpx.TransportError, json.JSONDecodeError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            if attempt < self.config.max_attempts:
                delay = min(self.config.backoff_cap, self.config.backoff_base * 2 ** (attempt - 1))
                log.warning("request failed (%s), retrying in %.1fs", last_error, delay)
                time.sleep(delay)
        raise TransportError(last_error, attempts=self.config.max_attempts)

    def _first_token_probs(
        self, choice: dict[str, Any], candidates: tuple[str, ...] | None
    ) -> dict[str, float]:
        logprobs = choice.get("logprobs")
        if not logprobs or not logprobs.get("content"):
            raise CapabilityError(self.name, "token probabilities")
        top = logprobs["content"][0].get("top_logprobs", [])
        probs = {entry["token"]: math.exp(entry["logprob"]) for entry in top}
        if candidates is not None:
            probs = {token: probs.get(token, 0.0) for token in candidates}
        return probs


def load_structured_file(path: Path | str) -> Any:
    """Load a JSON or YAML config file by extension."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


def backend_from_config(data: Mapping[str, Any], seed: int | None = None) -> Backend:
    """Build a backend from a declarative endpoints config."""
    kind = data.get("kind")
    if kind == "openai":
        return OpenAIChatBackend(EndpointConfig.from_dict(data))
    if kind == "mock":
        from .mock import MockBackend, MockBackendScript
        from .records import ReasoningSample, read_jsonl

        script = MockBackendScript.from_dict(data.get("script", {}))
        if seed is not None:
            script = script.with_seed(seed)
        answer_key: dict[str, str] = dict(data.get("answer_key", {}))
        source = data.get("answer_key_from")
        if source:
            for sample in read_jsonl(source, ReasoningSample):
                answer_key[sample.question] = sample.ground_truth
        return MockBackend(script, answer_key=answer_key)
    raise ConfigError(f"unknown backend kind {kind!r}")


def load_backend(path: Path | str, seed: int | None = None) -> Backend:
    data = load_structured_file(path)
    if not isinstance(data, Mapping):
        raise ConfigError(f"endpoints config {path} must be a mapping")
    return backend_from_config(data, seed=seed)


def request_repr(request: CompletionRequest) -> str:
    """Stable textual form of a request, used in logs and journals."""
    return canonical_json(
        {
            "fingerprint": request.fingerprint(),
            "n": request.n,
            "temperature": request.temperature,
        }
    )
