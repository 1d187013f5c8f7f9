"""LLM client abstraction.

Two implementations of one contract, `complete(prompt, params) -> text`:
a transcript-replay mock for deterministic tests and an HTTP
chat-completions client for real endpoints. Timeout and retry counts
travel in the params dict so callers stay vendor-neutral.
"""

from __future__ import annotations

import hashlib
import json
import os
import urllib.error
import urllib.request
from pathlib import Path
from typing import Protocol as ClientProtocol

from .errors import LLMUnavailable

API_KEY_ENV = "VCLOSE_API_KEY"


class LLMClient(ClientProtocol):
    label: str

    def complete(self, prompt: str, params: dict | None = None) -> str: ...


def prompt_key(prompt: str) -> str:
    """Transcript key for a prompt: sha256 hex of its UTF-8 bytes."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class TranscriptClient:
    """Replays a recorded transcript: JSON map of prompt-hash to reply.

    A "*" entry, if present, answers any prompt without its own entry;
    otherwise unknown prompts raise LLMUnavailable.
    """

    def __init__(self, transcript: dict[str, str], label: str = "mock"):
        self.transcript = dict(transcript)
        self.label = label
        self.calls = 0

    @classmethod
    def from_file(cls, path, label: str = "mock") -> "TranscriptClient":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise LLMUnavailable(f"cannot load transcript '{path}': {exc}") from exc
        if not isinstance(data, dict):
            raise LLMUnavailable(f"transcript '{path}' is not a JSON object")
        return cls(data, label=label)

    def complete(self, prompt: str, params: dict | None = None) -> str:
        self.calls += 1
        key = prompt_key(prompt)
        if key in self.transcript:
            return self.transcript[key]
        if "*" in self.transcript:
            return self.transcript["*"]
        raise LLMUnavailable(
            f"transcript '{self.label}' has no reply for prompt {key[:12]}"
        )


class HttpChatClient:
    """Minimal chat-completions client over urllib.

    The API key is read from the environment (API_KEY_ENV) at call time
    and sent as a bearer token when present.
    """

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        label: str = "http",
        api_key_env: str = API_KEY_ENV,
    ):
        self.endpoint = endpoint
        self.model = model
        self.label = label
        self.api_key_env = api_key_env

    def complete(self, prompt: str, params: dict | None = None) -> str:
        params = params or {}
        payload: dict = {
            "model": params.get("model", self.model),
            "messages": [{"role": "user", "content": prompt}],
        }
        for passthrough in ("temperature", "max_tokens"):
            if passthrough in params:
                payload[passthrough] = params[passthrough]
        body = json.dumps(payload).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        timeout = float(params.get("timeout", 30.0))
        attempts = 1 + int(params.get("retries", 0))
        last_error: Exception | None = None
        for _ in range(attempts):
            request = urllib.request.Request(self.endpoint, data=body, headers=headers)
            try:
                with urllib.request.urlopen(request, timeout=timeout) as resp:
                    reply = json.loads(resp.read().decode("utf-8"))
                return _reply_text(reply)
            except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
                last_error = exc
        raise LLMUnavailable(
            f"endpoint '{self.endpoint}' failed after {attempts} attempt(s): "
            f"{last_error}"
        )


def _reply_text(reply: dict) -> str:
    try:
        return reply["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        pass
    if isinstance(reply.get("text"), str):
        return reply["text"]
    raise LLMUnavailable("endpoint reply carries no completion text")


def make_llm_client(spec: str, label: str = "") -> LLMClient:
    """Build a client from a spec string.

    `mock:<transcript.json>` replays a transcript; `http://...`,
    `https://...`, or `http:<url>` talk to a chat endpoint.
    """
    if spec.startswith("mock:"):
        return TranscriptClient.from_file(spec[len("mock:"):], label=label or "mock")
    if spec.startswith(("http://", "https://")):
        return HttpChatClient(spec, label=label or "http")
    if spec.startswith("http:"):
        return HttpChatClient(spec[len("http:"):], label=label or "http")
    raise ValueError(f"unrecognized LLM spec '{spec}' (expected mock:... or http...)")
