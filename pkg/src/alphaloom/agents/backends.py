"""Completion backends: deterministic scripted fixtures and live HTTP.

The scripted backend is a frozen fixture table keyed by
(agent name, payload fingerprint), which makes runs order-independent
and byte-reproducible.  A missing fixture is an error, never a
fallback.  ``RecordingBackend`` wraps a responder callable (or a live
backend) and captures the table a scripted replay will use.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable

import httpx

from ..errors import BackendTransportError, MissingFixtureError
from ..records import dumps_canonical, fingerprint, loads_record, stamp


@dataclass(frozen=True)
class AgentRequest:
    """One schema-validated exchange request."""

    agent_name: str
    system: str
    instruction: str
    input_payload: dict


@dataclass(frozen=True)
class AgentResponse:
    output_payload: dict
    raw_text: str
    attempts: int


class ScriptedBackend:
    """Fixture table: agent name -> payload fingerprint -> completion text.

    A fixture value may be a list of texts consumed per retry attempt
    (the last entry repeats), which scripts repair sequences.
    """

    kind = "scripted"

    def __init__(self, table: dict[str, dict[str, str | list[str]]]):
        self.table = {agent: dict(entries) for agent, entries in table.items()}

    def complete(self, request: AgentRequest, attempt: int = 0) -> str:
        fp = fingerprint(request.input_payload)
        try:
            entry = self.table[request.agent_name][fp]
        except KeyError:
            raise MissingFixtureError(
                f"no fixture for {request.agent_name} payload {fp[:12]}..."
            ) from None
        if isinstance(entry, list):
            return entry[min(attempt, len(entry) - 1)]
        return entry

    def to_file(self, path) -> None:
        record = stamp({"fixtures": self.table})
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(record))

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            record = loads_record(fh.read())
        if "fixtures" not in record:
            raise MissingFixtureError("fixture file carries no 'fixtures' table")
        return cls(record["fixtures"])


class RecordingBackend:
    """Builds a fixture table by delegating to a responder callable.

    Repeated payloads replay the recorded completion rather than
    re-invoking the responder, so a recording run behaves exactly like
    its scripted replay.
    """

    kind = "scripted"

    def __init__(self, responder: Callable[[str, dict], str]):
        self.responder = responder
        self.table: dict[str, dict[str, str]] = {}
        self.calls: dict[str, int] = {}

    def complete(self, request: AgentRequest, attempt: int = 0) -> str:
        fp = fingerprint(request.input_payload)
        agent_table = self.table.setdefault(request.agent_name, {})
        if fp not in agent_table:
            agent_table[fp] = self.responder(request.agent_name, request.input_payload)
        self.calls[request.agent_name] = self.calls.get(request.agent_name, 0) + 1
        return agent_table[fp]

    def frozen(self) -> ScriptedBackend:
        return ScriptedBackend(self.table)


@dataclass(frozen=True)
class HttpBackendConfig:
    endpoint: str
    model: str
    credential_env: str = "ALPHALOOM_API_KEY"
    timeout: float = 60.0
    max_retries: int = 2
    temperature: float = 0.0
    concurrency: int = 4

    def to_record(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "model": self.model,
            "credential_env": self.credential_env,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "temperature": self.temperature,
            "concurrency": self.concurrency,
        }

    @staticmethod
    def from_record(record: dict) -> "HttpBackendConfig":
        return HttpBackendConfig(**record)


class HttpBackend:
    """Chat-completion endpoint: system message + user message in, text out.

    The credential is read from the configured environment variable,
    never from flags or files.
    """

    kind = "http"

    def __init__(self, config: HttpBackendConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, request: AgentRequest, attempt: int = 0) -> str:
        credential = os.environ.get(self.config.credential_env)
        if not credential:
            raise BackendTransportError(
                f"credential environment variable {self.config.credential_env} is not set"
            )
        body = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.instruction},
            ],
        }
        headers = {"Authorization": f"Bearer {credential}"}
        last_error: Exception | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                response = self._client.post(self.config.endpoint, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendTransportError(
                    f"server error {response.status_code}: {response.text[:200]}"
                )
                continue
            if response.status_code != 200:
                raise BackendTransportError(
                    f"endpoint returned {response.status_code}: {response.text[:200]}"
                )
            try:
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except (
                json.JSONDecodeError,
                KeyError,
                IndexError,
                TypeError,
            ) as exc:
                raise BackendTransportError(f"malformed completion envelope: {exc}") from exc
        raise BackendTransportError(f"transport failed after retries: {last_error}")
