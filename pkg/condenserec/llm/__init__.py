from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal, Protocol, runtime_checkable

from condenserec.constants import (
    DEFAULT_API_KEY_ENV,
    DEFAULT_INTEREST_COUNT,
    DEFAULT_LLM_BASE_URL,
    DEFAULT_LLM_MAX_ASYNC,
    DEFAULT_LLM_MODEL,
    DEFAULT_MAX_RETRIES,
    DEFAULT_SUMMARY_BUDGET,
    DEFAULT_TIMEOUT,
)
from condenserec.exceptions import InvalidArgumentError
from condenserec.utils import get_env_value

LlmTask = Literal["condense", "interests", "evolve"]


@dataclass(frozen=True)
class LlmRequest:
    """One completion request.

    ``messages`` is the chat message list a remote model sees. ``payload``
    carries the same input in structured form (item, history items or
    parent prompt) so offline backends need not parse the rendered text.
    """

    task: LlmTask
    messages: list[dict[str, str]]
    payload: dict[str, Any] = field(default_factory=dict)


@runtime_checkable
class LlmBackend(Protocol):
    max_async: int

    async def complete(self, request: LlmRequest) -> str: ...


@dataclass
class LlmConfig:
    """Backend selection and settings."""

    kind: Literal["mock", "openai"] = "mock"
    """"mock" runs offline and deterministically; "openai" calls a chat-completion endpoint."""

    model: str = get_env_value("LLM_MODEL", DEFAULT_LLM_MODEL)
    base_url: str = get_env_value("LLM_BINDING_HOST", DEFAULT_LLM_BASE_URL)

    api_key_env: str = DEFAULT_API_KEY_ENV
    """Name of the environment variable holding the bearer token; the token itself is never stored."""

    timeout: int = get_env_value("TIMEOUT", DEFAULT_TIMEOUT, int)
    max_retries: int = DEFAULT_MAX_RETRIES
    max_async: int = get_env_value("MAX_ASYNC", DEFAULT_LLM_MAX_ASYNC, int)

    mock_mode: Literal["extractive", "echo"] = "extractive"
    """"echo" returns the full item content as the condensed title."""

    summary_budget: int = DEFAULT_SUMMARY_BUDGET
    """Token budget of a condensed title produced by the mock backend."""

    interest_count: int = DEFAULT_INTEREST_COUNT
    """Interests returned per user by the mock backend."""

    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "openai"):
            raise InvalidArgumentError(f"unknown llm backend {self.kind!r}")
        if self.mock_mode not in ("extractive", "echo"):
            raise InvalidArgumentError(f"unknown mock mode {self.mock_mode!r}")
        for name in ("timeout", "max_retries", "max_async", "summary_budget", "interest_count"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")


def create_llm_backend(config: LlmConfig | None = None) -> LlmBackend:
    config = config or LlmConfig()
    if config.kind == "openai":
        from condenserec.llm.openai import OpenAIChatBackend

        return OpenAIChatBackend.from_config(config)

    from condenserec.llm.mock import MockBackend

    return MockBackend.from_config(config)


__all__ = [
    "LlmBackend",
    "LlmConfig",
    "LlmRequest",
    "LlmTask",
    "create_llm_backend",
]
