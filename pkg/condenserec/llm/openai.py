from __future__ import annotations

import logging
import os
from typing import Any

from openai import (
    APIConnectionError,
    APITimeoutError,
    AsyncOpenAI,
    InternalServerError,
    RateLimitError,
)
from tenacity import (
    AsyncRetrying,
    RetryCallState,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from condenserec import __version__
from condenserec.exceptions import ConfigError, LlmTransportError
from condenserec.llm import LlmConfig, LlmRequest
from condenserec.utils import VERBOSE_DEBUG, TokenTracker, logger, verbose_debug


class InvalidResponseError(Exception):
    """Custom exception class for triggering retry mechanism"""

    pass


RETRYABLE_ERRORS = (
    RateLimitError,
    APIConnectionError,
    APITimeoutError,
    InternalServerError,
    InvalidResponseError,
)


def retry_after_seconds(exc: BaseException | None) -> float | None:
    """Delay requested by a 429 response through its Retry-After header."""
    if not isinstance(exc, RateLimitError):
        return None
    response = getattr(exc, "response", None)
    if response is None:
        return None
    value = response.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


class wait_retry_after:
    """Honor Retry-After on rate limits, otherwise defer to ``fallback``."""

    def __init__(self, fallback) -> None:
        self.fallback = fallback

    def __call__(self, retry_state: RetryCallState) -> float:
        exc = retry_state.outcome.exception() if retry_state.outcome else None
        delay = retry_after_seconds(exc)
        if delay is not None:
            logger.warning(f"Rate limited, server asked to retry after {delay:.1f}s")
            return delay
        return self.fallback(retry_state)


def create_openai_async_client(
    api_key: str,
    base_url: str,
    timeout: float,
    client_configs: dict[str, Any] | None = None,
) -> AsyncOpenAI:
    """Create an AsyncOpenAI client; retries are left to tenacity."""
    default_headers = {
        "User-Agent": f"condenserec/{__version__}",
        "Content-Type": "application/json",
    }
    merged_configs = {
        **(client_configs or {}),
        "default_headers": default_headers,
        "api_key": api_key,
        "base_url": base_url,
        "timeout": timeout,
        "max_retries": 0,
    }
    return AsyncOpenAI(**merged_configs)


class OpenAIChatBackend:
    """Chat-completion backend speaking the OpenAI-compatible HTTP protocol.

    Requests are sent with temperature 0. Rate limits, timeouts, connection
    failures and empty answers are retried with exponential backoff up to
    ``max_retries`` attempts, after which ``LlmTransportError`` is raised.
    """

    def __init__(
        self,
        *,
        model: str,
        base_url: str,
        api_key_env: str,
        timeout: int,
        max_retries: int,
        max_async: int,
        token_tracker: TokenTracker | None = None,
        client_configs: dict[str, Any] | None = None,
    ) -> None:
        self.model = model
        self.base_url = base_url
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.max_async = max_async
        self.token_tracker = token_tracker or TokenTracker()
        self.client_configs = client_configs or {}
        if not os.environ.get(api_key_env):
            raise ConfigError(
                f"Environment variable {api_key_env} with the LLM API token is not set"
            )

    @classmethod
    def from_config(cls, config: LlmConfig) -> OpenAIChatBackend:
        return cls(
            model=config.model,
            base_url=config.base_url,
            api_key_env=config.api_key_env,
            timeout=config.timeout,
            max_retries=config.max_retries,
            max_async=config.max_async,
        )

    def __repr__(self) -> str:
        return (
            f"OpenAIChatBackend(model={self.model!r}, base_url={self.base_url!r}, "
            f"api_key_env={self.api_key_env!r})"
        )

    async def complete(self, request: LlmRequest) -> str:
        try:
            async for attempt in AsyncRetrying(
                stop=stop_after_attempt(self.max_retries),
                wait=wait_retry_after(wait_exponential(multiplier=1, min=4, max=10)),
                retry=retry_if_exception_type(RETRYABLE_ERRORS),
                reraise=True,
            ):
                with attempt:
                    return await self._complete_once(request)
        except RETRYABLE_ERRORS as e:
            raise LlmTransportError(
                f"LLM request failed after {self.max_retries} attempts: {e}"
            ) from e
        raise LlmTransportError("LLM request produced no attempt")

    async def _complete_once(self, request: LlmRequest) -> str:
        if not VERBOSE_DEBUG and logger.level == logging.DEBUG:
            logging.getLogger("openai").setLevel(logging.INFO)

        client = create_openai_async_client(
            api_key=os.environ[self.api_key_env],
            base_url=self.base_url,
            timeout=self.timeout,
            client_configs=self.client_configs,
        )

        logger.debug("===== Sending Query to LLM =====")
        logger.debug(f"Model: {self.model}   Base URL: {self.base_url}   Task: {request.task}")
        verbose_debug(f"Query: {request.messages[-1]['content']}")

        try:
            response = await client.chat.completions.create(
                model=self.model, messages=request.messages, temperature=0
            )
        except RETRYABLE_ERRORS as e:
            logger.error(f"OpenAI API error ({type(e).__name__}): {e}")
            await client.close()
            raise
        except Exception as e:
            logger.error(f"OpenAI API Call Failed,\nModel: {self.model},\nGot: {e}")
            await client.close()
            raise LlmTransportError(str(e)) from e

        try:
            if (
                not response
                or not response.choices
                or not hasattr(response.choices[0], "message")
                or not hasattr(response.choices[0].message, "content")
            ):
                logger.error("Invalid response from OpenAI API")
                raise InvalidResponseError("Invalid response from OpenAI API")

            content = response.choices[0].message.content
            if not content or content.strip() == "":
                logger.error("Received empty content from OpenAI API")
                raise InvalidResponseError("Received empty content from OpenAI API")

            if getattr(response, "usage", None) is not None:
                self.token_tracker.add_usage(
                    {
                        "prompt_tokens": getattr(response.usage, "prompt_tokens", 0),
                        "completion_tokens": getattr(
                            response.usage, "completion_tokens", 0
                        ),
                        "total_tokens": getattr(response.usage, "total_tokens", 0),
                    }
                )

            logger.debug(f"Response content len: {len(content)}")
            verbose_debug(f"Response: {content}")
            return content
        finally:
            await client.close()
