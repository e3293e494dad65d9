from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import replace

from tenacity import AsyncRetrying, retry_if_exception_type, stop_after_attempt

from condenserec.base import ClickHistory, Item
from condenserec.constants import DEFAULT_PARSE_RETRIES
from condenserec.exceptions import ChildPromptError, InvalidArgumentError, LlmParseError
from condenserec.llm import LlmBackend, LlmRequest
from condenserec.prompt import (
    PROMPTS,
    PromptTemplate,
    parse_templates,
    render_evolution,
    render_history,
    render_item,
)
from condenserec.utils import get_content_summary, logger, verbose_debug

_NEW_TITLE_RE = re.compile(re.escape(PROMPTS["NEW_TITLE_TAG"]) + r"[ \t]*(.*)", re.I)
_INTERESTS_RE = re.compile(re.escape(PROMPTS["INTERESTS_TAG"]) + r"(.*)", re.I | re.S)
_WRAPPERS = "{}\"'`"


def _single_line(text: str) -> str:
    return " ".join(text.split())


def parse_condensed_title(raw: str) -> str:
    """Extract the title from ``[new_title]...``.

    When the tag is missing, the first nonempty line is accepted instead and
    a warning is logged.
    """
    for match in _NEW_TITLE_RE.finditer(raw):
        title = _single_line(match.group(1).strip().strip(_WRAPPERS))
        if title:
            return title

    for line in raw.splitlines():
        title = _single_line(line.strip().strip(_WRAPPERS))
        if title and not _NEW_TITLE_RE.match(line.strip()):
            logger.warning(
                f"Response lacks the {PROMPTS['NEW_TITLE_TAG']} tag, using first line: "
                f"{get_content_summary(title, 80)}"
            )
            return title
    raise LlmParseError("no condensed title in response", raw_response=raw)


def parse_interests(raw: str) -> list[str]:
    """Parse ``[interests] -a, -b, ...`` into unique phrases, first occurrence kept."""
    match = _INTERESTS_RE.search(raw)
    if match is None:
        raise LlmParseError(
            f"response lacks the {PROMPTS['INTERESTS_TAG']} tag", raw_response=raw
        )
    interests: list[str] = []
    seen: set[str] = set()
    for chunk in re.split(r"[,\n]", match.group(1)):
        phrase = _single_line(chunk.strip().lstrip("-*•").strip())
        key = phrase.lower()
        if phrase and key not in seen:
            seen.add(key)
            interests.append(phrase)
    if not interests:
        raise LlmParseError("empty interest list in response", raw_response=raw)
    return interests


def build_condense_request(prompt: PromptTemplate, item: Item) -> LlmRequest:
    return LlmRequest(
        task="condense",
        messages=[{"role": "user", "content": render_item(prompt, item)}],
        payload={"item": item, "prompt": prompt},
    )


def build_interests_request(
    prompt: PromptTemplate, history: ClickHistory, items: Mapping[str, Item]
) -> LlmRequest:
    return LlmRequest(
        task="interests",
        messages=[{"role": "user", "content": render_history(prompt, history, items)}],
        payload={
            "history": history,
            "items": [items[item_id] for item_id in history.item_ids],
            "prompt": prompt,
        },
    )


def build_evolve_request(parent: PromptTemplate, n: int) -> LlmRequest:
    return LlmRequest(
        task="evolve",
        messages=[{"role": "user", "content": render_evolution(parent, n)}],
        payload={"parent": parent, "n": n},
    )


def _parse_retrying(parse_retries: int) -> AsyncRetrying:
    return AsyncRetrying(
        stop=stop_after_attempt(parse_retries),
        retry=retry_if_exception_type(LlmParseError),
        reraise=True,
    )


async def condense_item(
    backend: LlmBackend,
    prompt: PromptTemplate,
    item: Item,
    parse_retries: int = DEFAULT_PARSE_RETRIES,
) -> str:
    request = build_condense_request(prompt, item)
    async for attempt in _parse_retrying(parse_retries):
        with attempt:
            raw = await backend.complete(request)
            verbose_debug(f"Condensed {item.id}: {raw}")
            return parse_condensed_title(raw)


async def extract_interests(
    backend: LlmBackend,
    prompt: PromptTemplate,
    history: ClickHistory,
    items: Mapping[str, Item],
    parse_retries: int = DEFAULT_PARSE_RETRIES,
) -> list[str]:
    if not history.item_ids:
        raise InvalidArgumentError(
            f"cannot extract interests of {history.user_id}: empty history"
        )
    request = build_interests_request(prompt, history, items)
    async for attempt in _parse_retrying(parse_retries):
        with attempt:
            raw = await backend.complete(request)
            verbose_debug(f"Interests of {history.user_id}: {raw}")
            return parse_interests(raw)


async def generate_child_prompts(
    backend: LlmBackend,
    parent: PromptTemplate,
    n: int,
    parse_retries: int = DEFAULT_PARSE_RETRIES,
) -> list[PromptTemplate]:
    """Ask the backend for ``n`` rewrites of ``parent``; exactly ``n`` are returned."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    request = build_evolve_request(parent, n)
    best = 0
    try:
        async for attempt in _parse_retrying(parse_retries):
            with attempt:
                raw = await backend.complete(request)
                children = parse_templates(raw)
                if len(children) < n:
                    best = max(best, len(children))
                    logger.warning(
                        f"Got {len(children)} of {n} child prompts for {parent.id}, retrying"
                    )
                    raise LlmParseError(
                        f"{len(children)} of {n} child prompts", raw_response=raw
                    )
                return _with_distinct_ids(parent, children[:n])
    except LlmParseError:
        raise ChildPromptError(obtained=best, requested=n) from None


def _with_distinct_ids(
    parent: PromptTemplate, children: list[PromptTemplate]
) -> list[PromptTemplate]:
    """Re-id children whose id repeats the parent's or an earlier child's."""
    taken = {parent.id}
    result = []
    for child in children:
        if child.id in taken:
            k = len(taken)
            while f"{parent.id}-{k}" in taken:
                k += 1
            new_id = f"{parent.id}-{k}"
            logger.warning(f"Duplicate child prompt id {child.id}, renamed to {new_id}")
            child = replace(child, id=new_id)
        taken.add(child.id)
        result.append(child)
    return result
