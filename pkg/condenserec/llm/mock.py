"""
Deterministic offline LLM backend.

Every answer is a pure function of the backend configuration and the
request payload, and is written in the same output format a remote model
is asked for, so responses go through the regular parsers.
"""

from __future__ import annotations

import re
from collections import Counter
from collections.abc import Sequence

import numpy as np

from condenserec.base import Item, item_content
from condenserec.exceptions import InvalidArgumentError
from condenserec.llm import LlmConfig, LlmRequest
from condenserec.prompt import PROMPTS, PromptTemplate, serialize_template
from condenserec.utils import Tokenizer, compute_args_hash

STOPWORDS = frozenset(
    """
    a an and are as at be been but by for from has have he her his i if in into
    is it its of on or our she so that the their them they this to was we were
    what when which who will with you your not no than then there these those
    """.split()
)

# Sentences appended to a parent body to derive a child prompt. Each names
# one thing the condensed title should retain; the extractive summary budget
# grows with the number of these a prompt body contains.
EMPHASIS_EDITS = (
    "Keep the named people and organizations of the item.",
    "Keep the place where the story happens.",
    "Mention the main topic explicitly.",
    "Preserve the most informative keywords of the abstract.",
    "Retain any numbers that matter to the reader.",
    "Prefer concrete words over generic ones.",
    "Include the category when it adds information.",
    "Carry over the key event described in the abstract.",
)

SYNONYMS = {
    "rewrite": ("condense", "compress", "reformulate"),
    "short": ("brief", "compact", "concise"),
    "single": ("one",),
    "keeps": ("retains", "preserves"),
    "decide": ("judge", "determine"),
    "read": ("study", "examine"),
    "write": ("produce", "compose"),
    "answer": ("reply", "respond"),
}

_WORD_RE = re.compile(r"[A-Za-z]+")


def _case_preserving_tokens(text: str, tokenizer: Tokenizer) -> list[str]:
    return Tokenizer(lowercase=False, pattern=tokenizer.pattern).tokenize(text)


def emphasis_count(body: str) -> int:
    return sum(1 for sentence in EMPHASIS_EDITS if sentence in body)


class MockBackend:
    """Offline backend answering condense, interest and evolution requests.

    - condense: the title tokens followed by the most frequent abstract tokens,
      cut to the summary budget; in echo mode, the full item content.
    - interests: the most frequent content tokens over the clicked items.
    - evolve: children built by seeded synonym substitution plus one emphasis
      sentence each.
    """

    def __init__(
        self,
        *,
        mode: str = "extractive",
        summary_budget: int = 16,
        interest_count: int = 5,
        seed: int = 0,
        max_async: int = 4,
        tokenizer: Tokenizer | None = None,
    ) -> None:
        if mode not in ("extractive", "echo"):
            raise InvalidArgumentError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.summary_budget = summary_budget
        self.interest_count = interest_count
        self.seed = seed
        self.max_async = max_async
        self.tokenizer = tokenizer or Tokenizer()
        self.call_count = 0

    @classmethod
    def from_config(cls, config: LlmConfig) -> MockBackend:
        return cls(
            mode=config.mock_mode,
            summary_budget=config.summary_budget,
            interest_count=config.interest_count,
            seed=config.seed,
            max_async=config.max_async,
        )

    def __repr__(self) -> str:
        return (
            f"MockBackend(mode={self.mode!r}, summary_budget={self.summary_budget}, "
            f"interest_count={self.interest_count}, seed={self.seed})"
        )

    async def complete(self, request: LlmRequest) -> str:
        self.call_count += 1
        payload = request.payload
        if request.task == "condense":
            return f"{PROMPTS['NEW_TITLE_TAG']}{self.condense(payload['item'], payload['prompt'])}"
        if request.task == "interests":
            interests = self.interests(payload["items"])
            return f"{PROMPTS['INTERESTS_TAG']} " + ", ".join(f"-{i}" for i in interests)
        if request.task == "evolve":
            children = self.children(payload["parent"], payload["n"])
            return "\n".join(serialize_template(child) for child in children)
        raise InvalidArgumentError(f"unknown llm task {request.task!r}")

    def budget_for(self, prompt: PromptTemplate) -> int:
        return min(
            2 * self.summary_budget,
            self.summary_budget + 2 * emphasis_count(prompt.body),
        )

    def condense(self, item: Item, prompt: PromptTemplate) -> str:
        if self.mode == "echo":
            return item_content(item)

        budget = self.budget_for(prompt)
        title_tokens = _case_preserving_tokens(item.title, self.tokenizer)
        chosen = title_tokens[:budget]
        seen = {token.lower() for token in chosen}

        abstract_tokens = _case_preserving_tokens(item.abstract, self.tokenizer)
        counts = Counter(token.lower() for token in abstract_tokens)
        first_form: dict[str, tuple[int, str]] = {}
        for position, token in enumerate(abstract_tokens):
            first_form.setdefault(token.lower(), (position, token))
        ranked = sorted(
            (key for key in counts if key not in seen and key not in STOPWORDS),
            key=lambda key: (-counts[key], first_form[key][0]),
        )
        for key in ranked:
            if len(chosen) >= budget:
                break
            chosen.append(first_form[key][1])

        if not chosen:
            return item.title.strip()
        return " ".join(chosen)

    def interests(self, items: Sequence[Item]) -> list[str]:
        counts: Counter[str] = Counter()
        first_seen: dict[str, int] = {}
        for item in items:
            for token in self.tokenizer.tokenize(item_content(item)):
                if token in STOPWORDS or token.isdigit():
                    continue
                counts[token] += 1
                first_seen.setdefault(token, len(first_seen))
        ranked = sorted(counts, key=lambda token: (-counts[token], first_seen[token]))
        return ranked[: self.interest_count]

    def children(self, parent: PromptTemplate, n: int) -> list[PromptTemplate]:
        offset = int(compute_args_hash(self.seed, parent.id, parent.body)[:8], 16)
        children = []
        for i in range(n):
            rng = np.random.default_rng(
                int(compute_args_hash(self.seed, parent.id, parent.body, i)[:8], 16)
            )
            body = _substitute_synonyms(parent.body, rng)
            body = f"{body}\n{EMPHASIS_EDITS[(offset + i) % len(EMPHASIS_EDITS)]}"
            children.append(
                PromptTemplate(
                    id=f"{parent.id}-{i + 1}",
                    body=body,
                    input_hint=parent.input_hint,
                    output_instruction=parent.output_instruction,
                )
            )
        return children


def _substitute_synonyms(body: str, rng: np.random.Generator) -> str:
    def _replace(match: re.Match) -> str:
        word = match.group(0)
        options = SYNONYMS.get(word.lower())
        if not options or rng.random() < 0.5:
            return word
        choice = options[int(rng.integers(len(options)))]
        return choice.capitalize() if word[0].isupper() else choice

    return _WORD_RE.sub(_replace, body)
