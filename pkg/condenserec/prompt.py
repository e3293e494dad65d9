from __future__ import annotations

import os
import re
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

from condenserec.base import ClickHistory, Item
from condenserec.exceptions import ConfigError, InvalidArgumentError

PROMPTS: dict[str, Any] = {}

PROMPTS["INPUT_HINT_HEADER"] = "Hints on the format of input:"
PROMPTS["OUTPUT_INSTRUCTION_HEADER"] = "Instructions on the format of output:"
PROMPTS["INPUT_HEADER"] = "Input:"

PROMPTS["NEW_TITLE_TAG"] = "[new_title]"
PROMPTS["INTERESTS_TAG"] = "[interests]"

PROMPTS["condense_item"] = {
    "id": "condense-v0",
    "body": """---Role---
You rewrite the content of one recommendable item into a single short title.

---Goal---
Read the title, abstract and category of the item and write one new title that keeps what a reader would need to decide whether to open it.
Answer with the new title only.""",
    "input_hint": "[title]{title}, [abs]{abs}, [cat]{category}",
    "output_instruction": "[new_title]{new_title}",
}

PROMPTS["extract_interests"] = {
    "id": "interests-v0",
    "body": """---Role---
You summarize the interests of a reader from the items they clicked.

---Goal---
Read the titles of the clicked items and list the topics the reader is interested in, most prominent first.
Each interest is a short phrase.""",
    "input_hint": "(1){title}, (2){title}, (3){title}, ...",
    "output_instruction": "[interests] -interest1, -interest2, ...",
}

PROMPTS["evolve_prompt"] = """---Role---
You improve instructions given to a language model.

---Goal---
Below is a prompt used to turn the full content of an item into a short title.
A prompt is better when the titles it produces stay closer in meaning to the original content.
Write {n} new versions of the prompt that should work better than the current one.
Keep the input hint and output instruction sections unchanged.

---Format---
Give every new prompt in exactly this section format, one after another:
---id---
<a unique id without spaces>
---body---
<instruction text>
---input_hint---
<input hint>
---output_instruction---
<output instruction>

---Current Prompt---
{parent}"""

SECTION_NAMES = ("id", "body", "input_hint", "output_instruction")
_SECTION_RE = re.compile(r"^---(id|body|input_hint|output_instruction)---[ \t]*$", re.M)
_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    """An LLM instruction with an input-hint section and an output-format section."""

    id: str
    body: str
    input_hint: str
    output_instruction: str

    def __post_init__(self) -> None:
        if not self.id or any(ch.isspace() for ch in self.id):
            raise InvalidArgumentError(
                f"prompt id must be nonempty without whitespace, got {self.id!r}"
            )
        for name in ("body", "input_hint", "output_instruction"):
            value = getattr(self, name).strip()
            object.__setattr__(self, name, value)
            if not value:
                raise InvalidArgumentError(f"prompt {self.id}: {name} is empty")
            if _SECTION_RE.search(value):
                raise InvalidArgumentError(
                    f"prompt {self.id}: {name} contains a section header line"
                )

    @property
    def fields(self) -> list[str]:
        """Placeholders declared by the input hint, in order of first use."""
        return list(dict.fromkeys(_PLACEHOLDER_RE.findall(self.input_hint)))


def default_prompt(name: str) -> PromptTemplate:
    return PromptTemplate(**PROMPTS[name])


def _fill(hint: str, values: Mapping[str, str]) -> str:
    return _PLACEHOLDER_RE.sub(lambda m: values.get(m.group(1), m.group(0)), hint)


def item_fields(item: Item) -> dict[str, str]:
    return {
        "title": item.title,
        "abs": item.abstract,
        "abstract": item.abstract,
        "cat": item.category,
        "category": item.category,
        "id": item.id,
    }


def _assemble(template: PromptTemplate, filled_input: str) -> str:
    return "\n\n".join(
        (
            template.body.strip(),
            f"{PROMPTS['INPUT_HINT_HEADER']}\n{template.input_hint.strip()}",
            f"{PROMPTS['OUTPUT_INSTRUCTION_HEADER']}\n{template.output_instruction.strip()}",
            f"{PROMPTS['INPUT_HEADER']}\n{filled_input}",
        )
    )


def render_item(template: PromptTemplate, item: Item) -> str:
    """One message asking to condense ``item``; every hint placeholder is filled."""
    return _assemble(template, _fill(template.input_hint.strip(), item_fields(item)))


def render_history(
    template: PromptTemplate, history: ClickHistory, items: Mapping[str, Item]
) -> str:
    """One message listing the clicked titles as ``(1)title, (2)title, ...``."""
    listed = ", ".join(
        f"({i}){items[item_id].title}"
        for i, item_id in enumerate(history.item_ids, start=1)
    )
    return _assemble(template, listed)


def render_evolution(parent: PromptTemplate, n: int) -> str:
    return PROMPTS["evolve_prompt"].format(n=n, parent=serialize_template(parent))


def serialize_template(template: PromptTemplate) -> str:
    parts = []
    for name in SECTION_NAMES:
        parts.append(f"---{name}---")
        parts.append(getattr(template, name).strip())
    return "\n".join(parts) + "\n"


def parse_templates(text: str) -> list[PromptTemplate]:
    """Parse every well-formed template in ``text``; malformed blocks are skipped."""
    templates: list[PromptTemplate] = []
    current: dict[str, str] = {}
    matches = list(_SECTION_RE.finditer(text))
    for i, match in enumerate(matches):
        name = match.group(1)
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        value = text[match.end() : end].strip()
        if name == "id" and current:
            _collect(current, templates)
            current = {}
        current[name] = value
    if current:
        _collect(current, templates)
    return templates


def _collect(sections: dict[str, str], out: list[PromptTemplate]) -> None:
    if set(sections) != set(SECTION_NAMES):
        return
    try:
        out.append(PromptTemplate(**sections))
    except InvalidArgumentError:
        return


def parse_template(text: str) -> PromptTemplate:
    templates = parse_templates(text)
    if len(templates) != 1:
        raise InvalidArgumentError(
            f"expected exactly one prompt template, found {len(templates)}"
        )
    return templates[0]


def load_template(path: str) -> PromptTemplate:
    if not os.path.exists(path):
        raise ConfigError(f"Prompt file not found: {path}")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        return parse_template(text)
    except InvalidArgumentError as e:
        raise ConfigError(f"{path}: {e}") from e


def save_template(template: PromptTemplate, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_template(template))
