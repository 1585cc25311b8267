"""Prompt rendering: task header, examples, main and inverted prompts.

The surface grammar is frozen so completions can be byte-compared:

    state = {"hotel_area": "east"}
    print("agent: any area preference?", "user: same area as my hotel")
    state.restaurant = find_restaurant(area=state.hotel.area)

Update lines use one ``state.<domain> = update_<domain>(...)`` call per
touched domain with keyword arguments sorted by slot name; removals render as
``slot=None``, "dontcare" as the literal string, coreferences as
``state.<domain>.<slot>``. An empty delta renders as ``pass``. Rendered
examples never contain a blank line internally, keeping them compatible with
the "\\n\\n" stop sequence.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

from .corpus import CanonicalSchema, Example, ident
from .state import (
    DONTCARE_TEXT,
    DialogueState,
    DontCare,
    LiteralValue,
    SlotName,
    SlotRef,
    StateChange,
    TurnContext,
)

_WS = re.compile(r"\s+")

_KIND_HINTS = {
    "text": "str",
    "location": "str",
    "time": "str",
    "boolean": "bool",
    "integer": "int",
}


def _clean(text: str) -> str:
    """Collapse whitespace runs; prompt lines must stay single-line."""
    return _WS.sub(" ", text).strip()


def _quote(text: str) -> str:
    return json.dumps(_clean(text), ensure_ascii=False)


@dataclass(frozen=True)
class PromptBundle:
    """The two prompts needed to score a turn.

    ``main_prompt`` ends exactly where the predicted update line begins;
    ``inverted_prefix`` ends where a bare candidate update line is appended
    for prior scoring.
    """

    main_prompt: str
    inverted_prefix: str


def render_task_definition(schema: CanonicalSchema) -> str:
    """Class-per-domain task header; slots become annotated attributes."""
    blocks = []
    for domain in schema.domains:
        lines = [f"class {ident(domain.name).capitalize()}:"]
        for slot in domain.slots:
            if slot.categorical and slot.values:
                hint = "Literal[" + ", ".join(json.dumps(v, ensure_ascii=False) for v in slot.values) + "]"
            else:
                hint = _KIND_HINTS[slot.kind]
            lines.append(f"    {ident(slot.name)}: {hint}")
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    state_lines = ["class State:"]
    for domain in schema.domains:
        state_lines.append(f"    {ident(domain.name)}: {ident(domain.name).capitalize()}")
    blocks.append("\n".join(state_lines))
    return "\n\n".join(blocks)


def _state_line(state: DialogueState) -> str:
    entries = {
        f"{ident(slot.domain)}_{ident(slot.slot)}": value
        for slot, value in state.entries.items()
    }
    body = ", ".join(f"{json.dumps(k)}: {_quote(v)}" for k, v in sorted(entries.items()))
    return "state = {" + body + "}"


def render_print_line(agent_utt: str, user_utt: str) -> str:
    return f"print({_quote('agent: ' + agent_utt)}, {_quote('user: ' + user_utt)})"


def _render_value(value) -> str:
    if isinstance(value, LiteralValue):
        return _quote(value.text)
    if isinstance(value, DontCare):
        return json.dumps(DONTCARE_TEXT)
    if isinstance(value, SlotRef):
        return f"state.{ident(value.target.domain)}.{ident(value.target.slot)}"
    raise TypeError(f"not a slot value: {value!r}")


def render_update_lines(delta: StateChange) -> str:
    """The update program for a delta: one call per touched domain."""
    if delta.is_empty():
        return "pass"
    by_domain: dict[str, dict[str, str]] = {}
    for slot, value in delta.updates.items():
        by_domain.setdefault(slot.domain, {})[slot.slot] = _render_value(value)
    for slot in delta.removals:
        by_domain.setdefault(slot.domain, {})[slot.slot] = "None"
    lines = []
    for domain in sorted(by_domain):
        args = ", ".join(f"{ident(s)}={v}" for s, v in sorted(by_domain[domain].items()))
        lines.append(f"state.{ident(domain)} = update_{ident(domain)}({args})")
    return "\n".join(lines)


def canonicalize_completion(delta: StateChange) -> str:
    """Canonical string form of a delta (the update-line grammar above)."""
    return render_update_lines(delta)


def render_example(example: Example) -> str:
    """State line, utterance line, update line(s), newline-separated."""
    ctx = example.context
    return "\n".join(
        [
            _state_line(ctx.prev_state),
            render_print_line(ctx.agent_utt, ctx.user_utt),
            render_update_lines(example.delta),
        ]
    )


def _render_inverted_example(example: Example) -> str:
    ctx = example.context
    return "\n".join(
        [
            render_update_lines(example.delta),
            _state_line(ctx.prev_state),
            render_print_line(ctx.agent_utt, ctx.user_utt),
        ]
    )


# Fixed formatting example shown when no retrieved examples are available.
# It demonstrates the grammar (including coreference) and is never parsed.
FORMATTING_EXAMPLE = Example(
    id="formatting",
    context=TurnContext(
        prev_state=DialogueState({SlotName("hotel", "name"): "the example hotel"}),
        agent_utt="anything else i can help with?",
        user_utt="yes, please book me a taxi to my hotel, leaving at 08:15",
    ),
    delta=StateChange(
        {
            SlotName("taxi", "destination"): SlotRef(SlotName("hotel", "name")),
            SlotName("taxi", "leaveat"): LiteralValue("08:15"),
        }
    ),
)


def _placed(examples: Sequence[Example]) -> list[Example]:
    # Most relevant example closest to the query: reverse selection order.
    if not examples:
        return [FORMATTING_EXAMPLE]
    return list(reversed(list(examples)))


def build_prompt(
    schema: CanonicalSchema, examples: Sequence[Example], query: TurnContext
) -> str:
    """Main prompt: header, examples, then the query up to the update line."""
    blocks = [render_task_definition(schema)]
    blocks.extend(render_example(e) for e in _placed(examples))
    blocks.append(_state_line(query.prev_state) + "\n" + render_print_line(query.agent_utt, query.user_utt))
    return "\n\n".join(blocks) + "\n"


def build_inverted_prompt(schema: CanonicalSchema, examples: Sequence[Example]) -> str:
    """Prior-estimation prompt: same examples with update lines first.

    A bare candidate update line is appended directly to the returned prefix,
    so its likelihood is estimated without conditioning on the query turn.
    """
    blocks = [render_task_definition(schema)]
    blocks.extend(_render_inverted_example(e) for e in _placed(examples))
    return "\n\n".join(blocks) + "\n\n"


def build_prompt_bundle(
    schema: CanonicalSchema, examples: Sequence[Example], query: TurnContext
) -> PromptBundle:
    return PromptBundle(
        main_prompt=build_prompt(schema, examples, query),
        inverted_prefix=build_inverted_prompt(schema, examples),
    )
