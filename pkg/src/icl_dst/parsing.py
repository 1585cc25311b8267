"""Parsing of LM completions (the update-line grammar) into state changes.

Grammar, per statement (statements separated by newlines or semicolons):

    stmt    := "pass"
             | "state" "." domain "=" callname "(" [arg {"," arg} [","]] ")"
    arg     := slot "=" value
    value   := quoted string | bare integer | true | false | None
             | dontcare | "state" "." domain "." slot

Lexing is lenient: whitespace is free, single or double quotes work, trailing
commas are fine, and keywords are case-insensitive. Any callname made of
lowercase letters and underscores is accepted. Booleans map to the "yes"/"no"
label convention, a ``None`` value marks a slot removal, and duplicate slot
assignments resolve last-wins. Parsing never raises on arbitrary input; it
returns a Rejected outcome with a reason code instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .corpus import CanonicalSchema
from .state import (
    DONT_CARE,
    LiteralValue,
    SlotName,
    SlotRef,
    SlotValue,
    StateChange,
)

# Stop sequences used when sampling completions; re-applied defensively.
STOP_SEQUENCES = ("\n\n", "#", "print(")

REASON_SYNTAX = "syntax"
REASON_UNKNOWN_DOMAIN = "unknown-domain"
REASON_UNKNOWN_SLOT = "unknown-slot"
REASON_BAD_VALUE = "bad-value"
REASON_BAD_REFERENCE = "bad-reference"

_CALLNAME = re.compile(r"[a-z_]+\Z")


@dataclass(frozen=True)
class Parsed:
    delta: StateChange


@dataclass(frozen=True)
class Rejected:
    reason: str
    span: tuple[int, int]


ParseOutcome = Union[Parsed, Rejected]


def strip_at_stops(text: str, stops: tuple[str, ...] = STOP_SEQUENCES) -> str:
    """Truncate at the first occurrence of any stop sequence."""
    cut = len(text)
    for stop in stops:
        idx = text.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


@dataclass(frozen=True)
class _Token:
    kind: str  # NAME NUMBER STRING SEP . = , ( )
    value: str
    start: int
    end: int


class _Reject(Exception):
    def __init__(self, reason: str, span: tuple[int, int]):
        super().__init__(reason)
        self.reason = reason
        self.span = span


_TOKEN_RE = re.compile(
    r"""
    (?P<WS>[^\S\n]+)
  | (?P<SEP>[\n;]+)
  | (?P<STRING>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<NUMBER>\d+)
  | (?P<NAME>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<OP>[.=,()])
    """,
    re.VERBOSE,
)

_UNESCAPE = re.compile(r"\\(.)")


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise _Reject(REASON_SYNTAX, (pos, pos + 1))
        kind = match.lastgroup
        value = match.group()
        if kind == "OP":
            kind = value
        if kind != "WS":
            tokens.append(_Token(kind, value, match.start(), match.end()))
        pos = match.end()
    return tokens


def _string_content(token: _Token) -> str:
    return _UNESCAPE.sub(r"\1", token.value[1:-1])


class _Parser:
    def __init__(self, tokens: list[_Token], schema: CanonicalSchema, text_len: int):
        self.tokens = tokens
        self.pos = 0
        self.schema = schema
        self.end_span = (text_len, text_len)

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        token = self.peek()
        if token is None:
            raise _Reject(REASON_SYNTAX, self.end_span)
        self.pos += 1
        return token

    def expect(self, kind: str) -> _Token:
        token = self.next()
        if token.kind != kind:
            raise _Reject(REASON_SYNTAX, (token.start, token.end))
        return token

    def _skip_separators(self) -> None:
        while (token := self.peek()) is not None and token.kind == "SEP":
            self.pos += 1

    def parse(self) -> StateChange:
        # slot -> value, with None marking a removal; last assignment wins.
        assignments: dict[SlotName, SlotValue | None] = {}
        self._skip_separators()
        while self.peek() is not None:
            self._statement(assignments)
            token = self.peek()
            if token is not None:
                if token.kind != "SEP":
                    raise _Reject(REASON_SYNTAX, (token.start, token.end))
                self._skip_separators()
        updates = {s: v for s, v in assignments.items() if v is not None}
        removals = frozenset(s for s, v in assignments.items() if v is None)
        return StateChange(updates, removals)

    def _statement(self, assignments: dict) -> None:
        token = self.expect("NAME")
        word = token.value.lower()
        if word == "pass":
            return
        if word != "state":
            raise _Reject(REASON_SYNTAX, (token.start, token.end))
        self.expect(".")
        domain_tok = self.expect("NAME")
        domain = self.schema.domain_by_ident(domain_tok.value)
        if domain is None:
            raise _Reject(REASON_UNKNOWN_DOMAIN, (domain_tok.start, domain_tok.end))
        self.expect("=")
        call_tok = self.expect("NAME")
        if not _CALLNAME.match(call_tok.value):
            raise _Reject(REASON_SYNTAX, (call_tok.start, call_tok.end))
        self.expect("(")
        self._arguments(domain.name, assignments)
        self.expect(")")

    def _arguments(self, domain: str, assignments: dict) -> None:
        token = self.peek()
        if token is not None and token.kind == ")":
            return
        while True:
            slot_tok = self.expect("NAME")
            slot_name = self.schema.slot_by_ident(domain, slot_tok.value)
            if slot_name is None:
                raise _Reject(REASON_UNKNOWN_SLOT, (slot_tok.start, slot_tok.end))
            self.expect("=")
            assignments[SlotName(domain, slot_name)] = self._value()
            token = self.peek()
            if token is not None and token.kind == ",":
                self.next()
                after = self.peek()
                if after is not None and after.kind == ")":
                    return  # trailing comma
                continue
            return

    def _value(self) -> SlotValue | None:
        token = self.next()
        if token.kind == "STRING":
            content = _string_content(token)
            if content.lower() == "dontcare":
                return DONT_CARE
            if not content:
                raise _Reject(REASON_BAD_VALUE, (token.start, token.end))
            return LiteralValue(content)
        if token.kind == "NUMBER":
            return LiteralValue(token.value)
        if token.kind == "NAME":
            word = token.value.lower()
            if word == "true":
                return LiteralValue("yes")
            if word == "false":
                return LiteralValue("no")
            if word == "none":
                return None
            if word == "dontcare":
                return DONT_CARE
            if word == "state":
                return self._reference(token)
            raise _Reject(REASON_BAD_VALUE, (token.start, token.end))
        # Punctuation or a separator where a value belongs: broken syntax.
        raise _Reject(REASON_SYNTAX, (token.start, token.end))

    def _reference(self, state_tok: _Token) -> SlotRef:
        self.expect(".")
        domain_tok = self.expect("NAME")
        domain = self.schema.domain_by_ident(domain_tok.value)
        if domain is None:
            raise _Reject(REASON_BAD_REFERENCE, (domain_tok.start, domain_tok.end))
        self.expect(".")
        slot_tok = self.expect("NAME")
        slot_name = self.schema.slot_by_ident(domain.name, slot_tok.value)
        if slot_name is None:
            raise _Reject(REASON_BAD_REFERENCE, (slot_tok.start, slot_tok.end))
        return SlotRef(SlotName(domain.name, slot_name))


def parse_completion(text: str, schema: CanonicalSchema) -> ParseOutcome:
    """Parse completion text into a state change; total over arbitrary input."""
    try:
        tokens = _tokenize(text)
        delta = _Parser(tokens, schema, len(text)).parse()
    except _Reject as reject:
        return Rejected(reject.reason, reject.span)
    except (ValueError, TypeError):
        return Rejected(REASON_SYNTAX, (0, len(text)))
    return Parsed(delta)
