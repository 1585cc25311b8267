"""Retrieval-augmented in-context learning for dialogue state tracking."""

from .state import (
    DialogueState,
    DontCare,
    LiteralValue,
    SlotName,
    SlotRef,
    StateChange,
    TurnContext,
    apply_state_change,
    diff_states,
    sim_f1,
)

__all__ = [
    "DialogueState",
    "DontCare",
    "LiteralValue",
    "SlotName",
    "SlotRef",
    "StateChange",
    "TurnContext",
    "apply_state_change",
    "diff_states",
    "sim_f1",
]

__version__ = "0.1.0"
