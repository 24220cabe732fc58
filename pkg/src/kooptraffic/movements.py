"""Leg / turn-movement vocabulary shared by the simulator and the analyses."""

from __future__ import annotations

import re
from typing import NamedTuple

LEGS = ("NB", "SB", "EB", "WB")
TURNS = ("LT", "T", "RT")

# Corridor stacking order used for network-structure analysis.
CORRIDOR_LEG_ORDER = ("NB", "SB", "WB", "EB")

EAST_WEST = ("EB", "WB")
NORTH_SOUTH = ("NB", "SB")


class Movement(NamedTuple):
    leg: str
    turn: str

    @property
    def label(self) -> str:
        return self.leg + self.turn

    @classmethod
    def parse(cls, label: str) -> "Movement":
        m = re.fullmatch(r"(NB|SB|EB|WB)(LT|T|RT)", label)
        if m is None:
            raise ValueError(f"unknown movement {label!r}")
        return cls(m.group(1), m.group(2))


MOVEMENTS = tuple(Movement(leg, turn) for leg in LEGS for turn in TURNS)
MOVEMENT_LABELS = tuple(m.label for m in MOVEMENTS)

# The eight movements that take part in phase timing; right turns are
# typically allowed on red and carry no timing information.
TIMED_LABELS = tuple(m.label for m in MOVEMENTS if m.turn != "RT")

_CHANNEL_RE = re.compile(r"(NB|SB|EB|WB)(LT|T|RT)?(\d+)?")


def is_valid_channel(label: str) -> bool:
    """Accept movement ids (``NBLT``), leg ids (``WB``) and indexed ids (``SB2``)."""
    return _CHANNEL_RE.fullmatch(label) is not None


def movement_index(label: str) -> int:
    return MOVEMENT_LABELS.index(label)


def leg_of(label: str) -> str:
    return label[:2]


def is_east_west(label: str) -> bool:
    return leg_of(label) in EAST_WEST


def channel_sort_key(label: str) -> tuple:
    """Sort key placing channels in canonical movement / leg order."""
    m = _CHANNEL_RE.fullmatch(label)
    if m is None:
        return (99, 99, 99, label)
    leg, turn, idx = m.groups()
    return (
        int(idx) if idx else 0,
        LEGS.index(leg),
        TURNS.index(turn) if turn else -1,
        label,
    )
