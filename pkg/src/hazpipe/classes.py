"""The 13 hazmat sign categories and their canonical spellings."""

from __future__ import annotations

import re

from .errors import UnknownClass

CLASS_NAMES: tuple[str, ...] = (
    "poison",
    "oxygen",
    "flammable",
    "flammable-solid",
    "corrosive",
    "dangerous",
    "non-flammable-gas",
    "organic-peroxide",
    "explosive",
    "radioactive",
    "inhalation-hazard",
    "spontaneously-combustible",
    "infectious-substance",
)

NUM_CLASSES = len(CLASS_NAMES)

# Catalogue spellings that differ from the canonical result-table names.
ALIASES: dict[str, str] = {
    "flammable-gas": "flammable",
}

_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}


def canonical_name(name: str) -> str:
    """Lowercase, hyphen-separated form of ``name`` with aliases resolved."""
    key = re.sub(r"[\s_]+", "-", name.strip().lower())
    return ALIASES.get(key, key)


def class_id(name: str) -> int:
    try:
        return _INDEX[canonical_name(name)]
    except KeyError:
        raise UnknownClass(name) from None


def class_name(idx: int) -> str:
    if not 0 <= idx < NUM_CLASSES:
        raise UnknownClass(str(idx))
    return CLASS_NAMES[idx]


def is_valid_id(idx: int) -> bool:
    return isinstance(idx, int) and 0 <= idx < NUM_CLASSES
