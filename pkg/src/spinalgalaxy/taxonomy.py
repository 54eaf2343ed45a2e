"""Hubble tuning-fork class sets and their coarsenings.

Class ordering is fixed as listed and drives the logit-index to label
correspondence everywhere. The 3-class level groups ellipticals as E and
all (barred) spirals as S; the 2-class level keeps E and S and excludes
irregulars.
"""

from __future__ import annotations

from .errors import ConfigurationError

TEN_CLASSES = ("E0", "E3", "E7", "Sa", "Sb", "Sc", "SBa", "SBb", "SBc", "Irr")
THREE_CLASSES = ("E", "S", "Irr")
TWO_CLASSES = ("E", "S")

TO_THREE = {
    "E0": "E", "E3": "E", "E7": "E",
    "Sa": "S", "Sb": "S", "Sc": "S",
    "SBa": "S", "SBb": "S", "SBc": "S",
    "Irr": "Irr",
}

# None marks "excluded from the 2-class problem".
TO_TWO = {"E": "E", "S": "S", "Irr": None}

LEVELS = (2, 3, 10)


def class_names(level: int) -> tuple[str, ...]:
    """Ordered class names for a taxonomy level of 2, 3 or 10."""
    if level == 10:
        return TEN_CLASSES
    if level == 3:
        return THREE_CLASSES
    if level == 2:
        return TWO_CLASSES
    raise ConfigurationError(f"taxonomy level must be one of {LEVELS}, got {level}")


def coarsen(ten_name: str, level: int) -> str | None:
    """Map a 10-class name to its name at the given level; None if excluded."""
    if ten_name not in TEN_CLASSES:
        raise ConfigurationError(f"unknown 10-class name {ten_name!r}")
    if level == 10:
        return ten_name
    three = TO_THREE[ten_name]
    if level == 3:
        return three
    if level == 2:
        return TO_TWO[three]
    raise ConfigurationError(f"taxonomy level must be one of {LEVELS}, got {level}")


def subtype_pool(name: str) -> tuple[str, ...]:
    """The 10-class subtypes rendered for a class name at any level."""
    if name in TEN_CLASSES:
        return (name,)
    if name == "E":
        return ("E0", "E3", "E7")
    if name == "S":
        return ("Sa", "Sb", "Sc", "SBa", "SBb", "SBc")
    raise ConfigurationError(f"unknown class name {name!r}")
