"""Movement and phase tables for a four-approach intersection.

Movement order (index -> name) is fixed and used everywhere a queue vector
appears:  NT, ST, ET, WT, NL, SL, EL, WL  (N/S/E/W approach, Through/Left).
Right turns are always permitted and not modelled.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

MOVEMENTS = ("NT", "ST", "ET", "WT", "NL", "SL", "EL", "WL")
PHASE_IDS = ("A", "B", "C", "D", "E", "F", "G", "H")

PHASE_MOVEMENTS = {
    "A": ("WT", "ET"),
    "B": ("NT", "ST"),
    "C": ("WL", "EL"),
    "D": ("NL", "SL"),
    "E": ("WT", "WL"),
    "F": ("ET", "EL"),
    "G": ("NT", "NL"),
    "H": ("ST", "SL"),
}

PHASE_SETTINGS = {
    "8": ("A", "B", "C", "D", "E", "F", "G", "H"),
    "6a": ("A", "B", "C", "D", "E", "H"),
    "6e": ("A", "B", "C", "D", "E", "G"),
    "LA-1": ("A", "C", "D", "F", "G", "H"),
    "LA-2": ("A", "D", "F", "G"),
    "Atlanta-1": ("B", "C", "E", "H"),
    "Atlanta-2": ("A", "D", "F", "G"),
    "Jinan-1": ("A", "D", "F", "G"),
    "Jinan-2": ("A", "C", "D", "F", "G", "H"),
}


def phase_index(phase: str) -> int:
    try:
        return PHASE_IDS.index(phase)
    except ValueError:
        raise ValidationError(f"unknown phase {phase!r}") from None


def phase_registry(setting_name: str) -> list[str]:
    """Ordered phase ids available under a named phase setting."""
    try:
        return list(PHASE_SETTINGS[setting_name])
    except KeyError:
        raise ValidationError(
            f"unknown phase setting {setting_name!r}; "
            f"expected one of {sorted(PHASE_SETTINGS)}"
        ) from None


def phase_mask(setting_name: str) -> np.ndarray:
    """Boolean mask over the eight phase actions."""
    mask = np.zeros(len(PHASE_IDS), dtype=bool)
    for p in phase_registry(setting_name):
        mask[phase_index(p)] = True
    return mask


def incidence() -> np.ndarray:
    """(n_phases, n_movements) 0/1 matrix: row p marks the movements served by phase p."""
    m = np.zeros((len(PHASE_IDS), len(MOVEMENTS)))
    for i, p in enumerate(PHASE_IDS):
        for mv in PHASE_MOVEMENTS[p]:
            m[i, MOVEMENTS.index(mv)] = 1.0
    return m
