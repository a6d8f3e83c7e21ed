"""Canonical 17-channel montage and the 4 measured frontal sources."""
from __future__ import annotations

CANONICAL = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3",
    "Cz", "C4", "T4", "T5", "P3", "Pz", "P4", "T6",
)
SOURCE = ("Fp1", "Fp2", "F7", "F8")
VIRTUAL = tuple(c for c in CANONICAL if c not in SOURCE)

SOURCE_INDEX = tuple(CANONICAL.index(c) for c in SOURCE)
VIRTUAL_INDEX = tuple(CANONICAL.index(c) for c in VIRTUAL)

# groups used for the spatial-decay check
NEAR_VIRTUAL = ("F3", "Fz", "F4")
FAR_VIRTUAL = ("T5", "P3", "Pz", "P4", "T6")
