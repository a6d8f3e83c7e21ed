from __future__ import annotations

import zlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

TAI_THRESHOLD = 37


class AnxietyLabel(str, Enum):
    NO_MILD = "NoMild"
    MOD_SEVERE = "ModSevere"

    @classmethod
    def from_tai(cls, score: float) -> "AnxietyLabel":
        return cls.NO_MILD if score < TAI_THRESHOLD else cls.MOD_SEVERE

    @property
    def binary(self) -> int:
        """1 for the moderate/severe (positive) class."""
        return int(self is AnxietyLabel.MOD_SEVERE)


def subject_hash(subject_id: str) -> int:
    return zlib.crc32(subject_id.encode("utf-8")) & 0xFFFFFFFF


@dataclass
class Recording:
    subject_id: str
    fs_hz: float
    channels: tuple[str, ...]
    samples: np.ndarray  # (channels, samples)
    tai_score: float

    @property
    def label(self) -> AnxietyLabel:
        return AnxietyLabel.from_tai(self.tai_score)


@dataclass
class SegmentPair:
    source: np.ndarray  # (4, seg_len), source-channel order
    target: np.ndarray  # (17, seg_len), canonical order
    subject: int  # subject hash
    index: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.subject, self.index)
