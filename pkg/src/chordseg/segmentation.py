"""Segmentations: contiguous labeled spans over a chord sequence."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError


class InvalidSegmentation(DataError):
    """Segments do not tile [0, length) contiguously."""


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # exclusive
    label: str


@dataclass
class Segmentation:
    """Ordered segments covering [0, length) with no gaps or overlaps."""

    segments: list[Segment]

    def __post_init__(self) -> None:
        if not self.segments:
            raise InvalidSegmentation("segmentation must contain at least one segment")
        position = 0
        for seg in self.segments:
            if seg.start != position or seg.end <= seg.start:
                raise InvalidSegmentation(
                    f"segment ({seg.start}, {seg.end}) breaks contiguous cover at {position}"
                )
            position = seg.end

    @property
    def length(self) -> int:
        return self.segments[-1].end

    def to_frames(self) -> list[str]:
        """Per-position label sequence."""
        frames: list[str] = []
        for seg in self.segments:
            frames.extend([seg.label] * (seg.end - seg.start))
        return frames


def labels_to_segments(labels: list[str]) -> Segmentation:
    """Collapse a per-position label sequence into maximal constant runs."""
    if not labels:
        raise InvalidSegmentation("cannot segment an empty label sequence")
    segments: list[Segment] = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            segments.append(Segment(start=start, end=i, label=labels[start]))
            start = i
    return Segmentation(segments=segments)
