"""Corpus loading, section-label normalization, splits, synthetic data.

Corpora are JSON Lines files, one track per line::

    {"id": "...", "chords": ["C:maj", ...], "sections": ["verse", ...]}

``sections`` is optional (chord-only corpora train embeddings) and must be
chord-aligned when present.  Unknown keys are ignored.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .harte import MalformedLabel, parse_chord, transpose_label


class MalformedRecord(DataError):
    """A corpus line is structurally invalid (bad JSON, keys, or lengths)."""


class EmptyCorpus(DataError):
    """No usable tracks were found."""


@dataclass
class AnnotatedTrack:
    """One track: unique id, chord labels, optional aligned section labels."""

    id: str
    chords: list[str]
    sections: list[str] | None = None


@dataclass
class CorpusLoad:
    """Result of load_corpus: kept tracks plus (id, reason) skip reports."""

    tracks: list[AnnotatedTrack]
    skipped: list[tuple[str, str]]


# Raw section vocabularies folded onto canonical names.  Sources are matched
# after cleaning (lowercase, digits and punctuation stripped, whitespace
# collapsed), so "Fade-Out 2" and "fadeout" land on the same key.
_SECTION_GROUPS: dict[str, tuple[str, ...]] = {
    "verse": ("verse",),
    "prechorus": ("prechorus", "pre chorus"),
    "chorus": ("chorus",),
    "intro": ("fadein", "fade in", "intro"),
    "outro": ("outro", "coda", "fadeout", "fade-out", "ending"),
    "instrumental": (
        "applause", "bass", "choir", "clarinet", "drums", "flute",
        "harmonica", "harpsichord", "instrumental", "instrumental break",
        "noise", "oboe", "organ", "piano", "rap", "saxophone", "solo",
        "spoken", "strings", "synth", "synthesizer", "talking", "trumpet",
        "vocal", "voice", "guitar",
    ),
    "theme": ("main theme", "theme", "secondary theme"),
    "transition": ("transition", "tran"),
    "other": ("modulation", "key change"),
}

_CLEAN_DROP_RE = re.compile(r"[^a-z\s]+")
_WS_RE = re.compile(r"\s+")


def _clean_label(raw: str) -> str:
    text = _CLEAN_DROP_RE.sub("", raw.lower())
    return _WS_RE.sub(" ", text).strip()


_SECTION_MAP: dict[str, str] = {
    _clean_label(src): target
    for target, sources in _SECTION_GROUPS.items()
    for src in sources
}


def normalize_section_label(raw: str) -> str:
    """Canonical section name; unknown labels pass through cleaned.

    Idempotent: every output is a fixed point of the mapping.
    """
    cleaned = _clean_label(raw)
    return _SECTION_MAP.get(cleaned, cleaned)


def _parse_record(line: str, lineno: int) -> AnnotatedTrack:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise MalformedRecord(f"line {lineno}: record is not an object")
    track_id = obj.get("id")
    chords = obj.get("chords")
    if not isinstance(track_id, str) or not track_id:
        raise MalformedRecord(f"line {lineno}: missing or empty 'id'")
    if not isinstance(chords, list) or not chords or not all(isinstance(c, str) for c in chords):
        raise MalformedRecord(f"line {lineno}: 'chords' must be a nonempty list of strings")
    sections = obj.get("sections")
    if sections is not None:
        if not isinstance(sections, list) or not all(isinstance(s, str) for s in sections):
            raise MalformedRecord(f"line {lineno}: 'sections' must be a list of strings")
        if len(sections) != len(chords):
            raise MalformedRecord(
                f"line {lineno}: {len(sections)} sections for {len(chords)} chords"
            )
        sections = [normalize_section_label(s) for s in sections]
    return AnnotatedTrack(id=track_id, chords=list(chords), sections=sections)


def load_corpus(path: str | Path) -> CorpusLoad:
    """Read a JSONL corpus.

    Structural problems raise MalformedRecord with the line number; tracks
    whose chords fail to parse are skipped and reported instead of aborting
    the load.  Raises EmptyCorpus when nothing usable remains.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from None
    tracks: list[AnnotatedTrack] = []
    skipped: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        track = _parse_record(line, lineno)
        if track.id in seen:
            raise MalformedRecord(f"line {lineno}: duplicate track id {track.id!r}")
        seen.add(track.id)
        try:
            for chord in track.chords:
                parse_chord(chord)
        except MalformedLabel as exc:
            skipped.append((track.id, str(exc)))
            continue
        tracks.append(track)
    if not tracks:
        raise EmptyCorpus(f"no usable tracks in {path}")
    return CorpusLoad(tracks=tracks, skipped=skipped)


def save_corpus(tracks: list[AnnotatedTrack], path: str | Path) -> None:
    """Write tracks as JSONL (inverse of load_corpus for valid tracks)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for track in tracks:
            record: dict = {"id": track.id, "chords": track.chords}
            if track.sections is not None:
                record["sections"] = track.sections
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


@dataclass
class CorpusSplit:
    train: list[AnnotatedTrack]
    validation: list[AnnotatedTrack]
    test: list[AnnotatedTrack]


def split_dataset(
    tracks: list[AnnotatedTrack],
    ratios: tuple[float, float, float] = (0.75, 0.17, 0.08),
    seed: int = 0,
) -> CorpusSplit:
    """Deterministic shuffled split.

    Validation and test sizes are floored; the remainder goes to train.
    """
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be nonnegative and sum to 1, got {ratios}")
    n = len(tracks)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [tracks[i] for i in order]
    return CorpusSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
    )


# Six section types with disjoint chord vocabularies: each type sticks to
# one chord quality, so whole-track transposition never makes two types
# share a label.
DEFAULT_GRAMMAR: dict[str, list[list[str]]] = {
    "intro": [
        ["C:maj7", "F:maj7", "G:maj7", "D:maj7"],
        ["A:maj7", "D:maj7", "E:maj7", "G:maj7"],
    ],
    "verse": [
        ["C:maj", "G:maj", "A:maj", "F:maj"],
        ["D:maj", "G:maj", "C:maj", "E:maj"],
    ],
    "prechorus": [
        ["D:sus4", "E:sus4", "G:sus4", "A:sus4"],
        ["C:sus4", "F:sus4", "D:sus4", "G:sus4"],
    ],
    "chorus": [
        ["A:min", "D:min", "E:min", "G:min"],
        ["E:min", "A:min", "B:min", "D:min"],
    ],
    "bridge": [
        ["C:7", "F:7", "G:7", "A:7"],
        ["D:7", "G:7", "E:7", "A:7"],
    ],
    "outro": [
        ["A:min7", "D:min7", "G:min7", "C:min7"],
        ["E:min7", "A:min7", "D:min7", "B:min7"],
    ],
}


def generate_synthetic_corpus(
    n_tracks: int,
    grammar: dict[str, list[list[str]]] | None = None,
    seed: int = 0,
    transpose: bool = True,
) -> list[AnnotatedTrack]:
    """Labeled tracks sampled from a section grammar.

    Each track concatenates 3..8 sections; consecutive sections never share
    a label when the grammar has more than one.  Every section instantiates
    one of its label's chord templates, and the whole track is transposed by
    a single random interval so relative structure is preserved.
    """
    if grammar is None:
        grammar = DEFAULT_GRAMMAR
    if not grammar or any(not templates for templates in grammar.values()):
        raise DataError("grammar must map each section label to at least one template")
    for templates in grammar.values():
        for template in templates:
            if not template:
                raise DataError("grammar templates must be nonempty")
            for chord in template:
                parse_chord(chord)
    labels = sorted(grammar)
    rng = np.random.default_rng(seed)
    tracks: list[AnnotatedTrack] = []
    for t in range(n_tracks):
        n_sections = int(rng.integers(3, 9))
        shift = int(rng.integers(0, 12)) if transpose else 0
        chords: list[str] = []
        sections: list[str] = []
        previous = None
        for _ in range(n_sections):
            if previous is not None and len(labels) > 1:
                choices = [lab for lab in labels if lab != previous]
            else:
                choices = labels
            label = choices[int(rng.integers(0, len(choices)))]
            templates = grammar[label]
            template = templates[int(rng.integers(0, len(templates)))]
            chords.extend(transpose_label(c, shift) for c in template)
            sections.extend([label] * len(template))
            previous = label
        tracks.append(AnnotatedTrack(id=f"synth-{t:04d}", chords=chords, sections=sections))
    return tracks
