"""Parser for Harte-style chord labels.

A label is either the no-chord symbol ``N`` or::

    <natural>(#|b)* [":" shorthand] [":"] ["(" degree{,degree} ")"] ["/" degree]

Shorthands expand to canonical degree sets (``maj7`` -> {1,3,5,7}, ...) and
the parenthesised list adds degrees or, with a ``*`` prefix, removes them.
A bare root with no shorthand and no degree list means a major triad; a
degree list without shorthand starts from {1}.  Degree 1 is implied unless
explicitly removed with ``*1``.

Degrees map to semitone offsets above the root on the major scale
(1 -> 0, 2 -> 2, 3 -> 4, 4 -> 5, 5 -> 7, 6 -> 9, 7 -> 11), extensions fold
down an octave (9 -> 2, 11 -> 5, 13 -> 9) and each ``b``/``#`` shifts one
semitone down/up.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from .errors import DataError


class MalformedLabel(DataError):
    """Chord label does not follow the grammar."""


class UnknownShorthand(MalformedLabel):
    """Chord label uses a shorthand that is not in the table."""


class NoChordInput(DataError):
    """A pitch-class query was made against the no-chord symbol."""


NO_CHORD = "N"

# Semitone of each natural note name.
_NATURAL_TO_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

# Canonical (sharp-based) spelling for each pitch class, used when
# re-rendering transposed labels.
PITCH_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

# Degree number -> semitone offset on the major scale, pre-octave-fold.
_MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)

# Shorthand -> degree tokens.  The 9/11/13 families keep the stacked thirds
# that are actually sounded in practice: 11 chords drop nothing below the
# 11th, 13 chords omit the 11th.
SHORTHANDS: dict[str, frozenset[str]] = {
    name: frozenset(degrees)
    for name, degrees in {
        "maj": ("1", "3", "5"),
        "min": ("1", "b3", "5"),
        "dim": ("1", "b3", "b5"),
        "aug": ("1", "3", "#5"),
        "maj7": ("1", "3", "5", "7"),
        "min7": ("1", "b3", "5", "b7"),
        "7": ("1", "3", "5", "b7"),
        "dim7": ("1", "b3", "b5", "bb7"),
        "hdim7": ("1", "b3", "b5", "b7"),
        "minmaj7": ("1", "b3", "5", "7"),
        "maj6": ("1", "3", "5", "6"),
        "min6": ("1", "b3", "5", "6"),
        "6": ("1", "3", "5", "6"),
        "9": ("1", "3", "5", "b7", "9"),
        "maj9": ("1", "3", "5", "7", "9"),
        "min9": ("1", "b3", "5", "b7", "9"),
        "sus2": ("1", "2", "5"),
        "sus4": ("1", "4", "5"),
        "11": ("1", "3", "5", "b7", "9", "11"),
        "maj11": ("1", "3", "5", "7", "9", "11"),
        "min11": ("1", "b3", "5", "b7", "9", "11"),
        "13": ("1", "3", "5", "b7", "9", "13"),
        "maj13": ("1", "3", "5", "7", "9", "13"),
        "min13": ("1", "b3", "5", "b7", "9", "13"),
        "aug7": ("1", "3", "#5", "b7"),
        "5": ("1", "5"),
        "1": ("1",),
    }.items()
}

_LABEL_RE = re.compile(
    r"^(?P<root>[A-G][#b]*)"
    r"(?::(?P<shorthand>[a-z0-9]+))?"
    r"(?::?\((?P<degrees>[^()]*)\))?"
    r"(?:/(?P<bass>[#b]*\d+))?$"
)

_DEGREE_RE = re.compile(r"^(?P<omit>\*?)(?P<accidentals>[#b]*)(?P<number>\d+)$")


@dataclass(frozen=True)
class Chord:
    """Parsed chord: raw label, root pitch class, degree tokens, bass degree."""

    raw: str
    root: int | None
    intervals: frozenset[str]
    bass: str | None = None

    @property
    def is_nochord(self) -> bool:
        return self.root is None


@dataclass(frozen=True)
class SimplifiedChord:
    """Major/minor reduction of a chord, a 24-class alphabet."""

    root: int
    quality: str  # "maj" or "min"

    def token(self) -> str:
        return f"{PITCH_NAMES[self.root]}:{self.quality}"


def degree_to_semitone(token: str) -> int:
    """Semitone offset (mod 12) of a degree token such as ``b3`` or ``#11``."""
    m = _DEGREE_RE.match(token)
    if m is None or m.group("omit"):
        raise MalformedLabel(f"bad degree token {token!r}")
    number = int(m.group("number"))
    if not 1 <= number <= 13:
        raise MalformedLabel(f"degree {number} out of range in {token!r}")
    base = _MAJOR_SCALE[(number - 1) % 7] + 12 * ((number - 1) // 7)
    shift = m.group("accidentals").count("#") - m.group("accidentals").count("b")
    return (base + shift) % 12


def _root_pitch_class(name: str) -> int:
    pc = _NATURAL_TO_PC[name[0]]
    pc += name.count("#") - name.count("b")
    return pc % 12


@lru_cache(maxsize=65536)
def parse_chord(label: str) -> Chord:
    """Parse a Harte label into a Chord.

    Raises MalformedLabel for anything outside the grammar and
    UnknownShorthand for a shorthand missing from the table.
    """
    if not isinstance(label, str):
        raise MalformedLabel(f"chord label must be a string, got {type(label).__name__}")
    if label == NO_CHORD:
        return Chord(raw=label, root=None, intervals=frozenset())
    m = _LABEL_RE.match(label)
    if m is None:
        raise MalformedLabel(f"malformed chord label {label!r}")
    root = _root_pitch_class(m.group("root"))
    shorthand = m.group("shorthand")
    degree_field = m.group("degrees")

    if shorthand is not None:
        try:
            degrees = set(SHORTHANDS[shorthand])
        except KeyError:
            raise UnknownShorthand(f"unknown shorthand {shorthand!r} in {label!r}") from None
    elif degree_field is not None:
        degrees = {"1"}
    else:
        degrees = set(SHORTHANDS["maj"])

    if degree_field is not None:
        items = [item.strip() for item in degree_field.split(",")]
        if not items or any(not item for item in items):
            raise MalformedLabel(f"empty degree list entry in {label!r}")
        for item in items:
            dm = _DEGREE_RE.match(item)
            if dm is None:
                raise MalformedLabel(f"bad degree {item!r} in {label!r}")
            token = item[1:] if dm.group("omit") else item
            degree_to_semitone(token)  # range check
            if dm.group("omit"):
                degrees.discard(token)
            else:
                degrees.add(token)

    bass = m.group("bass")
    if bass is not None:
        degree_to_semitone(bass)  # validate
    return Chord(raw=label, root=root, intervals=frozenset(degrees), bass=bass)


def _as_chord(chord: Chord | str) -> Chord:
    return chord if isinstance(chord, Chord) else parse_chord(chord)


def pitch_class_set(chord: Chord | str) -> frozenset[int]:
    """Absolute pitch classes sounded by the chord (bass excluded)."""
    chord = _as_chord(chord)
    if chord.is_nochord:
        raise NoChordInput("no-chord has no pitch classes")
    assert chord.root is not None
    return frozenset((chord.root + degree_to_semitone(d)) % 12 for d in chord.intervals)


def components(chord: Chord | str) -> frozenset[tuple[int, int]]:
    """(root, pitch) pairs, one per sounded pitch class; empty for no-chord.

    Two chords with identical pitch-class sets but different roots share no
    component, which keeps enharmonic readings distinct.
    """
    chord = _as_chord(chord)
    if chord.is_nochord:
        return frozenset()
    assert chord.root is not None
    return frozenset((chord.root, p) for p in pitch_class_set(chord))


def simplify_chord(chord: Chord | str) -> SimplifiedChord:
    """Reduce to root plus major/minor (minor iff the b3 degree is present)."""
    chord = _as_chord(chord)
    if chord.is_nochord:
        raise NoChordInput("cannot simplify the no-chord symbol")
    assert chord.root is not None
    quality = "min" if "b3" in chord.intervals else "maj"
    return SimplifiedChord(root=chord.root, quality=quality)


def transpose_label(label: str, k: int) -> str:
    """Shift the root of a label up k semitones, leaving the rest intact."""
    chord = parse_chord(label)
    if chord.is_nochord:
        return label
    m = _LABEL_RE.match(label)
    assert m is not None and chord.root is not None
    new_root = PITCH_NAMES[(chord.root + k) % 12]
    return new_root + label[m.end("root"):]
