"""Repetition-based segmentation baselines.

``repeated_subsequences`` finds every maximal repeated substring of a token
sequence: a substring occurring at least twice (occurrences may overlap)
that cannot be extended left or right without losing occurrences.  It is
built on a doubling suffix array plus Kasai LCP, with suffix-tree internal
nodes recovered as LCP intervals -- O(n log n) construction.

``form_segment`` turns those patterns into a segmentation by greedy cover:
longest patterns first, each occurrence claims its span when the span is
still fully unclaimed, all occurrences of one pattern share one label, and
leftover positions merge into the preceding section (leading leftovers into
the following one).  ``random_segment`` and ``fixed_pop_segment`` are the
matching chance-level baselines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .harte import NO_CHORD, parse_chord, simplify_chord
from .segmentation import Segment, Segmentation

NO_CHORD_TOKEN = "N"


@dataclass(frozen=True)
class RepeatedPattern:
    length: int
    occurrences: tuple[int, ...]  # sorted start positions
    tokens: tuple


def _suffix_array(ids: np.ndarray) -> np.ndarray:
    """Suffix array by prefix doubling (numpy lexsort per round)."""
    n = ids.size
    rank = np.asarray(ids, dtype=np.int64)
    sa = np.argsort(rank, kind="stable")
    k = 1
    while k < n:
        second = np.full(n, -1, dtype=np.int64)
        second[:n - k] = rank[k:]
        sa = np.lexsort((second, rank))
        ordered_first = rank[sa]
        ordered_second = second[sa]
        new_rank = np.zeros(n, dtype=np.int64)
        changed = (ordered_first[1:] != ordered_first[:-1]) | (
            ordered_second[1:] != ordered_second[:-1]
        )
        new_rank[sa[1:]] = np.cumsum(changed)
        rank = new_rank
        if rank[sa[-1]] == n - 1:
            break
        k *= 2
    return sa


def _lcp_array(ids: np.ndarray, sa: np.ndarray) -> np.ndarray:
    """Kasai: lcp[i] = common prefix length of suffixes sa[i-1] and sa[i]."""
    n = ids.size
    rank = np.empty(n, dtype=np.int64)
    rank[sa] = np.arange(n)
    lcp = np.zeros(n, dtype=np.int64)
    match = 0
    for pos in range(n):
        r = rank[pos]
        if r == 0:
            match = 0
            continue
        prev = sa[r - 1]
        while pos + match < n and prev + match < n and ids[pos + match] == ids[prev + match]:
            match += 1
        lcp[r] = match
        if match > 0:
            match -= 1
    return lcp


def _lcp_intervals(lcp: np.ndarray, n: int):
    """Yield (depth, lb, rb) for every internal suffix-tree node (depth >= 1)."""
    stack: list[tuple[int, int]] = [(0, 0)]
    for i in range(1, n + 1):
        current = int(lcp[i]) if i < n else 0
        lb = i - 1
        while stack and stack[-1][0] > current:
            depth, left = stack.pop()
            yield depth, left, i - 1
            lb = left
        if not stack or stack[-1][0] < current:
            stack.append((current, lb))


def repeated_subsequences(tokens: Sequence, min_len: int = 2) -> list[RepeatedPattern]:
    """Maximal repeated substrings of length >= min_len.

    Sorted by length descending, then leftmost occurrence; occurrence lists
    are ascending and may overlap.
    """
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    n = len(tokens)
    if n < 2:
        return []
    seq = list(tokens)
    _, ids = np.unique(np.asarray(seq, dtype=object), return_inverse=True)
    ids = ids.astype(np.int64)
    sa = _suffix_array(ids)
    lcp = _lcp_array(ids, sa)
    patterns = []
    for depth, lb, rb in _lcp_intervals(lcp, n):
        if depth < min_len:
            continue
        occs = np.sort(sa[lb:rb + 1])
        # left-diversity: at least two distinct preceding symbols, with the
        # sequence start counting as its own symbol
        has_begin = occs[0] == 0
        prev_ids = {int(ids[p - 1]) for p in occs if p > 0}
        if len(prev_ids) + (1 if has_begin else 0) < 2:
            continue
        start = int(occs[0])
        patterns.append(
            RepeatedPattern(
                length=int(depth),
                occurrences=tuple(int(p) for p in occs),
                tokens=tuple(seq[start:start + int(depth)]),
            )
        )
    patterns.sort(key=lambda pat: (-pat.length, pat.occurrences[0]))
    return patterns


def form_segment(tokens: Sequence, min_len: int = 2) -> Segmentation:
    """Greedy longest-first cover of the token sequence by repeated patterns."""
    n = len(tokens)
    if n == 0:
        raise ValueError("cannot segment an empty sequence")
    claimed = np.zeros(n, dtype=bool)
    spans: list[tuple[int, int, str]] = []
    next_label = 0
    for pattern in repeated_subsequences(tokens, min_len):
        label = None
        for start in pattern.occurrences:
            end = start + pattern.length
            if claimed[start:end].any():
                continue
            if label is None:
                label = f"P{next_label}"
                next_label += 1
            claimed[start:end] = True
            spans.append((start, end, label))
    if not spans:
        return Segmentation([Segment(0, n, "P0")])
    spans.sort()
    segments = []
    for i, (start, end, label) in enumerate(spans):
        seg_start = start if i > 0 else 0
        seg_end = spans[i + 1][0] if i + 1 < len(spans) else n
        segments.append(Segment(seg_start, seg_end, label))
    return Segmentation(segments)


def simplify_tokens(chords: Sequence[str]) -> list[str]:
    """Map chord labels onto the 25-token alphabet: 12 roots x {maj, min}
    plus the no-chord symbol."""
    out = []
    for label in chords:
        chord = parse_chord(label)
        if chord.is_nochord:
            out.append(NO_CHORD_TOKEN)
        else:
            out.append(simplify_chord(chord).token())
    return out


def form_raw_segment(chords: Sequence[str], min_len: int = 2) -> Segmentation:
    """FORM over the raw chord-label alphabet."""
    return form_segment(list(chords), min_len)


def form_simple_segment(chords: Sequence[str], min_len: int = 2) -> Segmentation:
    """FORM over the simplified major/minor alphabet."""
    return form_segment(simplify_tokens(chords), min_len)


def random_segment(n: int, rng: np.random.Generator) -> Segmentation:
    """Uniform random segment lengths, a fresh label per segment."""
    if n < 1:
        raise ValueError("cannot segment an empty sequence")
    segments = []
    position = 0
    label = 0
    while position < n:
        length = int(rng.integers(1, n - position + 1))
        segments.append(Segment(position, position + length, f"R{label}"))
        position += length
        label += 1
    return Segmentation(segments)


_POP_LETTERS = "ABBBBCCBBBBCCDCCE"


def fixed_pop_segment(n: int) -> Segmentation:
    """Stretch the letter layout ABBBBCCBBBBCCDCCE over n positions.

    Boundary i sits at round(i * n / 17); zero-length letters are dropped
    and repeated letters share a label.
    """
    if n < 1:
        raise ValueError("cannot segment an empty sequence")
    bounds = [round(i * n / 17) for i in range(18)]
    segments = []
    for i, letter in enumerate(_POP_LETTERS):
        if bounds[i + 1] > bounds[i]:
            segments.append(Segment(bounds[i], bounds[i + 1], letter))
    return Segmentation(segments)
