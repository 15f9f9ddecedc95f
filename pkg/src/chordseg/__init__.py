"""Chord-sequence section segmentation: parsing, embeddings, baselines, LSTM."""

__version__ = "0.1.0"

from .errors import ChordsegError, DataError, NumericError
from .harte import Chord, parse_chord, pitch_class_set, components, simplify_chord
from .segmentation import Segment, Segmentation, labels_to_segments

__all__ = [
    "__version__",
    "ChordsegError",
    "DataError",
    "NumericError",
    "Chord",
    "parse_chord",
    "pitch_class_set",
    "components",
    "simplify_chord",
    "Segment",
    "Segmentation",
    "labels_to_segments",
]
