"""Segmentation agreement scores at chord-frame granularity.

Both families compare two label sequences over the same frame positions:

* pairwise precision/recall/F1 over unordered frame pairs (i < j) that
  share a label -- A is the reference's same-label pair set, E the
  estimate's, precision = |A & E| / |E|, recall = |A & E| / |A|;
* normalized conditional entropies, base 2 -- the over-segmentation score
  S_O = 1 - H(E|A) / log2(N_E) and under-segmentation score
  S_U = 1 - H(A|E) / log2(N_A), where N_E and N_A count distinct labels.

Conventions: with no same-label pairs on either side the pairwise scores
are (1, 1, 1); with pairs on exactly one side the undefined ratio is 0.
A side with a single distinct label has normalizer log2(1) = 0 and its
entropy score is defined as 1 (nothing to fragment).  Harmonic means
return 0 when both inputs are 0.  Both families are invariant to label
renaming and swap P with R (and S_O with S_U) when the arguments swap.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .segmentation import Segmentation


class CoverageMismatch(DataError):
    """Reference and estimate do not cover the same frame count."""


@dataclass(frozen=True)
class SegmentScores:
    p: float
    r: float
    f1: float
    s_o: float
    s_u: float
    s_f1: float

    FIELDS = ("P", "R", "F1", "S_O", "S_U", "S_F1")

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.p, self.r, self.f1, self.s_o, self.s_u, self.s_f1)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.FIELDS, self.as_tuple()))


def _harmonic(a: float, b: float) -> float:
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _contingency(ref: Sequence, est: Sequence) -> np.ndarray:
    if len(ref) != len(est):
        raise CoverageMismatch(f"{len(ref)} reference frames vs {len(est)} estimated")
    if len(ref) == 0:
        raise CoverageMismatch("cannot score empty label sequences")
    _, ref_codes = np.unique(np.asarray(ref, dtype=object), return_inverse=True)
    _, est_codes = np.unique(np.asarray(est, dtype=object), return_inverse=True)
    n_ref = int(ref_codes.max()) + 1
    n_est = int(est_codes.max()) + 1
    table = np.zeros((n_ref, n_est), dtype=np.int64)
    np.add.at(table, (ref_codes, est_codes), 1)
    return table


def _pair_count(counts: np.ndarray) -> int:
    c = counts.astype(np.int64)
    return int((c * (c - 1) // 2).sum())


def pairwise_scores(ref: Sequence, est: Sequence) -> tuple[float, float, float]:
    """(precision, recall, F1) over same-label frame pairs."""
    table = _contingency(ref, est)
    both = _pair_count(table.ravel())
    in_ref = _pair_count(table.sum(axis=1))
    in_est = _pair_count(table.sum(axis=0))
    if in_ref == 0 and in_est == 0:
        return (1.0, 1.0, 1.0)
    p = float(both / in_est) if in_est > 0 else 0.0
    r = float(both / in_ref) if in_ref > 0 else 0.0
    return (p, r, _harmonic(p, r))


def _entropy_bits(counts: np.ndarray) -> float:
    total = counts.sum()
    nz = counts[counts > 0].astype(np.float64)
    return float(np.log2(total) - (nz * np.log2(nz)).sum() / total)


def nce_scores(ref: Sequence, est: Sequence) -> tuple[float, float, float]:
    """(S_O, S_U, S_F1) from normalized conditional entropies."""
    table = _contingency(ref, est)
    n_ref, n_est = table.shape
    h_joint = _entropy_bits(table.ravel())
    h_ref = _entropy_bits(table.sum(axis=1))
    h_est = _entropy_bits(table.sum(axis=0))
    h_est_given_ref = max(0.0, h_joint - h_ref)
    h_ref_given_est = max(0.0, h_joint - h_est)
    s_o = 1.0 if n_est <= 1 else float(_clip01(1.0 - h_est_given_ref / np.log2(n_est)))
    s_u = 1.0 if n_ref <= 1 else float(_clip01(1.0 - h_ref_given_est / np.log2(n_ref)))
    return (s_o, s_u, _harmonic(s_o, s_u))


def score_pair(reference: Segmentation, estimate: Segmentation) -> SegmentScores:
    """All six scores for one track; spans must cover the same length."""
    if reference.length != estimate.length:
        raise CoverageMismatch(
            f"reference covers {reference.length} frames, estimate {estimate.length}"
        )
    ref = reference.to_frames()
    est = estimate.to_frames()
    p, r, f1 = pairwise_scores(ref, est)
    s_o, s_u, s_f1 = nce_scores(ref, est)
    return SegmentScores(p=p, r=r, f1=f1, s_o=s_o, s_u=s_u, s_f1=s_f1)


def evaluate_corpus(
    pairs: Sequence[tuple[Segmentation, Segmentation]],
) -> tuple[SegmentScores, list[SegmentScores]]:
    """Unweighted mean over tracks plus the per-track rows."""
    if not pairs:
        raise DataError("no (reference, estimate) pairs to evaluate")
    rows = [score_pair(ref, est) for ref, est in pairs]
    stacked = np.array([row.as_tuple() for row in rows])
    mean = stacked.mean(axis=0)
    return SegmentScores(*(float(x) for x in mean)), rows


def write_report_json(
    path: str | Path, track_ids: Sequence[str], rows: Sequence[SegmentScores],
    aggregate: SegmentScores,
) -> None:
    payload = {
        "tracks": [
            {"id": tid, **row.as_dict()} for tid, row in zip(track_ids, rows)
        ],
        "aggregate": aggregate.as_dict(),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_report_csv(
    path: str | Path, track_ids: Sequence[str], rows: Sequence[SegmentScores],
    aggregate: SegmentScores,
) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("track_id",) + SegmentScores.FIELDS)
        for tid, row in zip(track_ids, rows):
            writer.writerow((tid,) + tuple(repr(x) for x in row.as_tuple()))
        writer.writerow(("AGGREGATE",) + tuple(repr(x) for x in aggregate.as_tuple()))
