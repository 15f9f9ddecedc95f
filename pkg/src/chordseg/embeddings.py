"""Chord embeddings trained with skipgram negative sampling.

A chord token is decomposed into integer component ids and embedded as the
sum of the component input vectors.  Three decompositions are supported:

* ``whole_token``  - one component per vocabulary entry (word2vec style),
* ``char_ngram``   - hashed character n-grams of ``<token>`` plus the whole
  token (fasttext style),
* ``pitchclass``   - one component per (root, pitch) pair of the chord, so
  enharmonic chords with different roots stay distinct and the no-chord
  symbol embeds to zero.

Output vectors are one per vocabulary token for every decomposition.
Training minimizes, per example,

    L = -log sigmoid(u . v_ctx) - sum_neg log sigmoid(-u . v_neg)

with per-example lazy Adam updates, frequent-token subsampling, and
negatives drawn from the unigram distribution raised to 3/4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import accel
from .corpus import AnnotatedTrack, EmptyCorpus
from .errors import DataError, NumericError
from .harte import MalformedLabel, components, parse_chord
from .kernels import sgns

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

NEGATIVE_POWER = 0.75

N_PITCHCLASS_COMPONENTS = 144  # 12 roots x 12 pitches


class FormatVersionMismatch(DataError):
    """Model file magic or version is not the one this code writes."""


@dataclass(frozen=True)
class WholeToken:
    """Each vocabulary token is a single opaque component."""


@dataclass(frozen=True)
class CharNgram:
    """Hashed character n-grams of <token> plus the whole-token component."""

    min_n: int = 2
    max_n: int = 5
    buckets: int = 100000


@dataclass(frozen=True)
class PitchClass:
    """(root, pitch) pair components from the parsed chord."""


DecompositionKind = WholeToken | CharNgram | PitchClass


def kind_token(kind: DecompositionKind) -> str:
    """Whitespace-free tag used in model file headers."""
    if isinstance(kind, WholeToken):
        return "whole_token"
    if isinstance(kind, PitchClass):
        return "pitchclass"
    return f"char_ngram:{kind.min_n}:{kind.max_n}:{kind.buckets}"


def parse_kind_token(token: str) -> DecompositionKind:
    if token == "whole_token":
        return WholeToken()
    if token == "pitchclass":
        return PitchClass()
    if token.startswith("char_ngram:"):
        parts = token.split(":")
        if len(parts) == 4:
            try:
                return CharNgram(min_n=int(parts[1]), max_n=int(parts[2]), buckets=int(parts[3]))
            except ValueError:
                pass
    raise FormatVersionMismatch(f"unknown decomposition kind {token!r}")


@dataclass
class Vocabulary:
    """Token table ordered by descending count, ties broken lexically."""

    tokens: list[str]
    counts: np.ndarray  # int64, aligned with tokens
    index: dict[str, int]

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return len(self.tokens)


def build_vocab(tracks: list[AnnotatedTrack], min_count: int = 1) -> Vocabulary:
    counts: dict[str, int] = {}
    for track in tracks:
        for chord in track.chords:
            counts[chord] = counts.get(chord, 0) + 1
    kept = [(tok, c) for tok, c in counts.items() if c >= min_count]
    if not kept:
        raise EmptyCorpus("no tokens reach min_count")
    kept.sort(key=lambda item: (-item[1], item[0]))
    tokens = [tok for tok, _ in kept]
    return Vocabulary(
        tokens=tokens,
        counts=np.array([c for _, c in kept], dtype=np.int64),
        index={tok: i for i, tok in enumerate(tokens)},
    )


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _FNV_MASK
    return h


def char_ngrams(token: str, min_n: int, max_n: int) -> list[str]:
    """All n-grams of <token> for n in [min_n, max_n], with boundary marks."""
    marked = f"<{token}>"
    grams = []
    for n in range(min_n, max_n + 1):
        for start in range(0, len(marked) - n + 1):
            grams.append(marked[start:start + n])
    return grams


def n_components_for(kind: DecompositionKind, n_vocab: int) -> int:
    if isinstance(kind, WholeToken):
        return n_vocab
    if isinstance(kind, PitchClass):
        return N_PITCHCLASS_COMPONENTS
    return n_vocab + kind.buckets


def decompose(token: str, kind: DecompositionKind, vocab: Vocabulary) -> list[int]:
    """Component ids for a vocabulary token (duplicates kept).

    For char_ngram the whole-token id occupies [0, n_vocab) and n-gram
    buckets live above it; unknown tokens simply lose the whole-token id.
    """
    if isinstance(kind, WholeToken):
        idx = vocab.index.get(token)
        return [] if idx is None else [idx]
    if isinstance(kind, PitchClass):
        return sorted(r * 12 + p for r, p in components(parse_chord(token)))
    ids = []
    idx = vocab.index.get(token)
    if idx is not None:
        ids.append(idx)
    n_vocab = len(vocab)
    for gram in char_ngrams(token, kind.min_n, kind.max_n):
        ids.append(n_vocab + fnv1a(gram.encode("utf-8")) % kind.buckets)
    return ids


@dataclass
class TrainConfig:
    """Skipgram training settings.

    dim defaults to 10 for the pitchclass decomposition and 300 otherwise
    when left as None.  batch_progressions is a shuffling granularity: the
    examples of that many tracks are pooled and visited in shuffled order,
    while updates stay strictly per-example.
    """

    dim: int | None = None
    window: int = 2
    negatives: int = 20
    subsample_t: float = 1e-5
    epochs: int = 10
    batch_progressions: int = 512
    learning_rate: float = 0.025
    min_count: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.subsample_t < 1.0:
            raise ValueError(f"subsample_t must lie in (0, 1), got {self.subsample_t}")
        if self.window < 1 or self.negatives < 1 or self.epochs < 0:
            raise ValueError("window and negatives must be >= 1, epochs >= 0")

    def resolved_dim(self, kind: DecompositionKind) -> int:
        if self.dim is not None:
            return self.dim
        return 10 if isinstance(kind, PitchClass) else 300


@dataclass
class SkipgramExample:
    """One training example: vocabulary indices, negatives included."""

    center: int
    context: int
    negatives: np.ndarray  # int64 (k,)


@dataclass
class EmbeddingModel:
    kind: DecompositionKind
    dim: int
    input_vectors: np.ndarray  # (n_components, dim)
    output_vectors: np.ndarray  # (n_vocab, dim)
    vocab: Vocabulary
    unknown_vector: np.ndarray  # (dim,)
    epoch_losses: list[float] = field(default_factory=list)  # not serialized

    @property
    def n_components(self) -> int:
        return self.input_vectors.shape[0]


def discard_probability(count: int, total: int, subsample_t: float) -> float:
    """Chance a token occurrence is dropped before windowing."""
    freq = count / total
    if freq <= subsample_t:
        return 0.0
    return 1.0 - (subsample_t / freq) ** 0.5


def negative_distribution(vocab: Vocabulary) -> np.ndarray:
    """Unigram^(3/4) sampling distribution over vocabulary indices."""
    weights = vocab.counts.astype(np.float64) ** NEGATIVE_POWER
    return weights / weights.sum()


def _draw_negatives(rng: np.random.Generator, cumulative: np.ndarray, shape) -> np.ndarray:
    return np.searchsorted(cumulative, rng.random(shape), side="right").astype(np.int64)


def _discard_table(vocab: Vocabulary, subsample_t: float) -> np.ndarray:
    total = vocab.total_count
    return np.array(
        [discard_probability(int(c), total, subsample_t) for c in vocab.counts]
    )


def _negative_cumulative(vocab: Vocabulary) -> np.ndarray:
    cumulative = np.cumsum(negative_distribution(vocab))
    cumulative /= cumulative[-1]
    return cumulative


def generate_examples(
    track: AnnotatedTrack,
    vocab: Vocabulary,
    config: TrainConfig,
    rng: np.random.Generator,
    _discard: np.ndarray | None = None,
    _cumulative: np.ndarray | None = None,
) -> list[SkipgramExample]:
    """Skipgram examples for one track.

    Out-of-vocabulary tokens are dropped, subsampling filters the remaining
    occurrences, and the +-window pairs are formed over the surviving
    sequence.  Consumes rng in a fixed order: one uniform per surviving-
    candidate token, then one block of negatives for all pairs.  The two
    private arguments let the trainer reuse per-vocabulary tables.
    """
    if _discard is None:
        _discard = _discard_table(vocab, config.subsample_t)
    if _cumulative is None:
        _cumulative = _negative_cumulative(vocab)
    indices = np.array(
        [vocab.index[c] for c in track.chords if c in vocab.index], dtype=np.int64
    )
    if indices.size == 0:
        return []
    survivors = indices[rng.random(indices.size) >= _discard[indices]]
    pairs: list[tuple[int, int]] = []
    n = survivors.size
    for t in range(n):
        lo = max(0, t - config.window)
        hi = min(n, t + config.window + 1)
        for c in range(lo, hi):
            if c != t:
                pairs.append((int(survivors[t]), int(survivors[c])))
    if not pairs:
        return []
    negatives = _draw_negatives(rng, _cumulative, (len(pairs), config.negatives))
    return [
        SkipgramExample(center=center, context=context, negatives=negatives[i])
        for i, (center, context) in enumerate(pairs)
    ]


def _component_table(vocab: Vocabulary, kind: DecompositionKind) -> tuple[np.ndarray, np.ndarray]:
    """Flattened per-token component ids plus offsets (CSR layout)."""
    offsets = np.zeros(len(vocab) + 1, dtype=np.int64)
    flat: list[int] = []
    for i, token in enumerate(vocab.tokens):
        ids = decompose(token, kind, vocab)
        flat.extend(ids)
        offsets[i + 1] = len(flat)
    return np.array(flat, dtype=np.int64), offsets


def sgns_example_loss(in_vec, out_vec, comps, context, negatives) -> float:
    """Reference loss used by the gradient checks (numpy, no updates)."""
    u = in_vec[np.asarray(comps, dtype=np.int64)].sum(axis=0)
    s_pos = float(out_vec[context] @ u)
    s_neg = out_vec[np.asarray(negatives, dtype=np.int64)] @ u
    return float(np.logaddexp(0.0, -s_pos) + np.logaddexp(0.0, s_neg).sum())


def sgns_example_grads(in_vec, out_vec, comps, context, negatives):
    """Analytic gradients of sgns_example_loss at the current parameters.

    Returns (input_grads, output_grads) as {row: gradient vector} with
    duplicate rows accumulated, matching what one optimizer step sees.
    """
    comps = np.asarray(comps, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64)
    u = in_vec[comps].sum(axis=0)
    targets = np.concatenate(([context], negatives)).astype(np.int64)
    scores = out_vec[targets] @ u
    sig = 1.0 / (1.0 + np.exp(-np.clip(scores, -500, 500)))
    coef = sig.copy()
    coef[0] -= 1.0
    grad_u = coef @ out_vec[targets]
    out_grads: dict[int, np.ndarray] = {}
    for i, row in enumerate(targets):
        grad = coef[i] * u
        if int(row) in out_grads:
            out_grads[int(row)] = out_grads[int(row)] + grad
        else:
            out_grads[int(row)] = grad
    in_grads: dict[int, np.ndarray] = {}
    for row in comps:
        if int(row) in in_grads:
            in_grads[int(row)] = in_grads[int(row)] + grad_u
        else:
            in_grads[int(row)] = grad_u.copy()
    return in_grads, out_grads


def train_embedding(
    tracks: list[AnnotatedTrack],
    kind: DecompositionKind,
    config: TrainConfig | None = None,
) -> EmbeddingModel:
    """Train embeddings over the tracks' chord sequences.

    Deterministic for a fixed seed when workers == 1.  With workers > 1 and
    numba available, examples are sharded across threads hogwild-style and
    the result is no longer reproducible.
    """
    if config is None:
        config = TrainConfig()
    vocab = build_vocab(tracks, config.min_count)
    dim = config.resolved_dim(kind)
    comp_flat, comp_off = _component_table(vocab, kind)
    n_comp = n_components_for(kind, len(vocab))
    if comp_flat.size and comp_flat.max() >= n_comp:
        raise DataError("component id out of range")

    rng = np.random.default_rng(config.seed)
    half = 1.0 / (2.0 * dim)
    in_vec = rng.uniform(-half, half, size=(n_comp, dim))
    out_vec = np.zeros((len(vocab), dim))
    unknown = rng.standard_normal(dim) / dim
    m_in = np.zeros_like(in_vec)
    v_in = np.zeros_like(in_vec)
    t_in = np.zeros(n_comp, dtype=np.int64)
    m_out = np.zeros_like(out_vec)
    v_out = np.zeros_like(out_vec)
    t_out = np.zeros(len(vocab), dtype=np.int64)

    workers = config.workers
    if workers > 1 and accel.NUMBA_ENABLED:
        import numba

        numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))
        update = sgns.sgns_batch_update_hogwild
    else:
        update = sgns.sgns_batch_update

    discard = _discard_table(vocab, config.subsample_t)
    cumulative = _negative_cumulative(vocab)
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        loss_sum = 0.0
        n_examples = 0
        for start in range(0, len(tracks), config.batch_progressions):
            batch = tracks[start:start + config.batch_progressions]
            examples: list[SkipgramExample] = []
            for track in batch:
                examples.extend(
                    generate_examples(track, vocab, config, rng, discard, cumulative)
                )
            if not examples:
                continue
            order = rng.permutation(len(examples))
            centers = np.array([examples[i].center for i in order], dtype=np.int64)
            contexts = np.array([examples[i].context for i in order], dtype=np.int64)
            negatives = np.stack([examples[i].negatives for i in order]).astype(np.int64)
            batch_loss = update(
                comp_flat, comp_off, centers, contexts, negatives,
                in_vec, out_vec,
                m_in, v_in, t_in, m_out, v_out, t_out,
                config.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
            )
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite skipgram loss in epoch {epoch + 1} "
                    f"(tracks {start}..{start + len(batch) - 1})"
                )
            loss_sum += batch_loss
            n_examples += len(examples)
        epoch_losses.append(loss_sum / n_examples if n_examples else 0.0)

    return EmbeddingModel(
        kind=kind,
        dim=dim,
        input_vectors=in_vec,
        output_vectors=out_vec,
        vocab=vocab,
        unknown_vector=unknown,
        epoch_losses=epoch_losses,
    )


def embed(model: EmbeddingModel, token: str) -> np.ndarray:
    """Embed any chord token, in or out of vocabulary.

    whole_token falls back to the stored unknown vector for OOV tokens;
    char_ngram always has its hashed n-grams; pitchclass sums component
    rows (zero vector for N) and uses the unknown vector only when the
    label does not parse.
    """
    kind = model.kind
    if isinstance(kind, WholeToken):
        idx = model.vocab.index.get(token)
        if idx is None:
            return model.unknown_vector.copy()
        return model.input_vectors[idx].copy()
    if isinstance(kind, CharNgram):
        ids = decompose(token, kind, model.vocab)
        return model.input_vectors[np.array(ids, dtype=np.int64)].sum(axis=0)
    try:
        ids = decompose(token, kind, model.vocab)
    except MalformedLabel:
        return model.unknown_vector.copy()
    if not ids:
        return np.zeros(model.dim)
    return model.input_vectors[np.array(ids, dtype=np.int64)].sum(axis=0)


def similarity(model: EmbeddingModel, a: str, b: str) -> float:
    """Cosine similarity of the two tokens' embeddings (0 for zero vectors)."""
    va = embed(model, a)
    vb = embed(model, b)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(va @ vb / (na * nb))


def hybrid_embed(models: list[EmbeddingModel], token: str) -> np.ndarray:
    """Concatenation of several models' embeddings of the same token."""
    if not models:
        raise ValueError("hybrid_embed needs at least one model")
    return np.concatenate([embed(m, token) for m in models])


_MAGIC = "chordemb"
_VERSION = "v1"


def _fmt(values: np.ndarray) -> str:
    return " ".join(format(float(x), ".9g") for x in values)


def save_model(model: EmbeddingModel, path: str | Path) -> None:
    """Plain-text model format.

    Line 1: ``chordemb v1 <kind> <dim> <n_components> <n_vocab>``; then one
    ``c <id> <floats...>`` row per component, one ``w <token> <count>
    <floats...>`` row per vocabulary token (output vectors), and a final
    ``u <floats...>`` row with the unknown vector.  Nine significant digits.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            f"{_MAGIC} {_VERSION} {kind_token(model.kind)} "
            f"{model.dim} {model.n_components} {len(model.vocab)}\n"
        )
        for cid in range(model.n_components):
            fh.write(f"c {cid} {_fmt(model.input_vectors[cid])}\n")
        for i, token in enumerate(model.vocab.tokens):
            fh.write(f"w {token} {int(model.vocab.counts[i])} {_fmt(model.output_vectors[i])}\n")
        fh.write(f"u {_fmt(model.unknown_vector)}\n")


def load_model(path: str | Path) -> EmbeddingModel:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    if not lines:
        raise FormatVersionMismatch(f"{path}: empty model file")
    header = lines[0].split()
    if len(header) != 6 or header[0] != _MAGIC:
        raise FormatVersionMismatch(f"{path}: not a chordemb model file")
    if header[1] != _VERSION:
        raise FormatVersionMismatch(f"{path}: unsupported version {header[1]!r}")
    kind = parse_kind_token(header[2])
    try:
        dim, n_comp, n_vocab = (int(x) for x in header[3:6])
    except ValueError:
        raise FormatVersionMismatch(f"{path}: bad header counts") from None
    expected = n_comp + n_vocab + 1
    body = lines[1:]
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} rows, found {len(body)}")
    in_vec = np.empty((n_comp, dim))
    out_vec = np.empty((n_vocab, dim))
    tokens: list[str] = []
    counts = np.empty(n_vocab, dtype=np.int64)
    for r in range(n_comp):
        parts = body[r].split()
        if len(parts) != dim + 2 or parts[0] != "c" or int(parts[1]) != r:
            raise DataError(f"{path}: bad component row {r}")
        in_vec[r] = [float(x) for x in parts[2:]]
    for r in range(n_vocab):
        parts = body[n_comp + r].split()
        if len(parts) != dim + 3 or parts[0] != "w":
            raise DataError(f"{path}: bad vocab row {r}")
        tokens.append(parts[1])
        counts[r] = int(parts[2])
        out_vec[r] = [float(x) for x in parts[3:]]
    parts = body[-1].split()
    if len(parts) != dim + 1 or parts[0] != "u":
        raise DataError(f"{path}: bad unknown-vector row")
    unknown = np.array([float(x) for x in parts[1:]])
    vocab = Vocabulary(tokens=tokens, counts=counts, index={t: i for i, t in enumerate(tokens)})
    if n_comp != n_components_for(kind, n_vocab):
        raise DataError(f"{path}: component count does not match kind")
    return EmbeddingModel(
        kind=kind,
        dim=dim,
        input_vectors=in_vec,
        output_vectors=out_vec,
        vocab=vocab,
        unknown_vector=unknown,
    )
