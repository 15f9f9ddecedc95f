"""Stacked unidirectional LSTM for per-chord section labeling.

Tracks arrive as (T, d) float64 matrices of embedded chords with one int
label per position.  A stack of LSTM layers (canonical gates, initial state
zero, forget-gate bias +1 at init) feeds a per-timestep linear projection,
trained with mean masked softmax cross-entropy under dense Adam.  Inverted
dropout is applied between layers in training mode only.

Early stopping watches mean validation pairwise F1 with a patience window
and returns the best-on-validation parameters.

Artifact format: ``<stem>.json`` manifest plus ``<stem>.params`` holding
every parameter as little-endian float64 in the documented order (per
layer: W then U then bias, each as four gate blocks i, f, g, o, matrices
row-major; projection weight and bias last).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError
from .kernels import lstm as K
from .metrics import pairwise_scores

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

GATE_ORDER = "ifgo"


@dataclass
class SegmenterConfig:
    hidden_size: int = 100
    num_layers: int = 1
    dropout: float = 0.0
    batch_tracks: int = 128
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.hidden_size < 1 or self.num_layers < 1:
            raise ValueError("hidden_size and num_layers must be >= 1")


@dataclass
class LstmParams:
    """Weights for the stack: per layer W (Din, 4H), U (H, 4H), b (4H,),
    gates in column blocks ordered i, f, g, o; plus the projection."""

    w: list[np.ndarray]
    u: list[np.ndarray]
    b: list[np.ndarray]
    proj_w: np.ndarray  # (H, n_labels)
    proj_b: np.ndarray  # (n_labels,)

    @property
    def num_layers(self) -> int:
        return len(self.w)

    @property
    def hidden_size(self) -> int:
        return self.u[0].shape[0]

    @property
    def input_dim(self) -> int:
        return self.w[0].shape[0]

    @property
    def n_labels(self) -> int:
        return self.proj_w.shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Flat array list in optimizer order (not the artifact order)."""
        out: list[np.ndarray] = []
        for l in range(self.num_layers):
            out.extend((self.w[l], self.u[l], self.b[l]))
        out.extend((self.proj_w, self.proj_b))
        return out

    def copy(self) -> "LstmParams":
        return LstmParams(
            w=[a.copy() for a in self.w],
            u=[a.copy() for a in self.u],
            b=[a.copy() for a in self.b],
            proj_w=self.proj_w.copy(),
            proj_b=self.proj_b.copy(),
        )

    def param_count(self) -> int:
        return int(sum(a.size for a in self.arrays()))


def init_params(
    input_dim: int,
    hidden_size: int,
    num_layers: int,
    n_labels: int,
    rng: np.random.Generator,
) -> LstmParams:
    """Uniform +-1/sqrt(H) weights, zero biases, forget-gate bias +1.

    rng is consumed in a fixed order: per layer W then U, then the
    projection weight.
    """
    bound = 1.0 / np.sqrt(hidden_size)
    w, u, b = [], [], []
    din = input_dim
    for _ in range(num_layers):
        w.append(rng.uniform(-bound, bound, size=(din, 4 * hidden_size)))
        u.append(rng.uniform(-bound, bound, size=(hidden_size, 4 * hidden_size)))
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size:2 * hidden_size] = 1.0
        b.append(bias)
        din = hidden_size
    proj_w = rng.uniform(-bound, bound, size=(hidden_size, n_labels))
    return LstmParams(w=w, u=u, b=b, proj_w=proj_w, proj_b=np.zeros(n_labels))


def lstm_cell(
    x: np.ndarray, h: np.ndarray, c: np.ndarray,
    w: np.ndarray, u: np.ndarray, b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """One step of one layer on 1-D vectors; returns (h', c')."""
    hidden = u.shape[0]
    z = x @ w + h @ u + b
    i = 1.0 / (1.0 + np.exp(-z[:hidden]))
    f = 1.0 / (1.0 + np.exp(-z[hidden:2 * hidden]))
    g = np.tanh(z[2 * hidden:3 * hidden])
    o = 1.0 / (1.0 + np.exp(-z[3 * hidden:]))
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def _forward_batch(x, params: LstmParams, dropout_masks=None):
    """Run the stack over (T, B, D); returns (logits, layer caches)."""
    caches = []
    inp = x
    last = params.num_layers - 1
    for l in range(params.num_layers):
        h, ig, fg, gg, og, cs = K.lstm_layer_forward(inp, params.w[l], params.u[l], params.b[l])
        caches.append((inp, h, ig, fg, gg, og, cs))
        inp = h
        if l < last and dropout_masks is not None:
            inp = h * dropout_masks[l]
    T, B, H = inp.shape
    logits = (inp.reshape(T * B, H) @ params.proj_w).reshape(T, B, params.n_labels)
    logits += params.proj_b
    return logits, caches


def _masked_ce(logits, y, valid):
    """Mean softmax cross-entropy over valid positions and its gradient.

    Returns (loss, dlogits); dlogits is zero at padded positions.
    """
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("batch contains no valid positions")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    z = exp.sum(axis=-1, keepdims=True)
    logp = shifted - np.log(z)
    picked = np.take_along_axis(logp, y[..., None], axis=-1)[..., 0]
    loss = float(-picked[valid].sum() / n_valid)
    dlogits = exp / z
    np.put_along_axis(
        dlogits, y[..., None],
        np.take_along_axis(dlogits, y[..., None], axis=-1) - 1.0, axis=-1,
    )
    dlogits *= valid[..., None] / n_valid
    return loss, dlogits


@dataclass
class _Grads:
    w: list[np.ndarray]
    u: list[np.ndarray]
    b: list[np.ndarray]
    proj_w: np.ndarray
    proj_b: np.ndarray
    dx0: np.ndarray | None = field(repr=False, default=None)  # grad w.r.t. the embeddings

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for l in range(len(self.w)):
            out.extend((self.w[l], self.u[l], self.b[l]))
        out.extend((self.proj_w, self.proj_b))
        return out


def _backward_batch(dlogits, caches, params: LstmParams, dropout_masks=None) -> _Grads:
    T, B, C = dlogits.shape
    H = params.hidden_size
    top_h = caches[-1][1]
    flat_h = top_h.reshape(T * B, H)
    flat_dl = dlogits.reshape(T * B, C)
    d_proj_w = flat_h.T @ flat_dl
    d_proj_b = flat_dl.sum(axis=0)
    dh = (flat_dl @ params.proj_w.T).reshape(T, B, H)
    dw = [None] * params.num_layers
    du = [None] * params.num_layers
    db = [None] * params.num_layers
    dx = None
    for l in range(params.num_layers - 1, -1, -1):
        inp, h, ig, fg, gg, og, cs = caches[l]
        dx, dw[l], du[l], db[l] = K.lstm_layer_backward(
            dh, inp, h, ig, fg, gg, og, cs, params.w[l], params.u[l]
        )
        if l > 0:
            dh = dx * dropout_masks[l - 1] if dropout_masks is not None else dx
    return _Grads(w=dw, u=du, b=db, proj_w=d_proj_w, proj_b=d_proj_b, dx0=dx)


def _pad_batch(items: list[tuple[np.ndarray, np.ndarray]]):
    """Stack variable-length (X, y) tracks into (T, B, .) plus a valid mask."""
    t_max = max(x.shape[0] for x, _ in items)
    b = len(items)
    d = items[0][0].shape[1]
    x = np.zeros((t_max, b, d))
    y = np.zeros((t_max, b), dtype=np.int64)
    valid = np.zeros((t_max, b), dtype=bool)
    for col, (xi, yi) in enumerate(items):
        t = xi.shape[0]
        x[:t, col, :] = xi
        y[:t, col] = yi
        valid[:t, col] = True
    return x, y, valid


def batch_loss(
    items: list[tuple[np.ndarray, np.ndarray]],
    params: LstmParams,
) -> float:
    """Evaluation-mode mean cross-entropy over the tracks (no dropout)."""
    x, y, valid = _pad_batch(items)
    logits, _ = _forward_batch(x, params)
    loss, _ = _masked_ce(logits, y, valid)
    return loss


def forward(
    track_vectors: np.ndarray,
    params: LstmParams,
    train_mode: bool = False,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-timestep logits (T, n_labels) for one track."""
    x = np.asarray(track_vectors, dtype=np.float64)[:, None, :]
    masks = None
    if train_mode and dropout > 0.0 and params.num_layers > 1:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        masks = _dropout_masks(rng, dropout, params.num_layers, x.shape[0], 1, params.hidden_size)
    logits, _ = _forward_batch(x, params, masks)
    return logits[:, 0, :]


def predict_sections(track_vectors: np.ndarray, params: LstmParams) -> np.ndarray:
    """Argmax label per position (ties resolve to the lowest index)."""
    return np.argmax(forward(track_vectors, params), axis=-1).astype(np.int64)


def _dropout_masks(rng, p, num_layers, t, b, h):
    keep = rng.random((num_layers - 1, t, b, h)) >= p
    return keep.astype(np.float64) / (1.0 - p)


def train_segmenter(
    train_data: list[tuple[np.ndarray, np.ndarray]],
    val_data: list[tuple[np.ndarray, np.ndarray]],
    config: SegmenterConfig,
    n_labels: int | None = None,
) -> tuple[LstmParams, list[dict]]:
    """Train on (X, y) tracks; returns (parameters, per-epoch log).

    With validation tracks, training stops after ``patience`` epochs without
    improvement in mean pairwise F1 and the best parameters are returned;
    without them it runs to max_epochs.  Deterministic for a fixed seed.
    """
    if not train_data:
        raise DataError("no training tracks")
    if n_labels is None:
        observed = [int(y.max()) for _, y in train_data + val_data if y.size]
        n_labels = max(observed) + 1
    rng = np.random.default_rng(config.seed)
    params = init_params(
        train_data[0][0].shape[1], config.hidden_size, config.num_layers, n_labels, rng
    )
    arrays = params.arrays()
    m = [np.zeros_like(a) for a in arrays]
    v = [np.zeros_like(a) for a in arrays]
    step = 0
    log: list[dict] = []
    best_params = params.copy()
    best_f1 = -np.inf
    bad_epochs = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_data))
        ce_sum = 0.0
        valid_sum = 0
        for start in range(0, len(order), config.batch_tracks):
            chunk = [train_data[i] for i in order[start:start + config.batch_tracks]]
            x, y, valid = _pad_batch(chunk)
            masks = None
            if config.dropout > 0.0 and config.num_layers > 1:
                masks = _dropout_masks(
                    rng, config.dropout, config.num_layers,
                    x.shape[0], x.shape[1], config.hidden_size,
                )
            logits, caches = _forward_batch(x, params, masks)
            loss, dlogits = _masked_ce(logits, y, valid)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss in epoch {epoch}")
            grads = _backward_batch(dlogits, caches, params, masks)
            step += 1
            bc1 = 1.0 - ADAM_BETA1 ** step
            bc2 = 1.0 - ADAM_BETA2 ** step
            for a, g, ma, va in zip(arrays, grads.arrays(), m, v):
                ma *= ADAM_BETA1
                ma += (1.0 - ADAM_BETA1) * g
                va *= ADAM_BETA2
                va += (1.0 - ADAM_BETA2) * g * g
                a -= config.learning_rate * (ma / bc1) / (np.sqrt(va / bc2) + ADAM_EPS)
            n_batch_valid = int(valid.sum())
            ce_sum += loss * n_batch_valid
            valid_sum += n_batch_valid
        entry = {"epoch": epoch, "train_loss": ce_sum / valid_sum}
        if val_data:
            f1s = []
            for xv, yv in val_data:
                predicted = predict_sections(xv, params)
                f1s.append(pairwise_scores(yv.tolist(), predicted.tolist())[2])
            entry["val_f1"] = float(np.mean(f1s))
            log.append(entry)
            if entry["val_f1"] > best_f1:
                best_f1 = entry["val_f1"]
                best_params = params.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    break
        else:
            log.append(entry)
    if not val_data:
        best_params = params
    return best_params, log


def loss_for_track(params: LstmParams, x: np.ndarray, y: np.ndarray) -> float:
    """Evaluation-mode loss of one track (used by the gradient check)."""
    return batch_loss([(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64))], params)


def track_gradients(params: LstmParams, x: np.ndarray, y: np.ndarray) -> _Grads:
    """Analytic gradients of loss_for_track at the current parameters."""
    xb, yb, valid = _pad_batch([(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64))])
    logits, caches = _forward_batch(xb, params)
    _, dlogits = _masked_ce(logits, yb, valid)
    return _backward_batch(dlogits, caches, params)


def gradient_check(
    params: LstmParams, x: np.ndarray, y: np.ndarray, epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error for one coordinate is |ga - gn| / max(|ga|, |gn|, 1e-8), so a
    zero-gradient degenerate example passes vacuously.
    """
    gradient_arrays = track_gradients(params, x, y).arrays()
    worst = 0.0
    for arr, g_arr in zip(params.arrays(), gradient_arrays):
        flat = arr.ravel()
        g_flat = g_arr.ravel()
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + epsilon
            up = loss_for_track(params, x, y)
            flat[idx] = original - epsilon
            down = loss_for_track(params, x, y)
            flat[idx] = original
            numeric = (up - down) / (2.0 * epsilon)
            ga = float(g_flat[idx])
            err = abs(ga - numeric) / max(abs(ga), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


_ARTIFACT_FORMAT = "chordseg-lstm v1"
_PARAM_ORDER = (
    "per layer: W then U then bias, each as gate blocks i,f,g,o "
    "(matrices row-major); then projection weight, projection bias; "
    "little-endian float64"
)


def _gate_blocks(matrix: np.ndarray, hidden: int) -> list[np.ndarray]:
    return [matrix[..., g * hidden:(g + 1) * hidden] for g in range(4)]


def save_segmenter(
    stem: str | Path,
    params: LstmParams,
    config: SegmenterConfig,
    labels: list[str],
    embedding_info: list[dict] | None = None,
) -> tuple[Path, Path]:
    """Write <stem>.json manifest and <stem>.params parameter block."""
    stem = Path(stem)
    h = params.hidden_size
    blob = bytearray()
    for l in range(params.num_layers):
        for matrix in (params.w[l], params.u[l], params.b[l]):
            for block in _gate_blocks(matrix, h):
                blob += np.ascontiguousarray(block, dtype="<f8").tobytes()
    blob += np.ascontiguousarray(params.proj_w, dtype="<f8").tobytes()
    blob += np.ascontiguousarray(params.proj_b, dtype="<f8").tobytes()
    manifest = {
        "format": _ARTIFACT_FORMAT,
        "input_dim": params.input_dim,
        "hidden_size": params.hidden_size,
        "num_layers": params.num_layers,
        "n_labels": params.n_labels,
        "dropout": config.dropout,
        "labels": list(labels),
        "embedding": embedding_info,
        "param_count": params.param_count(),
        "param_order": _PARAM_ORDER,
    }
    json_path = stem.with_suffix(".json")
    params_path = stem.with_suffix(".params")
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    params_path.write_bytes(bytes(blob))
    return json_path, params_path


def load_segmenter(stem: str | Path) -> tuple[LstmParams, dict]:
    """Read back a saved artifact; returns (params, manifest)."""
    stem = Path(stem)
    json_path = stem.with_suffix(".json")
    params_path = stem.with_suffix(".params")
    try:
        manifest = json.loads(json_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read segmenter manifest {json_path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"bad segmenter manifest {json_path}: {exc}") from None
    if manifest.get("format") != _ARTIFACT_FORMAT:
        raise DataError(f"{json_path}: unsupported artifact format")
    try:
        raw = np.frombuffer(params_path.read_bytes(), dtype="<f8")
    except OSError as exc:
        raise DataError(f"cannot read segmenter parameters {params_path}: {exc}") from None
    din = int(manifest["input_dim"])
    h = int(manifest["hidden_size"])
    layers = int(manifest["num_layers"])
    n_labels = int(manifest["n_labels"])
    expected = 0
    d = din
    for _ in range(layers):
        expected += d * 4 * h + h * 4 * h + 4 * h
        d = h
    expected += h * n_labels + n_labels
    if raw.size != expected:
        raise DataError(
            f"{params_path}: expected {expected} parameters, found {raw.size}"
        )
    offset = 0

    def take(shape) -> np.ndarray:
        nonlocal offset
        size = int(np.prod(shape))
        out = raw[offset:offset + size].reshape(shape).astype(np.float64)
        offset += size
        return out

    w, u, b = [], [], []
    d = din
    for _ in range(layers):
        wl = np.empty((d, 4 * h))
        for g in range(4):
            wl[:, g * h:(g + 1) * h] = take((d, h))
        ul = np.empty((h, 4 * h))
        for g in range(4):
            ul[:, g * h:(g + 1) * h] = take((h, h))
        bl = np.empty(4 * h)
        for g in range(4):
            bl[g * h:(g + 1) * h] = take((h,))
        w.append(wl)
        u.append(ul)
        b.append(bl)
        d = h
    proj_w = take((h, n_labels))
    proj_b = take((n_labels,))
    return LstmParams(w=w, u=u, b=b, proj_w=proj_w, proj_b=proj_b), manifest
