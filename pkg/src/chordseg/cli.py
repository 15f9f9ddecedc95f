"""Command-line interface.

Subcommands: synth-corpus, train-embedding, train-segmenter, segment,
evaluate, plus ``baseline`` (segment restricted to the non-learned
methods).  Every option may also come from a ``--config`` file of flat
``key = value`` lines; explicit flags win over the file, which wins over
defaults.  Each run writes a ``<out>.manifest.json`` next to its primary
output recording the effective settings.

Exit codes: 0 success, 1 usage problems, 2 data errors, 3 numeric failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, accel, corpus as corpus_mod, embeddings as emb_mod, form, lstm as lstm_mod
from . import metrics as metrics_mod
from .errors import DataError, NumericError
from .segmentation import Segment, Segmentation, labels_to_segments


class UsageError(Exception):
    """Bad or missing settings discovered after argument parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class _Opt:
    type: Callable
    default: object = None
    help: str = ""
    choices: tuple | None = None
    required: bool = False


def _bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    value = str(raw).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _ratios(raw) -> tuple[float, float, float]:
    if isinstance(raw, tuple):
        return raw
    parts = [p for p in str(raw).replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValueError(f"ratios need three numbers, got {raw!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


_SCHEMAS: dict[str, dict[str, _Opt]] = {
    "synth-corpus": {
        "out": _Opt(str, required=True, help="output corpus JSONL path"),
        "tracks": _Opt(int, 200, "number of tracks to generate"),
        "seed": _Opt(int, 0, "random seed"),
        "grammar": _Opt(str, None, "JSON file mapping section label to chord templates"),
        "transpose": _Opt(_bool, True, "transpose each track by a random interval"),
    },
    "train-embedding": {
        "corpus": _Opt(str, required=True, help="input corpus JSONL"),
        "out": _Opt(str, required=True, help="output model path"),
        "kind": _Opt(str, "pitchclass2vec", "decomposition",
                     choices=("word2vec", "fasttext", "pitchclass2vec")),
        "dim": _Opt(int, None, "embedding size (default 10 pitchclass2vec, 300 others)"),
        "window": _Opt(int, 2, "context window half-width"),
        "negatives": _Opt(int, 20, "negative samples per example"),
        "subsample_t": _Opt(float, 1e-5, "frequency subsampling threshold"),
        "epochs": _Opt(int, 10, "training epochs"),
        "batch_progressions": _Opt(int, 512, "tracks pooled per shuffling batch"),
        "learning_rate": _Opt(float, 0.025, "Adam learning rate"),
        "min_count": _Opt(int, 1, "minimum token count"),
        "min_n": _Opt(int, 2, "fasttext: shortest n-gram"),
        "max_n": _Opt(int, 5, "fasttext: longest n-gram"),
        "buckets": _Opt(int, 100000, "fasttext: n-gram hash buckets"),
        "workers": _Opt(int, 1, "parallel workers (>1 is nondeterministic)"),
        "seed": _Opt(int, 0, "random seed"),
    },
    "train-segmenter": {
        "corpus": _Opt(str, required=True, help="labeled corpus JSONL"),
        "embedding": _Opt(str, required=True, help="embedding model path"),
        "embedding2": _Opt(str, None, "second model for hybrid input"),
        "out": _Opt(str, required=True, help="artifact stem (writes .json/.params)"),
        "hidden_size": _Opt(int, 100, "LSTM hidden units"),
        "num_layers": _Opt(int, 1, "stacked LSTM layers"),
        "dropout": _Opt(float, 0.0, "inter-layer dropout"),
        "batch_tracks": _Opt(int, 128, "tracks per training batch"),
        "learning_rate": _Opt(float, 1e-3, "Adam learning rate"),
        "max_epochs": _Opt(int, 100, "epoch cap"),
        "patience": _Opt(int, 5, "early-stopping patience"),
        "ratios": _Opt(_ratios, (0.75, 0.17, 0.08), "train/validation/test split"),
        "seed": _Opt(int, 0, "random seed"),
    },
    "segment": {
        "corpus": _Opt(str, required=True, help="corpus JSONL to segment"),
        "out": _Opt(str, required=True, help="output segmentation JSONL"),
        "method": _Opt(str, required=True, help="segmentation method",
                       choices=("lstm", "form-raw", "form-simple", "random", "fixed-pop")),
        "model": _Opt(str, None, "segmenter artifact stem (lstm)"),
        "embedding": _Opt(str, None, "embedding model path (lstm)"),
        "embedding2": _Opt(str, None, "second model for hybrid input (lstm)"),
        "min_len": _Opt(int, 2, "shortest repeated pattern (form methods)"),
        "seed": _Opt(int, 0, "random seed (random method)"),
    },
    "evaluate": {
        "ref": _Opt(str, required=True, help="reference corpus JSONL with sections"),
        "est": _Opt(str, required=True, help="estimated segmentation JSONL"),
        "out": _Opt(str, required=True, help="report stem (writes .json/.csv)"),
    },
}

# baseline = segment without the learned method
_SCHEMAS["baseline"] = {
    key: (_Opt(opt.type, opt.default, opt.help,
               ("form-raw", "form-simple", "random", "fixed-pop"), opt.required)
          if key == "method" else opt)
    for key, opt in _SCHEMAS["segment"].items()
    if key not in ("model", "embedding", "embedding2")
}


def _read_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _effective_settings(ns: argparse.Namespace, schema: dict[str, _Opt]) -> dict:
    settings = {key: opt.default for key, opt in schema.items()}
    config_path = getattr(ns, "config", None)
    if config_path is not None:
        for key, raw in _read_config_file(config_path).items():
            if key not in schema:
                raise DataError(f"unknown config key {key!r} for this command")
            try:
                settings[key] = schema[key].type(raw)
            except ValueError as exc:
                raise DataError(f"bad config value for {key!r}: {exc}") from None
    for key in schema:
        if hasattr(ns, key):
            settings[key] = getattr(ns, key)
    for key, opt in schema.items():
        if opt.required and settings[key] is None:
            raise UsageError(f"missing required setting --{key.replace('_', '-')}")
        if opt.choices and settings[key] not in opt.choices:
            raise UsageError(
                f"--{key.replace('_', '-')} must be one of {', '.join(opt.choices)}"
            )
    return settings


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _write_manifest(primary_out: str | Path, command: str, settings: dict,
                    extra: dict | None = None) -> Path:
    out = Path(primary_out)
    manifest: dict = {
        "command": command,
        "settings": {k: _jsonable(v) for k, v in sorted(settings.items())},
        "versions": {
            "chordseg": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "kernels": "numba" if accel.NUMBA_ENABLED else "numpy",
        },
    }
    if extra:
        manifest.update(extra)
    path = out.with_name(out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _map_tracks(fn, items):
    """Apply fn over items, optionally with a thread pool (CHORDSEG_THREADS)."""
    workers = accel.thread_cap()
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _write_segmentations(path: str | Path, items: list[tuple[str, Segmentation]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for track_id, seg in sorted(items, key=lambda kv: kv[0]):
            record = {
                "id": track_id,
                "segments": [[s.start, s.end, s.label] for s in seg.segments],
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def _load_segmentations(path: str | Path) -> dict[str, Segmentation]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read segmentations {path}: {exc}") from None
    out: dict[str, Segmentation] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or "id" not in obj or "segments" not in obj:
            raise DataError(f"{path}:{lineno}: need 'id' and 'segments'")
        segments = [Segment(int(s), int(e), str(label)) for s, e, label in obj["segments"]]
        if obj["id"] in out:
            raise DataError(f"{path}:{lineno}: duplicate track id {obj['id']!r}")
        out[str(obj["id"])] = Segmentation(segments)
    if not out:
        raise DataError(f"{path}: no segmentations found")
    return out


def _embedding_kind(settings: dict) -> emb_mod.DecompositionKind:
    name = settings["kind"]
    if name == "word2vec":
        return emb_mod.WholeToken()
    if name == "fasttext":
        return emb_mod.CharNgram(
            min_n=settings["min_n"], max_n=settings["max_n"], buckets=settings["buckets"]
        )
    return emb_mod.PitchClass()


def _load_embedding_stack(settings: dict) -> list[emb_mod.EmbeddingModel]:
    paths = [settings["embedding"]]
    if settings.get("embedding2"):
        paths.append(settings["embedding2"])
    return [emb_mod.load_model(p) for p in paths]


def _embed_tracks(models, tracks) -> list[np.ndarray]:
    def one(track):
        return np.stack([emb_mod.hybrid_embed(models, chord) for chord in track.chords])

    return _map_tracks(one, tracks)


def _require_sections(tracks, path) -> None:
    missing = [t.id for t in tracks if t.sections is None]
    if missing:
        raise DataError(
            f"{path}: tracks without section labels: {', '.join(missing[:5])}"
            + ("..." if len(missing) > 5 else "")
        )


def _cmd_synth_corpus(ns: argparse.Namespace) -> int:
    settings = _effective_settings(ns, _SCHEMAS["synth-corpus"])
    grammar = None
    if settings["grammar"]:
        try:
            grammar = json.loads(Path(settings["grammar"]).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read grammar: {exc}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"bad grammar JSON: {exc}") from None
    tracks = corpus_mod.generate_synthetic_corpus(
        settings["tracks"], grammar, seed=settings["seed"], transpose=settings["transpose"]
    )
    corpus_mod.save_corpus(tracks, settings["out"])
    _write_manifest(settings["out"], "synth-corpus", settings,
                    {"outputs": [settings["out"]], "n_tracks": len(tracks)})
    print(f"wrote {len(tracks)} tracks to {settings['out']}")
    return 0


def _cmd_train_embedding(ns: argparse.Namespace) -> int:
    settings = _effective_settings(ns, _SCHEMAS["train-embedding"])
    load = corpus_mod.load_corpus(settings["corpus"])
    for track_id, reason in load.skipped:
        print(f"skipping {track_id}: {reason}", file=sys.stderr)
    kind = _embedding_kind(settings)
    config = emb_mod.TrainConfig(
        dim=settings["dim"],
        window=settings["window"],
        negatives=settings["negatives"],
        subsample_t=settings["subsample_t"],
        epochs=settings["epochs"],
        batch_progressions=settings["batch_progressions"],
        learning_rate=settings["learning_rate"],
        min_count=settings["min_count"],
        seed=settings["seed"],
        workers=settings["workers"],
    )
    model = emb_mod.train_embedding(load.tracks, kind, config)
    emb_mod.save_model(model, settings["out"])
    _write_manifest(settings["out"], "train-embedding", settings, {
        "outputs": [settings["out"]],
        "n_tracks": len(load.tracks),
        "n_skipped": len(load.skipped),
        "vocab_size": len(model.vocab),
        "epoch_mean_loss": model.epoch_losses,
    })
    print(f"trained {emb_mod.kind_token(kind)} model on {len(load.tracks)} tracks "
          f"-> {settings['out']}")
    return 0


def _labels_and_targets(tracks) -> tuple[list[str], list[np.ndarray]]:
    names = sorted({label for track in tracks for label in track.sections})
    index = {name: i for i, name in enumerate(names)}
    targets = [
        np.array([index[label] for label in track.sections], dtype=np.int64)
        for track in tracks
    ]
    return names, targets


def _cmd_train_segmenter(ns: argparse.Namespace) -> int:
    settings = _effective_settings(ns, _SCHEMAS["train-segmenter"])
    load = corpus_mod.load_corpus(settings["corpus"])
    for track_id, reason in load.skipped:
        print(f"skipping {track_id}: {reason}", file=sys.stderr)
    _require_sections(load.tracks, settings["corpus"])
    split = corpus_mod.split_dataset(load.tracks, settings["ratios"], settings["seed"])
    if not split.train:
        raise DataError("empty training split")
    models = _load_embedding_stack(settings)
    labels, _ = _labels_and_targets(load.tracks)
    index = {name: i for i, name in enumerate(labels)}

    def pack(tracks):
        xs = _embed_tracks(models, tracks)
        ys = [np.array([index[s] for s in t.sections], dtype=np.int64) for t in tracks]
        return list(zip(xs, ys))

    config = lstm_mod.SegmenterConfig(
        hidden_size=settings["hidden_size"],
        num_layers=settings["num_layers"],
        dropout=settings["dropout"],
        batch_tracks=settings["batch_tracks"],
        learning_rate=settings["learning_rate"],
        max_epochs=settings["max_epochs"],
        patience=settings["patience"],
        seed=settings["seed"],
    )
    params, log = lstm_mod.train_segmenter(
        pack(split.train), pack(split.validation), config, n_labels=len(labels)
    )
    embedding_info = [
        {"path": str(p), "kind": emb_mod.kind_token(m.kind), "dim": m.dim}
        for p, m in zip(
            [settings["embedding"]] + ([settings["embedding2"]] if settings["embedding2"] else []),
            models,
        )
    ]
    lstm_mod.save_segmenter(settings["out"], params, config, labels, embedding_info)
    _write_manifest(settings["out"], "train-segmenter", settings, {
        "outputs": [settings["out"] + ".json", settings["out"] + ".params"],
        "split_sizes": [len(split.train), len(split.validation), len(split.test)],
        "labels": labels,
        "training_log": log,
    })
    best = max((e.get("val_f1", 0.0) for e in log), default=0.0)
    print(f"trained segmenter ({len(log)} epochs, best val F1 {best:.4f}) "
          f"-> {settings['out']}.json/.params")
    return 0


def _cmd_segment(ns: argparse.Namespace, command: str = "segment") -> int:
    settings = _effective_settings(ns, _SCHEMAS[command])
    load = corpus_mod.load_corpus(settings["corpus"])
    for track_id, reason in load.skipped:
        print(f"skipping {track_id}: {reason}", file=sys.stderr)
    tracks = sorted(load.tracks, key=lambda t: t.id)
    method = settings["method"]
    if method == "lstm":
        if not settings.get("model") or not settings.get("embedding"):
            raise UsageError("--method lstm needs --model and --embedding")
        params, manifest = lstm_mod.load_segmenter(settings["model"])
        models = _load_embedding_stack(settings)
        total_dim = sum(m.dim for m in models)
        if total_dim != params.input_dim:
            raise DataError(
                f"embedding dim {total_dim} does not match model input {params.input_dim}"
            )
        label_names = manifest["labels"]
        xs = _embed_tracks(models, tracks)

        def one_lstm(pair):
            track, x = pair
            predicted = lstm_mod.predict_sections(x, params)
            return track.id, labels_to_segments([label_names[i] for i in predicted])

        items = _map_tracks(one_lstm, list(zip(tracks, xs)))
    elif method in ("form-raw", "form-simple"):
        segment_fn = form.form_raw_segment if method == "form-raw" else form.form_simple_segment
        min_len = settings["min_len"]

        def one_form(track):
            return track.id, segment_fn(track.chords, min_len)

        items = _map_tracks(one_form, tracks)
    elif method == "random":
        seed = settings["seed"]

        def one_random(pair):
            position, track = pair
            rng = np.random.default_rng([seed, position])
            return track.id, form.random_segment(len(track.chords), rng)

        items = _map_tracks(one_random, list(enumerate(tracks)))
    else:  # fixed-pop
        def one_fixed(track):
            return track.id, form.fixed_pop_segment(len(track.chords))

        items = _map_tracks(one_fixed, tracks)
    _write_segmentations(settings["out"], items)
    _write_manifest(settings["out"], command, settings,
                    {"outputs": [settings["out"]], "n_tracks": len(items)})
    print(f"segmented {len(items)} tracks with {method} -> {settings['out']}")
    return 0


def _cmd_baseline(ns: argparse.Namespace) -> int:
    return _cmd_segment(ns, command="baseline")


def _cmd_evaluate(ns: argparse.Namespace) -> int:
    settings = _effective_settings(ns, _SCHEMAS["evaluate"])
    load = corpus_mod.load_corpus(settings["ref"])
    _require_sections(load.tracks, settings["ref"])
    estimates = _load_segmentations(settings["est"])
    ref_by_id = {t.id: t for t in load.tracks}
    missing = sorted(set(ref_by_id) - set(estimates))
    if missing:
        raise DataError(f"estimates missing for: {', '.join(missing[:5])}")
    extra = sorted(set(estimates) - set(ref_by_id))
    if extra:
        raise DataError(f"estimates for unknown tracks: {', '.join(extra[:5])}")
    track_ids = sorted(ref_by_id)
    pairs = []
    for tid in track_ids:
        reference = labels_to_segments(ref_by_id[tid].sections)
        pairs.append((reference, estimates[tid]))
    aggregate, rows = metrics_mod.evaluate_corpus(pairs)
    stem = Path(settings["out"])
    json_path = stem.with_suffix(".json")
    csv_path = stem.with_suffix(".csv")
    metrics_mod.write_report_json(json_path, track_ids, rows, aggregate)
    metrics_mod.write_report_csv(csv_path, track_ids, rows, aggregate)
    _write_manifest(stem, "evaluate", settings, {
        "outputs": [str(json_path), str(csv_path)],
        "aggregate": aggregate.as_dict(),
    })
    print("aggregate: " + " ".join(
        f"{name}={value:.6f}" for name, value in aggregate.as_dict().items()
    ))
    return 0


_COMMANDS = {
    "synth-corpus": (_cmd_synth_corpus, "generate a synthetic labeled corpus"),
    "train-embedding": (_cmd_train_embedding, "train chord embeddings"),
    "train-segmenter": (_cmd_train_segmenter, "train the LSTM section labeler"),
    "segment": (_cmd_segment, "segment a corpus with any method"),
    "baseline": (_cmd_baseline, "segment with the repetition/chance baselines"),
    "evaluate": (_cmd_evaluate, "score estimated against reference segmentations"),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="chordseg", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"chordseg {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name, (func, help_text) in _COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", default=None, help="flat key = value settings file")
        for key, opt in _SCHEMAS[name].items():
            flag = "--" + key.replace("_", "-")
            if opt.type is _bool:
                sub.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction,
                                 default=argparse.SUPPRESS, help=opt.help)
            else:
                kwargs = {"dest": key, "type": opt.type,
                          "default": argparse.SUPPRESS, "help": opt.help}
                if opt.choices and opt.type is str:
                    kwargs["choices"] = opt.choices
                sub.add_argument(flag, **kwargs)
        sub.set_defaults(func=func)
    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except UsageError as exc:
        print(f"chordseg {ns.subcommand}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"chordseg {ns.subcommand}: error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"chordseg {ns.subcommand}: numeric failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"chordseg {ns.subcommand}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
