"""Command-line entry point.

Each subcommand parses flags, resolves its configuration (built-in defaults,
then an optional key=value config file, then explicit flags) and delegates to
the library. Query commands (intent, retrieve, compose) can alternatively be
routed to a running service with --server, making the CLI a thin client.

Exit codes: 0 success, 2 usage, 3 missing file, 4 malformed file or schema,
5 invalid/degenerate input, 6 server communication failure, 1 unexpected.
Failures print a single line ``ERROR <CODE> <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, model, retrieval, simulator
from .errors import (
    CheckpointError,
    DimensionMismatchError,
    FeatureFileError,
    ManifestError,
    MVIntentError,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_FORMAT = 4
EXIT_INVALID_INPUT = 5
EXIT_SERVER = 6


class CliError(Exception):
    def __init__(self, code: int, name: str, message: str):
        super().__init__(message)
        self.code = code
        self.name = name


class _Parser(argparse.ArgumentParser):
    """argparse that emits single-line errors with exit code 2."""

    def error(self, message):
        print(f"ERROR USAGE {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read_config_file(path: str | None) -> dict[str, str]:
    """Parse a flat key=value config file; '#' starts a comment."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_MISSING_FILE, "MISSING_FILE", f"config file {path} not found")
    values: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise CliError(
                EXIT_BAD_FORMAT, "BAD_FORMAT", f"{path}:{lineno}: expected key = value"
            )
        key, value = stripped.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags (flags left at None lose)."""
    resolved = dict(defaults)
    file_values = _read_config_file(getattr(args, "config", None))
    for key, raw in file_values.items():
        if key not in defaults:
            raise CliError(EXIT_USAGE, "USAGE", f"unknown config key {key!r}")
        ref = defaults[key]
        if isinstance(ref, bool):
            resolved[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(ref, int):
            resolved[key] = int(raw)
        elif isinstance(ref, float):
            resolved[key] = float(raw)
        else:
            resolved[key] = raw
    for key in defaults:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
    return resolved


def _record_run(out_dir, command: str, resolved: dict) -> None:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "config": resolved, "seed": resolved.get("seed")}
    with open(d / "config.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_MISSING_FILE, "MISSING_FILE", f"{what} {path} not found")
    return p


def _load_dataset(data_dir) -> dataio.MultiViewDataset:
    _require_file(Path(data_dir) / "manifest.jsonl", "dataset manifest in")
    return dataio.load_dataset(data_dir)


def _load_checkpoint(path) -> model.Checkpoint:
    _require_file(path, "checkpoint")
    return dataio.load_checkpoint(path)


def _read_id_list(path) -> list[str]:
    p = _require_file(path, "collection file")
    ids = [line.strip() for line in p.read_text(encoding="utf-8").splitlines()]
    ids = [i for i in ids if i and not i.startswith("#")]
    if not ids:
        raise CliError(EXIT_INVALID_INPUT, "INVALID_INPUT", f"{path} lists no item ids")
    return ids


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "USAGE", f"bad numeric list {text!r}") from exc


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in _parse_float_list(text)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    defaults = {
        "seed": 0,
        "items": 5000,
        "dims": "64,32,16",
        "classes": "9,7,4",
        "w_class": 1.0,
        "w_shared": 0.5,
        "w_noise": 0.3,
    }
    cfg = _resolve(args, defaults)
    sconfig = simulator.SyntheticConfig(
        n_items=cfg["items"],
        view_dims=tuple(_parse_int_list(cfg["dims"])),
        class_counts=tuple(_parse_int_list(cfg["classes"])),
        w_class=cfg["w_class"],
        w_shared=cfg["w_shared"],
        w_noise=cfg["w_noise"],
        seed=cfg["seed"],
    )
    dataset = simulator.generate_synthetic(sconfig)
    dataio.save_dataset(dataset, args.out_dir)
    _record_run(args.out_dir, "gen-synthetic", {**cfg, "synthetic": sconfig.to_dict()})
    print(f"wrote dataset with {dataset.n_items} items to {args.out_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    defaults = {
        "seed": 0,
        "lambda1": 0.001,
        "lambda2": 0.05,
        "lambda3": 0.001,
        "lambda4": 0.0001,
        "epochs": 200,
        "batch_size": 64,
        "lr": 0.0001,
        "aligned_dim": 32,
        "shared_dim": 32,
        "aligned_hidden": 32,
    }
    cfg = _resolve(args, defaults)
    dataset = _load_dataset(args.data_dir)
    mconfig = model.ModelConfig(
        views=list(dataset.views),
        aligned_dim=cfg["aligned_dim"],
        shared_dim=cfg["shared_dim"],
        aligned_hidden=cfg["aligned_hidden"],
        loss_weights=model.LossWeights(
            lambda1=cfg["lambda1"],
            lambda2=cfg["lambda2"],
            lambda3=cfg["lambda3"],
            lambda4=cfg["lambda4"],
        ),
        learning_rate=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
    )
    result = model.train(dataset, mconfig)
    model.save_train_result(result, args.out_dir)
    _record_run(args.out_dir, "train", {**cfg, "model": mconfig.to_dict()})
    final = result.history[-1] if result.history else {}
    print(
        f"trained {cfg['epochs']} epochs; final val total "
        f"{final.get('total', float('nan')):.6f}; checkpoints in {args.out_dir}"
    )
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = _resolve(args, {"seed": 0})
    dataset = _load_dataset(args.data_dir)
    checkpoint = _load_checkpoint(args.checkpoint)
    z_p, z_a = simulator.embed_dataset(dataset, checkpoint)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for view in dataset.view_names:
        dataio.write_view_features(z_p[view], out / f"z_specific_{view}.mvdf")
        dataio.write_view_features(z_a[view], out / f"z_aligned_{view}.mvdf")
    _record_run(args.out_dir, "embed", {**cfg, "checkpoint": str(args.checkpoint)})
    print(f"wrote embeddings for {dataset.n_items} items to {args.out_dir}")
    return EXIT_OK


def _http_post(server: str, route: str, payload: dict) -> dict:
    import httpx

    try:
        response = httpx.post(server.rstrip("/") + route, json=payload, timeout=300.0)
    except httpx.HTTPError as exc:
        raise CliError(EXIT_SERVER, "SERVER", f"request failed: {exc}") from exc
    if response.status_code != 200:
        raise CliError(
            EXIT_SERVER, "SERVER", f"{route} -> {response.status_code}: {response.text}"
        )
    return response.json()


def _maybe_load_remote_session(args) -> None:
    if getattr(args, "data_dir", None) and getattr(args, "checkpoint", None):
        _http_post(
            args.server,
            "/session",
            {"data_dir": str(args.data_dir), "checkpoint": str(args.checkpoint)},
        )


def _local_session(args):
    from .service.app import load_session

    _require_file(args.checkpoint, "checkpoint")
    _require_file(Path(args.data_dir) / "manifest.jsonl", "dataset manifest in")
    return load_session(args.data_dir, args.checkpoint)


def _emit(text: str, args, filename: str, cfg: dict, command: str) -> None:
    if getattr(args, "out_dir", None):
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text, encoding="utf-8")
        _record_run(args.out_dir, command, cfg)
    else:
        sys.stdout.write(text)


def cmd_intent(args) -> int:
    cfg = _resolve(args, {"seed": 0})
    ids = _read_id_list(args.collection)
    if args.server:
        _maybe_load_remote_session(args)
        payload = _http_post(args.server, "/intent", {"item_ids": ids})
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        session = _local_session(args)
        rows = _rows_for_ids(session, ids)
        coll = _collection_from_session(session, rows, ids)
        weights = retrieval.collection_intent(coll, session.index.stats)
        text = json.dumps(weights.to_dict(), indent=2, sort_keys=True) + "\n"
    _emit(text, args, "intent.json", cfg, "intent")
    return EXIT_OK


def _rows_for_ids(session, ids: list[str]) -> np.ndarray:
    missing = [i for i in ids if i not in session.row_of_id]
    if missing:
        raise CliError(
            EXIT_INVALID_INPUT, "INVALID_INPUT", f"unknown item ids: {missing[:5]}"
        )
    return np.asarray([session.row_of_id[i] for i in ids])


def _collection_from_session(session, rows: np.ndarray, ids: list[str]):
    return retrieval.Collection(
        member_ids=list(ids),
        output_reps={n: session.z_p[n][rows] for n in session.dataset.view_names},
        input_reps={n: session.dataset.features[n][rows] for n in session.dataset.view_names},
    )


def cmd_retrieve(args) -> int:
    defaults = {"seed": 0, "mode": "output-output", "k": 100}
    cfg = _resolve(args, defaults)
    ids = _read_id_list(args.collection)
    if args.server:
        _maybe_load_remote_session(args)
        payload = _http_post(
            args.server,
            "/retrieve",
            {"item_ids": ids, "mode": cfg["mode"], "k": cfg["k"]},
        )
        lines = [json.dumps(item, sort_keys=True) for item in payload["results"]]
        text = "\n".join(lines) + ("\n" if lines else "")
    else:
        session = _local_session(args)
        rows = _rows_for_ids(session, ids)
        coll = _collection_from_session(session, rows, ids)
        ranked = retrieval.rank(session.index, coll, mode=cfg["mode"], k=cfg["k"])
        text = ranked.to_jsonl()
    _emit(text, args, "results.jsonl", cfg, "retrieve")
    return EXIT_OK


def _parse_sources(specs: list[str]) -> list[tuple[str, list[str]]]:
    sources = []
    for spec_text in specs:
        if ":" not in spec_text:
            raise CliError(
                EXIT_USAGE, "USAGE", f"--source must be FILE:VIEW[,VIEW...], got {spec_text!r}"
            )
        path, views_text = spec_text.rsplit(":", 1)
        views = [v for v in views_text.split(",") if v]
        sources.append((path, views))
    return sources


def cmd_compose(args) -> int:
    defaults = {"seed": 0, "k": 100}
    cfg = _resolve(args, defaults)
    sources = _parse_sources(args.source)
    if args.server:
        _maybe_load_remote_session(args)
        payload = _http_post(
            args.server,
            "/compose",
            {
                "sources": [
                    {"item_ids": _read_id_list(path), "views": views}
                    for path, views in sources
                ],
                "k": cfg["k"],
            },
        )
        lines = [json.dumps(item, sort_keys=True) for item in payload["results"]]
        text = "\n".join(lines) + ("\n" if lines else "")
    else:
        session = _local_session(args)
        pairs = []
        exclude: set[str] = set()
        for path, views in sources:
            ids = _read_id_list(path)
            rows = _rows_for_ids(session, ids)
            pairs.append((_collection_from_session(session, rows, ids), set(views)))
            exclude.update(ids)
        rep, weights = retrieval.compose(pairs, session.index.view_names)
        ranked = retrieval.rank_composed(
            session.index, rep, weights.alpha, exclude_ids=exclude, k=cfg["k"]
        )
        text = ranked.to_jsonl()
    _emit(text, args, "results.jsonl", cfg, "compose")
    return EXIT_OK


def cmd_eval(args) -> int:
    defaults = {
        "seed": 0,
        "k": 100,
        "collections": 100,
        "size_min": 10,
        "size_max": 30,
        "purity_grid": "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0",
        "lambda2_grid": "0.0,0.05,0.5,5.0",
        "train_seeds": "0",
        "epochs": 120,
        "trials": 50,
        "attribute": "",
    }
    cfg = _resolve(args, defaults)
    dataset = _load_dataset(args.data_dir)
    protocol = simulator.SimProtocol(
        collections_per_config=cfg["collections"],
        size_min=cfg["size_min"],
        size_max=cfg["size_max"],
        k=cfg["k"],
        seed=cfg["seed"],
    )

    if args.kind == "sweep":
        base = model.ModelConfig(
            views=list(dataset.views), epochs=cfg["epochs"], seed=cfg["seed"]
        )
        report = simulator.lambda_sweep(
            dataset,
            base,
            _parse_float_list(cfg["lambda2_grid"]),
            seeds=tuple(_parse_int_list(cfg["train_seeds"])),
        )
    else:
        checkpoint = _load_checkpoint(args.checkpoint)
        index = simulator.build_index(dataset, checkpoint)
        if args.kind == "benchmark":
            report = simulator.run_benchmark(dataset, index, protocol)
        elif args.kind == "purity":
            grid = _parse_float_list(cfg["purity_grid"])
            report = simulator.purity_curve(dataset, index, protocol, grid=grid)
        elif args.kind == "diversity":
            report = simulator.diversity_study(
                dataset, index, protocol, attribute=cfg["attribute"] or None
            )
        elif args.kind == "composition":
            report = simulator.composition_study(
                dataset, index, protocol, trials=cfg["trials"]
            )
        else:  # pragma: no cover - argparse restricts choices
            raise CliError(EXIT_USAGE, "USAGE", f"unknown eval kind {args.kind!r}")

    simulator.write_report(report, args.out_dir, args.kind)
    _record_run(args.out_dir, f"eval:{args.kind}", cfg)
    print(f"wrote {args.kind} report to {args.out_dir}")
    return EXIT_OK


def cmd_featurize_color(args) -> int:
    cfg = _resolve(args, {"seed": 0, "marginal": False})
    if args.image:
        pixels, width, height = dataio.read_ppm(_require_file(args.image, "image"))
    elif args.raw:
        if args.width is None or args.height is None:
            raise CliError(EXIT_USAGE, "USAGE", "--raw needs --width and --height")
        pixels = _require_file(args.raw, "raw RGB file").read_bytes()
        width, height = args.width, args.height
    else:
        raise CliError(EXIT_USAGE, "USAGE", "provide --image or --raw")
    hist = dataio.lab_histogram(pixels, width, height, joint=not cfg["marginal"])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_view_features(hist[None, :], out / "color_features.mvdf")
    _record_run(args.out_dir, "featurize-color", {**cfg, "dim": int(hist.size)})
    print(f"wrote 1x{hist.size} color feature file to {args.out_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app, load_session

    session = None
    if args.data_dir and args.checkpoint:
        session = load_session(args.data_dir, args.checkpoint, args.pool_split)
    app = create_app(session)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def _add_common(p: _Parser, *, out_dir_required: bool) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads (1 keeps every run bit-deterministic)",
    )
    p.add_argument(
        "--out-dir",
        required=out_dir_required,
        default=None,
        help="output directory; the resolved config is recorded there",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="mvintent", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic multi-view dataset")
    _add_common(p, out_dir_required=True)
    p.add_argument("--items", type=int, default=None)
    p.add_argument("--dims", default=None, help="per-view dims, e.g. 64,32,16")
    p.add_argument("--classes", default=None, help="classes per attribute, e.g. 9,7,4")
    p.add_argument("--w-class", type=float, default=None, dest="w_class")
    p.add_argument("--w-shared", type=float, default=None, dest="w_shared")
    p.add_argument("--w-noise", type=float, default=None, dest="w_noise")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train the disentanglement model")
    _add_common(p, out_dir_required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--lambda3", type=float, default=None)
    p.add_argument("--lambda4", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="write view-specific and aligned embeddings")
    _add_common(p, out_dir_required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("intent", help="infer the intent of a collection")
    _add_common(p, out_dir_required=False)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--collection", required=True, help="file with one item id per line")
    p.add_argument("--server", default=None, help="route through a running service")
    p.set_defaults(func=cmd_intent)

    p = sub.add_parser("retrieve", help="rank the corpus against a collection")
    _add_common(p, out_dir_required=False)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--collection", required=True)
    p.add_argument(
        "--mode",
        default=None,
        help="input-uniform | input-output | output-output | single:<view>",
    )
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("compose", help="retrieve for a composition of collections")
    _add_common(p, out_dir_required=False)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument(
        "--source",
        action="append",
        required=True,
        help="FILE:VIEW[,VIEW...]; repeat per source (empty view list allowed)",
    )
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("eval", help="run an experiment and write report files")
    p.add_argument(
        "kind", choices=["benchmark", "purity", "sweep", "diversity", "composition"]
    )
    _add_common(p, out_dir_required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--collections", type=int, default=None)
    p.add_argument("--size-min", type=int, default=None, dest="size_min")
    p.add_argument("--size-max", type=int, default=None, dest="size_max")
    p.add_argument("--purity-grid", default=None, dest="purity_grid")
    p.add_argument("--lambda2-grid", default=None, dest="lambda2_grid")
    p.add_argument("--train-seeds", default=None, dest="train_seeds")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--attribute", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("featurize-color", help="LAB histogram features for an image")
    _add_common(p, out_dir_required=True)
    p.add_argument("--image", default=None, help="binary PPM (P6) image")
    p.add_argument("--raw", default=None, help="raw RGB8 buffer file")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--marginal", action="store_true", default=None,
                   help="concatenated per-channel marginals instead of the joint histogram")
    p.set_defaults(func=cmd_featurize_color)

    p = sub.add_parser("serve", help="start the retrieval service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--pool-split", default="test", dest="pool_split")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage or help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ERROR {exc.name} {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"ERROR MISSING_FILE {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (FeatureFileError, CheckpointError, ManifestError, DimensionMismatchError) as exc:
        print(f"ERROR BAD_FORMAT {exc}", file=sys.stderr)
        return EXIT_BAD_FORMAT
    except (MVIntentError, ValueError, KeyError) as exc:
        print(f"ERROR INVALID_INPUT {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except Exception as exc:  # noqa: BLE001 - final safety net for exit codes
        print(f"ERROR UNEXPECTED {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    raise SystemExit(main())
