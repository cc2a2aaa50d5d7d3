"""File formats and featurization.

Three on-disk artifacts live here:

* view feature files: magic ``MVDF`` + version 0x01, u32-LE rows, u32-LE
  cols, then rows*cols float32-LE values in row-major order;
* dataset manifests: JSON lines, one record per item with
  ``{"id", "row", "labels", "split"}``;
* model checkpoints: magic ``MVDC`` + version byte, u64-LE header length,
  a JSON header (config, history, tensor directory with byte offsets), then
  the tensors concatenated as float64-LE in directory order.

Plus the LAB color featurizer that turns raw RGB pixel buffers into joint
L/a/b histograms.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics
from .errors import (
    BadMagicError,
    CheckpointError,
    CorruptCheckpointError,
    DimensionMismatchError,
    DimensionOverflowError,
    EmptyInputError,
    ManifestError,
    TruncatedFileError,
    VersionMismatchError,
)

FEATURE_MAGIC = b"MVDF"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"MVDC"
CHECKPOINT_VERSION = 1

# Hard cap on rows*cols of a feature file; anything above this is treated as
# a corrupted header rather than an allocation request.
_MAX_CELLS = 1 << 31

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ViewSpec:
    """One representation axis: its name, input width and similarity kinds.

    ``sim_kind_input`` is how raw (out-of-the-box) features of this view are
    compared; learned output representations are always compared with dot
    products, hence ``sim_kind_output`` defaults to dot.
    """

    name: str
    input_dim: int
    sim_kind_input: str = numerics.DOT
    sim_kind_output: str = numerics.DOT

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError(f"view {self.name!r}: input_dim must be >= 1")
        for kind in (self.sim_kind_input, self.sim_kind_output):
            if kind not in numerics.SIMILARITY_KINDS:
                raise ValueError(f"view {self.name!r}: unknown similarity kind {kind!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_dim": self.input_dim,
            "sim_kind_input": self.sim_kind_input,
            "sim_kind_output": self.sim_kind_output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViewSpec":
        return cls(
            name=d["name"],
            input_dim=int(d["input_dim"]),
            sim_kind_input=d.get("sim_kind_input", numerics.DOT),
            sim_kind_output=d.get("sim_kind_output", numerics.DOT),
        )


@dataclass
class MultiViewDataset:
    """Row-aligned per-view feature matrices plus labels and split tags.

    After ingestion every feature row is unit norm; rows that could not be
    normalized are listed in ``degenerate_items``.
    """

    views: list[ViewSpec]
    features: dict[str, np.ndarray]
    item_ids: list[str]
    labels: list[dict[str, str]]
    splits: list[str]
    degenerate_items: list[str] = field(default_factory=list)

    def __post_init__(self):
        names = [v.name for v in self.views]
        if len(set(names)) != len(names):
            raise ValueError("view names must be unique")
        n = len(self.item_ids)
        if len(self.labels) != n or len(self.splits) != n:
            raise DimensionMismatchError("labels/splits not aligned with item_ids")
        for v in self.views:
            feats = self.features[v.name]
            if feats.shape != (n, v.input_dim):
                raise DimensionMismatchError(
                    f"view {v.name!r}: features shape {feats.shape}, "
                    f"expected ({n}, {v.input_dim})"
                )
        for s in self.splits:
            if s not in SPLITS:
                raise ValueError(f"unknown split tag {s!r}")

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def view_names(self) -> list[str]:
        return [v.name for v in self.views]

    def view(self, name: str) -> ViewSpec:
        for v in self.views:
            if v.name == name:
                return v
        raise KeyError(name)

    def split_indices(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return np.flatnonzero(np.asarray(self.splits) == split)

    def class_indices(self, attribute: str, cls: str, split: str | None = None) -> np.ndarray:
        rows = [
            i
            for i, lab in enumerate(self.labels)
            if lab.get(attribute) == cls and (split is None or self.splits[i] == split)
        ]
        return np.asarray(rows, dtype=np.int64)

    def attribute_classes(self, attribute: str) -> list[str]:
        seen: dict[str, None] = {}
        for lab in self.labels:
            if attribute in lab:
                seen.setdefault(lab[attribute], None)
        return sorted(seen)

    def features_for(self, rows: np.ndarray) -> dict[str, np.ndarray]:
        return {name: self.features[name][rows] for name in self.view_names}


# ---------------------------------------------------------------------------
# View feature files
# ---------------------------------------------------------------------------

def write_view_features(matrix, path) -> None:
    """Write a feature matrix in the MVDF binary format (float32 payload)."""
    m = numerics.as_matrix(matrix)
    rows, cols = m.shape
    payload = m.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(bytes([FEATURE_VERSION]))
        fh.write(struct.pack("<II", rows, cols))
        fh.write(payload)


def read_view_features(path) -> tuple[np.ndarray, dict]:
    """Read an MVDF file; returns (float64 matrix, header metadata).

    Rows are returned exactly as stored, NOT normalized; normalization is an
    explicit ingestion step so files can round-trip bit-exactly.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != FEATURE_MAGIC:
        raise BadMagicError(f"{path}: not a MVDF feature file")
    if len(raw) < 13:
        raise TruncatedFileError(f"{path}: header truncated")
    version = raw[4]
    if version != FEATURE_VERSION:
        raise VersionMismatchError(f"{path}: unsupported feature-file version {version}")
    rows, cols = struct.unpack("<II", raw[5:13])
    if rows * cols > _MAX_CELLS:
        raise DimensionOverflowError(f"{path}: {rows}x{cols} exceeds the size cap")
    expected = 13 + 4 * rows * cols
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: payload holds {(len(raw) - 13) // 4} floats, expected {rows * cols}"
        )
    data = np.frombuffer(raw[13:expected], dtype="<f4").astype(np.float64)
    matrix = data.reshape(rows, cols)
    return matrix, {"rows": rows, "cols": cols, "version": version}


# ---------------------------------------------------------------------------
# Manifest (JSON lines) and dataset directories
# ---------------------------------------------------------------------------

def write_manifest(dataset: MultiViewDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row, item_id in enumerate(dataset.item_ids):
            rec = {
                "id": item_id,
                "row": row,
                "labels": dataset.labels[row],
                "split": dataset.splits[row],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "row", "labels", "split"):
                if key not in rec:
                    raise ManifestError(f"{path}:{lineno}: missing field {key!r}")
            if rec["split"] not in SPLITS:
                raise ManifestError(f"{path}:{lineno}: unknown split {rec['split']!r}")
            records.append(rec)
    records.sort(key=lambda r: r["row"])
    for i, rec in enumerate(records):
        if rec["row"] != i:
            raise ManifestError(f"{path}: row indices not contiguous at {rec['row']}")
    return records


def save_dataset(dataset: MultiViewDataset, directory) -> None:
    """Write a dataset directory: views.json + one MVDF per view + manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "views.json", "w", encoding="utf-8") as fh:
        json.dump([v.to_dict() for v in dataset.views], fh, indent=2)
        fh.write("\n")
    for v in dataset.views:
        write_view_features(dataset.features[v.name], d / f"features_{v.name}.mvdf")
    write_manifest(dataset, d / "manifest.jsonl")


def load_dataset(directory, normalize: bool = True) -> MultiViewDataset:
    """Load a dataset directory; rows are unit-normalized during ingestion."""
    d = Path(directory)
    with open(d / "views.json", "r", encoding="utf-8") as fh:
        views = [ViewSpec.from_dict(item) for item in json.load(fh)]
    records = read_manifest(d / "manifest.jsonl")
    item_ids = [r["id"] for r in records]
    labels = [dict(r["labels"]) for r in records]
    splits = [r["split"] for r in records]
    features: dict[str, np.ndarray] = {}
    degenerate: set[int] = set()
    for v in views:
        matrix, _ = read_view_features(d / f"features_{v.name}.mvdf")
        if normalize:
            matrix, bad_rows = numerics.row_normalize(matrix)
            degenerate.update(bad_rows)
        features[v.name] = matrix
    return MultiViewDataset(
        views=views,
        features=features,
        item_ids=item_ids,
        labels=labels,
        splits=splits,
        degenerate_items=[item_ids[i] for i in sorted(degenerate)],
    )


# ---------------------------------------------------------------------------
# LAB color histograms
# ---------------------------------------------------------------------------

# sRGB (D65) linear RGB -> XYZ.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_POINT = np.array([0.95047, 1.0, 1.08883])

L_BINS = 10          # L in [0, 100], width 10
AB_BINS = 26         # a, b in [-128, 128), width 10, edge bins absorb the rest
JOINT_DIM = L_BINS * AB_BINS * AB_BINS
MARGINAL_DIM = L_BINS + 2 * AB_BINS


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert (n, 3) sRGB values in [0, 1] to CIELAB (D65 reference white)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T / _WHITE_POINT
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[:, 0] = 116.0 * f[:, 1] - 16.0
    lab[:, 1] = 500.0 * (f[:, 0] - f[:, 1])
    lab[:, 2] = 200.0 * (f[:, 1] - f[:, 2])
    return lab


def lab_histogram(pixels, width: int, height: int, joint: bool = True) -> np.ndarray:
    """Histogram of pixel fractions over LAB bins of width (10, 10, 10).

    ``pixels`` is an RGB8 buffer of length 3*width*height. The default is the
    joint 10x26x26 histogram (6760 entries, flattened with L varying slowest);
    ``joint=False`` concatenates the three per-channel marginals instead and
    rescales so the output still sums to 1.
    """
    n_pixels = width * height
    if n_pixels <= 0:
        raise EmptyInputError("image has no pixels")
    buf = np.frombuffer(bytes(pixels), dtype=np.uint8)
    if buf.size != 3 * n_pixels:
        raise DimensionMismatchError(
            f"buffer holds {buf.size} bytes, expected {3 * n_pixels}"
        )
    rgb = buf.reshape(n_pixels, 3).astype(np.float64) / 255.0
    lab = srgb_to_lab(rgb)
    l_bin = np.clip((lab[:, 0] / 10.0).astype(np.int64), 0, L_BINS - 1)
    a_bin = np.clip(((lab[:, 1] + 128.0) / 10.0).astype(np.int64), 0, AB_BINS - 1)
    b_bin = np.clip(((lab[:, 2] + 128.0) / 10.0).astype(np.int64), 0, AB_BINS - 1)
    if joint:
        flat = (l_bin * AB_BINS + a_bin) * AB_BINS + b_bin
        counts = np.bincount(flat, minlength=JOINT_DIM).astype(np.float64)
        return counts / n_pixels
    parts = [
        np.bincount(l_bin, minlength=L_BINS),
        np.bincount(a_bin, minlength=AB_BINS),
        np.bincount(b_bin, minlength=AB_BINS),
    ]
    hist = np.concatenate(parts).astype(np.float64)
    return hist / (3.0 * n_pixels)


def read_ppm(path) -> tuple[bytes, int, int]:
    """Read a binary (P6) PPM with maxval 255; returns (rgb bytes, w, h)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        raise BadMagicError(f"{path}: not a binary PPM (P6) file")
    # Header tokens may be separated by arbitrary whitespace and comments.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFileError(f"{path}: PPM header truncated")
        tokens.append(int(raw[start:pos]))
    width, height, maxval = tokens
    if maxval != 255:
        raise DimensionOverflowError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    pixels = raw[pos : pos + 3 * width * height]
    if len(pixels) < 3 * width * height:
        raise TruncatedFileError(f"{path}: PPM pixel data truncated")
    return pixels, width, height


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(checkpoint, path) -> None:
    """Serialize a model.Checkpoint; the round trip is bit-exact."""
    tensors: list[tuple[str, np.ndarray]] = []
    for name in sorted(checkpoint.params):
        tensors.append((f"param.{name}", checkpoint.params[name]))
    for name in sorted(checkpoint.optimizer_state.m):
        tensors.append((f"adam.m.{name}", checkpoint.optimizer_state.m[name]))
    for name in sorted(checkpoint.optimizer_state.v):
        tensors.append((f"adam.v.{name}", checkpoint.optimizer_state.v[name]))

    directory = []
    offset = 0
    blobs = []
    for name, arr in tensors:
        a = np.ascontiguousarray(arr, dtype=np.float64)
        blob = a.astype("<f8").tobytes(order="C")
        directory.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)

    header = {
        "kind": "mvintent-checkpoint",
        "config": checkpoint.model_config.to_dict(),
        "adam_step": checkpoint.optimizer_state.step,
        "rng_seed": checkpoint.rng_seed,
        "best_epoch": checkpoint.best_epoch,
        "history": checkpoint.training_history,
        "tensors": directory,
        "payload_bytes": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Load a checkpoint written by :func:`save_checkpoint`."""
    from .model import AdamState, Checkpoint, ModelConfig  # avoid import cycle

    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file")
    if len(raw) < 13:
        raise TruncatedFileError(f"{path}: header truncated")
    version = raw[4]
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", raw[5:13])
    header_end = 13 + header_len
    if len(raw) < header_end:
        raise TruncatedFileError(f"{path}: header truncated")
    try:
        header = json.loads(raw[13:header_end].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: header is not valid JSON") from exc
    if header.get("kind") != "mvintent-checkpoint":
        raise CorruptCheckpointError(f"{path}: unexpected header kind")

    payload = raw[header_end:]
    if len(payload) != header["payload_bytes"]:
        raise CorruptCheckpointError(
            f"{path}: payload holds {len(payload)} bytes, "
            f"header declares {header['payload_bytes']}"
        )

    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 8 * count
        if end > len(payload):
            raise CorruptCheckpointError(f"{path}: tensor {entry['name']} out of bounds")
        arr = np.frombuffer(payload[start:end], dtype="<f8").astype(np.float64)
        arrays[entry["name"]] = arr.reshape(shape)

    params = {}
    adam_m = {}
    adam_v = {}
    for name, arr in arrays.items():
        if name.startswith("param."):
            params[name[len("param.") :]] = arr
        elif name.startswith("adam.m."):
            adam_m[name[len("adam.m.") :]] = arr
        elif name.startswith("adam.v."):
            adam_v[name[len("adam.v.") :]] = arr
        else:
            raise CorruptCheckpointError(f"{path}: unknown tensor {name!r}")
    if set(params) != set(adam_m) or set(params) != set(adam_v):
        raise CorruptCheckpointError(f"{path}: tensor directory is inconsistent")

    try:
        config = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"{path}: bad config block: {exc}") from exc
    state = AdamState(m=adam_m, v=adam_v, step=int(header["adam_step"]))
    return Checkpoint(
        model_config=config,
        params=params,
        optimizer_state=state,
        training_history=list(header["history"]),
        rng_seed=int(header["rng_seed"]),
        best_epoch=header.get("best_epoch"),
    )


# Raised name parity for callers that catch the checkpoint family.
__all__ = [
    "ViewSpec",
    "MultiViewDataset",
    "write_view_features",
    "read_view_features",
    "write_manifest",
    "read_manifest",
    "save_dataset",
    "load_dataset",
    "srgb_to_lab",
    "lab_histogram",
    "read_ppm",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]
