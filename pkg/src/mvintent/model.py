"""Disentanglement network: forward pass, four-term loss, exact gradients.

Per view ``m`` the model computes, from unit-norm input features ``x_m``:

* view-specific   ``z_p[m] = normalize(F_spec_m(x_m))``
* shared code     ``u = F_shared(concat of all x_m)``
* view-aligned    ``z_a[m] = normalize(F_ali_m(u))``
* reconstruction  ``x_bar[m] = F_rec_m(concat(z_p[m], z_a[m]))`` (not normalized)

``F_spec_m``, ``F_ali_m`` and ``F_rec_m`` are two-layer feed-forward nets with
a ReLU between the layers; ``F_shared`` is a single affine layer. The training
objective combines four terms:

* ``ali``: (1/B) * sum over view pairs of (B - trace(Za_m @ Za_m'^T)), pulling
  aligned representations of the same item together across views;
* ``spc``: sum over view pairs of ||Zp_m^T @ Zp_m'||_F^2 / (d_m * d_m'), an
  orthogonality penalty on the cross-correlation of view-specific codes;
* ``inf``: (1/B) * sum over views of (B - trace(X_m @ Zp_m^T)), keeping each
  view-specific code close to its own input;
* ``rec``: sum over views of ||Xbar_m - X_m||_F^2 / (B * d_m), plain MSE.

Everything is float64 numpy; gradients are derived by hand and verified
against central finite differences in the test suite. Training is
bit-deterministic given (seed, config, dataset).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dataio import ViewSpec, save_checkpoint
from .errors import DimensionMismatchError, EmptyInputError
from .numerics import row_normalize

NORM_EPS = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Multipliers for the four loss terms (defaults follow the training recipe)."""

    lambda1: float = 0.001   # alignment
    lambda2: float = 0.05    # orthogonalization
    lambda3: float = 0.001   # information transfer
    lambda4: float = 0.0001  # reconstruction

    def __post_init__(self):
        vals = (self.lambda1, self.lambda2, self.lambda3, self.lambda4)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be >= 0")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "lambda4": self.lambda4,
        }


@dataclass
class ModelConfig:
    views: list[ViewSpec]
    aligned_dim: int = 32
    shared_dim: int = 32
    aligned_hidden: int = 32
    specific_hidden: dict[str, int] | None = None
    recon_hidden: dict[str, int] | None = None
    loss_weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 0.0001
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.views:
            raise ValueError("config needs at least one view")
        # Hidden widths default to max(input_dim, 32); the specific pathway's
        # OUTPUT width is pinned to input_dim (the information-transfer trace
        # requires matching shapes) and is deliberately not configurable.
        if self.specific_hidden is None:
            self.specific_hidden = {v.name: max(v.input_dim, 32) for v in self.views}
        if self.recon_hidden is None:
            self.recon_hidden = {v.name: max(v.input_dim, 32) for v in self.views}
        for dim in (self.aligned_dim, self.shared_dim, self.aligned_hidden):
            if dim < 1:
                raise ValueError("dimensions must be >= 1")
        for v in self.views:
            if self.specific_hidden[v.name] < 1 or self.recon_hidden[v.name] < 1:
                raise ValueError("hidden widths must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def view_names(self) -> list[str]:
        return [v.name for v in self.views]

    def view_dim(self, name: str) -> int:
        for v in self.views:
            if v.name == name:
                return v.input_dim
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "views": [v.to_dict() for v in self.views],
            "aligned_dim": self.aligned_dim,
            "shared_dim": self.shared_dim,
            "aligned_hidden": self.aligned_hidden,
            "specific_hidden": dict(self.specific_hidden),
            "recon_hidden": dict(self.recon_hidden),
            "loss_weights": self.loss_weights.to_dict(),
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            views=[ViewSpec.from_dict(v) for v in d["views"]],
            aligned_dim=int(d["aligned_dim"]),
            shared_dim=int(d["shared_dim"]),
            aligned_hidden=int(d["aligned_hidden"]),
            specific_hidden={k: int(v) for k, v in d["specific_hidden"].items()},
            recon_hidden={k: int(v) for k, v in d["recon_hidden"].items()},
            loss_weights=LossWeights(**d["loss_weights"]),
            learning_rate=float(d["learning_rate"]),
            batch_size=int(d["batch_size"]),
            epochs=int(d["epochs"]),
            seed=int(d["seed"]),
        )


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    optimizer_state: AdamState
    training_history: list[dict]
    rng_seed: int
    best_epoch: int | None = None


@dataclass
class LossBreakdown:
    ali: float
    spc: float
    inf: float
    rec: float
    total: float

    def to_dict(self) -> dict:
        return {
            "ali": self.ali,
            "spc": self.spc,
            "inf": self.inf,
            "rec": self.rec,
            "total": self.total,
        }


@dataclass
class ForwardOutputs:
    z_p: dict[str, np.ndarray]
    z_a: dict[str, np.ndarray]
    x_bar: dict[str, np.ndarray]
    u: np.ndarray
    degenerate_specific: dict[str, list[int]]
    degenerate_aligned: dict[str, list[int]]
    caches: dict | None = None


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, drawn in a fixed order."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    concat_dim = sum(v.input_dim for v in config.views)
    params: dict[str, np.ndarray] = {}
    params["shared.w1"] = _glorot(rng, concat_dim, config.shared_dim)
    params["shared.b1"] = np.zeros(config.shared_dim)
    for v in config.views:
        d = v.input_dim
        hp = config.specific_hidden[v.name]
        hr = config.recon_hidden[v.name]
        ha = config.aligned_hidden
        params[f"spec.{v.name}.w1"] = _glorot(rng, d, hp)
        params[f"spec.{v.name}.b1"] = np.zeros(hp)
        params[f"spec.{v.name}.w2"] = _glorot(rng, hp, d)
        params[f"spec.{v.name}.b2"] = np.zeros(d)
        params[f"ali.{v.name}.w1"] = _glorot(rng, config.shared_dim, ha)
        params[f"ali.{v.name}.b1"] = np.zeros(ha)
        params[f"ali.{v.name}.w2"] = _glorot(rng, ha, config.aligned_dim)
        params[f"ali.{v.name}.b2"] = np.zeros(config.aligned_dim)
        params[f"rec.{v.name}.w1"] = _glorot(rng, d + config.aligned_dim, hr)
        params[f"rec.{v.name}.b1"] = np.zeros(hr)
        params[f"rec.{v.name}.w2"] = _glorot(rng, hr, d)
        params[f"rec.{v.name}.b2"] = np.zeros(d)
    return params


def _check_batch(config: ModelConfig, batch: dict[str, np.ndarray]) -> int:
    rows = None
    for v in config.views:
        if v.name not in batch:
            raise DimensionMismatchError(f"batch is missing view {v.name!r}")
        x = batch[v.name]
        if x.ndim != 2 or x.shape[1] != v.input_dim:
            raise DimensionMismatchError(
                f"view {v.name!r}: batch shape {x.shape}, expected (*, {v.input_dim})"
            )
        if rows is None:
            rows = x.shape[0]
        elif x.shape[0] != rows:
            raise DimensionMismatchError("views disagree on batch size")
    if rows == 0:
        raise EmptyInputError("empty batch")
    return rows


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def forward(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    batch: dict[str, np.ndarray],
    with_caches: bool = False,
) -> ForwardOutputs:
    _check_batch(config, batch)
    xs = {v.name: np.asarray(batch[v.name], dtype=np.float64) for v in config.views}
    concat_x = np.concatenate([xs[v.name] for v in config.views], axis=1)
    u = concat_x @ params["shared.w1"] + params["shared.b1"]

    z_p: dict[str, np.ndarray] = {}
    z_a: dict[str, np.ndarray] = {}
    x_bar: dict[str, np.ndarray] = {}
    deg_p: dict[str, list[int]] = {}
    deg_a: dict[str, list[int]] = {}
    caches: dict = {"concat_x": concat_x, "u": u} if with_caches else {}

    for v in config.views:
        name = v.name
        hp_pre = xs[name] @ params[f"spec.{name}.w1"] + params[f"spec.{name}.b1"]
        hp = np.maximum(hp_pre, 0.0)
        vp = hp @ params[f"spec.{name}.w2"] + params[f"spec.{name}.b2"]
        zp, bad_p = row_normalize(vp, NORM_EPS)

        ha_pre = u @ params[f"ali.{name}.w1"] + params[f"ali.{name}.b1"]
        ha = np.maximum(ha_pre, 0.0)
        va = ha @ params[f"ali.{name}.w2"] + params[f"ali.{name}.b2"]
        za, bad_a = row_normalize(va, NORM_EPS)

        cr = np.concatenate([zp, za], axis=1)
        hr_pre = cr @ params[f"rec.{name}.w1"] + params[f"rec.{name}.b1"]
        hr = np.maximum(hr_pre, 0.0)
        xb = hr @ params[f"rec.{name}.w2"] + params[f"rec.{name}.b2"]

        z_p[name] = zp
        z_a[name] = za
        x_bar[name] = xb
        deg_p[name] = bad_p
        deg_a[name] = bad_a
        if with_caches:
            caches[name] = {
                "x": xs[name],
                "hp_pre": hp_pre,
                "hp": hp,
                "vp": vp,
                "zp": zp,
                "ha_pre": ha_pre,
                "ha": ha,
                "va": va,
                "za": za,
                "cr": cr,
                "hr_pre": hr_pre,
                "hr": hr,
            }

    return ForwardOutputs(
        z_p=z_p,
        z_a=z_a,
        x_bar=x_bar,
        u=u,
        degenerate_specific=deg_p,
        degenerate_aligned=deg_a,
        caches=caches if with_caches else None,
    )


def embed(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    features: dict[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Inference-mode forward; returns (view-specific, view-aligned) codes."""
    out = forward(config, params, features)
    return out.z_p, out.z_a


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _pairs(names: list[str]) -> list[tuple[str, str]]:
    return list(combinations(names, 2))


def loss_alignment(z_a: dict[str, np.ndarray]) -> float:
    names = list(z_a)
    batch = {m.shape for m in z_a.values()}
    if len(batch) > 1:
        raise DimensionMismatchError("aligned representations disagree on shape")
    b = next(iter(z_a.values())).shape[0]
    total = 0.0
    for m, m2 in _pairs(names):
        total += b - float(np.einsum("ij,ij->", z_a[m], z_a[m2]))
    return total / b


def loss_specific(z_p: dict[str, np.ndarray]) -> float:
    names = list(z_p)
    rows = {m.shape[0] for m in z_p.values()}
    if len(rows) > 1:
        raise DimensionMismatchError("view-specific representations disagree on rows")
    total = 0.0
    for m, m2 in _pairs(names):
        cross = z_p[m].T @ z_p[m2]
        total += float((cross * cross).sum()) / (z_p[m].shape[1] * z_p[m2].shape[1])
    return total


def loss_info(x: dict[str, np.ndarray], z_p: dict[str, np.ndarray]) -> float:
    total = 0.0
    b = None
    for name, xm in x.items():
        zm = z_p[name]
        if xm.shape != zm.shape:
            raise DimensionMismatchError(
                f"view {name!r}: x {xm.shape} vs z_p {zm.shape}"
            )
        b = xm.shape[0]
        total += b - float(np.einsum("ij,ij->", xm, zm))
    return total / b


def loss_recon(x_bar: dict[str, np.ndarray], x: dict[str, np.ndarray]) -> float:
    total = 0.0
    for name, xm in x.items():
        xb = x_bar[name]
        if xb.shape != xm.shape:
            raise DimensionMismatchError(
                f"view {name!r}: x_bar {xb.shape} vs x {xm.shape}"
            )
        diff = xb - xm
        total += float((diff * diff).sum()) / (xm.shape[0] * xm.shape[1])
    return total


def total_loss(
    x: dict[str, np.ndarray],
    outputs: ForwardOutputs,
    weights: LossWeights,
) -> LossBreakdown:
    ali = loss_alignment(outputs.z_a)
    spc = loss_specific(outputs.z_p)
    inf = loss_info(x, outputs.z_p)
    rec = loss_recon(outputs.x_bar, x)
    total = (
        weights.lambda1 * ali
        + weights.lambda2 * spc
        + weights.lambda3 * inf
        + weights.lambda4 * rec
    )
    return LossBreakdown(ali=ali, spc=spc, inf=inf, rec=rec, total=total)


def batch_loss(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    batch: dict[str, np.ndarray],
) -> LossBreakdown:
    xs = {v.name: np.asarray(batch[v.name], dtype=np.float64) for v in config.views}
    return total_loss(xs, forward(config, params, batch), config.loss_weights)


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

def _norm_backward(dz: np.ndarray, v: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Gradient through row-wise z = v / ||v||; zero through degenerate rows."""
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    ok = norms > NORM_EPS
    safe = np.where(ok, norms, 1.0)
    dv = (dz - (dz * z).sum(axis=1, keepdims=True) * z) / safe
    return np.where(ok, dv, 0.0)


def _affine_relu_affine_backward(
    dout: np.ndarray,
    x: np.ndarray,
    h_pre: np.ndarray,
    h: np.ndarray,
    w2: np.ndarray,
    w1: np.ndarray,
    grads: dict[str, np.ndarray],
    prefix: str,
) -> np.ndarray:
    """Backprop through x @ w1 + b1 -> ReLU -> h @ w2 + b2; returns d(x)."""
    grads[f"{prefix}.w2"] += h.T @ dout
    grads[f"{prefix}.b2"] += dout.sum(axis=0)
    dh = (dout @ w2.T) * (h_pre > 0.0)
    grads[f"{prefix}.w1"] += x.T @ dh
    grads[f"{prefix}.b1"] += dh.sum(axis=0)
    return dh @ w1.T


def backward(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    batch: dict[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], LossBreakdown, ForwardOutputs]:
    """Exact gradients of the weighted total loss w.r.t. every parameter."""
    b = _check_batch(config, batch)
    out = forward(config, params, batch, with_caches=True)
    caches = out.caches
    w = config.loss_weights
    names = config.view_names
    xs = {name: caches[name]["x"] for name in names}
    breakdown = total_loss(xs, out, w)

    grads = {k: np.zeros_like(p) for k, p in params.items()}

    # Upstream gradients at the normalized representations.
    dz_p: dict[str, np.ndarray] = {}
    dz_a: dict[str, np.ndarray] = {}
    for name in names:
        dzp = -(w.lambda3 / b) * xs[name]
        d_m = out.z_p[name].shape[1]
        for other in names:
            if other == name:
                continue
            zo = out.z_p[other]
            scale = 2.0 * w.lambda2 / (d_m * zo.shape[1])
            dzp = dzp + scale * (zo @ (zo.T @ out.z_p[name]))
        dz_p[name] = dzp

        dza = np.zeros_like(out.z_a[name])
        for other in names:
            if other == name:
                continue
            dza -= (w.lambda1 / b) * out.z_a[other]
        dz_a[name] = dza

    # Reconstruction pathway feeds additional gradient into z_p and z_a.
    du = np.zeros_like(out.u)
    for v in config.views:
        name = v.name
        c = caches[name]
        d_m = v.input_dim
        dxb = (2.0 * w.lambda4 / (b * d_m)) * (out.x_bar[name] - c["x"])
        dcr = _affine_relu_affine_backward(
            dxb, c["cr"], c["hr_pre"], c["hr"],
            params[f"rec.{name}.w2"], params[f"rec.{name}.w1"],
            grads, f"rec.{name}",
        )
        dz_p[name] = dz_p[name] + dcr[:, :d_m]
        dz_a[name] = dz_a[name] + dcr[:, d_m:]

        dvp = _norm_backward(dz_p[name], c["vp"], c["zp"])
        _affine_relu_affine_backward(
            dvp, c["x"], c["hp_pre"], c["hp"],
            params[f"spec.{name}.w2"], params[f"spec.{name}.w1"],
            grads, f"spec.{name}",
        )

        dva = _norm_backward(dz_a[name], c["va"], c["za"])
        du += _affine_relu_affine_backward(
            dva, caches["u"], c["ha_pre"], c["ha"],
            params[f"ali.{name}.w2"], params[f"ali.{name}.w1"],
            grads, f"ali.{name}",
        )

    grads["shared.w1"] += caches["concat_x"].T @ du
    grads["shared.b1"] += du.sum(axis=0)
    return grads, breakdown, out


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update with bias correction; returns fresh params and state."""
    t = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for k, p in params.items():
        g = grads[k]
        m = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        new_params[k] = p - update
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint: Checkpoint        # final epoch, resumable
    best_checkpoint: Checkpoint   # lowest validation total
    history: list[dict]


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    return LossBreakdown(
        ali=float(np.mean([p.ali for p in parts])),
        spc=float(np.mean([p.spc for p in parts])),
        inf=float(np.mean([p.inf for p in parts])),
        rec=float(np.mean([p.rec for p in parts])),
        total=float(np.mean([p.total for p in parts])),
    )


def evaluate_split(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    features: dict[str, np.ndarray],
) -> LossBreakdown:
    """Mean per-batch loss over a split, batched in fixed order."""
    n = next(iter(features.values())).shape[0]
    parts = []
    for start in range(0, n, config.batch_size):
        batch = {k: m[start : start + config.batch_size] for k, m in features.items()}
        parts.append(batch_loss(config, params, batch))
    return _mean_breakdown(parts)


def train(
    dataset,
    config: ModelConfig,
    resume: Checkpoint | None = None,
    log=None,
) -> TrainResult:
    """Adam training over seeded-shuffled batches of the train split.

    Shuffling for epoch ``e`` is seeded with (config.seed, e), so a run
    resumed from a checkpoint reproduces the uninterrupted run bit-for-bit.
    """
    train_rows = dataset.split_indices("train")
    val_rows = dataset.split_indices("val")
    if train_rows.size == 0:
        raise EmptyInputError("dataset has no train split")
    feats_train = dataset.features_for(train_rows)
    feats_val = dataset.features_for(val_rows) if val_rows.size else None

    if resume is not None:
        params = {k: p.copy() for k, p in resume.params.items()}
        state = AdamState(
            m={k: a.copy() for k, a in resume.optimizer_state.m.items()},
            v={k: a.copy() for k, a in resume.optimizer_state.v.items()},
            step=resume.optimizer_state.step,
        )
        history = list(resume.training_history)
        start_epoch = 1 + max((h["epoch"] for h in history), default=-1)
        best_epoch = resume.best_epoch
    else:
        params = init_params(config)
        state = init_adam(params)
        history = []
        start_epoch = 0
        best_epoch = None

    best_total = np.inf
    best_params = {k: p.copy() for k, p in params.items()}
    best_state = state

    n_train = train_rows.size
    for epoch in range(start_epoch, config.epochs):
        perm = np.random.default_rng([config.seed, epoch]).permutation(n_train)
        parts = []
        for start in range(0, n_train, config.batch_size):
            rows = perm[start : start + config.batch_size]
            batch = {k: m[rows] for k, m in feats_train.items()}
            grads, breakdown, _ = backward(config, params, batch)
            params, state = adam_step(params, grads, state, config.learning_rate)
            parts.append(breakdown)
        train_bd = _mean_breakdown(parts)
        history.append({"epoch": epoch, "split": "train", **train_bd.to_dict()})
        if feats_val is not None:
            val_bd = evaluate_split(config, params, feats_val)
            history.append({"epoch": epoch, "split": "val", **val_bd.to_dict()})
            if val_bd.total < best_total:
                best_total = val_bd.total
                best_epoch = epoch
                best_params = {k: p.copy() for k, p in params.items()}
                best_state = AdamState(
                    m={k: a.copy() for k, a in state.m.items()},
                    v={k: a.copy() for k, a in state.v.items()},
                    step=state.step,
                )
        if log is not None:
            log(epoch, history)

    final = Checkpoint(
        model_config=config,
        params=params,
        optimizer_state=state,
        training_history=history,
        rng_seed=config.seed,
        best_epoch=best_epoch,
    )
    if feats_val is None:
        best = final
    else:
        best = Checkpoint(
            model_config=config,
            params=best_params,
            optimizer_state=best_state,
            training_history=copy.deepcopy(history),
            rng_seed=config.seed,
            best_epoch=best_epoch,
        )
    return TrainResult(checkpoint=final, best_checkpoint=best, history=history)


def save_train_result(result: TrainResult, out_dir) -> None:
    """Write checkpoint.mvdc, checkpoint_best.mvdc and history.jsonl."""
    import json
    from pathlib import Path

    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.checkpoint, d / "checkpoint.mvdc")
    save_checkpoint(result.best_checkpoint, d / "checkpoint_best.mvdc")
    with open(d / "history.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.history:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
