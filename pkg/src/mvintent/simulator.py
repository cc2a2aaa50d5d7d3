"""Synthetic multi-view benchmark: data generation and experiment runners.

The generator produces a dataset with a known ground truth: three views and
three attribute types, where attribute ``i`` is correlated with view ``i``
and nothing else. Each item's raw feature for view ``m`` mixes a per-class
centroid, a projection of an item-wide shared latent, and isotropic noise:

    raw = w_class * centroid[m, class] + w_shared * (g @ P_m) + w_noise * eps

then rows are unit-normalized. The shared latent ``g`` is what the
disentanglement model is supposed to strip out of the view-specific codes.

Runners reproduce the experimental protocol at desk scale: collections of
10..30 items with controllable purity, intent-vs-purity curves, the
orthogonalization-weight sweep, the retrieval benchmark over scoring
variants, the relevance/diversity study and collection composition. Every
runner derives per-simulation generators from (base seed, stream, index), so
reports are bit-reproducible and schedule independent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics, retrieval
from .dataio import MultiViewDataset, ViewSpec
from .errors import InsufficientItemsError
from .model import Checkpoint, LossWeights, ModelConfig, embed, train
from .numerics import DOT, INVERSE_L2, row_normalize
from .retrieval import RetrievalIndex, ViewStats, corpus_stats

DEFAULT_VIEW_NAMES = ("object", "style", "color")
DEFAULT_ATTRIBUTES = ("content", "media", "emotion")

# Seed-stream tags so independent simulations never share a generator.
_STREAM_PURITY = 1
_STREAM_BENCH_ATTR = 2
_STREAM_BENCH_AGG = 3
_STREAM_DIVERSITY = 4
_STREAM_COMPOSE = 5


@dataclass
class SyntheticConfig:
    n_items: int = 5000
    view_dims: tuple[int, ...] = (64, 32, 16)
    view_names: tuple[str, ...] = DEFAULT_VIEW_NAMES
    attributes: tuple[str, ...] = DEFAULT_ATTRIBUTES
    class_counts: tuple[int, ...] = (9, 7, 4)
    w_class: float = 1.0
    w_shared: float = 0.5
    w_noise: float = 0.3
    shared_latent_dim: int = 16
    # Expected norm of the projected shared latent before weighting; 2.0 makes
    # the default-weighted shared component (0.5 * 2) match the weighted class
    # centroid (1.0 * 1) so cross-view overlap and class signal are both
    # visible in pairwise similarities.
    shared_norm: float = 2.0
    split_ratio: tuple[int, int, int] = (6, 3, 1)
    seed: int = 0

    def __post_init__(self):
        if len(self.view_dims) != len(self.view_names):
            raise ValueError("view_dims and view_names disagree")
        if len(self.attributes) != len(self.view_names):
            raise ValueError("one attribute per view is required")
        if any(c < 2 for c in self.class_counts):
            raise ValueError("every attribute needs at least 2 classes")
        if self.w_class <= 0 or self.w_shared < 0 or self.w_noise < 0:
            raise ValueError("weights must be >= 0 with w_class > 0")

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "view_dims": list(self.view_dims),
            "view_names": list(self.view_names),
            "attributes": list(self.attributes),
            "class_counts": list(self.class_counts),
            "w_class": self.w_class,
            "w_shared": self.w_shared,
            "w_noise": self.w_noise,
            "shared_latent_dim": self.shared_latent_dim,
            "shared_norm": self.shared_norm,
            "split_ratio": list(self.split_ratio),
            "seed": self.seed,
        }


@dataclass
class SimProtocol:
    collections_per_config: int = 100
    size_min: int = 10
    size_max: int = 30
    k: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.size_min < 2 or self.size_max < self.size_min:
            raise ValueError("collection size range must satisfy 2 <= min <= max")

    def to_dict(self) -> dict:
        return {
            "collections_per_config": self.collections_per_config,
            "size_min": self.size_min,
            "size_max": self.size_max,
            "k": self.k,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

def class_name(attribute: str, idx: int) -> str:
    return f"{attribute}_{idx:02d}"


def generate_synthetic(config: SyntheticConfig) -> MultiViewDataset:
    """Deterministic synthetic dataset; same seed gives a bit-identical result."""
    rng = np.random.default_rng(config.seed)
    n = config.n_items
    n_views = len(config.view_names)

    class_ids = [
        rng.integers(0, config.class_counts[a], size=n)
        for a in range(len(config.attributes))
    ]
    g = rng.standard_normal((n, config.shared_latent_dim))

    features: dict[str, np.ndarray] = {}
    views: list[ViewSpec] = []
    for m in range(n_views):
        name = config.view_names[m]
        d = config.view_dims[m]
        k_classes = config.class_counts[m]
        centroids, _ = row_normalize(rng.standard_normal((k_classes, d)))
        proj = rng.standard_normal((config.shared_latent_dim, d)) * np.sqrt(
            config.shared_norm**2 / (config.shared_latent_dim * d)
        )
        noise = rng.standard_normal((n, d))
        raw = (
            config.w_class * centroids[class_ids[m]]
            + config.w_shared * (g @ proj)
            + config.w_noise * noise
        )
        normalized, _ = row_normalize(raw)
        features[name] = normalized
        # The first view plays the object role (dot similarity on raw
        # features); the others mimic style/color spaces compared by
        # inverse L2 distance.
        views.append(
            ViewSpec(
                name=name,
                input_dim=d,
                sim_kind_input=DOT if m == 0 else INVERSE_L2,
            )
        )

    labels = [
        {
            attr: class_name(attr, int(class_ids[a][i]))
            for a, attr in enumerate(config.attributes)
        }
        for i in range(n)
    ]

    ratios = config.split_ratio
    n_train = n * ratios[0] // sum(ratios)
    n_val = n * ratios[1] // sum(ratios)
    perm = rng.permutation(n)
    splits = np.empty(n, dtype=object)
    splits[perm[:n_train]] = "train"
    splits[perm[n_train : n_train + n_val]] = "val"
    splits[perm[n_train + n_val :]] = "test"

    width = max(5, len(str(max(n - 1, 1))))
    item_ids = [f"item{i:0{width}d}" for i in range(n)]
    return MultiViewDataset(
        views=views,
        features=features,
        item_ids=item_ids,
        labels=labels,
        splits=list(splits),
    )


def default_model_config(dataset: MultiViewDataset, **overrides) -> ModelConfig:
    return ModelConfig(views=list(dataset.views), **overrides)


# ---------------------------------------------------------------------------
# Collections
# ---------------------------------------------------------------------------

def simulate_collection(
    dataset: MultiViewDataset,
    attribute: str,
    attribute_class: str,
    size: int,
    purity: float,
    rng: np.random.Generator,
    pool_rows: np.ndarray | None = None,
) -> np.ndarray:
    """Sample member rows: round(purity*size) from the target class, the rest
    as a uniform mixture over all classes of the attribute (target included).

    Returns global dataset row indices. Sampling is without replacement.
    """
    if size < 2:
        raise ValueError("collection size must be >= 2")
    if not 0.0 <= purity <= 1.0:
        raise ValueError("purity must lie in [0, 1]")
    classes = dataset.attribute_classes(attribute)
    if attribute_class not in classes:
        raise KeyError(f"unknown class {attribute_class!r} for {attribute!r}")
    if pool_rows is None:
        pool_rows = np.arange(dataset.n_items)
    pool = set(pool_rows.tolist())
    rows_by_class = {
        c: [r for r in dataset.class_indices(attribute, c) if r in pool]
        for c in classes
    }

    n_target = int(np.floor(purity * size + 0.5))
    target_rows = rows_by_class[attribute_class]
    if len(target_rows) < n_target:
        raise InsufficientItemsError(
            f"class {attribute_class!r} has {len(target_rows)} items in the pool, "
            f"need {n_target}"
        )
    chosen = list(rng.choice(target_rows, size=n_target, replace=False))
    used = set(chosen)
    attempts = 0
    while len(chosen) < size:
        cls = classes[int(rng.integers(0, len(classes)))]
        candidates = [r for r in rows_by_class[cls] if r not in used]
        if not candidates:
            attempts += 1
            if attempts > 100 * size:
                raise InsufficientItemsError(
                    f"pool exhausted while filling a size-{size} collection"
                )
            continue
        pick = int(candidates[int(rng.integers(0, len(candidates)))])
        chosen.append(pick)
        used.add(pick)
    return np.asarray(chosen, dtype=np.int64)


# ---------------------------------------------------------------------------
# Index construction
# ---------------------------------------------------------------------------

def embed_dataset(
    dataset: MultiViewDataset, checkpoint: Checkpoint
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    return embed(checkpoint.model_config, checkpoint.params, dataset.features)


def output_stats(
    output_reps: dict[str, np.ndarray],
    sample_pairs: int = 100_000,
    seed: int = 0,
    exact_threshold: int = 2000,
) -> ViewStats:
    n = next(iter(output_reps.values())).shape[0]
    if n <= exact_threshold:
        return corpus_stats(output_reps, seed=seed, exact=True)
    return corpus_stats(output_reps, sample_pairs=sample_pairs, seed=seed)


def build_index(
    dataset: MultiViewDataset,
    checkpoint: Checkpoint,
    pool_split: str = "test",
    stats_pairs: int = 100_000,
    stats_seed: int = 0,
) -> RetrievalIndex:
    """Embed the dataset and assemble the retrieval index over one split.

    Corpus statistics for intent standardization are computed over the WHOLE
    dataset's output codes (the reference distribution of pairwise
    similarities), while only the pool split is ranked.
    """
    z_p, _ = embed_dataset(dataset, checkpoint)
    stats = output_stats(z_p, sample_pairs=stats_pairs, seed=stats_seed)
    pool = dataset.split_indices(pool_split)
    return RetrievalIndex(
        item_ids=[dataset.item_ids[i] for i in pool],
        input_reps={v: dataset.features[v][pool] for v in dataset.view_names},
        output_reps={v: z_p[v][pool] for v in dataset.view_names},
        input_sim_kinds={v.name: v.sim_kind_input for v in dataset.views},
        stats=stats,
    )


def _pool_locator(dataset: MultiViewDataset, pool_split: str) -> dict[int, int]:
    pool = dataset.split_indices(pool_split)
    return {int(g): i for i, g in enumerate(pool)}


def _class_ids_in_pool(
    dataset: MultiViewDataset, index: RetrievalIndex, attribute: str, cls: str,
    pool_split: str,
) -> set[str]:
    rows = dataset.class_indices(attribute, cls, split=pool_split)
    return {dataset.item_ids[int(r)] for r in rows}


# ---------------------------------------------------------------------------
# Experiment runners
# ---------------------------------------------------------------------------

def purity_grid(points: int = 11) -> list[float]:
    return [round(i / (points - 1), 10) for i in range(points)]


def purity_curve(
    dataset: MultiViewDataset,
    index: RetrievalIndex,
    protocol: SimProtocol,
    grid: list[float] | None = None,
    pool_split: str = "test",
) -> dict:
    """Mean intent weights per view as collection purity varies.

    Produces one curve per (attribute, class) and an aggregate per attribute,
    plus the fraction of collections whose top intent lands on the view
    correlated with the attribute (by construction, same position index).
    """
    grid = purity_grid() if grid is None else grid
    locator = _pool_locator(dataset, pool_split)
    pool_rows = dataset.split_indices(pool_split)
    view_names = index.view_names
    attributes = sorted({a for lab in dataset.labels for a in lab})
    # Attribute order follows the generator convention: attribute i <-> view i.
    ordered_attrs = [a for a in DEFAULT_ATTRIBUTES if a in attributes] or attributes
    correlated = {a: view_names[i] for i, a in enumerate(ordered_attrs)}

    curves: dict = {}
    for a_idx, attr in enumerate(ordered_attrs):
        classes = dataset.attribute_classes(attr)
        per_class: dict = {}
        for c_idx, cls in enumerate(classes):
            points = []
            for p_idx, purity in enumerate(grid):
                alphas = []
                top_hits = 0
                for i in range(protocol.collections_per_config):
                    rng = np.random.default_rng(
                        [protocol.seed, _STREAM_PURITY, a_idx, c_idx, p_idx, i]
                    )
                    size = int(rng.integers(protocol.size_min, protocol.size_max + 1))
                    rows = simulate_collection(
                        dataset, attr, cls, size, purity, rng, pool_rows
                    )
                    local = np.asarray([locator[int(r)] for r in rows])
                    coll = index.collection(local)
                    weights = retrieval.collection_intent(coll, index.stats)
                    alphas.append([weights.alpha[v] for v in view_names])
                    top = max(weights.alpha, key=weights.alpha.get)
                    top_hits += top == correlated[attr]
                mean_alpha = np.mean(np.asarray(alphas), axis=0)
                points.append(
                    {
                        "purity": purity,
                        "mean_alpha": {v: float(m) for v, m in zip(view_names, mean_alpha)},
                        "frac_correlated_top": top_hits / len(alphas),
                    }
                )
            per_class[cls] = points
        agg = []
        for p_idx, purity in enumerate(grid):
            stack = np.asarray(
                [
                    [per_class[cls][p_idx]["mean_alpha"][v] for v in view_names]
                    for cls in classes
                ]
            )
            frac = float(
                np.mean([per_class[cls][p_idx]["frac_correlated_top"] for cls in classes])
            )
            agg.append(
                {
                    "purity": purity,
                    "mean_alpha": {
                        v: float(m) for v, m in zip(view_names, stack.mean(axis=0))
                    },
                    "frac_correlated_top": frac,
                }
            )
        curves[attr] = {"classes": per_class, "aggregate": agg}

    return {
        "kind": "purity_curve",
        "grid": grid,
        "view_names": view_names,
        "correlated_view": correlated,
        "protocol": protocol.to_dict(),
        "curves": curves,
    }


def lambda_sweep(
    dataset: MultiViewDataset,
    base_config: ModelConfig,
    lambda2_values: list[float],
    seeds: tuple[int, ...] = (0,),
    hist_bins: int = 50,
    hist_pair_cap: int = 100_000,
) -> dict:
    """Train one model per (lambda2, seed) and report disentanglement metrics.

    Inter/intra Pearson and HSIC plus the final validation reconstruction
    loss are computed on the validation split; pairwise-similarity histograms
    of the output codes use all validation pairs when the split holds at most
    2000 items, otherwise a seeded sample.
    """
    if not lambda2_values:
        raise ValueError("lambda2_values must be nonempty")
    val_rows = dataset.split_indices("val")
    inputs = dataset.features_for(val_rows)
    names = dataset.view_names

    input_level: dict = {}
    sims_in = {}
    for i, m in enumerate(names):
        sims_in[m] = inputs[m] @ inputs[m].T
    for i, m in enumerate(names):
        for m2 in names[i + 1 :]:
            input_level[f"{m}|{m2}"] = {
                "pearson": metrics.interview_pearson(sims_in[m], sims_in[m2]),
                "hsic": metrics.hsic(inputs[m], inputs[m2]),
            }

    def _pair_sims(rep: np.ndarray, seed: int) -> np.ndarray:
        n = rep.shape[0]
        if n <= 2000:
            iu = np.triu_indices(n, k=1)
            return np.einsum("ij,ij->i", rep[iu[0]], rep[iu[1]])
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=hist_pair_cap)
        j = rng.integers(0, n - 1, size=hist_pair_cap)
        j = np.where(j >= i, j + 1, j)
        return np.einsum("ij,ij->i", rep[i], rep[j])

    runs = []
    for lam2 in lambda2_values:
        for seed in seeds:
            weights = LossWeights(
                lambda1=base_config.loss_weights.lambda1,
                lambda2=lam2,
                lambda3=base_config.loss_weights.lambda3,
                lambda4=base_config.loss_weights.lambda4,
            )
            config = replace(base_config, loss_weights=weights, seed=seed)
            result = train(dataset, config)
            ckpt = result.checkpoint
            z_p, _ = embed(config, ckpt.params, inputs)
            report = metrics.disentanglement_report(inputs, z_p)
            val_recs = [
                h["rec"] for h in result.history if h["split"] == "val"
            ]
            hists = {}
            for name in names:
                sims = _pair_sims(z_p[name], seed)
                counts, _ = np.histogram(sims, bins=hist_bins, range=(-1.0, 1.0))
                hists[name] = (counts / max(sims.size, 1)).tolist()
            runs.append(
                {
                    "lambda2": lam2,
                    "seed": seed,
                    "inter": report["inter"],
                    "intra": report["intra"],
                    "final_rec": val_recs[-1] if val_recs else None,
                    "sim_hist": hists,
                }
            )

    by_lambda2: dict = {}
    for lam2 in lambda2_values:
        group = [r for r in runs if r["lambda2"] == lam2]
        pairs = list(group[0]["inter"])
        by_lambda2[str(lam2)] = {
            "inter": {
                pair: {
                    key: float(np.mean([r["inter"][pair][key] for r in group]))
                    for key in ("pearson_output", "hsic_output")
                }
                for pair in pairs
            },
            "intra": {
                v: {
                    key: float(np.mean([r["intra"][v][key] for r in group]))
                    for key in ("pearson", "hsic")
                }
                for v in names
            },
            "final_rec": float(np.mean([r["final_rec"] for r in group])),
        }

    return {
        "kind": "lambda_sweep",
        "lambda2_values": lambda2_values,
        "seeds": list(seeds),
        "epochs": base_config.epochs,
        "input_level": input_level,
        "runs": runs,
        "by_lambda2": by_lambda2,
    }


def default_variants(view_names: list[str]) -> list[str]:
    return [f"single:{v}" for v in view_names] + [
        retrieval.MODE_INPUT_UNIFORM,
        retrieval.MODE_INPUT_OUTPUT,
        retrieval.MODE_OUTPUT_OUTPUT,
    ]


def _feasible_classes(
    dataset: MultiViewDataset, attribute: str, pool_split: str, min_items: int
) -> list[str]:
    return [
        cls
        for cls in dataset.attribute_classes(attribute)
        if dataset.class_indices(attribute, cls, split=pool_split).size >= min_items
    ]


def run_benchmark(
    dataset: MultiViewDataset,
    index: RetrievalIndex,
    protocol: SimProtocol,
    variants: list[str] | None = None,
    pool_split: str = "test",
) -> dict:
    """MAP/MRR@k per scoring variant over pure simulated collections.

    Attribute-wise numbers fix the attribute and draw a random feasible class
    per collection; the aggregate draws the attribute at random too.
    """
    variants = default_variants(index.view_names) if variants is None else variants
    locator = _pool_locator(dataset, pool_split)
    pool_rows = dataset.split_indices(pool_split)
    attributes = [a for a in DEFAULT_ATTRIBUTES if a in dataset.labels[0]] or sorted(
        {a for lab in dataset.labels for a in lab}
    )

    def _run_collection(rng: np.random.Generator, attr: str) -> dict[str, dict[str, float]]:
        size = int(rng.integers(protocol.size_min, protocol.size_max + 1))
        classes = _feasible_classes(dataset, attr, pool_split, size + 1)
        if not classes:
            raise InsufficientItemsError(f"no class of {attr!r} can host size {size}")
        cls = classes[int(rng.integers(0, len(classes)))]
        rows = simulate_collection(dataset, attr, cls, size, 1.0, rng, pool_rows)
        local = np.asarray([locator[int(r)] for r in rows])
        coll = index.collection(local, label=(attr, cls))
        relevant = _class_ids_in_pool(dataset, index, attr, cls, pool_split)
        relevant -= set(coll.member_ids)
        out = {}
        for variant in variants:
            ranked = retrieval.rank(index, coll, mode=variant, k=protocol.k)
            out[variant] = {
                "map": metrics.map_at_k(ranked.ids, relevant, protocol.k),
                "mrr": metrics.mrr_at_k(ranked.ids, relevant, protocol.k),
            }
        return out

    per_attribute: dict = {}
    for a_idx, attr in enumerate(attributes):
        sums = {v: {"map": 0.0, "mrr": 0.0} for v in variants}
        for i in range(protocol.collections_per_config):
            rng = np.random.default_rng([protocol.seed, _STREAM_BENCH_ATTR, a_idx, i])
            result = _run_collection(rng, attr)
            for v in variants:
                sums[v]["map"] += result[v]["map"]
                sums[v]["mrr"] += result[v]["mrr"]
        per_attribute[attr] = {
            v: {key: s / protocol.collections_per_config for key, s in sums[v].items()}
            for v in variants
        }

    agg_sums = {v: {"map": 0.0, "mrr": 0.0} for v in variants}
    for i in range(protocol.collections_per_config):
        rng = np.random.default_rng([protocol.seed, _STREAM_BENCH_AGG, i])
        attr = attributes[int(rng.integers(0, len(attributes)))]
        result = _run_collection(rng, attr)
        for v in variants:
            agg_sums[v]["map"] += result[v]["map"]
            agg_sums[v]["mrr"] += result[v]["mrr"]
    aggregate = {
        v: {key: s / protocol.collections_per_config for key, s in agg_sums[v].items()}
        for v in variants
    }

    return {
        "kind": "benchmark",
        "variants": variants,
        "view_names": index.view_names,
        "attributes": attributes,
        "protocol": protocol.to_dict(),
        "per_attribute": per_attribute,
        "aggregate": aggregate,
    }


def diversity_study(
    dataset: MultiViewDataset,
    index: RetrievalIndex,
    protocol: SimProtocol,
    attribute: str | None = None,
    variants: list[str] | None = None,
    pool_split: str = "test",
) -> dict:
    """Relevance (MAP) versus per-view diversity of the top-k, per variant.

    Diversity of a result list is measured in the learned-code space for every
    variant, using the same corpus statistics as intent inference, so the
    numbers are comparable across variants.
    """
    variants = default_variants(index.view_names) if variants is None else variants
    attributes = [a for a in DEFAULT_ATTRIBUTES if a in dataset.labels[0]]
    attribute = attribute or (attributes[1] if len(attributes) > 1 else attributes[0])
    a_idx = attributes.index(attribute)
    locator = _pool_locator(dataset, pool_split)
    pool_rows = dataset.split_indices(pool_split)
    id_to_local = {index.item_ids[i]: i for i in range(len(index.item_ids))}

    samples: dict[str, dict[str, list[float]]] = {
        v: {"map": [], **{f"delta_{name}": [] for name in index.view_names}}
        for v in variants
    }
    for i in range(protocol.collections_per_config):
        rng = np.random.default_rng([protocol.seed, _STREAM_DIVERSITY, a_idx, i])
        size = int(rng.integers(protocol.size_min, protocol.size_max + 1))
        classes = _feasible_classes(dataset, attribute, pool_split, size + 1)
        cls = classes[int(rng.integers(0, len(classes)))]
        rows = simulate_collection(dataset, attribute, cls, size, 1.0, rng, pool_rows)
        local = np.asarray([locator[int(r)] for r in rows])
        coll = index.collection(local, label=(attribute, cls))
        relevant = _class_ids_in_pool(dataset, index, attribute, cls, pool_split)
        relevant -= set(coll.member_ids)
        for variant in variants:
            ranked = retrieval.rank(index, coll, mode=variant, k=protocol.k)
            result_rows = np.asarray([id_to_local[r] for r in ranked.ids])
            result_reps = {n: index.output_reps[n][result_rows] for n in index.view_names}
            delta = metrics.diversity(result_reps, index.stats)
            samples[variant]["map"].append(
                metrics.map_at_k(ranked.ids, relevant, protocol.k)
            )
            for name in index.view_names:
                samples[variant][f"delta_{name}"].append(delta[name])

    def _mean_se(values: list[float]) -> dict[str, float]:
        arr = np.asarray(values)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        return {"mean": float(arr.mean()), "se": se}

    summary = {
        variant: {key: _mean_se(vals) for key, vals in per_variant.items()}
        for variant, per_variant in samples.items()
    }
    return {
        "kind": "diversity",
        "attribute": attribute,
        "correlated_view": index.view_names[a_idx],
        "variants": variants,
        "view_names": index.view_names,
        "protocol": protocol.to_dict(),
        "summary": summary,
    }


def composition_study(
    dataset: MultiViewDataset,
    index: RetrievalIndex,
    protocol: SimProtocol,
    trials: int = 50,
    k: int = 20,
    attribute_pair: tuple[int, int] = (0, 1),
    pool_split: str = "test",
    min_joint: int = 4,
) -> dict:
    """Composition versus single-source retrieval on joint-label MAP@k.

    Each trial draws pure source collections on two different attributes,
    composes them (each source contributes its correlated view; leftover
    views are averaged) and compares joint-label MAP@k of the composite
    ranking against each source's own output-output ranking. Class pairs are
    resampled until at least ``min_joint`` jointly-labeled candidates remain
    outside the source collections, so every trial has something to find.
    """
    attributes = [a for a in DEFAULT_ATTRIBUTES if a in dataset.labels[0]]
    attr_a = attributes[attribute_pair[0]]
    attr_b = attributes[attribute_pair[1]]
    view_a = index.view_names[attribute_pair[0]]
    view_b = index.view_names[attribute_pair[1]]
    locator = _pool_locator(dataset, pool_split)
    pool_rows = dataset.split_indices(pool_split)
    pool_ids = [dataset.item_ids[int(r)] for r in pool_rows]
    labels_by_id = {dataset.item_ids[int(r)]: dataset.labels[int(r)] for r in pool_rows}

    results = []
    for t in range(trials):
        rng = np.random.default_rng([protocol.seed, _STREAM_COMPOSE, t])
        size_a = int(rng.integers(protocol.size_min, protocol.size_max + 1))
        size_b = int(rng.integers(protocol.size_min, protocol.size_max + 1))
        for _ in range(200):
            classes_a = _feasible_classes(dataset, attr_a, pool_split, size_a)
            classes_b = _feasible_classes(dataset, attr_b, pool_split, size_b)
            cls_a = classes_a[int(rng.integers(0, len(classes_a)))]
            cls_b = classes_b[int(rng.integers(0, len(classes_b)))]
            joint = {
                item
                for item in pool_ids
                if labels_by_id[item].get(attr_a) == cls_a
                and labels_by_id[item].get(attr_b) == cls_b
            }
            if len(joint) < min_joint:
                continue
            rows_a = simulate_collection(dataset, attr_a, cls_a, size_a, 1.0, rng, pool_rows)
            rows_b = simulate_collection(dataset, attr_b, cls_b, size_b, 1.0, rng, pool_rows)
            exclude = {dataset.item_ids[int(r)] for r in rows_a}
            exclude |= {dataset.item_ids[int(r)] for r in rows_b}
            relevant = joint - exclude
            if len(relevant) >= min_joint:
                break
        else:
            raise InsufficientItemsError("no class pair with enough joint candidates")

        coll_a = index.collection(np.asarray([locator[int(r)] for r in rows_a]))
        coll_b = index.collection(np.asarray([locator[int(r)] for r in rows_b]))

        rep, weights = retrieval.compose(
            [(coll_a, {view_a}), (coll_b, {view_b})], index.view_names
        )
        ranked_comp = retrieval.rank_composed(index, rep, weights.alpha, exclude, k=k)
        map_comp = metrics.map_at_k(ranked_comp.ids, relevant, k)
        map_a = metrics.map_at_k(
            retrieval.rank(index, coll_a, retrieval.MODE_OUTPUT_OUTPUT, k=k).ids,
            relevant - set(coll_a.member_ids),
            k,
        )
        map_b = metrics.map_at_k(
            retrieval.rank(index, coll_b, retrieval.MODE_OUTPUT_OUTPUT, k=k).ids,
            relevant - set(coll_b.member_ids),
            k,
        )
        results.append(
            {
                "trial": t,
                "class_a": cls_a,
                "class_b": cls_b,
                "joint_candidates": len(relevant),
                "map_composed": map_comp,
                "map_source_a": map_a,
                "map_source_b": map_b,
                "composed_wins": map_comp > map_a and map_comp > map_b,
            }
        )

    wins = sum(r["composed_wins"] for r in results)
    return {
        "kind": "composition",
        "attributes": [attr_a, attr_b],
        "views": [view_a, view_b],
        "k": k,
        "trials": trials,
        "win_rate": wins / trials,
        "results": results,
    }


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

def write_report(report: dict, out_dir, name: str) -> None:
    """Write <name>.json plus a flat <name>.csv alongside it."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / f"{name}.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows = _csv_rows(report)
    if rows:
        with open(d / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


def _csv_rows(report: dict) -> list[dict]:
    kind = report.get("kind")
    rows: list[dict] = []
    if kind == "purity_curve":
        for attr, data in report["curves"].items():
            for cls, points in data["classes"].items():
                for p in points:
                    row = {"attribute": attr, "class": cls, "purity": p["purity"]}
                    row.update({f"alpha_{v}": a for v, a in p["mean_alpha"].items()})
                    row["frac_correlated_top"] = p["frac_correlated_top"]
                    rows.append(row)
    elif kind == "lambda_sweep":
        for run in report["runs"]:
            row = {"lambda2": run["lambda2"], "seed": run["seed"], "final_rec": run["final_rec"]}
            for pair, vals in run["inter"].items():
                row[f"inter_pearson[{pair}]"] = vals["pearson_output"]
                row[f"inter_hsic[{pair}]"] = vals["hsic_output"]
            for view, vals in run["intra"].items():
                row[f"intra_pearson[{view}]"] = vals["pearson"]
                row[f"intra_hsic[{view}]"] = vals["hsic"]
            rows.append(row)
    elif kind == "benchmark":
        for attr, per_variant in report["per_attribute"].items():
            for variant, vals in per_variant.items():
                rows.append(
                    {"scope": attr, "variant": variant, "map": vals["map"], "mrr": vals["mrr"]}
                )
        for variant, vals in report["aggregate"].items():
            rows.append(
                {"scope": "aggregate", "variant": variant, "map": vals["map"], "mrr": vals["mrr"]}
            )
    elif kind == "diversity":
        for variant, stats in report["summary"].items():
            row = {"variant": variant}
            for key, ms in stats.items():
                row[f"{key}_mean"] = ms["mean"]
                row[f"{key}_se"] = ms["se"]
            rows.append(row)
    elif kind == "composition":
        rows = [dict(r) for r in report["results"]]
    return rows
