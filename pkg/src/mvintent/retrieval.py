"""Collection representation, intent inference and intent-weighted ranking.

A collection of items is summarized per view by the mean of its members'
view-specific codes. Its *intent* is a distribution over views obtained by
standardizing the collection's mean pairwise within-view similarity against
corpus statistics and passing the standardized values through a softmax:
views along which the members are unusually homogeneous get the weight.
Candidates are then scored by the intent-weighted sum of per-view
similarities to the collection representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import (
    DegenerateInputError,
    DimensionMismatchError,
    EmptyInputError,
)

MODE_INPUT_UNIFORM = "input-uniform"
MODE_INPUT_OUTPUT = "input-output"
MODE_OUTPUT_OUTPUT = "output-output"
SINGLE_VIEW_PREFIX = "single:"

STATS_DEGENERATE_SIGMA = 1e-9


@dataclass
class Collection:
    """A set of items treated as one query.

    ``output_reps`` (per-view learned codes of the members, unit-norm rows)
    drive intent inference; ``input_reps`` are needed only when the collection
    is used to score candidates in the raw feature spaces.
    """

    member_ids: list[str]
    output_reps: dict[str, np.ndarray]
    input_reps: dict[str, np.ndarray] | None = None
    label: tuple[str, str] | None = None

    @property
    def size(self) -> int:
        return next(iter(self.output_reps.values())).shape[0]


@dataclass
class CollectionRep:
    """Per-view arithmetic mean of member representations (not re-normalized)."""

    means: dict[str, np.ndarray]
    degenerate_views: list[str] = field(default_factory=list)


@dataclass
class ViewStats:
    """Mean/stddev of pairwise within-view similarities over a corpus."""

    mu: dict[str, float]
    sigma: dict[str, float]
    pair_count: int
    seed: int
    exact: bool


@dataclass
class IntentWeights:
    alpha: dict[str, float]
    beta: dict[str, float]
    beta_hat: dict[str, float]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "beta_hat": self.beta_hat}


@dataclass
class RankedList:
    """Candidates in descending score order; ties broken by ascending id."""

    ids: list[str]
    scores: list[float]
    per_view_sims: list[dict[str, float]] | None = None

    def to_jsonl(self) -> str:
        lines = []
        for i, (item, score) in enumerate(zip(self.ids, self.scores), start=1):
            rec = {"rank": i, "id": item, "score": score}
            if self.per_view_sims is not None:
                rec["per_view_sim"] = self.per_view_sims[i - 1]
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class RetrievalIndex:
    """Everything rank() needs about a candidate corpus.

    ``input_reps`` are the unit-norm raw features, compared with each view's
    input similarity kind; ``output_reps`` are the learned view-specific codes,
    always compared with dot products; ``stats`` standardize intent in the
    output space.
    """

    item_ids: list[str]
    input_reps: dict[str, np.ndarray]
    output_reps: dict[str, np.ndarray]
    input_sim_kinds: dict[str, str]
    stats: ViewStats

    @property
    def view_names(self) -> list[str]:
        return list(self.output_reps)

    def collection(self, rows: np.ndarray, label: tuple[str, str] | None = None) -> Collection:
        return Collection(
            member_ids=[self.item_ids[i] for i in rows],
            output_reps={n: m[rows] for n, m in self.output_reps.items()},
            input_reps={n: m[rows] for n, m in self.input_reps.items()},
            label=label,
        )


def collection_rep(
    collection: Collection, space: str = "output", renormalize: bool = False
) -> CollectionRep:
    """Mean member representation per view; all-zero means are flagged.

    The mean is NOT rescaled by default, so dot-product scores shrink for
    incoherent collections; ``renormalize=True`` projects each mean back to
    unit norm for callers that want pure direction.
    """
    reps = collection.output_reps if space == "output" else collection.input_reps
    if reps is None:
        raise ValueError(f"collection carries no {space!r} representations")
    if collection.size < 1:
        raise EmptyInputError("cannot represent an empty collection")
    means = {}
    degenerate = []
    for name, m in reps.items():
        mean = m.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm <= 1e-12:
            degenerate.append(name)
        elif renormalize:
            mean = mean / norm
        means[name] = mean
    return CollectionRep(means=means, degenerate_views=degenerate)


def raw_intent(collection: Collection) -> dict[str, float]:
    """Mean pairwise cosine among members, per view (ordered pairs i != j)."""
    n = collection.size
    if n < 2:
        raise ValueError("intent needs at least 2 members")
    out = {}
    for name, m in collection.output_reps.items():
        gram = m @ m.T
        out[name] = float((gram.sum() - np.trace(gram)) / (n * (n - 1)))
    return out


def corpus_stats(
    reps: dict[str, np.ndarray],
    sample_pairs: int = 100_000,
    seed: int = 0,
    exact: bool = False,
) -> ViewStats:
    """Estimate the mean/stddev of pairwise similarities per view.

    By default ``sample_pairs`` uniform random pairs (i != j) are drawn with a
    seeded generator; ``exact=True`` enumerates all unordered pairs, intended
    for corpora up to a couple thousand items. Stddev uses Bessel's
    correction.
    """
    n = next(iter(reps.values())).shape[0]
    if n < 2:
        raise ValueError("corpus must hold at least 2 items")
    if not exact and sample_pairs < 1000:
        raise ValueError("sample_pairs must be >= 1000")
    mu: dict[str, float] = {}
    sigma: dict[str, float] = {}
    if exact:
        iu = np.triu_indices(n, k=1)
        pair_count = iu[0].size
        for name, m in reps.items():
            sims = np.einsum("ij,ij->i", m[iu[0]], m[iu[1]])
            mu[name] = float(sims.mean())
            sigma[name] = float(sims.std(ddof=1))
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=sample_pairs)
        j = rng.integers(0, n - 1, size=sample_pairs)
        j = np.where(j >= i, j + 1, j)  # uniform over j != i
        pair_count = sample_pairs
        for name, m in reps.items():
            sims = np.einsum("ij,ij->i", m[i], m[j])
            mu[name] = float(sims.mean())
            sigma[name] = float(sims.std(ddof=1))
    for name, s in sigma.items():
        if s < STATS_DEGENERATE_SIGMA:
            raise DegenerateInputError(
                f"view {name!r}: corpus similarities are (near-)constant"
            )
    return ViewStats(mu=mu, sigma=sigma, pair_count=pair_count, seed=seed, exact=exact)


def standardize_intent(beta_hat: dict[str, float], stats: ViewStats) -> dict[str, float]:
    return {
        name: (value - stats.mu[name]) / stats.sigma[name]
        for name, value in beta_hat.items()
    }


def intent(beta_hat: dict[str, float], stats: ViewStats) -> IntentWeights:
    """Standardize raw per-view homogeneity and softmax across views."""
    beta = standardize_intent(beta_hat, stats)
    names = list(beta)
    alpha = numerics.softmax(np.array([beta[n] for n in names]))
    return IntentWeights(
        alpha={n: float(a) for n, a in zip(names, alpha)},
        beta=beta,
        beta_hat=dict(beta_hat),
    )


def collection_intent(collection: Collection, stats: ViewStats) -> IntentWeights:
    return intent(raw_intent(collection), stats)


def _view_sims(
    rep: CollectionRep,
    corpus_reps: dict[str, np.ndarray],
    sim_kinds: dict[str, str],
) -> dict[str, np.ndarray]:
    sims = {}
    for name, matrix in corpus_reps.items():
        c = rep.means[name]
        if c.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(
                f"view {name!r}: rep dim {c.shape[0]} vs corpus dim {matrix.shape[1]}"
            )
        sims[name] = numerics.matsim(c[None, :], matrix, sim_kinds[name])[0]
    return sims


def score(
    rep: CollectionRep,
    candidate: dict[str, np.ndarray],
    alpha: dict[str, float],
    sim_kinds: dict[str, str],
) -> float:
    """Intent-weighted similarity of a single candidate to a collection."""
    total = 0.0
    for name, c in rep.means.items():
        d = np.asarray(candidate[name], dtype=np.float64)
        if c.shape != d.shape:
            raise DimensionMismatchError(f"view {name!r}: {c.shape} vs {d.shape}")
        total += alpha[name] * float(
            numerics.matsim(c[None, :], d[None, :], sim_kinds[name])[0, 0]
        )
    return total


def rank_scored(
    item_ids: list[str],
    rep: CollectionRep,
    corpus_reps: dict[str, np.ndarray],
    alpha: dict[str, float],
    sim_kinds: dict[str, str],
    exclude_ids=(),
    k: int | None = None,
    with_sims: bool = True,
) -> RankedList:
    """Score a corpus against a collection rep and sort deterministically."""
    sims = _view_sims(rep, corpus_reps, sim_kinds)
    names = list(corpus_reps)
    totals = np.zeros(len(item_ids))
    for name in names:
        totals += alpha[name] * sims[name]
    exclude = set(exclude_ids)
    order = sorted(
        (i for i, item in enumerate(item_ids) if item not in exclude),
        key=lambda i: (-totals[i], item_ids[i]),
    )
    if k is not None:
        order = order[:k]
    return RankedList(
        ids=[item_ids[i] for i in order],
        scores=[float(totals[i]) for i in order],
        per_view_sims=(
            [{n: float(sims[n][i]) for n in names} for i in order] if with_sims else None
        ),
    )


def rank(
    index: RetrievalIndex,
    collection: Collection,
    mode: str = MODE_OUTPUT_OUTPUT,
    k: int | None = None,
) -> RankedList:
    """Rank the corpus against a query collection under a scoring mode.

    Modes: ``output-output`` (learned codes for both intent and similarity),
    ``input-output`` (raw features for similarity, learned codes for intent),
    ``input-uniform`` (raw features, uniform weights) and ``single:<view>``
    (nearest neighbors along one raw view, no intent). Collection members are
    always excluded from the candidates.
    """
    if not index.item_ids:
        raise EmptyInputError("corpus is empty")
    names = index.view_names
    uniform = {n: 1.0 / len(names) for n in names}
    dot_kinds = {n: numerics.DOT for n in names}

    if mode == MODE_OUTPUT_OUTPUT:
        rep = collection_rep(collection, "output")
        alpha = collection_intent(collection, index.stats).alpha
        return rank_scored(
            index.item_ids, rep, index.output_reps, alpha, dot_kinds,
            exclude_ids=collection.member_ids, k=k,
        )
    if mode == MODE_INPUT_OUTPUT:
        rep = collection_rep(collection, "input")
        alpha = collection_intent(collection, index.stats).alpha
        return rank_scored(
            index.item_ids, rep, index.input_reps, alpha, index.input_sim_kinds,
            exclude_ids=collection.member_ids, k=k,
        )
    if mode == MODE_INPUT_UNIFORM:
        rep = collection_rep(collection, "input")
        return rank_scored(
            index.item_ids, rep, index.input_reps, uniform, index.input_sim_kinds,
            exclude_ids=collection.member_ids, k=k,
        )
    if mode.startswith(SINGLE_VIEW_PREFIX):
        view = mode[len(SINGLE_VIEW_PREFIX) :]
        if view not in names:
            raise ValueError(f"unknown view {view!r} in mode {mode!r}")
        rep = collection_rep(collection, "input")
        one_hot = {n: 1.0 if n == view else 0.0 for n in names}
        return rank_scored(
            index.item_ids, rep, index.input_reps, one_hot, index.input_sim_kinds,
            exclude_ids=collection.member_ids, k=k,
        )
    raise ValueError(f"unknown mode {mode!r}")


def compose(
    sources: list[tuple[Collection, set[str] | list[str]]],
    view_names: list[str],
) -> tuple[CollectionRep, IntentWeights]:
    """Build a composite query from collections that each contribute views.

    A view selected by a source takes that source's mean representation; a
    view selected by nobody takes the average of all sources' means. Intent
    is split uniformly over the selected views and zero elsewhere, so the
    composite retrieves items matching each source along its chosen views.
    """
    if not sources:
        raise EmptyInputError("compose needs at least one source")
    owner: dict[str, int] = {}
    for i, (_, selected) in enumerate(sources):
        for view in selected:
            if view not in view_names:
                raise ValueError(f"unknown view {view!r}")
            if view in owner:
                raise ValueError(f"view {view!r} selected by more than one source")
            owner[view] = i
    if not owner:
        raise ValueError("at least one view must be selected")

    reps = [collection_rep(coll, "output") for coll, _ in sources]
    means: dict[str, np.ndarray] = {}
    for view in view_names:
        if view in owner:
            means[view] = reps[owner[view]].means[view]
        else:
            means[view] = np.mean([r.means[view] for r in reps], axis=0)

    n_selected = len(owner)
    alpha = {v: (1.0 / n_selected if v in owner else 0.0) for v in view_names}
    # beta/beta_hat are not inferred here; the weights are set by construction.
    weights = IntentWeights(alpha=alpha, beta={}, beta_hat={})
    return CollectionRep(means=means), weights


def rank_composed(
    index: RetrievalIndex,
    rep: CollectionRep,
    alpha: dict[str, float],
    exclude_ids=(),
    k: int | None = None,
) -> RankedList:
    """Rank the corpus against a composed representation (learned-code space)."""
    dot_kinds = {n: numerics.DOT for n in index.view_names}
    return rank_scored(
        index.item_ids, rep, index.output_reps, alpha, dot_kinds,
        exclude_ids=exclude_ids, k=k,
    )
