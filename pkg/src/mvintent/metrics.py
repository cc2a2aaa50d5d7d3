"""Disentanglement and retrieval evaluation metrics.

Pearson/HSIC quantify how much two representation spaces agree about which
items are similar; MAP/MRR score ranked retrieval lists; diversity is the
inverse of a result list's standardized within-list homogeneity along a view.
"""

from __future__ import annotations

import numpy as np

from . import numerics
from .errors import DegenerateInputError, DimensionMismatchError, EmptyInputError


def _offdiagonal_rows(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    return m[~np.eye(n, dtype=bool)].reshape(n, n - 1)


def interview_pearson(a, b, method: str = "rows") -> float:
    """Mean row-wise Pearson correlation between two n x n similarity matrices.

    Each row is compared with its diagonal entry removed (self-similarity says
    nothing about the neighborhood structure). Rows where either side is
    constant are skipped. ``method="flat"`` correlates the flattened
    off-diagonal entries instead, for sensitivity checks.
    """
    am = numerics.as_matrix(a, "A")
    bm = numerics.as_matrix(b, "B")
    if am.shape != bm.shape or am.shape[0] != am.shape[1]:
        raise DimensionMismatchError(
            f"expected equal square matrices, got {am.shape} and {bm.shape}"
        )
    n = am.shape[0]
    if n < 3:
        raise DimensionMismatchError("need n >= 3 (rows too short after diagonal removal)")
    ar = _offdiagonal_rows(am)
    br = _offdiagonal_rows(bm)
    if method == "flat":
        r, constant = numerics.pearson(ar.ravel(), br.ravel())
        if constant:
            raise DegenerateInputError("flattened similarities are constant")
        return r
    if method != "rows":
        raise ValueError(f"unknown method {method!r}")
    valid = (np.ptp(ar, axis=1) > 0) & (np.ptp(br, axis=1) > 0)
    if not valid.any():
        raise DegenerateInputError("every row is constant")
    ac = ar[valid] - ar[valid].mean(axis=1, keepdims=True)
    bc = br[valid] - br[valid].mean(axis=1, keepdims=True)
    num = (ac * bc).sum(axis=1)
    den = np.sqrt((ac * ac).sum(axis=1) * (bc * bc).sum(axis=1))
    r = np.clip(num / den, -1.0, 1.0)
    return float(r.mean())


def hsic(y1, y2, norm: str = "frobenius") -> float:
    """Normalized Hilbert-Schmidt independence criterion with linear kernels.

    trace(K1 H K2 H) / (||H K1 H|| * ||H K2 H||) where K = Y Y^T and H is the
    centering matrix. 1.0 means the two Gram structures coincide (up to
    rotation); values near 0 indicate independent similarity structures.
    """
    a = numerics.as_matrix(y1, "Y1")
    b = numerics.as_matrix(y2, "Y2")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError("row counts differ")
    if a.shape[0] < 3:
        raise DimensionMismatchError("need at least 3 rows")
    k1 = numerics.center_gram(numerics.matsim(a, a, numerics.DOT))
    k2 = numerics.center_gram(numerics.matsim(b, b, numerics.DOT))
    if norm == "frobenius":
        n1 = np.linalg.norm(k1)
        n2 = np.linalg.norm(k2)
    elif norm == "spectral":
        n1 = np.linalg.norm(k1, 2)
        n2 = np.linalg.norm(k2, 2)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateInputError("centered Gram matrix has zero norm")
    # Both centered Grams are symmetric, so trace(K1 K2) = sum(K1 * K2).
    return float((k1 * k2).sum() / (n1 * n2))


def map_at_k(ranked_ids, relevant, k: int) -> float:
    """Average precision of the top-k prefix, normalized by min(k, |relevant|)."""
    if k <= 0:
        raise ValueError("k must be positive")
    ids = list(ranked_ids)
    if not ids:
        raise EmptyInputError("ranked list is empty")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for pos, item in enumerate(ids[:k], start=1):
        if item in relevant:
            hits += 1
            precision_sum += hits / pos
    if hits == 0:
        return 0.0
    return precision_sum / min(k, len(relevant))


def mrr_at_k(ranked_ids, relevant, k: int) -> float:
    """Reciprocal rank of the first relevant item within the top-k, else 0."""
    if k <= 0:
        raise ValueError("k must be positive")
    ids = list(ranked_ids)
    if not ids:
        raise EmptyInputError("ranked list is empty")
    relevant = set(relevant)
    for pos, item in enumerate(ids[:k], start=1):
        if item in relevant:
            return 1.0 / pos
    return 0.0


def diversity(result_reps: dict[str, np.ndarray], stats, clamp: float = 1e-6) -> dict[str, float]:
    """Per-view diversity of a result set: inverse of its standardized homogeneity.

    The homogeneity is the result set's mean pairwise cosine standardized by
    corpus statistics, exactly as intent inference computes it for a
    collection. The standardized value can be <= 0 for unusually heterogeneous
    sets, so it is clamped below at ``clamp`` before inversion.
    """
    from .retrieval import Collection, raw_intent, standardize_intent

    n = {m.shape[0] for m in result_reps.values()}
    if len(n) != 1:
        raise DimensionMismatchError("views disagree on result-set size")
    if n.pop() < 2:
        raise ValueError("diversity needs a result set of size >= 2")
    coll = Collection(member_ids=[], output_reps=result_reps)
    beta = standardize_intent(raw_intent(coll), stats)
    return {name: 1.0 / max(b, clamp) for name, b in beta.items()}


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    xv = numerics.as_vector(x, "x")
    yv = numerics.as_vector(y, "y")
    if xv.size != yv.size:
        raise DimensionMismatchError("length mismatch")

    def ranks(v: np.ndarray) -> np.ndarray:
        order = np.argsort(v, kind="stable")
        r = np.empty(v.size)
        r[order] = np.arange(1, v.size + 1, dtype=np.float64)
        # average ranks over ties
        for val in np.unique(v):
            mask = v == val
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    r, _ = numerics.pearson(ranks(xv), ranks(yv))
    return r


def disentanglement_report(
    input_reps: dict[str, np.ndarray],
    output_reps: dict[str, np.ndarray],
) -> dict:
    """Inter-view (input and output level) and intra-view Pearson + HSIC.

    All similarity matrices use dot products, so callers should pass unit-norm
    representations of the same item set.
    """
    names = list(input_reps)
    sims_in = {n: numerics.matsim(input_reps[n], input_reps[n]) for n in names}
    sims_out = {n: numerics.matsim(output_reps[n], output_reps[n]) for n in names}
    report: dict = {"inter": {}, "intra": {}}
    for i, m in enumerate(names):
        for m2 in names[i + 1 :]:
            report["inter"][f"{m}|{m2}"] = {
                "pearson_input": interview_pearson(sims_in[m], sims_in[m2]),
                "pearson_output": interview_pearson(sims_out[m], sims_out[m2]),
                "hsic_input": hsic(input_reps[m], input_reps[m2]),
                "hsic_output": hsic(output_reps[m], output_reps[m2]),
            }
    for m in names:
        report["intra"][m] = {
            "pearson": interview_pearson(sims_in[m], sims_out[m]),
            "hsic": hsic(input_reps[m], output_reps[m]),
        }
    return report
