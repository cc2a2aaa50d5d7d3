"""Independent reference implementations shared by the test modules.

Everything here deliberately avoids the code paths it is used to check:
finite differences only call the forward-pass loss, and the ranking metrics
are written directly from their textbook definitions.
"""

import numpy as np

from mvintent import model as M
from mvintent.dataio import ViewSpec
from mvintent.numerics import row_normalize


def make_gradcheck_fixture(seed, max_dim=9, max_batch=8):
    """Random small config, params and unit-norm batch for gradient checks.

    Biases are jittered away from zero so no ReLU pre-activation or pre-norm
    row sits on a non-differentiable point, where finite differences are
    meaningless by construction.
    """
    rng = np.random.default_rng(seed)
    dims = rng.integers(3, max_dim, size=3)
    views = [ViewSpec(n, int(d)) for n, d in zip(("a", "b", "c"), dims)]
    config = M.ModelConfig(
        views=views,
        aligned_dim=int(rng.integers(3, 7)),
        shared_dim=int(rng.integers(3, 7)),
        aligned_hidden=int(rng.integers(4, 8)),
        specific_hidden={v.name: int(rng.integers(4, 8)) for v in views},
        recon_hidden={v.name: int(rng.integers(4, 8)) for v in views},
        loss_weights=M.LossWeights(*rng.uniform(0.1, 1.0, size=4)),
        seed=int(rng.integers(0, 2**31)),
    )
    params = M.init_params(config)
    for key in params:
        if ".b" in key:
            params[key] = params[key] + 0.05 * rng.standard_normal(params[key].shape)
    batch_rows = int(rng.integers(3, max_batch + 1))
    batch = {
        v.name: row_normalize(rng.standard_normal((batch_rows, v.input_dim)))[0]
        for v in views
    }
    out = M.forward(config, params, batch, with_caches=True)
    for v in views:
        cache = out.caches[v.name]
        assert np.linalg.norm(cache["vp"], axis=1).min() > 1e-3
        assert np.linalg.norm(cache["va"], axis=1).min() > 1e-3
    return config, params, batch


def finite_difference_gradients(config, params, batch, h=1e-5):
    """Central finite differences of the total loss for every parameter."""
    numeric = {}
    for key in sorted(params):
        p = params[key]
        grad = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            plus = M.batch_loss(config, params, batch).total
            p[idx] = orig - h
            minus = M.batch_loss(config, params, batch).total
            p[idx] = orig
            grad[idx] = (plus - minus) / (2.0 * h)
        numeric[key] = grad
    return numeric


def average_precision_oracle(ranked_ids, relevant, k):
    """Direct AP@k: mean precision at each relevant hit, over min(k, |rel|)."""
    relevant = set(relevant)
    if not relevant:
        return 0.0
    precisions = []
    hits = 0
    for pos, item in enumerate(ranked_ids[:k], start=1):
        if item in relevant:
            hits += 1
            precisions.append(hits / pos)
    if not precisions:
        return 0.0
    return sum(precisions) / min(k, len(relevant))


def reciprocal_rank_oracle(ranked_ids, relevant, k):
    relevant = set(relevant)
    for pos, item in enumerate(ranked_ids[:k], start=1):
        if item in relevant:
            return 1.0 / pos
    return 0.0
