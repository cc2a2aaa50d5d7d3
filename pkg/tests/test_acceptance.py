"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Heavy artifacts (trained models, reports) are built once in session fixtures;
stated runtime budgets cover the work the criterion itself prescribes and are
asserted alongside the substance. Everything runs on one CPU core with fixed
seeds, so every number here is bit-reproducible.
"""

import time

import numpy as np
import pytest

from mvintent import metrics as X
from mvintent import model as M
from mvintent import simulator as S
from mvintent.cli import main as cli_main
from mvintent.dataio import lab_histogram, read_view_features, write_view_features
from mvintent.numerics import row_normalize

from oracles import (
    average_precision_oracle,
    finite_difference_gradients,
    make_gradcheck_fixture,
    reciprocal_rank_oracle,
)

VIEWS = ("object", "style", "color")
ATTRS = ("content", "media", "emotion")
CORRELATED = dict(zip(ATTRS, VIEWS))

SWEEP_LAMBDAS = [0.0, 0.05, 0.5, 5.0]
SWEEP_SEEDS = (0, 1, 2)
SWEEP_EPOCHS = 120

BENCH_DATASET_SEEDS = (0, 1, 2)
BENCH_LAMBDA2 = 0.002   # intermediate operating point from the sweep trends
BENCH_EPOCHS = 400
PURITY_LAMBDA2 = 0.05
PURITY_EPOCHS = 200


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


# ---------------------------------------------------------------------------
# Session fixtures (heavy artifacts)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def default_dataset():
    return S.generate_synthetic(S.SyntheticConfig())


@pytest.fixture(scope="session")
def sweep_report(default_dataset):
    base = M.ModelConfig(views=list(default_dataset.views), epochs=SWEEP_EPOCHS)
    start = time.time()
    report = S.lambda_sweep(default_dataset, base, SWEEP_LAMBDAS, seeds=SWEEP_SEEDS)
    report["_elapsed"] = time.time() - start
    return report


@pytest.fixture(scope="session")
def bench_bundles():
    """Per dataset seed: (dataset, index, benchmark report); timed together."""
    bundles = []
    start = time.time()
    for seed in BENCH_DATASET_SEEDS:
        dataset = S.generate_synthetic(S.SyntheticConfig(seed=seed))
        config = M.ModelConfig(
            views=list(dataset.views),
            loss_weights=M.LossWeights(lambda2=BENCH_LAMBDA2),
            epochs=BENCH_EPOCHS,
            seed=seed,
        )
        checkpoint = M.train(dataset, config).checkpoint
        index = S.build_index(dataset, checkpoint)
        protocol = S.SimProtocol(collections_per_config=100, seed=seed)
        report = S.run_benchmark(dataset, index, protocol)
        bundles.append({"dataset": dataset, "index": index, "bench": report})
    return {"bundles": bundles, "elapsed": time.time() - start}


@pytest.fixture(scope="session")
def purity_bundle(default_dataset):
    config = M.ModelConfig(
        views=list(default_dataset.views),
        loss_weights=M.LossWeights(lambda2=PURITY_LAMBDA2),
        epochs=PURITY_EPOCHS,
        seed=0,
    )
    checkpoint = M.train(default_dataset, config).checkpoint
    index = S.build_index(default_dataset, checkpoint)
    protocol = S.SimProtocol(collections_per_config=100, seed=0)
    start = time.time()
    report = S.purity_curve(default_dataset, index, protocol)
    report["_elapsed"] = time.time() - start
    return report


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def test_criterion_01_gradient_correctness():
    start = time.time()
    worst = 0.0
    for seed in range(10):
        config, params, batch = make_gradcheck_fixture(seed)
        grads, _, _ = M.backward(config, params, batch)
        numeric = finite_difference_gradients(config, params, batch, h=1e-5)
        for key in params:
            a, n = grads[key], numeric[key]
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
            worst = max(worst, float(rel.max()))
    elapsed = time.time() - start
    ok = worst <= 1e-5 and elapsed < 30.0
    _report("1 gradient-correctness",
            ok, f"max rel err {worst:.3e} over 10 configs in {elapsed:.1f}s")
    assert worst <= 1e-5
    assert elapsed < 30.0


def test_criterion_02_loss_closed_forms():
    start = time.time()
    z = np.tile(np.array([[1.0, 0.0, 0.0]]), (4, 1))
    ali = M.loss_alignment({"a": z, "b": -z})
    z1 = np.zeros((1, 4))
    z1[0, 0] = 1.0
    spc = M.loss_specific({"a": z1, "b": z1.copy()})
    x = np.eye(3)
    inf = M.loss_info({"a": x}, {"a": -x})
    rec = M.loss_recon({"a": np.ones((5, 3)) + 2.0}, {"a": np.ones((5, 3))})
    elapsed = time.time() - start
    ok = ali == 2.0 and spc == 1.0 / 16.0 and inf == 2.0 and rec == 4.0 and elapsed < 1.0
    _report("2 loss-closed-forms",
            ok, f"ali={ali} spc={spc} inf={inf} rec={rec} in {elapsed:.3f}s")
    assert ali == 2.0
    assert spc == 1.0 / 16.0
    assert inf == 2.0
    assert rec == 4.0
    assert elapsed < 1.0


def test_criterion_03_disentanglement_trend(sweep_report):
    by = sweep_report["by_lambda2"]
    pairs = list(by["0.0"]["inter"])

    drops = {
        pair: (
            by["0.5"]["inter"][pair]["pearson_output"] < by["0.0"]["inter"][pair]["pearson_output"],
            by["0.5"]["inter"][pair]["hsic_output"] < by["0.0"]["inter"][pair]["hsic_output"],
        )
        for pair in pairs
    }
    a_ok = all(p and h for p, h in drops.values())

    recs = [by[str(lam)]["final_rec"] for lam in SWEEP_LAMBDAS]
    b_ok = all(r2 >= r1 for r1, r2 in zip(recs, recs[1:]))

    intra0 = {v: by["0.0"]["intra"][v]["pearson"] for v in VIEWS}
    c_ok = all(r >= 1.0 - 0.05 for r in intra0.values())

    elapsed = sweep_report["_elapsed"]
    ok = a_ok and b_ok and c_ok and elapsed <= 900.0
    _report(
        "3 disentanglement-trend", ok,
        f"(a) inter drop {a_ok} (b) rec {['%.5f' % r for r in recs]} "
        f"(c) intra@0 {[round(v, 3) for v in intra0.values()]} in {elapsed:.0f}s",
    )
    assert a_ok, f"inter-view metrics did not drop for all pairs: {drops}"
    assert b_ok, f"final rec losses not non-decreasing: {recs}"
    assert c_ok, f"intra-view pearson at lambda2=0 below 0.95: {intra0}"
    assert elapsed <= 900.0


def test_criterion_04_intent_purity_curves(purity_bundle):
    report = purity_bundle
    grid = report["grid"]
    failures = []
    frac_at_one = {}
    for attr in ATTRS:
        agg = report["curves"][attr]["aggregate"]
        p0 = agg[0]["mean_alpha"]
        if any(abs(alpha - 1 / 3) > 0.05 for alpha in p0.values()):
            failures.append(f"{attr}: purity-0 alpha {p0}")
        curve = [point["mean_alpha"][CORRELATED[attr]] for point in agg]
        rho = X.spearman(grid, curve)
        if rho <= 0.9:
            failures.append(f"{attr}: spearman {rho:.3f}")
        frac = agg[-1]["frac_correlated_top"]
        frac_at_one[attr] = frac
        if frac < 0.90:
            failures.append(f"{attr}: purity-1 argmax fraction {frac:.2f}")
    elapsed = report["_elapsed"]
    ok = not failures and elapsed <= 300.0
    _report(
        "4 intent-purity-curves", ok,
        f"purity-1 argmax fractions {frac_at_one}; curve time {elapsed:.0f}s"
        + (f"; failures: {failures}" if failures else ""),
    )
    assert not failures, failures
    assert elapsed <= 300.0


def test_criterion_05_benchmark_ordering(bench_bundles):
    bundles = bench_bundles["bundles"]
    variants = bundles[0]["bench"]["variants"]
    singles = [v for v in variants if v.startswith("single:")]

    def agg_mean(variant, key):
        return float(np.mean([b["bench"]["aggregate"][variant][key] for b in bundles]))

    oo_map = agg_mean("output-output", "map")
    io_map = agg_mean("input-output", "map")
    iu_map = agg_mean("input-uniform", "map")
    chain_ok = oo_map >= io_map >= iu_map
    singles_ok = all(
        oo_map >= agg_mean(s, "map")
        and agg_mean("output-output", "mrr") >= agg_mean(s, "mrr")
        for s in singles
    )
    corr_ok = True
    for attr in ATTRS:
        means = {
            s: float(np.mean([b["bench"]["per_attribute"][attr][s]["map"] for b in bundles]))
            for s in singles
        }
        if max(means, key=means.get) != f"single:{CORRELATED[attr]}":
            corr_ok = False
    elapsed = bench_bundles["elapsed"]
    ok = chain_ok and singles_ok and corr_ok and elapsed <= 600.0
    _report(
        "5 benchmark-ordering", ok,
        f"MAP means oo={oo_map:.3f} io={io_map:.3f} iu={iu_map:.3f}; "
        f"singles_ok={singles_ok} corr_best={corr_ok}; {elapsed:.0f}s for 3 seeds",
    )
    assert chain_ok, (oo_map, io_map, iu_map)
    assert singles_ok
    assert corr_ok
    assert elapsed <= 600.0


def test_criterion_06_diversity_tradeoff(bench_bundles):
    # Known-red on this benchmark: the generator ties each attribute to
    # exactly one view, so a single-view baseline's results are (at most)
    # randomly arranged along the views it ignores, while the intent-weighted
    # ranker always spends ~25% of its weight homogenizing them. Mean delta
    # along uncorrelated views therefore favors the baseline by construction;
    # the effect this asserts needs cross-attribute label correlation, which
    # this dataset deliberately does not have.
    bundle = bench_bundles["bundles"][0]
    protocol = S.SimProtocol(collections_per_config=100, seed=0)
    start = time.time()
    report = S.diversity_study(bundle["dataset"], bundle["index"], protocol)
    elapsed = time.time() - start
    summary = report["summary"]
    corr_view = report["correlated_view"]
    uncorr = [v for v in report["view_names"] if v != corr_view]
    ses_present = all(
        "se" in summary[v]["map"] and all("se" in summary[v][f"delta_{u}"] for u in uncorr)
        for v in report["variants"]
    )

    oo_map = summary["output-output"]["map"]["mean"]
    map_max = all(oo_map >= summary[v]["map"]["mean"] for v in report["variants"])
    single_corr = f"single:{corr_view}"
    delta_ok = all(
        summary["output-output"][f"delta_{u}"]["mean"]
        >= summary[single_corr][f"delta_{u}"]["mean"]
        for u in uncorr
    )
    detail = (
        f"attr={report['attribute']} oo MAP {oo_map:.3f} "
        f"(best other {max(summary[v]['map']['mean'] for v in report['variants'] if v != 'output-output'):.3f}); "
        + " ".join(
            f"delta_{u}: oo={summary['output-output'][f'delta_{u}']['mean']:.3g}"
            f" vs {single_corr}={summary[single_corr][f'delta_{u}']['mean']:.3g}"
            for u in uncorr
        )
        + f"; SEs reported={ses_present}; {elapsed:.0f}s"
    )
    ok = map_max and delta_ok and ses_present and elapsed <= 300.0
    _report("6 diversity-tradeoff", ok, detail)
    assert ses_present
    assert elapsed <= 300.0
    assert map_max, detail
    assert delta_ok, detail


def test_criterion_07_composition(bench_bundles):
    bundle = bench_bundles["bundles"][0]
    protocol = S.SimProtocol(collections_per_config=100, seed=0)
    start = time.time()
    report = S.composition_study(
        bundle["dataset"], bundle["index"], protocol, trials=50, k=20
    )
    elapsed = time.time() - start
    ok = report["win_rate"] >= 0.80 and elapsed <= 180.0
    _report(
        "7 composition", ok,
        f"composed beats both sources in {report['win_rate']:.0%} of "
        f"{report['trials']} trials (joint-label MAP@20); {elapsed:.0f}s",
    )
    assert report["win_rate"] >= 0.80
    assert elapsed <= 180.0


def test_criterion_08_metrics_oracles():
    rng = np.random.default_rng(0)
    y = row_normalize(rng.standard_normal((50, 8)))[0]
    self_hsic = X.hsic(y, y.copy())
    hsic_self_ok = abs(self_hsic - 1.0) <= 1e-9

    indep_vals = []
    for seed in range(5):
        r = np.random.default_rng(seed)
        a = row_normalize(r.standard_normal((200, 16)))[0]
        b = row_normalize(r.standard_normal((200, 16)))[0]
        indep_vals.append(X.hsic(a, b))
    hsic_indep_ok = all(v < 0.1 for v in indep_vals)

    ids = [f"i{j:02d}" for j in range(30)]
    rank_ok = True
    for _ in range(100):
        perm = list(rng.permutation(ids))
        relevant = set(rng.choice(ids, size=int(rng.integers(1, 12)), replace=False))
        k = int(rng.integers(1, 35))
        if X.map_at_k(perm, relevant, k) != pytest.approx(
            average_precision_oracle(perm, relevant, k), abs=1e-12
        ):
            rank_ok = False
        if X.mrr_at_k(perm, relevant, k) != pytest.approx(
            reciprocal_rank_oracle(perm, relevant, k), abs=1e-12
        ):
            rank_ok = False

    sims = y @ y.T
    affine_ok = X.interview_pearson(sims, 2.5 * sims + 0.3) == pytest.approx(1.0, abs=1e-9)

    ok = hsic_self_ok and hsic_indep_ok and rank_ok and affine_ok
    _report(
        "8 metrics-oracles", ok,
        f"hsic(Y,Y)={self_hsic:.12f}; max indep hsic {max(indep_vals):.3f}; "
        f"100 ranking permutations matched; affine invariance {affine_ok}",
    )
    assert hsic_self_ok
    assert hsic_indep_ok
    assert rank_ok
    assert affine_ok


def test_criterion_09_determinism(tiny_dataset_dir, tmp_path):
    ckpts = []
    for name in ("d1", "d2"):
        out = tmp_path / name
        code = cli_main([
            "train", "--data-dir", str(tiny_dataset_dir), "--out-dir", str(out),
            "--epochs", "3", "--seed", "13",
        ])
        assert code == 0
        ckpts.append((out / "checkpoint.mvdc").read_bytes())
    train_ok = ckpts[0] == ckpts[1]

    reports = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        code = cli_main([
            "eval", "benchmark", "--data-dir", str(tiny_dataset_dir),
            "--checkpoint", str(tmp_path / "d1" / "checkpoint.mvdc"),
            "--out-dir", str(out), "--collections", "5", "--k", "10",
            "--size-min", "3", "--size-max", "6", "--seed", "4",
        ])
        assert code == 0
        reports.append(
            (out / "benchmark.json").read_bytes() + (out / "benchmark.csv").read_bytes()
        )
    eval_ok = reports[0] == reports[1]

    ok = train_ok and eval_ok
    _report(
        "9 determinism", ok,
        f"checkpoints byte-identical={train_ok}; eval reports byte-identical={eval_ok}",
    )
    assert train_ok
    assert eval_ok


def test_criterion_10_io_round_trips(tmp_path):
    rng = np.random.default_rng(7)
    matrix = rng.standard_normal((9, 6)).astype(np.float32).astype(np.float64)
    write_view_features(matrix, tmp_path / "m.mvdf")
    back, _ = read_view_features(tmp_path / "m.mvdf")
    features_ok = np.array_equal(back, matrix)

    from mvintent.dataio import save_checkpoint, load_checkpoint
    from mvintent.dataio import ViewSpec

    config = M.ModelConfig(views=[ViewSpec("a", 4), ViewSpec("b", 3)],
                           aligned_dim=3, shared_dim=3, aligned_hidden=3, seed=3)
    params = M.init_params(config)
    ckpt = M.Checkpoint(
        model_config=config, params=params, optimizer_state=M.init_adam(params),
        training_history=[{"epoch": 0, "split": "train", "total": 0.5}], rng_seed=3,
    )
    save_checkpoint(ckpt, tmp_path / "c.mvdc")
    reloaded = load_checkpoint(tmp_path / "c.mvdc")
    ckpt_ok = all(np.array_equal(reloaded.params[k], params[k]) for k in params)

    black = lab_histogram(bytes(12), 2, 2)
    white = lab_histogram(bytes([255] * 12), 2, 2)
    half = lab_histogram(bytes([0, 0, 0, 255, 255, 255]), 2, 1)
    black_idx = (0 * 26 + 12) * 26 + 12
    white_idx = (9 * 26 + 12) * 26 + 12
    lab_ok = (
        black[black_idx] == 1.0
        and white[white_idx] == 1.0
        and half[black_idx] == 0.5
        and half[white_idx] == 0.5
    )

    ok = features_ok and ckpt_ok and lab_ok
    _report(
        "10 io-round-trips", ok,
        f"feature file bit-exact={features_ok}; checkpoint bit-exact={ckpt_ok}; "
        f"lab histogram trivial cases={lab_ok}",
    )
    assert features_ok
    assert ckpt_ok
    assert lab_ok
