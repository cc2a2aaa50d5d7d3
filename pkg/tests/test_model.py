import numpy as np
import pytest

from mvintent import model as M
from mvintent.dataio import ViewSpec, load_checkpoint, save_checkpoint
from mvintent.errors import DimensionMismatchError, EmptyInputError
from mvintent.numerics import row_normalize

from oracles import finite_difference_gradients, make_gradcheck_fixture


def _views(dims=(5, 4, 3)):
    return [ViewSpec(n, d) for n, d in zip(("a", "b", "c"), dims)]


def _config(**kw):
    defaults = dict(views=_views(), aligned_dim=4, shared_dim=4, aligned_hidden=4,
                    epochs=2, seed=0)
    defaults.update(kw)
    return M.ModelConfig(**defaults)


def _unit_batch(config, rows, seed=0):
    rng = np.random.default_rng(seed)
    return {
        v.name: row_normalize(rng.standard_normal((rows, v.input_dim)))[0]
        for v in config.views
    }


class TestConfigAndInit:
    def test_hidden_defaults(self):
        cfg = M.ModelConfig(views=_views((40, 8, 3)))
        assert cfg.specific_hidden == {"a": 40, "b": 32, "c": 32}
        assert cfg.recon_hidden == {"a": 40, "b": 32, "c": 32}

    def test_config_round_trip(self):
        cfg = _config()
        assert M.ModelConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()

    def test_same_seed_bit_identical(self):
        cfg = _config()
        p1 = M.init_params(cfg)
        p2 = M.init_params(cfg)
        assert all(np.array_equal(p1[k], p2[k]) for k in p1)

    def test_different_seeds_differ(self):
        cfg = _config()
        p1 = M.init_params(cfg, seed=1)
        p2 = M.init_params(cfg, seed=2)
        assert any(not np.array_equal(p1[k], p2[k]) for k in p1)

    def test_glorot_bound(self):
        views = [ViewSpec("a", 100)]
        cfg = M.ModelConfig(views=views, specific_hidden={"a": 100},
                            recon_hidden={"a": 100})
        params = M.init_params(cfg)
        w = params["spec.a.w1"]  # fan_in = fan_out = 100
        bound = np.sqrt(6.0 / 200.0)
        assert np.abs(w).max() <= bound
        assert params["spec.a.b1"].tolist() == [0.0] * 100

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            M.LossWeights(-1.0, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            M.LossWeights(0.0, 0.0, 0.0, 0.0)


class TestForward:
    def test_unit_norm_outputs(self):
        cfg = _config()
        params = M.init_params(cfg)
        out = M.forward(cfg, params, _unit_batch(cfg, 6))
        for name in cfg.view_names:
            assert np.allclose(np.linalg.norm(out.z_p[name], axis=1), 1.0, atol=1e-9)
            assert np.allclose(np.linalg.norm(out.z_a[name], axis=1), 1.0, atol=1e-9)

    def test_zero_params_propagate_degenerate_zeros(self):
        cfg = _config()
        params = {k: np.zeros_like(p) for k, p in M.init_params(cfg).items()}
        out = M.forward(cfg, params, _unit_batch(cfg, 3))
        for name in cfg.view_names:
            assert out.degenerate_specific[name] == [0, 1, 2]
            assert np.array_equal(out.z_p[name], np.zeros_like(out.z_p[name]))

    def test_batch_independence(self):
        cfg = _config()
        params = M.init_params(cfg)
        batch = _unit_batch(cfg, 64, seed=3)
        full = M.forward(cfg, params, batch)
        row = 17
        single = M.forward(cfg, params, {k: m[row : row + 1] for k, m in batch.items()})
        for name in cfg.view_names:
            assert np.allclose(single.z_p[name][0], full.z_p[name][row], atol=1e-12)
            assert np.allclose(single.x_bar[name][0], full.x_bar[name][row], atol=1e-12)

    def test_dim_mismatch(self):
        cfg = _config()
        params = M.init_params(cfg)
        batch = _unit_batch(cfg, 4)
        batch["a"] = batch["a"][:, :-1]
        with pytest.raises(DimensionMismatchError):
            M.forward(cfg, params, batch)

    def test_embed_matches_forward(self):
        cfg = _config()
        params = M.init_params(cfg)
        batch = _unit_batch(cfg, 5)
        out = M.forward(cfg, params, batch)
        z_p, z_a = M.embed(cfg, params, batch)
        for name in cfg.view_names:
            assert np.array_equal(z_p[name], out.z_p[name])
            assert np.array_equal(z_a[name], out.z_a[name])


class TestLossClosedForms:
    def test_alignment_identical_is_zero(self):
        z = np.eye(4)[:, :3]
        z, _ = row_normalize(z + 0.1)
        assert M.loss_alignment({"a": z, "b": z.copy(), "c": z.copy()}) == pytest.approx(0.0, abs=1e-15)

    def test_alignment_antialigned_is_two(self):
        z = np.tile(np.array([[1.0, 0.0, 0.0]]), (4, 1))
        assert M.loss_alignment({"a": z, "b": -z}) == 2.0

    def test_specific_orthogonal_zero(self):
        # columns of Za and Zb are orthogonal as batch-space vectors
        za = np.array([[1.0, 0.0], [1.0, 0.0]])
        zb = np.array([[0.0, 1.0], [0.0, -1.0]])
        assert M.loss_specific({"a": za, "b": zb}) == 0.0

    def test_specific_rank_one_closed_form(self):
        d = 4
        z = np.zeros((1, d))
        z[0, 0] = 1.0
        assert M.loss_specific({"a": z, "b": z.copy()}) == 1.0 / d**2

    def test_info_identity_zero_and_antiparallel_two(self):
        x = np.eye(3)
        assert M.loss_info({"a": x}, {"a": x.copy()}) == 0.0
        assert M.loss_info({"a": x}, {"a": -x}) == 2.0

    def test_recon_zero_and_constant_offset(self):
        x = np.ones((5, 3))
        assert M.loss_recon({"a": x.copy()}, {"a": x}) == 0.0
        assert M.loss_recon({"a": x + 2.0}, {"a": x}) == 4.0

    def test_total_weighted_arithmetic(self):
        w = M.LossWeights(0.001, 0.05, 0.001, 0.0001)
        total = 0.001 * 1 + 0.05 * 1 + 0.001 * 1 + 0.0001 * 1
        bd = M.LossBreakdown(ali=1, spc=1, inf=1, rec=1, total=total)
        assert bd.total == pytest.approx(0.0521, abs=1e-15)
        # and total_loss computes exactly that weighted sum
        x = np.eye(2)
        out = M.ForwardOutputs(
            z_p={"a": -x}, z_a={"a": x}, x_bar={"a": x + 2.0}, u=x,
            degenerate_specific={}, degenerate_aligned={},
        )
        got = M.total_loss({"a": x}, out, w)
        assert got.total == w.lambda1 * got.ali + w.lambda2 * got.spc + w.lambda3 * got.inf + w.lambda4 * got.rec


class TestLossOracles:
    def test_alignment_matches_per_row_cosine_oracle(self):
        # (B - trace(Za Za'^T)) equals the row sum of (1 - cosine)
        rng = np.random.default_rng(0)
        z = {n: row_normalize(rng.standard_normal((6, 4)))[0] for n in "abc"}
        expected = 0.0
        names = list(z)
        for i, m in enumerate(names):
            for m2 in names[i + 1 :]:
                expected += sum(1.0 - float(z[m][r] @ z[m2][r]) for r in range(6))
        expected /= 6
        assert M.loss_alignment(z) == pytest.approx(expected, rel=1e-12)

    def test_specific_matches_naive_double_loop(self):
        rng = np.random.default_rng(1)
        z = {n: row_normalize(rng.standard_normal((5, d)))[0]
             for n, d in zip("ab", (4, 3))}
        cross = np.zeros((4, 3))
        for k in range(4):
            for l in range(3):
                cross[k, l] = sum(z["a"][i, k] * z["b"][i, l] for i in range(5))
        expected = (cross**2).sum() / (4 * 3)
        assert M.loss_specific(z) == pytest.approx(expected, rel=1e-12)

    def test_info_matches_per_row_oracle(self):
        rng = np.random.default_rng(2)
        x = {n: row_normalize(rng.standard_normal((7, 3)))[0] for n in "ab"}
        z = {n: row_normalize(rng.standard_normal((7, 3)))[0] for n in "ab"}
        expected = sum(
            np.mean([1.0 - float(x[n][i] @ z[n][i]) for i in range(7)]) for n in x
        )
        assert M.loss_info(x, z) == pytest.approx(expected, rel=1e-12)

    def test_recon_matches_entrywise_oracle(self):
        rng = np.random.default_rng(3)
        x = {"a": rng.standard_normal((4, 5))}
        xb = {"a": rng.standard_normal((4, 5))}
        expected = sum(
            (xb["a"][i, j] - x["a"][i, j]) ** 2 for i in range(4) for j in range(5)
        ) / (4 * 5)
        assert M.loss_recon(xb, x) == pytest.approx(expected, rel=1e-12)

    def test_row_duplication_scaling(self):
        rng = np.random.default_rng(4)
        x = {n: row_normalize(rng.standard_normal((5, 4)))[0] for n in "ab"}
        z = {n: row_normalize(rng.standard_normal((5, 4)))[0] for n in "ab"}
        xb = {n: rng.standard_normal((5, 4)) for n in "ab"}
        dup = lambda d: {k: np.vstack([m, m]) for k, m in d.items()}
        assert M.loss_alignment(dup(z)) == pytest.approx(M.loss_alignment(z), rel=1e-12)
        assert M.loss_info(dup(x), dup(z)) == pytest.approx(M.loss_info(x, z), rel=1e-12)
        assert M.loss_recon(dup(xb), dup(x)) == pytest.approx(M.loss_recon(xb, x), rel=1e-12)
        assert M.loss_specific(dup(z)) == pytest.approx(4.0 * M.loss_specific(z), rel=1e-12)


class TestBackward:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_matches_finite_differences(self, seed):
        cfg, params, batch = make_gradcheck_fixture(seed)
        grads, _, _ = M.backward(cfg, params, batch)
        numeric = finite_difference_gradients(cfg, params, batch)
        for key in params:
            a, n = grads[key], numeric[key]
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
            assert rel.max() <= 1e-5, f"{key}: rel err {rel.max():.2e}"

    def test_mse_only_reduces_to_autoencoder_gradient(self):
        # With only the reconstruction term active, parameters that cannot
        # influence x_bar (the whole pathway feeding z_a is still live) get
        # gradients, but the specific pathway's gradient must match the MSE
        # chain rule through the reconstruction head alone.
        cfg = _config(loss_weights=M.LossWeights(0.0, 0.0, 0.0, 1.0))
        params = M.init_params(cfg)
        batch = _unit_batch(cfg, 4, seed=9)
        grads, bd, _ = M.backward(cfg, params, batch)
        assert bd.total == pytest.approx(bd.rec, rel=1e-12)
        numeric = finite_difference_gradients(cfg, params, batch)
        for key in params:
            a, n = grads[key], numeric[key]
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
            assert rel.max() <= 1e-5

    def test_zero_gradient_through_degenerate_rows(self):
        cfg = _config()
        params = M.init_params(cfg)
        # Kill the specific pathway of view a: all pre-norm outputs are zero,
        # so nothing may flow back into its weights.
        for key in ("spec.a.w1", "spec.a.b1", "spec.a.w2", "spec.a.b2"):
            params[key] = np.zeros_like(params[key])
        grads, _, out = M.backward(cfg, params, _unit_batch(cfg, 4))
        assert out.degenerate_specific["a"] == [0, 1, 2, 3]
        assert np.array_equal(grads["spec.a.w2"], np.zeros_like(grads["spec.a.w2"]))
        assert np.array_equal(grads["spec.a.b2"], np.zeros_like(grads["spec.a.b2"]))


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        cfg = _config()
        params = M.init_params(cfg)
        grads = {k: np.zeros_like(p) for k, p in params.items()}
        state = M.init_adam(params)
        new_params, new_state = M.adam_step(params, grads, state, lr=0.01)
        assert all(np.array_equal(new_params[k], params[k]) for k in params)
        assert new_state.step == 1

    def test_first_step_closed_form(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.array([0.5, -0.25])}
        state = M.AdamState(m={"w": np.zeros(2)}, v={"w": np.zeros(2)}, step=0)
        new_params, _ = M.adam_step(params, grads, state, lr=0.1)
        g = grads["w"]
        expected = params["w"] - 0.1 * g / (np.abs(g) + 1e-8)
        assert np.allclose(new_params["w"], expected, atol=1e-9)

    def test_quadratic_bowl_monotone_after_warmup(self):
        params = {"x": np.array([5.0, -3.0, 2.0])}
        state = M.AdamState(m={"x": np.zeros(3)}, v={"x": np.zeros(3)}, step=0)
        losses = []
        for _ in range(100):
            grads = {"x": params["x"].copy()}  # grad of 0.5 ||x||^2
            params, state = M.adam_step(params, grads, state, lr=0.05)
            losses.append(0.5 * float(params["x"] @ params["x"]))
        assert all(b <= a + 1e-12 for a, b in zip(losses[10:], losses[11:]))
        assert losses[-1] < losses[0]


def _toy_trainable_dataset(n=40, seed=0):
    from mvintent.dataio import MultiViewDataset

    rng = np.random.default_rng(seed)
    views = _views((5, 4, 3))
    feats = {
        v.name: row_normalize(rng.standard_normal((n, v.input_dim)))[0] for v in views
    }
    splits = ["train"] * (n - 10) + ["val"] * 6 + ["test"] * 4
    return MultiViewDataset(
        views=views,
        features=feats,
        item_ids=[f"t{i:03d}" for i in range(n)],
        labels=[{} for _ in range(n)],
        splits=splits,
    )


class TestTrain:
    def test_empty_train_split_errors(self):
        ds = _toy_trainable_dataset()
        ds.splits = ["val"] * ds.n_items
        with pytest.raises(EmptyInputError):
            M.train(ds, _config())

    def test_lr_zero_keeps_params(self):
        ds = _toy_trainable_dataset()
        cfg = _config(epochs=1, learning_rate=0.0, batch_size=8)
        result = M.train(ds, cfg)
        init = M.init_params(cfg)
        assert all(np.array_equal(result.checkpoint.params[k], init[k]) for k in init)

    def test_same_seed_bitwise_deterministic(self):
        ds = _toy_trainable_dataset()
        cfg = _config(epochs=3, batch_size=8)
        r1 = M.train(ds, cfg)
        r2 = M.train(ds, cfg)
        assert r1.history == r2.history
        assert all(
            np.array_equal(r1.checkpoint.params[k], r2.checkpoint.params[k])
            for k in r1.checkpoint.params
        )

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        # One batch per epoch, so three epochs = three optimizer steps.
        ds = _toy_trainable_dataset()
        base = dict(views=_views(), aligned_dim=4, shared_dim=4, aligned_hidden=4,
                    batch_size=64, seed=7)
        full = M.train(ds, M.ModelConfig(epochs=5, **base))
        part = M.train(ds, M.ModelConfig(epochs=3, **base))
        save_checkpoint(part.checkpoint, tmp_path / "part.mvdc")
        reloaded = load_checkpoint(tmp_path / "part.mvdc")
        resumed = M.train(ds, M.ModelConfig(epochs=5, **base), resume=reloaded)
        for k in full.checkpoint.params:
            assert np.array_equal(full.checkpoint.params[k], resumed.checkpoint.params[k])
        assert full.history == resumed.history

    def test_history_records_train_and_val(self):
        ds = _toy_trainable_dataset()
        result = M.train(ds, _config(epochs=2, batch_size=16))
        splits = [(h["epoch"], h["split"]) for h in result.history]
        assert splits == [(0, "train"), (0, "val"), (1, "train"), (1, "val")]
        assert result.best_checkpoint.best_epoch in (0, 1)

    def test_save_train_result_writes_files(self, tmp_path):
        ds = _toy_trainable_dataset()
        result = M.train(ds, _config(epochs=1, batch_size=16))
        M.save_train_result(result, tmp_path)
        assert (tmp_path / "checkpoint.mvdc").exists()
        assert (tmp_path / "checkpoint_best.mvdc").exists()
        assert (tmp_path / "history.jsonl").exists()

    def test_no_orthogonalization_preserves_similarity_structure(self):
        # With the cross-view penalty off, trained view-specific codes keep
        # the input neighborhood structure almost perfectly.
        from mvintent import metrics as X
        from mvintent import simulator as S

        ds = S.generate_synthetic(
            S.SyntheticConfig(
                n_items=200, view_dims=(12, 10, 8), class_counts=(3, 3, 2),
                shared_latent_dim=6, seed=2,
            )
        )
        cfg = M.ModelConfig(
            views=list(ds.views), aligned_dim=8, shared_dim=8, aligned_hidden=8,
            loss_weights=M.LossWeights(lambda2=0.0), epochs=3000, seed=2,
        )
        result = M.train(ds, cfg)
        z_p, _ = M.embed(cfg, result.checkpoint.params, ds.features)
        for view in ds.view_names:
            sims_in = ds.features[view] @ ds.features[view].T
            sims_out = z_p[view] @ z_p[view].T
            assert X.interview_pearson(sims_in, sims_out) >= 0.95
