import math

import numpy as np
import pytest

from hamr import diffmodel as dm
from hamr import metastep as ms
from hamr.errors import ConfigError
from hamr.weightnet import WeightNetParams, forward_weights, zscore_normalize
from oracles import central_difference, rel_error


def small_instance(seed, n=4, C=3, d=2, n_meta=6, H=64, theta_scale=0.3):
    rng = np.random.default_rng(seed)
    phi = dm.TaskModelParams.init(C, d, 0, rng, scale=1.0)
    batch = dm.Batch.from_examples([dm.Example(rng.normal(size=d), rng.integers(0, C), i) for i in range(n)])
    meta = dm.Batch.from_examples([dm.Example(rng.normal(size=d), rng.integers(0, C), 100 + i)
                                   for i in range(n_meta)])
    theta = WeightNetParams(rng.normal(0, theta_scale, 3 * H + 1), H)
    return phi, batch, meta, theta


def meta_objective(phi, grads, z, meta, alpha):
    def f(theta_flat):
        w = forward_weights(WeightNetParams(theta_flat, (theta_flat.size - 1) // 3), z)
        return ms.meta_loss(ms.inner_step(phi, grads, w, alpha), meta)
    return f


class TestBuildMetaSet:
    @staticmethod
    def layout(val_counts, train_counts):
        classes, train, valid = [], [], []
        for c, (nv, nt) in enumerate(zip(val_counts, train_counts)):
            for _ in range(nt):
                train.append(len(classes))
                classes.append(c)
            for _ in range(nv):
                valid.append(len(classes))
                classes.append(c)
        return np.array(classes), np.array(train), np.array(valid)

    def test_already_balanced(self):
        classes, train, valid = self.layout((10, 10, 10), (20, 20, 20))
        meta = ms.build_meta_set(classes, train, valid, 3, seed=0)
        assert sorted(meta.example_ids.tolist()) == sorted(valid.tolist())
        assert set(meta.source) == {ms.VALIDATION}

    def test_topup_to_median(self):
        classes, train, valid = self.layout((2, 10, 30), (50, 50, 50))
        meta = ms.build_meta_set(classes, train, valid, 3, seed=0)
        counts = np.bincount(classes[meta.example_ids], minlength=3)
        assert counts.tolist() == [10, 10, 30]
        assert meta.source.count(ms.TRAIN_TOPUP) == 8
        topped = meta.example_ids[np.array(meta.source) == ms.TRAIN_TOPUP]
        assert set(topped) <= set(train) and np.all(classes[topped] == 0)

    def test_availability_clamp(self):
        classes, train, valid = self.layout((2, 10, 30), (3, 50, 50))
        meta = ms.build_meta_set(classes, train, valid, 3, seed=0)
        assert np.bincount(classes[meta.example_ids], minlength=3)[0] == 5

    def test_deterministic_and_no_duplicates(self):
        classes, train, valid = self.layout((1, 4, 9, 9), (30, 30, 30, 30))
        a = ms.build_meta_set(classes, train, valid, 4, seed=7)
        b = ms.build_meta_set(classes, train, valid, 4, seed=7)
        np.testing.assert_array_equal(a.example_ids, b.example_ids)
        assert len(set(a.example_ids.tolist())) == len(a)
        assert set(valid) <= set(a.example_ids.tolist())

    def test_empty_validation(self):
        with pytest.raises(ConfigError):
            ms.build_meta_set(np.array([0, 1]), np.array([0, 1]), np.array([], dtype=int), 2)


class TestSteps:
    def test_zero_weights_leave_phi(self):
        phi, batch, _, _ = small_instance(0)
        _, G = dm.batch_gradients(phi, batch)
        np.testing.assert_array_equal(ms.inner_step(phi, G, np.zeros(batch.size), 0.5).flat, phi.flat)

    def test_unit_weights_are_plain_sgd(self):
        phi, batch, _, _ = small_instance(1)
        _, G = dm.batch_gradients(phi, batch)
        _, gmean = dm.mean_loss_and_gradient(phi, batch)
        got = ms.inner_step(phi, G, np.ones(batch.size), 0.1)
        np.testing.assert_allclose(got.flat, phi.flat - 0.1 * batch.size * gmean, atol=1e-14)

    def test_linearity_of_weighted_sum(self):
        phi, batch, _, _ = small_instance(2, n=2)
        _, G = dm.batch_gradients(phi, batch)
        got = ms.inner_step(phi, G, np.array([2.0, 0.0]), 0.1)
        np.testing.assert_allclose(got.flat, phi.flat - 0.1 * 2 * G[0], atol=1e-15)

    def test_meta_loss_values(self):
        C = 4
        uniform = dm.TaskModelParams.from_arrays(np.zeros((C, 2)), np.zeros(C))
        meta = dm.Batch.from_examples([dm.Example([1.0, 2.0], 1, 0), dm.Example([0.0, -1.0], 3, 1)])
        assert ms.meta_loss(uniform, meta) == pytest.approx(math.log(C))
        # logits (x, 0) with label 1: CE = log(1 + e^x)
        phi = dm.TaskModelParams.from_arrays([[1.0], [0.0]], [0.0, 0.0])
        xs = [math.log(math.expm1(0.4)), math.log(math.expm1(1.0))]
        meta = dm.Batch.from_examples([dm.Example([x], 1, i) for i, x in enumerate(xs)])
        assert ms.meta_loss(phi, meta) == pytest.approx(0.7)
        one = dm.Batch.from_examples([dm.Example([xs[0]], 1, 0)])
        assert ms.meta_loss(phi, one) == pytest.approx(0.4)

    def test_meta_update(self):
        theta = WeightNetParams.from_arrays([0.3], [0.0], [0.0], 0.0)
        out = ms.meta_update(theta, [1.0, 0.0, 0.0, 0.0], 0.1)
        assert out.flat[0] == pytest.approx(0.2)
        np.testing.assert_array_equal(ms.meta_update(theta, np.zeros(4), 0.1).flat, theta.flat)
        with pytest.raises(ConfigError):
            ms.meta_update(theta, np.zeros(4), 0.0)

    def test_outer_equals_inner_for_equal_weights(self):
        phi, batch, _, _ = small_instance(3)
        _, G = dm.batch_gradients(phi, batch)
        w = np.array([0.5, 1.5, 1.0, 1.0])
        np.testing.assert_array_equal(ms.outer_step(phi, G, w, 0.2).flat, ms.inner_step(phi, G, w, 0.2).flat)

    def test_outer_differs_when_post_differs(self):
        phi, batch, _, _ = small_instance(4, n=2)
        _, G = dm.batch_gradients(phi, batch)
        a = ms.inner_step(phi, G, [1.0, 1.0], 0.2)
        b = ms.outer_step(phi, G, [1.5, 0.5], 0.2)
        assert not np.allclose(a.flat, b.flat)


class TestMetaGradient:
    def test_batch_of_one_is_zero(self):
        phi, batch, meta, theta = small_instance(5, n=1)
        _, G = dm.batch_gradients(phi, batch)
        g = ms.meta_gradient(phi, G, zscore_normalize([0.3]), theta, 0.5, meta)
        np.testing.assert_allclose(g, 0.0, atol=1e-15)

    def test_zero_alpha_is_zero(self):
        phi, batch, meta, theta = small_instance(6)
        losses, G = dm.batch_gradients(phi, batch)
        g = ms.meta_gradient(phi, G, zscore_normalize(losses), theta, 0.0, meta)
        np.testing.assert_array_equal(g, 0.0)

    @pytest.mark.parametrize("seed", range(25))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, C, d = int(rng.integers(2, 9)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
        phi, batch, meta, theta = small_instance(seed, n=n, C=C, d=d)
        losses, G = dm.batch_gradients(phi, batch)
        z = zscore_normalize(losses)
        w = forward_weights(theta, z).normalized
        if np.any((w < 0.06) | (w > 9.5)):
            pytest.skip("instance sits on a clip boundary")
        alpha = 0.5
        g = ms.meta_gradient(phi, G, z, theta, alpha, meta)
        fd = central_difference(meta_objective(phi, G, z, meta, alpha), theta.flat)
        assert rel_error(g, fd) < 1e-3

    def test_descent_property(self):
        successes = 0
        for seed in range(50):
            phi, batch, meta, theta = small_instance(1000 + seed, n=6)
            losses, G = dm.batch_gradients(phi, batch)
            z = zscore_normalize(losses)
            alpha, beta = 0.05, 1e-2
            f = meta_objective(phi, G, z, meta, alpha)
            before = f(theta.flat)
            g = ms.meta_gradient(phi, G, z, theta, alpha, meta)
            after = f(ms.meta_update(theta, g, beta).flat)
            successes += after <= before + 1e-9
        assert successes >= 45


class TestHamrStep:
    def test_order_and_replay(self):
        phi, batch, meta, theta = small_instance(9, n=5)
        kw = dict(alpha=0.3, beta=0.5, inner_lr=0.2)
        a = ms.hamr_step(phi, theta, batch, meta, **kw)
        assert a.trace.events == ["pre_weights", "inner_step", "meta_step", "post_weights", "outer_step"]
        b = ms.hamr_step(phi, theta, batch, meta, **kw)
        np.testing.assert_array_equal(a.phi.flat, b.phi.flat)
        np.testing.assert_array_equal(a.theta.flat, b.theta.flat)
        np.testing.assert_array_equal(a.trace.post_weights.values, b.trace.post_weights.values)

    def test_trace_consistency(self):
        phi, batch, meta, theta = small_instance(10, n=5)
        r = ms.hamr_step(phi, theta, batch, meta, alpha=0.3, beta=0.5, inner_lr=0.2)
        losses, G = dm.batch_gradients(phi, batch)
        np.testing.assert_array_equal(
            r.trace.virtual_params.flat,
            dm.apply_step(phi, r.trace.pre_weights.values @ G, 0.2).flat)
        z = zscore_normalize(losses)
        post = forward_weights(r.theta, z).normalized_clipped
        np.testing.assert_array_equal(r.trace.post_weights.values, post)
        np.testing.assert_array_equal(r.phi.flat, dm.apply_step(phi, post @ G, 0.3).flat)
