import numpy as np
import pytest

from nzip import nn
from nzip.errors import DegenerateAlphabet, EmptyInput
from nzip.models import (
    BootstrapConfig,
    BootstrapModel,
    SupporterConfig,
    SupporterModel,
    combine,
    combined_loss,
    select_configs,
)

F = np.float32


class TestConfigSchedule:
    def test_degenerate_alphabets(self):
        with pytest.raises(EmptyInput):
            select_configs(0)
        with pytest.raises(DegenerateAlphabet):
            select_configs(1)

    def test_full_scale_brackets(self):
        expect = {
            2: (8, 8, 16, 1024),
            4: (8, 8, 16, 1024),
            5: (8, 32, 64, 1024),
            31: (8, 32, 64, 1024),
            32: (16, 64, 128, 2048),
            127: (16, 64, 128, 2048),
            128: (16, 128, 256, 2048),
            256: (16, 128, 256, 2048),
        }
        for v, (e, h, d, w) in expect.items():
            boot, sup = select_configs(v)
            assert (boot.E, boot.H, boot.D, sup.width) == (e, h, d, w)
            assert boot.V == sup.V == v
            assert not boot.scaled

    def test_scaled_profile_is_divided_with_floor(self):
        boot, sup = select_configs(256, scaled=True)
        assert (boot.E, boot.H, boot.D, sup.width) == (2, 16, 32, 256)
        boot, sup = select_configs(2, scaled=True)
        assert (boot.E, boot.H, boot.D, sup.width) == (2, 8, 8, 128)

    def test_schedule_is_monotone(self):
        prev = None
        for v in range(2, 257):
            boot, sup = select_configs(v)
            cur = (boot.E, boot.H, boot.D, sup.width)
            if prev is not None:
                assert all(a <= b for a, b in zip(prev, cur))
            prev = cur

    def test_taps_and_widths(self):
        boot, sup = select_configs(2)
        assert boot.taps == (15, 31, 47, 63)
        assert boot.flat_width == 4 * 2 * boot.H
        # K=64, m=16, H=8 -> flattened width 4*16=64
        assert BootstrapConfig(V=2, E=8, H=8, D=16).flat_width == 64
        assert sup.feature_width == 16 * boot.E + 4 * 2 * boot.H

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BootstrapConfig(V=2, E=8, H=8, D=16, K=64, m=12)  # 64 % 12 != 0
        with pytest.raises(ValueError):
            BootstrapConfig(V=2, E=4, H=8, D=16)  # full-scale E below range
        with pytest.raises(ValueError):
            SupporterConfig(V=2, E=8, H=8, K=64, m=16, width=96)  # not a power of 2
        with pytest.raises(ValueError):
            SupporterConfig(V=2, E=8, H=8, K=64, m=16, width=512)  # full scale


def tiny_configs(v=3):
    boot = BootstrapConfig(V=v, E=2, H=2, D=2, K=8, m=4, scaled=True)
    sup = SupporterConfig(V=v, E=2, H=2, K=8, m=4, width=32, scaled=True)
    return boot, sup


class TestBootstrapModel:
    def test_shapes(self):
        boot_cfg, sup_cfg = tiny_configs()
        model = BootstrapModel(boot_cfg, seed=7)
        ctx = np.random.default_rng(0).integers(0, 3, (5, 8)).astype(np.int32)
        with nn.no_grad():
            logits, taps = model.logits(ctx)
        assert logits.shape == (5, 3)
        assert taps.shape == (5, sup_cfg.feature_width)

    def test_zero_params_logits_are_biases(self):
        boot_cfg, _ = tiny_configs()
        model = BootstrapModel(boot_cfg, seed=7)
        model.store.from_vector(np.zeros(model.store.param_count(), dtype=F))
        model.store["lin.b"].data[:] = [0.5, -1.0, 0.25]
        model.store["dense2.b"].data[:] = [0.1, 0.1, 0.1]
        ctx = np.random.default_rng(1).integers(0, 3, (4, 8)).astype(np.int32)
        with nn.no_grad():
            logits, _ = model.logits(ctx)
        for row in logits.data:
            np.testing.assert_allclose(row, [0.6, -0.9, 0.35], atol=1e-7)

    def test_batch_permutation_equivariance(self):
        boot_cfg, _ = tiny_configs()
        model = BootstrapModel(boot_cfg, seed=11)
        rng = np.random.default_rng(2)
        ctx = rng.integers(0, 3, (6, 8)).astype(np.int32)
        perm = rng.permutation(6)
        with nn.no_grad():
            base, _ = model.logits(ctx)
            permuted, _ = model.logits(ctx[perm])
        np.testing.assert_array_equal(base.data[perm], permuted.data)

    def test_seed_determinism(self):
        boot_cfg, _ = tiny_configs()
        a = BootstrapModel(boot_cfg, seed=99).store.to_vector()
        b = BootstrapModel(boot_cfg, seed=99).store.to_vector()
        c = BootstrapModel(boot_cfg, seed=100).store.to_vector()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_pipeline_gradients_match_finite_differences(self):
        # wiring check: perturb a few tensors end-to-end through the loss
        boot_cfg, _ = tiny_configs()
        model = BootstrapModel(boot_cfg, seed=13)
        ctx = np.random.default_rng(3).integers(0, 3, (2, 8)).astype(np.int32)
        targets = np.array([1, 2])

        def loss_value():
            logits, _ = model.logits(ctx)
            return nn.softmax_cross_entropy(logits, targets)

        probe = ["emb", "g1f.Wxc", "g2b.Whg", "lin.W", "dense1.W", "dense2.b"]
        loss = loss_value()
        model.store.zero_grads()
        nn.backward(loss)
        h = 1e-2
        for name in probe:
            t = model.store[name]
            flat = t.data.ravel()
            ana = t.grad.ravel()
            for i in range(0, flat.size, max(1, flat.size // 3)):
                keep = flat[i]
                flat[i] = keep + h
                up = float(loss_value().data)
                flat[i] = keep - h
                down = float(loss_value().data)
                flat[i] = keep
                num = (up - down) / (2 * h)
                assert abs(num - float(ana[i])) / max(abs(num), abs(float(ana[i])), 1e-2) < 2e-3, name


class TestSupporterModel:
    def test_zero_params_zero_logits(self):
        _, sup_cfg = tiny_configs()
        model = SupporterModel(sup_cfg, seed=5)
        model.store.from_vector(np.zeros(model.store.param_count(), dtype=F))
        feats = nn.Tensor(np.random.default_rng(4).normal(0, 1, (3, sup_cfg.feature_width)))
        with nn.no_grad():
            out = model.logits(feats)
        np.testing.assert_array_equal(out.data, np.zeros((3, 3)))

    def test_subnets_are_additive(self):
        _, sup_cfg = tiny_configs()
        model = SupporterModel(sup_cfg, seed=5)
        rng = np.random.default_rng(5)
        feats_np = rng.normal(0, 1, (4, sup_cfg.feature_width)).astype(F)
        feats = nn.Tensor(feats_np)
        # zero everything but the linear sub-network
        for name, t in model.store.items():
            if name.startswith(("ff", "res")):
                t.data[:] = 0
        with nn.no_grad():
            got = model.logits(feats).data
        s = model.store
        want = (feats_np @ s["lin.W"].data + s["lin.b"].data) @ s["lin_down.W"].data + s["lin_down.b"].data
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_output_width_is_v(self):
        for v in (2, 7):
            sup_cfg = SupporterConfig(V=v, E=2, H=2, K=8, m=4, width=32, scaled=True)
            model = SupporterModel(sup_cfg, seed=6)
            feats = nn.Tensor(np.zeros((2, sup_cfg.feature_width), dtype=F))
            with nn.no_grad():
                assert model.logits(feats).shape == (2, v)

    def test_theta_initial_bias_toward_stored_model(self):
        _, sup_cfg = tiny_configs()
        model = SupporterModel(sup_cfg, seed=7)
        assert float(model.theta.data[0]) == pytest.approx(2.0)


class TestCombination:
    def test_theta_zero_is_mean(self):
        b = nn.Tensor(np.array([[1.0, 3.0]], dtype=F))
        s = nn.Tensor(np.array([[2.0, 0.0]], dtype=F))
        mix = combine(b, s, nn.Tensor(np.array([0.0], dtype=F)))
        assert mix.lam == pytest.approx(0.5)
        np.testing.assert_allclose(mix.logits_c.data, [[1.5, 1.5]])

    def test_saturated_theta(self):
        b = nn.Tensor(np.array([[1.0, 3.0]], dtype=F))
        s = nn.Tensor(np.array([[9.0, -9.0]], dtype=F))
        mix = combine(b, s, nn.Tensor(np.array([20.0], dtype=F)))
        np.testing.assert_allclose(mix.logits_c.data, b.data, atol=1e-6)

    def test_equal_logits_fixed_point(self):
        b = nn.Tensor(np.array([[0.4, -0.4]], dtype=F))
        for th in (-5.0, 0.0, 2.0):
            mix = combine(b, b, nn.Tensor(np.array([th], dtype=F)))
            np.testing.assert_allclose(mix.logits_c.data, b.data, rtol=1e-6)
            assert 0.0 < mix.lam < 1.0

    def test_combined_loss_uniform(self):
        z = nn.Tensor(np.zeros((1, 4), dtype=F), requires_grad=True)
        mix = combine(z, z, nn.Tensor(np.array([0.0], dtype=F)))
        loss = combined_loss(mix, np.array([1]))
        # two uniform cross-entropies over 4 symbols: 2 + 2 bits
        assert float(loss.data) / np.log(2) == pytest.approx(4.0, rel=1e-5)

    def test_combined_loss_perfect(self):
        logits = np.full((1, 3), -30.0, dtype=F)
        logits[0, 2] = 30.0
        t = nn.Tensor(logits)
        mix = combine(t, t, nn.Tensor(np.array([0.0], dtype=F)))
        assert float(combined_loss(mix, np.array([2])).data) == pytest.approx(0.0, abs=1e-5)

    def test_bootstrap_frozen_during_combined_update(self):
        boot_cfg, sup_cfg = tiny_configs()
        boot = BootstrapModel(boot_cfg, seed=21)
        sup = SupporterModel(sup_cfg, seed=22)
        ctx = np.random.default_rng(6).integers(0, 3, (4, 8)).astype(np.int32)
        before = boot.store.to_vector().copy()

        with nn.no_grad():
            logits_b, taps = boot.logits(ctx)
        feats = nn.Tensor(taps.data)  # detached features, as the codec feeds them
        logits_s = sup.logits(feats)
        mix = combine(nn.Tensor(logits_b.data), logits_s, sup.theta)
        loss = combined_loss(mix, np.array([0, 1, 2, 0]))
        sup.store.zero_grads()
        nn.backward(loss)
        nn.clip_gradients(sup.store, 1.0)
        sup_before = sup.store.to_vector().copy()
        nn.adam_step(sup.store, nn.AdamConfig(lr=5e-4, beta1=0.0))

        np.testing.assert_array_equal(boot.store.to_vector(), before)
        assert not np.array_equal(sup.store.to_vector(), sup_before)
        lam = 1.0 / (1.0 + np.exp(-float(sup.theta.data[0])))
        assert 0.0 < lam < 1.0

    def test_theta_receives_gradient(self):
        _, sup_cfg = tiny_configs()
        sup = SupporterModel(sup_cfg, seed=23)
        b = nn.Tensor(np.array([[2.0, -1.0, 0.5]], dtype=F))
        s_logits = nn.Tensor(np.array([[-1.0, 1.0, 0.0]], dtype=F), requires_grad=True)
        mix = combine(b, s_logits, sup.theta)
        sup.store.zero_grads()
        nn.backward(combined_loss(mix, np.array([1])))
        assert abs(float(sup.theta.grad[0])) > 0
