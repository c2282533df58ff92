"""Tests for the model zoo: construction, conservation, mixture head."""

import numpy as np
import pytest

from wipunet import engine as en
from wipunet.engine import ShapeError, Tensor
from wipunet.layers import make_sigma_channel
from wipunet.models import (
    ARCH_NAMES,
    SIGMA_AWARE_ARCHS,
    IdentityModel,
    ModelSpec,
    build,
    describe,
    forward_punetpp,
    forward_residual,
    param_checksum,
)
from wipunet.rng import Rng

from oracles import check_gradients, sample_coords


def rand_image(seed, n=1, hw=16):
    rng = np.random.default_rng(seed)
    return Tensor(rng.random((n, 3, hw, hw), dtype=np.float32))


def randomize(model, seed):
    """Overwrite every parameter with noise so zero-init layers become live."""
    rng = Rng(seed)
    for _, p in model.named_parameters():
        p.data[:] = (0.1 * rng.normal(p.shape)).astype(np.float32)
    return model


def forward_any(model, y, sigma=25.0):
    smap = make_sigma_channel(y.shape[0], y.shape[2], y.shape[3], sigma) if model.sigma_aware else None
    return model(y, sigma_map=smap)


class TestModelSpec:
    def test_unknown_arch_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec(arch="resnet")

    def test_sigma_aware_partition(self):
        aware = {a for a in ARCH_NAMES if ModelSpec(arch=a).sigma_aware}
        assert aware == {"ffdnet", "punet_g", "wipunet2", "wipunet"}
        assert aware == set(SIGMA_AWARE_ARCHS)

    @pytest.mark.parametrize("width", [8, 16, 32, 64])
    def test_every_arch_constructible(self, width):
        for arch in ARCH_NAMES:
            build(ModelSpec(arch=arch, base_width=width, seed=1))

    def test_width_too_small_for_se(self):
        with pytest.raises(ValueError):
            build(ModelSpec(arch="wipunet3", base_width=4))


class TestBuild:
    def test_rebuild_gives_identical_checksum(self):
        spec = ModelSpec(arch="wipunet", base_width=16)
        assert param_checksum(build(spec)) == param_checksum(build(spec))

    def test_seed_changes_parameters(self):
        a = param_checksum(build(ModelSpec(arch="unet", base_width=8, seed=1)))
        b = param_checksum(build(ModelSpec(arch="unet", base_width=8, seed=2)))
        assert a != b

    def test_input_channels_follow_sigma_awareness(self):
        w2 = build(ModelSpec(arch="wipunet2", base_width=8))
        w1 = build(ModelSpec(arch="wipunet1", base_width=8))
        assert w2.backbone.enc[0].conv1.w.shape[1] == 4
        assert w1.backbone.enc[0].conv1.w.shape[1] == 3

    def test_full_model_has_more_parameters_than_variant1(self):
        full = build(ModelSpec(arch="wipunet", base_width=16)).param_count()
        v1 = build(ModelSpec(arch="wipunet1", base_width=16)).param_count()
        assert full > v1

    def test_parameter_count_regressions(self):
        """Frozen counts for the width-16 zoo; changes mean the plans moved."""
        counts = {
            "dncnn": 14803,
            "simple_pu_cnn": 14803,
            "unet": 130259,
            "wipunet1": 130259,
            "ffdnet": 130403,
            "wipunet2": 130403,
            "wipunet3": 130633,
            "wipunet4": 168899,
            "punet_g": 169043,
            "wipunet": 169417,
            "punet_pp": 28377,
        }
        for arch, want in counts.items():
            got = build(ModelSpec(arch=arch, base_width=16)).param_count()
            assert got == want, f"{arch}: {got} != {want}"

    def test_structural_twins(self):
        """Residual subtraction everywhere makes some ablation rows coincide."""
        for a, b in (("unet", "wipunet1"), ("ffdnet", "wipunet2")):
            ca = build(ModelSpec(arch=a, base_width=16)).param_count()
            cb = build(ModelSpec(arch=b, base_width=16)).param_count()
            assert ca == cb


class TestForwardResidual:
    def test_identity_at_init(self):
        """Zero-initialized output convs make every residual model start as y."""
        y = rand_image(0)
        for arch in ARCH_NAMES:
            if arch == "punet_pp":
                continue
            model = build(ModelSpec(arch=arch, base_width=8))
            out = forward_any(model, y)
            np.testing.assert_array_equal(out.s_hat.data, y.data)

    def test_conservation_with_random_parameters(self):
        y = rand_image(1, n=2, hw=8)
        for arch in ARCH_NAMES:
            if arch == "punet_pp":
                continue
            model = randomize(build(ModelSpec(arch=arch, base_width=8)), seed=3)
            out = forward_any(model, y)
            assert np.array_equal(out.s_hat.data, y.data - out.n_hat.data), arch
            np.testing.assert_allclose(out.s_hat.data + out.n_hat.data, y.data, atol=1e-6)

    def test_sigma_map_required(self):
        model = build(ModelSpec(arch="ffdnet", base_width=8))
        with pytest.raises(ValueError):
            model(rand_image(2))

    def test_sigma_map_rejected_for_blind_arch(self):
        model = build(ModelSpec(arch="unet", base_width=8))
        with pytest.raises(ValueError):
            model(rand_image(2), sigma_map=make_sigma_channel(1, 16, 16, 25.0))

    def test_sigma_map_shape_checked(self):
        model = build(ModelSpec(arch="ffdnet", base_width=8))
        with pytest.raises(ShapeError):
            model(rand_image(2), sigma_map=make_sigma_channel(1, 8, 8, 25.0))

    def test_wrong_arch_for_residual_path(self):
        with pytest.raises(ValueError):
            forward_residual(build(ModelSpec(arch="punet_pp", base_width=8)), rand_image(0))

    def test_odd_sizes_padded_and_cropped(self):
        y = Tensor(np.random.default_rng(5).random((1, 3, 21, 19), dtype=np.float32))
        for arch in ("wipunet", "punet_pp", "dncnn"):
            model = randomize(build(ModelSpec(arch=arch, base_width=8)), seed=6)
            out = forward_any(model, y)
            assert out.s_hat.shape == y.shape, arch

    def test_sigma_conditioning_reaches_output(self):
        """With live parameters, different sigma planes change the noise field."""
        model = randomize(build(ModelSpec(arch="punet_g", base_width=8)), seed=7)
        y = rand_image(8)
        n0 = model(y, sigma_map=make_sigma_channel(1, 16, 16, 0.0)).n_hat.data
        n100 = model(y, sigma_map=make_sigma_channel(1, 16, 16, 100.0)).n_hat.data
        assert np.abs(n0 - n100).mean() > 1e-4


class TestForwardPunetpp:
    def build_pp(self, seed=0):
        return build(ModelSpec(arch="punet_pp", base_width=8, seed=seed))

    def test_open_gates_pass_signal(self):
        """Weights zeroed, gate biases +20 and rho bias -20 give s_hat ~ y."""
        model = self.build_pp()
        for head in (model.head_rho, model.head_m, model.head_g):
            head.w.data[:] = 0
        model.head_m.b.data[:] = 20.0
        model.head_g.b.data[:] = 20.0
        model.head_rho.b.data[:] = -20.0
        y = rand_image(9)
        out = model(y)
        np.testing.assert_allclose(out.s_hat.data, y.data, atol=1e-2)

    def test_closed_gate_blocks_signal(self):
        model = self.build_pp()
        model.head_g.w.data[:] = 0
        model.head_g.b.data[:] = -20.0
        y = rand_image(10)
        out = model(y)
        np.testing.assert_allclose(out.s_hat.data, 0.0, atol=1e-2)
        np.testing.assert_allclose(out.n_hat.data, y.data, atol=1e-2)

    def test_range_constraints_sweep(self):
        """rho stays non-negative and gates stay inside (0,1) under random params."""
        count = 0
        for trial in range(5):
            model = randomize(self.build_pp(), seed=20 + trial)
            y = Tensor(np.random.default_rng(trial).random((16, 3, 8, 8), dtype=np.float32))
            out = model(y)
            assert np.all(out.aux["rho"].data >= 0.0)
            assert np.all(out.aux["m"].data > 0.0) and np.all(out.aux["m"].data < 1.0)
            assert np.all(out.aux["g"].data > 0.0) and np.all(out.aux["g"].data < 1.0)
            count += out.aux["rho"].numel
        assert count >= 10000

    def test_background_conservation(self):
        model = randomize(self.build_pp(), seed=30)
        y = rand_image(11)
        out = model(y)
        assert np.array_equal(out.n_hat.data, y.data - out.s_hat.data)

    def test_wrong_arch_rejected(self):
        with pytest.raises(ValueError):
            forward_punetpp(build(ModelSpec(arch="unet", base_width=8)), rand_image(0))

    def test_gradients_through_mixture_head(self):
        model = randomize(self.build_pp(), seed=31)
        y = Tensor((0.5 * np.random.default_rng(12).random((1, 3, 8, 8))).astype(np.float32), requires_grad=True)
        tgt = rand_image(13, hw=8)
        params = model.parameters()
        tensors = [y] + params

        def loss():
            out = model(y)
            return en.add(en.mse(out.s_hat, tgt), en.scale(en.mse(out.n_hat, tgt), 0.1))

        check_gradients(loss, tensors, coords=sample_coords(tensors, 6, seed=2))


class TestDescribe:
    def test_unet_lists_three_scales(self):
        text = describe(build(ModelSpec(arch="unet", base_width=32)))
        assert "scales=3" in text
        for name in ("enc.0", "enc.1", "enc.2"):
            assert name in text

    def test_wipunet_lists_se_on_each_skip(self):
        text = describe(build(ModelSpec(arch="wipunet", base_width=16)))
        assert text.count("SEBlock") == 2

    def test_wipunet4_replaces_pooling_with_resblocks(self):
        text = describe(build(ModelSpec(arch="wipunet4", base_width=16)))
        assert "ResBlock" in text
        assert "AvgPoolDown" not in text and "NearestUpsample" not in text

    def test_param_count_in_header(self):
        model = build(ModelSpec(arch="dncnn", base_width=16))
        assert f"params={model.param_count()}" in describe(model)


class TestIdentityModel:
    def test_bitwise_passthrough(self):
        y = rand_image(14)
        out = IdentityModel()(y)
        assert np.array_equal(out.s_hat.data, y.data)
        assert np.all(out.n_hat.data == 0)

    def test_no_parameters(self):
        assert IdentityModel().param_count() == 0
