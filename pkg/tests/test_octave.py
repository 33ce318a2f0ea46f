"""Octave convolution: path algebra, degeneracies, gradients."""

import numpy as np
import pytest
import torch
import torch.nn as nn

from u2onet import (ConfigError, InputError, OctaveBatchNormReLU, OctaveConv2d,
                    OctaveTensor, oct_merge, oct_split)

from oracles import grad_check, octconv_loop


def make_octave_input(c_high, c_low, h, w, batch=1, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    high = torch.randn(batch, c_high, h, w, generator=g, dtype=dtype)
    low = None
    if c_low:
        low = torch.randn(batch, c_low, h // 2, w // 2, generator=g, dtype=dtype)
    return OctaveTensor(high, low)


class TestOctaveTensor:
    def test_alpha_zero_means_no_low(self):
        t = OctaveTensor(torch.zeros(1, 4, 8, 8))
        assert t.alpha == 0.0 and t.channels == 4

    def test_low_must_be_exactly_half(self):
        with pytest.raises(InputError):
            OctaveTensor(torch.zeros(1, 2, 8, 8), torch.zeros(1, 2, 3, 3)).validate()

    def test_odd_high_with_low_rejected(self):
        with pytest.raises(InputError):
            OctaveTensor(torch.zeros(1, 2, 7, 7), torch.zeros(1, 2, 3, 3)).validate()

    def test_alpha_one_rejected_in_layers(self):
        with pytest.raises(ConfigError):
            OctaveConv2d(4, 4, 3, alpha_in=0.5, alpha_out=1.0)


class TestSplitMerge:
    def test_split_alpha0_is_identity_wrapper(self):
        x = torch.randn(1, 4, 7, 9)
        t = oct_split(x, 0.0)
        assert t.low is None and torch.equal(t.high, x)

    def test_split_channel_arithmetic_half(self):
        t = oct_split(torch.randn(1, 64, 16, 16), 0.5)
        assert t.high.shape == (1, 32, 16, 16)
        assert t.low.shape == (1, 32, 8, 8)

    def test_split_channel_arithmetic_quarter(self):
        t = oct_split(torch.randn(1, 8, 16, 16), 0.25)
        assert t.high.shape[1] == 6 and t.low.shape[1] == 2

    def test_split_odd_dims_rejected(self):
        with pytest.raises(InputError):
            oct_split(torch.randn(1, 4, 7, 8), 0.5)

    def test_merge_alpha0_identity(self):
        x = torch.randn(1, 3, 5, 5)
        assert oct_merge(OctaveTensor(x)) is x

    def test_merge_concat_semantics(self):
        t = OctaveTensor(torch.ones(1, 2, 4, 4), torch.full((1, 2, 2, 2), 2.0))
        merged = oct_merge(t)
        assert merged.shape == (1, 4, 4, 4)
        assert torch.equal(merged[:, :2], torch.ones(1, 2, 4, 4))
        assert torch.equal(merged[:, 2:], torch.full((1, 2, 4, 4), 2.0))

    def test_split_merge_roundtrip_channel_count(self):
        x = torch.randn(2, 12, 8, 8)
        assert oct_merge(oct_split(x, 0.5)).shape == x.shape


class TestOctConv:
    def test_alpha0_equals_vanilla_conv(self):
        layer = OctaveConv2d(3, 5, 3, alpha_in=0.0, alpha_out=0.0)
        ref = nn.Conv2d(3, 5, 3, padding=1)
        ref.weight.data.copy_(layer.conv_hh.weight.data)
        ref.bias.data.copy_(layer.conv_hh.bias.data)
        x = torch.randn(2, 3, 9, 11)
        out = layer(x)
        assert out.low is None
        expected = ref(x)
        rel = (out.high - expected).abs().max() / expected.abs().max()
        assert rel < 1e-6

    def test_identity_kernel_zero_exchange_preserves_input(self):
        layer = OctaveConv2d(4, 4, 1, alpha_in=0.5, alpha_out=0.5)
        with torch.no_grad():
            for conv in (layer.conv_hh, layer.conv_hl, layer.conv_lh, layer.conv_ll):
                conv.weight.zero_()
                if conv.bias is not None:
                    conv.bias.zero_()
            layer.conv_hh.weight.copy_(torch.eye(2).reshape(2, 2, 1, 1))
            layer.conv_ll.weight.copy_(torch.eye(2).reshape(2, 2, 1, 1))
        t = OctaveTensor(torch.ones(1, 2, 4, 4), torch.ones(1, 2, 2, 2))
        out = layer(t)
        assert torch.equal(out.high, t.high) and torch.equal(out.low, t.low)

    def test_matches_nested_loop_oracle(self):
        layer = OctaveConv2d(4, 4, 3, alpha_in=0.5, alpha_out=0.5).double()
        t = make_octave_input(2, 2, 8, 8, dtype=torch.float64)
        out = layer(t)
        ref_high, ref_low = octconv_loop(t.high.numpy(), t.low.numpy(), layer)
        np.testing.assert_allclose(out.high.detach().numpy(), ref_high, atol=1e-10)
        np.testing.assert_allclose(out.low.detach().numpy(), ref_low, atol=1e-10)

    def test_matches_oracle_first_and_last_layer_forms(self):
        first = OctaveConv2d(3, 4, 3, alpha_in=0.0, alpha_out=0.5).double()
        x = torch.randn(1, 3, 8, 8, dtype=torch.float64)
        out = first(x)
        ref_high, ref_low = octconv_loop(x.numpy(), None, first)
        np.testing.assert_allclose(out.high.detach().numpy(), ref_high, atol=1e-10)
        np.testing.assert_allclose(out.low.detach().numpy(), ref_low, atol=1e-10)

        last = OctaveConv2d(4, 3, 3, alpha_in=0.5, alpha_out=0.0).double()
        t = make_octave_input(2, 2, 8, 8, seed=3, dtype=torch.float64)
        out = last(t)
        ref_high, ref_low = octconv_loop(t.high.numpy(), t.low.numpy(), last)
        assert out.low is None and ref_low is None
        np.testing.assert_allclose(out.high.detach().numpy(), ref_high, atol=1e-10)

    def test_linearity_without_bias(self):
        layer = OctaveConv2d(4, 4, 3, alpha_in=0.5, alpha_out=0.5, bias=False).double()
        a, b = 1.7, -0.6
        x = make_octave_input(2, 2, 8, 8, seed=1, dtype=torch.float64)
        y = make_octave_input(2, 2, 8, 8, seed=2, dtype=torch.float64)
        combined = OctaveTensor(a * x.high + b * y.high, a * x.low + b * y.low)
        lhs = layer(combined)
        rx, ry = layer(x), layer(y)
        for lhs_map, rhs_map in ((lhs.high, a * rx.high + b * ry.high),
                                 (lhs.low, a * rx.low + b * ry.low)):
            rel = (lhs_map - rhs_map).abs().max() / rhs_map.abs().max()
            assert rel < 1e-5

    def test_shape_law(self):
        layer = OctaveConv2d(4, 6, 3, alpha_in=0.5, alpha_out=0.5)
        out = layer(make_octave_input(2, 2, 12, 16))
        assert out.high.shape == (1, 3, 12, 16)
        assert out.low.shape == (1, 3, 6, 8)

    def test_odd_dims_with_low_output_rejected(self):
        layer = OctaveConv2d(4, 4, 3, alpha_in=0.0, alpha_out=0.5)
        with pytest.raises(InputError):
            layer(torch.randn(1, 4, 7, 7))

    def test_channel_mismatch_is_config_error(self):
        layer = OctaveConv2d(4, 4, 3, alpha_in=0.5, alpha_out=0.5)
        with pytest.raises(ConfigError):
            layer(make_octave_input(3, 1, 8, 8))

    def test_gradients_match_finite_differences(self):
        layer = OctaveConv2d(4, 4, 3, alpha_in=0.5, alpha_out=0.5).double()
        t = make_octave_input(2, 2, 8, 8, dtype=torch.float64)
        t.high.requires_grad_(True)
        t.low.requires_grad_(True)
        proj_h = torch.randn_like(t.high.detach())
        proj_l = torch.randn_like(t.low.detach())

        def scalar():
            out = layer(OctaveTensor(t.high, t.low))
            return (out.high * proj_h).sum() + (out.low * proj_l).sum()

        params = [t.high, t.low] + list(layer.parameters())
        assert grad_check(scalar, params) < 1e-3


class TestBNReLU:
    def test_zero_input_zero_shift_gives_zero(self):
        unit = OctaveBatchNormReLU(4, 0.5).eval()
        t = OctaveTensor(torch.zeros(1, 2, 4, 4), torch.zeros(1, 2, 2, 2))
        out = unit(t)
        assert torch.equal(out.high, t.high) and torch.equal(out.low, t.low)

    def test_alpha0_matches_dense_bn_relu(self):
        unit = OctaveBatchNormReLU(4, 0.0)
        ref = nn.BatchNorm2d(4)
        unit.eval()
        ref.eval()
        with torch.no_grad():
            for attr in ("weight", "bias", "running_mean", "running_var"):
                getattr(ref, attr).copy_(getattr(unit.bn_high, attr))
        x = torch.randn(2, 4, 6, 6)
        out = unit(OctaveTensor(x))
        assert torch.allclose(out.high, torch.relu(ref(x)))

    def test_negative_constant_maps_to_zero(self):
        unit = OctaveBatchNormReLU(4, 0.5).eval()
        t = OctaveTensor(torch.full((1, 2, 4, 4), -3.0), torch.full((1, 2, 2, 2), -3.0))
        out = unit(t)
        assert out.high.eq(0).all() and out.low.eq(0).all()
