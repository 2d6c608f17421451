"""Audio-visual cross-attention: construction, attention, and fusion."""

import math

import pytest
import torch

from tfgc.errors import AlignmentError
from tfgc.fusion import (
    AudioVisualFusion,
    FusionState,
    attention_weights,
    cross_attend,
    fuse,
)
from tfgc.gradcheck import (
    analytic_gradients,
    finite_difference_gradients,
    max_relative_error,
)


def _module(audio_ch=4, visual_ch=4, width=8, heads=2, dtype=torch.float64):
    return AudioVisualFusion(audio_ch, visual_ch, width=width, heads=heads).to(dtype)


def _zero_weights(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


def _state(b=1, heads=2, d=2, t=4, g=2, seed=0, dtype=torch.float64):
    torch.manual_seed(seed)
    return FusionState(
        query=torch.randn(b, heads, d, t, g, g, dtype=dtype),
        key=torch.randn(b, heads, d, t, g, g, dtype=dtype),
        value=torch.randn(b, heads, d, t, g, g, dtype=dtype),
    )


class TestBuildQkv:
    def test_zero_params_zero_qkv(self):
        m = _module()
        _zero_weights(m)
        audio = torch.randn(2, 4, 4, 8, 8, dtype=torch.float64)
        visual = torch.randn(2, 4, 4, 16, 16, dtype=torch.float64)
        state = m.build_qkv(audio, visual)
        assert not state.query.any() and not state.key.any() and not state.value.any()

    def test_shape_contract(self):
        m = AudioVisualFusion(16, 16, width=64, heads=4)
        audio = torch.randn(1, 8, 16, 8, 8)
        visual = torch.randn(1, 8, 16, 16, 16)
        state = m.build_qkv(audio, visual)
        assert state.query.shape == (1, 4, 16, 8, 8, 8)
        assert state.key.shape == (1, 4, 16, 8, 8, 8)
        assert state.value.shape == (1, 4, 16, 8, 8, 8)

    def test_value_concat_identity_reproduces_audio(self):
        audio_ch = 4
        m = AudioVisualFusion(audio_ch, 3, width=audio_ch, heads=1).double()
        with torch.no_grad():
            m.value_conv.weight.zero_()
            for c in range(audio_ch):
                m.value_conv.weight[c, c, 0, 0, 0] = 1.0
        audio = torch.randn(1, 5, audio_ch, 4, 4, dtype=torch.float64)
        visual = torch.randn(1, 5, 3, 4, 4, dtype=torch.float64)
        state = m.build_qkv(audio, visual)
        merged = state.value_merged()  # (1, width, T, G, G)
        assert torch.allclose(merged, audio.permute(0, 2, 1, 3, 4))

    def test_time_mismatch_rejected(self):
        m = _module()
        with pytest.raises(AlignmentError):
            m.build_qkv(torch.randn(1, 4, 4, 8, 8), torch.randn(1, 6, 4, 8, 8))


class TestCrossAttend:
    def test_equal_keys_uniform_weights(self):
        state = _state(t=5)
        state.key = torch.ones_like(state.key)
        weights = attention_weights(state, divisor=4.0)
        assert torch.allclose(weights, torch.full_like(weights, 1.0 / 5.0))

    def test_matching_key_concentrates(self):
        heads, d, t, g = 1, 4, 4, 2
        scale = 10.0
        query = torch.zeros(1, heads, d, t, g, g, dtype=torch.float64)
        key = torch.zeros_like(query)
        # key tokens are mutually orthogonal (channel s hot at step s);
        # every query token copies the step-2 key token
        for s in range(t):
            key[0, 0, s, s, 0, 0] = scale
        query[0, 0, :, :, :, :] = key[0, 0, :, 2:3, :, :]
        state = FusionState(query=query, key=key, value=torch.randn_like(query))
        weights = attention_weights(state, divisor=1.0)
        assert (weights[0, 0, :, 2] > 0.9).all()

    def test_rows_sum_to_one(self):
        state = _state(seed=5)
        weights = attention_weights(state, divisor=2.0)
        sums = weights.sum(dim=-1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)
        assert (weights >= 0).all()

    def test_permutation_equivariance(self):
        state = _state(t=6, seed=8)
        out = cross_attend(state, divisor=3.0)
        perm = torch.randperm(6)
        permuted = FusionState(
            query=state.query,
            key=state.key[:, :, :, perm],
            value=state.value[:, :, :, perm],
        )
        out_perm, w_perm = cross_attend(permuted, divisor=3.0, return_weights=True)
        w_base = attention_weights(state, divisor=3.0)
        assert torch.allclose(out_perm, out, atol=1e-12)
        assert torch.allclose(w_perm, w_base[:, :, :, perm], atol=1e-12)

    def test_huge_divisor_approaches_value_mean(self):
        torch.manual_seed(3)
        state = _state(t=5, seed=3)
        out = cross_attend(state, divisor=1e6)
        mean = state.value.mean(dim=3, keepdim=True).expand_as(state.value)
        assert (out - mean).abs().max() < 1e-4


class TestFuse:
    def test_zero_projection_identity_residual_returns_value(self):
        m = _module(width=8, heads=2)
        _zero_weights(m)
        state = _state(heads=2, d=4, t=3, g=2)
        attended = cross_attend(state, divisor=2.0)
        out = fuse(attended, state.value_merged(), m.proj, m.res1, m.res2)
        expected = state.value_merged().permute(0, 2, 1, 3, 4)
        assert torch.allclose(out, expected)

    def test_zero_value_and_residual_pure_attention(self):
        m = _module(width=8, heads=2)
        with torch.no_grad():
            m.res1.weight.zero_()
            m.res2.weight.zero_()
            m.proj.weight.zero_()
            for c in range(8):
                m.proj.weight[c, c, 0, 0, 0] = 1.0
        state = _state(heads=2, d=4, t=3, g=2)
        state.value = torch.zeros_like(state.value)
        attended = cross_attend(state, divisor=2.0)
        out = fuse(attended, state.value_merged(), m.proj, m.res1, m.res2)
        b, heads, d, t, g, _ = attended.shape
        expected = attended.reshape(b, heads * d, t, g, g).permute(0, 2, 1, 3, 4)
        assert torch.allclose(out, expected)

    def test_accepts_head_list(self):
        m = _module(width=8, heads=2)
        state = _state(heads=2, d=4, t=3, g=2)
        attended = cross_attend(state, divisor=2.0)
        stacked = fuse(attended, state.value_merged(), m.proj, m.res1, m.res2)
        listed = fuse(
            [attended[:, 0], attended[:, 1]], state.value_merged(), m.proj, m.res1, m.res2
        )
        assert torch.allclose(stacked, listed)


class TestModuleForward:
    def test_end_to_end_shape(self):
        m = AudioVisualFusion(16, 16, width=64, heads=4)
        audio = torch.randn(2, 8, 16, 8, 8)
        visual = torch.randn(2, 8, 16, 16, 16)
        fused = m(audio, visual)
        assert fused.shape == (2, 8, 64, 8, 8)

    def test_divisor_modes(self):
        m = _module(width=8, heads=2)
        state = _state(heads=2, d=4, t=3, g=2)
        assert m.attention_divisor(state) == math.sqrt(4 * 2 * 2)
        m.divisor = "paper_H"
        assert m.attention_divisor(state) == 2.0
        m.divisor = 7.5
        assert m.attention_divisor(state) == 7.5


@pytest.mark.gradcheck
class TestFusionGradients:
    def test_attend_and_fuse_match_finite_differences(self):
        torch.manual_seed(11)
        m = _module(width=8, heads=2)
        state = _state(b=1, heads=2, d=4, t=4, g=4, seed=11)

        probe = torch.randn(1, 4, 8, 4, 4, dtype=torch.float64)

        def objective():
            attended = cross_attend(state, divisor=m.attention_divisor(state))
            out = fuse(attended, state.value_merged(), m.proj, m.res1, m.res2)
            return (out * probe).sum()

        tensors = [state.query, state.key, state.value] + list(m.proj.parameters()) + list(
            m.res1.parameters()
        ) + list(m.res2.parameters())
        analytic = analytic_gradients(objective, tensors)
        numeric = finite_difference_gradients(objective, tensors)
        assert max_relative_error(analytic, numeric) < 1e-4
