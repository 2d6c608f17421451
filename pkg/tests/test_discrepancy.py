"""Temporal discrepancy attention against brute-force oracles."""

import numpy as np
import pytest
import torch

from tfgc.discrepancy import (
    TemporalDiscrepancyAttention,
    axis_reshape,
    axis_restore_h,
    axis_restore_v,
    default_k,
    discrepancy_update,
    multigrain_aggregate,
    project_qkv,
    temporal_scores,
    variance_activate,
)
from tfgc.errors import ShapeError
from tfgc.gradcheck import (
    analytic_gradients,
    finite_difference_gradients,
    max_relative_error,
)


def variance_activate_oracle(scores, k):
    """Explicit loops over (h, w, t, s): sums, population variance, k-th
    smallest threshold, strict-greater mask."""
    scores = scores.numpy()
    h, w, t, _ = scores.shape
    variance = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            sums = np.zeros(t)
            for a in range(t):
                for b in range(t):
                    sums[a] += scores[i, j, a, b]
            mean = sums.sum() / t
            variance[i, j] = ((sums - mean) ** 2).sum() / t
    threshold = np.sort(variance.flatten())[k - 1]
    mask = variance > threshold
    return variance, threshold, mask


class TestProjectQkv:
    def test_identity_projections(self):
        f = torch.randn(3, 4, 5, 5, dtype=torch.float64)
        eye = torch.eye(4, dtype=torch.float64)
        q, k, v = project_qkv(f, eye, eye, eye)
        assert torch.equal(q, f) and torch.equal(k, f) and torch.equal(v, f)

    def test_zero_projections(self):
        f = torch.randn(3, 4, 5, 5, dtype=torch.float64)
        zero = torch.zeros(4, 4, dtype=torch.float64)
        q, k, v = project_qkv(f, zero, zero, zero)
        assert not q.any() and not k.any() and not v.any()

    def test_matches_per_pixel_matmul(self):
        torch.manual_seed(5)
        f = torch.randn(3, 4, 2, 2, dtype=torch.float64)
        weights = [torch.randn(4, 4, dtype=torch.float64) for _ in range(3)]
        q, k, v = project_qkv(f, *weights)
        for out, w in zip((q, k, v), weights):
            for t in range(3):
                for i in range(2):
                    for j in range(2):
                        expected = w @ f[t, :, i, j]
                        assert torch.allclose(out[t, :, i, j], expected)

    def test_shape_mismatch(self):
        f = torch.randn(3, 4, 2, 2)
        with pytest.raises(ShapeError):
            project_qkv(f, torch.zeros(3, 3), torch.zeros(4, 4), torch.zeros(4, 4))


class TestTemporalScores:
    def test_constant_frames_constant_scores(self):
        frame = torch.randn(1, 2, 3, 3, dtype=torch.float64)
        f = frame.repeat(4, 1, 1, 1)
        scores = temporal_scores(f, f)
        first = scores[..., 0, 0]
        for t in range(4):
            for s in range(4):
                assert torch.allclose(scores[..., t, s], first)

    def test_orthogonal_frames_zero_off_diagonal(self):
        f = torch.zeros(3, 3, 1, 1, dtype=torch.float64)
        for t in range(3):
            f[t, t, 0, 0] = 1.0
        scores = temporal_scores(f, f)
        off = scores[0, 0] - torch.diag(torch.diagonal(scores[0, 0]))
        assert not off.any()

    def test_row_sums_hand_case(self):
        f = torch.tensor([1.0, 2.0, 4.0], dtype=torch.float64).reshape(3, 1, 1, 1)
        scores = temporal_scores(f, f)
        row_sums = scores[0, 0].sum(dim=-1)
        assert torch.equal(row_sums, torch.tensor([7.0, 14.0, 28.0], dtype=torch.float64))

    def test_symmetric_when_projections_tied(self):
        torch.manual_seed(6)
        f = torch.randn(4, 3, 2, 2, dtype=torch.float64)
        w = torch.randn(3, 3, dtype=torch.float64)
        q, k, _ = project_qkv(f, w, w, w)
        scores = temporal_scores(q, k)
        assert torch.allclose(scores, scores.transpose(-1, -2))


class TestVarianceActivate:
    def test_identical_frames_zero_variance_empty_mask(self):
        frame = torch.randn(1, 2, 3, 3, dtype=torch.float64)
        f = frame.repeat(5, 1, 1, 1)
        scores = temporal_scores(f, f)
        for k in (1, 4, 9):
            result = variance_activate(scores, k)
            assert torch.equal(result.data, torch.zeros(3, 3, dtype=torch.float64))
            assert not result.mask.any()

    def test_known_variances_threshold_and_mask(self):
        # engineer a 2x2 grid with variances exactly {1, 2, 3, 4}:
        # per-pixel sums over s are [c, -c] across t=2, variance = c^2
        variances = [1.0, 2.0, 3.0, 4.0]
        scores = torch.zeros(2, 2, 2, 2, dtype=torch.float64)
        for idx, v in enumerate(variances):
            i, j = divmod(idx, 2)
            c = np.sqrt(v)
            scores[i, j, 0, :] = c / 2.0
            scores[i, j, 1, :] = -c / 2.0
        result = variance_activate(scores, k=2)
        assert abs(result.threshold - 2.0) < 1e-12
        assert result.mask.sum() == 2
        assert bool(result.mask[1, 0]) and bool(result.mask[1, 1])

    def test_k_equals_grid_size_masks_nothing(self):
        torch.manual_seed(1)
        scores = torch.randn(3, 3, 4, 4, dtype=torch.float64)
        result = variance_activate(scores, k=9)
        assert not result.mask.any()

    def test_matches_loop_oracle_on_seeded_suite(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            t = int(rng.integers(2, 5))
            h = int(rng.integers(1, 4))
            w = int(rng.integers(1, 4))
            k = int(rng.integers(1, h * w + 1))
            scores = torch.tensor(rng.normal(size=(h, w, t, t)))
            result = variance_activate(scores, k)
            var_o, thr_o, mask_o = variance_activate_oracle(scores, k)
            assert np.abs(result.data.numpy() - var_o).max() < 1e-12
            assert abs(result.threshold - thr_o) < 1e-12
            assert np.array_equal(result.mask.numpy(), mask_o)


class TestDiscrepancyUpdate:
    def _random_inputs(self, seed=3, t=4, c=2, h=3, w=3):
        torch.manual_seed(seed)
        f = torch.randn(t, c, h, w, dtype=torch.float64)
        fq = torch.randn(t, c, h, w, dtype=torch.float64)
        fk = torch.randn(t, c, h, w, dtype=torch.float64)
        fv = torch.randn(t, c, h, w, dtype=torch.float64)
        return f, fq, fk, fv

    def test_alpha_zero_identity(self):
        f, fq, fk, fv = self._random_inputs()
        out = discrepancy_update(f, fq, fk, fv, torch.tensor(0.0, dtype=torch.float64), k=4)
        assert torch.equal(out, f)

    def test_static_clip_mask_zero_identity(self):
        frame = torch.randn(1, 2, 3, 3, dtype=torch.float64)
        f = frame.repeat(4, 1, 1, 1)
        out = discrepancy_update(f, f, f, f, torch.tensor(1.5, dtype=torch.float64), k=1)
        assert torch.equal(out, f)

    def test_single_active_pixel_brute_force(self):
        # T=2 single pixel: softmax-weighted value sum, gated by the mask
        f = torch.zeros(2, 1, 1, 2, dtype=torch.float64)
        fq = torch.zeros_like(f)
        fk = torch.zeros_like(f)
        fv = torch.zeros_like(f)
        fq[:, 0, 0, 0] = torch.tensor([1.0, -1.0])
        fk[:, 0, 0, 0] = torch.tensor([2.0, 0.5])
        fv[:, 0, 0, 0] = torch.tensor([3.0, -2.0])
        alpha = torch.tensor(0.7, dtype=torch.float64)
        out = discrepancy_update(f, fq, fk, fv, alpha, k=1)
        # pixel (0, 1) never varies, so only pixel (0, 0) updates
        assert torch.equal(out[:, :, :, 1], f[:, :, :, 1])
        for t in range(2):
            logits = torch.tensor([fq[t, 0, 0, 0] * fk[0, 0, 0, 0], fq[t, 0, 0, 0] * fk[1, 0, 0, 0]])
            weights = torch.softmax(logits, dim=0)
            expected = 0.7 * (weights[0] * 3.0 + weights[1] * -2.0)
            assert torch.allclose(out[t, 0, 0, 0], expected)

    def test_softmax_rows_sum_to_one(self):
        _, fq, fk, _ = self._random_inputs(seed=9)
        weights = torch.softmax(temporal_scores(fq, fk), dim=-1)
        sums = weights.sum(dim=-1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)


class TestAxisViews:
    def test_round_trip(self):
        f = torch.randn(4, 3, 5, 6, dtype=torch.float64)
        views = axis_reshape(f)
        assert torch.equal(axis_restore_v(views.f_v), f)
        assert torch.equal(axis_restore_h(views.f_h), f)

    def test_element_multiset_preserved(self):
        f = torch.randn(3, 2, 4, 5)
        views = axis_reshape(f)
        assert torch.equal(views.f_v.flatten().sort().values, f.flatten().sort().values)
        assert torch.equal(views.f_h.flatten().sort().values, f.flatten().sort().values)

    def test_spot_indexed_equality(self):
        t_n, c_n, h_n, w_n = 2, 3, 2, 2
        f = torch.zeros(t_n, c_n, h_n, w_n)
        for t in range(t_n):
            for c in range(c_n):
                for h in range(h_n):
                    for w in range(w_n):
                        f[t, c, h, w] = t * 1000 + c * 100 + h * 10 + w
        views = axis_reshape(f)
        for t in range(t_n):
            for c in range(c_n):
                for h in range(h_n):
                    for w in range(w_n):
                        assert views.f_v[w, c, h, t] == f[t, c, h, w]
                        assert views.f_h[h, c, t, w] == f[t, c, h, w]


def identity_taps(channels):
    taps = torch.zeros(3, channels, 3, dtype=torch.float64)
    taps[:, :, 1] = 1.0
    return taps


class TestMultigrainAggregate:
    def test_identity_kernels_constant_input(self):
        view = torch.full((2, 3, 4, 8), 1.7, dtype=torch.float64)
        out = multigrain_aggregate(view, identity_taps(3))
        assert torch.allclose(out, view)

    def test_zero_kernels(self):
        view = torch.randn(2, 3, 4, 8, dtype=torch.float64)
        out = multigrain_aggregate(view, torch.zeros(3, 3, 3, dtype=torch.float64))
        assert not out.any()

    def test_ramp_hand_evaluation(self):
        view = torch.tensor([0.0, 1.0, 2.0, 3.0], dtype=torch.float64).reshape(1, 1, 1, 4)
        out = multigrain_aggregate(view, identity_taps(1)).flatten()
        expected = (
            torch.tensor([0.0, 1.0, 2.0, 3.0], dtype=torch.float64)
            + torch.tensor([0.5, 0.5, 2.5, 2.5], dtype=torch.float64)
            + torch.tensor([1.5, 1.5, 1.5, 1.5], dtype=torch.float64)
        ) / 3.0
        assert torch.allclose(out, expected)

    def test_linearity(self):
        torch.manual_seed(2)
        taps = torch.randn(3, 2, 3, dtype=torch.float64)
        a = torch.randn(3, 2, 2, 8, dtype=torch.float64)
        b = torch.randn(3, 2, 2, 8, dtype=torch.float64)
        f = lambda x: multigrain_aggregate(x, taps)
        assert torch.allclose(f(a + b), f(a) + f(b))
        assert torch.allclose(f(2.5 * a), 2.5 * f(a))

    def test_divisibility_enforced(self):
        with pytest.raises(ShapeError):
            multigrain_aggregate(torch.zeros(2, 3, 4, 6), torch.zeros(3, 3, 3))


class TestFullModule:
    def test_bypass_configuration_is_identity(self):
        module = TemporalDiscrepancyAttention(4).double()
        with torch.no_grad():
            module.alpha.zero_()
            module.taps_v.zero_()
            module.taps_h.zero_()
        f = torch.randn(8, 4, 8, 8, dtype=torch.float64)
        assert torch.equal(module(f), f)

    def test_static_clip_mask_empty(self):
        module = TemporalDiscrepancyAttention(4).double()
        frame = torch.randn(1, 4, 8, 8, dtype=torch.float64)
        f = frame.repeat(8, 1, 1, 1)
        f_q, f_k, _ = project_qkv(f, module.w_q, module.w_k, module.w_v)
        result = variance_activate(temporal_scores(f_q, f_k), default_k(8, 8))
        assert not result.mask.any()

    def test_shape_contract(self):
        module = TemporalDiscrepancyAttention(4)
        f = torch.randn(8, 4, 16, 16)
        assert module(f).shape == (8, 4, 16, 16)

    def test_default_k_half_grid(self):
        assert default_k(16, 16) == 128
        assert default_k(3, 3) == 5
        assert default_k(1, 1) == 1


@pytest.mark.gradcheck
class TestDiscrepancyGradients:
    def test_module_matches_finite_differences(self):
        torch.manual_seed(7)
        module = TemporalDiscrepancyAttention(2).double()
        with torch.no_grad():
            module.alpha.fill_(0.3)
            module.taps_v.normal_(0.0, 0.2)
            module.taps_h.normal_(0.0, 0.2)
        f = torch.randn(4, 2, 4, 4, dtype=torch.float64)
        probe = torch.randn(4, 2, 4, 4, dtype=torch.float64)

        # the mask is an order statistic: verify the threshold gap is far
        # wider than the finite-difference step so no mask bit can flip
        f_q, f_k, _ = project_qkv(f, module.w_q, module.w_k, module.w_v)
        variances = variance_activate(temporal_scores(f_q, f_k), default_k(4, 4))
        sorted_var = variances.data.flatten().sort().values
        gaps = (sorted_var[1:] - sorted_var[:-1]).abs()
        assert gaps.min() > 1e-4

        def objective():
            return (module(f) * probe).sum()

        tensors = [f, module.w_q, module.w_k, module.w_v, module.alpha, module.taps_v, module.taps_h]
        analytic = analytic_gradients(objective, tensors)
        numeric = finite_difference_gradients(objective, tensors)
        assert max_relative_error(analytic, numeric) < 1e-4
