import math

import pytest
import torch

from au2av.errors import ValidationError
from au2av.stage2.losses import (
    Stage2LossWeights,
    cam_loss,
    identity_loss,
    lip_sync_loss,
    lsgan_loss,
    predictor_loss,
    recycle_loss,
    stage2_blink_loss,
)


def scalar(x):
    return torch.tensor([x], dtype=torch.float64)


class Offset(torch.nn.Module):
    """Stub generator/predictor adding a constant to its input."""

    def __init__(self, delta=0.0, tuple_output=False):
        super().__init__()
        self.delta = delta
        self.tuple_output = tuple_output

    def forward(self, x):
        if isinstance(x, (list, tuple)):
            x = x[-1]
        out = x + self.delta
        return (out, None, None) if self.tuple_output else out


class TestLsgan:
    def test_perfect_split_zero(self):
        assert float(lsgan_loss(scalar(1.0), scalar(0.0), "discriminator")) == 0.0

    def test_half_scores_half_per_head(self):
        loss = lsgan_loss(scalar(0.5), scalar(0.5), "discriminator")
        assert abs(float(loss) - 0.5) < 1e-12
        two_heads = [scalar(0.5), scalar(0.5)]
        assert abs(float(lsgan_loss(two_heads, two_heads, "discriminator")) - 1.0) < 1e-12

    def test_generator_zero_iff_scores_one(self):
        assert float(lsgan_loss(None, scalar(1.0), "generator")) == 0.0
        assert float(lsgan_loss(None, scalar(0.9), "generator")) > 0.0

    def test_grid_minimum_at_one_zero(self):
        grid = [x / 10 for x in range(-5, 16)]
        best = min(
            ((r, f, float(lsgan_loss(scalar(r), scalar(f), "discriminator"))) for r in grid for f in grid),
            key=lambda item: item[2],
        )
        assert best[:2] == (1.0, 0.0)
        assert best[2] == 0.0


class TestRecycle:
    def test_identity_maps_perfect_predictor_zero(self):
        frames = [torch.full((1, 3, 4, 4), 0.3, dtype=torch.float64) for _ in range(3)]
        loss = recycle_loss(frames, Offset(0.0), Offset(0.0), Offset(0.0))
        assert float(loss) == 0.0

    def test_predictor_offset_squared(self):
        frames = [torch.full((1, 3, 4, 4), 0.3, dtype=torch.float64) for _ in range(3)]
        loss = recycle_loss(frames, Offset(0.0), Offset(0.0), Offset(0.1))
        assert abs(float(loss) - 0.01) < 1e-12

    def test_gradients_reach_all_three_networks(self):
        torch.manual_seed(0)
        g_y = torch.nn.Conv2d(3, 3, 1)
        g_x = torch.nn.Conv2d(3, 3, 1)
        p_y = torch.nn.Conv2d(3, 3, 1)

        def pred(frames):
            return p_y(frames[-1] if isinstance(frames, list) else frames)

        frames = [torch.rand(1, 3, 4, 4) for _ in range(3)]
        loss = recycle_loss(frames, g_y, g_x, pred)
        loss.backward()
        for net in (g_y, g_x, p_y):
            assert net.weight.grad is not None
            assert net.weight.grad.abs().sum() > 0

    def test_too_few_frames(self):
        with pytest.raises(ValidationError):
            recycle_loss([torch.rand(1, 3, 4, 4)], Offset(), Offset(), Offset())


class TestIdentity:
    def test_identity_generator_zero(self):
        x = torch.rand(1, 3, 4, 4, dtype=torch.float64)
        assert float(identity_loss(x, Offset(0.0))) == 0.0

    def test_constant_offset(self):
        x = torch.rand(1, 3, 4, 4, dtype=torch.float64)
        assert abs(float(identity_loss(x, Offset(0.2))) - 0.2) < 1e-12

    def test_tuple_returning_generator(self):
        x = torch.rand(1, 3, 4, 4, dtype=torch.float64)
        assert abs(float(identity_loss(x, Offset(0.2, tuple_output=True))) - 0.2) < 1e-12


class TestCamLoss:
    def test_boundary_logits_ln2_per_term(self):
        zeros = torch.zeros(3, 2, dtype=torch.float64)
        loss = cam_loss(zeros, zeros)
        assert abs(float(loss) - 2 * math.log(2)) < 1e-9

    def test_separated_logits_near_zero(self):
        big = torch.full((2, 2), 1e6)
        loss = cam_loss(big, -big)
        assert float(loss) < 1e-9

    def test_permutation_invariance_within_batch(self):
        logits_one = torch.tensor([[0.3], [1.2], [-0.5]], dtype=torch.float64)
        logits_zero = torch.tensor([[0.1], [-0.4], [0.9]], dtype=torch.float64)
        base = float(cam_loss(logits_one, logits_zero))
        permuted = float(cam_loss(logits_one[[2, 0, 1]], logits_zero[[1, 2, 0]]))
        assert abs(base - permuted) < 1e-12

    def test_bad_side(self):
        with pytest.raises(ValidationError):
            cam_loss(torch.zeros(1), torch.zeros(1), side="referee")


class TestLipSync:
    def test_identity_generators_zero(self):
        x = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        assert float(lip_sync_loss(x, Offset(0.0), Offset(0.0))) == 0.0

    def test_upper_half_error_excluded(self):
        x = torch.zeros(1, 3, 8, 8, dtype=torch.float64)

        class UpperOnly(torch.nn.Module):
            def forward(self, frame):
                out = frame.clone()
                out[..., :4, :] += 0.3
                return out

        assert float(lip_sync_loss(x, UpperOnly(), Offset(0.0))) == 0.0

    def test_everywhere_error(self):
        x = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        loss = lip_sync_loss(x, Offset(0.15), Offset(0.15))
        assert abs(float(loss) - 0.3) < 1e-12

    def test_bounded_by_full_frame_cycle_error(self):
        torch.manual_seed(0)
        x = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        g_ab = Offset(0.1)

        class Noisy(torch.nn.Module):
            def forward(self, frame):
                torch.manual_seed(int(frame.sum().item() * 1000) % 1000)
                return frame + torch.rand_like(frame) * 0.2

        g_ba = Noisy()
        cycled = g_ba(g_ab(x))
        region_pixels = x[..., 4:, :].numel()
        full_sum_over_region_pixels = float((x - cycled).abs().sum()) / region_pixels
        assert float(lip_sync_loss(x, g_ab, g_ba)) <= full_sum_over_region_pixels + 1e-12


class TestBlink:
    def test_identity_cycle_zero(self):
        head = lambda frames: torch.tensor(
            [[[0.0, 0.0], [1.0, 1.0], [3.0, 1.0], [4.0, 0.0], [3.0, -1.0], [1.0, -1.0]]],
            dtype=torch.float64,
        )
        x = torch.rand(1, 3, 8, 8)
        assert float(stage2_blink_loss(x, x.clone(), head)) == 0.0

    def test_forced_difference(self):
        ears = iter([0.28, 0.33])

        def head(frames):
            half = next(ears)  # EAR == half-height of this hexagon
            return torch.tensor(
                [[[0.0, 0.0], [1.0, half], [3.0, half], [4.0, 0.0], [3.0, -half], [1.0, -half]]],
                dtype=torch.float64,
            )

        loss = stage2_blink_loss(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8), head)
        assert abs(float(loss) - 0.05) < 1e-12

    def test_symmetric(self):
        def head_for(values):
            series = iter(values)

            def head(frames):
                half = next(series)
                return torch.tensor(
                    [[[0.0, 0.0], [1.0, half], [3.0, half], [4.0, 0.0], [3.0, -half], [1.0, -half]]],
                    dtype=torch.float64,
                )

            return head

        a, b = torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8)
        forward = float(stage2_blink_loss(a, b, head_for([0.28, 0.33])))
        backward = float(stage2_blink_loss(b, a, head_for([0.33, 0.28])))
        assert abs(forward - backward) < 1e-12


class TestPredictorLoss:
    def test_perfect_predictor_zero(self):
        frames = [torch.full((1, 3, 4, 4), 0.5, dtype=torch.float64) for _ in range(4)]

        class Constant(torch.nn.Module):
            def forward(self, window):
                return frames[0]

        assert float(predictor_loss(frames, Constant(), t=2)) == 0.0

    def test_offset_times_window_count(self):
        frames = [torch.full((1, 3, 4, 4), 0.5, dtype=torch.float64) for _ in range(5)]
        loss = predictor_loss(frames, Offset(0.1), t=2)
        assert abs(float(loss) - 0.01 * 3) < 1e-12

    def test_window_count_oracle(self):
        frames = [torch.full((1, 3, 2, 2), 0.5, dtype=torch.float64) for _ in range(5)]
        # oracle: n - t windows for n frames
        assert abs(float(predictor_loss(frames, Offset(1.0), t=2)) - 1.0 * (5 - 2)) < 1e-12

    def test_short_clip_rejected(self):
        with pytest.raises(ValidationError):
            predictor_loss([torch.rand(1, 3, 4, 4)] * 2, Offset(), t=2)


class TestWeights:
    def test_defaults_match_published_settings(self):
        weights = Stage2LossWeights()
        assert (weights.lambda_cam, weights.lambda_recycle, weights.lambda_identity,
                weights.lambda_lip, weights.lambda_bl) == (2000.0, 100.0, 10.0, 100.0, 100.0)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            Stage2LossWeights(lambda_cam=-1.0)
