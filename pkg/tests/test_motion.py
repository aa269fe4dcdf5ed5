import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvloc.motion import (
    ControlAction,
    MotionNoise,
    Pose,
    ZERO_NOISE,
    make_rng,
    perturb_control,
    sample_motion,
    sample_motion_batch,
    simulate_odometry,
    wrap_angle,
)


class TestWrapAngle:
    def test_zero(self):
        assert wrap_angle(0.0) == 0.0

    def test_three_pi(self):
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)

    def test_negative_three_and_a_half_pi(self):
        # -3.5*pi = -4*pi + 0.5*pi, congruent to +0.5*pi
        assert wrap_angle(-3.5 * math.pi) == pytest.approx(0.5 * math.pi)

    def test_negative_pi_maps_to_positive_pi(self):
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    @given(st.floats(-1e6, 1e6))
    def test_range_and_congruence(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi + 1e-12
        # congruent mod 2*pi
        assert math.remainder(w - a, 2 * math.pi) == pytest.approx(0.0, abs=1e-6)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            wrap_angle(float("inf"))


class TestPose:
    def test_theta_wrapped_on_construction(self):
        assert Pose(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Pose(float("nan"), 0, 0)


class TestSampleMotion:
    def test_straight_ahead(self):
        p = sample_motion(Pose(0, 0, 0), ControlAction(1.0, 0.0), ZERO_NOISE, make_rng(0))
        assert (p.x, p.y, p.theta) == pytest.approx((1.0, 0.0, 0.0))

    def test_quarter_turn_then_translate(self):
        # rotation applies before the trig terms: cos(pi/2)=0, sin(pi/2)=1
        p = sample_motion(Pose(0, 0, 0), ControlAction(1.0, math.pi / 2), ZERO_NOISE, make_rng(0))
        assert p.x == pytest.approx(0.0, abs=1e-15)
        assert p.y == pytest.approx(1.0)
        assert p.theta == pytest.approx(math.pi / 2)

    def test_null_action_is_identity(self):
        prev = Pose(3.0, -2.0, 0.4)
        p = sample_motion(prev, ControlAction(0.0, 0.0), ZERO_NOISE, make_rng(0))
        assert (p.x, p.y, p.theta) == (prev.x, prev.y, prev.theta)

    def test_sampled_mean_converges_to_noiseless_pose(self):
        # statistical oracle: mean of 10k samples within 3*sigma/sqrt(10k)
        noise = MotionNoise()  # defaults
        u = ControlAction(1.0, 0.2)
        target = sample_motion(Pose(0, 0, 0), u, ZERO_NOISE, make_rng(0))
        states = sample_motion_batch(np.zeros((10_000, 3)), u, noise, make_rng(99))
        s_trans, s_rot = noise.effective(u)
        tol_xy = 3 * s_trans / 100.0 + 3 * s_rot / 100.0  # rot noise couples into xy
        assert states[:, 0].mean() == pytest.approx(target.x, abs=tol_xy)
        assert states[:, 1].mean() == pytest.approx(target.y, abs=tol_xy)
        assert states[:, 2].mean() == pytest.approx(target.theta, abs=3 * s_rot / 100.0)

    def test_batch_matches_scalar_distribution_determinism(self):
        noise = MotionNoise()
        u = ControlAction(2.0, -0.1)
        a = sample_motion_batch(np.zeros((5, 3)), u, noise, make_rng(7))
        b = sample_motion_batch(np.zeros((5, 3)), u, noise, make_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_theta_always_wrapped(self):
        states = np.zeros((100, 3))
        states[:, 2] = 3.0
        out = sample_motion_batch(states, ControlAction(0.0, 3.0), MotionNoise(0, 1.0, 0, 0), make_rng(1))
        assert np.all(out[:, 2] > -math.pi) and np.all(out[:, 2] <= math.pi)


class TestSimulateOdometry:
    def test_identical_poses(self):
        p = Pose(1.0, 2.0, 0.3)
        u = simulate_odometry(p, Pose(1.0, 2.0, 0.3))
        assert (u.delta_trans, u.delta_rot) == (0.0, 0.0)

    def test_pythagorean_translation(self):
        u = simulate_odometry(Pose(0, 0, 0), Pose(3.0, 4.0, 0.0))
        assert u.delta_trans == pytest.approx(5.0)
        assert u.delta_rot == 0.0

    def test_heading_wraps_the_short_way(self):
        # 350 deg -> 10 deg is +20 deg, not -340
        u = simulate_odometry(Pose(0, 0, math.radians(350)), Pose(0, 0, math.radians(10)))
        assert u.delta_rot == pytest.approx(math.radians(20.0))

    def test_inverse_property(self):
        # when the target lies along theta_prev + delta_rot, replaying the
        # odometry under zero noise reproduces the target position
        prev = Pose(1.0, -2.0, 0.5)
        d_rot, d_trans = 0.3, 2.5
        heading = prev.theta + d_rot
        target = Pose(prev.x + d_trans * math.cos(heading), prev.y + d_trans * math.sin(heading), heading)
        u = simulate_odometry(prev, target)
        replay = sample_motion(prev, u, ZERO_NOISE, make_rng(0))
        assert replay.x == pytest.approx(target.x, abs=1e-9)
        assert replay.y == pytest.approx(target.y, abs=1e-9)
        assert replay.theta == pytest.approx(target.theta, abs=1e-12)


class TestPerturbControl:
    def test_zero_noise_is_identity(self):
        u = ControlAction(1.0, 0.5)
        assert perturb_control(u, ZERO_NOISE, make_rng(0)) == u

    def test_deterministic_per_seed(self):
        u = ControlAction(1.0, 0.5)
        noise = MotionNoise()
        a = perturb_control(u, noise, make_rng(3))
        b = perturb_control(u, noise, make_rng(3))
        assert a == b


class TestMotionNoise:
    def test_effective_sigma_scales_with_action(self):
        noise = MotionNoise(0.1, 0.01, 0.02, 0.01)
        s_trans, s_rot = noise.effective(ControlAction(5.0, -2.0))
        assert s_trans == pytest.approx(0.1 + 0.02 * 5.0)
        assert s_rot == pytest.approx(0.01 + 0.01 * 2.0)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            MotionNoise(-0.1, 0.0, 0.0, 0.0)

    def test_identical_seeds_identical_streams(self):
        a, b = make_rng(12345), make_rng(12345)
        assert np.array_equal(a.normal(size=10), b.normal(size=10))
