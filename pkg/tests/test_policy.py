import math

import numpy as np
import pytest
import torch
from scipy import integrate, stats

from rpl_racer.dynamics import HighLevelAction, VehicleState
from rpl_racer.observation import (FRAME_FEATURES, N_STACK,
                                   ObservationBuilder, ObservationLayout)
from rpl_racer.params import VehicleParams
from rpl_racer.policy import (ActorCritic, ResidualScale, compute_reward,
                              mean_action, residual_compose, sample_action,
                              tanh_normal_log_prob)


class TestLayout:
    def test_default_dimension(self):
        lay = ObservationLayout()
        assert len(FRAME_FEATURES) == 11
        assert lay.dim == 1080 + 2 * 20 + 3 * 11 == 1153

    def test_slices_partition(self):
        lay = ObservationLayout(n_beams=8, n_waypoints=3, n_stack=2)
        assert lay.lidar_slice == slice(0, 8)
        assert lay.waypoint_slice == slice(8, 14)
        assert lay.dim == 8 + 6 + 2 * 11

    def test_describe_roundtrip(self):
        lay = ObservationLayout(n_beams=16, n_waypoints=4)
        assert ObservationLayout.from_json(lay.describe()) == lay


class TestObservationBuilder:
    def make(self, n_beams=6, n_wp=2, n_stack=3):
        lay = ObservationLayout(n_beams=n_beams, n_waypoints=n_wp,
                                n_stack=n_stack)
        return ObservationBuilder(layout=lay), lay

    def args(self, v=2.0, psi=0.1):
        s = VehicleState(v=v, psi=psi, psi_dot=0.2, beta=0.05)
        return (s, (0.3, -0.4), HighLevelAction(0.01, 2.5),
                HighLevelAction(0.02, 2.6))

    def test_first_frame_padding(self):
        b, lay = self.make()
        scan = np.arange(6.0)
        wps = np.array([[1.0, 0.0], [2.0, 0.5]])
        obs = b.build(scan, wps, *self.args())
        assert obs.shape == (lay.dim,)
        np.testing.assert_array_equal(obs[:6], scan)
        np.testing.assert_array_equal(obs[6:10], [1, 0, 2, 0.5])
        frames = obs[10:].reshape(3, 11)
        # episode start: history padded by repeating the first frame
        np.testing.assert_array_equal(frames[0], frames[1])
        np.testing.assert_array_equal(frames[1], frames[2])

    def test_frames_shift_oldest_first(self):
        b, lay = self.make()
        scan = np.zeros(6)
        wps = np.zeros((2, 2))
        o1 = b.build(scan, wps, *self.args(v=1.0))
        o2 = b.build(scan, wps, *self.args(v=2.0))
        o3 = b.build(scan, wps, *self.args(v=3.0))
        f = o3[10:].reshape(3, 11)
        c, s = math.cos(0.1), math.sin(0.1)
        # v_x = v * cos(beta) in the body frame
        np.testing.assert_allclose(
            f[:, 0], [1.0 * math.cos(0.05), 2.0 * math.cos(0.05),
                      3.0 * math.cos(0.05)])
        # reset clears history
        b.reset()
        o4 = b.build(scan, wps, *self.args(v=5.0))
        f4 = o4[10:].reshape(3, 11)
        np.testing.assert_array_equal(f4[0], f4[2])

    def test_frame_feature_order(self):
        b, lay = self.make()
        s = VehicleState(v=2.0, psi=0.3, psi_dot=0.7, beta=0.1)
        obs = b.build(np.zeros(6), np.zeros((2, 2)), s, (1.5, -2.5),
                      HighLevelAction(0.04, 3.0), HighLevelAction(-0.02, 2.0))
        f = obs[10:21]
        v_x, v_y = s.v_body
        np.testing.assert_allclose(
            f, [v_x, v_y, 1.5, -2.5, 0.3, 0.7, 0.1, 0.04, 3.0, -0.02, 2.0])

    def test_rejects_non_finite(self):
        b, _ = self.make()
        with pytest.raises(ValueError):
            b.build(np.full(6, np.nan), np.zeros((2, 2)), *self.args())

    def test_rejects_wrong_size(self):
        b, _ = self.make()
        with pytest.raises(ValueError):
            b.build(np.zeros(7), np.zeros((2, 2)), *self.args())


def naive_forward(net, obs):
    """Loop-based float64 re-implementation of the network forward pass."""
    lay = net.layout
    x = obs[: lay.n_beams].astype(np.float64)
    rest = obs[lay.n_beams:].astype(np.float64)

    def conv1d(x_in, weight, bias, stride):
        c_out, c_in, k = weight.shape
        n_out = (x_in.shape[1] - k) // stride + 1
        out = np.zeros((c_out, n_out))
        for co in range(c_out):
            for t in range(n_out):
                acc = bias[co]
                for ci in range(c_in):
                    for j in range(k):
                        acc += weight[co, ci, j] * x_in[ci, t * stride + j]
                out[co, t] = acc
        return out

    def avgpool(x_in, p):
        n_out = x_in.shape[1] // p
        out = np.zeros((x_in.shape[0], n_out))
        for c in range(x_in.shape[0]):
            for t in range(n_out):
                out[c, t] = x_in[c, t * p: (t + 1) * p].mean()
        return out

    relu = lambda a: np.maximum(a, 0.0)
    w1 = net.conv1.weight.detach().numpy().astype(np.float64)
    b1 = net.conv1.bias.detach().numpy().astype(np.float64)
    w2 = net.conv2.weight.detach().numpy().astype(np.float64)
    b2 = net.conv2.bias.detach().numpy().astype(np.float64)

    z = avgpool(relu(conv1d(x[None, :], w1, b1, net.conv1.stride[0])), 2)
    z = avgpool(relu(conv1d(z, w2, b2, net.conv2.stride[0])), 2)
    z = z.reshape(-1)

    def linear(v, layer):
        w = layer.weight.detach().numpy().astype(np.float64)
        b = layer.bias.detach().numpy().astype(np.float64)
        return w @ v + b

    z = relu(linear(z, net.embed))
    feats = np.concatenate([z, rest])

    def mlp(v, seq):
        v = relu(linear(v, seq[0]))
        v = relu(linear(v, seq[2]))
        return linear(v, seq[4])

    return mlp(feats, net.actor), float(mlp(feats, net.critic)[0])


class TestActorCritic:
    def small_net(self):
        torch.manual_seed(0)
        lay = ObservationLayout(n_beams=64, n_waypoints=4, n_stack=2)
        return ActorCritic(layout=lay, embed_dim=16, hidden=(24, 16)), lay

    def test_forward_matches_naive_oracle(self):
        net, lay = self.small_net()
        rng = np.random.default_rng(41)
        obs = rng.normal(size=lay.dim)
        mean, log_std, value = net(torch.tensor(obs[None, :],
                                                dtype=torch.float32))
        ref_mean, ref_value = naive_forward(net, obs)
        np.testing.assert_allclose(mean[0].detach().numpy(), ref_mean,
                                   rtol=0, atol=1e-5)
        assert float(value[0].detach()) == pytest.approx(ref_value, abs=1e-4)
        np.testing.assert_allclose(log_std.detach().numpy(),
                                   math.log(0.5), atol=1e-7)

    def test_initial_residual_near_zero(self):
        net, lay = self.small_net()
        rng = np.random.default_rng(42)
        obs = torch.tensor(rng.normal(size=(16, lay.dim)),
                           dtype=torch.float32)
        mean, _, _ = net(obs)
        assert mean.abs().max() < 0.1

    def test_shape_validation(self):
        net, lay = self.small_net()
        with pytest.raises(ValueError):
            net(torch.zeros(1, lay.dim + 1))
        with pytest.raises(ValueError):
            net(torch.zeros(lay.dim))

    def test_default_layout_dim(self):
        net = ActorCritic()
        out = net(torch.zeros(2, 1153))
        assert out[0].shape == (2, 2) and out[2].shape == (2,)


class TestTanhNormal:
    def test_log_prob_integrates_to_one(self):
        """2D quadrature of the squashed density over (-1, 1)^2."""
        mean = torch.tensor([0.3, -0.2], dtype=torch.float64)
        log_std = torch.tensor([math.log(0.7), math.log(0.4)],
                               dtype=torch.float64)

        def density(a0, a1):
            u = np.arctanh(np.clip([a0, a1], -1 + 1e-12, 1 - 1e-12))
            lp = tanh_normal_log_prob(mean, log_std,
                                      torch.tensor(u, dtype=torch.float64))
            return math.exp(float(lp))

        total, _ = integrate.dblquad(density, -1 + 1e-9, 1 - 1e-9,
                                     -1 + 1e-9, 1 - 1e-9, epsabs=1e-6)
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_matches_change_of_variables_formula(self):
        mean = torch.tensor([0.1], dtype=torch.float64)
        log_std = torch.tensor([math.log(0.5)], dtype=torch.float64)
        u = torch.tensor([0.8], dtype=torch.float64)
        lp = float(tanh_normal_log_prob(mean, log_std, u))
        ref = (stats.norm.logpdf(0.8, loc=0.1, scale=0.5)
               - math.log(1.0 - math.tanh(0.8) ** 2 + 1e-6))
        assert lp == pytest.approx(float(ref), abs=1e-12)

    def test_monte_carlo_cdf_agreement(self):
        """Sampled actions follow tanh(Normal): compare the empirical CDF
        with the analytic one at several probes."""
        torch.manual_seed(7)
        mean = torch.zeros(200_000, 2) + torch.tensor([0.2, -0.5])
        log_std = torch.tensor([math.log(0.6), math.log(0.8)])
        _, a, _ = sample_action(mean, log_std)
        a = a.numpy()
        for dim, (mu, sd) in enumerate([(0.2, 0.6), (-0.5, 0.8)]):
            for probe in (-0.5, 0.0, 0.5):
                emp = (a[:, dim] <= probe).mean()
                ana = stats.norm.cdf(np.arctanh(probe), loc=mu, scale=sd)
                assert emp == pytest.approx(ana, abs=0.005)

    def test_zero_std_collapses_to_mode(self):
        mean = torch.tensor([[0.4, -1.2]])
        log_std = torch.tensor([-40.0, -40.0])
        _, a, _ = sample_action(mean, log_std)
        np.testing.assert_allclose(a.numpy(), np.tanh(mean.numpy()),
                                   atol=1e-9)
        np.testing.assert_allclose(mean_action(mean).numpy(),
                                   np.tanh(mean.numpy()), atol=1e-12)

    def test_samples_bounded_with_finite_log_prob(self):
        torch.manual_seed(8)
        mean = torch.zeros(10_000, 2)
        _, a, lp = sample_action(mean, torch.tensor([1.0, 1.0]))
        # tanh may saturate to exactly +-1 in float32; the density
        # regularization keeps the log-prob finite there
        assert a.abs().max() <= 1.0
        assert torch.isfinite(lp).all()

    def test_generator_reproducibility(self):
        mean = torch.zeros(5, 2)
        log_std = torch.zeros(2)
        g1 = torch.Generator().manual_seed(3)
        g2 = torch.Generator().manual_seed(3)
        u1, a1, _ = sample_action(mean, log_std, generator=g1)
        u2, a2, _ = sample_action(mean, log_std, generator=g2)
        assert torch.equal(u1, u2) and torch.equal(a1, a2)


class TestResidualCompose:
    def test_hand_examples(self, params):
        sc = ResidualScale()
        a = residual_compose([0.5, -0.5], sc, HighLevelAction(0.1, 3.0),
                             params)
        assert a.steer == pytest.approx(0.1 + 0.05 * 0.5, abs=1e-12)
        assert a.speed == pytest.approx(3.0 - 0.5, abs=1e-12)

    def test_clamped_to_bounds(self, params):
        sc = ResidualScale()
        a = residual_compose([1.0, 1.0], sc, HighLevelAction(0.40, 7.8),
                             params)
        assert a.steer == 0.4189
        assert a.speed == 8.0
        a = residual_compose([-1.0, -1.0], sc, HighLevelAction(-0.40, 0.5),
                             params)
        assert a.steer == -0.4189
        assert a.speed == 0.0

    def test_zero_residual_is_identity(self, params):
        base = HighLevelAction(0.12, 4.2)
        a = residual_compose([0.0, 0.0], ResidualScale(), base, params)
        assert (a.steer, a.speed) == (0.12, 4.2)


class TestReward:
    def test_examples(self):
        assert compute_reward(5.0, 0.0, False) == pytest.approx(0.015,
                                                                abs=1e-15)
        assert compute_reward(0.0, 2.0, False) == pytest.approx(-0.012,
                                                                abs=1e-15)
        assert compute_reward(3.0, 1.0, True) == pytest.approx(
            0.009 - 0.003 - 50.0, abs=1e-12)

    def test_lateral_penalty_is_even(self):
        assert compute_reward(1.0, 0.7, False) == compute_reward(1.0, -0.7,
                                                                 False)
