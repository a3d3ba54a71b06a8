"""Error metrics, derivative-at-zero error, FD Hessians, cross-degree eval."""

import math

import numpy as np
import pytest

from cylinfde.evaluation import (
    cross_degree_eval,
    derivative_error_at_zero,
    l1_errors,
    second_derivative_fd,
    second_derivative_kernel,
)
from cylinfde.network import Mlp, forward, input_gradient
from cylinfde.problems import BheConfig, FteConfig, bhe_problem, fte_problem


class TestL1Errors:
    def test_identical_vectors(self):
        rep = l1_errors([1.0, 2.0], [1.0, 2.0])
        assert rep.mean_rel == 0.0 and rep.mean_abs == 0.0
        assert rep.n_points == 2 and rep.n_excluded == 0

    def test_single_point_arithmetic(self):
        rep = l1_errors([1.0], [2.0])
        assert rep.mean_rel == pytest.approx(0.5)
        assert rep.mean_abs == pytest.approx(1.0)

    def test_near_zero_truth_excluded_and_counted(self):
        rep = l1_errors([1.0, 1.0], [0.0, 2.0])
        assert rep.n_excluded == 1
        assert rep.mean_rel == pytest.approx(0.5)
        assert rep.mean_abs == pytest.approx(1.0)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            l1_errors([], [])

    def test_translation_detection(self):
        truth = np.full(50, 3.0)
        pred = truth.copy()
        base = l1_errors(pred, truth).mean_abs
        shifted = l1_errors(pred + 0.25, truth).mean_abs
        assert shifted - base == pytest.approx(0.25, abs=1e-12)

    def test_details_kept_on_request(self):
        rep = l1_errors([1.0, 3.0], [2.0, 0.0], keep_details=True)
        np.testing.assert_allclose(rep.per_point_abs, [1.0, 3.0])
        assert rep.per_point_rel[0] == pytest.approx(0.5)
        assert math.isnan(rep.per_point_rel[1])


class _OracleNet(Mlp):
    """Network stub whose forward is the analytic solution (via closed-form
    parameters is impossible, so tests monkeypatch input_gradient instead)."""


def test_derivative_error_zero_for_analytic_gradient(monkeypatch):
    # Substitute the analytic coefficient gradient for the network's input
    # gradient: the reported error must be exactly zero.
    prob = bhe_problem(BheConfig.delta(6))
    net = Mlp.init(7, 4, dtype=np.float64, seed=0)
    t_eval = 0.0008

    def fake_input_gradient(network, point):
        df_dt, df_da = prob.partials(np.zeros((1, 6)), t_eval)
        return np.concatenate(([df_dt[0]], df_da[0]))

    import cylinfde.evaluation as ev

    monkeypatch.setattr(ev, "input_gradient", fake_input_gradient)
    rep = ev.derivative_error_at_zero(net, prob, t_eval, np.linspace(-0.5, 0.5, 51))
    assert rep.mean_abs == 0.0
    assert rep.mean_rel == 0.0


def test_derivative_truth_is_constant_minus_mu_bar():
    # At theta=0 the first-order derivative of the Burgers-Hopf solution is
    # the constant -mu_bar; an untrained network is far from it.
    prob = bhe_problem(BheConfig.delta(4))
    net = Mlp.init(5, 8, dtype=np.float64, seed=1)
    xs = np.linspace(-0.5, 0.5, 21)
    _, df_da = prob.partials(np.zeros((1, 4)), 0.0005)
    from cylinfde.cylindrical import reconstruct_functional_derivative

    truth = reconstruct_functional_derivative(df_da[0], prob.spec, xs)
    np.testing.assert_allclose(truth, -8.0, atol=1e-12)
    rep = derivative_error_at_zero(net, prob, 0.0005, xs)
    assert rep.n_points == 21
    assert rep.mean_abs > 0


class TestSecondDerivative:
    def test_linear_model_has_zero_hessian(self):
        net = Mlp.init(4, 6, n_blocks=1, layer_norm=False, activation="identity",
                       dtype=np.float64, seed=2)
        h = second_derivative_fd(net, np.zeros(3), 0.5, h=1e-3)
        np.testing.assert_allclose(h, 0.0, atol=1e-9)

    def test_quadratic_oracle_h_independence(self, monkeypatch):
        # For a quadratic-in-a oracle the centered difference of the gradient
        # is exact, so the result cannot depend on h to first order.
        rng = np.random.default_rng(3)
        q = rng.standard_normal((3, 3))
        q = q + q.T

        def quad_gradient(network, pts):
            pts = np.atleast_2d(pts)
            out = np.zeros_like(pts)
            out[:, 1:] = pts[:, 1:] @ q
            return out

        import cylinfde.evaluation as ev

        monkeypatch.setattr(ev, "input_gradient", quad_gradient)
        net = Mlp.init(4, 8, dtype=np.float64, seed=3)
        a = np.full(3, 0.05)
        h1 = ev.second_derivative_fd(net, a, 0.3, h=1e-3)
        h2 = ev.second_derivative_fd(net, a, 0.3, h=5e-4)
        scale = np.abs(h1).max()
        assert np.abs(h1 - h2).max() / scale < 1e-6
        np.testing.assert_allclose(h1, 0.5 * (q + q.T), rtol=1e-9)

    def test_fd_hessian_on_smooth_net_converges(self):
        # On a generic sin network the truncation error shrinks with h.
        net = Mlp.init(4, 8, dtype=np.float64, seed=3)
        a = np.full(3, 0.05)
        h1 = second_derivative_fd(net, a, 0.3, h=2e-3)
        h2 = second_derivative_fd(net, a, 0.3, h=1e-3)
        h3 = second_derivative_fd(net, a, 0.3, h=5e-4)
        scale = np.abs(h3).max()
        assert np.abs(h2 - h3).max() <= np.abs(h1 - h3).max()
        assert np.abs(h2 - h3).max() / scale < 1e-4

    def test_symmetry(self):
        net = Mlp.init(5, 8, dtype=np.float64, seed=4)
        h = second_derivative_fd(net, np.zeros(4), 0.2)
        np.testing.assert_array_equal(h, h.T)

    def test_kernel_reconstruction_against_analytic(self):
        # Hessian of the Burgers-Hopf solution in coefficients is the
        # decay-weighted covariance; check the reconstructed kernel shape.
        prob = bhe_problem(BheConfig.delta(4))
        tau = 0.0006
        h_true = prob.hessian(tau)
        assert h_true[2, 2] == pytest.approx(10.0 * math.exp(-8 * math.pi**2 * tau), rel=1e-12)
        grid = np.linspace(-0.5, 0.5, 11)
        k = second_derivative_kernel(h_true, prob.spec, grid, grid)
        assert k.shape == (11, 11)
        k2 = second_derivative_kernel(h_true, prob.spec, grid[:3], grid)
        np.testing.assert_allclose(k2, k[:3], atol=1e-12)


class TestCrossDegree:
    def _trained_stub(self, m_net):
        # Hand-built network that exactly represents f(a, t) = a_1 - t for the
        # degree-m linear transport solution: one identity block, no norm.
        net = Mlp.init(m_net + 1, 2, n_blocks=1, layer_norm=False,
                       activation="identity", dtype=np.float64)
        for key in net.params:
            net.params[key][...] = 0.0
        net.params["w0"][0, 0] = 1.0   # unit 0 carries t
        net.params["w0"][1, 2] = 1.0   # unit 1 carries a_1
        net.params["w_head"][...] = [-1.0, 1.0]
        return net

    def test_same_degree_matches_standard_eval(self):
        prob = fte_problem(FteConfig.linear(4))
        net = self._trained_stub(4)
        rep = cross_degree_eval(net, prob, n_points=500, seed=1)
        assert rep.mean_abs < 1e-12
        assert rep.mean_rel < 1e-10

    def test_zero_padding_keeps_exactness_downward(self):
        # model trained at m=6 evaluated at m'=3: padding zeros for k >= 3
        prob3 = fte_problem(FteConfig.linear(3))
        net = self._trained_stub(6)
        rep = cross_degree_eval(net, prob3, n_points=500, seed=2)
        assert rep.mean_abs < 1e-12

    def test_upward_zero_padding_rejected_but_truncation_works(self):
        prob = fte_problem(FteConfig.linear(8))
        net = self._trained_stub(4)
        with pytest.raises(ValueError, match="zero-pad"):
            cross_degree_eval(net, prob, mode="zero_pad")
        # truncation: the degree-4 stub reproduces a_1 - t exactly, and the
        # degree-8 linear-IC truth is the same function of (t, a_1)
        rep = cross_degree_eval(net, prob, n_points=400, seed=4, mode="truncate")
        assert rep.mean_abs < 1e-12
        rep_auto = cross_degree_eval(net, prob, n_points=400, seed=4)
        assert rep_auto.mean_abs < 1e-12

    def test_untrained_network_scores_order_one(self):
        prob = fte_problem(FteConfig.linear(4))
        net = Mlp.init(5, 8, dtype=np.float64, seed=5)
        net.params["w_head"][...] = 0.0
        net.params["b_head"][...] = 0.0
        rep = cross_degree_eval(net, prob, n_points=2000, seed=3)
        # f == 0 predictor: abs error equals mean |analytic|
        from cylinfde.training import latin_hypercube

        pts = latin_hypercube(2000, prob.sampler_ranges, 3)
        expected = np.abs(prob.analytic(pts[:, 1:], pts[:, 0])).mean()
        assert rep.mean_abs == pytest.approx(expected, rel=1e-6)
