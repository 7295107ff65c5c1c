"""Window detectors: score vector/run, GLR window/run, Shewhart chart.

Score oracles are central finite differences on the window log-likelihood;
GLR statistics are re-derived from log_likelihood on the fitted matrix, so
every claim here bottoms out in the quadrature-checked likelihood.
"""

import logging

import numpy as np
import pytest

import hawkscan as hs
from hawkscan import EmConfig, EventStream, HawkesModel, WindowConfig
from hawkscan.detectors import glr_window, score_vector

from helpers import (
    exp_kernel,
    net1,
    net2,
    net3,
    random_model,
    random_stream,
    score_fd,
)

log = logging.getLogger(__name__)


def _rekernel(model, kernel):
    return HawkesModel(mu=model.mu.copy(), A=model.A.copy(), kernel=kernel)


def _pd_matrix(rng, n, diag=1.0):
    """Random symmetric positive definite matrix with controlled scale."""
    m = rng.normal(size=(n, n)) * 0.1
    return diag * np.eye(n) + m @ m.T


class TestScoreVector:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(61)
        for trial in range(12):
            d = int(rng.integers(1, 4))
            model = random_model(rng, d=d)
            events = random_stream(rng, model, 30.0)
            a = float(rng.uniform(0.0, 5.0))
            window = (a, a + float(rng.uniform(8.0, 20.0)))
            u = score_vector(model, events, window)
            u_fd = score_fd(model, events, window)
            err = np.max(np.abs(u - u_fd) / np.maximum(np.abs(u_fd), 1.0))
            assert err < 1e-4, f"trial {trial}: score/FD mismatch {err:.2e}"

    def test_additive_over_windows(self):
        # Count and integral terms restrict to the window while the
        # intensity keeps full history, so scores add over a partition.
        rng = np.random.default_rng(62)
        model = net3()
        events = random_stream(rng, model, 40.0)
        full = score_vector(model, events, (2.0, 38.0))
        parts = (
            score_vector(model, events, (2.0, 13.0))
            + score_vector(model, events, (13.0, 26.0))
            + score_vector(model, events, (26.0, 38.0))
        )
        np.testing.assert_allclose(parts, full, rtol=1e-9, atol=1e-12)

    def test_ignores_events_after_window(self):
        rng = np.random.default_rng(63)
        model = net2()
        events = random_stream(rng, model, 50.0)
        cut = np.searchsorted(events.times, 30.0, side="right")
        head = EventStream(
            events.times[:cut].copy(), events.nodes[:cut].copy(), 2, 30.0
        )
        np.testing.assert_allclose(
            score_vector(model, events, (5.0, 30.0)),
            score_vector(model, head, (5.0, 30.0)),
            rtol=0,
            atol=1e-12,
        )

    def test_truncated_kernel_against_fd(self):
        rng = np.random.default_rng(64)
        model = _rekernel(net2(), exp_kernel(truncation=2.0))
        events = random_stream(rng, model, 25.0)
        u = score_vector(model, events, (3.0, 22.0))
        u_fd = score_fd(model, events, (3.0, 22.0))
        err = np.max(np.abs(u - u_fd) / np.maximum(np.abs(u_fd), 1.0))
        assert err < 1e-4

    def test_row_block_layout(self):
        # Coordinate i*D + j must differentiate in alpha_ij: feed a stream
        # where only node 1 has history, so only columns j=1 see mass.
        model = net2()
        times = np.array([1.0, 2.0, 3.5, 4.0])
        nodes = np.array([1, 1, 0, 1])
        events = EventStream(times, nodes, 2, 6.0)
        u = score_vector(model, events, (3.0, 6.0))
        d = 2
        # alpha_01 and alpha_11 entries carry the node-1 history influence;
        # the j=0 columns only see the single node-0 event at 3.5.
        assert abs(u[0 * d + 1]) > abs(u[0 * d + 0])
        assert abs(u[1 * d + 1]) > abs(u[1 * d + 0])

    def test_rejects_bad_window(self):
        model = net1()
        events = random_stream(np.random.default_rng(0), model, 10.0)
        with pytest.raises(ValueError):
            score_vector(model, events, (5.0, 5.0))
        with pytest.raises(ValueError):
            score_vector(model, events, (-1.0, 4.0))
        with pytest.raises(ValueError):
            score_vector(model, events, (2.0, 11.5))


class TestScoreRun:
    def _stat_oracle(self, model, i0, events, cfg):
        """Window-by-window quadratic form via an independent solve."""
        n_start = int(np.ceil(cfg.w / cfg.gamma - 1e-9))
        n_end = int(np.floor(min(events.horizon, cfg.max_time) / cfg.gamma + 1e-9)) + 1
        stats = []
        for n in range(n_start, n_end):
            t1 = n * cfg.gamma
            u = score_vector(model, events, (t1 - cfg.w, t1))
            stats.append(float(u @ np.linalg.solve(i0, u)) / cfg.w)
        return np.asarray(stats)

    def test_trajectory_matches_per_window_oracle(self):
        rng = np.random.default_rng(71)
        model = net2()
        events = hs.simulate(model, hs.SimConfig(horizon=60.0, seed=710))
        i0 = _pd_matrix(rng, 4, diag=0.8)
        cfg = WindowConfig(w=12.0, gamma=1.5, b=np.inf, max_time=60.0)
        out = hs.score_run(model, i0, events, cfg)
        oracle = self._stat_oracle(model, i0, events, cfg)
        assert out.trajectory.shape[0] == oracle.size
        np.testing.assert_allclose(out.trajectory[:, 1], oracle, rtol=1e-8)
        # Grid starts at the first full window.
        assert out.trajectory[0, 0] == pytest.approx(12.0)

    def test_alarm_is_first_crossing(self):
        rng = np.random.default_rng(72)
        model = net1(a=0.3)
        events = hs.simulate(model, hs.SimConfig(horizon=400.0, seed=720))
        i0 = np.array([[0.9]])
        free = hs.score_run(
            model, i0, events, WindowConfig(w=10.0, gamma=0.5, max_time=400.0)
        )
        s = free.trajectory[:, 1]
        b = float(np.quantile(s, 0.8))
        out = hs.score_run(
            model, i0, events, WindowConfig(w=10.0, gamma=0.5, b=b, max_time=400.0)
        )
        assert out.alarmed
        k = out.trajectory.shape[0] - 1
        assert out.trajectory[k, 1] >= b
        assert np.all(out.trajectory[:k, 1] < b)
        assert out.T == pytest.approx(out.trajectory[k, 0])
        assert out.tau_hat == pytest.approx(out.T - 10.0)

    def test_truncated_kernel_path_consistent(self):
        # Truncated kernels drop to the window-by-window path; a large
        # truncation bound must reproduce the fused exponential result.
        model = net2()
        model_tr = _rekernel(net2(), exp_kernel(truncation=60.0))
        events = hs.simulate(model, hs.SimConfig(horizon=50.0, seed=730))
        i0 = _pd_matrix(np.random.default_rng(73), 4)
        cfg = WindowConfig(w=8.0, gamma=2.0, max_time=50.0)
        fused = hs.score_run(model, i0, events, cfg)
        looped = hs.score_run(model_tr, i0, events, cfg)
        np.testing.assert_allclose(
            fused.trajectory[:, 1], looped.trajectory[:, 1], rtol=1e-7, atol=1e-9
        )

    def test_h0_statistic_level(self):
        # Long-run H0 mean of the score statistic sits near D**2 when the
        # Fisher matrix is estimated well.
        model = net1(mu=1.2, a=0.4)
        i0 = hs.fisher_info_mc(model, sim_length=600.0, window=500.0, reps=64, seed=74)
        events = hs.simulate(model, hs.SimConfig(horizon=4000.0, seed=740))
        out = hs.score_run(
            model, i0, events, WindowConfig(w=60.0, gamma=2.0, max_time=4000.0)
        )
        mean = float(out.trajectory[:, 1].mean())
        log.info("H0 score mean %.3f (target 1)", mean)
        assert 0.7 < mean < 1.35

    def test_rejects_bad_fisher(self):
        model = net2()
        events = random_stream(np.random.default_rng(75), model, 30.0)
        cfg = WindowConfig(w=5.0, gamma=1.0, max_time=30.0)
        with pytest.raises(ValueError, match="positive definite"):
            hs.score_run(model, np.array([[1.0, 2.0], [2.0, 1.0]] ), events, cfg)
        with pytest.raises(ValueError, match="symmetric"):
            hs.score_run(model, np.arange(16.0).reshape(4, 4), events, cfg)
        with pytest.raises(ValueError):
            hs.score_run(model, np.ones((3, 4)), events, cfg)

    def test_max_time_censors(self):
        model = net1(a=0.3)
        events = hs.simulate(model, hs.SimConfig(horizon=200.0, seed=76))
        out = hs.score_run(
            model,
            np.array([[0.9]]),
            events,
            WindowConfig(w=10.0, gamma=1.0, b=np.inf, max_time=80.0),
        )
        assert not out.alarmed
        assert out.T <= 80.0
        assert out.trajectory[-1, 0] <= 80.0


class TestGlrWindow:
    def test_stat_rederived_from_likelihood(self):
        rng = np.random.default_rng(81)
        for trial in range(6):
            d = int(rng.integers(1, 3))
            pre = random_model(rng, d=d)
            events = random_stream(rng, pre, 30.0)
            window = (4.0, 28.0)
            a_hat, stat = glr_window(pre, events, window)
            fitted = HawkesModel(mu=pre.mu, A=a_hat, kernel=pre.kernel)
            ll1 = hs.log_likelihood(fitted, events, window, history_start=window[0])
            ll0 = hs.log_likelihood(pre, events, window)
            assert stat == pytest.approx(ll1 - ll0, rel=1e-9, abs=1e-9)

    def test_nonnegative_up_to_tolerance(self):
        rng = np.random.default_rng(82)
        for trial in range(8):
            pre = random_model(rng, d=2)
            events = random_stream(rng, pre, 25.0)
            _, stat = glr_window(pre, events, (2.0, 24.0))
            assert stat > -1e-6, f"trial {trial}: GLR stat {stat:.3e} negative"

    def test_detects_planted_change(self):
        pre = net1(mu=1.0, a=0.0)
        post = net1(mu=1.0, a=0.6)
        events = hs.simulate(post, hs.SimConfig(horizon=300.0, seed=83))
        a_hat, stat = glr_window(pre, events, (100.0, 300.0))
        assert stat > 20.0
        assert abs(float(a_hat[0, 0]) - 0.6) < 0.15

    def test_requires_shared_kernel(self):
        table = np.empty((1, 1), dtype=object)
        table[0, 0] = exp_kernel()
        pre = HawkesModel(mu=np.array([1.0]), A=np.array([[0.2]]), kernel=table)
        events = random_stream(np.random.default_rng(84), net1(), 10.0)
        with pytest.raises(ValueError, match="shared kernel"):
            glr_window(pre, events, (0.0, 10.0))


class TestGlrRun:
    def test_reference_path_is_warm_started_em_chain(self):
        # Truncated kernel forces the window-by-window path; replicate its
        # warm-start discipline by hand and demand an exact match.
        pre = _rekernel(net2(), exp_kernel(truncation=30.0))
        events = hs.simulate(net2(), hs.SimConfig(horizon=40.0, seed=91))
        cfg = WindowConfig(w=10.0, gamma=2.5, max_time=40.0)
        em = EmConfig(tol=1e-4, max_iter=150, init=0.1)
        out = hs.glr_run(pre, events, cfg, em=em)

        stats = []
        a_prev = 0.1
        for n in range(4, 17):
            t1 = n * 2.5
            win_em = EmConfig(tol=1e-4, max_iter=150, init=a_prev)
            fit = hs.em_fit(events, (t1 - 10.0, t1), pre.shared_kernel, pre.mu, win_em)
            ll0 = hs.log_likelihood(pre, events, (t1 - 10.0, t1))
            stats.append(fit.ll - ll0)
            if fit.n_iter > 0:
                a_prev = np.maximum(fit.a_hat, 1e-6)
        np.testing.assert_allclose(out.trajectory[:, 1], stats, rtol=1e-10, atol=1e-10)
        assert out.em_iters is not None and out.em_iters.size == len(stats)

    def test_engine_path_matches_reference_path(self):
        # Same exponential kernel, once untruncated (fused engine loop) and
        # once truncated far beyond the data span (reference loop).
        pre = net2()
        pre_tr = _rekernel(net2(), exp_kernel(truncation=80.0))
        events = hs.simulate(pre, hs.SimConfig(horizon=70.0, seed=92))
        cfg = WindowConfig(w=12.0, gamma=3.0, max_time=70.0)
        fused = hs.glr_run(pre, events, cfg)
        looped = hs.glr_run(pre_tr, events, cfg)
        np.testing.assert_allclose(
            fused.trajectory[:, 1], looped.trajectory[:, 1], atol=5e-4, rtol=1e-4
        )

    def test_alarm_and_censoring(self):
        pre = net1(mu=1.0, a=0.1)
        post = net1(mu=1.0, a=0.55)
        events = hs.simulate_with_change(
            hs.ChangeSpec(pre=pre, post=post, kappa=60.0),
            hs.SimConfig(horizon=220.0, seed=93),
        )
        cfg = WindowConfig(w=25.0, gamma=5.0, b=6.0, max_time=220.0)
        out = hs.glr_run(pre, events, cfg)
        assert out.alarmed
        assert out.T > 60.0
        assert out.trajectory[-1, 1] >= 6.0
        assert np.all(out.trajectory[:-1, 1] < 6.0)
        censored = hs.glr_run(pre, events, WindowConfig(w=25.0, gamma=5.0, b=6.0, max_time=50.0))
        assert not censored.alarmed
        assert censored.T <= 50.0


class TestShewhart:
    def test_hand_checked_counts(self):
        times = np.array([0.4, 0.9, 1.2, 2.1, 2.5, 2.9, 3.0])
        nodes = np.zeros(7, dtype=np.int64)
        events = EventStream(times, nodes, 1, 4.0)
        out = hs.shewhart_run(events, WindowConfig(w=2.0, gamma=1.0, b=np.inf))
        # Windows (t-2, t] for t = 2, 3, 4.
        np.testing.assert_array_equal(out.trajectory[:, 1], [3.0, 5.0, 4.0])
        assert not out.alarmed

    def test_boundary_conventions(self):
        # Event exactly at t counts; event exactly at t - w does not.
        times = np.array([1.0, 3.0])
        events = EventStream(times, np.zeros(2, dtype=np.int64), 1, 3.0)
        out = hs.shewhart_run(events, WindowConfig(w=2.0, gamma=3.0, b=np.inf))
        assert out.trajectory[0, 0] == pytest.approx(3.0)
        assert out.trajectory[0, 1] == 1.0

    def test_upper_and_lower_alarms(self):
        rng = np.random.default_rng(95)
        events = random_stream(rng, net1(mu=1.5), 100.0)
        cfg = WindowConfig(w=20.0, gamma=1.0, b=np.inf, max_time=100.0)
        counts = hs.shewhart_run(events, cfg).trajectory[:, 1]
        hi = float(np.quantile(counts, 0.85))
        out_hi = hs.shewhart_run(events, WindowConfig(w=20.0, gamma=1.0, b=hi, max_time=100.0))
        assert out_hi.alarmed
        k = out_hi.trajectory.shape[0] - 1
        assert out_hi.trajectory[k, 1] > hi
        assert np.all(
            (out_hi.trajectory[:k, 1] >= 0) & (out_hi.trajectory[:k, 1] <= hi)
        )
        lo = float(np.quantile(counts, 0.15))
        out_lo = hs.shewhart_run(
            events, WindowConfig(w=20.0, gamma=1.0, b=np.inf, b1=lo, max_time=100.0)
        )
        assert out_lo.alarmed
        assert out_lo.trajectory[-1, 1] < lo

    def test_multivariate_counts_all_nodes(self):
        times = np.array([0.5, 1.0, 1.5, 2.0])
        nodes = np.array([0, 1, 2, 1])
        events = EventStream(times, nodes, 3, 2.0)
        out = hs.shewhart_run(events, WindowConfig(w=2.0, gamma=2.0, b=np.inf))
        assert out.trajectory[0, 1] == 4.0


class TestWindowConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            WindowConfig(w=0.0)
        with pytest.raises(ValueError):
            WindowConfig(gamma=-0.1)
        with pytest.raises(ValueError):
            WindowConfig(b=2.0, b1=3.0)
        with pytest.raises(ValueError):
            WindowConfig(b1=-1.0)
        with pytest.raises(ValueError):
            WindowConfig(max_time=0.0)

    def test_fractional_grid_start(self):
        # w/gamma is not an integer; the first evaluated point is the
        # smallest grid multiple with a full window behind it.
        events = EventStream(
            np.array([0.5, 5.0]), np.zeros(2, dtype=np.int64), 1, 20.0
        )
        out = hs.shewhart_run(events, WindowConfig(w=7.0, gamma=3.0, b=np.inf))
        assert out.trajectory[0, 0] == pytest.approx(9.0)
