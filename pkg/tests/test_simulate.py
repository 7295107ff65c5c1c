"""Thinning simulator: determinism, distributional checks, change handling."""

import numpy as np
import pytest

from hawkscan import (
    ChangeSpec,
    EventStream,
    HawkesModel,
    SimConfig,
    empirical_rate,
    mean_field_intensity,
    rng_stream,
    simulate,
    simulate_with_change,
)

from helpers import exp_kernel, net1, net2, net3, tabulated_exp


class TestDeterminism:
    def test_same_seed_same_stream(self):
        m = net2()
        a = simulate(m, SimConfig(horizon=200.0, seed=42))
        b = simulate(m, SimConfig(horizon=200.0, seed=42))
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.nodes, b.nodes)

    def test_different_seeds_differ(self):
        m = net2()
        a = simulate(m, SimConfig(horizon=100.0, seed=0))
        b = simulate(m, SimConfig(horizon=100.0, seed=1))
        assert a.times.size != b.times.size or not np.array_equal(a.times, b.times)

    def test_horizon_prefix_property(self):
        # stretching the horizon only appends events; the prefix is unchanged
        m = net2()
        short = simulate(m, SimConfig(horizon=50.0, seed=9))
        long = simulate(m, SimConfig(horizon=150.0, seed=9))
        n = short.times.size
        np.testing.assert_array_equal(long.times[:n], short.times)
        np.testing.assert_array_equal(long.nodes[:n], short.nodes)
        assert long.times.size > n

    def test_rng_stream_keying(self):
        a = rng_stream(3, 0).random(4)
        b = rng_stream(3, 0).random(4)
        c = rng_stream(3, 1).random(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestDistribution:
    def test_poisson_counts(self):
        # A = 0: per-node counts are Poisson(mu * horizon)
        mu = np.array([0.8, 1.6])
        m = HawkesModel(mu=mu, A=np.zeros((2, 2)), kernel=exp_kernel())
        horizon = 400.0
        counts = np.zeros(2)
        sq = np.zeros(2)
        reps = 40
        for r in range(reps):
            ev = simulate(m, SimConfig(horizon=horizon, seed=100 + r))
            c = np.bincount(ev.nodes, minlength=2)
            counts += c
            sq += c.astype(float) ** 2
        mean = counts / reps
        expect = mu * horizon
        # 4-sigma band on the Monte Carlo mean of a Poisson count
        tol = 4.0 * np.sqrt(expect / reps)
        assert np.all(np.abs(mean - expect) < tol)
        var = sq / reps - mean**2
        assert np.all(var > 0.5 * expect)
        assert np.all(var < 1.8 * expect)

    def test_rates_match_mean_field(self):
        m = net3()
        lam = mean_field_intensity(m)
        horizon = 3000.0
        ev = simulate(m, SimConfig(horizon=horizon, seed=7))
        for i in range(3):
            r = empirical_rate(ev, i, (200.0, horizon))
            se = np.sqrt(2.0 * lam[i] / (horizon - 200.0))  # overdispersion slack
            assert abs(r - lam[i]) < 5.0 * se

    def test_exponential_interarrivals_poisson_case(self):
        m = HawkesModel(mu=np.array([2.0]), A=np.zeros((1, 1)), kernel=exp_kernel())
        ev = simulate(m, SimConfig(horizon=2000.0, seed=5))
        gaps = np.diff(ev.times)
        assert gaps.mean() == pytest.approx(0.5, rel=0.05)
        # memorylessness: correlation between consecutive gaps is ~ 0
        c = np.corrcoef(gaps[:-1], gaps[1:])[0, 1]
        assert abs(c) < 0.05


class TestGenericPath:
    def test_truncated_kernel_rate(self):
        # truncation removes kernel mass, so rates solve (I - m*A) x = mu
        B = 1.0
        m = HawkesModel(
            mu=np.array([1.0]), A=np.array([[0.6]]), kernel=exp_kernel(beta=1.0, truncation=B)
        )
        mass = 1.0 - np.exp(-B)
        want = 1.0 / (1.0 - 0.6 * mass)
        ev = simulate(m, SimConfig(horizon=4000.0, seed=21))
        got = empirical_rate(ev, 0, (100.0, 4000.0))
        assert got == pytest.approx(want, rel=0.05)

    def test_tabulated_matches_exponential_rates(self):
        mu = np.array([0.9, 0.7])
        A = np.array([[0.25, 0.3], [0.35, 0.2]])
        exact = HawkesModel(mu=mu, A=A, kernel=exp_kernel(beta=1.0))
        tab = HawkesModel(mu=mu, A=A, kernel=tabulated_exp(beta=1.0))
        lam = mean_field_intensity(exact)
        ev = simulate(tab, SimConfig(horizon=2500.0, seed=3))
        for i in range(2):
            r = empirical_rate(ev, i, (100.0, 2500.0))
            assert r == pytest.approx(lam[i], rel=0.08)

    def test_nonmonotone_tabulated_kernel_runs(self):
        # delayed-peak kernel exercises the sup-envelope bound
        t = np.linspace(0.0, 6.0, 1201)
        phi = t * np.exp(-t)  # Gamma(2, 1) shape, peak at lag 1
        phi /= np.trapezoid(phi, t)
        from hawkscan import KernelSpec

        k = KernelSpec(family="tabulated", grid_t=t, grid_phi=phi)
        m = HawkesModel(mu=np.array([0.8]), A=np.array([[0.5]]), kernel=k)
        ev = simulate(m, SimConfig(horizon=600.0, seed=13))
        want = 0.8 / (1.0 - 0.5 * k.total_mass())
        got = empirical_rate(ev, 0, (50.0, 600.0))
        assert got == pytest.approx(want, rel=0.12)
        assert np.all(np.diff(ev.times) > 0)

    def test_per_edge_kernels_run(self):
        tab = np.empty((2, 2), dtype=object)
        tab[0, 0] = exp_kernel(beta=2.0)
        tab[0, 1] = exp_kernel(beta=1.0)
        tab[1, 0] = exp_kernel(beta=0.5)
        tab[1, 1] = exp_kernel(beta=3.0)
        m = HawkesModel(mu=np.array([0.5, 0.5]), A=0.3 * np.ones((2, 2)), kernel=tab)
        ev = simulate(m, SimConfig(horizon=300.0, seed=17))
        # rates depend only on kernel mass (all 1), so mean-field still applies
        lam = mean_field_intensity(m)
        for i in range(2):
            assert empirical_rate(ev, i, (30.0, 300.0)) == pytest.approx(lam[i], rel=0.15)


class TestChange:
    def test_kappa_at_horizon_reproduces_pre(self):
        pre, post = _change_pair()
        cfg = SimConfig(horizon=120.0, seed=31)
        base = simulate(pre, cfg)
        same = simulate_with_change(ChangeSpec(pre, post, kappa=120.0), cfg)
        np.testing.assert_array_equal(base.times, same.times)
        np.testing.assert_array_equal(base.nodes, same.nodes)

    def test_pre_segment_unchanged_by_post_model(self):
        pre, post = _change_pair()
        cfg = SimConfig(horizon=100.0, seed=8)
        full = simulate_with_change(ChangeSpec(pre, post, kappa=60.0), cfg)
        solo = simulate(pre, SimConfig(horizon=60.0, seed=8))
        cut = np.searchsorted(full.times, 60.0, side="right")
        np.testing.assert_array_equal(full.times[:cut], solo.times)

    def test_history_reset_at_change(self):
        # post model is pure Poisson: after kappa, gaps must be exponential
        # regardless of the (self-exciting) pre segment, since history resets
        mu = np.array([3.0])
        pre = HawkesModel(mu=mu, A=np.array([[0.7]]), kernel=exp_kernel())
        post = HawkesModel(mu=mu, A=np.zeros((1, 1)), kernel=exp_kernel())
        gaps = []
        for r in range(30):
            ev = simulate_with_change(
                ChangeSpec(pre, post, kappa=40.0), SimConfig(horizon=120.0, seed=200 + r)
            )
            t = ev.times[ev.times > 40.0]
            gaps.append(np.diff(t))
        g = np.concatenate(gaps)
        assert g.mean() == pytest.approx(1.0 / 3.0, rel=0.05)
        assert np.std(g) == pytest.approx(1.0 / 3.0, rel=0.10)

    def test_rate_rises_after_change(self):
        pre, post = _change_pair()
        spec = ChangeSpec(pre, post, kappa=150.0)
        lam0 = mean_field_intensity(pre).sum()
        lam1 = mean_field_intensity(post).sum()
        tot_pre = tot_post = 0.0
        for r in range(10):
            ev = simulate_with_change(spec, SimConfig(horizon=400.0, seed=50 + r))
            tot_pre += ev.count(20.0, 150.0) / 130.0
            tot_post += ev.count(200.0, 400.0) / 200.0
        assert tot_pre / 10.0 == pytest.approx(lam0, rel=0.10)
        assert tot_post / 10.0 == pytest.approx(lam1, rel=0.10)


class TestGuards:
    def test_max_events_abort(self):
        m = HawkesModel(mu=np.array([5.0]), A=np.array([[0.5]]), kernel=exp_kernel())
        with pytest.raises(RuntimeError, match="max_events"):
            simulate(m, SimConfig(horizon=1000.0, seed=0, max_events=50))

    def test_invalid_model_rejected(self):
        m = HawkesModel(mu=np.array([1.0]), A=np.array([[1.1]]), kernel=exp_kernel())
        with pytest.raises(ValueError, match="spectral radius"):
            simulate(m, SimConfig(horizon=10.0, seed=0))

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(horizon=0.0)
        with pytest.raises(ValueError):
            SimConfig(horizon=1.0, max_events=0)


def _change_pair():
    pre = net2()
    A1 = pre.A.copy()
    A1[0, 1] += 0.3
    return pre, HawkesModel(mu=pre.mu, A=A1, kernel=pre.kernel)
