"""Model types, intensities, likelihoods, and their validation rules."""

import numpy as np
import pytest

from hawkscan import (
    EventStream,
    HawkesModel,
    KernelSpec,
    compensator,
    conditional_intensity,
    kl_mean_field,
    log_likelihood,
    mean_field_intensity,
    spectral_radius,
    validate_model,
)
from hawkscan.models import ChangeSpec, cumulative_kernel

from helpers import (
    exp_kernel,
    loglik_quadrature,
    net1,
    net2,
    net3,
    random_model,
    random_stream,
    tabulated_exp,
)


class TestKernelSpec:
    def test_exponential_closed_forms(self):
        k = exp_kernel(beta=1.7)
        dt = np.array([0.0, 0.3, 2.0, 11.0])
        np.testing.assert_allclose(k.phi(dt), 1.7 * np.exp(-1.7 * dt))
        np.testing.assert_allclose(k.cum(dt), 1.0 - np.exp(-1.7 * dt))
        assert k.phi(-0.5) == 0.0
        assert k.cum(-0.5) == 0.0
        assert k.total_mass() == 1.0

    def test_cum_is_integral_of_phi(self):
        # midpoint quadrature of phi reproduces cum for both families
        for k in (exp_kernel(beta=0.8), tabulated_exp(beta=0.8), exp_kernel(beta=2.0, truncation=1.5)):
            for upper in (0.4, 1.0, 3.7):
                # Stop the quadrature at the truncation point so the jump
                # in phi does not pollute the midpoint rule.
                hi = upper if k.truncation is None else min(upper, k.truncation)
                xs = np.linspace(0.0, hi, 20001)
                mids = 0.5 * (xs[1:] + xs[:-1])
                quad = float(np.sum(k.phi(mids)) * (xs[1] - xs[0]))
                assert k.cum(upper) == pytest.approx(quad, abs=5e-7)

    def test_truncation_clips(self):
        k = exp_kernel(beta=1.0, truncation=2.0)
        assert k.phi(1.9) > 0.0
        assert k.phi(2.1) == 0.0
        assert k.cum(50.0) == pytest.approx(1.0 - np.exp(-2.0))

    def test_tabulated_matches_exponential(self):
        # The table carries the trapezoid normalization of its grid, so the
        # match to the closed form is at the grid's accuracy, not exact.
        k = tabulated_exp(beta=1.3)
        for x in (0.05, 0.7, 2.2):
            assert k.phi(x) == pytest.approx(1.3 * np.exp(-1.3 * x), rel=5e-5)
            assert k.cum(x) == pytest.approx(1.0 - np.exp(-1.3 * x), abs=5e-5)
        assert cumulative_kernel(k, -1.0) == 0.0

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            KernelSpec(family="exponential", beta=0.0)
        with pytest.raises(ValueError):
            KernelSpec(family="tabulated", grid_t=np.array([0.0, 1.0]), grid_phi=np.array([1.0]))
        with pytest.raises(ValueError):
            KernelSpec(family="tabulated", grid_t=np.array([0.5, 1.0]), grid_phi=np.array([1.0, 0.5]))
        with pytest.raises(ValueError):
            KernelSpec(family="tabulated", grid_t=np.array([0.0, 1.0]), grid_phi=np.array([1.0, -0.1]))
        with pytest.raises(ValueError):
            KernelSpec(family="gamma")
        with pytest.raises(ValueError):
            KernelSpec(family="exponential", beta=1.0, truncation=-2.0)


class TestHawkesModel:
    def test_shapes_enforced(self):
        with pytest.raises(ValueError):
            HawkesModel(mu=np.ones(2), A=np.zeros((3, 3)), kernel=exp_kernel())

    def test_arrays_frozen(self):
        m = net2()
        with pytest.raises(ValueError):
            m.A[0, 0] = 9.0
        with pytest.raises(ValueError):
            m.mu[0] = 9.0

    def test_per_edge_kernel_table(self):
        tab = np.empty((2, 2), dtype=object)
        for i in range(2):
            for j in range(2):
                tab[i, j] = exp_kernel(beta=1.0 + i + 2 * j)
        m = HawkesModel(mu=np.array([1.0, 1.0]), A=0.2 * np.ones((2, 2)), kernel=tab)
        assert m.shared_kernel is None
        assert m.edge_kernel(1, 1).beta == 4.0
        with pytest.raises(ValueError):
            HawkesModel(mu=np.ones(2), A=np.zeros((2, 2)), kernel=np.empty((2, 1), dtype=object))

    def test_validate_model_catches_each_violation(self):
        ok = net2()
        assert validate_model(ok) == []
        assert validate_model(HawkesModel(mu=np.array([0.0]), A=np.array([[0.1]]), kernel=exp_kernel()))
        assert validate_model(HawkesModel(mu=np.array([1.0]), A=np.array([[-0.1]]), kernel=exp_kernel()))
        assert validate_model(HawkesModel(mu=np.array([1.0]), A=np.array([[1.2]]), kernel=exp_kernel()))
        # near-critical passes; exactly critical does not
        assert validate_model(HawkesModel(mu=np.array([1.0]), A=np.array([[0.999]]), kernel=exp_kernel())) == []
        assert validate_model(HawkesModel(mu=np.array([1.0]), A=np.array([[1.0]]), kernel=exp_kernel()))

    def test_validate_flags_unnormalized_tabulated(self):
        t = np.linspace(0.0, 5.0, 400)
        k = KernelSpec(family="tabulated", grid_t=t, grid_phi=0.5 * np.exp(-t))
        m = HawkesModel(mu=np.array([1.0]), A=np.array([[0.2]]), kernel=k)
        assert any("normalized" in msg for msg in validate_model(m))

    def test_spectral_radius(self):
        A = np.array([[0.0, 0.5], [0.5, 0.0]])
        assert spectral_radius(A) == pytest.approx(0.5)
        assert spectral_radius(np.diag([0.3, 0.9])) == pytest.approx(0.9)


class TestEventStream:
    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            EventStream(np.array([1.0, 1.0]), np.array([0, 0]), 1, 2.0)
        with pytest.raises(ValueError):
            EventStream(np.array([2.0, 1.0]), np.array([0, 0]), 1, 3.0)

    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            EventStream(np.array([-0.1]), np.array([0]), 1, 1.0)
        with pytest.raises(ValueError):
            EventStream(np.array([1.5]), np.array([0]), 1, 1.0)
        with pytest.raises(ValueError):
            EventStream(np.array([0.5]), np.array([2]), 2, 1.0)

    def test_count_half_open(self):
        ev = EventStream(np.array([1.0, 2.0, 3.0]), np.array([0, 0, 0]), 1, 4.0)
        assert ev.count(1.0, 3.0) == 2  # (1, 3] excludes the event at 1
        assert ev.count(0.0, 4.0) == 3
        assert len(ev) == 3
        assert len(EventStream.empty(2, 5.0)) == 0


class TestChangeSpec:
    def test_mu_must_match(self):
        pre = net2()
        post = HawkesModel(mu=pre.mu * 1.1, A=pre.A, kernel=pre.kernel)
        with pytest.raises(ValueError):
            ChangeSpec(pre=pre, post=post, kappa=10.0)
        with pytest.raises(ValueError):
            ChangeSpec(pre=pre, post=pre, kappa=-1.0)
        with pytest.raises(ValueError):
            ChangeSpec(pre=pre, post=net3(), kappa=1.0)


class TestIntensityAndCompensator:
    def test_intensity_brute_force(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            m = random_model(rng, d=3)
            ev = random_stream(rng, m, horizon=8.0)
            t = float(rng.uniform(0.5, 8.0))
            i = int(rng.integers(0, 3))
            lam = m.mu[i]
            for tk, uk in zip(ev.times, ev.nodes):
                if tk < t:
                    lam += m.A[i, uk] * BETA_PHI(t - tk)
            got = conditional_intensity(m, ev, i, t)
            assert got == pytest.approx(lam, rel=1e-12)

    def test_history_start_drops_old_events(self):
        m = net1(a=0.5)
        ev = EventStream(np.array([1.0, 3.0]), np.array([0, 0]), 1, 5.0)
        full = conditional_intensity(m, ev, 0, 4.0, history_start=0.0)
        cut = conditional_intensity(m, ev, 0, 4.0, history_start=2.0)
        assert full > cut
        assert cut == pytest.approx(1.0 + 0.5 * np.exp(-1.0))
        # an event exactly at history_start is excluded
        edge = conditional_intensity(m, ev, 0, 4.0, history_start=1.0)
        assert edge == pytest.approx(cut)

    def test_event_at_t_excluded(self):
        m = net1(a=0.5)
        ev = EventStream(np.array([2.0]), np.array([0]), 1, 5.0)
        assert conditional_intensity(m, ev, 0, 2.0) == pytest.approx(1.0)

    def test_compensator_quadrature(self):
        rng = np.random.default_rng(23)
        for trial in range(6):
            m = random_model(rng, d=2)
            ev = random_stream(rng, m, horizon=6.0)
            a, b = sorted(rng.uniform(0.0, 6.0, size=2))
            if b - a < 0.1:
                continue
            for i in range(2):
                direct = compensator(m, ev, i, a, b)
                # The intensity jumps at event times, so integrate each
                # smooth piece separately; midpoint is then O(h^2)-exact.
                brk = [a] + [float(t) for t in ev.times if a < t < b] + [b]
                quad = 0.0
                for lo, hi in zip(brk[:-1], brk[1:]):
                    mids = lo + (np.arange(240) + 0.5) * (hi - lo) / 240
                    vals = sum(conditional_intensity(m, ev, i, float(t)) for t in mids)
                    quad += vals * (hi - lo) / 240
                assert direct == pytest.approx(quad, rel=5e-6, abs=5e-6)

    def test_compensator_additive(self):
        m = net2()
        rng = np.random.default_rng(3)
        ev = random_stream(rng, m, horizon=10.0)
        whole = compensator(m, ev, 0, 1.0, 9.0)
        split = compensator(m, ev, 0, 1.0, 4.5) + compensator(m, ev, 0, 4.5, 9.0)
        assert whole == pytest.approx(split, rel=1e-12)

    def test_argument_validation(self):
        m = net1()
        ev = EventStream(np.array([1.0]), np.array([0]), 1, 5.0)
        with pytest.raises(ValueError):
            conditional_intensity(m, ev, 0, 1.0, history_start=2.0)
        with pytest.raises(ValueError):
            compensator(m, ev, 0, 3.0, 2.0)


def BETA_PHI(dt, beta=1.0):
    return beta * np.exp(-beta * dt) if dt >= 0 else 0.0


class TestLogLikelihood:
    def test_quadrature_oracle_small(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            m = random_model(rng, d=2)
            ev = random_stream(rng, m, horizon=5.0)
            direct = log_likelihood(m, ev, (0.0, 5.0))
            quad = loglik_quadrature(m, ev, (0.0, 5.0), step=1e-3)
            assert direct == pytest.approx(quad, abs=2e-5)

    def test_decouples_per_node(self):
        m = net3()
        rng = np.random.default_rng(19)
        ev = random_stream(rng, m, horizon=7.0)
        total = log_likelihood(m, ev, (1.0, 6.0))
        parts = sum(log_likelihood(m, ev, (1.0, 6.0), node=i) for i in range(3))
        assert total == pytest.approx(parts, rel=1e-12)

    def test_poisson_analytic(self):
        # A = 0 reduces to a homogeneous Poisson likelihood
        mu = np.array([0.7, 1.1])
        m = HawkesModel(mu=mu, A=np.zeros((2, 2)), kernel=exp_kernel())
        ev = EventStream(np.array([0.5, 1.5, 2.5]), np.array([0, 1, 0]), 2, 4.0)
        want = 2 * np.log(0.7) + np.log(1.1) - 4.0 * mu.sum()
        assert log_likelihood(m, ev, (0.0, 4.0)) == pytest.approx(want, rel=1e-12)

    def test_history_window_interaction(self):
        m = net2()
        rng = np.random.default_rng(41)
        ev = random_stream(rng, m, horizon=9.0)
        restart = log_likelihood(m, ev, (3.0, 8.0), history_start=3.0)
        quad = loglik_quadrature(m, ev, (3.0, 8.0), history_start=3.0, step=1e-3)
        assert restart == pytest.approx(quad, abs=2e-5)
        assert restart != pytest.approx(log_likelihood(m, ev, (3.0, 8.0)), abs=1e-6)

    def test_rejects_nonpositive_intensity(self):
        m = HawkesModel(mu=np.array([1.0, 0.0]), A=np.zeros((2, 2)), kernel=exp_kernel())
        ev = EventStream(np.array([1.0]), np.array([1]), 2, 2.0)
        with pytest.raises(ValueError):
            log_likelihood(m, ev, (0.0, 2.0))


class TestMeanField:
    def test_solves_linear_system(self):
        m = net2()
        lam = mean_field_intensity(m)
        np.testing.assert_allclose((np.eye(2) - m.A) @ lam, m.mu, rtol=1e-12)
        assert np.all(lam > m.mu)

    def test_rejects_supercritical(self):
        m = HawkesModel(mu=np.array([1.0]), A=np.array([[0.999]]), kernel=exp_kernel())
        assert mean_field_intensity(m)[0] == pytest.approx(1000.0, rel=1e-9)
        bad = HawkesModel(mu=np.array([1.0]), A=np.array([[1.5]]), kernel=exp_kernel())
        with pytest.raises(ValueError):
            mean_field_intensity(bad)

    def test_kl_nonnegative_and_zero_at_equality(self):
        pre = net2()
        assert kl_mean_field(pre, pre) == pytest.approx(0.0, abs=1e-14)
        post = HawkesModel(mu=pre.mu, A=pre.A + np.array([[0.0, 0.1], [0.0, 0.0]]), kernel=pre.kernel)
        assert kl_mean_field(pre, post) > 0.0
        assert kl_mean_field(post, pre) > 0.0

    def test_kl_1d_analytic(self):
        # rates 2 -> 4: KL rate = l1 log(l1/l0) - (l1 - l0)
        pre = net1(mu=1.0, a=0.5)
        post = net1(mu=1.0, a=0.75)
        l0, l1 = 2.0, 4.0
        want = l1 * np.log(l1 / l0) - (l1 - l0)
        assert kl_mean_field(pre, post) == pytest.approx(want, rel=1e-12)
