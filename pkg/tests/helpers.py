"""Shared fixtures and independent oracles for the test suite.

The oracles deliberately avoid the library's closed-form paths: the
log-likelihood oracle integrates the intensity by midpoint quadrature, the
score oracle differentiates the likelihood numerically, and the candidate
oracle scans a dense tau grid.  They are slow and only run at test scale.
"""

import numpy as np

from hawkscan import (
    EventStream,
    HawkesModel,
    KernelSpec,
    conditional_intensity,
    log_likelihood,
)

BETA = 1.0


def exp_kernel(beta=BETA, truncation=None):
    return KernelSpec(family="exponential", beta=beta, truncation=truncation)


def tabulated_exp(beta=BETA, t_max=40.0, n=4001, truncation=None):
    """Tabulated kernel sampling beta*exp(-beta t), rescaled to unit mass so
    the trapezoid integral of the table is exactly 1."""
    t = np.linspace(0.0, t_max, n)
    phi = beta * np.exp(-beta * t)
    spec = KernelSpec(family="tabulated", grid_t=t, grid_phi=phi,
                      truncation=truncation)
    return KernelSpec(family="tabulated", grid_t=t,
                      grid_phi=phi / spec.total_mass(), truncation=truncation)


def net1(mu=1.0, a=0.5, beta=BETA):
    return HawkesModel(mu=np.array([mu]), A=np.array([[a]]), kernel=exp_kernel(beta))


def net2(beta=BETA):
    mu = np.array([0.8, 1.2])
    A = np.array([[0.3, 0.4], [0.2, 0.1]])
    return HawkesModel(mu=mu, A=A, kernel=exp_kernel(beta))


def net3(beta=BETA):
    mu = np.array([0.5, 0.9, 0.7])
    A = np.array([[0.2, 0.3, 0.0], [0.0, 0.1, 0.4], [0.3, 0.0, 0.2]])
    return HawkesModel(mu=mu, A=A, kernel=exp_kernel(beta))


def random_model(rng, d=1, beta=BETA, max_row=0.6):
    """Random stationary model: row sums bounded keep the spectral radius < 1."""
    mu = rng.uniform(0.4, 1.5, size=d)
    A = rng.uniform(0.0, 1.0, size=(d, d))
    A *= rng.uniform(0.1, max_row, size=(d, 1)) / np.maximum(A.sum(axis=1, keepdims=True), 1e-12)
    return HawkesModel(mu=mu, A=A, kernel=exp_kernel(beta))


def random_stream(rng, model, horizon):
    """Homogeneous Poisson stream (not from the model): valid input data for
    likelihood identities, independent of the simulator under test."""
    rate = float(model.mu.sum()) * 2.0
    n = rng.poisson(rate * horizon)
    t = np.sort(rng.uniform(0.0, horizon, size=n))
    # enforce strict increase; collisions at 64-bit resolution are removed
    keep = np.concatenate(([True], np.diff(t) > 0))
    t = t[keep]
    u = rng.integers(0, model.d, size=t.size)
    return EventStream(t, u, model.d, horizon)


def loglik_quadrature(model, events, window, history_start=0.0, step=1e-4):
    """Midpoint-rule log-likelihood over (a, b]: sum log lam at events minus
    the numerically integrated intensity.  Uses only conditional_intensity.
    """
    a, b = window
    total = 0.0
    lo, hi = np.searchsorted(events.times, [a, b], side="right")
    for k in range(lo, hi):
        lam = conditional_intensity(
            model, events, int(events.nodes[k]), float(events.times[k]), history_start
        )
        total += np.log(lam)
    # integrate each inter-event span separately so the integrand is smooth
    knots = np.concatenate(([a], events.times[lo:hi], [b]))
    for i in range(model.d):
        for left, right in zip(knots[:-1], knots[1:]):
            if right <= left:
                continue
            m = max(int(np.ceil((right - left) / step)), 1)
            mid = left + (np.arange(m) + 0.5) * (right - left) / m
            lam = np.array(
                [conditional_intensity(model, events, i, float(t), history_start) for t in mid]
            )
            total -= float(lam.sum()) * (right - left) / m
    return total


def llr_oracle(pre, post, events, tau, t, step=1e-4):
    """Quadrature version of the log-likelihood ratio ell(t, tau)."""
    return loglik_quadrature(post, events, (tau, t), history_start=tau, step=step) - (
        loglik_quadrature(pre, events, (tau, t), history_start=0.0, step=step)
    )


def score_fd(pre, events, window, eps=1e-5):
    """Central finite differences of the window log-likelihood in each A
    entry, row-block order.  The integration range is the window but the
    history is full, matching the score definition.
    """
    d = pre.d
    out = np.empty(d * d)
    base = np.asarray(pre.A, dtype=np.float64)
    for i in range(d):
        for j in range(d):
            hi = base.copy()
            lo = base.copy()
            hi[i, j] += eps
            lo[i, j] -= eps
            m_hi = HawkesModel(mu=pre.mu, A=hi, kernel=pre.kernel)
            m_lo = HawkesModel(mu=pre.mu, A=lo, kernel=pre.kernel)
            f_hi = log_likelihood(m_hi, events, window, history_start=0.0)
            f_lo = log_likelihood(m_lo, events, window, history_start=0.0)
            out[i * d + j] = (f_hi - f_lo) / (2.0 * eps)
    return out


def dense_tau_scan(pre, post, events, t, n_grid=400):
    """Best log-likelihood ratio over a dense grid of change candidates.

    Returns max over tau of ell(t, tau) for tau in a uniform grid on [0, t)
    unioned with perturbed event times (just before and after each event).
    """
    from hawkscan import llr_at

    taus = list(np.linspace(0.0, t, n_grid, endpoint=False))
    for tk in events.times[events.times < t]:
        taus.extend([max(tk - 1e-7, 0.0), tk, min(tk + 1e-7, t)])
    best = -np.inf
    for tau in taus:
        best = max(best, llr_at(pre, post, events, float(tau), t))
    return best


def chain_llr(pre, post, events, tau, t, gamma):
    """ell(t, tau) built by seeding at the first boundary past tau and
    stepping the recursion; t must sit on the gamma grid."""
    from hawkscan import llr_at, llr_step

    n0 = int(np.ceil(tau / gamma - 1e-9))
    val = llr_at(pre, post, events, tau, n0 * gamma)
    n_t = int(round(t / gamma))
    for n in range(n0, n_t):
        val = llr_step(val, events, pre, post, n, tau, gamma)
    return val


def ks_statistic(x, cdf):
    """Two-sided Kolmogorov-Smirnov distance between a sample and a cdf."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = x.size
    f = cdf(x)
    d_plus = np.max(np.arange(1, n + 1) / n - f)
    d_minus = np.max(f - np.arange(0, n) / n)
    return max(float(d_plus), float(d_minus))


def ks_crit(n, alpha=0.01):
    """Asymptotic two-sided KS critical value."""
    return float(np.sqrt(-0.5 * np.log(alpha / 2.0)) / np.sqrt(n))
