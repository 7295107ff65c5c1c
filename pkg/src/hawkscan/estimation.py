"""Influence-matrix estimation and Fisher information.

Branching-structure EM for the excitation matrix on a fixed window, a
Monte Carlo estimator of the per-unit-time Fisher information at a null
model, and a ridge-regularized symmetric inverse used to whiten score
vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .backend import get_engine
from .models import EventStream, HawkesModel, KernelSpec
from .simulate import SimConfig, simulate

logger = logging.getLogger(__name__)

__all__ = [
    "EmConfig",
    "EmFit",
    "em_mle",
    "em_fit",
    "fit_joint",
    "fisher_info_mc",
    "regularized_inverse",
]


@dataclass(frozen=True)
class EmConfig:
    """Settings for the branching EM.

    ``init`` seeds the excitation matrix: a scalar fills uniformly, an
    array is copied, and the string ``"previous-window"`` is resolved by
    callers that maintain a warm start (the GLR runner); ``em_mle`` itself
    treats it as the uniform default.
    """

    tol: float = 1e-4
    max_iter: int = 200
    init: float | np.ndarray | str = 0.1

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def init_matrix(self, d: int) -> np.ndarray:
        if isinstance(self.init, str):
            # No warm start available here; fall back to the uniform seed.
            return np.full((d, d), 0.1)
        if np.isscalar(self.init):
            return np.full((d, d), float(self.init))
        a0 = np.asarray(self.init, dtype=np.float64)
        if a0.shape != (d, d):
            raise ValueError(f"init matrix must be {d}x{d}, got {a0.shape}")
        return a0.copy()


@dataclass(frozen=True)
class EmFit:
    """Result of one EM run: estimate, ascent path, convergence report."""

    a_hat: np.ndarray
    mu_hat: np.ndarray
    ll_path: np.ndarray
    n_iter: int
    converged: bool
    ll: float = field(default=np.nan)


def _exp_kernel(kernel: KernelSpec) -> tuple[float, float] | None:
    """(beta, B) when the kernel is exponential, else None."""
    if kernel.family != "exponential":
        return None
    bound = np.inf if kernel.truncation is None else float(kernel.truncation)
    return float(kernel.beta), bound


def _em_generic(
    times: np.ndarray,
    nodes: np.ndarray,
    d: int,
    mu: np.ndarray,
    a0: np.ndarray,
    kernel: KernelSpec,
    win: tuple[float, float],
    fit_mu: bool,
    cfg: EmConfig,
) -> EmFit:
    """Reference EM for arbitrary kernels, quadratic in window size.

    Same algorithm as the compiled exponential kernel: parentage is
    restricted to in-window events and the offspring-count denominator is
    right-censored by the kernel mass up to the window end.
    """
    a, b = win
    m = times.size
    A = a0.copy()
    mu = mu.astype(np.float64).copy()
    span = b - a
    # Pairwise kernel values phi(t_k - t_l) for l < k, computed once.
    gw = np.zeros((m, m))
    for k in range(1, m):
        gw[k, :k] = kernel.phi(times[k] - times[:k])
    cens = kernel.cum(b - times)  # right-censoring mass per event
    ll_path = []
    ll_prev = -np.inf
    converged = False
    n_iter = 0
    for it in range(cfg.max_iter):
        n_iter = it + 1
        lam = np.empty(m)
        C = np.zeros((d, d))
        bg = np.zeros(d)
        ll = 0.0
        for k in range(m):
            i = nodes[k]
            contrib = A[i, nodes[:k]] * gw[k, :k]
            lam_k = mu[i] + contrib.sum()
            lam[k] = lam_k
            ll += np.log(lam_k)
            bg[i] += mu[i] / lam_k
            np.add.at(C[i], nodes[:k], contrib / lam_k)
        Dj = np.zeros(d)
        np.add.at(Dj, nodes, cens)
        comp = span * mu.sum() + (A.sum(axis=0) * Dj).sum()
        ll -= comp
        ll_path.append(ll)
        if ll < ll_prev - 1e-12:
            logger.warning("EM log-likelihood decreased: %.3e -> %.3e", ll_prev, ll)
        if ll - ll_prev < cfg.tol and it > 0:
            converged = True
            break
        ll_prev = ll
        with np.errstate(invalid="ignore"):
            # C already carries a factor of the current A through contrib,
            # so the exact M-step is C / D, not A * C / D.
            A = np.where(Dj[np.newaxis, :] > 0, C / Dj[np.newaxis, :], 0.0)
        if fit_mu:
            mu = np.maximum(bg / span, 1e-12)
    if not converged:
        logger.warning("EM hit max_iter=%d without converging", cfg.max_iter)
    return EmFit(
        a_hat=A,
        mu_hat=mu,
        ll_path=np.asarray(ll_path),
        n_iter=n_iter,
        converged=converged,
        ll=ll_path[-1] if ll_path else -mu.sum() * span,
    )


def em_fit(
    events: EventStream,
    window: tuple[float, float],
    kernel: KernelSpec,
    mu: np.ndarray,
    cfg: EmConfig,
    fit_mu: bool = False,
) -> EmFit:
    """Run the branching EM on one window and return the full fit.

    Events strictly inside ``(window[0], window[1]]`` are used, with the
    likelihood history restarted at the window start. ``mu`` is held fixed
    unless ``fit_mu`` is set, in which case the background rates get a
    closed-form update each iteration.
    """
    a, b = window
    if not b > a:
        raise ValueError(f"window must have positive length, got ({a}, {b})")
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    d = mu.size
    lo = int(np.searchsorted(events.times, a, side="right"))
    hi = int(np.searchsorted(events.times, b, side="right"))
    if hi == lo:
        # Nothing to assign parentage to; the boundary estimate is zero.
        return EmFit(
            a_hat=np.zeros((d, d)),
            mu_hat=mu.copy(),
            ll_path=np.asarray([-mu.sum() * (b - a)]),
            n_iter=0,
            converged=True,
            ll=-mu.sum() * (b - a),
        )
    exp = _exp_kernel(kernel)
    if exp is None:
        return _em_generic(
            events.times[lo:hi], events.nodes[lo:hi], d, mu,
            cfg.init_matrix(d), kernel, (a, b), fit_mu, cfg,
        )
    beta, bound = exp
    eng = get_engine()
    A = cfg.init_matrix(d)
    mu_work = mu.copy()
    gw = np.zeros((hi - lo, d))
    ll_path = np.empty(cfg.max_iter + 1)
    n_iter, converged, ll_final = eng.em_window_exp(
        events.times, events.nodes, lo, hi, d, mu_work, A, beta, bound,
        a, b, fit_mu, cfg.tol, cfg.max_iter, gw, ll_path,
    )
    if not converged:
        logger.warning("EM hit max_iter=%d without converging", cfg.max_iter)
    return EmFit(
        a_hat=A,
        mu_hat=mu_work,
        ll_path=ll_path[:n_iter].copy(),
        n_iter=int(n_iter),
        converged=bool(converged),
        ll=float(ll_final),
    )


def em_mle(
    events: EventStream,
    window: tuple[float, float],
    kernel: KernelSpec,
    mu: np.ndarray,
    cfg: EmConfig,
) -> np.ndarray:
    """Maximum-likelihood excitation matrix on a window, background fixed."""
    return em_fit(events, window, kernel, mu, cfg).a_hat


def fit_joint(
    events: EventStream,
    window: tuple[float, float],
    kernel: KernelSpec,
    cfg: EmConfig,
    mu0: np.ndarray | None = None,
    d: int | None = None,
) -> EmFit:
    """Fit background rates and excitation jointly on calibration data.

    Alternates the closed-form mu update with the A-step inside a single
    EM loop. ``mu0`` seeds the background; when omitted the empirical rate
    per node over the window is used, which needs ``d``.
    """
    if mu0 is None:
        if d is None:
            raise ValueError("either mu0 or d is required")
        a, b = window
        lo = int(np.searchsorted(events.times, a, side="right"))
        hi = int(np.searchsorted(events.times, b, side="right"))
        counts = np.bincount(events.nodes[lo:hi], minlength=d).astype(np.float64)
        mu0 = np.maximum(counts / (b - a), 1e-6)
    return em_fit(events, window, kernel, np.asarray(mu0, float), cfg, fit_mu=True)


def fisher_info_mc(
    model: HawkesModel,
    sim_length: float,
    window: float,
    reps: int,
    seed: int = 0,
) -> np.ndarray:
    """Monte Carlo Fisher information of the score at ``model``.

    Each replication simulates the null model for ``sim_length``, evaluates
    the score vector over the final stretch of length ``window``, and the
    outer products are averaged and normalized per unit time:
    (1 / (reps * window)) * sum of u u^T. Symmetric PSD by construction.
    """
    if not 0 < window <= sim_length:
        raise ValueError("need 0 < window <= sim_length")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    from .detectors import score_vector  # local import to avoid a cycle

    d2 = model.d * model.d
    acc = np.zeros((d2, d2))
    for r in range(reps):
        ev = simulate(model, SimConfig(horizon=sim_length, seed=seed + r))
        u = score_vector(model, ev, (sim_length - window, sim_length))
        acc += np.outer(u, u)
    acc /= reps * window
    return 0.5 * (acc + acc.T)


def regularized_inverse(m: np.ndarray, lam: float) -> np.ndarray:
    """(M + lam*I)^-1 via a symmetric factorization.

    Rejects matrices where the ridge-shifted operator is not positive
    definite; with lam=0 this means M itself must be PD.
    """
    if lam < 0:
        raise ValueError("ridge must be nonnegative")
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(m, m.T, atol=1e-8):
        raise ValueError("expected a symmetric matrix")
    shifted = 0.5 * (m + m.T) + lam * np.eye(m.shape[0])
    try:
        cf = scipy.linalg.cho_factor(shifted)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(
            "matrix plus ridge is not positive definite; increase the ridge"
        ) from exc
    return scipy.linalg.cho_solve(cf, np.eye(m.shape[0]))
