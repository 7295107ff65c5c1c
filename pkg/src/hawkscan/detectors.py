"""Sliding-window baseline detectors: score statistic, GLR, Shewhart chart.

All three evaluate on the grid t = n * gamma and report through the same
DetectionOutcome as the CUSUM detectors.  The window [t - w, t] restricts
only the integration and count ranges; intensities under the null keep
the full (or truncation-limited) history.  The GLR per-window estimate
restarts its history at t - w, matching the estimator it delegates to.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from .backend import get_engine
from .cusum import DetectionOutcome
from .estimation import EmConfig, em_fit
from .models import (
    EventStream,
    HawkesModel,
    KernelSpec,
    conditional_intensity,
    log_likelihood,
)

logger = logging.getLogger(__name__)

__all__ = [
    "WindowConfig",
    "score_vector",
    "score_run",
    "glr_window",
    "glr_run",
    "shewhart_run",
]

Source = Union[EventStream, Iterable[Tuple[float, int]]]

_GRID_EPS = 1e-9


@dataclass(frozen=True)
class WindowConfig:
    """Window detector settings.

    b is the alarm threshold; for the Shewhart chart it plays the role of
    the upper band edge b2 with b1 the lower one (one-sided charts set
    b1 = 0).  max_time censors a run at that time, mirroring CusumConfig.
    """

    w: float = 60.0
    gamma: float = 0.1
    b: float = np.inf
    b1: float = 0.0
    max_time: float = np.inf

    def __post_init__(self) -> None:
        if not self.w > 0:
            raise ValueError("window length w must be positive")
        if not self.gamma > 0:
            raise ValueError("grid size gamma must be positive")
        if self.b1 < 0 or not self.b1 < self.b:
            raise ValueError("need 0 <= b1 < b")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")


def _as_stream(source: Source, d: int) -> EventStream:
    if isinstance(source, EventStream):
        return source
    ts, us = [], []
    for t, u in source:
        ts.append(float(t))
        us.append(int(u))
    horizon = ts[-1] if ts else 0.0
    return EventStream(
        np.asarray(ts, dtype=np.float64),
        np.asarray(us, dtype=np.int64),
        max(d, (max(us) + 1) if us else 1),
        horizon,
    )


def _shared_exp(model: HawkesModel) -> Optional[Tuple[float, float]]:
    """(beta, truncation-or-inf) for a shared exponential kernel."""
    k = model.shared_kernel
    if k is None or k.family != "exponential":
        return None
    return float(k.beta), (np.inf if k.truncation is None else float(k.truncation))


def _grid_range(cfg: WindowConfig, horizon: float) -> Tuple[int, int]:
    """First and one-past-last grid index with a full window inside data."""
    end = min(horizon, cfg.max_time)
    if not np.isfinite(end):
        raise ValueError("window detectors need a finite horizon or max_time")
    n_start = int(np.ceil(cfg.w / cfg.gamma - _GRID_EPS))
    n_end = int(np.floor(end / cfg.gamma + _GRID_EPS)) + 1
    return n_start, max(n_end, n_start)


def _window_outcome(
    alarmed: bool,
    n_stop: int,
    n_start: int,
    cfg: WindowConfig,
    traj_s: np.ndarray,
    events: EventStream,
    em_iters: Optional[np.ndarray] = None,
) -> DetectionOutcome:
    n_eval = n_stop - n_start
    grid = np.arange(n_start, n_stop, dtype=np.float64) * cfg.gamma
    trajectory = np.column_stack((grid, traj_s[:n_eval]))
    tau_path = np.maximum(grid - cfg.w, 0.0)
    T = float(grid[-1]) if n_eval > 0 else 0.0
    seen = int(np.searchsorted(events.times, T + _GRID_EPS))
    return DetectionOutcome(
        alarmed=alarmed,
        T=T,
        tau_hat=max(T - cfg.w, 0.0),
        trajectory=trajectory,
        events_seen=seen,
        tau_path=tau_path,
        em_iters=None if em_iters is None else em_iters[:n_eval].copy(),
    )


def score_vector(
    pre: HawkesModel, events: EventStream, window: Tuple[float, float]
) -> np.ndarray:
    """Gradient of the window log-likelihood in A, evaluated at pre.A.

    Returns the D^2 vector in row-block order: coordinate i*D + j is the
    derivative in alpha_ij, so each row's incoming influences sit together.
    The count and integral terms are restricted to (window[0], window[1]]
    while lambda keeps the full history from time zero.
    """
    a, b = float(window[0]), float(window[1])
    if not b > a:
        raise ValueError(f"window must have positive length, got ({a}, {b})")
    if a < 0 or b > events.horizon + _GRID_EPS:
        raise ValueError("window must lie within the stream horizon")
    exp = _shared_exp(pre)
    if exp is not None:
        beta, bound = exp
        eng = get_engine()
        return eng.score_window_exp(
            events.times, events.nodes, pre.mu, pre.A, beta, bound, a, b
        )
    return _score_generic(pre, events, a, b)


def _score_generic(
    pre: HawkesModel, events: EventStream, a: float, b: float
) -> np.ndarray:
    """Reference score for arbitrary (possibly per-edge) kernels."""
    d = pre.d
    times, nodes = events.times, events.nodes
    u = np.zeros((d, d))
    lo = int(np.searchsorted(times, a, side="right"))
    hi = int(np.searchsorted(times, b, side="right"))
    for k in range(lo, hi):
        i = int(nodes[k])
        lam = conditional_intensity(pre, events, i, times[k])
        lags = times[k] - times[:k]
        for j in range(d):
            mask = nodes[:k] == j
            if mask.any():
                u[i, j] += pre.edge_kernel(i, j).phi(lags[mask]).sum() / lam
    for i in range(d):
        for j in range(d):
            kern = pre.edge_kernel(i, j)
            mask = nodes[:hi] == j
            if not mask.any():
                continue
            tl = times[:hi][mask]
            u[i, j] -= (
                kern.cum(np.maximum(b - tl, 0.0)) - kern.cum(np.maximum(a - tl, 0.0))
            ).sum()
    return u.ravel()


def _inverse_pd(i0: np.ndarray) -> np.ndarray:
    i0 = np.asarray(i0, dtype=np.float64)
    if i0.ndim != 2 or i0.shape[0] != i0.shape[1]:
        raise ValueError("Fisher information must be a square matrix")
    if not np.allclose(i0, i0.T, atol=1e-8):
        raise ValueError("Fisher information must be symmetric")
    try:
        cf = scipy.linalg.cho_factor(0.5 * (i0 + i0.T))
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(
            "Fisher information is not positive definite; apply a ridge first "
            "(estimation.regularized_inverse)"
        ) from exc
    return scipy.linalg.cho_solve(cf, np.eye(i0.shape[0]))


def score_run(
    pre: HawkesModel, i0: np.ndarray, source: Source, cfg: WindowConfig
) -> DetectionOutcome:
    """Sliding-window score detector.

    Statistic at grid time t is u' I0^{-1} u / w with u the window score;
    the alarm fires at the first grid time with statistic >= b.  Evaluation
    starts at the first grid point with a full window behind it.
    """
    i0inv = _inverse_pd(i0)
    events = _as_stream(source, pre.d)
    n_start, n_end = _grid_range(cfg, events.horizon)
    traj_s = np.empty(max(n_end - n_start, 1))
    exp = _shared_exp(pre)
    eng = get_engine()
    if exp is not None and not np.isfinite(exp[1]):
        beta = exp[0]
        status, n_stop, _ = eng.score_run_exp(
            events.times, events.nodes, pre.mu, pre.A, beta, i0inv,
            cfg.w, cfg.gamma, cfg.b, n_start, n_end, traj_s,
        )
        return _window_outcome(status == 1, n_stop, n_start, cfg, traj_s, events)
    # Truncated or non-exponential kernels: evaluate window by window.
    alarmed = False
    n_stop = n_start
    for n in range(n_start, n_end):
        t1 = n * cfg.gamma
        if exp is not None:
            u = eng.score_window_exp(
                events.times, events.nodes, pre.mu, pre.A,
                exp[0], exp[1], t1 - cfg.w, t1,
            )
        else:
            u = _score_generic(pre, events, t1 - cfg.w, t1)
        stat = float(u @ i0inv @ u) / cfg.w
        traj_s[n - n_start] = stat
        n_stop = n + 1
        if stat >= cfg.b:
            alarmed = True
            break
    return _window_outcome(alarmed, n_stop, n_start, cfg, traj_s, events)


def glr_window(
    pre: HawkesModel,
    events: EventStream,
    window: Tuple[float, float],
    em: EmConfig = EmConfig(),
) -> Tuple[np.ndarray, float]:
    """Windowed GLR statistic and its maximizing influence matrix.

    A_hat maximizes the window likelihood with history restarted at the
    window start; the returned statistic is that maximum minus the window
    log-likelihood of the pre-change model with full history.  It is
    nonnegative up to the EM tolerance.
    """
    a, b = float(window[0]), float(window[1])
    if not b > a:
        raise ValueError(f"window must have positive length, got ({a}, {b})")
    if a < 0 or b > events.horizon + _GRID_EPS:
        raise ValueError("window must lie within the stream horizon")
    kern = pre.shared_kernel
    if kern is None:
        raise ValueError("GLR requires a shared kernel")
    fit = em_fit(events, (a, b), kern, pre.mu, em)
    ll0 = log_likelihood(pre, events, (a, b))
    return fit.a_hat, float(fit.ll - ll0)


def glr_run(
    pre: HawkesModel,
    source: Source,
    cfg: WindowConfig,
    em: EmConfig = EmConfig(),
) -> DetectionOutcome:
    """Sliding-window GLR detector with warm-started EM.

    Each window's EM initializes at the previous window's estimate
    (em.init seeds only the first window); per-window iteration counts are
    returned in the outcome's em_iters.
    """
    events = _as_stream(source, pre.d)
    kern = pre.shared_kernel
    if kern is None:
        raise ValueError("GLR requires a shared kernel")
    n_start, n_end = _grid_range(cfg, events.horizon)
    n_eval = max(n_end - n_start, 1)
    traj_s = np.empty(n_eval)
    iters = np.zeros(n_eval, dtype=np.int64)
    exp = _shared_exp(pre)
    if exp is not None and not np.isfinite(exp[1]):
        beta = exp[0]
        times = events.times
        if times.size:
            lo_idx = np.searchsorted(times, times - cfg.w, side="right")
            gw_cap = int((np.arange(1, times.size + 1) - lo_idx).max()) + 8
        else:
            gw_cap = 8
        eng = get_engine()
        a_init = em.init_matrix(pre.d)
        while True:
            status, n_stop, _ = eng.glr_run_exp(
                times, events.nodes, pre.mu, pre.A, beta,
                cfg.w, cfg.gamma, cfg.b, n_start, n_end,
                em.tol, em.max_iter, a_init, traj_s, iters, gw_cap,
            )
            if status != 3:
                break
            # Window event count outgrew the scratch buffer; retry larger.
            gw_cap *= 2
        return _window_outcome(
            status == 1, n_stop, n_start, cfg, traj_s, events, em_iters=iters
        )
    # Truncated or tabulated kernels take the reference path.
    alarmed = False
    n_stop = n_start
    a_prev: Union[float, np.ndarray, str] = em.init
    for n in range(n_start, n_end):
        t1 = n * cfg.gamma
        win_em = EmConfig(tol=em.tol, max_iter=em.max_iter, init=a_prev)
        fit = em_fit(events, (t1 - cfg.w, t1), kern, pre.mu, win_em)
        ll0 = log_likelihood(pre, events, (t1 - cfg.w, t1))
        idx = n - n_start
        traj_s[idx] = fit.ll - ll0
        iters[idx] = fit.n_iter
        if fit.n_iter > 0:
            # Warm start for the next window, floored away from the
            # absorbing zero boundary of the multiplicative update.
            a_prev = np.maximum(fit.a_hat, 1e-6)
        n_stop = n + 1
        if traj_s[idx] >= cfg.b:
            alarmed = True
            break
    return _window_outcome(
        alarmed, n_stop, n_start, cfg, traj_s, events, em_iters=iters
    )


def shewhart_run(source: Source, cfg: WindowConfig) -> DetectionOutcome:
    """Shewhart count chart: alarm when the window event count leaves [b1, b].

    Model-free; the statistic at grid time t is the total event count over
    (t - w, t] summed across nodes.
    """
    events = _as_stream(source, 1)
    n_start, n_end = _grid_range(cfg, events.horizon)
    grid = np.arange(n_start, n_end, dtype=np.float64) * cfg.gamma
    hi = np.searchsorted(events.times, grid + _GRID_EPS)
    lo = np.searchsorted(events.times, grid - cfg.w + _GRID_EPS)
    counts = (hi - lo).astype(np.float64)
    outside = (counts < cfg.b1) | (counts > cfg.b)
    viol = np.flatnonzero(outside)
    if viol.size:
        n_stop = n_start + int(viol[0]) + 1
        alarmed = True
    else:
        n_stop = n_end
        alarmed = False
    return _window_outcome(alarmed, n_stop, n_start, cfg, counts, events)
