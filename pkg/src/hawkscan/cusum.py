"""CUSUM change-point detectors for Hawkes streams.

Exact form: at every grid time n*gamma the statistic is

    S = max over tau in {0} union {t_k+} of ell(n*gamma, tau),

where ell(t, tau) is the log-likelihood ratio of the post-change model
(history restarted at tau) against the pre-change model (full history).
The supremum over continuous tau is attained on that candidate set, so
the grid maximization is exact up to the polling resolution.

Truncated form: kernels are cut at lag B, so only events in [t-B, t]
matter; candidates older than B collapse into one running best, making
state O(events in the window).

The detector is an online state machine: feed events in time order with
observe(), evaluate boundaries with advance_to(t).  It never uses events
later than the boundary it is evaluating, so file replay and live
operation share one code path.  cusum_run / cusum_truncated_run wrap it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from .backend import get_engine
from .models import (
    EventStream,
    HawkesModel,
    KernelSpec,
    log_likelihood,
    validate_model,
)

__all__ = [
    "CusumConfig",
    "CusumState",
    "DetectionOutcome",
    "CusumDetector",
    "llr_at",
    "llr_step",
    "cusum_run",
    "cusum_truncated_run",
]


@dataclass(frozen=True)
class CusumConfig:
    b: float
    gamma: float = 0.1  # update period; no adaptive rule exists, 0.1 is the reference setup
    B: Optional[float] = None
    max_time: float = np.inf

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("threshold b must be positive")
        if not self.gamma > 0:
            raise ValueError("grid size gamma must be positive")
        if self.B is not None and self.B < self.gamma:
            raise ValueError("truncation width B must be >= gamma")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")


@dataclass(frozen=True)
class DetectionOutcome:
    """Result of one detector run.

    trajectory has rows (n*gamma, S); tau_path carries the running argmax
    at the same grid points (third column of a trajectory dump).  T is the
    alarm time when alarmed, otherwise the last boundary evaluated.
    em_iters is populated only by the GLR runner (EM iterations per window).
    """

    alarmed: bool
    T: float
    tau_hat: float
    trajectory: np.ndarray
    events_seen: int
    tau_path: np.ndarray
    em_iters: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.alarmed and not self.tau_hat < self.T:
            raise ValueError("estimated change time must precede the alarm")


@dataclass(frozen=True)
class CusumState:
    """Snapshot of detector state at grid index n (for inspection/tests)."""

    candidates: dict
    n: int
    running_max: Tuple[float, float]  # (tau_hat, S)
    retained_history: Optional[EventStream]


def llr_at(
    pre: HawkesModel,
    post: HawkesModel,
    events: EventStream,
    tau: float,
    t: float,
) -> float:
    """Direct evaluation of ell(t, tau): post likelihood with history
    restarted at tau minus pre likelihood with full history, over (tau, t].
    """
    if tau > t:
        raise ValueError("need tau <= t")
    if tau < 0 or t > events.horizon:
        raise ValueError("need 0 <= tau <= t <= horizon")
    return log_likelihood(post, events, (tau, t), history_start=tau) - log_likelihood(
        pre, events, (tau, t), history_start=0.0
    )


def llr_step(
    value: float,
    events: EventStream,
    pre: HawkesModel,
    post: HawkesModel,
    n: int,
    tau: float,
    gamma: float,
) -> float:
    """One recursion step: ell(n*gamma, tau) -> ell((n+1)*gamma, tau).

    The increment is the cell's log-intensity-ratio jumps minus the
    compensator difference, both through the cumulative kernel (closed
    form for exponential, nodal integration for tabulated), so no
    quadrature is involved.
    """
    a = n * gamma
    if tau > a:
        raise ValueError("need tau <= n*gamma")
    b = (n + 1) * gamma
    return (
        value
        + log_likelihood(post, events, (a, b), history_start=tau)
        - log_likelihood(pre, events, (a, b), history_start=0.0)
    )


def _truncated(model: HawkesModel, B: float) -> HawkesModel:
    def cut(k: KernelSpec) -> KernelSpec:
        eff = B if k.truncation is None else min(k.truncation, B)
        return replace(k, truncation=eff)

    if model.shared_kernel is not None:
        return HawkesModel(model.mu, model.A, cut(model.shared_kernel))
    tab = np.asarray(model.kernel, dtype=object).copy()
    for idx, k in np.ndenumerate(tab):
        tab[idx] = cut(k)
    return HawkesModel(model.mu, model.A, tab)


def _both_plain_exp(pre: HawkesModel, post: HawkesModel) -> bool:
    kp, kq = pre.shared_kernel, post.shared_kernel
    return (
        kp is not None
        and kq is not None
        and kp.family == "exponential"
        and kq.family == "exponential"
        and kp.truncation is None
        and kq.truncation is None
    )


class _SlowCusum:
    """Reference path for kernels without a closed-form engine: candidates
    advance by llr_step and fresh ones are seeded by llr_at.  Used for
    tabulated/per-edge kernels; quadratic cost, test scale only.
    """

    def __init__(self, pre, post, cfg):
        self.cfg = cfg
        if cfg.B is not None:
            self.pre = _truncated(pre, cfg.B)
            self.post = _truncated(post, cfg.B)
        else:
            self.pre = pre
            self.post = post
        self.d = pre.d
        self.cand: dict[float, float] = {}
        self.pool_tau = 0.0
        self.pool_ell = 0.0
        self.n_next = 1
        self.created = 0  # events that already have a candidate
        self.times: list[float] = []
        self.nodes: list[int] = []
        self.traj = []
        self.taus = []
        self.S = 0.0
        self.tau_hat = 0.0
        self.alarmed = False

    def observe(self, t, u):
        self.times.append(t)
        self.nodes.append(int(u))

    def _stream(self):
        t = np.array(self.times)
        return EventStream(t, np.array(self.nodes, dtype=np.int64), self.d, np.inf)

    def advance(self, n_to):
        g = self.cfg.gamma
        ev = self._stream()
        for n in range(self.n_next, n_to + 1):
            a, b = (n - 1) * g, n * g
            base = log_likelihood(self.pre, ev, (a, b), history_start=0.0)
            for tau in self.cand:
                self.cand[tau] += (
                    log_likelihood(self.post, ev, (a, b), history_start=tau) - base
                )
            self.pool_ell += (
                log_likelihood(self.post, ev, (a, b), history_start=self.pool_tau) - base
            )
            while self.created < len(self.times) and self.times[self.created] < b:
                tk = self.times[self.created]
                self.cand[tk] = llr_at(self.pre, self.post, ev, tk, b)
                self.created += 1
            if self.cfg.B is not None:
                cut = b - self.cfg.B
                for tau in sorted(self.cand):
                    if tau >= cut:
                        break
                    if self.cand[tau] > self.pool_ell:
                        self.pool_ell = self.cand[tau]
                        self.pool_tau = tau
                    del self.cand[tau]
            S, tau_hat = self.pool_ell, self.pool_tau
            for tau in sorted(self.cand):
                if self.cand[tau] > S:
                    S = self.cand[tau]
                    tau_hat = tau
            self.S, self.tau_hat = S, tau_hat
            self.traj.append(S)
            self.taus.append(tau_hat)
            self.n_next = n + 1
            if S > self.cfg.b:
                self.alarmed = True
                break

    def snapshot(self):
        cands = dict(sorted(self.cand.items()))
        cands[self.pool_tau] = self.pool_ell
        return cands


class CusumDetector:
    """Online CUSUM over one stream; single-owner, feed events in order.

    observe(t, u) buffers an event; advance_to(t) evaluates every grid
    boundary up to t (using only events at or before each boundary) and
    returns True once the alarm has fired.  After an alarm the state is
    frozen.
    """

    def __init__(self, pre: HawkesModel, post: HawkesModel, cfg: CusumConfig):
        if cfg is None:
            raise ValueError("cfg is required")
        for m in (pre, post):
            problems = validate_model(m)
            if problems:
                raise ValueError("invalid model: " + "; ".join(problems))
        if pre.d != post.d:
            raise ValueError("pre and post must have the same node count")
        self.pre = pre
        self.post = post
        self.cfg = cfg
        self.d = pre.d
        self._alarmed = False
        self._last_t = -np.inf
        self._n_eval = 0
        self._S = 0.0
        self._tau = 0.0
        self._fast = _both_plain_exp(pre, post)
        if not self._fast:
            self._slow = _SlowCusum(pre, post, cfg)
            return
        self._eng = get_engine()
        self._m = 0
        self._times = np.empty(1024)
        self._nodes = np.empty(1024, dtype=np.int64)
        self._g0 = np.zeros(self.d)
        self._g1 = np.zeros(self.d)
        self._cs0 = np.ascontiguousarray(pre.A.sum(axis=0))
        self._cs1 = np.ascontiguousarray(post.A.sum(axis=0))
        self._traj_S = np.empty(4096)
        self._traj_tau = np.empty(4096)
        if cfg.B is None:
            cap = 4096
            self._cand_tau = np.empty(cap)
            self._cand_ell = np.empty(cap)
            self._cand_d = np.empty(cap)
            self._cand_r = np.empty(cap)
            self._cand_q = np.empty((self.d, cap))
            self._state_f = np.array([0.0, 0.0, 0.0, -1.0])
            self._state_i = np.array([0, 0, 0, 1], dtype=np.int64)
        else:
            self._cand_ell = np.empty(1024)
            self._state_f = np.array([0.0, 0.0])
            self._state_i = np.array([0, 0, 0, 1], dtype=np.int64)

    # -- event intake -------------------------------------------------

    def observe(self, t: float, u: int):
        if self._alarmed:
            return
        if t <= self._last_t:
            raise ValueError("events must arrive in strictly increasing time order")
        self._last_t = t
        if not self._fast:
            self._slow.observe(t, u)
            return
        if self._m == self._times.size:
            self._times = np.concatenate([self._times, np.empty(self._times.size)])
            self._nodes = np.concatenate([self._nodes, np.empty(self._nodes.size, dtype=np.int64)])
            if self.cfg.B is not None:
                # candidate values stay index-aligned with the event buffer
                self._cand_ell = np.concatenate([self._cand_ell, np.empty(self._cand_ell.size)])
        self._times[self._m] = t
        self._nodes[self._m] = u
        self._m += 1

    def observe_stream(self, events: EventStream):
        if not self._fast or self._alarmed or len(events) == 0:
            for t, u in zip(events.times, events.nodes):
                self.observe(float(t), int(u))
            return
        if events.times[0] <= self._last_t:
            raise ValueError("events must arrive in strictly increasing time order")
        m = self._m + len(events)
        if m > self._times.size:
            cap = max(2 * self._times.size, m)
            self._times = np.resize(self._times, cap)
            self._nodes = np.resize(self._nodes, cap)
            if self.cfg.B is not None:
                self._cand_ell = np.resize(self._cand_ell, cap)
        self._times[self._m : m] = events.times
        self._nodes[self._m : m] = events.nodes
        self._m = m
        self._last_t = float(events.times[-1])

    # -- evaluation ---------------------------------------------------

    def advance_to(self, t: float) -> bool:
        if self._alarmed:
            return True
        n_to = int(np.floor(min(t, self.cfg.max_time) / self.cfg.gamma + 1e-9))
        if n_to < 1:
            return False
        if not self._fast:
            if n_to >= self._slow.n_next:
                self._slow.advance(n_to)
                self._n_eval = self._slow.n_next - 1
                self._S, self._tau = self._slow.S, self._slow.tau_hat
                self._alarmed = self._slow.alarmed
            return self._alarmed
        if n_to < self._state_i[3]:
            return False
        while self._traj_S.size < n_to:
            self._traj_S = np.concatenate([self._traj_S, np.empty(self._traj_S.size)])
            self._traj_tau = np.concatenate([self._traj_tau, np.empty(self._traj_tau.size)])
        while True:
            if self.cfg.B is None:
                status, S, tau = self._eng.cusum_exp_advance(
                    self._times[: self._m], self._nodes[: self._m], n_to, self.cfg.gamma,
                    self.pre.mu, self.pre.A, self.pre.shared_kernel.beta, self._cs0,
                    self.post.mu, self.post.A, self.post.shared_kernel.beta, self._cs1,
                    self.cfg.b, self._g0, self._g1,
                    self._cand_tau, self._cand_ell, self._cand_d, self._cand_r, self._cand_q,
                    self._state_f, self._state_i, self._traj_S, self._traj_tau,
                )
            else:
                status, S, tau = self._eng.cusum_trunc_advance(
                    self._times[: self._m], self._nodes[: self._m], n_to, self.cfg.gamma,
                    self.cfg.B,
                    self.pre.mu, self.pre.A, self.pre.shared_kernel.beta, self._cs0,
                    self.post.mu, self.post.A, self.post.shared_kernel.beta, self._cs1,
                    self.cfg.b, self._cand_ell,
                    self._state_f, self._state_i, self._traj_S, self._traj_tau,
                )
            if status == 2:  # exact path: candidate arrays full
                cap = 2 * self._cand_tau.size
                self._cand_tau = np.resize(self._cand_tau, cap)
                self._cand_ell = np.resize(self._cand_ell, cap)
                self._cand_d = np.resize(self._cand_d, cap)
                self._cand_r = np.resize(self._cand_r, cap)
                q = np.empty((self.d, cap))
                q[:, : cap // 2] = self._cand_q
                self._cand_q = q
                continue
            break
        self._n_eval = int(self._state_i[3]) - 1
        self._S, self._tau = S, tau
        if status == 1:
            self._alarmed = True
        return self._alarmed

    # -- results ------------------------------------------------------

    @property
    def alarmed(self) -> bool:
        return self._alarmed

    def outcome(self) -> DetectionOutcome:
        n = self._n_eval
        g = self.cfg.gamma
        if self._fast:
            S_path = self._traj_S[:n].copy()
            tau_path = self._traj_tau[:n].copy()
            seen = int(self._state_i[0])
        else:
            S_path = np.array(self._slow.traj)
            tau_path = np.array(self._slow.taus)
            seen = int(np.searchsorted(np.array(self._slow.times), n * g, side="right"))
        traj = np.column_stack([np.arange(1, n + 1) * g, S_path]) if n else np.empty((0, 2))
        return DetectionOutcome(
            alarmed=self._alarmed,
            T=n * g,
            tau_hat=self._tau,
            trajectory=traj,
            events_seen=seen,
            tau_path=tau_path,
        )

    @property
    def state(self) -> CusumState:
        if self._fast:
            if self.cfg.B is None:
                lo, nc = int(self._state_i[1]), int(self._state_i[2])
                cands = {self._state_f[1]: self._state_f[2]}
                for c in range(lo, nc):
                    cands[float(self._cand_tau[c])] = float(self._cand_ell[c])
                retained = None
            else:
                k, w_lo = int(self._state_i[0]), int(self._state_i[1])
                cands = {self._state_f[0]: self._state_f[1]}
                for c in range(w_lo, int(self._state_i[2])):
                    cands[float(self._times[c])] = float(self._cand_ell[c])
                retained = EventStream(
                    self._times[w_lo:k].copy(), self._nodes[w_lo:k].copy(),
                    self.d, float(self._times[k - 1]) if k > w_lo else 0.0,
                )
        else:
            cands = self._slow.snapshot()
            retained = None
        return CusumState(
            candidates=cands,
            n=self._n_eval,
            running_max=(self._tau, self._S),
            retained_history=retained,
        )


Source = Union[EventStream, Iterable[Tuple[float, int]]]


def _run(pre, post, source, cfg) -> DetectionOutcome:
    det = CusumDetector(pre, post, cfg)
    if isinstance(source, EventStream):
        # batch replay: the detector still only uses events at or before
        # each boundary, so this matches incremental feeding exactly
        end = min(source.horizon, cfg.max_time)
        hi = int(np.searchsorted(source.times, end, side="right"))
        det.observe_stream(EventStream(source.times[:hi], source.nodes[:hi], source.d, end))
        det.advance_to(end)
        return det.outcome()
    last = 0.0
    for t, u in source:
        det.observe(float(t), int(u))
        last = float(t)
        if det.advance_to(last):
            return det.outcome()
    if np.isfinite(cfg.max_time):
        det.advance_to(cfg.max_time)
    else:
        det.advance_to(last)
    return det.outcome()


def cusum_run(pre: HawkesModel, post: HawkesModel, source: Source, cfg: CusumConfig) -> DetectionOutcome:
    """Exact CUSUM; stops at the first boundary with S > b (strict)."""
    if cfg is None:
        raise ValueError("cfg is required")
    if cfg.B is not None:
        raise ValueError("cusum_run takes B = none; use cusum_truncated_run")
    return _run(pre, post, source, cfg)


def cusum_truncated_run(pre: HawkesModel, post: HawkesModel, source: Source, cfg: CusumConfig) -> DetectionOutcome:
    """Memory-bounded CUSUM with kernels truncated at lag B."""
    if cfg is None:
        raise ValueError("cfg is required")
    if cfg.B is None:
        raise ValueError("cusum_truncated_run needs B set")
    return _run(pre, post, source, cfg)
