"""Hawkes network model types and exact intensity/likelihood computations.

The conditional intensity of node i given the event history is

    lam_i(t) = mu_i + sum_j alpha_ij * sum_{t_k < t, u_k = j} phi_ij(t - t_k)

with a normalized triggering kernel phi (int_0^inf phi = 1) so that alpha_ij
is the expected number of events on node i directly triggered by one event
on node j.  Everything in this module is a plain function of immutable
inputs; the performance-critical paths live in the engine modules and are
validated against these reference implementations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "KernelSpec",
    "HawkesModel",
    "EventStream",
    "ChangeSpec",
    "cumulative_kernel",
    "conditional_intensity",
    "compensator",
    "log_likelihood",
    "mean_field_intensity",
    "kl_mean_field",
    "validate_model",
    "spectral_radius",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class KernelSpec:
    """Normalized triggering kernel with optional truncation width.

    family is "exponential" (phi(t) = beta * exp(-beta t)) or "tabulated"
    (phi sampled on a grid, linearly interpolated, zero beyond the last
    grid point).  When truncation is set the effective kernel is
    phi(t) * 1{t <= truncation} and the cumulative is clipped at
    Phi(truncation).
    """

    family: str = "exponential"
    beta: Optional[float] = None
    grid_t: Optional[np.ndarray] = None
    grid_phi: Optional[np.ndarray] = None
    truncation: Optional[float] = None

    def __post_init__(self):
        if self.family == "exponential":
            if self.beta is None or self.beta <= 0:
                raise ValueError("exponential kernel needs beta > 0")
            if self.grid_t is not None or self.grid_phi is not None:
                raise ValueError("exponential kernel takes no grid")
        elif self.family == "tabulated":
            if self.grid_t is None or self.grid_phi is None:
                raise ValueError("tabulated kernel needs grid_t and grid_phi")
            t = np.asarray(self.grid_t, dtype=np.float64)
            p = np.asarray(self.grid_phi, dtype=np.float64)
            if t.ndim != 1 or t.shape != p.shape or t.size < 2:
                raise ValueError("kernel grid must be 1-D, equal length, size >= 2")
            if t[0] != 0.0 or np.any(np.diff(t) <= 0):
                raise ValueError("kernel grid must start at 0 and strictly increase")
            if np.any(p < 0):
                raise ValueError("kernel values must be nonnegative")
            object.__setattr__(self, "grid_t", _readonly(t))
            object.__setattr__(self, "grid_phi", _readonly(p))
            # Nodal cumulative integral of the linear interpolant.
            cum = np.concatenate(
                ([0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(t)))
            )
            object.__setattr__(self, "_grid_cum", _readonly(cum))
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.truncation is not None and self.truncation <= 0:
            raise ValueError("truncation width must be positive")

    # total mass before truncation; 1 up to tabulation error
    def total_mass(self) -> float:
        if self.family == "exponential":
            return 1.0
        return float(self._grid_cum[-1])

    def phi(self, dt):
        """Kernel value phi(dt), elementwise; zero for dt < 0."""
        dt = np.asarray(dt, dtype=np.float64)
        if self.family == "exponential":
            out = np.where(dt >= 0, self.beta * np.exp(-self.beta * np.minimum(dt, 700.0 / self.beta)), 0.0)
        else:
            out = np.interp(dt, self.grid_t, self.grid_phi, left=0.0, right=0.0)
            out = np.where(dt >= 0, out, 0.0)
        if self.truncation is not None:
            out = np.where(dt <= self.truncation, out, 0.0)
        return out if out.ndim else float(out)

    def cum(self, dt):
        """Cumulative kernel Phi(dt) = int_0^dt phi, clipped at truncation."""
        dt = np.asarray(dt, dtype=np.float64)
        x = np.maximum(dt, 0.0)
        if self.truncation is not None:
            x = np.minimum(x, self.truncation)
        if self.family == "exponential":
            out = -np.expm1(-self.beta * x)
        else:
            t, p, cum = self.grid_t, self.grid_phi, self._grid_cum
            xc = np.minimum(x, t[-1])
            idx = np.clip(np.searchsorted(t, xc, side="right") - 1, 0, t.size - 2)
            frac = xc - t[idx]
            slope = (p[idx + 1] - p[idx]) / (t[idx + 1] - t[idx])
            out = cum[idx] + frac * (p[idx] + 0.5 * slope * frac)
        return out if out.ndim else float(out)


def cumulative_kernel(kernel: KernelSpec, t) -> float:
    """Phi(t), the integrated influence up to lag t (0 for t < 0)."""
    return kernel.cum(t)


KernelLike = Union[KernelSpec, np.ndarray]  # shared kernel or D x D table


@dataclass(frozen=True)
class HawkesModel:
    """A multivariate Hawkes process law: base rates, influence matrix, kernel.

    A[i, j] is the influence of node j on node i.  kernel is either one
    KernelSpec shared by all edges or a D x D object array of KernelSpec
    (per-edge kernels; exercised by unit tests only).
    """

    mu: np.ndarray
    A: np.ndarray
    kernel: KernelLike = field(default_factory=KernelSpec)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape != (mu.size, mu.size):
            raise ValueError("A must be D x D matching mu")
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "A", _readonly(A))
        if not isinstance(self.kernel, KernelSpec):
            tab = np.asarray(self.kernel, dtype=object)
            if tab.shape != (mu.size, mu.size):
                raise ValueError("per-edge kernel table must be D x D")
            for k in tab.flat:
                if not isinstance(k, KernelSpec):
                    raise ValueError("kernel table entries must be KernelSpec")
            object.__setattr__(self, "kernel", tab)

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def shared_kernel(self) -> Optional[KernelSpec]:
        return self.kernel if isinstance(self.kernel, KernelSpec) else None

    def edge_kernel(self, i: int, j: int) -> KernelSpec:
        k = self.kernel
        return k if isinstance(k, KernelSpec) else k[i, j]


@dataclass(frozen=True)
class EventStream:
    """Time-sorted marked events (t_k, u_k) observed on [0, horizon].

    Timestamps must be strictly increasing; simultaneous events are
    rejected here and deduplicated (with a warning) by the file loader.
    """

    times: np.ndarray
    nodes: np.ndarray
    d: int
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        u = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        if t.size != u.size:
            raise ValueError("times and nodes must have equal length")
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise ValueError("timestamps must be strictly increasing (no ties)")
            if t[0] < 0 or t[-1] > self.horizon:
                raise ValueError("timestamps must lie in [0, horizon]")
            if u.min() < 0 or u.max() >= self.d:
                raise ValueError("node indices must lie in [0, d)")
        object.__setattr__(self, "times", _readonly(t))
        object.__setattr__(self, "nodes", _readonly(u))
        object.__setattr__(self, "horizon", float(self.horizon))

    def __len__(self) -> int:
        return self.times.size

    @staticmethod
    def empty(d: int, horizon: float) -> "EventStream":
        return EventStream(np.empty(0), np.empty(0, dtype=np.int64), d, horizon)

    def count(self, a: float, b: float) -> int:
        """Number of events with t in (a, b]."""
        lo, hi = np.searchsorted(self.times, [a, b], side="right")
        return int(hi - lo)


@dataclass(frozen=True)
class ChangeSpec:
    """Pre/post process pair with a change time: the alternative hypothesis.

    At kappa the history is reset: events before kappa do not excite the
    post-change process.  The change is in A only, so mu must match.
    """

    pre: HawkesModel
    post: HawkesModel
    kappa: float

    def __post_init__(self):
        if self.pre.d != self.post.d:
            raise ValueError("pre and post must have the same node count")
        if not np.array_equal(self.pre.mu, self.post.mu):
            raise ValueError("pre and post must share mu (change is in A only)")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")


def spectral_radius(A: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(np.asarray(A, dtype=np.float64))).max())


def conditional_intensity(
    model: HawkesModel,
    events: EventStream,
    node: int,
    t: float,
    history_start: float = 0.0,
) -> float:
    """Left-limit intensity lam_node(t-) using events in (history_start, t).

    history_start = 0 gives the running (infinite-history) intensity;
    history_start = tau gives the post-change intensity for t > tau.  An
    event at exactly t is excluded, and so is one at exactly history_start.
    """
    if history_start > t:
        raise ValueError("history_start must be <= t")
    lo = np.searchsorted(events.times, history_start, side="right")
    hi = np.searchsorted(events.times, t, side="left")
    ts = events.times[lo:hi]
    us = events.nodes[lo:hi]
    lam = model.mu[node]
    ker = model.shared_kernel
    if ker is not None:
        if ts.size:
            lam += float(np.dot(model.A[node, us], ker.phi(t - ts)))
    else:
        for j in range(model.d):
            sel = ts[us == j]
            if sel.size:
                lam += model.A[node, j] * float(np.sum(model.edge_kernel(node, j).phi(t - sel)))
    return float(lam)


def compensator(
    model: HawkesModel,
    events: EventStream,
    node: int,
    a: float,
    b: float,
    history_start: float = 0.0,
) -> float:
    """int_a^b lam_node(s) ds with history from history_start, via Phi sums."""
    if not (history_start <= a <= b):
        raise ValueError("need history_start <= a <= b")
    lo = np.searchsorted(events.times, history_start, side="right")
    hi = np.searchsorted(events.times, b, side="left")
    ts = events.times[lo:hi]
    us = events.nodes[lo:hi]
    total = model.mu[node] * (b - a)
    ker = model.shared_kernel
    if ker is not None:
        if ts.size:
            total += float(np.dot(model.A[node, us], ker.cum(b - ts) - ker.cum(a - ts)))
    else:
        for j in range(model.d):
            sel = ts[us == j]
            if sel.size:
                kj = model.edge_kernel(node, j)
                total += model.A[node, j] * float(np.sum(kj.cum(b - sel) - kj.cum(a - sel)))
    return float(total)


def log_likelihood(
    model: HawkesModel,
    events: EventStream,
    window: tuple[float, float],
    history_start: float = 0.0,
    node: Optional[int] = None,
) -> float:
    """Network log-likelihood over (a, b]:

        sum_i [ sum_{events (t_k, i) in (a, b]} log lam_i(t_k)
                - int_a^b lam_i(s) ds ]

    computed per node and summed, so it decouples exactly into the
    per-node values (pass node=i for one term).  Intensities at events use
    the left limit and history from history_start.
    """
    a, b = window
    if not (history_start <= a <= b):
        raise ValueError("need history_start <= a <= b")
    if node is not None:
        return _node_loglik(model, events, node, a, b, history_start)
    vals = np.array(
        [_node_loglik(model, events, i, a, b, history_start) for i in range(model.d)]
    )
    return float(np.sum(vals))


def _node_loglik(model, events, node, a, b, history_start):
    lo, hi = np.searchsorted(events.times, [a, b], side="right")
    term = 0.0
    for k in range(lo, hi):
        if events.nodes[k] != node:
            continue
        lam = conditional_intensity(model, events, node, events.times[k], history_start)
        if lam <= 0:
            raise ValueError(f"nonpositive intensity at event t={events.times[k]}")
        term += np.log(lam)
    return term - compensator(model, events, node, a, b, history_start)


def mean_field_intensity(model: HawkesModel) -> np.ndarray:
    """Stationary mean intensity vector: the solution of (I - A) x = mu."""
    rho = spectral_radius(model.A)
    if rho >= 1:
        raise ValueError(f"nonstationary model: spectral radius {rho:.4f} >= 1")
    x = np.linalg.solve(np.eye(model.d) - model.A, model.mu)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("mean-field solve produced nonpositive rates")
    return x


def kl_mean_field(pre: HawkesModel, post: HawkesModel) -> float:
    """Mean-field KL divergence rate between post- and pre-change laws:

        I = lbar1 . (log lbar1 - log lbar0) - sum(lbar1 - lbar0)

    where lbar = (I - A)^(-1) mu.  Nonnegative; zero iff the mean
    intensities coincide.
    """
    if pre.d != post.d:
        raise ValueError("models must have the same node count")
    l0 = mean_field_intensity(pre)
    l1 = mean_field_intensity(post)
    return float(np.dot(l1, np.log(l1) - np.log(l0)) - np.sum(l1 - l0))


def validate_model(model: HawkesModel) -> list[str]:
    """Collect invariant violations (empty list means the model is valid)."""
    bad = []
    if np.any(model.mu <= 0):
        bad.append("base rates must be strictly positive")
    if np.any(model.A < 0):
        bad.append("influence matrix has negative entries")
    rho = spectral_radius(model.A)
    if rho >= 1:
        bad.append(f"spectral radius >= 1 (got {rho:.6g})")
    kernels = [model.kernel] if model.shared_kernel is not None else list(np.asarray(model.kernel, dtype=object).flat)
    for k in kernels:
        if abs(k.total_mass() - 1.0) > 1e-6:
            bad.append(f"kernel not normalized: integral {k.total_mass():.8g}")
            break
    return bad
