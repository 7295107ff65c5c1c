"""Numba implementations of the hot kernels (shared-exponential-kernel paths).

Every function here has a twin of the same name and signature in
_engine_numpy; the dispatch lives in hawkscan.backend.  All arrays are
contiguous float64/int64.  Models enter as plain (mu, A, beta) triples; a
truncation width B uses np.inf for "none".

Intensity bookkeeping: g[j] = sum over retained events (t_l, j) of
beta * exp(-beta (t - t_l)), so lam_i(t) = mu[i] + dot(A[i], g).  Between
events g decays by a scalar factor; an event adds beta to its node.  A
candidate change-point tau in the exact CUSUM is carried through

    g_tau(t) = g(t) - exp(-beta1 (t - tau)) * g(tau+),

which turns the per-candidate state into one scalar decay d plus two fixed
projections of the snapshot g(tau+): r = colsum1 . s and q[:, c] = A1 s.
Once d falls below 1e-17 the candidate's remaining discrepancy from the
collapsed pool candidate is under ~1e-14 in the statistic, far below every
advertised tolerance, so it is merged and the live set stays bounded.
"""

import numpy as np
from numba import njit

NB_OPTS = dict(cache=True, fastmath=False)

D_COLLAPSE = 1e-17


@njit(**NB_OPTS)
def _dot(a, b):
    s = 0.0
    for i in range(a.size):
        s += a[i] * b[i]
    return s


# ---------------------------------------------------------------------------
# Ogata thinning, exponential kernel
# ---------------------------------------------------------------------------


@njit(**NB_OPTS)
def simulate_exp(gen, mu, A, beta, t0, t1, g, n_prior, max_events, out_t, out_u):
    """Thinning on (t0, t1] starting from excitation state g at t0.

    Writes into out_t/out_u and returns (n_written, status) with status
    0 = reached t1, 1 = out buffer full, 2 = max_events reached.  The
    dominating rate is re-tightened after every candidate; with an
    exponential kernel the total intensity is nonincreasing between
    events, so the current value is a valid bound.  Interrupts only right
    after an accepted event, so a capacity-grown resume consumes the
    generator in the same order.
    """
    d = mu.size
    smu = 0.0
    for i in range(d):
        smu += mu[i]
    colsum = np.zeros(d)
    for j in range(d):
        c = 0.0
        for i in range(d):
            c += A[i, j]
        colsum[j] = c
    lam = np.zeros(d)

    t = t0
    n = 0
    cap = out_t.size
    if n_prior >= max_events:
        return 0, 2
    if cap == 0:
        return 0, 1
    m = smu + _dot(colsum, g)
    while True:
        t_cand = t + gen.standard_exponential() / m
        if t_cand > t1:
            return n, 0
        f = np.exp(-beta * (t_cand - t))
        for j in range(d):
            g[j] *= f
        t = t_cand
        lam_tot = smu + _dot(colsum, g)
        if gen.random() * m <= lam_tot:
            for i in range(d):
                lam[i] = mu[i] + _dot(A[i], g)
            v = gen.random() * lam_tot
            u = d - 1
            acc = 0.0
            for i in range(d):
                acc += lam[i]
                if v <= acc:
                    u = i
                    break
            out_t[n] = t
            out_u[n] = u
            n += 1
            g[u] += beta
            m = lam_tot + colsum[u] * beta
            if n_prior + n >= max_events:
                return n, 2
            if n >= cap:
                return n, 1
        else:
            m = lam_tot


# ---------------------------------------------------------------------------
# Exact log-likelihood, exponential kernel (optionally truncated)
# ---------------------------------------------------------------------------


@njit(**NB_OPTS)
def _phi_cum_exp(x, beta, B):
    # Phi(min(x, B)) with Phi(t) = 1 - exp(-beta t); 0 for x <= 0
    if x <= 0.0:
        return 0.0
    if x > B:
        x = B
    return -np.expm1(-beta * x)


@njit(**NB_OPTS)
def loglik_exp(times, nodes, mu, A, beta, B, a, b, hist):
    """Sum_i [ sum_{(t_k,i) in (a,b]} log lam_i(t_k) - int_a^b lam_i ].

    Excitation starts strictly after `hist`; B is the truncation width
    (np.inf for none).
    """
    d = mu.size
    n = times.size
    g = np.zeros(d)
    total = 0.0
    lo = 0
    t_prev = hist
    started = False
    for k in range(n):
        tk = times[k]
        if tk <= hist:
            lo = k + 1
            continue
        if tk > b:
            break
        if not started:
            t_prev = tk
            started = True
        f = np.exp(-beta * (tk - t_prev))
        for j in range(d):
            g[j] *= f
        while lo < k and times[lo] <= tk - B:
            g[nodes[lo]] -= beta * np.exp(-beta * (tk - times[lo]))
            lo += 1
        if a < tk:
            u = nodes[k]
            lam = mu[u] + _dot(A[u], g)
            if lam < 1e-300:
                lam = 1e-300
            total += np.log(lam)
        g[nodes[k]] += beta
        t_prev = tk
    comp = 0.0
    for k in range(n):
        tk = times[k]
        if tk <= hist:
            continue
        if tk >= b:
            break
        w = _phi_cum_exp(b - tk, beta, B) - _phi_cum_exp(a - tk, beta, B)
        if w != 0.0:
            colsum = 0.0
            for i in range(d):
                colsum += A[i, nodes[k]]
            comp += colsum * w
    smu = 0.0
    for i in range(d):
        smu += mu[i]
    return total - comp - smu * (b - a)


# ---------------------------------------------------------------------------
# Exact CUSUM (recursive, unbounded memory in principle)
# ---------------------------------------------------------------------------


@njit(**NB_OPTS)
def _cusum_compact(cand_tau, cand_ell, cand_d, cand_r, cand_q, c_lo, nc):
    d = cand_q.shape[0]
    w = 0
    for c in range(c_lo, nc):
        cand_tau[w] = cand_tau[c]
        cand_ell[w] = cand_ell[c]
        cand_d[w] = cand_d[c]
        cand_r[w] = cand_r[c]
        for i in range(d):
            cand_q[i, w] = cand_q[i, c]
        w += 1
    return w


@njit(**NB_OPTS)
def cusum_exp_advance(
    times,
    nodes,
    n_to,
    gamma,
    mu0,
    A0,
    beta0,
    colsum0,
    mu1,
    A1,
    beta1,
    colsum1,
    b,
    g0,
    g1,
    cand_tau,
    cand_ell,
    cand_d,
    cand_r,
    cand_q,
    state_f,
    state_i,
    traj_S,
    traj_tau,
):
    """Advance the exact CUSUM until boundary index n_to has been evaluated.

    state_f = [pos, pool_tau, pool_ell, pending_tau (< 0 when none)]
    state_i = [k_next_event, c_lo, nc, n_next_boundary]

    Candidates occupy cand_* slots [c_lo, nc) in tau order; the pool is
    the collapsed candidate holding every retired tau, with ties resolved
    toward the earliest.  pending_tau defers the candidate for an event
    that fell exactly on a boundary to the next cell, keeping the
    invariant tau < n gamma at evaluation time.  The statistic is written
    to traj_S[n-1] / traj_tau[n-1] for each boundary n evaluated.

    Returns (status, S, tau_hat): 0 = reached n_to, 1 = alarm (strict
    S > b), 2 = candidate arrays full (grow them and call again; the
    state resumes mid-cell).
    """
    d = mu0.size
    smu0 = 0.0
    smu1 = 0.0
    for i in range(d):
        smu0 += mu0[i]
        smu1 += mu1[i]
    cap = cand_tau.size
    n_events = times.size

    pos = state_f[0]
    k = state_i[0]
    c_lo = state_i[1]
    nc = state_i[2]
    n = state_i[3]
    S = -np.inf
    tau_hat = state_f[1]

    while n <= n_to:
        if state_f[3] >= 0.0:
            if nc >= cap:
                if c_lo > 0:
                    nc = _cusum_compact(cand_tau, cand_ell, cand_d, cand_r, cand_q, c_lo, nc)
                    c_lo = 0
                if nc >= cap:
                    state_f[0] = pos
                    state_i[0] = k
                    state_i[1] = c_lo
                    state_i[2] = nc
                    state_i[3] = n
                    return 2, S, tau_hat
            cand_tau[nc] = state_f[3]
            cand_ell[nc] = 0.0
            cand_d[nc] = 1.0
            cand_r[nc] = _dot(colsum1, g1)
            for i in range(d):
                cand_q[i, nc] = _dot(A1[i], g1)
            nc += 1
            state_f[3] = -1.0
        cell_end = n * gamma
        while k < n_events and times[k] <= cell_end:
            tk = times[k]
            u = nodes[k]
            dt = tk - pos
            f0 = np.exp(-beta0 * dt)
            f1 = np.exp(-beta1 * dt)
            base = (smu0 - smu1) * dt + _dot(colsum0, g0) * (1.0 - f0) / beta0 \
                - _dot(colsum1, g1) * (1.0 - f1) / beta1
            w1 = (1.0 - f1) / beta1
            state_f[2] += base
            for c in range(c_lo, nc):
                cand_ell[c] += base + cand_d[c] * cand_r[c] * w1
                cand_d[c] *= f1
            for j in range(d):
                g0[j] *= f0
                g1[j] *= f1
            lam0 = mu0[u] + _dot(A0[u], g0)
            c1u = mu1[u] + _dot(A1[u], g1)
            bracket = np.log(c1u) - np.log(lam0)
            state_f[2] += bracket
            for c in range(c_lo, nc):
                x = -cand_d[c] * cand_q[u, c] / c1u
                if x > -1e-8:
                    # log1p to within 3e-25: cheaper than the exact call
                    cand_ell[c] += bracket + x - 0.5 * x * x
                else:
                    cand_ell[c] += bracket + np.log1p(x)
            g0[u] += beta0
            g1[u] += beta1
            pos = tk
            k += 1
            if tk < cell_end:
                if nc >= cap:
                    if c_lo > 0:
                        nc = _cusum_compact(cand_tau, cand_ell, cand_d, cand_r, cand_q, c_lo, nc)
                        c_lo = 0
                    if nc >= cap:
                        state_f[0] = pos
                        state_i[0] = k
                        state_i[1] = c_lo
                        state_i[2] = nc
                        state_i[3] = n
                        return 2, S, tau_hat
                cand_tau[nc] = tk
                cand_ell[nc] = 0.0
                cand_d[nc] = 1.0
                cand_r[nc] = _dot(colsum1, g1)
                for i in range(d):
                    cand_q[i, nc] = _dot(A1[i], g1)
                nc += 1
            else:
                state_f[3] = tk
        dt = cell_end - pos
        if dt > 0.0:
            f0 = np.exp(-beta0 * dt)
            f1 = np.exp(-beta1 * dt)
            base = (smu0 - smu1) * dt + _dot(colsum0, g0) * (1.0 - f0) / beta0 \
                - _dot(colsum1, g1) * (1.0 - f1) / beta1
            w1 = (1.0 - f1) / beta1
            state_f[2] += base
            for c in range(c_lo, nc):
                cand_ell[c] += base + cand_d[c] * cand_r[c] * w1
                cand_d[c] *= f1
            for j in range(d):
                g0[j] *= f0
                g1[j] *= f1
            pos = cell_end
        # retire candidates with negligible decay scalar (a tau-ordered
        # prefix); the pool keeps the earliest tau on ties
        while c_lo < nc and cand_d[c_lo] < D_COLLAPSE:
            if cand_ell[c_lo] > state_f[2]:
                state_f[2] = cand_ell[c_lo]
                state_f[1] = cand_tau[c_lo]
            c_lo += 1
        S = state_f[2]
        tau_hat = state_f[1]
        for c in range(c_lo, nc):
            if cand_ell[c] > S:
                S = cand_ell[c]
                tau_hat = cand_tau[c]
        traj_S[n - 1] = S
        traj_tau[n - 1] = tau_hat
        n += 1
        if S > b:
            break
    state_f[0] = pos
    state_i[0] = k
    state_i[1] = c_lo
    state_i[2] = nc
    state_i[3] = n
    return (1 if S > b else 0), S, tau_hat


# ---------------------------------------------------------------------------
# Truncated CUSUM (bounded memory): retained window + collapsed candidate
# ---------------------------------------------------------------------------


@njit(**NB_OPTS)
def _lam_trunc(times, nodes, w_lo, k_ev, cut, mu, A, beta):
    # intensity at event k_ev from events with t_l > cut (and l < k_ev)
    tk = times[k_ev]
    u = nodes[k_ev]
    lam = mu[u]
    for l in range(w_lo, k_ev):
        tl = times[l]
        if tl > cut:
            lam += A[u, nodes[l]] * beta * np.exp(-beta * (tk - tl))
    return lam


@njit(**NB_OPTS)
def cusum_trunc_advance(
    times,
    nodes,
    n_to,
    gamma,
    B,
    mu0,
    A0,
    beta0,
    colsum0,
    mu1,
    A1,
    beta1,
    colsum1,
    b,
    cand_ell,
    state_f,
    state_i,
    traj_S,
    traj_tau,
):
    """Advance the truncated CUSUM until boundary index n_to is evaluated.

    state_f = [pool_tau, pool_ell]; state_i = [k, w_lo, cand_next, n_next].
    Retained events are times[w_lo:k]; the candidate tau = times[c]+ keeps
    its statistic in cand_ell[c] (aligned with the event arrays, so the
    caller sizes cand_ell like times).  Surviving candidates update by
    recursion, fresh ones by direct evaluation over (tau, t]; candidates
    aging past t - B merge into the pool, whose increments are
    tau-independent.  Both intensities use the truncated kernel.  Returns
    (status, S, tau_hat) with status as in cusum_exp_advance (capacity
    cannot run out).
    """
    smu0 = 0.0
    smu1 = 0.0
    for i in range(mu0.size):
        smu0 += mu0[i]
        smu1 += mu1[i]
    n_events = times.size
    k = state_i[0]
    w_lo = state_i[1]
    cand_next = state_i[2]
    n = state_i[3]
    S = -np.inf
    tau_hat = state_f[0]

    while n <= n_to:
        t1 = n * gamma
        t0 = t1 - gamma
        k_cell = k
        while k < n_events and times[k] <= t1:
            k += 1
        n_old = cand_next  # candidates that existed entering this cell
        for m in range(k_cell, k):
            tm = times[m]
            lam0 = _lam_trunc(times, nodes, w_lo, m, tm - B, mu0, A0, beta0)
            l0 = np.log(lam0)
            lam_p = _lam_trunc(times, nodes, w_lo, m, tm - B, mu1, A1, beta1)
            state_f[1] += np.log(lam_p) - l0
            for c in range(w_lo, n_old):
                cut = times[c]
                if tm - B > cut:
                    cut = tm - B
                lam1 = _lam_trunc(times, nodes, w_lo, m, cut, mu1, A1, beta1)
                cand_ell[c] += np.log(lam1) - l0
        comp0 = smu0 * gamma
        comp1_all = smu1 * gamma
        for l in range(w_lo, k):
            tl = times[l]
            if tl >= t1:
                break
            comp0 += colsum0[nodes[l]] * (
                _phi_cum_exp(t1 - tl, beta0, B) - _phi_cum_exp(t0 - tl, beta0, B)
            )
            comp1_all += colsum1[nodes[l]] * (
                _phi_cum_exp(t1 - tl, beta1, B) - _phi_cum_exp(t0 - tl, beta1, B)
            )
        state_f[1] += comp0 - comp1_all
        for c in range(w_lo, n_old):
            tau = times[c]
            comp1 = smu1 * gamma
            for l in range(w_lo, k):
                tl = times[l]
                if tl >= t1:
                    break
                if tl > tau:
                    comp1 += colsum1[nodes[l]] * (
                        _phi_cum_exp(t1 - tl, beta1, B) - _phi_cum_exp(t0 - tl, beta1, B)
                    )
            cand_ell[c] += comp0 - comp1
        # fresh candidates: direct evaluation of the ratio over (tau, t1]
        while cand_next < k and times[cand_next] < t1:
            c = cand_next
            tau = times[c]
            val = 0.0
            for m in range(c + 1, k):
                tm = times[m]
                lam0 = _lam_trunc(times, nodes, w_lo, m, tm - B, mu0, A0, beta0)
                cut = tau
                if tm - B > cut:
                    cut = tm - B
                lam1 = _lam_trunc(times, nodes, w_lo, m, cut, mu1, A1, beta1)
                val += np.log(lam1) - np.log(lam0)
            comp = (smu1 - smu0) * (t1 - tau)
            for l in range(w_lo, k):
                tl = times[l]
                if tl >= t1:
                    break
                if tl > tau:
                    comp += colsum1[nodes[l]] * _phi_cum_exp(t1 - tl, beta1, B)
                comp -= colsum0[nodes[l]] * (
                    _phi_cum_exp(t1 - tl, beta0, B) - _phi_cum_exp(tau - tl, beta0, B)
                )
            cand_ell[c] = val - comp
            cand_next += 1
        # age out candidates below t1 - B; their events leave the window too
        cut = t1 - B
        while w_lo < cand_next and times[w_lo] < cut:
            if cand_ell[w_lo] > state_f[1]:
                state_f[1] = cand_ell[w_lo]
                state_f[0] = times[w_lo]
            w_lo += 1
        S = state_f[1]
        tau_hat = state_f[0]
        for c in range(w_lo, cand_next):
            if cand_ell[c] > S:
                S = cand_ell[c]
                tau_hat = times[c]
        traj_S[n - 1] = S
        traj_tau[n - 1] = tau_hat
        n += 1
        if S > b:
            break
    state_i[0] = k
    state_i[1] = w_lo
    state_i[2] = cand_next
    state_i[3] = n
    return (1 if S > b else 0), S, tau_hat


# ---------------------------------------------------------------------------
# Sliding-window score statistic
# ---------------------------------------------------------------------------


@njit(**NB_OPTS)
def score_window_exp(times, nodes, mu, A, beta, B, t0, t1):
    """Score vector u (row-major length D^2) of the window (t0, t1] at A.

    u[i*D+j] = sum_{(t_k,i) in win} h_j(t_k)/lam_i(t_k) - int_win h_j,
    with h_j(s) the (possibly truncated) kernel sum over node-j events of
    the full history.
    """
    d = mu.size
    n = times.size
    g = np.zeros(d)
    cnt_old = np.zeros(d)
    cnt = np.zeros(d)
    u = np.zeros(d * d)
    phiB = _phi_cum_exp(B, beta, np.inf)

    hterm0 = np.zeros(d)
    hdone0 = False
    lo = 0
    t_prev = 0.0
    for k in range(n + 1):
        tk = times[k] if k < n else np.inf
        if not hdone0 and tk >= t0:
            # record H_j(t0) before any event at or past t0 is absorbed
            f = np.exp(-beta * (t0 - t_prev))
            lo_b = lo
            sub = np.zeros(d)
            old = np.zeros(d)
            while lo_b < n and times[lo_b] <= t0 - B:
                sub[nodes[lo_b]] += beta * np.exp(-beta * (t0 - times[lo_b]))
                old[nodes[lo_b]] += 1.0
                lo_b += 1
            for j in range(d):
                gb = g[j] * f - sub[j]
                hterm0[j] = (cnt_old[j] + old[j]) * phiB \
                    + (cnt[j] - cnt_old[j] - old[j]) - gb / beta
            hdone0 = True
        if k == n or tk > t1:
            break
        f = np.exp(-beta * (tk - t_prev))
        for j in range(d):
            g[j] *= f
        while lo < k and times[lo] <= tk - B:
            g[nodes[lo]] -= beta * np.exp(-beta * (tk - times[lo]))
            cnt_old[nodes[lo]] += 1.0
            lo += 1
        if t0 < tk:
            uu = nodes[k]
            lam = mu[uu] + _dot(A[uu], g)
            for j in range(d):
                u[uu * d + j] += g[j] / lam
        g[nodes[k]] += beta
        cnt[nodes[k]] += 1.0
        t_prev = tk
    f = np.exp(-beta * (t1 - t_prev))
    for j in range(d):
        g[j] *= f
    while lo < n and times[lo] <= t1 - B:
        g[nodes[lo]] -= beta * np.exp(-beta * (t1 - times[lo]))
        cnt_old[nodes[lo]] += 1.0
        lo += 1
    for j in range(d):
        h1 = cnt_old[j] * phiB + (cnt[j] - cnt_old[j]) - g[j] / beta
        hd = h1 - hterm0[j]
        for i in range(d):
            u[i * d + j] -= hd
    return u


@njit(**NB_OPTS)
def score_run_exp(times, nodes, mu, A, beta, i0inv, w, gamma, b, n_start, n_end, traj_S):
    """Score detector on the grid: stat(n) = u' I0inv u / w over (n g - w, n g].

    Evaluates n in [n_start, n_end); alarms when stat >= b.  Returns
    (status, n_stop, stat) with status 1 = alarm.  The tail state replays
    the head's decay recursion so per-event contributions cancel when
    events leave the window.  Untruncated kernel only.
    """
    d = mu.size
    n_events = times.size
    g_h = np.zeros(d)
    t_h = 0.0
    k_h = 0
    cnt_h = np.zeros(d)
    g_t = np.zeros(d)
    t_t = 0.0
    k_t = 0
    cnt_t = np.zeros(d)
    swin = np.zeros((d, d))
    u = np.zeros(d * d)
    stat = 0.0
    for n in range(n_start, n_end):
        t1 = n * gamma
        t0 = t1 - w
        while k_h < n_events and times[k_h] <= t1:
            tk = times[k_h]
            uu = nodes[k_h]
            f = np.exp(-beta * (tk - t_h))
            for j in range(d):
                g_h[j] *= f
            lam = mu[uu] + _dot(A[uu], g_h)
            for j in range(d):
                swin[uu, j] += g_h[j] / lam
            g_h[uu] += beta
            cnt_h[uu] += 1.0
            t_h = tk
            k_h += 1
        f = np.exp(-beta * (t1 - t_h))
        for j in range(d):
            g_h[j] *= f
        t_h = t1
        while k_t < n_events and times[k_t] <= t0:
            tk = times[k_t]
            uu = nodes[k_t]
            f = np.exp(-beta * (tk - t_t))
            for j in range(d):
                g_t[j] *= f
            lam = mu[uu] + _dot(A[uu], g_t)
            for j in range(d):
                swin[uu, j] -= g_t[j] / lam
            g_t[uu] += beta
            cnt_t[uu] += 1.0
            t_t = tk
            k_t += 1
        f = np.exp(-beta * (t0 - t_t))
        for j in range(d):
            g_t[j] *= f
        t_t = t0
        for j in range(d):
            hd = (cnt_h[j] - g_h[j] / beta) - (cnt_t[j] - g_t[j] / beta)
            for i in range(d):
                u[i * d + j] = swin[i, j] - hd
        stat = 0.0
        for i in range(d * d):
            acc = 0.0
            for j in range(d * d):
                acc += i0inv[i, j] * u[j]
            stat += u[i] * acc
        stat /= w
        traj_S[n - n_start] = stat
        if stat >= b:
            return 1, n + 1, stat
    return 0, n_end, stat


# ---------------------------------------------------------------------------
# Branching-structure EM on one window (history restarts at the window start)
# ---------------------------------------------------------------------------


@njit(**NB_OPTS)
def em_window_exp(
    times, nodes, lo, hi, d, mu, A, beta, B, win_a, win_b, fit_mu, tol, max_iter, gw, ll_path
):
    """EM for the influence matrix on events[lo:hi] within (win_a, win_b].

    gw is scratch of shape (>= hi-lo, d); gw[k, j] becomes the truncated
    kernel sum of in-window node-j events before event lo+k (kernel-only,
    so computed once).  Mutates A (and mu when fit_mu != 0) in place;
    returns (n_iter, converged, ll_final).  ll_path[it] records the window
    log-likelihood at the start of iteration it; EM never decreases it.
    Stops once the improvement drops below tol.
    """
    m = hi - lo
    g = np.zeros(d)
    t_prev = win_a
    lo_exp = lo
    for k in range(lo, hi):
        tk = times[k]
        f = np.exp(-beta * (tk - t_prev))
        for j in range(d):
            g[j] *= f
        while lo_exp < k and times[lo_exp] <= tk - B:
            g[nodes[lo_exp]] -= beta * np.exp(-beta * (tk - times[lo_exp]))
            lo_exp += 1
        for j in range(d):
            gw[k - lo, j] = g[j]
        g[nodes[k]] += beta
        t_prev = tk
    # kernel mass exposed by each node's events, right-censored at win_b
    dj = np.zeros(d)
    for k in range(lo, hi):
        dj[nodes[k]] += _phi_cum_exp(win_b - times[k], beta, B)

    span = win_b - win_a
    ll_prev = -np.inf
    n_iter = 0
    converged = False
    cnum = np.zeros((d, d))
    bg = np.zeros(d)
    for it in range(max_iter):
        smu = 0.0
        for i in range(d):
            smu += mu[i]
        for i in range(d):
            bg[i] = 0.0
            for j in range(d):
                cnum[i, j] = 0.0
        ll = -smu * span
        for j in range(d):
            caj = 0.0
            for i in range(d):
                caj += A[i, j]
            ll -= caj * dj[j]
        for k in range(m):
            uu = nodes[lo + k]
            lam = mu[uu]
            for j in range(d):
                lam += A[uu, j] * gw[k, j]
            ll += np.log(lam)
            inv = 1.0 / lam
            bg[uu] += mu[uu] * inv
            for j in range(d):
                cnum[uu, j] += gw[k, j] * inv
        ll_path[it] = ll
        n_iter = it + 1
        if ll - ll_prev < tol:
            converged = True
            break
        ll_prev = ll
        for i in range(d):
            for j in range(d):
                A[i, j] = A[i, j] * cnum[i, j] / dj[j] if dj[j] > 0.0 else 0.0
        if fit_mu != 0:
            for i in range(d):
                mu[i] = bg[i] / span
                if mu[i] < 1e-12:
                    mu[i] = 1e-12
    smu = 0.0
    for i in range(d):
        smu += mu[i]
    ll = -smu * span
    for j in range(d):
        caj = 0.0
        for i in range(d):
            caj += A[i, j]
        ll -= caj * dj[j]
    for k in range(m):
        uu = nodes[lo + k]
        lam = mu[uu]
        for j in range(d):
            lam += A[uu, j] * gw[k, j]
        ll += np.log(lam)
    return n_iter, converged, ll


@njit(**NB_OPTS)
def glr_run_exp(
    times,
    nodes,
    mu,
    A0,
    beta,
    w,
    gamma,
    b,
    n_start,
    n_end,
    tol,
    max_iter,
    a_init,
    traj_S,
    iters,
    gw_cap,
):
    """Windowed GLR on the grid with warm-started EM.

    stat(n) = max_A ll_win(A; history restart at t-w) - ll_win(A0; full
    history) over (n*gamma - w, n*gamma], alarming when stat >= b.
    Returns (status, n_stop, stat); status 3 means gw_cap (max events per
    window) was too small, rerun with a bigger one.  iters[n - n_start]
    records the EM iteration count per window.  Untruncated kernel only.
    """
    d = mu.size
    n_events = times.size
    g_h = np.zeros(d)
    t_h = 0.0
    k_h = 0
    cnt_h = np.zeros(d)
    cum_ll0 = np.zeros(n_events + 1)
    g_t = np.zeros(d)
    t_t = 0.0
    k_t = 0
    cnt_t = np.zeros(d)
    colsum0 = np.zeros(d)
    for j in range(d):
        c = 0.0
        for i in range(d):
            c += A0[i, j]
        colsum0[j] = c
    smu = 0.0
    for i in range(d):
        smu += mu[i]

    A = a_init.copy()
    mu_fixed = mu.copy()
    gw = np.zeros((gw_cap, d))
    ll_path = np.zeros(max_iter)
    stat = 0.0
    for n in range(n_start, n_end):
        t1 = n * gamma
        t0 = t1 - w
        while k_h < n_events and times[k_h] <= t1:
            tk = times[k_h]
            uu = nodes[k_h]
            f = np.exp(-beta * (tk - t_h))
            for j in range(d):
                g_h[j] *= f
            lam = mu[uu] + _dot(A0[uu], g_h)
            cum_ll0[k_h + 1] = cum_ll0[k_h] + np.log(lam)
            g_h[uu] += beta
            cnt_h[uu] += 1.0
            t_h = tk
            k_h += 1
        f = np.exp(-beta * (t1 - t_h))
        for j in range(d):
            g_h[j] *= f
        t_h = t1
        while k_t < n_events and times[k_t] <= t0:
            tk = times[k_t]
            uu = nodes[k_t]
            f = np.exp(-beta * (tk - t_t))
            for j in range(d):
                g_t[j] *= f
            g_t[uu] += beta
            cnt_t[uu] += 1.0
            t_t = tk
            k_t += 1
        f = np.exp(-beta * (t0 - t_t))
        for j in range(d):
            g_t[j] *= f
        t_t = t0
        comp0 = smu * w
        for j in range(d):
            comp0 += colsum0[j] * ((cnt_h[j] - g_h[j] / beta) - (cnt_t[j] - g_t[j] / beta))
        ll0 = (cum_ll0[k_h] - cum_ll0[k_t]) - comp0
        m = k_h - k_t
        if m > gw_cap:
            return 3, n, stat
        if m == 0:
            # Boundary solution A_hat = 0; keep the warm-start matrix as is
            # (zero is absorbing for the multiplicative EM update).
            ll_hat = -smu * w
            iters[n - n_start] = 0
        else:
            ni, conv, ll_hat = em_window_exp(
                times, nodes, k_t, k_h, d, mu_fixed, A, beta, np.inf,
                t0, t1, 0, tol, max_iter, gw, ll_path,
            )
            iters[n - n_start] = ni
            for i in range(d):
                for j in range(d):
                    if A[i, j] < 1e-6:
                        A[i, j] = 1e-6
        stat = ll_hat - ll0
        traj_S[n - n_start] = stat
        if stat >= b:
            return 1, n + 1, stat
    return 0, n_end, stat
