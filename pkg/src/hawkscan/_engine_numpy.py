"""Pure-numpy twins of the _engine_numba kernels.

Same function names, signatures, and return conventions; candidate-level
loops are vectorized where that matters.  Selected when numba is missing
or HAWKSCAN_BACKEND=numpy.  Results agree with the numba engine to
floating-point noise (summation orders differ in a few reductions).
"""

import numpy as np

D_COLLAPSE = 1e-17


def simulate_exp(gen, mu, A, beta, t0, t1, g, n_prior, max_events, out_t, out_u):
    """See _engine_numba.simulate_exp; draw order matches exactly."""
    d = mu.size
    smu = mu.sum()
    colsum = A.sum(axis=0)

    t = t0
    n = 0
    cap = out_t.size
    if n_prior >= max_events:
        return 0, 2
    if cap == 0:
        return 0, 1
    m = smu + colsum @ g
    while True:
        t_cand = t + gen.standard_exponential() / m
        if t_cand > t1:
            return n, 0
        g *= np.exp(-beta * (t_cand - t))
        t = t_cand
        lam_tot = smu + colsum @ g
        if gen.random() * m <= lam_tot:
            lam = mu + A @ g
            v = gen.random() * lam_tot
            u = min(int(np.searchsorted(np.cumsum(lam), v)), d - 1)
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


def _phi_cum_exp(x, beta, B):
    x = np.minimum(np.maximum(x, 0.0), B)
    return -np.expm1(-beta * x)


def loglik_exp(times, nodes, mu, A, beta, B, a, b, hist):
    """See _engine_numba.loglik_exp."""
    d = mu.size
    g = np.zeros(d)
    total = 0.0
    lo = 0
    t_prev = hist
    started = False
    for k in range(times.size):
        tk = times[k]
        if tk <= hist:
            lo = k + 1
            continue
        if tk > b:
            break
        if not started:
            t_prev = tk
            started = True
        g *= np.exp(-beta * (tk - t_prev))
        while lo < k and times[lo] <= tk - B:
            g[nodes[lo]] -= beta * np.exp(-beta * (tk - times[lo]))
            lo += 1
        if a < tk:
            u = nodes[k]
            lam = max(mu[u] + A[u] @ g, 1e-300)
            total += np.log(lam)
        g[nodes[k]] += beta
        t_prev = tk
    live = (times > hist) & (times < b)
    if live.any():
        colsum = A.sum(axis=0)
        w = _phi_cum_exp(b - times[live], beta, B) - _phi_cum_exp(a - times[live], beta, B)
        comp = float(colsum[nodes[live]] @ w)
    else:
        comp = 0.0
    return total - comp - mu.sum() * (b - a)


def _cusum_compact(cand_tau, cand_ell, cand_d, cand_r, cand_q, c_lo, nc):
    m = nc - c_lo
    cand_tau[:m] = cand_tau[c_lo:nc]
    cand_ell[:m] = cand_ell[c_lo:nc]
    cand_d[:m] = cand_d[c_lo:nc]
    cand_r[:m] = cand_r[c_lo:nc]
    cand_q[:, :m] = cand_q[:, c_lo:nc]
    return m


def cusum_exp_advance(
    times, nodes, n_to, gamma,
    mu0, A0, beta0, colsum0, mu1, A1, beta1, colsum1,
    b, g0, g1,
    cand_tau, cand_ell, cand_d, cand_r, cand_q,
    state_f, state_i, traj_S, traj_tau,
):
    """See _engine_numba.cusum_exp_advance; candidate updates vectorized."""
    d = mu0.size
    smu0 = mu0.sum()
    smu1 = mu1.sum()
    cap = cand_tau.size
    n_events = times.size

    pos = state_f[0]
    k = int(state_i[0])
    c_lo = int(state_i[1])
    nc = int(state_i[2])
    n = int(state_i[3])
    S = -np.inf
    tau_hat = state_f[1]

    def save():
        state_f[0] = pos
        state_i[0] = k
        state_i[1] = c_lo
        state_i[2] = nc
        state_i[3] = n

    def segment(dt):
        f0 = np.exp(-beta0 * dt)
        f1 = np.exp(-beta1 * dt)
        base = (smu0 - smu1) * dt + (colsum0 @ g0) * (1.0 - f0) / beta0 \
            - (colsum1 @ g1) * (1.0 - f1) / beta1
        w1 = (1.0 - f1) / beta1
        state_f[2] += base
        cand_ell[c_lo:nc] += base + cand_d[c_lo:nc] * cand_r[c_lo:nc] * w1
        cand_d[c_lo:nc] *= f1
        np.multiply(g0, f0, out=g0)
        np.multiply(g1, f1, out=g1)

    def spawn(tau):
        nonlocal nc, c_lo
        if nc >= cap:
            if c_lo > 0:
                nc = _cusum_compact(cand_tau, cand_ell, cand_d, cand_r, cand_q, c_lo, nc)
                c_lo = 0
            if nc >= cap:
                return False
        cand_tau[nc] = tau
        cand_ell[nc] = 0.0
        cand_d[nc] = 1.0
        cand_r[nc] = colsum1 @ g1
        cand_q[:, nc] = A1 @ g1
        nc += 1
        return True

    while n <= n_to:
        if state_f[3] >= 0.0:
            if not spawn(state_f[3]):
                save()
                return 2, S, tau_hat
            state_f[3] = -1.0
        cell_end = n * gamma
        while k < n_events and times[k] <= cell_end:
            tk = times[k]
            u = nodes[k]
            segment(tk - pos)
            lam0 = mu0[u] + A0[u] @ g0
            c1u = mu1[u] + A1[u] @ g1
            bracket = np.log(c1u) - np.log(lam0)
            state_f[2] += bracket
            x = -cand_d[c_lo:nc] * cand_q[u, c_lo:nc] / c1u
            cand_ell[c_lo:nc] += bracket + np.where(
                x > -1e-8, x - 0.5 * x * x, np.log1p(np.minimum(x, 0.0))
            )
            g0[u] += beta0
            g1[u] += beta1
            pos = tk
            k += 1
            if tk < cell_end:
                if not spawn(tk):
                    save()
                    return 2, S, tau_hat
            else:
                state_f[3] = tk
        if cell_end > pos:
            segment(cell_end - pos)
            pos = cell_end
        while c_lo < nc and cand_d[c_lo] < D_COLLAPSE:
            if cand_ell[c_lo] > state_f[2]:
                state_f[2] = cand_ell[c_lo]
                state_f[1] = cand_tau[c_lo]
            c_lo += 1
        S = state_f[2]
        tau_hat = state_f[1]
        if nc > c_lo:
            c = c_lo + int(np.argmax(cand_ell[c_lo:nc]))
            if cand_ell[c] > S:
                S = cand_ell[c]
                tau_hat = cand_tau[c]
        traj_S[n - 1] = S
        traj_tau[n - 1] = tau_hat
        n += 1
        if S > b:
            break
    save()
    return (1 if S > b else 0), S, tau_hat


def _lam_trunc(times, nodes, w_lo, k_ev, cut, mu, A, beta):
    tk = times[k_ev]
    u = nodes[k_ev]
    lam = mu[u]
    for l in range(w_lo, k_ev):
        tl = times[l]
        if tl > cut:
            lam += A[u, nodes[l]] * beta * np.exp(-beta * (tk - tl))
    return lam


def cusum_trunc_advance(
    times, nodes, n_to, gamma, B,
    mu0, A0, beta0, colsum0, mu1, A1, beta1, colsum1,
    b, cand_ell, state_f, state_i, traj_S, traj_tau,
):
    """See _engine_numba.cusum_trunc_advance."""
    smu0 = mu0.sum()
    smu1 = mu1.sum()
    n_events = times.size
    k = int(state_i[0])
    w_lo = int(state_i[1])
    cand_next = int(state_i[2])
    n = int(state_i[3])
    S = -np.inf
    tau_hat = state_f[0]

    while n <= n_to:
        t1 = n * gamma
        t0 = t1 - gamma
        k_cell = k
        while k < n_events and times[k] <= t1:
            k += 1
        n_old = cand_next
        for m in range(k_cell, k):
            tm = times[m]
            lam0 = _lam_trunc(times, nodes, w_lo, m, tm - B, mu0, A0, beta0)
            l0 = np.log(lam0)
            lam_p = _lam_trunc(times, nodes, w_lo, m, tm - B, mu1, A1, beta1)
            state_f[1] += np.log(lam_p) - l0
            for c in range(w_lo, n_old):
                cut = max(times[c], tm - B)
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
        while cand_next < k and times[cand_next] < t1:
            c = cand_next
            tau = times[c]
            val = 0.0
            for m in range(c + 1, k):
                tm = times[m]
                lam0 = _lam_trunc(times, nodes, w_lo, m, tm - B, mu0, A0, beta0)
                lam1 = _lam_trunc(times, nodes, w_lo, m, max(tau, tm - B), mu1, A1, beta1)
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


def score_window_exp(times, nodes, mu, A, beta, B, t0, t1):
    """See _engine_numba.score_window_exp."""
    d = mu.size
    n = times.size
    g = np.zeros(d)
    cnt_old = np.zeros(d)
    cnt = np.zeros(d)
    u = np.zeros(d * d)
    phiB = _phi_cum_exp(B, beta, np.inf) if np.isfinite(B) else 1.0

    hterm0 = np.zeros(d)
    hdone0 = False
    lo = 0
    t_prev = 0.0
    for k in range(n + 1):
        tk = times[k] if k < n else np.inf
        if not hdone0 and tk >= t0:
            f = np.exp(-beta * (t0 - t_prev))
            lo_b = lo
            sub = np.zeros(d)
            old = np.zeros(d)
            while lo_b < n and times[lo_b] <= t0 - B:
                sub[nodes[lo_b]] += beta * np.exp(-beta * (t0 - times[lo_b]))
                old[nodes[lo_b]] += 1.0
                lo_b += 1
            gb = g * f - sub
            hterm0[:] = (cnt_old + old) * phiB + (cnt - cnt_old - old) - gb / beta
            hdone0 = True
        if k == n or tk > t1:
            break
        g *= np.exp(-beta * (tk - t_prev))
        while lo < k and times[lo] <= tk - B:
            g[nodes[lo]] -= beta * np.exp(-beta * (tk - times[lo]))
            cnt_old[nodes[lo]] += 1.0
            lo += 1
        if t0 < tk:
            uu = nodes[k]
            lam = mu[uu] + A[uu] @ g
            u[uu * d:(uu + 1) * d] += g / lam
        g[nodes[k]] += beta
        cnt[nodes[k]] += 1.0
        t_prev = tk
    g *= np.exp(-beta * (t1 - t_prev))
    while lo < n and times[lo] <= t1 - B:
        g[nodes[lo]] -= beta * np.exp(-beta * (t1 - times[lo]))
        cnt_old[nodes[lo]] += 1.0
        lo += 1
    h1 = cnt_old * phiB + (cnt - cnt_old) - g / beta
    u -= np.tile(h1 - hterm0, d)
    return u


def score_run_exp(times, nodes, mu, A, beta, i0inv, w, gamma, b, n_start, n_end, traj_S):
    """See _engine_numba.score_run_exp."""
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
    stat = 0.0
    for n in range(n_start, n_end):
        t1 = n * gamma
        t0 = t1 - w
        while k_h < n_events and times[k_h] <= t1:
            tk = times[k_h]
            uu = nodes[k_h]
            g_h *= np.exp(-beta * (tk - t_h))
            lam = mu[uu] + A[uu] @ g_h
            swin[uu] += g_h / lam
            g_h[uu] += beta
            cnt_h[uu] += 1.0
            t_h = tk
            k_h += 1
        g_h *= np.exp(-beta * (t1 - t_h))
        t_h = t1
        while k_t < n_events and times[k_t] <= t0:
            tk = times[k_t]
            uu = nodes[k_t]
            g_t *= np.exp(-beta * (tk - t_t))
            lam = mu[uu] + A[uu] @ g_t
            swin[uu] -= g_t / lam
            g_t[uu] += beta
            cnt_t[uu] += 1.0
            t_t = tk
            k_t += 1
        g_t *= np.exp(-beta * (t0 - t_t))
        t_t = t0
        hd = (cnt_h - g_h / beta) - (cnt_t - g_t / beta)
        u = (swin - hd[None, :]).ravel()
        stat = float(u @ i0inv @ u) / w
        traj_S[n - n_start] = stat
        if stat >= b:
            return 1, n + 1, stat
    return 0, n_end, stat


def em_window_exp(
    times, nodes, lo, hi, d, mu, A, beta, B, win_a, win_b, fit_mu, tol, max_iter, gw, ll_path
):
    """See _engine_numba.em_window_exp."""
    m = hi - lo
    g = np.zeros(d)
    t_prev = win_a
    lo_exp = lo
    for k in range(lo, hi):
        tk = times[k]
        g *= np.exp(-beta * (tk - t_prev))
        while lo_exp < k and times[lo_exp] <= tk - B:
            g[nodes[lo_exp]] -= beta * np.exp(-beta * (tk - times[lo_exp]))
            lo_exp += 1
        gw[k - lo] = g
        g[nodes[k]] += beta
        t_prev = tk
    dj = np.zeros(d)
    np.add.at(dj, nodes[lo:hi], _phi_cum_exp(win_b - times[lo:hi], beta, B))

    span = win_b - win_a
    uu = nodes[lo:hi]
    gv = gw[:m]
    ll_prev = -np.inf
    n_iter = 0
    converged = False
    cnum = np.zeros((d, d))
    bg = np.zeros(d)

    def loglik():
        lam = mu[uu] + np.einsum("kj,kj->k", A[uu], gv)
        return float(np.log(lam).sum()) - mu.sum() * span - float(A.sum(axis=0) @ dj), lam

    for it in range(max_iter):
        ll, lam = loglik()
        ll_path[it] = ll
        n_iter = it + 1
        if ll - ll_prev < tol:
            converged = True
            break
        ll_prev = ll
        inv = 1.0 / lam
        cnum[:] = 0.0
        np.add.at(cnum, uu, gv * inv[:, None])
        with np.errstate(invalid="ignore"):
            A[:] = np.where(dj[None, :] > 0.0, A * cnum / dj[None, :], 0.0)
        if fit_mu != 0:
            bg[:] = 0.0
            np.add.at(bg, uu, mu[uu] * inv)
            mu[:] = np.maximum(bg / span, 1e-12)
    ll, _ = loglik()
    return n_iter, converged, ll


def glr_run_exp(
    times, nodes, mu, A0, beta, w, gamma, b, n_start, n_end,
    tol, max_iter, a_init, traj_S, iters, gw_cap,
):
    """See _engine_numba.glr_run_exp."""
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
    colsum0 = A0.sum(axis=0)
    smu = mu.sum()

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
            g_h *= np.exp(-beta * (tk - t_h))
            lam = mu[uu] + A0[uu] @ g_h
            cum_ll0[k_h + 1] = cum_ll0[k_h] + np.log(lam)
            g_h[uu] += beta
            cnt_h[uu] += 1.0
            t_h = tk
            k_h += 1
        g_h *= np.exp(-beta * (t1 - t_h))
        t_h = t1
        while k_t < n_events and times[k_t] <= t0:
            tk = times[k_t]
            uu = nodes[k_t]
            g_t *= np.exp(-beta * (tk - t_t))
            g_t[uu] += beta
            cnt_t[uu] += 1.0
            t_t = tk
            k_t += 1
        g_t *= np.exp(-beta * (t0 - t_t))
        t_t = t0
        comp0 = smu * w + float(colsum0 @ ((cnt_h - g_h / beta) - (cnt_t - g_t / beta)))
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
            np.maximum(A, 1e-6, out=A)
        stat = ll_hat - ll0
        traj_S[n - n_start] = stat
        if stat >= b:
            return 1, n + 1, stat
    return 0, n_end, stat
