"""Hot inner loops: closed-loop rollouts and the reverse pass through them.

Two interchangeable implementations live here.  The loop-style kernels are
compiled with numba when the ``numba`` backend is active (see ``backend``);
the ``*_numpy`` variants are vectorized per time step and serve as the
fallback path.  Public names dispatch on the active backend.  The test suite
checks the two paths agree; ``benchmarks/bench_backends.py`` times them.

All kernels work on plain float64/int64 arrays:

    src, dst        (m,)   edge endpoints (0-based)
    Minv, D         (n,)   per-bus 1/M and damping
    B               (m,)   per-edge stiffness
    gl, gp          (n,), (m,) controller gains
    beta, slopes    (n, d), (n, d+1) realized control law
    cost_c          (n,)   quartic cost curvature coefficients

State rows are ordered (theta, omega, s, lam, phi).  Rollout outputs are
written into preallocated (K+1, .) arrays whose row 0 holds the initial
condition; the return value is -1 on success or the step index at which the
state left the finite/bounded region.
"""

import numpy as np

from .backend import ACTIVE, njit

P_KNOWN = 0
P_ESTIMATED = 1  # backward-difference estimate fed to the dual update


@njit
def _f_eval(beta, slopes, s, u, fp):
    """Evaluate f and its right-continuous derivative for every bus."""
    n, d = beta.shape
    for i in range(n):
        x = s[i]
        val = slopes[i, 0] * x
        sl = slopes[i, 0]
        for k in range(d):
            b = beta[i, k]
            delta = slopes[i, k + 1] - slopes[i, k]
            if x > b:
                val += delta * (x - b)
            if b < 0.0:
                val -= delta * (-b)
            if x >= b:
                sl += delta
        u[i] = val
        fp[i] = sl


@njit
def _rhs(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c, p,
         th, om, sv, la, ph, dth, dom, dsv, dla, dph, fval, fp):
    """Continuous-time right-hand side of the closed loop (known p)."""
    n = om.shape[0]
    m = th.shape[0]
    _f_eval(beta, slopes, sv, fval, fp)
    for i in range(n):
        dom[i] = 0.0
        dla[i] = 0.0
    for e in range(m):
        i, j = src[e], dst[e]
        w = B[e] * th[e]
        dom[i] -= w
        dom[j] += w
        v = B[e] * ph[e]
        dla[i] -= v
        dla[j] += v
        dth[e] = om[i] - om[j]
        dph[e] = gp[e] * B[e] * (la[i] - la[j])
    for i in range(n):
        dom[i] = Minv[i] * (fval[i] - p[i] - D[i] * om[i] + dom[i])
        dla[i] = gl[i] * (fval[i] - p[i] + dla[i])
        dsv[i] = -(cost_c[i] * fval[i] ** 3 + om[i] + la[i])


@njit
def _check_row(theta, omega, s, lam, phi, t, blow):
    for e in range(theta.shape[1]):
        a = abs(theta[t, e])
        b = abs(phi[t, e])
        if a > blow or a != a or b > blow or b != b:
            return True
    for i in range(omega.shape[1]):
        a = abs(omega[t, i])
        b = abs(s[t, i])
        c = abs(lam[t, i])
        if a > blow or a != a or b > blow or b != b or c > blow or c != c:
            return True
    return False


@njit
def euler_rollout_loops(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c,
                        p, h, K, p_mode, blow, theta, omega, s, lam, phi, u):
    n = omega.shape[1]
    m = theta.shape[1]
    fval = np.empty(n)
    fp = np.empty(n)
    flow = np.empty(n)
    vflow = np.empty(n)
    p_eff = np.empty(n)
    for t in range(K):
        _f_eval(beta, slopes, s[t], fval, fp)
        for i in range(n):
            u[t, i] = fval[i]
            flow[i] = 0.0
            vflow[i] = 0.0
        for e in range(m):
            i, j = src[e], dst[e]
            w = B[e] * theta[t, e]
            flow[i] += w
            flow[j] -= w
            v = B[e] * phi[t, e]
            vflow[i] += v
            vflow[j] -= v
        if p_mode == P_ESTIMATED:
            for i in range(n):
                om_dot = (omega[t, i] - omega[t - 1, i]) / h if t > 0 else 0.0
                p_eff[i] = -om_dot / Minv[i] + fval[i] - D[i] * omega[t, i] - flow[i]
        else:
            for i in range(n):
                p_eff[i] = p[i]
        for e in range(m):
            i, j = src[e], dst[e]
            theta[t + 1, e] = theta[t, e] + h * (omega[t, i] - omega[t, j])
            phi[t + 1, e] = phi[t, e] + h * gp[e] * B[e] * (lam[t, i] - lam[t, j])
        for i in range(n):
            omega[t + 1, i] = omega[t, i] + h * Minv[i] * (
                fval[i] - p[i] - D[i] * omega[t, i] - flow[i]
            )
            s[t + 1, i] = s[t, i] - h * (
                cost_c[i] * fval[i] ** 3 + omega[t, i] + lam[t, i]
            )
            lam[t + 1, i] = lam[t, i] + h * gl[i] * (fval[i] - p_eff[i] - vflow[i])
        if _check_row(theta, omega, s, lam, phi, t + 1, blow):
            return t + 1
    _f_eval(beta, slopes, s[K], fval, fp)
    for i in range(n):
        u[K, i] = fval[i]
    return -1


@njit
def rk4_rollout_loops(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c,
                      p, h, K, blow, theta, omega, s, lam, phi, u):
    n = omega.shape[1]
    m = theta.shape[1]
    fval = np.empty(n)
    fp = np.empty(n)
    th = np.empty(m)
    om = np.empty(n)
    sv = np.empty(n)
    la = np.empty(n)
    ph = np.empty(m)
    acc_th = np.empty(m)
    acc_om = np.empty(n)
    acc_s = np.empty(n)
    acc_la = np.empty(n)
    acc_ph = np.empty(m)
    k_th = np.empty(m)
    k_om = np.empty(n)
    k_s = np.empty(n)
    k_la = np.empty(n)
    k_ph = np.empty(m)
    for t in range(K):
        _f_eval(beta, slopes, s[t], fval, fp)
        for i in range(n):
            u[t, i] = fval[i]
        for e in range(m):
            th[e] = theta[t, e]
            ph[e] = phi[t, e]
            acc_th[e] = 0.0
            acc_ph[e] = 0.0
        for i in range(n):
            om[i] = omega[t, i]
            sv[i] = s[t, i]
            la[i] = lam[t, i]
            acc_om[i] = 0.0
            acc_s[i] = 0.0
            acc_la[i] = 0.0
        for stage in range(4):
            _rhs(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c, p,
                 th, om, sv, la, ph, k_th, k_om, k_s, k_la, k_ph, fval, fp)
            w = 2.0 if (stage == 1 or stage == 2) else 1.0
            for e in range(m):
                acc_th[e] += w * k_th[e]
                acc_ph[e] += w * k_ph[e]
            for i in range(n):
                acc_om[i] += w * k_om[i]
                acc_s[i] += w * k_s[i]
                acc_la[i] += w * k_la[i]
            if stage < 3:
                step = h if stage == 2 else 0.5 * h
                for e in range(m):
                    th[e] = theta[t, e] + step * k_th[e]
                    ph[e] = phi[t, e] + step * k_ph[e]
                for i in range(n):
                    om[i] = omega[t, i] + step * k_om[i]
                    sv[i] = s[t, i] + step * k_s[i]
                    la[i] = lam[t, i] + step * k_la[i]
        for e in range(m):
            theta[t + 1, e] = theta[t, e] + (h / 6.0) * acc_th[e]
            phi[t + 1, e] = phi[t, e] + (h / 6.0) * acc_ph[e]
        for i in range(n):
            omega[t + 1, i] = omega[t, i] + (h / 6.0) * acc_om[i]
            s[t + 1, i] = s[t, i] + (h / 6.0) * acc_s[i]
            lam[t + 1, i] = lam[t, i] + (h / 6.0) * acc_la[i]
        if _check_row(theta, omega, s, lam, phi, t + 1, blow):
            return t + 1
    _f_eval(beta, slopes, s[K], fval, fp)
    for i in range(n):
        u[K, i] = fval[i]
    return -1


@njit
def bptt_backward_loops(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c,
                        h, alpha, rho_r, rho_n, rho_c,
                        s_tape, omega_tape, gbeta, gslopes):
    """Exact reverse pass of the transient loss through the Euler rollout.

    Accumulates the gradient in the realized slopes and breakpoints; mapping
    back to raw parameters happens outside.
    """
    K = s_tape.shape[0] - 1
    n = s_tape.shape[1]
    m = src.shape[0]
    d = beta.shape[1]
    T = K * h

    tau_star = np.zeros(n, dtype=np.int64)
    sgn = np.zeros(n)
    for i in range(n):
        best = -1.0
        for t in range(K + 1):
            a = abs(omega_tape[t, i])
            if a > best:
                best = a
                tau_star[i] = t
        w = omega_tape[tau_star[i], i]
        sgn[i] = 1.0 if w > 0 else (-1.0 if w < 0 else 0.0)

    a_th = np.zeros(m)
    a_om = np.zeros(n)
    a_s = np.zeros(n)
    a_la = np.zeros(n)
    a_ph = np.zeros(m)
    n_th = np.empty(m)
    n_om = np.empty(n)
    n_s = np.empty(n)
    n_la = np.empty(n)
    n_ph = np.empty(m)
    fval = np.empty(n)
    fp = np.empty(n)
    r = np.empty(max(d, 1))

    for i in range(n):
        if tau_star[i] == K:
            a_om[i] = rho_n * sgn[i]

    for t in range(K - 1, -1, -1):
        sv = s_tape[t]
        _f_eval(beta, slopes, sv, fval, fp)
        ew = np.exp(alpha * t * h)
        # gradient in the realized law, then the adjoint recursion
        for i in range(n):
            grad = cost_c[i] * fval[i] ** 3
            hess = 3.0 * cost_c[i] * fval[i] ** 2
            coef = h * (Minv[i] * a_om[i] + gl[i] * a_la[i] - hess * a_s[i])
            coef += rho_c * (h / T) * grad
            x = sv[i]
            if d == 0:
                gslopes[i, 0] += coef * x
            else:
                for k in range(d):
                    b = beta[i, k]
                    rk = (x - b) if x > b else 0.0
                    if b < 0.0:
                        rk -= -b
                    r[k] = rk
                gslopes[i, 0] += coef * (x - r[0])
                for k in range(1, d):
                    gslopes[i, k] += coef * (r[k - 1] - r[k])
                gslopes[i, d] += coef * r[d - 1]
                for k in range(d):
                    b = beta[i, k]
                    delta = slopes[i, k + 1] - slopes[i, k]
                    ind = (1.0 if b <= 0.0 else 0.0) - (1.0 if x >= b else 0.0)
                    gbeta[i, k] += coef * delta * ind
        for e in range(m):
            i, j = src[e], dst[e]
            n_th[e] = a_th[e] - h * B[e] * (Minv[i] * a_om[i] - Minv[j] * a_om[j])
            n_ph[e] = a_ph[e] - h * B[e] * (gl[i] * a_la[i] - gl[j] * a_la[j])
        for i in range(n):
            grad = cost_c[i] * fval[i] ** 3
            hess = 3.0 * cost_c[i] * fval[i] ** 2
            g_om = 2.0 * rho_r * ew * h * omega_tape[t, i]
            if tau_star[i] == t:
                g_om += rho_n * sgn[i]
            n_om[i] = a_om[i] * (1.0 - h * D[i] * Minv[i]) - h * a_s[i] + g_om
            n_s[i] = (
                a_s[i] * (1.0 - h * hess * fp[i])
                + fp[i] * h * (Minv[i] * a_om[i] + gl[i] * a_la[i])
                + rho_c * (h / T) * grad * fp[i]
            )
            n_la[i] = a_la[i] - h * a_s[i]
        for e in range(m):
            i, j = src[e], dst[e]
            n_om[i] += h * a_th[e]
            n_om[j] -= h * a_th[e]
            w = h * B[e] * gp[e] * a_ph[e]
            n_la[i] += w
            n_la[j] -= w
        for e in range(m):
            a_th[e] = n_th[e]
            a_ph[e] = n_ph[e]
        for i in range(n):
            a_om[i] = n_om[i]
            a_s[i] = n_s[i]
            a_la[i] = n_la[i]


# ---------------------------------------------------------------------------
# Vectorized numpy fallback


def _f_eval_numpy(beta, slopes, x):
    out = slopes[:, 0] * x
    d = beta.shape[1]
    if d:
        delta = np.diff(slopes, axis=1)
        out = out + (
            delta * (np.maximum(x[:, None] - beta, 0.0) - np.maximum(-beta, 0.0))
        ).sum(axis=1)
        idx = (x[:, None] >= beta).sum(axis=1)
        fp = np.take_along_axis(slopes, idx[:, None], axis=1)[:, 0]
    else:
        fp = slopes[:, 0].copy()
    return out, fp


def _scatter_flow(src, dst, n, per_edge):
    flow = np.zeros(n)
    np.add.at(flow, src, per_edge)
    np.subtract.at(flow, dst, per_edge)
    return flow


def _bad(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            return True
    return False


def euler_rollout_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c,
                        p, h, K, p_mode, blow, theta, omega, s, lam, phi, u):
    n = omega.shape[1]
    for t in range(K):
        fval, _ = _f_eval_numpy(beta, slopes, s[t])
        u[t] = fval
        flow = _scatter_flow(src, dst, n, B * theta[t])
        vflow = _scatter_flow(src, dst, n, B * phi[t])
        if p_mode == P_ESTIMATED:
            om_dot = (omega[t] - omega[t - 1]) / h if t > 0 else np.zeros(n)
            p_eff = -om_dot / Minv + fval - D * omega[t] - flow
        else:
            p_eff = p
        theta[t + 1] = theta[t] + h * (omega[t, src] - omega[t, dst])
        phi[t + 1] = phi[t] + h * gp * B * (lam[t, src] - lam[t, dst])
        omega[t + 1] = omega[t] + h * Minv * (fval - p - D * omega[t] - flow)
        s[t + 1] = s[t] - h * (cost_c * fval**3 + omega[t] + lam[t])
        lam[t + 1] = lam[t] + h * gl * (fval - p_eff - vflow)
        rows = (theta[t + 1], omega[t + 1], s[t + 1], lam[t + 1], phi[t + 1])
        if _bad(*rows) or max(np.abs(r).max() for r in rows if r.size) > blow:
            return t + 1
    u[K], _ = _f_eval_numpy(beta, slopes, s[K])
    return -1


def _rhs_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c, p, state):
    th, om, sv, la, ph = state
    n = om.shape[0]
    fval, _ = _f_eval_numpy(beta, slopes, sv)
    flow = _scatter_flow(src, dst, n, B * th)
    vflow = _scatter_flow(src, dst, n, B * ph)
    return (
        om[src] - om[dst],
        Minv * (fval - p - D * om - flow),
        -(cost_c * fval**3 + om + la),
        gl * (fval - p - vflow),
        gp * B * (la[src] - la[dst]),
    )


def rk4_rollout_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c,
                      p, h, K, blow, theta, omega, s, lam, phi, u):
    for t in range(K):
        u[t], _ = _f_eval_numpy(beta, slopes, s[t])
        y0 = (theta[t], omega[t], s[t], lam[t], phi[t])
        k1 = _rhs_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c, p, y0)
        y1 = tuple(a + 0.5 * h * k for a, k in zip(y0, k1))
        k2 = _rhs_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c, p, y1)
        y2 = tuple(a + 0.5 * h * k for a, k in zip(y0, k2))
        k3 = _rhs_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c, p, y2)
        y3 = tuple(a + h * k for a, k in zip(y0, k3))
        k4 = _rhs_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c, p, y3)
        new = tuple(
            a + (h / 6.0) * (w1 + 2 * w2 + 2 * w3 + w4)
            for a, w1, w2, w3, w4 in zip(y0, k1, k2, k3, k4)
        )
        theta[t + 1], omega[t + 1], s[t + 1], lam[t + 1], phi[t + 1] = new
        if _bad(*new) or max(np.abs(r).max() for r in new if r.size) > blow:
            return t + 1
    u[K], _ = _f_eval_numpy(beta, slopes, s[K])
    return -1


def bptt_backward_numpy(src, dst, Minv, D, B, gl, gp, beta, slopes, cost_c,
                        h, alpha, rho_r, rho_n, rho_c,
                        s_tape, omega_tape, gbeta, gslopes):
    K = s_tape.shape[0] - 1
    n = s_tape.shape[1]
    d = beta.shape[1]
    T = K * h

    tau_star = np.argmax(np.abs(omega_tape), axis=0)
    sgn = np.sign(omega_tape[tau_star, np.arange(n)])

    a_th = np.zeros(src.shape[0])
    a_om = np.where(tau_star == K, rho_n * sgn, 0.0)
    a_s = np.zeros(n)
    a_la = np.zeros(n)
    a_ph = np.zeros(src.shape[0])

    for t in range(K - 1, -1, -1):
        sv = s_tape[t]
        fval, fp = _f_eval_numpy(beta, slopes, sv)
        grad = cost_c * fval**3
        hess = 3.0 * cost_c * fval**2
        coef = h * (Minv * a_om + gl * a_la - hess * a_s) + rho_c * (h / T) * grad
        if d:
            rr = np.maximum(sv[:, None] - beta, 0.0) - np.maximum(-beta, 0.0)
            gslopes[:, 0] += coef * (sv - rr[:, 0])
            if d > 1:
                gslopes[:, 1:-1] += coef[:, None] * (rr[:, :-1] - rr[:, 1:])
            gslopes[:, -1] += coef * rr[:, -1]
            delta = np.diff(slopes, axis=1)
            ind = (beta <= 0.0).astype(float) - (sv[:, None] >= beta).astype(float)
            gbeta += coef[:, None] * delta * ind
        else:
            gslopes[:, 0] += coef * sv

        g_om = 2.0 * rho_r * np.exp(alpha * t * h) * h * omega_tape[t]
        g_om = g_om + np.where(tau_star == t, rho_n * sgn, 0.0)

        n_th = a_th - h * B * (Minv[src] * a_om[src] - Minv[dst] * a_om[dst])
        n_ph = a_ph - h * B * (gl[src] * a_la[src] - gl[dst] * a_la[dst])
        n_om = a_om * (1.0 - h * D * Minv) - h * a_s + g_om
        n_om += _scatter_flow(src, dst, n, h * a_th)
        n_s = (
            a_s * (1.0 - h * hess * fp)
            + fp * h * (Minv * a_om + gl * a_la)
            + rho_c * (h / T) * grad * fp
        )
        n_la = a_la - h * a_s + _scatter_flow(src, dst, n, h * B * gp * a_ph)
        a_th, a_om, a_s, a_la, a_ph = n_th, n_om, n_s, n_la, n_ph


# ---------------------------------------------------------------------------
# Backend dispatch

if ACTIVE == "numba":
    euler_rollout = euler_rollout_loops
    rk4_rollout = rk4_rollout_loops
    bptt_backward = bptt_backward_loops
else:
    euler_rollout = euler_rollout_numpy
    rk4_rollout = rk4_rollout_numpy
    bptt_backward = bptt_backward_numpy
