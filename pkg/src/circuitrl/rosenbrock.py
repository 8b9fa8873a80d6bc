"""Adaptive linearly implicit (Rosenbrock-type) integrator for stiff ODEs.

Three-stage L-stable Rosenbrock method of order 3 with an embedded order-2
error estimate (the classic ROS3 coefficient set used in stiff atmospheric
chemistry solvers). The Jacobian and the time derivative of the right-hand
side are approximated by forward differences, which keeps the right-hand-side
signature down to ``rhs(t, y, p, out)`` and is adequate for the moderately
sized systems integrated here.

Stage equations, with G = (1/(h*gamma)) I - J and K_i in state units:

    Y_i = y + sum_{j<i} A_ij K_j
    G K_i = f(t + alpha_i h, Y_i) + sum_{j<i} (C_ij / h) K_j + h gamma_i f_t
    y_new = y + sum_j M_j K_j,   err = sum_j E_j K_j

Right-hand sides write their derivatives into a caller-provided buffer; the
stepper is allocation-free inside the loop, which matters because one
policy-training run performs hundreds of thousands of steady-state solves.

All kernels are numba-compiled and nogil so simulations can run on worker
threads without contention.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Status codes returned by the integrator.
OK = 0
STEP_UNDERFLOW = 1
MAX_STEPS_EXCEEDED = 2
NONFINITE_STATE = 3
NEGATIVE_STATE = 4

# ROS3 coefficients (order 3(2), L-stable).
_GAMMA = 0.43586652150845899941601945119356
_A21 = 1.0
_A31 = 1.0
_A32 = 0.0
_C21 = -0.10156171083877702091975600115545e+01
_C31 = 0.40759956452537699824805835358067e+01
_C32 = 0.92076794298330791242156818474003e+01
_M1 = 0.1e+01
_M2 = 0.61697947043828245592553615689730e+01
_M3 = -0.42772256543218573326238373806514
_E1 = 0.5
_E2 = -0.29079558716805469821718236208017e+01
_E3 = 0.22354069897811569627360909276199
_ALPHA2 = 0.43586652150845899941601945119356
_ALPHA3 = 0.43586652150845899941601945119356
_G1 = 0.43586652150845899941601945119356
_G2 = 0.24291996454816804366592249683314
_G3 = 0.21851380027664058511513169485832e+01
_ELO = 3.0


@njit(cache=True, nogil=True)
def _lu_factor(a, piv):
    """In-place LU factorization with partial pivoting. Returns False if singular."""
    n = a.shape[0]
    for k in range(n):
        p = k
        amax = abs(a[k, k])
        for i in range(k + 1, n):
            if abs(a[i, k]) > amax:
                amax = abs(a[i, k])
                p = i
        piv[k] = p
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
        akk = a[k, k]
        if akk == 0.0:
            return False
        for i in range(k + 1, n):
            a[i, k] /= akk
            lik = a[i, k]
            for j in range(k + 1, n):
                a[i, j] -= lik * a[k, j]
    return True


@njit(cache=True, nogil=True)
def _lu_solve(a, piv, x):
    """Solve A x = b in place (x holds b on entry, the solution on exit).

    The factorization swaps entire rows, so the permutation must be applied
    to the right-hand side in full before the triangular solves.
    """
    n = a.shape[0]
    for k in range(n):
        p = piv[k]
        if p != k:
            tmp = x[k]
            x[k] = x[p]
            x[p] = tmp
    for k in range(n):
        for i in range(k + 1, n):
            x[i] -= a[i, k] * x[k]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            s -= a[i, j] * x[j]
        x[i] = s / a[i, i]


@njit(cache=True, nogil=True)
def newton_refine(rhs, t, y0, p, tol, max_iter, max_rel_move, cons_w, cons_target):
    """Damped Newton polish of an equilibrium: solve rhs(t, y, p) = 0.

    Intended for a starting point already close to a stable fixed point (the
    tail end of a relaxation run). When the system carries a conserved linear
    quantity w.y (which makes the Jacobian singular on the equilibrium
    manifold), pass its weights and target value: the row with the largest
    weight is replaced by the constraint w.y = target. Pass all-zero weights
    for unconstrained systems.

    Returns (y, residual, converged); moves larger than ``max_rel_move``
    relative to the starting state report non-convergence so the caller can
    fall back to plain integration.
    """
    n = y0.size
    y = y0.copy()
    f = np.empty(n)
    ft = np.empty(n)
    ytrial = np.empty(n)
    step = np.empty(n)
    jac = np.empty((n, n))
    piv = np.empty(n, dtype=np.int64)

    row_c = -1
    wmax = 0.0
    for i in range(n):
        if abs(cons_w[i]) > wmax:
            wmax = abs(cons_w[i])
            row_c = i

    fm = np.empty(n)
    cbrt_eps = 6.0554544523933395e-06
    y0max = np.abs(y0).max()
    rhs(t, y, p, f)
    res = np.abs(f).max() / (1.0 + np.abs(y).max())
    for _ in range(max_iter):
        if res <= tol:
            return y, res, True
        # Central differences: the bordered system can be ill-conditioned, so
        # Jacobian noise must sit well below the smallest relevant eigenvalue.
        for j in range(n):
            yj = y[j]
            dy = cbrt_eps * max(abs(yj), 1e-3)
            y[j] = yj + dy
            rhs(t, y, p, ft)
            y[j] = yj - dy
            rhs(t, y, p, fm)
            y[j] = yj
            inv = 0.5 / dy
            for i in range(n):
                jac[i, j] = (ft[i] - fm[i]) * inv
        for i in range(n):
            step[i] = -f[i]
        if row_c >= 0:
            cons_val = 0.0
            for j in range(n):
                jac[row_c, j] = cons_w[j]
                cons_val += cons_w[j] * y[j]
            step[row_c] = -(cons_val - cons_target)
        if not _lu_factor(jac, piv):
            return y, res, False
        _lu_solve(jac, piv, step)

        lam = 1.0
        improved = False
        for _ in range(8):
            ok = True
            for i in range(n):
                ytrial[i] = y[i] + lam * step[i]
                if ytrial[i] < 0.0:
                    # Equilibria live in the nonnegative orthant; tiny
                    # undershoots are clamped, real ones damp the step.
                    if ytrial[i] > -1e-9 * (1.0 + y0max):
                        ytrial[i] = 0.0
                    else:
                        ok = False
                        break
                if not np.isfinite(ytrial[i]):
                    ok = False
                    break
            if ok:
                rhs(t, ytrial, p, ft)
                res_trial = np.abs(ft).max() / (1.0 + np.abs(ytrial).max())
                if res_trial < res:
                    for i in range(n):
                        y[i] = ytrial[i]
                        f[i] = ft[i]
                    res = res_trial
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            return y, res, False
        move = np.abs(y - y0).max()
        if move > max_rel_move * (1.0 + y0max):
            return y, res, False
    return y, res, res <= tol


@njit(cache=True, nogil=True)
def ptc_refine(rhs, t, y0, p, tol, max_iter, delta0):
    """Pseudo-transient continuation to an equilibrium of y' = rhs.

    Implicit-Euler steps (I/delta - J) dy = f with a growing pseudo-timestep:
    small delta follows the physical relaxation robustly, large delta becomes
    Newton. The 1/delta shift keeps the linear solves well conditioned even
    when the Jacobian is nearly singular (very slow modes), which is exactly
    the regime where plain Newton fails. States are kept nonnegative.

    Returns (y, residual, converged) with residual = max|f| / (1 + max|y|).
    """
    n = y0.size
    y = y0.copy()
    f = np.empty(n)
    ft = np.empty(n)
    fm = np.empty(n)
    ytrial = np.empty(n)
    step = np.empty(n)
    jac = np.empty((n, n))
    a = np.empty((n, n))
    piv = np.empty(n, dtype=np.int64)
    cbrt_eps = 6.0554544523933395e-06

    rhs(t, y, p, f)
    res = np.abs(f).max() / (1.0 + np.abs(y).max())
    res0 = res
    best_res = res
    since_best = 0
    delta = delta0
    stale_jac = True
    for _ in range(max_iter):
        if res <= tol:
            return y, res, True
        if stale_jac:
            for j in range(n):
                yj = y[j]
                dy = cbrt_eps * max(abs(yj), 1e-3)
                y[j] = yj + dy
                rhs(t, y, p, ft)
                y[j] = yj - dy
                rhs(t, y, p, fm)
                y[j] = yj
                inv = 0.5 / dy
                for i in range(n):
                    jac[i, j] = (ft[i] - fm[i]) * inv
            stale_jac = False

        inv_delta = 1.0 / delta
        for i in range(n):
            for j in range(n):
                a[i, j] = -jac[i, j]
            a[i, i] += inv_delta
        if not _lu_factor(a, piv):
            delta *= 0.125
            if delta < 1e-12:
                return y, res, False
            continue
        for i in range(n):
            step[i] = f[i]
        _lu_solve(a, piv, step)

        # Accept any finite, positivity-respecting step (pseudo-time marching
        # is not residual-monotone); adapt delta by switched evolution
        # relaxation with a growth floor so slow manifolds cannot stall it.
        ok = True
        scale = 1.0 + np.abs(y).max()
        floor = -1e-6 * scale
        for i in range(n):
            ytrial[i] = y[i] + step[i]
            if not np.isfinite(ytrial[i]):
                ok = False
                break
            if ytrial[i] < 0.0:
                if ytrial[i] > floor:
                    ytrial[i] = 0.0
                else:
                    ok = False
                    break
        if ok:
            rhs(t, ytrial, p, ft)
            res_trial = np.abs(ft).max() / (1.0 + np.abs(ytrial).max())
            ok = np.isfinite(res_trial) and res_trial < 1e3 * res0
        if ok:
            for i in range(n):
                y[i] = ytrial[i]
                f[i] = ft[i]
            ratio = res / res_trial if res_trial > 0.0 else 10.0
            res = res_trial
            grow = ratio if ratio > 1.5 else 1.5
            if grow > 10.0:
                grow = 10.0
            delta = min(delta * grow, 1e14)
            stale_jac = True
            if res < best_res:
                best_res = res
                since_best = 0
            else:
                since_best += 1
                if since_best > 60:
                    return y, res, res <= tol
        else:
            delta *= 0.125
            if delta < 1e-12:
                return y, res, False
    return y, res, res <= tol


@njit(cache=True, nogil=True)
def integrate(rhs, t0, y0, t_end, p, rtol, atol, h0, max_steps,
              clamp_negative, steady_tol, clamp_tol=1e-9):
    """Advance y' = rhs(t, y, p) from t0 to t_end with adaptive steps.

    When ``steady_tol > 0`` the integration stops early once the scaled
    derivative norm max|f| / (1 + max|y|) drops below it.

    Returns (y, t, status, residual, steady, n_steps).
    """
    n = y0.size
    y = y0.copy()
    t = t0

    f0 = np.empty(n)
    fs = np.empty(n)
    ft = np.empty(n)
    tdot = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    ystage = np.empty(n)
    ynew = np.empty(n)
    jac = np.empty((n, n))
    g = np.empty((n, n))
    piv = np.empty(n, dtype=np.int64)
    sqrt_eps = 1.4901161193847656e-08

    rhs(t, y, p, f0)
    span = t_end - t0

    h = h0 if h0 > 0.0 else 1e-6 * max(span, 1.0)
    h = min(h, span)
    hmin = 1e-14 * max(abs(t_end), 1.0)

    steady = False
    residual = np.inf
    steps = 0
    t_eps = 1e-12 * max(1.0, abs(t_end))
    while t_end - t > t_eps:
        if steps >= max_steps:
            return y, t, MAX_STEPS_EXCEEDED, residual, steady, steps
        if h < hmin:
            return y, t, STEP_UNDERFLOW, residual, steady, steps
        if t + h > t_end:
            h = t_end - t

        # Forward-difference Jacobian at (t, y).
        for j in range(n):
            yj = y[j]
            dy = sqrt_eps * max(abs(yj), 1e-5)
            y[j] = yj + dy
            rhs(t, y, p, ft)
            y[j] = yj
            inv = 1.0 / dy
            for i in range(n):
                jac[i, j] = (ft[i] - f0[i]) * inv

        # Time derivative of the RHS (zero for autonomous systems).
        dt_fd = sqrt_eps * max(abs(t), abs(h))
        if dt_fd > 0.0:
            rhs(t + dt_fd, y, p, ft)
            for i in range(n):
                tdot[i] = (ft[i] - f0[i]) / dt_fd
        else:
            for i in range(n):
                tdot[i] = 0.0

        # G = (1/(h*gamma)) I - J
        ghi = 1.0 / (h * _GAMMA)
        for i in range(n):
            for j in range(n):
                g[i, j] = -jac[i, j]
            g[i, i] += ghi
        if not _lu_factor(g, piv):
            h *= 0.5
            steps += 1
            continue

        # Stage 1
        hg1 = h * _G1
        for i in range(n):
            k1[i] = f0[i] + hg1 * tdot[i]
        _lu_solve(g, piv, k1)

        # Stage 2
        for i in range(n):
            ystage[i] = y[i] + _A21 * k1[i]
        rhs(t + _ALPHA2 * h, ystage, p, fs)
        c21h = _C21 / h
        hg2 = h * _G2
        for i in range(n):
            k2[i] = fs[i] + c21h * k1[i] + hg2 * tdot[i]
        _lu_solve(g, piv, k2)

        # Stage 3 (reuses the stage-2 function value).
        c31h = _C31 / h
        c32h = _C32 / h
        hg3 = h * _G3
        for i in range(n):
            k3[i] = fs[i] + c31h * k1[i] + c32h * k2[i] + hg3 * tdot[i]
        _lu_solve(g, piv, k3)

        # Solution, embedded error, and weighted RMS norm.
        err = 0.0
        ok = True
        for i in range(n):
            ynew[i] = y[i] + _M1 * k1[i] + _M2 * k2[i] + _M3 * k3[i]
            if not np.isfinite(ynew[i]):
                ok = False
                break
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e = (_E1 * k1[i] + _E2 * k2[i] + _E3 * k3[i]) / sc
            err += e * e
        steps += 1
        if not ok:
            h *= 0.25
            continue
        err = np.sqrt(err / n)

        if err <= 1.0:
            t = t + h
            if clamp_negative:
                ymax_prev = 0.0
                for i in range(n):
                    if abs(y[i]) > ymax_prev:
                        ymax_prev = abs(y[i])
                floor = -clamp_tol * (1.0 + ymax_prev)
                for i in range(n):
                    if ynew[i] < 0.0:
                        if ynew[i] < floor:
                            return ynew, t, NEGATIVE_STATE, residual, steady, steps
                        ynew[i] = 0.0
            for i in range(n):
                y[i] = ynew[i]
            rhs(t, y, p, f0)
            fmax = 0.0
            ymax = 0.0
            for i in range(n):
                if abs(f0[i]) > fmax:
                    fmax = abs(f0[i])
                if abs(y[i]) > ymax:
                    ymax = abs(y[i])
            residual = fmax / (1.0 + ymax)
            if steady_tol > 0.0 and residual <= steady_tol:
                steady = True
                return y, t, OK, residual, steady, steps
            fac = 0.9 * err ** (-1.0 / _ELO) if err > 0.0 else 5.0
            if fac > 5.0:
                fac = 5.0
            h *= fac
        else:
            fac = 0.9 * err ** (-1.0 / _ELO)
            if fac < 0.2:
                fac = 0.2
            if fac > 1.0:
                fac = 1.0
            h *= fac

    return y, t, OK, residual, steady, steps
