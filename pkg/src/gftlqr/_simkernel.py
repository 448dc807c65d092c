"""Compiled closed-loop simulation.

One job = one controller on one plant from one initial state to one target.
Jobs are independent and write only to their own output slots, so the
parallel loop gives identical numbers for any thread count.
"""

import numba
import numpy as np

from gftlqr.dyn2r import _rk4
from gftlqr.gft import _gft_torque
from gftlqr.riccati import _feedback

MODE_STATIC = 0
MODE_GFT = 1

STATUS_SETTLED = 0
STATUS_TIMEOUT = 1
STATUS_FAILED = 2


@numba.njit(cache=True)
def _within(x, xt, tol):
    for i in range(4):
        if abs(x[i] - xt[i]) > tol:
            return False
    return True


@numba.njit(cache=True)
def simulate(mode, K, p_model, model_variant, n_bid, n_q, bid_cons, q_cons, q_bounds,
             e_max, edot_max, r_value, p_plant, plant_variant, tau_max, saturate,
             x0, xt, dt, n_max, tol, record, traj_x, traj_tau, out):
    """Run one job.

    out <- [status, n_steps, iac1, iac2, var1, var2].  With ``record`` set,
    traj_x[k] is the state at t = k dt and traj_tau[k] the torque held over
    [t_k, t_k+1); rows past n_steps are left untouched.
    """
    x = x0.copy()
    xn = np.empty(4)
    A = np.empty((4, 4))
    B = np.empty((4, 2))
    Kt = np.empty((2, 4))
    iac1 = 0.0
    iac2 = 0.0
    s1 = 0.0
    s2 = 0.0
    ss1 = 0.0
    ss2 = 0.0
    status = STATUS_TIMEOUT
    n = 0
    if record:
        traj_x[0, :] = x
    if _within(x, xt, tol):
        status = STATUS_SETTLED
    else:
        for k in range(n_max):
            if mode == MODE_STATIC:
                tau = _feedback(K, x, xt, tau_max, saturate)
            else:
                tau, ok = _gft_torque(p_model, model_variant, n_bid, n_q, bid_cons, q_cons, q_bounds,
                                      e_max, edot_max, r_value, x, xt, tau_max, saturate, A, B, Kt)
                if not ok:
                    status = STATUS_FAILED
                    break
            t1 = tau[0]
            t2 = tau[1]
            iac1 += abs(t1) * dt
            iac2 += abs(t2) * dt
            s1 += t1
            s2 += t2
            ss1 += t1 * t1
            ss2 += t2 * t2
            _rk4(p_plant, x, t1, t2, dt, plant_variant, xn)
            x[:] = xn
            n = k + 1
            if record:
                traj_tau[k, 0] = t1
                traj_tau[k, 1] = t2
                traj_x[n, :] = x
            finite = True
            for i in range(4):
                if not np.isfinite(x[i]):
                    finite = False
            if not finite:
                status = STATUS_FAILED
                break
            if _within(x, xt, tol):
                status = STATUS_SETTLED
                break
    var1 = 0.0
    var2 = 0.0
    if n > 0:
        m1 = s1 / n
        m2 = s2 / n
        var1 = max(ss1 / n - m1 * m1, 0.0)
        var2 = max(ss2 / n - m2 * m2, 0.0)
    out[0] = status
    out[1] = n
    out[2] = iac1
    out[3] = iac2
    out[4] = var1
    out[5] = var2


@numba.njit(parallel=True, cache=True)
def run_jobs(modes, ctrl_idx, case_idx, plant_idx,
             Ks, p_model, model_variant, n_bid, n_q, bid_cons, q_cons, q_bounds,
             e_max, edot_max, r_value, plants, plant_variant, tau_max, saturate,
             x0s, xts, dt, n_max, tol):
    """Batch of unrecorded jobs; returns an (n_jobs, 6) array of summaries.

    Static jobs index Ks with ctrl_idx; fuzzy jobs index bid_cons / q_cons /
    q_bounds with it.
    """
    n_jobs = modes.shape[0]
    out = np.empty((n_jobs, 6))
    dummy_x = np.empty((1, 4))
    dummy_tau = np.empty((1, 2))
    for j in numba.prange(n_jobs):
        c = ctrl_idx[j]
        if modes[j] == MODE_STATIC:
            K = Ks[c]
            bc = bid_cons[0]
            qc = q_cons[0]
            qb = q_bounds[0]
        else:
            K = Ks[0]
            bc = bid_cons[c]
            qc = q_cons[c]
            qb = q_bounds[c]
        simulate(modes[j], K, p_model, model_variant, n_bid, n_q, bc, qc, qb,
                 e_max, edot_max, r_value, plants[plant_idx[j]], plant_variant, tau_max, saturate,
                 x0s[case_idx[j]], xts[case_idx[j]], dt, n_max, tol,
                 False, dummy_x, dummy_tau, out[j])
    return out
