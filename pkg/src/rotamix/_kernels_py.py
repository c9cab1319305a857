"""Pure numpy implementations of the hot kernels.

Every function here mirrors one in ``_kernels.pyx`` with the same signature
and semantics; ``rotamix._backend`` picks one of the two at import time.
"""

import math

import numpy as np

_OVERFLOW_GUARD = 700.0


def _log_gen_sum(a, m):
    """log(sum_l exp(a_l) - (m - 1)) along the last axis, for a >= 0."""
    big = np.max(a, axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        direct = np.log1p(np.sum(np.expm1(np.minimum(a, _OVERFLOW_GUARD)), axis=-1))
        finite_big = np.where(np.isfinite(big), big, 0.0)
        shifted = finite_big + np.log(
            np.sum(np.exp(a - finite_big[..., None]), axis=-1)
            - (m - 1) * np.exp(-finite_big)
        )
    out = np.where(big < _OVERFLOW_GUARD, direct, shifted)
    return np.where(np.isinf(big), np.inf, out)


def rotated_logpdf(u, comp, theta, eps, indep_tol):
    u = np.asarray(u, dtype=np.float64)
    n, m = u.shape
    comp = np.asarray(comp, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.float64)
    bits = (comp[:, None] >> np.arange(m)) & 1
    x = np.where(bits == 1, 1.0 - u, u)
    x = np.clip(x, eps, 1.0 - eps)
    lx = np.log(x)
    indep = theta < indep_tol
    th = np.where(indep, 1.0, theta)
    # overflow only for absurd theta; callers check finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        a = -th[:, None] * lx
        gen = _log_gen_sum(a, m)
        const = np.zeros(n)
        for k in range(1, m):
            const += np.log1p(k * th)
        out = (-1.0 / th - m) * gen + const - (th + 1.0) * lx.sum(axis=1)
    return np.where(indep, 0.0, out)


def _log_h00(u, v, theta):
    # log dC(u, v)/du for the unrotated bivariate Clayton
    with np.errstate(divide="ignore"):
        lu = np.log(u)
        lv = np.log(v)
    a = np.stack([-theta * lu, -theta * lv], axis=-1)
    gen = _log_gen_sum(a, 2)
    return -(theta + 1.0) * lu + (-1.0 / theta - 1.0) * gen


def hfunc(u_given, v, comp, theta, eps, indep_tol):
    u_given = np.clip(np.asarray(u_given, dtype=np.float64), eps, 1.0 - eps)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    comp = np.asarray(comp, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.float64)
    u_given, v, comp, theta = np.broadcast_arrays(u_given, v, comp, theta)
    flip_given = (comp & 1) == 1
    flip_target = (comp & 2) == 2
    uu = np.where(flip_given, 1.0 - u_given, u_given)
    vv = np.where(flip_target, 1.0 - v, v)
    indep = theta < indep_tol
    th = np.where(indep, 1.0, theta)
    h = np.exp(_log_h00(uu, vv, th))
    h = np.where(indep, vv, h)
    return np.where(flip_target, 1.0 - h, h)


def cond_mean(u_given, comp, theta, n_grid, eps, indep_tol):
    u_given = np.asarray(u_given, dtype=np.float64)
    comp = np.asarray(comp, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.float64)
    grid = (np.arange(n_grid) + 0.5) / n_grid
    out = np.empty(u_given.shape[0])
    chunk = max(1, 200_000 // n_grid)
    for start in range(0, u_given.shape[0], chunk):
        sl = slice(start, start + chunk)
        h = hfunc(
            u_given[sl, None],
            grid[None, :],
            comp[sl, None],
            theta[sl, None],
            eps,
            indep_tol,
        )
        out[sl] = np.mean(1.0 - h, axis=1)
    return out


def eta_sweep(eta, sums, log_w, alpha, inv_ptr, inv_idx, uniforms):
    """One systematic sweep over eta[t, j] for j < K - 1, in place."""
    n_times, n_comp = eta.shape
    last = n_comp - 1
    lgamma = math.lgamma
    for t in range(n_times):
        rho = inv_idx[inv_ptr[t]:inv_ptr[t + 1]]
        for j in range(last):
            total = int(eta[t, j] + eta[t, last])
            if total == 0:
                continue
            cur_j = int(eta[t, j])
            cur_last = int(eta[t, last])
            base_j = [alpha[j] + sums[l, j] - cur_j for l in rho]
            base_last = [alpha[last] + sums[l, last] - cur_last for l in rho]
            lw_j = log_w[t, j]
            lw_last = log_w[t, last]
            logp = np.empty(total + 1)
            for x in range(total + 1):
                y = total - x
                val = x * lw_j - lgamma(x + 1.0) + y * lw_last - lgamma(y + 1.0)
                for b in base_j:
                    val -= lgamma(b + x)
                for b in base_last:
                    val -= lgamma(b + y)
                logp[x] = val
            probs = np.exp(logp - logp.max())
            cum = np.cumsum(probs)
            x = int(np.searchsorted(cum, uniforms[t, j] * cum[-1], side="right"))
            x = min(x, total)
            dx = x - cur_j
            if dx:
                eta[t, j] = x
                eta[t, last] = total - x
                for l in rho:
                    sums[l, j] += dx
                    sums[l, last] -= dx
