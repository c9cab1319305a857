"""Goodness of fit, predictive scores and posterior summaries."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from rotamix import rotation as rc
from rotamix._backend import kernels
from rotamix._random import dirichlet
from rotamix.mixture import component_conditional_mean
from rotamix.panel import PanelData
from rotamix.prior import LagStructure, PriorConfig
from rotamix.sampler import PosteriorDraws

log = logging.getLogger(__name__)

_CHUNK_ROWS = 400_000


def model_label(a_t: int, q: int, p: int = 0) -> str:
    return f"M_{{{a_t},{q},{p}}}"


@dataclass
class GofReport:
    model: str
    lpml: float | None = None
    waic: float | None = None
    lps: list = field(default_factory=list)
    mse: float | None = None

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


# --------------------------------------------------------------------------
# pointwise log-likelihood
# --------------------------------------------------------------------------


def _mixture_loglik(u, t_idx, pis, thetas):
    """log f(u_i | pi^r_{t_i}, theta^r_{t_i}) for stacked draws, shape (R, N)."""
    R, _, k = pis.shape
    n, m = u.shape
    out = np.empty((R, n))
    per_draw = max(n * k, 1)
    step = max(1, _CHUNK_ROWS // per_draw)
    comp = np.tile(np.arange(k, dtype=np.int64), n)
    for start in range(0, R, step):
        rs = slice(start, min(R, start + step))
        nr = rs.stop - rs.start
        rows = np.ascontiguousarray(np.tile(np.repeat(u, k, axis=0), (nr, 1)))
        th = np.ascontiguousarray(thetas[rs][:, t_idx, :].reshape(-1))
        lp = kernels.rotated_logpdf(rows, np.tile(comp, nr), th,
                                    rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL).reshape(nr, n, k)
        with np.errstate(divide="ignore"):
            lw = np.log(pis[rs][:, t_idx, :])
        out[rs] = logsumexp(lp + lw, axis=2)
    return out


def loglik_matrix(draws: PosteriorDraws, data: PanelData) -> np.ndarray:
    if data.T > draws.T:
        raise ValueError(f"data spans T={data.T} but draws cover only T={draws.T}")
    ll = _mixture_loglik(data.u, data.t_idx, draws.pi, draws.theta)
    if not np.all(np.isfinite(ll)):
        raise rc.BoundaryError("non-finite pointwise log-likelihood")
    return ll


def lpml_from_loglik(ll: np.ndarray) -> float:
    R = ll.shape[0]
    if R < 2:
        raise ValueError("LPML needs at least two draws")
    log_cpo = -(logsumexp(-ll, axis=0) - np.log(R))
    return float(np.sum(log_cpo))


def waic_from_loglik(ll: np.ndarray) -> float:
    R = ll.shape[0]
    if R < 2:
        raise ValueError("WAIC needs at least two draws")
    lppd = logsumexp(ll, axis=0) - np.log(R)
    penalty = np.var(ll, axis=0, ddof=1)
    n_bad = int(np.sum(penalty > 0.4))
    if n_bad:
        log.info("%d observations have WAIC penalty > 0.4", n_bad)
    return float(-2.0 * np.sum(lppd - penalty))


def lpml(draws: PosteriorDraws, data: PanelData) -> float:
    """Sum of log conditional predictive ordinates (harmonic-mean estimator)."""
    return lpml_from_loglik(loglik_matrix(draws, data))


def waic(draws: PosteriorDraws, data: PanelData) -> float:
    """-2 (lppd - p_waic) with the variance-based penalty."""
    return waic_from_loglik(loglik_matrix(draws, data))


# --------------------------------------------------------------------------
# log predictive score
# --------------------------------------------------------------------------


def _sample_truncated_gamma(rng, shape, rate, bounds):
    lo, hi = bounds
    x = rng.standard_gamma(shape) / rate
    for _ in range(100):
        bad = (x < lo) | (x > hi)
        if not np.any(bad):
            break
        x = np.where(bad, rng.standard_gamma(shape) / rate, x)
    return np.clip(x, lo, hi)


def forecast_params(t: int, draws: PosteriorDraws, prior: PriorConfig, lags: LagStructure,
                    rng: np.random.Generator):
    """One forward draw of (pi_t, theta_t) per stored draw of a fit on times 1..t-1."""
    if t < 2:
        raise ValueError("LPS needs at least one earlier time (t >= 2)")
    if draws.T != t - 1:
        raise ValueError(f"draws cover T={draws.T}; expected a fit on times 1..{t - 1}")
    if prior.T < t or lags.T < t:
        raise ValueError("prior and lags must extend to time t")
    R, k = draws.n_draws, draws.n_components
    mcmc = draws.provenance.get("mcmc", {})
    fixed = mcmc.get("fixed_component")
    bounds = tuple(mcmc.get("theta_bounds", rc.THETA_BOUNDS))
    if fixed is not None:
        pi_t = np.zeros((R, k))
        pi_t[:, fixed] = 1.0
    else:
        eta_t = rng.multinomial(int(prior.a[t - 1]), draws.omega)
        past = [kk for kk in lags.lag_set(t) if kk < t]
        pooled = eta_t + sum((draws.eta[:, kk - 1] for kk in past), np.zeros((R, k), dtype=np.int64))
        pi_t = dirichlet(rng, prior.alpha + pooled)
    theta_t = _sample_truncated_gamma(rng, np.broadcast_to(prior.d, (R, k)), draws.beta, bounds)
    return pi_t, theta_t


def lps(t: int, data: PanelData, draws: PosteriorDraws, prior: PriorConfig,
        lags: LagStructure, rng: np.random.Generator) -> float:
    """Log predictive score of the observations at time ``t``."""
    u = data.at(t)
    if u.shape[0] == 0:
        return 0.0
    pi_t, theta_t = forecast_params(t, draws, prior, lags, rng)
    ll = _mixture_loglik(u, np.zeros(u.shape[0], dtype=np.int64), pi_t[:, None], theta_t[:, None])
    return float(np.sum(logsumexp(ll, axis=0) - np.log(ll.shape[0])))


def lps_from_params(u, pis, thetas) -> float:
    """LPS for fixed parameter draws ``pis``/``thetas`` of shape (R, K)."""
    u = np.asarray(u, dtype=np.float64)
    ll = _mixture_loglik(u, np.zeros(u.shape[0], dtype=np.int64), pis[:, None], thetas[:, None])
    return float(np.sum(logsumexp(ll, axis=0) - np.log(ll.shape[0])))


# --------------------------------------------------------------------------
# prediction
# --------------------------------------------------------------------------


def _draw_subset(n_draws, max_draws):
    if max_draws is None or n_draws <= max_draws:
        return np.arange(n_draws)
    return np.unique(np.linspace(0, n_draws - 1, max_draws).round().astype(int))


def predict_conditional_means(draws: PosteriorDraws, test: PanelData,
                              max_draws: int | None = 200) -> np.ndarray:
    """Posterior predictive E(U_2 | u_1) for every test row, averaged over draws."""
    if test.m != 2 or draws.m != 2:
        raise ValueError("conditional prediction is implemented for m = 2 only")
    rs = _draw_subset(draws.n_draws, max_draws)
    k = draws.n_components
    out = np.empty(test.n_obs)
    for t in range(test.T):
        idx = np.flatnonzero(test.t_idx == t)
        if idx.size == 0:
            continue
        u1 = test.u[idx, 0]
        th = draws.theta[rs, t]  # (R', K)
        w = draws.pi[rs, t]
        means = component_conditional_mean(
            u1[:, None, None], np.arange(k)[None, None, :], th[None, :, :]
        )
        out[idx] = np.mean(np.sum(w[None] * means, axis=2), axis=1)
    return out


def predictive_mse(draws: PosteriorDraws, fit_data: PanelData, test_data: PanelData,
                   max_draws: int | None = 200) -> float:
    """Pooled squared error of E(U_2 | u_1) against observed u_2 on the test rows."""
    if fit_data.T != test_data.T or draws.T < test_data.T:
        raise ValueError("test slices must align with the fitted horizon")
    n2 = test_data.n_t
    for t in np.flatnonzero(n2 == 0):
        warnings.warn(f"empty test slice at t={t + 1} excluded", stacklevel=2)
    if test_data.n_obs == 0:
        raise ValueError("no test observations")
    pred = predict_conditional_means(draws, test_data, max_draws)
    err = (test_data.u[:, 1] - pred) ** 2
    mse_t = np.bincount(test_data.t_idx, weights=err, minlength=test_data.T)
    keep = n2 > 0
    mse_t[keep] /= n2[keep]
    return float(np.sum(n2[keep] * mse_t[keep]) / np.sum(n2[keep]))


# --------------------------------------------------------------------------
# summaries and grids
# --------------------------------------------------------------------------


def tail_coefficient_draws(draws: PosteriorDraws) -> np.ndarray:
    """Mixture tail coefficients per draw, time and corner."""
    m = draws.m
    return draws.pi * (m / (m - 1)) ** (-1.0 / draws.theta)


def kendall_tau_draws(draws: PosteriorDraws) -> np.ndarray:
    k = draws.n_components
    signs = np.array([-1.0 if rc.parity(rc.code_to_bits(c, draws.m)) else 1.0 for c in range(k)])
    th = draws.theta
    return np.sum(signs * draws.pi * th / (2.0 + th), axis=2)


def _interval_rows(values, label, t, component):
    mean = float(np.mean(values))
    q025, q975 = np.quantile(values, [0.025, 0.975])
    return {"t": t, "component": component, "statistic": label,
            "mean": mean, "q025": float(q025), "q975": float(q975)}


def summarize(draws: PosteriorDraws) -> pd.DataFrame:
    """Posterior mean and 95% equal-tailed interval per time and component."""
    k = draws.n_components
    labels = [rc.bit_label(c, draws.m) for c in range(k)]
    stats = {"pi": draws.pi, "theta": draws.theta, "lambda": tail_coefficient_draws(draws)}
    tau = kendall_tau_draws(draws)
    rows = []
    for t in range(draws.T):
        for name, arr in stats.items():
            for c in range(k):
                rows.append(_interval_rows(arr[:, t, c], name, t + 1, labels[c]))
        rows.append(_interval_rows(tau[:, t], "tau", t + 1, "mixture"))
    df = pd.DataFrame(rows, columns=["t", "component", "statistic", "mean", "q025", "q975"])
    outside = (df["mean"] < df["q025"]) | (df["mean"] > df["q975"])
    if outside.any():
        log.warning("posterior mean outside its 95%% interval for %d cells", int(outside.sum()))
    return df


def pair_component_codes(m: int, pair: tuple[int, int]) -> np.ndarray:
    """Bivariate rotation code of every m-variate component's margin on ``pair``."""
    a, b = pair
    codes = []
    for c in range(2**m):
        bits = rc.code_to_bits(c, m)
        codes.append(bits[a] + 2 * bits[b])
    return np.asarray(codes, dtype=np.int64)


def density_grid(draws: PosteriorDraws, t: int, pair: tuple[int, int] = (0, 1),
                 grid_n: int = 64, max_draws: int | None = 200) -> np.ndarray:
    """Posterior mean bivariate density on a grid_n x grid_n midpoint grid.

    Entry [ix, iy] is the density at (x_ix, y_iy). Pair margins of every
    rotated Clayton are bivariate rotated Claytons with the same theta.
    """
    m = draws.m
    if len(set(pair)) != 2 or not all(0 <= p < m for p in pair):
        raise ValueError(f"invalid coordinate pair {pair} for m={m}")
    mid = (np.arange(grid_n) + 0.5) / grid_n
    xx, yy = np.meshgrid(mid, mid, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    codes = pair_component_codes(m, pair)
    rs = _draw_subset(draws.n_draws, max_draws)
    n = pts.shape[0]
    total = np.zeros(n)
    for r in rs:
        w = draws.pi[r, t - 1]
        th = draws.theta[r, t - 1]
        for c in np.flatnonzero(w > 0):
            lp = kernels.rotated_logpdf(pts, np.full(n, codes[c], dtype=np.int64),
                                        np.full(n, th[c]), rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL)
            total += w[c] * np.exp(lp)
    return (total / len(rs)).reshape(grid_n, grid_n)


def density_grid_frame(grid: np.ndarray, t: int, pair: tuple[int, int]) -> pd.DataFrame:
    grid_n = grid.shape[0]
    mid = (np.arange(grid_n) + 0.5) / grid_n
    xx, yy = np.meshgrid(mid, mid, indexing="ij")
    return pd.DataFrame({
        "t": t,
        "pair": f"{pair[0] + 1}-{pair[1] + 1}",
        "x": xx.ravel(),
        "y": yy.ravel(),
        "value": grid.ravel(),
    })
