"""Gibbs sampler for the dynamic rotated-Clayton mixture.

One sweep updates, in order: allocations z, weights pi, multinomial counts
eta, the global simplex omega, Clayton parameters theta (adaptive
Metropolis-Hastings with a gamma random walk), and the gamma rates beta.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from rotamix import rotation as rc
from rotamix._backend import kernels
from rotamix._random import dirichlet
from rotamix.mixture import MixtureParams
from rotamix.panel import PanelData
from rotamix.prior import LagStructure, PriorConfig

log = logging.getLogger(__name__)

_LOG_FLOOR = np.log(1e-300)


@dataclass
class McmcConfig:
    iterations: int = 3000
    burn_in: int = 1500
    batch_size: int = 50
    ar_low: float = 0.3
    ar_high: float = 0.4
    kappa_init: float = 1.0
    theta_bounds: tuple[float, float] = rc.THETA_BOUNDS
    seed: int = 0
    thin: int = 1
    chains: int = 1
    workers: int = 1
    # index of a single component carrying all weight ("simple Clayton")
    fixed_component: int | None = None

    def __post_init__(self):
        self.theta_bounds = tuple(float(b) for b in self.theta_bounds)
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if not 0 < self.ar_low < self.ar_high < 1:
            raise ValueError("need 0 < ar_low < ar_high < 1")
        if self.batch_size < 1 or self.thin < 1 or self.chains < 1:
            raise ValueError("batch_size, thin and chains must be >= 1")
        lo, hi = self.theta_bounds
        if not 0 < lo < hi:
            raise ValueError("theta bounds must satisfy 0 < lo < hi")
        if self.kappa_init <= 0:
            raise ValueError("kappa_init must be positive")


@dataclass
class ChainState:
    pis: np.ndarray  # (T, K)
    thetas: np.ndarray  # (T, K)
    betas: np.ndarray  # (K,)
    omega: np.ndarray  # (K,)
    eta: np.ndarray  # (T, K) int64
    pooled: np.ndarray  # (T, K) int64, sum of eta over each lag set
    z: np.ndarray  # (N,) component codes
    kappa: float = 1.0
    batch_accepts: int = 0
    batch_proposals: int = 0
    fallbacks: int = 0
    logf: np.ndarray | None = field(default=None, repr=False)

    @property
    def z_onehot(self) -> np.ndarray:
        k = self.pis.shape[1]
        return np.eye(k, dtype=np.int64)[self.z]


@dataclass
class PosteriorDraws:
    """Stored post-burn-in draws, stacked along the first axis."""

    m: int
    pi: np.ndarray  # (R, T, K)
    theta: np.ndarray  # (R, T, K)
    beta: np.ndarray  # (R, K)
    omega: np.ndarray  # (R, K)
    eta: np.ndarray  # (R, T, K)
    iteration: np.ndarray  # (R,)
    chain: np.ndarray  # (R,)
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.pi.shape[0]

    @property
    def T(self) -> int:
        return self.pi.shape[1]

    @property
    def n_components(self) -> int:
        return self.pi.shape[2]

    def params(self, r: int, t: int) -> MixtureParams:
        """Mixture parameters of draw ``r`` at 1-based time ``t``."""
        w = self.pi[r, t - 1]
        return MixtureParams(w / w.sum(), self.theta[r, t - 1])

    @staticmethod
    def concat(parts: list["PosteriorDraws"]) -> "PosteriorDraws":
        first = parts[0]
        diag_keys = first.diagnostics.keys()
        return PosteriorDraws(
            m=first.m,
            pi=np.concatenate([p.pi for p in parts]),
            theta=np.concatenate([p.theta for p in parts]),
            beta=np.concatenate([p.beta for p in parts]),
            omega=np.concatenate([p.omega for p in parts]),
            eta=np.concatenate([p.eta for p in parts]),
            iteration=np.concatenate([p.iteration for p in parts]),
            chain=np.concatenate([p.chain for p in parts]),
            diagnostics={k: np.concatenate([p.diagnostics[k] for p in parts]) for k in diag_keys},
            provenance=dict(first.provenance),
        )


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------


def _initial_counts(a_t: int, p_vec: np.ndarray) -> np.ndarray:
    eta = np.floor(a_t * p_vec + 0.5).astype(np.int64)
    diff = a_t - eta.sum()
    order = np.argsort(-(a_t * p_vec - eta)) if diff > 0 else np.argsort(a_t * p_vec - eta)
    i = 0
    while diff != 0:
        c = order[i % len(order)]
        if diff > 0:
            eta[c] += 1
            diff -= 1
        elif eta[c] > 0:
            eta[c] -= 1
            diff += 1
        i += 1
    return eta


def init_state(data: PanelData, prior: PriorConfig, lags: LagStructure,
               mcmc: McmcConfig, rng: np.random.Generator) -> ChainState:
    T, k = prior.T, prior.n_components
    pis = np.full((T, k), 1.0 / k)
    if mcmc.fixed_component is not None:
        pis = np.zeros((T, k))
        pis[:, mcmc.fixed_component] = 1.0
    eta = np.stack([_initial_counts(int(prior.a[t]), prior.p_vec) for t in range(T)]) \
        if T else np.zeros((0, k), dtype=np.int64)
    state = ChainState(
        pis=pis,
        thetas=np.ones((T, k)),
        betas=prior.e / prior.g,
        omega=prior.p_vec.copy(),
        eta=eta,
        pooled=lags.incidence() @ eta,
        z=np.zeros(data.n_obs, dtype=np.int64),
        kappa=mcmc.kappa_init,
    )
    logf = _component_logf(state, data)
    bad = ~np.isfinite(logf)
    if np.any(bad):
        i = int(np.argwhere(bad)[0, 0])
        t = int(data.t_idx[i])
        local = i - int(np.searchsorted(data.t_idx, t))
        raise FloatingPointError(
            f"non-finite log-likelihood at initialization for observation (t={t + 1}, i={local + 1})"
        )
    update_allocations(state, data, rng, fixed_component=mcmc.fixed_component)
    return state


# --------------------------------------------------------------------------
# conditional updates
# --------------------------------------------------------------------------


def _component_logf(state: ChainState, data: PanelData) -> np.ndarray:
    n = data.n_obs
    k = state.pis.shape[1]
    if n == 0:
        return np.empty((0, k))
    rows = np.ascontiguousarray(np.repeat(data.u, k, axis=0))
    comp = np.tile(np.arange(k, dtype=np.int64), n)
    th = np.ascontiguousarray(state.thetas[data.t_idx].ravel())
    return kernels.rotated_logpdf(rows, comp, th, rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL).reshape(n, k)


def allocation_probabilities(log_pi: np.ndarray, logf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized allocation probabilities and a mask of rows that fell back to pi."""
    logp = log_pi + logf
    top = np.max(logp, axis=1, keepdims=True)
    bad = ~np.isfinite(top[:, 0])
    if np.any(bad):
        logp[bad] = log_pi[bad]
        top[bad] = np.max(log_pi[bad], axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        w = np.exp(logp - top)
    w[~np.isfinite(w)] = 0.0
    return w / w.sum(axis=1, keepdims=True), bad


def update_allocations(state: ChainState, data: PanelData, rng: np.random.Generator,
                       fixed_component: int | None = None) -> np.ndarray:
    """Sample every z_{t,i} from its categorical conditional."""
    state.logf = _component_logf(state, data)
    if fixed_component is not None:
        state.z = np.full(data.n_obs, fixed_component, dtype=np.int64)
        return state.z
    if data.n_obs == 0:
        return state.z
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pis)[data.t_idx]
    probs, bad = allocation_probabilities(log_pi, state.logf)
    if np.any(bad):
        state.fallbacks += int(bad.sum())
        log.debug("allocation fell back to prior weights for %d rows", int(bad.sum()))
    cum = np.cumsum(probs, axis=1)
    u = rng.random(data.n_obs)[:, None] * cum[:, -1:]
    state.z = np.minimum((cum <= u).sum(axis=1), probs.shape[1] - 1).astype(np.int64)
    return state.z


def allocation_counts(state: ChainState, data: PanelData) -> np.ndarray:
    T, k = state.pis.shape
    return np.bincount(data.t_idx * k + state.z, minlength=T * k).reshape(T, k)


def weight_posterior_alpha(state: ChainState, data: PanelData, prior: PriorConfig) -> np.ndarray:
    return prior.alpha + state.pooled + allocation_counts(state, data)


def update_weights(state: ChainState, data: PanelData, prior: PriorConfig,
                   rng: np.random.Generator, fixed_component: int | None = None) -> np.ndarray:
    """pi_t ~ Dir(a0 p + sum_{k in lag_t} eta_k + sum_i z_{t,i})."""
    if fixed_component is not None:
        return state.pis
    state.pis = dirichlet(rng, weight_posterior_alpha(state, data, prior))
    return state.pis


def count_log_weights(state: ChainState, lags: LagStructure) -> np.ndarray:
    """log omega_j + sum_{l in inverse_t} log pi_{l,j}, shape (T, K)."""
    log_pi = np.maximum(np.log(np.maximum(state.pis, 1e-300)), _LOG_FLOOR)
    log_omega = np.log(np.maximum(state.omega, 1e-300))
    return log_omega + lags.incidence().T @ log_pi


def count_log_mass(eta_t: np.ndarray, t: int, state: ChainState, lags: LagStructure,
                   prior: PriorConfig) -> float:
    """Unnormalized log full-conditional mass of a whole count vector at 0-based time t."""
    lw = count_log_weights(state, lags)[t]
    pooled = state.pooled - state.eta[t] * lags.incidence()[:, t:t + 1]
    val = float(np.sum(eta_t * lw - gammaln(eta_t + 1.0)))
    for l in sorted(lags.inverse_set(t + 1)):
        val -= float(np.sum(gammaln(prior.alpha + pooled[l - 1] + eta_t)))
    return val


def update_counts(state: ChainState, lags: LagStructure, prior: PriorConfig,
                  rng: np.random.Generator, uniforms: np.ndarray | None = None) -> np.ndarray:
    """Componentwise update of every eta_t with the all-ones component as slack."""
    T, k = state.eta.shape
    if T == 0 or not np.any(prior.a):
        return state.eta
    if uniforms is None:
        uniforms = rng.random((T, k - 1))
    ptr, idx = lags.inverse_csr()
    kernels.eta_sweep(
        state.eta, state.pooled, np.ascontiguousarray(count_log_weights(state, lags)),
        np.ascontiguousarray(prior.alpha), ptr, idx, np.ascontiguousarray(uniforms),
    )
    return state.eta


def update_omega(state: ChainState, prior: PriorConfig, rng: np.random.Generator) -> np.ndarray:
    """omega ~ Dir(a0 p + sum_t eta_t)."""
    state.omega = dirichlet(rng, prior.alpha + state.eta.sum(axis=0))
    return state.omega


def gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def theta_log_conditional(theta, loglik, d, beta):
    """Unnormalized log conditional of theta_{t,j} given its allocated data."""
    return (d - 1.0) * np.log(theta) - beta * theta + loglik


def _grouped_loglik(state: ChainState, data: PanelData, thetas: np.ndarray) -> np.ndarray:
    T, k = thetas.shape
    if data.n_obs == 0:
        return np.zeros((T, k))
    th = np.ascontiguousarray(thetas[data.t_idx, state.z])
    lp = kernels.rotated_logpdf(data.u, state.z, th, rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL)
    return np.bincount(data.t_idx * k + state.z, weights=lp, minlength=T * k).reshape(T, k)


def update_thetas(state: ChainState, data: PanelData, prior: PriorConfig, mcmc: McmcConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """One gamma random-walk Metropolis-Hastings step for every theta_{t,j}.

    Proposals theta* ~ Ga(kappa, kappa / theta) have mean theta. Proposals
    outside the compact range are rejected. Returns the acceptance mask.
    """
    T, k = state.thetas.shape
    cur = state.thetas
    kappa = state.kappa
    prop = rng.standard_gamma(kappa, size=(T, k)) * cur / kappa
    log_u = np.log(rng.random((T, k)))
    lo, hi = mcmc.theta_bounds
    inside = (prop >= lo) & (prop <= hi)
    safe_prop = np.where(inside, prop, cur)

    if state.logf is not None and data.n_obs:
        lp_cur = state.logf[np.arange(data.n_obs), state.z]
        ll_cur = np.bincount(data.t_idx * k + state.z, weights=lp_cur,
                             minlength=T * k).reshape(T, k)
    else:
        ll_cur = _grouped_loglik(state, data, cur)
    ll_prop = _grouped_loglik(state, data, safe_prop)

    d, beta = prior.d[None, :], state.betas[None, :]
    log_ratio = (
        theta_log_conditional(safe_prop, ll_prop, d, beta)
        - theta_log_conditional(cur, ll_cur, d, beta)
        + gamma_logpdf(cur, kappa, kappa / safe_prop)
        - gamma_logpdf(safe_prop, kappa, kappa / cur)
    )
    accept = inside & (log_u < log_ratio)
    state.thetas = np.where(accept, safe_prop, cur)
    state.logf = None
    state.batch_accepts += int(accept.sum())
    state.batch_proposals += accept.size
    return accept


def adapt_kappa(kappa: float, acceptance_rate: float, h: int,
                ar_low: float = 0.3, ar_high: float = 0.4) -> float:
    """Batch update of the proposal concentration after batch ``h`` (1-based)."""
    step = 1.01 ** np.sqrt(h)
    if acceptance_rate < ar_low:
        return kappa * step
    if acceptance_rate > ar_high:
        return kappa / step
    return kappa


def update_betas(state: ChainState, prior: PriorConfig, rng: np.random.Generator) -> np.ndarray:
    """beta_j ~ Ga(e_j + T d_j, g_j + sum_t theta_{t,j})."""
    T = state.thetas.shape[0]
    shape = prior.e + T * prior.d
    rate = prior.g + state.thetas.sum(axis=0)
    state.betas = rng.standard_gamma(shape) / rate
    return state.betas


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def _check_inputs(data, prior, lags):
    if prior.m != data.m:
        raise ValueError(f"prior is for m={prior.m} but data has m={data.m}")
    if not (prior.T == lags.T == data.T):
        raise ValueError(f"horizon mismatch: prior T={prior.T}, lags T={lags.T}, data T={data.T}")


def gibbs_sweep(state: ChainState, data: PanelData, prior: PriorConfig, lags: LagStructure,
                mcmc: McmcConfig, rng: np.random.Generator) -> ChainState:
    fixed = mcmc.fixed_component
    update_allocations(state, data, rng, fixed_component=fixed)
    update_weights(state, data, prior, rng, fixed_component=fixed)
    if fixed is None:
        update_counts(state, lags, prior, rng)
        update_omega(state, prior, rng)
    update_thetas(state, data, prior, mcmc, rng)
    update_betas(state, prior, rng)
    return state


def _run_single(data: PanelData, prior: PriorConfig, lags: LagStructure, mcmc: McmcConfig,
                seed_seq: np.random.SeedSequence, chain_id: int) -> PosteriorDraws:
    rng = np.random.default_rng(seed_seq)
    state = init_state(data, prior, lags, mcmc, rng)
    T, k = prior.T, prior.n_components
    keep = list(range(mcmc.burn_in + 1, mcmc.iterations + 1, mcmc.thin))
    R = len(keep)
    out = {
        "pi": np.empty((R, T, k)), "theta": np.empty((R, T, k)),
        "beta": np.empty((R, k)), "omega": np.empty((R, k)),
        "eta": np.empty((R, T, k), dtype=np.int64),
    }
    batches, kappas, rates = [], [], []
    r = 0
    for it in range(1, mcmc.iterations + 1):
        gibbs_sweep(state, data, prior, lags, mcmc, rng)
        if it % mcmc.batch_size == 0:
            h = it // mcmc.batch_size
            rate = state.batch_accepts / max(state.batch_proposals, 1)
            batches.append(h)
            kappas.append(state.kappa)
            rates.append(rate)
            state.kappa = adapt_kappa(state.kappa, rate, h, mcmc.ar_low, mcmc.ar_high)
            state.batch_accepts = state.batch_proposals = 0
        if r < R and it == keep[r]:
            out["pi"][r] = state.pis
            out["theta"][r] = state.thetas
            out["beta"][r] = state.betas
            out["omega"][r] = state.omega
            out["eta"][r] = state.eta
            r += 1
    nb = len(batches)
    return PosteriorDraws(
        m=data.m,
        iteration=np.asarray(keep, dtype=np.int64),
        chain=np.full(R, chain_id, dtype=np.int64),
        diagnostics={
            "chain": np.full(nb, chain_id, dtype=np.int64),
            "batch": np.asarray(batches, dtype=np.int64),
            "kappa": np.asarray(kappas, dtype=np.float64),
            "acceptance_rate": np.asarray(rates, dtype=np.float64),
            "fallbacks": np.full(nb, state.fallbacks, dtype=np.int64),
        },
        **out,
    )


def run_chain(data: PanelData, prior: PriorConfig, lags: LagStructure,
              mcmc: McmcConfig) -> PosteriorDraws:
    """Run ``mcmc.chains`` independent chains and concatenate their draws.

    Chain seeds are spawned from ``mcmc.seed``, so results do not depend on
    ``mcmc.workers``.
    """
    _check_inputs(data, prior, lags)
    seeds = np.random.SeedSequence(mcmc.seed).spawn(mcmc.chains)
    args = [(data, prior, lags, mcmc, s, c) for c, s in enumerate(seeds)]
    if mcmc.workers > 1 and mcmc.chains > 1:
        with ProcessPoolExecutor(max_workers=mcmc.workers) as pool:
            parts = list(pool.map(_run_single, *zip(*args)))
    else:
        parts = [_run_single(*a) for a in args]
    draws = PosteriorDraws.concat(parts)
    draws.provenance = {
        "seed": mcmc.seed,
        "burn_in": mcmc.burn_in,
        "iterations": mcmc.iterations,
        "mcmc": asdict(mcmc),
        "a": prior.a.tolist(),
        "lags": {"q": lags.q, "p": lags.p, "s": lags.s},
    }
    return draws
