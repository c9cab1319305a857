"""Mixtures of all 2^m rotated Clayton copulas at one time slice."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from rotamix import rotation as rc
from rotamix._backend import kernels

PREDICTIVE_GRID = 512


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class MixtureParams:
    """Weights and Clayton parameters, one per rotation in canonical order."""

    weights: np.ndarray
    thetas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        th = np.asarray(self.thetas, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "thetas", th)
        k = w.shape[0]
        if w.ndim != 1 or th.shape != w.shape:
            raise ValueError("weights and thetas must be 1-d arrays of equal length")
        if k < 2 or k & (k - 1):
            raise ValueError(f"number of components must be 2^m with m >= 1, got {k}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(~np.isfinite(th)) or np.any(th < 0):
            raise ValueError("thetas must be finite and nonnegative")

    @property
    def m(self) -> int:
        return self.weights.shape[0].bit_length() - 1

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def single(cls, m: int, component: int, theta: float) -> "MixtureParams":
        w = np.zeros(2**m)
        w[component] = 1.0
        th = np.full(2**m, float(theta))
        return cls(w, th)


def _check_u(u, m):
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != m:
        raise ValueError(f"dimension mismatch: point has {u.shape[-1]} coords, expected {m}")
    return u


def mixture_cdf(u, params: MixtureParams):
    u = _check_u(u, params.m)
    total = np.zeros(u.shape[:-1])
    for code in range(params.n_components):
        if params.weights[code] == 0:
            continue
        total = total + params.weights[code] * rc.rotated_cdf(code, u, params.thetas[code])
    return total


def component_logpdf(u, thetas):
    """(n, K) matrix of rotated log-densities, one column per component."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    n, m = u.shape
    k = len(thetas)
    rows = np.ascontiguousarray(np.repeat(u, k, axis=0))
    comp = np.tile(np.arange(k, dtype=np.int64), n)
    th = np.tile(np.asarray(thetas, dtype=np.float64), n)
    out = kernels.rotated_logpdf(rows, comp, th, rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL)
    return out.reshape(n, k)


def mixture_logpdf(u, params: MixtureParams):
    u = _check_u(u, params.m)
    shape = u.shape[:-1]
    flat = u.reshape(-1, params.m)
    lp = component_logpdf(flat, params.thetas)
    with np.errstate(divide="ignore"):
        lw = np.log(params.weights)
    out = logsumexp(lp + lw, axis=1)
    if not np.all(np.isfinite(out)):
        raise rc.BoundaryError("mixture log-density is not finite")
    return out.reshape(shape)


def mixture_density(u, params: MixtureParams):
    return np.exp(mixture_logpdf(u, params))


def mixture_kendall_tau(params: MixtureParams) -> float:
    """Weighted sum of the component taus, signed by rotation parity.

    This is linear in the weights, whereas Kendall's tau of a mixture also
    carries cross terms between components; see
    :func:`mixture_kendall_tau_exact` for the exact bivariate value.
    """
    signs = np.array([-1.0 if rc.parity(rc.code_to_bits(c, params.m)) else 1.0
                      for c in range(params.n_components)])
    th = params.thetas
    return float(np.sum(signs * params.weights * th / (2.0 + th)))


def mixture_tail_coefficients(params: MixtureParams) -> np.ndarray:
    """Tail coefficient of the mixture at every corner, in canonical order.

    Only the rotation matching a corner has tail mass there, so the mixture
    coefficient at corner k is pi_k * lambda_k(C_k).
    """
    m = params.m
    return np.array([
        params.weights[c] * rc.tail_coefficient(c, c, params.thetas[c], m)
        for c in range(params.n_components)
    ])


def sample_mixture(params: MixtureParams, n: int, rng: np.random.Generator):
    """Ancestral sampling; returns ``(u, labels)`` with integer component codes."""
    m = params.m
    if n == 0:
        return np.empty((0, m)), np.empty(0, dtype=np.int64)
    labels = rng.choice(params.n_components, size=n, p=params.weights)
    u = np.empty((n, m))
    for code in range(params.n_components):
        idx = np.flatnonzero(labels == code)
        if idx.size:
            u[idx] = rc.sample_rotated(code, params.thetas[code], idx.size, rng, m)
    return u, labels.astype(np.int64)


# --------------------------------------------------------------------------
# bivariate conditional prediction
# --------------------------------------------------------------------------


def _require_bivariate(params):
    if params.m != 2:
        raise UnsupportedDimensionError("conditional prediction is implemented for m = 2 only")


def conditional_cdf(u_target, u_given, params: MixtureParams):
    """P(U_2 <= u_target | U_1 = u_given): the mixture h-function dC/du_1."""
    _require_bivariate(params)
    u_target = np.asarray(u_target, dtype=np.float64)
    u_given = np.asarray(u_given, dtype=np.float64)
    total = np.zeros(np.broadcast(u_target, u_given).shape)
    for code in range(4):
        w = params.weights[code]
        if w == 0:
            continue
        total = total + w * kernels.hfunc(
            u_given, u_target, code, params.thetas[code],
            rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL,
        )
    return total


def conditional_quantile(p, u_given, params: MixtureParams, tol: float = 1e-12):
    """Invert ``conditional_cdf`` in its first argument by bisection."""
    p = np.asarray(p, dtype=np.float64)
    lo = np.zeros(np.broadcast(p, u_given).shape)
    hi = np.ones_like(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = conditional_cdf(mid, u_given, params) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def component_conditional_mean(u_given, comp, theta, n_grid: int = PREDICTIVE_GRID):
    """E(U_2 | U_1 = u_given) for single rotations, elementwise over the inputs."""
    u_given, comp, theta = np.broadcast_arrays(
        np.asarray(u_given, dtype=np.float64),
        np.asarray(comp, dtype=np.int64),
        np.asarray(theta, dtype=np.float64),
    )
    shape = u_given.shape
    out = kernels.cond_mean(
        np.ascontiguousarray(u_given).ravel(),
        np.ascontiguousarray(comp).ravel(),
        np.ascontiguousarray(theta).ravel(),
        n_grid, rc.BOUNDARY_EPS, rc.INDEPENDENCE_TOL,
    )
    return out.reshape(shape)


def predictive_mean(u_given, params: MixtureParams, n_grid: int = PREDICTIVE_GRID):
    """E(U_2 | U_1 = u_given) as the midpoint-rule integral of the survival function."""
    _require_bivariate(params)
    u_given = np.asarray(u_given, dtype=np.float64)
    total = np.zeros(u_given.shape)
    for code in range(4):
        w = params.weights[code]
        if w == 0:
            continue
        total = total + w * component_conditional_mean(u_given, code, params.thetas[code], n_grid)
    return total


def mixture_kendall_tau_exact(params: MixtureParams, n_grid: int = 400) -> float:
    """Exact Kendall's tau of a bivariate mixture, ``1 - 4 E[dC/du_1 dC/du_2]``.

    Both partial derivatives are bounded h-functions, so a midpoint rule on an
    ``n_grid`` x ``n_grid`` grid converges quickly (error below 1e-5 at 400).
    """
    _require_bivariate(params)
    # dC_j/du_2 (u, v) is the h-function of the bit-swapped rotation at (v, u)
    swap = [0, 2, 1, 3]
    swapped = MixtureParams(params.weights[swap], params.thetas[swap])
    mid = (np.arange(n_grid) + 0.5) / n_grid
    uu, vv = np.meshgrid(mid, mid, indexing="ij")
    d1 = conditional_cdf(vv, uu, params)
    d2 = conditional_cdf(uu, vv, swapped)
    return float(1.0 - 4.0 * np.mean(d1 * d2))
