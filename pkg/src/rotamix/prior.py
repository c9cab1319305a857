"""Dependent Dirichlet prior on the time-indexed mixture weights.

A global simplex vector omega ~ Dir(a0 p) feeds per-time multinomial
counts eta_t ~ Mult(a_t, omega); the weights at time t are
pi_t ~ Dir(a0 p + sum_{k in lag_t} eta_k). Each pi_t is marginally
Dir(a0 p), and sharing counts through overlapping lag sets correlates
weights across times.

Times are 1-based in the public API (``lags.lag_set(t)``); arrays are
0-based along the time axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rotamix._random import dirichlet


@dataclass(frozen=True)
class LagStructure:
    T: int
    q: int = 0
    p: int = 0
    s: int = 1
    sets: tuple = field(init=False, repr=False)
    inverse: tuple = field(init=False, repr=False)
    _incidence: np.ndarray = field(init=False, repr=False, compare=False)
    _csr: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.q < 0 or self.p < 0:
            raise ValueError("orders q and p must be >= 0")
        if self.s < 1:
            raise ValueError("period s must be >= 1")
        sets = []
        for t in range(1, self.T + 1):
            ma = {t - i for i in range(self.q + 1)}
            seasonal = {t - i * self.s for i in range(self.p + 1)}
            sets.append(frozenset(k for k in ma | seasonal if k >= 1))
        inverse = [frozenset(l for l in range(1, self.T + 1) if t in sets[l - 1])
                   for t in range(1, self.T + 1)]
        object.__setattr__(self, "sets", tuple(sets))
        object.__setattr__(self, "inverse", tuple(inverse))
        a = np.zeros((self.T, self.T), dtype=np.int64)
        for t, st in enumerate(sets):
            for k in st:
                a[t, k - 1] = 1
        a.setflags(write=False)
        object.__setattr__(self, "_incidence", a)
        ptr = [0]
        idx: list[int] = []
        for inv in inverse:
            idx.extend(sorted(l - 1 for l in inv))
            ptr.append(len(idx))
        csr = (np.asarray(ptr, dtype=np.int64), np.asarray(idx, dtype=np.int64))
        for arr in csr:
            arr.setflags(write=False)
        object.__setattr__(self, "_csr", csr)

    def lag_set(self, t: int) -> frozenset:
        return self.sets[t - 1]

    def inverse_set(self, t: int) -> frozenset:
        return self.inverse[t - 1]

    def incidence(self) -> np.ndarray:
        """A[t, k] = 1 when time k + 1 is in the lag set of time t + 1 (read-only)."""
        return self._incidence

    def inverse_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Inverse sets as 0-based CSR arrays ``(ptr, idx)`` (read-only)."""
        return self._csr

    def truncated(self, T: int) -> "LagStructure":
        return LagStructure(T, self.q, self.p, self.s)


def build_lag_sets(T: int, q: int = 0, p: int = 0, s: int = 1) -> LagStructure:
    """Union of moving-average (order q) and seasonal (order p, period s) lag sets."""
    return LagStructure(T, q, p, s)


@dataclass
class PriorConfig:
    """Hyper-parameters of the weight and Clayton-parameter priors.

    ``a`` holds the multinomial totals a_t for t = 1..T. The gamma
    hyper-parameters d, e, g are per component; theta_tj ~ Ga(d_j, beta_j)
    and beta_j ~ Ga(e_j, g_j) (shape, rate).
    """

    m: int
    a: np.ndarray
    a0: float = 1.0
    p_vec: np.ndarray | None = None
    d: np.ndarray | float = 1.0
    e: np.ndarray | float = 1.0
    g: np.ndarray | float = 1.0

    def __post_init__(self):
        k = 2**self.m
        self.a = np.asarray(self.a, dtype=np.int64).ravel()
        if np.any(self.a < 0):
            raise ValueError("multinomial totals a_t must be >= 0")
        if not self.a0 > 0:
            raise ValueError("a0 must be positive")
        if self.p_vec is None:
            self.p_vec = np.full(k, 1.0 / k)
        self.p_vec = np.asarray(self.p_vec, dtype=np.float64)
        if self.p_vec.shape != (k,) or np.any(self.p_vec <= 0) or abs(self.p_vec.sum() - 1) > 1e-12:
            raise ValueError("p_vec must be a positive 2^m simplex vector")
        for name in ("d", "e", "g"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), (k,)).copy()
            if np.any(v <= 0):
                raise ValueError(f"gamma hyper-parameter {name} must be positive")
            setattr(self, name, v)

    @property
    def n_components(self) -> int:
        return 2**self.m

    @property
    def T(self) -> int:
        return self.a.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return self.a0 * self.p_vec

    @classmethod
    def constant(cls, m: int, T: int, a_t: int, **kw) -> "PriorConfig":
        return cls(m=m, a=np.full(T, a_t, dtype=np.int64), **kw)

    def truncated(self, T: int) -> "PriorConfig":
        return PriorConfig(m=self.m, a=self.a[:T].copy(), a0=self.a0, p_vec=self.p_vec.copy(),
                           d=self.d.copy(), e=self.e.copy(), g=self.g.copy())


@dataclass
class LatentState:
    omega: np.ndarray  # (K,)
    eta: np.ndarray  # (T, K) int
    pis: np.ndarray  # (T, K)


def sample_prior_path(cfg: PriorConfig, lags: LagStructure, rng: np.random.Generator,
                      size: int | None = None) -> LatentState:
    """Forward simulation of omega, eta and pi.

    With ``size`` the leading axis holds independent replicates.
    """
    if cfg.T != lags.T:
        raise ValueError("prior and lag structure disagree on the horizon T")
    reps = 1 if size is None else size
    k = cfg.n_components
    omega = dirichlet(rng, np.broadcast_to(cfg.alpha, (reps, k)))
    eta = np.empty((reps, cfg.T, k), dtype=np.int64)
    for t in range(cfg.T):
        eta[:, t] = rng.multinomial(cfg.a[t], omega)
    pooled = np.einsum("tk,rkj->rtj", lags.incidence(), eta)
    pis = dirichlet(rng, cfg.alpha + pooled)
    if size is None:
        return LatentState(omega[0], eta[0], pis[0])
    return LatentState(omega, eta, pis)


def theoretical_correlation(t: int, r: int, cfg: PriorConfig, lags: LagStructure) -> float:
    """Prior correlation of pi_{t,j} and pi_{r,j}; identical for every j."""
    if t == r:
        raise ValueError("correlation is defined for t != r")
    st, sr = lags.lag_set(t), lags.lag_set(r)
    a = cfg.a
    shared = sum(a[k - 1] for k in st & sr)
    at = sum(a[k - 1] for k in st)
    ar = sum(a[k - 1] for k in sr)
    a0 = cfg.a0
    return float((a0 * shared + at * ar) / ((a0 + at) * (a0 + ar)))
