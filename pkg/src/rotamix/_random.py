import numpy as np
from scipy.special import logsumexp


def log_gamma_variates(rng: np.random.Generator, shape):
    """log of Gamma(shape, 1) draws, stable for shape << 1.

    Uses G(a) = G(a + 1) * U^(1/a) so tiny shapes never underflow to 0.
    """
    shape = np.asarray(shape, dtype=np.float64)
    g = rng.standard_gamma(shape + 1.0)
    u = rng.random(shape.shape)
    return np.log(g) + np.log(u) / shape


def dirichlet(rng: np.random.Generator, alpha):
    """Dirichlet draws along the last axis of ``alpha``."""
    lg = log_gamma_variates(rng, alpha)
    return np.exp(lg - logsumexp(lg, axis=-1, keepdims=True))
