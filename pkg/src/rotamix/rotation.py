"""Clayton copula mathematics in m dimensions and its 2^m rotations.

A rotation is identified by a bit vector ``j`` of length m. Bit ``l`` set
means coordinate ``l`` is reflected (``u_l -> 1 - u_l``), which moves the
lower-tail dependence of the Clayton copula to the corresponding corner of
the unit hypercube. Rotations are addressed either as bit tuples or as
integer codes where bit ``l`` of the code is ``j_l``. The integer order
0, 1, ..., 2^m - 1 is the canonical component order (00..0, 10..0, 01..0,
..., 11..1).
"""

from __future__ import annotations

import itertools
from math import comb

import numpy as np

from rotamix._backend import kernels
from rotamix._kernels_py import _log_gen_sum

INDEPENDENCE_TOL = 1e-6
BOUNDARY_EPS = 1e-10
THETA_BOUNDS = (1e-4, 50.0)


class BoundaryError(FloatingPointError):
    """Raised when a log-density is not finite."""


class TailCoefficientError(ValueError):
    """Raised when a tail coefficient is requested for theta <= 0."""


# --------------------------------------------------------------------------
# rotation indices
# --------------------------------------------------------------------------


def code_to_bits(code: int, m: int) -> tuple[int, ...]:
    return tuple((code >> l) & 1 for l in range(m))


def bits_to_code(bits) -> int:
    return sum(int(b) << l for l, b in enumerate(bits))


def as_bits(j, m: int | None = None) -> tuple[int, ...]:
    """Normalize a rotation given as a code, bit string or bit sequence."""
    if isinstance(j, str):
        bits = tuple(int(c) for c in j)
    elif isinstance(j, (int, np.integer)):
        if m is None:
            raise ValueError("dimension m is required for integer rotation codes")
        bits = code_to_bits(int(j), m)
    else:
        bits = tuple(int(b) for b in j)
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"rotation bits must be 0/1, got {bits}")
    if m is not None and len(bits) != m:
        raise ValueError(f"rotation has {len(bits)} bits, expected {m}")
    return bits


def all_rotations(m: int) -> list[tuple[int, ...]]:
    """Every rotation in canonical order."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return [code_to_bits(c, m) for c in range(2**m)]


def rotations_with_k_ones(m: int, k: int) -> list[tuple[int, ...]]:
    out = [b for b in all_rotations(m) if sum(b) == k]
    assert len(out) == comb(m, k)
    return out


def parity(j) -> int:
    return sum(as_bits(j)) % 2


def bit_label(j, m: int | None = None) -> str:
    return "".join(str(b) for b in as_bits(j, m))


def flip(u, j):
    """Reflect the coordinates of ``u`` selected by ``j`` (last axis)."""
    u = np.asarray(u, dtype=np.float64)
    bits = np.asarray(as_bits(j, u.shape[-1]), dtype=bool)
    return np.where(bits, 1.0 - u, u)


# --------------------------------------------------------------------------
# unrotated Clayton
# --------------------------------------------------------------------------


def _check_point(u):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 0:
        raise ValueError("u must have at least one coordinate")
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite values")
    return u


def _check_dims(u, m):
    if m is not None and u.shape[-1] != m:
        raise ValueError(f"dimension mismatch: point has {u.shape[-1]} coords, expected {m}")


def _check_theta(theta):
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise ValueError(f"theta must be finite and >= 0, got {theta}")
    return theta


def clayton_cdf(u, theta, m: int | None = None):
    """Clayton CDF ``{sum_l (u_l^-theta - 1) + 1}^(-1/theta)``.

    ``u`` may be a single point or an array of points along the last axis;
    ``theta`` is a scalar or an array broadcastable to ``u.shape[:-1]``.
    Coordinates equal to 1 drop out, so lower-dimensional margins are
    obtained by setting the unused coordinates to 1.
    """
    u = _check_point(u)
    _check_dims(u, m)
    theta = _check_theta(theta)
    u = np.clip(u, 0.0, 1.0)
    k = u.shape[-1]
    if k == 1:
        out = np.broadcast_to(u[..., 0], np.broadcast_shapes(u.shape[:-1], theta.shape)).copy()
        return out[()]
    indep = theta < INDEPENDENCE_TOL
    th = np.where(indep, 1.0, theta)
    with np.errstate(divide="ignore"):
        a = -th[..., None] * np.log(u)
    out = np.where(indep, np.prod(u, axis=-1), np.exp(-_log_gen_sum(a, k) / th))
    return out[()]


def clayton_logpdf(u, theta, m: int | None = None):
    return rotated_logpdf(0, u, theta, m)


def clayton_density(u, theta, m: int | None = None):
    """Clayton density, evaluated in log space and exponentiated."""
    return np.exp(clayton_logpdf(u, theta, m))


# --------------------------------------------------------------------------
# rotations
# --------------------------------------------------------------------------


def rotated_cdf(j, u, theta):
    """CDF of the rotation ``j`` by inclusion-exclusion over its set bits.

    ``theta`` is a scalar or an array broadcastable to ``u.shape[:-1]``.

    For reflected coordinates F, the event {U'_l <= u_l} is {U_l >= 1 - u_l};
    summing over subsets S of F with sign (-1)^|S| gives Clayton margins on
    the unreflected coordinates plus S, with arguments u_l (l not in F) and
    1 - u_l (l in S).
    """
    u = _check_point(u)
    theta = _check_theta(theta)
    m = u.shape[-1]
    bits = as_bits(j, m)
    flipped = [l for l in range(m) if bits[l]]
    total = np.zeros(np.broadcast_shapes(u.shape[:-1], theta.shape))
    for size in range(len(flipped) + 1):
        for subset in itertools.combinations(flipped, size):
            v = u.copy()
            for l in flipped:
                v[..., l] = 1.0 - u[..., l] if l in subset else 1.0
            total = total + (-1) ** size * clayton_cdf(v, theta)
    return total


def rotated_logpdf(j, u, theta, m: int | None = None):
    """Log-density of rotation ``j``: the Clayton log-density at the flipped point.

    ``theta`` is a scalar or an array broadcastable to ``u.shape[:-1]``.
    """
    u = _check_point(u)
    _check_dims(u, m)
    theta = _check_theta(theta)
    dim = u.shape[-1]
    code = bits_to_code(as_bits(j, dim))
    shape = np.broadcast_shapes(u.shape[:-1], theta.shape)
    flat = np.ascontiguousarray(np.broadcast_to(u, shape + (dim,)).reshape(-1, dim))
    n = flat.shape[0]
    out = kernels.rotated_logpdf(
        flat,
        np.full(n, code, dtype=np.int64),
        np.ascontiguousarray(np.broadcast_to(theta, shape).reshape(-1)),
        BOUNDARY_EPS,
        INDEPENDENCE_TOL,
    )
    if not np.all(np.isfinite(out)):
        raise BoundaryError("log-density is not finite; point lies on the boundary")
    return out.reshape(shape)


def rotated_density(j, u, theta):
    return np.exp(rotated_logpdf(j, u, theta))


def box_mass(cdf, lower, upper):
    """Probability of the box (lower, upper] under ``cdf`` by inclusion-exclusion."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    m = lower.shape[-1]
    total = 0.0
    for corner in itertools.product((0, 1), repeat=m):
        pt = np.where(np.array(corner, dtype=bool), lower, upper)
        total = total + (-1) ** sum(corner) * cdf(pt)
    return total


def tail_ratio(j_corner, j_rotation, theta: float, nu: float, coord: int = 0):
    """Finite-nu conditional probability whose nu -> 0 limit is the tail coefficient.

    P(U_l in B_{j_l}(nu) | U_k in B_{j_k}(nu), k != l) with B_0 = [0, nu]
    and B_1 = (1 - nu, 1], computed from box masses of ``rotated_cdf``.
    """
    corner = as_bits(j_corner)
    m = len(corner)
    rot = as_bits(j_rotation, m)
    lo = np.array([1.0 - nu if b else 0.0 for b in corner])
    hi = np.array([1.0 if b else nu for b in corner])
    cdf = lambda pt: rotated_cdf(rot, pt, theta)  # noqa: E731
    joint = box_mass(cdf, lo, hi)
    lo_c, hi_c = lo.copy(), hi.copy()
    lo_c[coord], hi_c[coord] = 0.0, 1.0
    cond = box_mass(cdf, lo_c, hi_c)
    return float(joint / cond)


def tail_coefficient(j_corner, j_rotation, theta: float, m: int | None = None) -> float:
    """Tail dependence coefficient of rotation ``j_rotation`` at corner ``j_corner``.

    Nonzero only on the matching corner, where it equals
    ``(m / (m - 1))^(-1/theta)``: 2^(-1/theta) for m = 2 and
    (3/2)^(-1/theta) for m = 3.
    """
    if not theta > 0:
        raise TailCoefficientError(f"tail coefficient undefined for theta={theta}")
    corner = as_bits(j_corner, m)
    m = len(corner)
    if m < 2:
        raise ValueError("tail coefficients need m >= 2")
    if corner != as_bits(j_rotation, m):
        return 0.0
    return (m / (m - 1)) ** (-1.0 / theta)


def kendall_tau_component(j, theta: float) -> float:
    """Pairwise Kendall's tau of rotation ``j``; the sign follows the bit parity."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    sign = -1.0 if parity(j) else 1.0
    return sign * theta / (2.0 + theta)


def sample_clayton(theta: float, n: int, m: int, rng: np.random.Generator):
    """Frailty sampler: V ~ Gamma(1/theta), U_l = (1 + E_l / V)^(-1/theta)."""
    if not np.isfinite(theta) or theta < 0:
        raise ValueError(f"invalid theta {theta}")
    if n == 0:
        return np.empty((0, m))
    if theta < INDEPENDENCE_TOL:
        return rng.random((n, m))
    v = rng.standard_gamma(1.0 / theta, size=(n, 1))
    e = rng.standard_exponential((n, m))
    with np.errstate(divide="ignore", over="ignore"):
        u = np.exp(-np.log1p(e / v) / theta)
    return u


def sample_rotated(j, theta: float, n: int, rng: np.random.Generator, m: int | None = None):
    """Draw ``n`` points from rotation ``j``; output is clipped to the open cube."""
    bits = as_bits(j, m)
    u = sample_clayton(theta, n, len(bits), rng)
    u = flip(u, bits) if n else u
    return np.clip(u, BOUNDARY_EPS, 1.0 - BOUNDARY_EPS)
