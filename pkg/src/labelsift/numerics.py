"""Vector math and special functions shared by every other module.

All functions are pure and operate on float64 numpy arrays.
"""

import math

import numpy as np

# Below this norm a vector is treated as zero and rejected by l2_normalize.
ZERO_NORM_EPS = 1e-12

# log I_nu(x) switches from the power series to the uniform asymptotic
# expansion at x = max(SERIES_ASYMPTOTIC_CROSSOVER, nu).  The two branches
# agree to ~1e-8 relative at the crossover for nu = 0 and far better for
# large nu (cross-validated in the test suite).
SERIES_ASYMPTOTIC_CROSSOVER = 20.0


class DegenerateInputError(ValueError):
    """Input carries no usable direction (zero vector, zero resultant)."""


def cosine_sim(a, b):
    """Cosine similarity of two vectors, clamped to [-1, 1].

    Raises DegenerateInputError on (near-)zero-norm input.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= ZERO_NORM_EPS or nb <= ZERO_NORM_EPS:
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def l2_normalize(v):
    """Return v / ||v||.  Raises DegenerateInputError if ||v|| <= 1e-12."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n <= ZERO_NORM_EPS:
        raise DegenerateInputError("cannot normalize a zero-norm vector")
    return v / n


def l2_normalize_rows(x):
    """Row-wise l2 normalization of a 2-d array."""
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms <= ZERO_NORM_EPS):
        raise DegenerateInputError("zero-norm row in batch normalization")
    return x / norms


def is_unit(v, tol=1e-6):
    return abs(np.linalg.norm(v) - 1.0) <= tol


def log_sum_exp(xs):
    """log(sum(exp(xs))) with max-subtraction; exact for a single element."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    m = np.max(xs)
    if not np.isfinite(m):
        # all -inf stays -inf; +inf propagates
        return float(m)
    return float(m + np.log(np.sum(np.exp(xs - m))))


def softmax(xs):
    """Shift-invariant softmax; outputs sum to 1."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("softmax of an empty sequence")
    e = np.exp(xs - np.max(xs))
    return e / e.sum()


def _log_bessel_i_series(order, x):
    # I_nu(x) = sum_m (x/2)^(2m+nu) / (m! Gamma(m+nu+1)); all terms positive,
    # so the log-space accumulation needs no cancellation care.
    log_half_x = math.log(x / 2.0)
    total = -math.inf
    peak = -math.inf
    for m in range(100000):
        term = (2 * m + order) * log_half_x - math.lgamma(m + 1) - math.lgamma(m + order + 1)
        total = np.logaddexp(total, term)
        peak = max(peak, term)
        if term < peak - 40.0 and m > 1:
            break
    return float(total)


# Lowest-to-highest even-power coefficients of t^k * p_k(t^2) in the u_k
# polynomials of the uniform large-order Bessel expansion; u_k(t)/nu^k is
# evaluated as p_k(t^2)/s^k with s = sqrt(nu^2 + x^2), t = nu/s, which stays
# finite as nu -> 0 and then reduces to the large-argument expansion.
_UK_COEFFS = (
    (3 / 24.0, -5 / 24.0),
    (81 / 1152.0, -462 / 1152.0, 385 / 1152.0),
    (30375 / 414720.0, -369603 / 414720.0, 765765 / 414720.0, -425425 / 414720.0),
    (
        4465125 / 39813120.0,
        -94121676 / 39813120.0,
        349922430 / 39813120.0,
        -446185740 / 39813120.0,
        185910725 / 39813120.0,
    ),
    (
        1519035525 / 6688604160.0,
        -49286948607 / 6688604160.0,
        284499769554 / 6688604160.0,
        -614135872350 / 6688604160.0,
        566098157625 / 6688604160.0,
        -188699385875 / 6688604160.0,
    ),
)


def log_bessel_i(order, x):
    """log of the modified Bessel function of the first kind, I_order(x).

    Power series below x = max(20, order), uniform asymptotic expansion
    above.  Supports order >= 0, x >= 0; raises ValueError for negative x.
    """
    if order < 0:
        raise ValueError("negative order not supported")
    if x < 0:
        raise ValueError("log_bessel_i requires x >= 0")
    if x == 0.0:
        return 0.0 if order == 0 else -math.inf
    if x < max(SERIES_ASYMPTOTIC_CROSSOVER, order):
        return _log_bessel_i_series(order, x)
    s = math.hypot(order, x)
    t2 = (order / s) ** 2
    bracket = 1.0
    sk = 1.0
    for coeffs in _UK_COEFFS:
        sk *= s
        p = 0.0
        for c in reversed(coeffs):
            p = p * t2 + c
        bracket += p / sk
    return (
        s
        + order * math.log(x / (order + s))
        - 0.5 * math.log(2.0 * math.pi * s)
        + math.log(bracket)
    )


def log_unit_sphere_area(dim):
    """log surface area of the unit sphere S^(dim-1) embedded in R^dim."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    return math.log(2.0) + (dim / 2.0) * math.log(math.pi) - math.lgamma(dim / 2.0)
